// SPDX-License-Identifier: Apache-2.0
//
// The project's acceptance checks, shared by `gammaguard verify` and the
// acceptance test binary.

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gammaguard/archspec.hpp"
#include "gammaguard/simkernel.hpp"
#include "gammaguard/varprop.hpp"

namespace gammaguard {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;  // one or more lines, no trailing newline
  std::string timing;  // wall-clock notes, kept apart so `detail` is reproducible
  double seconds = 0.0;
};

struct AcceptanceOptions {
  std::uint64_t seed = 0;
  // Extra architecture run through the variance-law check.
  std::optional<ArchSpec> extra_arch;
  // Empty: run everything.
  std::set<int> only;
  // Analytic model used by the variance checks; tests swap in faulty ones.
  ProfileOptions model;
};

// Pinned thresholds.
inline constexpr int kMcBatch = 8192;
inline constexpr int kMcWidth = 256;
inline constexpr int kMcTrials = 8;
inline constexpr double kMaxRelErr = 0.15;
inline constexpr double kMeanRelErr = 0.08;
inline constexpr double kMcSecondsPerArch = 60.0;
inline constexpr double kResetAnalyticTol = 1e-12;
inline constexpr double kResetStderrMultiple = 2.0;
inline constexpr double kReluLo = 0.48;
inline constexpr double kReluHi = 0.52;
inline constexpr double kScaleOutputTol = 1e-8;
inline constexpr double kScaleLossTol = 1e-10;
inline constexpr double kGradScaleTol = 0.01;
inline constexpr double kSlopeLo = -2.2;
inline constexpr double kSlopeHi = -1.8;
inline constexpr double kMinR2 = 0.99;
inline constexpr double kSlopeSeconds = 30.0;
inline constexpr double kClosedFormTol = 1e-12;

inline constexpr int kCheckCount = 10;

std::string check_name(int id);

/// Runs the selected checks in id order.
std::vector<CheckResult> run_acceptance(const AcceptanceOptions& opts);
CheckResult run_check(int id, const AcceptanceOptions& opts);

/// "PASS [n] name" plus indented detail lines (and timing lines when asked).
std::string format_result(const CheckResult& r, bool with_timing = false);

}  // namespace gammaguard
