// SPDX-License-Identifier: Apache-2.0
//
// CLI subcommands as plain functions: each returns the exact bytes the tool
// writes to stdout plus an exit status. Invalid input is reported by throwing
// (std::invalid_argument, ParseError, SpecError); the entry point maps those
// to status 1.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gammaguard {

enum ExitStatus : int {
  kExitOk = 0,
  kExitInvalidInput = 1,
  kExitCheckFailed = 2,
  kExitInternal = 3,
};

enum class OutputFormat { Json, Table };
OutputFormat format_from_string(const std::string& text);

struct CommandOutput {
  int status = kExitOk;
  std::string out;
  std::string err;  // diagnostics that may vary between runs (wall-clock times)
};

std::string read_text_file(const std::string& path);

struct GenOptions {
  std::string name;
  double gamma = 1.0;
  std::optional<std::string> out_path;  // stdout when unset
};
CommandOutput cmd_gen(const GenOptions& o);

struct PlanOptions {
  std::string arch_path;
  double lambda = 1e-4;
  std::string policy = "guidelines";
  OutputFormat format = OutputFormat::Json;
};
CommandOutput cmd_plan(const PlanOptions& o);

struct VarpropOptions {
  std::string arch_path;
  double input_variance = 1.0;
  OutputFormat format = OutputFormat::Json;
};
CommandOutput cmd_varprop(const VarpropOptions& o);

struct SimulateOptions {
  std::string arch_path;
  int batch = 8192;
  int trials = 8;
  int width = 0;  // 0: from the architecture file
  std::uint64_t seed = 0;
  double threshold = 0.15;
  OutputFormat format = OutputFormat::Json;
};
/// Status 2 when the max relative error exceeds the threshold.
CommandOutput cmd_simulate(const SimulateOptions& o);

struct EfflrOptions {
  std::vector<double> scales = {0.5, 1.0, 2.0, 4.0, 8.0};
  int width = 64;
  int batch = 1024;
  double eta = 1e-3;
  std::uint64_t seed = 0;
  OutputFormat format = OutputFormat::Json;
};
/// Status 2 when the fitted slope leaves [-2.2, -1.8].
CommandOutput cmd_efflr(const EfflrOptions& o);

struct VerifyOptions {
  std::optional<std::string> arch_path;
  std::uint64_t seed = 0;
  std::vector<int> only;
};
/// Status 2 when any check fails. Timings go to `err`.
CommandOutput cmd_verify(const VerifyOptions& o);

}  // namespace gammaguard
