// SPDX-License-Identifier: Apache-2.0
//
// Closed-form feature-map variance through residual networks at
// initialization. Biases and norm shifts are zero, normalized features are
// N(0, gamma^2) and weights are He-initialized, so every quantity is a
// per-element statement independent of width.

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gammaguard/archspec.hpp"
#include "gammaguard/json_out.hpp"

namespace gammaguard {

enum class ProfileSource { Analytic, Empirical };

struct BlockPosition {
  int stage = 0;
  int block = 0;
  bool operator==(const BlockPosition&) const = default;
};

/// Per-block variances: entering the block (skip), of the residual branch,
/// and leaving the block. Empirical profiles carry the standard error of
/// out_var in `stderr_out`.
struct VarianceProfile {
  ProfileSource source = ProfileSource::Analytic;
  std::vector<BlockPosition> positions;
  std::vector<double> skip_var;
  std::vector<double> branch_var;
  std::vector<double> out_var;
  std::optional<std::vector<double>> stderr_out;
  std::vector<std::string> notes;

  std::size_t size() const { return positions.size(); }
};

/// Variance of a non-transformer residual branch: the last gamma squared.
double branch_variance(const BlockSpec& block, Style style);

/// Identity-skip accumulation: out[k] = var_s + sum_{m<=k} g[m]^2.
std::vector<double> propagate_preact(double var_s, std::span<const double> gamma_lasts);

/// Post-addition ReLU halves the sum: v' = (v + g^2) / 2, stepped.
std::vector<double> propagate_v1(double var_s, std::span<const double> gamma_lasts);

/// Same sequence as propagate_v1 from the unrolled sum
///   v_l = 2^-(l-s) v_s + sum_{m=s}^{l-1} 2^-(l-m) g_m^2.
std::vector<double> propagate_v1_closed_form(double var_s, std::span<const double> gamma_lasts);

/// V1 downsampling output (g_down^2 + g_last^2) / 2. Input variance does not enter.
double reset_downsample_v1(double gamma_down, double gamma_last);

/// PreAct downsampling output g_1^2 + g_last^2.
double reset_downsample_preact(double gamma1, double gamma_last);

/// Stem conv-BN-ReLU output g_0^2 / 2.
double early_stage_variance(double gamma0);

/// Two additive residual branches per block: v' = v + g_1^2 + g_2^2.
std::vector<double> propagate_transformer(double var_s, std::span<const BlockSpec> blocks);

struct ProfileOptions {
  // Variance entering stage 0 when the stem has no norm (PreAct, and
  // transformers without an embedding LN).
  double input_variance = 1.0;
  // V1 downsampling output as a function of (incoming variance, gamma_down,
  // gamma_last). Replaceable so tests can inject a faulty model.
  std::function<double(double, double, double)> v1_reset = [](double, double gd, double gl) {
    return reset_downsample_v1(gd, gl);
  };
};

/// Throws std::invalid_argument for a V1 spec whose stem lacks a norm.
VarianceProfile full_profile(const ArchSpec& spec, const ProfileOptions& opts = {});

/// Per block: skip_var > branch_var (ties are not dominant).
std::vector<bool> dominance_check(const VarianceProfile& profile);

/// {"source", "rows": [{"stage","block","skip_var","branch_var","out_var"[,"stderr"]
/// [,"dominant"]}]}
ordered_json profile_document(const VarianceProfile& profile, bool with_dominance = false);
std::string profile_to_json(const VarianceProfile& profile, bool with_dominance = false);
std::string profile_to_table(const VarianceProfile& profile, bool with_dominance = false);

}  // namespace gammaguard
