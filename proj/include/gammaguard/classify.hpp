// SPDX-License-Identifier: Apache-2.0
//
// Role assignment for normalization gammas and the L2-decay plans built on it.
//
//   role          | variance effect                     | guidelines
//   --------------+-------------------------------------+-----------
//   Gamma0        | sets the variance entering stage 0  | no decay
//   GammaLast     | sets the residual-branch variance   | decay
//   GammaDown     | sets the reset variance at a        | no decay
//                 | downsampling block                  |
//   GammaOthers   | none (scale-invariant downstream)   | decay

#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gammaguard/archspec.hpp"

namespace gammaguard {

enum class GammaRole { Gamma0, GammaLast, GammaDown, GammaOthers };

inline constexpr std::array<GammaRole, 4> kAllRoles = {
    GammaRole::Gamma0, GammaRole::GammaLast, GammaRole::GammaDown, GammaRole::GammaOthers};

std::string_view to_string(GammaRole role);
GammaRole role_from_string(std::string_view text);

struct RoleCounts {
  int gamma0 = 0;
  int gamma_last = 0;
  int gamma_down = 0;
  int gamma_others = 0;

  int total() const { return gamma0 + gamma_last + gamma_down + gamma_others; }
  bool operator==(const RoleCounts&) const = default;
};

struct ClassifiedGamma {
  ParamPath path;
  GammaRole role;
};

/// One role per gamma, in enumerate_gammas order. Depends on topology only.
std::vector<ClassifiedGamma> classify_gammas(const ArchSpec& spec);
RoleCounts count_roles(const std::vector<ClassifiedGamma>& roles);

enum class PolicyKind { Guidelines, AllParams, WeightsOnly, Custom };

struct DecayPolicy {
  PolicyKind kind = PolicyKind::Guidelines;
  // Consulted only for Custom; every role must be present.
  std::map<GammaRole, bool> custom;

  static DecayPolicy guidelines() { return {PolicyKind::Guidelines, {}}; }
  static DecayPolicy all_params() { return {PolicyKind::AllParams, {}}; }
  static DecayPolicy weights_only() { return {PolicyKind::WeightsOnly, {}}; }
  static DecayPolicy make_custom(std::map<GammaRole, bool> m) {
    return {PolicyKind::Custom, std::move(m)};
  }

  /// Throws std::invalid_argument for a Custom policy lacking `role`.
  bool decays(GammaRole role) const;
};

/// Accepts "guidelines", "all", "weights-only".
DecayPolicy policy_from_string(std::string_view text);
std::string_view to_string(PolicyKind kind);

struct DecayEntry {
  ParamPath path;
  GammaRole role;
  bool apply_decay;
};

struct DecayPlan {
  double lambda = 0.0;
  std::vector<DecayEntry> entries;  // sorted by path text

  int decayed_count() const;
};

/// Copy of `spec` with every gamma of a role present in `values` replaced.
ArchSpec with_role_gammas(ArchSpec spec, const std::map<GammaRole, double>& values);

DecayPlan make_plan(const ArchSpec& spec, double lambda, const DecayPolicy& policy);

/// JSON array of {"path","role","decay","lambda"}, sorted by path.
std::string plan_to_json(const DecayPlan& plan);
/// Aligned text table.
std::string plan_to_table(const DecayPlan& plan);

}  // namespace gammaguard
