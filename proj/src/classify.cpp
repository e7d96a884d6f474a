// SPDX-License-Identifier: Apache-2.0

#include "gammaguard/classify.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "gammaguard/json_out.hpp"

namespace gammaguard {

std::string_view to_string(GammaRole role) {
  switch (role) {
    case GammaRole::Gamma0: return "gamma0";
    case GammaRole::GammaLast: return "gamma_last";
    case GammaRole::GammaDown: return "gamma_down";
    case GammaRole::GammaOthers: return "gamma_others";
  }
  return "?";
}

GammaRole role_from_string(std::string_view text) {
  for (GammaRole r : kAllRoles) {
    if (to_string(r) == text) return r;
  }
  throw std::invalid_argument("unknown gamma role '" + std::string(text) + "'");
}

namespace {

GammaRole role_of(const ArchSpec& spec, const ParamPath& p) {
  switch (p.kind) {
    case ParamPath::Kind::Stem: return GammaRole::Gamma0;
    case ParamPath::Kind::Final: return GammaRole::GammaOthers;
    case ParamPath::Kind::Down: return GammaRole::GammaDown;
    case ParamPath::Kind::Branch: break;
  }
  const BlockSpec& blk = spec.stages[static_cast<std::size_t>(p.stage)]
                             .blocks[static_cast<std::size_t>(p.block)];
  // Both LN gammas of a transformer block feed an accumulating branch.
  if (blk.kind == BlockKind::TxBlock) return GammaRole::GammaLast;
  const auto last = static_cast<int>(blk.branch_gammas.size()) - 1;
  if (p.norm == last) return GammaRole::GammaLast;
  // PreAct downsampling: the first norm also feeds the projection skip path.
  if (p.norm == 0 && blk.downsample && spec.style == Style::PreAct) return GammaRole::GammaDown;
  return GammaRole::GammaOthers;
}

}  // namespace

std::vector<ClassifiedGamma> classify_gammas(const ArchSpec& spec) {
  std::vector<ClassifiedGamma> out;
  for (const auto& e : enumerate_gammas(spec)) out.push_back({e.path, role_of(spec, e.path)});
  return out;
}

RoleCounts count_roles(const std::vector<ClassifiedGamma>& roles) {
  RoleCounts c;
  for (const auto& r : roles) {
    switch (r.role) {
      case GammaRole::Gamma0: ++c.gamma0; break;
      case GammaRole::GammaLast: ++c.gamma_last; break;
      case GammaRole::GammaDown: ++c.gamma_down; break;
      case GammaRole::GammaOthers: ++c.gamma_others; break;
    }
  }
  return c;
}

bool DecayPolicy::decays(GammaRole role) const {
  switch (kind) {
    case PolicyKind::Guidelines:
      return role == GammaRole::GammaLast || role == GammaRole::GammaOthers;
    case PolicyKind::AllParams: return true;
    case PolicyKind::WeightsOnly: return false;
    case PolicyKind::Custom: {
      auto it = custom.find(role);
      if (it == custom.end()) {
        throw std::invalid_argument("custom decay policy has no entry for role " +
                                    std::string(to_string(role)));
      }
      return it->second;
    }
  }
  return false;
}

DecayPolicy policy_from_string(std::string_view text) {
  if (text == "guidelines") return DecayPolicy::guidelines();
  if (text == "all") return DecayPolicy::all_params();
  if (text == "weights-only") return DecayPolicy::weights_only();
  throw std::invalid_argument("unknown policy '" + std::string(text) +
                              "' (expected guidelines|all|weights-only)");
}

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Guidelines: return "guidelines";
    case PolicyKind::AllParams: return "all";
    case PolicyKind::WeightsOnly: return "weights-only";
    case PolicyKind::Custom: return "custom";
  }
  return "?";
}

int DecayPlan::decayed_count() const {
  return static_cast<int>(
      std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.apply_decay; }));
}

ArchSpec with_role_gammas(ArchSpec spec, const std::map<GammaRole, double>& values) {
  for (const auto& c : classify_gammas(spec)) {
    if (auto it = values.find(c.role); it != values.end()) {
      spec = with_gamma(std::move(spec), c.path, it->second);
    }
  }
  return spec;
}

DecayPlan make_plan(const ArchSpec& spec, double lambda, const DecayPolicy& policy) {
  if (!(std::isfinite(lambda) && lambda >= 0.0)) {
    throw std::invalid_argument("lambda must be a finite nonnegative number");
  }
  if (policy.kind == PolicyKind::Custom) {
    // Fail on an incomplete map even if the spec lacks some roles.
    for (GammaRole r : kAllRoles) (void)policy.decays(r);
  }
  DecayPlan plan;
  plan.lambda = lambda;
  for (const auto& c : classify_gammas(spec)) {
    plan.entries.push_back({c.path, c.role, policy.decays(c.role)});
  }
  std::sort(plan.entries.begin(), plan.entries.end(),
            [](const DecayEntry& a, const DecayEntry& b) { return a.path.str() < b.path.str(); });
  return plan;
}

std::string plan_to_json(const DecayPlan& plan) {
  ordered_json arr = ordered_json::array();
  for (const auto& e : plan.entries) {
    ordered_json row;
    row["path"] = e.path.str();
    row["role"] = std::string(to_string(e.role));
    row["decay"] = e.apply_decay;
    row["lambda"] = plan.lambda;
    arr.push_back(std::move(row));
  }
  return dump_json(arr);
}

std::string plan_to_table(const DecayPlan& plan) {
  std::size_t width = 4;
  for (const auto& e : plan.entries) width = std::max(width, e.path.str().size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "path" << "  " << std::setw(12)
     << "role" << "  decay\n";
  for (const auto& e : plan.entries) {
    os << std::setw(static_cast<int>(width)) << e.path.str() << "  " << std::setw(12)
       << to_string(e.role) << "  " << (e.apply_decay ? "yes" : "no") << "\n";
  }
  os << "lambda " << format_number(plan.lambda) << ", " << plan.decayed_count() << " of "
     << plan.entries.size() << " gammas decayed\n";
  return os.str();
}

}  // namespace gammaguard
