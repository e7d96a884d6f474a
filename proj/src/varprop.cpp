// SPDX-License-Identifier: Apache-2.0

#include "gammaguard/varprop.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "gammaguard/json_out.hpp"

namespace gammaguard {

double branch_variance(const BlockSpec& block, Style style) {
  if (block.kind == BlockKind::TxBlock || style == Style::Transformer) {
    throw std::invalid_argument("branch_variance: transformer blocks have two branches");
  }
  // The last norm re-standardizes, so nothing upstream of it matters.
  const double g = block.gamma_last();
  return g * g;
}

std::vector<double> propagate_preact(double var_s, std::span<const double> gamma_lasts) {
  std::vector<double> out;
  out.reserve(gamma_lasts.size());
  double v = var_s;
  for (double g : gamma_lasts) {
    v += g * g;
    out.push_back(v);
  }
  return out;
}

std::vector<double> propagate_v1(double var_s, std::span<const double> gamma_lasts) {
  std::vector<double> out;
  out.reserve(gamma_lasts.size());
  double v = var_s;
  for (double g : gamma_lasts) {
    v = 0.5 * (v + g * g);
    out.push_back(v);
  }
  return out;
}

std::vector<double> propagate_v1_closed_form(double var_s, std::span<const double> gamma_lasts) {
  std::vector<double> out;
  out.reserve(gamma_lasts.size());
  for (std::size_t k = 0; k < gamma_lasts.size(); ++k) {
    const int steps = static_cast<int>(k + 1);
    double v = std::ldexp(var_s, -steps);
    for (std::size_t m = 0; m <= k; ++m) {
      const double g = gamma_lasts[m];
      v += std::ldexp(g * g, -(steps - static_cast<int>(m)));
    }
    out.push_back(v);
  }
  return out;
}

double reset_downsample_v1(double gamma_down, double gamma_last) {
  return 0.5 * (gamma_down * gamma_down + gamma_last * gamma_last);
}

double reset_downsample_preact(double gamma1, double gamma_last) {
  return gamma1 * gamma1 + gamma_last * gamma_last;
}

double early_stage_variance(double gamma0) { return 0.5 * gamma0 * gamma0; }

std::vector<double> propagate_transformer(double var_s, std::span<const BlockSpec> blocks) {
  std::vector<double> out;
  out.reserve(blocks.size());
  double v = var_s;
  for (const auto& blk : blocks) {
    if (blk.kind != BlockKind::TxBlock) {
      throw std::invalid_argument("propagate_transformer: expected txblock entries");
    }
    for (double g : blk.branch_gammas) v += g * g;
    out.push_back(v);
  }
  return out;
}

VarianceProfile full_profile(const ArchSpec& spec, const ProfileOptions& opts) {
  validate(spec);
  if (!(std::isfinite(opts.input_variance) && opts.input_variance >= 0.0)) {
    throw std::invalid_argument("input variance must be finite and nonnegative");
  }
  VarianceProfile prof;
  prof.source = ProfileSource::Analytic;

  double v = 0.0;
  switch (spec.style) {
    case Style::V1:
      if (!spec.stem.has_norm) {
        throw std::invalid_argument("v1 profiles need a stem norm to define the entry variance");
      }
      v = early_stage_variance(spec.stem.gamma0);
      break;
    case Style::PreAct:
      v = opts.input_variance;
      break;
    case Style::Transformer:
      // An embedding LN has no trailing ReLU.
      v = spec.stem.has_norm ? spec.stem.gamma0 * spec.stem.gamma0 : opts.input_variance;
      break;
  }

  bool all_entries_zero = true;
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    const auto& blocks = spec.stages[s].blocks;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const BlockSpec& blk = blocks[b];
      if (b == 0 && v != 0.0) all_entries_zero = false;
      double branch = 0.0;
      double out = 0.0;
      switch (spec.style) {
        case Style::V1:
          branch = branch_variance(blk, spec.style);
          out = blk.downsample ? opts.v1_reset(v, *blk.gamma_down, blk.gamma_last())
                               : 0.5 * (v + branch);
          break;
        case Style::PreAct:
          branch = branch_variance(blk, spec.style);
          out = blk.downsample ? reset_downsample_preact(blk.branch_gammas.front(), blk.gamma_last())
                               : v + branch;
          break;
        case Style::Transformer:
          for (double g : blk.branch_gammas) branch += g * g;
          out = v + branch;
          break;
      }
      prof.positions.push_back({static_cast<int>(s), static_cast<int>(b)});
      prof.skip_var.push_back(v);
      prof.branch_var.push_back(branch);
      prof.out_var.push_back(out);
      v = out;
    }
  }
  if (all_entries_zero) {
    prof.notes.push_back("degenerate: every stage-entry variance is zero");
  }
  return prof;
}

std::vector<bool> dominance_check(const VarianceProfile& profile) {
  std::vector<bool> out;
  out.reserve(profile.size());
  for (std::size_t i = 0; i < profile.size(); ++i) {
    out.push_back(profile.skip_var[i] > profile.branch_var[i]);
  }
  return out;
}

namespace {

const char* source_name(ProfileSource s) {
  return s == ProfileSource::Analytic ? "analytic" : "empirical";
}

}  // namespace

ordered_json profile_document(const VarianceProfile& profile, bool with_dominance) {
  const auto dom = dominance_check(profile);
  ordered_json doc;
  doc["source"] = source_name(profile.source);
  ordered_json rows = ordered_json::array();
  for (std::size_t i = 0; i < profile.size(); ++i) {
    ordered_json r;
    r["stage"] = profile.positions[i].stage;
    r["block"] = profile.positions[i].block;
    r["skip_var"] = profile.skip_var[i];
    r["branch_var"] = profile.branch_var[i];
    r["out_var"] = profile.out_var[i];
    if (profile.stderr_out) r["stderr"] = (*profile.stderr_out)[i];
    if (with_dominance) r["dominant"] = static_cast<bool>(dom[i]);
    rows.push_back(std::move(r));
  }
  doc["rows"] = std::move(rows);
  if (!profile.notes.empty()) doc["notes"] = profile.notes;
  return doc;
}

std::string profile_to_json(const VarianceProfile& profile, bool with_dominance) {
  return dump_json(profile_document(profile, with_dominance));
}

std::string profile_to_table(const VarianceProfile& profile, bool with_dominance) {
  const auto dom = dominance_check(profile);
  std::ostringstream os;
  os << std::right << std::setw(5) << "stage" << std::setw(6) << "block" << std::setw(14)
     << "skip_var" << std::setw(14) << "branch_var" << std::setw(14) << "out_var";
  if (profile.stderr_out) os << std::setw(12) << "stderr";
  if (with_dominance) os << std::setw(10) << "dominant";
  os << "\n";
  os << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < profile.size(); ++i) {
    os << std::setw(5) << profile.positions[i].stage << std::setw(6) << profile.positions[i].block
       << std::setw(14) << profile.skip_var[i] << std::setw(14) << profile.branch_var[i]
       << std::setw(14) << profile.out_var[i];
    if (profile.stderr_out) os << std::setw(12) << (*profile.stderr_out)[i];
    if (with_dominance) os << std::setw(10) << (dom[i] ? "yes" : "no");
    os << "\n";
  }
  for (const auto& n : profile.notes) os << "note: " << n << "\n";
  return os.str();
}

}  // namespace gammaguard
