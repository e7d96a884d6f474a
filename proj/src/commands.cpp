// SPDX-License-Identifier: Apache-2.0

#include "gammaguard/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "gammaguard/acceptance.hpp"
#include "gammaguard/archspec.hpp"
#include "gammaguard/classify.hpp"
#include "gammaguard/efflr.hpp"
#include "gammaguard/json_out.hpp"
#include "gammaguard/simkernel.hpp"
#include "gammaguard/varprop.hpp"

namespace gammaguard {

OutputFormat format_from_string(const std::string& text) {
  if (text == "json") return OutputFormat::Json;
  if (text == "table") return OutputFormat::Table;
  throw std::invalid_argument("unknown format '" + text + "' (expected json|table)");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

ArchSpec load_arch(const std::string& path) { return parse_arch(read_text_file(path)); }

}  // namespace

CommandOutput cmd_gen(const GenOptions& o) {
  const std::string text = serialize(build_canonical(o.name, o.gamma));
  if (!o.out_path) return {kExitOk, text, {}};
  std::ofstream f(*o.out_path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::invalid_argument("cannot write '" + *o.out_path + "'");
  f << text;
  f.close();
  if (!f) throw std::runtime_error("write to '" + *o.out_path + "' failed");
  return {kExitOk, *o.out_path + "\n", {}};
}

CommandOutput cmd_plan(const PlanOptions& o) {
  const DecayPlan plan = make_plan(load_arch(o.arch_path), o.lambda, policy_from_string(o.policy));
  return {kExitOk, o.format == OutputFormat::Json ? plan_to_json(plan) : plan_to_table(plan), {}};
}

CommandOutput cmd_varprop(const VarpropOptions& o) {
  ProfileOptions popts;
  popts.input_variance = o.input_variance;
  const VarianceProfile prof = full_profile(load_arch(o.arch_path), popts);
  return {kExitOk, o.format == OutputFormat::Json ? profile_to_json(prof, true)
                                                  : profile_to_table(prof, true), {}};
}

CommandOutput cmd_simulate(const SimulateOptions& o) {
  const ArchSpec spec = load_arch(o.arch_path);
  if (!(o.threshold > 0.0)) throw std::invalid_argument("threshold must be positive");
  McConfig cfg;
  cfg.batch = o.batch;
  cfg.trials = o.trials;
  cfg.width = o.width;
  cfg.seed = o.seed;
  cfg.validate();

  const VarianceProfile analytic = full_profile(spec);
  const VarianceProfile empirical = mc_variance_profile(spec, cfg);
  const ProfileComparison cmp = compare_profiles(analytic, empirical);
  const bool pass = cmp.max_rel <= o.threshold;
  const int status = pass ? kExitOk : kExitCheckFailed;
  const int width = cfg.width > 0 ? cfg.width : spec.width;

  if (o.format == OutputFormat::Table) {
    std::ostringstream os;
    os << "arch " << spec.name << "  seed " << o.seed << "  batch " << cfg.batch << "  trials "
       << cfg.trials << "  width " << width << "\n";
    os << std::right << std::setw(5) << "stage" << std::setw(6) << "block" << std::setw(14)
       << "analytic" << std::setw(14) << "empirical" << std::setw(12) << "stderr"
       << std::setw(10) << "rel_err" << "\n";
    os << std::fixed << std::setprecision(6);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      os << std::setw(5) << analytic.positions[i].stage << std::setw(6)
         << analytic.positions[i].block << std::setw(14) << analytic.out_var[i] << std::setw(14)
         << empirical.out_var[i] << std::setw(12) << (*empirical.stderr_out)[i] << std::setw(10)
         << std::setprecision(4) << cmp.rel_err[i] << std::setprecision(6) << "\n";
    }
    os << "max rel err " << format_number(cmp.max_rel) << ", mean " << format_number(cmp.mean_rel)
       << ", threshold " << format_number(o.threshold) << ": " << (pass ? "PASS" : "FAIL")
       << "\n";
    return {status, os.str(), {}};
  }

  ordered_json doc;
  doc["arch"] = spec.name;
  doc["seed"] = o.seed;
  doc["config"] = ordered_json{{"batch", cfg.batch}, {"trials", cfg.trials}, {"width", width}};
  doc["analytic"] = profile_document(analytic);
  doc["empirical"] = profile_document(empirical);
  doc["comparison"] = ordered_json{{"rel_err", cmp.rel_err},
                                   {"max", cmp.max_rel},
                                   {"mean", cmp.mean_rel},
                                   {"threshold", o.threshold},
                                   {"pass", pass}};
  return {status, dump_json(doc), {}};
}

CommandOutput cmd_efflr(const EfflrOptions& o) {
  UpdateNormConfig cfg;
  cfg.scales = o.scales;
  cfg.width = o.width;
  cfg.batch = o.batch;
  cfg.eta = o.eta;
  cfg.seed = o.seed;
  const UpdateNormResult res = update_norm_experiment(cfg);
  const bool pass = res.fit.slope >= kSlopeLo && res.fit.slope <= kSlopeHi;
  const int status = pass ? kExitOk : kExitCheckFailed;

  if (o.format == OutputFormat::Table) {
    std::ostringstream os;
    os << "seed " << o.seed << "  width " << o.width << "  batch " << o.batch << "  eta "
       << format_number(o.eta) << "\n";
    os << std::right << std::setw(12) << "scale" << std::setw(26) << "update_norm" << "\n";
    for (const auto& p : res.points) {
      os << std::setw(12) << format_number(p.scale) << std::setw(26) << format_number(p.update_norm)
         << "\n";
    }
    os << "slope " << format_number(res.fit.slope) << "  intercept "
       << format_number(res.fit.intercept) << "  r2 " << format_number(res.fit.r2) << ": "
       << (pass ? "PASS" : "FAIL") << "\n";
    return {status, os.str(), {}};
  }
  const ordered_json doc = experiment_document(res);
  ordered_json full;
  full["seed"] = o.seed;
  full["config"] = ordered_json{{"width", o.width}, {"batch", o.batch}, {"eta", o.eta}};
  full["points"] = doc["points"];
  full["fit"] = doc["fit"];
  return {status, dump_json(full), {}};
}

CommandOutput cmd_verify(const VerifyOptions& o) {
  AcceptanceOptions opts;
  opts.seed = o.seed;
  if (o.arch_path) opts.extra_arch = load_arch(*o.arch_path);
  for (int id : o.only) {
    if (id < 1 || id > kCheckCount) throw std::invalid_argument("no check " + std::to_string(id));
    opts.only.insert(id);
  }
  std::ostringstream os;
  std::ostringstream times;
  os << "seed " << o.seed << "\n";
  int failed = 0;
  for (const auto& r : run_acceptance(opts)) {
    os << format_result(r);
    std::istringstream tl(r.timing);
    for (std::string line; std::getline(tl, line);) times << "[" << r.id << "] " << line << "\n";
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.2f", r.seconds);
    times << "[" << r.id << "] total " << secs << " s\n";
    if (!r.passed) ++failed;
  }
  os << (failed ? std::to_string(failed) + " check(s) failed" : std::string("all checks passed"))
     << "\n";
  return {failed ? kExitCheckFailed : kExitOk, os.str(), times.str()};
}

}  // namespace gammaguard
