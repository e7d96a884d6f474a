// SPDX-License-Identifier: Apache-2.0

#include "gammaguard/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>

#include "gammaguard/classify.hpp"
#include "gammaguard/commands.hpp"
#include "gammaguard/efflr.hpp"
#include "gammaguard/json_out.hpp"

namespace gammaguard {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os.setf(std::ios::scientific);
  os.precision(2);
  os << v;
  return os.str();
}

McConfig acceptance_mc(std::uint64_t seed) {
  McConfig cfg;
  cfg.batch = kMcBatch;
  cfg.width = kMcWidth;
  cfg.trials = kMcTrials;
  cfg.seed = seed;
  return cfg;
}

// gamma0 = 2, gamma_down = 2, everything else 1.
ArchSpec mixed(const std::string& name) {
  return with_role_gammas(build_canonical(name, 1.0),
                          {{GammaRole::Gamma0, 2.0}, {GammaRole::GammaDown, 2.0}});
}

// Shared setup for the scale-invariance checks.
struct IntermediateFixture {
  Matrix x, w, target;
  GammaVec gamma;
};

IntermediateFixture intermediate_fixture(std::uint64_t seed) {
  constexpr int kWidth = 64;
  constexpr int kBatch = 1024;
  Rng rng = make_rng(seed, 101);
  IntermediateFixture f;
  f.x = gaussian(kBatch, kWidth, 1.0, rng);
  f.w = he_init(kWidth, kWidth, rng);
  f.target = gaussian(kBatch, kWidth, 1.0, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < kWidth; ++i) f.gamma.values.push_back(std::abs(normal(rng)) + 0.1);
  return f;
}

double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

CheckResult variance_law(const AcceptanceOptions& opts) {
  CheckResult r;
  std::vector<std::pair<std::string, ArchSpec>> cases;
  for (const char* name : {"resnet18", "resnet50", "preact18"}) {
    cases.emplace_back(std::string(name) + "/ones", build_canonical(name, 1.0));
    cases.emplace_back(std::string(name) + "/mixed", mixed(name));
  }
  if (opts.extra_arch) cases.emplace_back(opts.extra_arch->name + "/file", *opts.extra_arch);

  r.passed = true;
  std::ostringstream os;
  std::ostringstream times;
  bool first = true;
  for (const auto& [label, spec] : cases) {
    const auto t0 = Clock::now();
    const VarianceProfile analytic = full_profile(spec, opts.model);
    const VarianceProfile empirical = mc_variance_profile(spec, acceptance_mc(opts.seed));
    const ProfileComparison cmp = compare_profiles(analytic, empirical);
    const double secs = seconds_since(t0);
    const bool ok = cmp.max_rel <= kMaxRelErr && cmp.mean_rel <= kMeanRelErr &&
                    secs <= kMcSecondsPerArch;
    r.passed = r.passed && ok;
    if (!first) {
      os << "\n";
      times << "\n";
    }
    first = false;
    os << (ok ? "ok   " : "FAIL ") << label << ": max rel " << fmt(cmp.max_rel) << " (<= "
       << fmt(kMaxRelErr, 2) << "), mean rel " << fmt(cmp.mean_rel) << " (<= "
       << fmt(kMeanRelErr, 2) << ")";
    if (secs > kMcSecondsPerArch) os << ", over the " << fmt(kMcSecondsPerArch, 0) << " s budget";
    times << label << ": " << fmt(secs, 1) << " s (<= " << fmt(kMcSecondsPerArch, 0) << ")";
  }
  r.detail = os.str();
  r.timing = times.str();
  return r;
}

CheckResult reset_independence(const AcceptanceOptions& opts) {
  CheckResult r;
  const ArchSpec a = build_canonical("resnet18", 1.0);
  ArchSpec b = a;
  b.stages[0].blocks[0].branch_gammas = {0.7, 1.8};
  b.stages[0].blocks[1].branch_gammas = {1.3, 0.4};

  // Rows from the stage-1 downsampling block onward.
  std::size_t from = a.stages[0].blocks.size();
  const VarianceProfile pa = full_profile(a, opts.model);
  const VarianceProfile pb = full_profile(b, opts.model);
  double analytic_diff = 0.0;
  for (std::size_t i = from; i < pa.size(); ++i) {
    analytic_diff = std::max(analytic_diff, std::abs(pa.out_var[i] - pb.out_var[i]));
    analytic_diff = std::max(analytic_diff, std::abs(pa.branch_var[i] - pb.branch_var[i]));
    if (i > from) {
      analytic_diff = std::max(analytic_diff, std::abs(pa.skip_var[i] - pb.skip_var[i]));
    }
  }
  const bool analytic_ok = analytic_diff <= kResetAnalyticTol;

  const VarianceProfile ea = mc_variance_profile(a, acceptance_mc(opts.seed));
  const VarianceProfile eb = mc_variance_profile(b, acceptance_mc(opts.seed));
  double worst = 0.0;  // |diff| / (2 * combined stderr)
  for (std::size_t i = from; i < ea.size(); ++i) {
    const double se = std::hypot((*ea.stderr_out)[i], (*eb.stderr_out)[i]);
    const double diff = std::abs(ea.out_var[i] - eb.out_var[i]);
    worst = std::max(worst, se > 0.0 ? diff / (kResetStderrMultiple * se)
                                     : (diff > 0.0 ? INFINITY : 0.0));
  }
  const bool empirical_ok = worst <= 1.0;
  r.passed = analytic_ok && empirical_ok;
  r.detail = std::string(analytic_ok ? "ok   " : "FAIL ") + "analytic max |diff| after reset " +
             sci(analytic_diff) + " (<= " + sci(kResetAnalyticTol) + ")\n" +
             (empirical_ok ? "ok   " : "FAIL ") + "empirical max |diff| / (2 stderr) " +
             fmt(worst, 3) + " (<= 1)";
  return r;
}

// Sign of every adjacent step of [entry variance, out_var...].
std::vector<int> step_signs(const VarianceProfile& p) {
  std::vector<double> seq{p.skip_var.front()};
  seq.insert(seq.end(), p.out_var.begin(), p.out_var.end());
  std::vector<int> s;
  for (std::size_t i = 1; i < seq.size(); ++i) s.push_back((seq[i] > seq[i - 1]) - (seq[i] < seq[i - 1]));
  return s;
}

CheckResult figure5_shape(const AcceptanceOptions& opts) {
  CheckResult r;
  const ArchSpec spec = mixed("resnet50");
  const VarianceProfile analytic = full_profile(spec, opts.model);
  const auto signs = step_signs(analytic);

  // Step i leads into block i: stage entries must rise, everything else fall.
  bool analytic_ok = true;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const int want = analytic.positions[i].block == 0 ? 1 : -1;
    analytic_ok = analytic_ok && signs[i] == want;
  }
  const VarianceProfile empirical = mc_variance_profile(spec, acceptance_mc(opts.seed));
  const auto emp_signs = step_signs(empirical);
  int mismatches = 0;
  std::string where;
  for (std::size_t i = 0; i < signs.size(); ++i) {
    if (emp_signs[i] != signs[i]) {
      if (mismatches++ < 4) {
        where += " s" + std::to_string(empirical.positions[i].stage) + "b" +
                 std::to_string(empirical.positions[i].block);
      }
    }
  }
  r.passed = analytic_ok && mismatches == 0;
  r.detail = std::string(analytic_ok ? "ok   " : "FAIL ") +
             "analytic resnet50 (gamma0=2, gamma_down=2): rise at stage entries, fall within stages\n" +
             (mismatches == 0 ? "ok   " : "FAIL ") + "empirical ordering matches at " +
             std::to_string(signs.size() - static_cast<std::size_t>(mismatches)) + " of " +
             std::to_string(signs.size()) + " adjacent pairs" +
             (mismatches ? " (first mismatches:" + where + ")" : "");
  return r;
}

CheckResult relu_half_moment(const AcceptanceOptions& opts) {
  CheckResult r;
  Rng rng = make_rng(opts.seed, 202);
  const Matrix x = gaussian(1000, 1000, 1.0, rng);
  const double m = second_moment(relu(x));
  r.passed = m >= kReluLo && m <= kReluHi;
  r.detail = "E[ReLU(X)^2] over 1e6 samples = " + fmt(m, 5) + " (in [" + fmt(kReluLo, 2) + ", " +
             fmt(kReluHi, 2) + "])";
  return r;
}

CheckResult scale_invariance(const AcceptanceOptions& opts) {
  CheckResult r;
  const auto f = intermediate_fixture(opts.seed);
  const Matrix y = intermediate_forward(f.x, f.gamma, f.w);
  const double l = surrogate_loss(f.gamma, f.x, f.w, f.target);
  r.passed = true;
  std::ostringstream os;
  bool first = true;
  for (double c : {0.1, 10.0}) {
    const GammaVec g = f.gamma.scaled(c);
    const double out_diff = (intermediate_forward(f.x, g, f.w) - y).cwiseAbs().maxCoeff();
    const double loss_diff = std::abs(surrogate_loss(g, f.x, f.w, f.target) - l);
    const bool ok = out_diff <= kScaleOutputTol && loss_diff <= kScaleLossTol;
    r.passed = r.passed && ok;
    if (!first) os << "\n";
    first = false;
    os << (ok ? "ok   " : "FAIL ") << "c=" << format_number(c) << ": output max |diff| "
       << sci(out_diff) << " (<= " << sci(kScaleOutputTol) << "), loss |diff| " << sci(loss_diff)
       << " (<= " << sci(kScaleLossTol) << ")";
  }
  r.detail = os.str();
  return r;
}

CheckResult gradient_scaling(const AcceptanceOptions& opts) {
  CheckResult r;
  const auto f = intermediate_fixture(opts.seed);
  const double base = l2(grad_gamma(f.gamma, f.x, f.w, f.target));
  r.passed = base > 0.0;
  std::ostringstream os;
  os << "|grad L(G)| = " << sci(base);
  for (double c : {0.5, 2.0, 4.0}) {
    const double scaled = c * l2(grad_gamma(f.gamma.scaled(c), f.x, f.w, f.target));
    const double rel = std::abs(scaled - base) / base;
    const bool ok = rel <= kGradScaleTol;
    r.passed = r.passed && ok;
    os << "\n" << (ok ? "ok   " : "FAIL ") << "c=" << format_number(c)
       << ": c |grad L(cG)| rel diff " << sci(rel) << " (<= " << fmt(kGradScaleTol, 2) << ")";
  }
  r.detail = os.str();
  return r;
}

CheckResult effective_lr_slope(const AcceptanceOptions& opts) {
  CheckResult r;
  r.passed = true;
  std::ostringstream os;
  std::ostringstream times;
  for (std::uint64_t k = 0; k < 3; ++k) {
    UpdateNormConfig cfg;
    cfg.seed = opts.seed + k;
    const auto t0 = Clock::now();
    const UpdateNormResult res = update_norm_experiment(cfg);
    const double secs = seconds_since(t0);
    const bool ok = res.fit.slope >= kSlopeLo && res.fit.slope <= kSlopeHi &&
                    res.fit.r2 >= kMinR2 && secs <= kSlopeSeconds;
    r.passed = r.passed && ok;
    if (k) {
      os << "\n";
      times << "\n";
    }
    os << (ok ? "ok   " : "FAIL ") << "seed " << cfg.seed << ": slope " << fmt(res.fit.slope, 6)
       << " (in [" << fmt(kSlopeLo, 1) << ", " << fmt(kSlopeHi, 1) << "]), r2 "
       << fmt(res.fit.r2, 6) << " (>= " << fmt(kMinR2, 2) << ")";
    if (secs > kSlopeSeconds) os << ", over the " << fmt(kSlopeSeconds, 0) << " s budget";
    times << "seed " << cfg.seed << ": " << fmt(secs, 2) << " s (<= " << fmt(kSlopeSeconds, 0) << ")";
  }
  r.detail = os.str();
  r.timing = times.str();
  return r;
}

CheckResult classification_counts(const AcceptanceOptions&) {
  CheckResult r;
  const RoleCounts r50 = count_roles(classify_gammas(build_canonical("resnet50", 1.0)));
  const RoleCounts r18 = count_roles(classify_gammas(build_canonical("resnet18", 1.0)));
  const bool counts_ok = r50 == RoleCounts{1, 16, 4, 32} && r18 == RoleCounts{1, 8, 3, 8};

  const ArchSpec spec = build_canonical("resnet18", 1.0);
  bool stable = true;
  std::ostringstream decayed;
  for (const char* policy : {"guidelines", "all", "weights-only"}) {
    const DecayPlan p1 = make_plan(spec, 1e-4, policy_from_string(policy));
    const DecayPlan p2 = make_plan(spec, 1e-4, policy_from_string(policy));
    stable = stable && plan_to_json(p1) == plan_to_json(p2);
    decayed << " " << policy << "=" << p1.decayed_count();
  }
  const auto count = [&](const char* policy) {
    return make_plan(spec, 1e-4, policy_from_string(policy)).decayed_count();
  };
  const bool decay_ok = count("guidelines") == 16 && count("all") == 20 && count("weights-only") == 0;

  const auto show = [](const RoleCounts& c) {
    return "(" + std::to_string(c.gamma0) + ", " + std::to_string(c.gamma_last) + ", " +
           std::to_string(c.gamma_down) + ", " + std::to_string(c.gamma_others) + ")";
  };
  r.passed = counts_ok && stable && decay_ok;
  r.detail = std::string(counts_ok ? "ok   " : "FAIL ") + "resnet50 " + show(r50) +
             " want (1, 16, 4, 32); resnet18 " + show(r18) + " want (1, 8, 3, 8)\n" +
             (decay_ok && stable ? "ok   " : "FAIL ") + "resnet18 decayed of 20:" + decayed.str() +
             (stable ? ", plan JSON byte-stable" : ", plan JSON NOT byte-stable");
  return r;
}

CheckResult closed_form_agreement(const AcceptanceOptions& opts) {
  CheckResult r;
  Rng rng = make_rng(opts.seed, 303);
  std::uniform_real_distribution<double> var(0.0, 10.0);
  std::uniform_real_distribution<double> gam(0.0, 3.0);
  std::uniform_int_distribution<int> len(0, 40);
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const double v0 = var(rng);
    std::vector<double> g(static_cast<std::size_t>(len(rng)));
    for (double& e : g) e = gam(rng);
    const auto step = propagate_v1(v0, g);
    const auto closed = propagate_v1_closed_form(v0, g);
    for (std::size_t i = 0; i < step.size(); ++i) {
      const double denom = std::max(std::abs(step[i]), 1e-300);
      worst = std::max(worst, std::abs(step[i] - closed[i]) / denom);
    }
  }
  r.passed = worst <= kClosedFormTol;
  r.detail = "1000 random instances, max relative diff " + sci(worst) + " (<= " +
             sci(kClosedFormTol) + ")";
  return r;
}

CheckResult cli_determinism(const AcceptanceOptions& opts) {
  CheckResult r;
  namespace fs = std::filesystem;
  std::random_device rd;
  const fs::path dir = fs::temp_directory_path() / ("gammaguard-verify-" + std::to_string(rd()));
  fs::create_directories(dir);
  const std::string r18 = (dir / "resnet18.json").string();

  std::vector<std::pair<std::string, std::function<CommandOutput()>>> cmds;
  cmds.emplace_back("gen", [&] {
    CommandOutput o = cmd_gen({"resnet18", 1.0, r18});
    o.out += read_text_file(r18);
    return o;
  });
  for (const char* policy : {"guidelines", "all", "weights-only"}) {
    cmds.emplace_back(std::string("plan ") + policy,
                      [&, policy] { return cmd_plan({r18, 1e-4, policy, OutputFormat::Json}); });
  }
  cmds.emplace_back("plan table",
                    [&] { return cmd_plan({r18, 1e-4, "guidelines", OutputFormat::Table}); });
  cmds.emplace_back("varprop", [&] { return cmd_varprop({r18, 1.0, OutputFormat::Json}); });
  cmds.emplace_back("simulate", [&] {
    SimulateOptions s;
    s.arch_path = r18;
    s.batch = 256;
    s.trials = 2;
    s.seed = opts.seed;
    return cmd_simulate(s);
  });
  cmds.emplace_back("efflr", [&] {
    EfflrOptions e;
    e.seed = opts.seed;
    return cmd_efflr(e);
  });
  cmds.emplace_back("verify --only 9", [&] {
    VerifyOptions v;
    v.seed = opts.seed;
    v.only = {9};
    return cmd_verify(v);
  });

  r.passed = true;
  std::string bad;
  try {
    cmd_gen({"resnet18", 1.0, r18});
    for (auto& [name, run] : cmds) {
      const CommandOutput a = run();
      const CommandOutput b = run();
      if (a.out != b.out || a.status != b.status) {
        r.passed = false;
        bad += " " + name;
      }
    }
  } catch (const std::exception& e) {
    r.passed = false;
    bad += std::string(" (error: ") + e.what() + ")";
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  r.detail = std::to_string(cmds.size()) + " commands run twice with seed " +
             std::to_string(opts.seed) + (r.passed ? ": identical bytes" : ": differ:" + bad);
  return r;
}

}  // namespace

std::string check_name(int id) {
  switch (id) {
    case 1: return "variance law: MC matches analytic profiles";
    case 2: return "reset independence at downsampling";
    case 3: return "reset-then-decay profile shape";
    case 4: return "ReLU half second moment";
    case 5: return "scale invariance of the intermediate block";
    case 6: return "gradient scales as 1/|Gamma|";
    case 7: return "effective-LR slope near -2";
    case 8: return "classification counts and stable plans";
    case 9: return "half-accumulation closed form vs recurrence";
    case 10: return "CLI determinism";
  }
  throw std::invalid_argument("no check " + std::to_string(id));
}

CheckResult run_check(int id, const AcceptanceOptions& opts) {
  const std::string name = check_name(id);
  const auto t0 = Clock::now();
  CheckResult r;
  try {
    switch (id) {
      case 1: r = variance_law(opts); break;
      case 2: r = reset_independence(opts); break;
      case 3: r = figure5_shape(opts); break;
      case 4: r = relu_half_moment(opts); break;
      case 5: r = scale_invariance(opts); break;
      case 6: r = gradient_scaling(opts); break;
      case 7: r = effective_lr_slope(opts); break;
      case 8: r = classification_counts(opts); break;
      case 9: r = closed_form_agreement(opts); break;
      case 10: r = cli_determinism(opts); break;
    }
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.id = id;
  r.name = name;
  r.seconds = seconds_since(t0);
  return r;
}

std::vector<CheckResult> run_acceptance(const AcceptanceOptions& opts) {
  std::vector<CheckResult> out;
  for (int id = 1; id <= kCheckCount; ++id) {
    if (opts.only.empty() || opts.only.count(id)) out.push_back(run_check(id, opts));
  }
  return out;
}

std::string format_result(const CheckResult& r, bool with_timing) {
  std::ostringstream os;
  os << (r.passed ? "PASS" : "FAIL") << " [" << r.id << "] " << r.name << "\n";
  std::istringstream lines(r.detail);
  for (std::string line; std::getline(lines, line);) os << "       " << line << "\n";
  if (with_timing) {
    std::istringstream tl(r.timing);
    for (std::string line; std::getline(tl, line);) os << "       time " << line << "\n";
    os << "       time total " << fmt(r.seconds, 2) << " s\n";
  }
  return os.str();
}

}  // namespace gammaguard
