// SPDX-License-Identifier: Apache-2.0

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <string>
#include <vector>

#include "gammaguard/acceptance.hpp"
#include "gammaguard/archspec.hpp"
#include "gammaguard/classify.hpp"
#include "gammaguard/efflr.hpp"
#include "gammaguard/json_out.hpp"
#include "gammaguard/simkernel.hpp"
#include "gammaguard/varprop.hpp"

namespace py = pybind11;
using namespace gammaguard;

namespace {

std::map<std::string, int> role_counts(const std::string& text) {
  const RoleCounts c = count_roles(classify_gammas(parse_arch(text)));
  return {{"gamma0", c.gamma0},
          {"gamma_last", c.gamma_last},
          {"gamma_down", c.gamma_down},
          {"gamma_others", c.gamma_others}};
}

std::map<std::string, std::string> roles(const std::string& text) {
  std::map<std::string, std::string> out;
  for (const auto& c : classify_gammas(parse_arch(text)))
    out[c.path.str()] = std::string(to_string(c.role));
  return out;
}

std::string plan(const std::string& text, double lambda, const std::string& policy) {
  return plan_to_json(make_plan(parse_arch(text), lambda, policy_from_string(policy)));
}

std::string profile(const std::string& text, double input_variance) {
  ProfileOptions o;
  o.input_variance = input_variance;
  return profile_to_json(full_profile(parse_arch(text), o), true);
}

std::string simulate(const std::string& text, int batch, int trials, int width,
                     std::uint64_t seed, double input_variance) {
  const ArchSpec spec = parse_arch(text);
  McConfig cfg;
  cfg.batch = batch;
  cfg.trials = trials;
  cfg.width = width;
  cfg.seed = seed;
  cfg.input_variance = input_variance;
  cfg.validate();
  ProfileOptions o;
  o.input_variance = input_variance;
  VarianceProfile analytic, empirical;
  {
    py::gil_scoped_release release;
    analytic = full_profile(spec, o);
    empirical = mc_variance_profile(spec, cfg);
  }
  const ProfileComparison cmp = compare_profiles(analytic, empirical);
  ordered_json doc;
  doc["analytic"] = profile_document(analytic);
  doc["empirical"] = profile_document(empirical);
  doc["comparison"] =
      ordered_json{{"rel_err", cmp.rel_err}, {"max", cmp.max_rel}, {"mean", cmp.mean_rel}};
  return dump_json(doc);
}

std::string update_norm(const std::vector<double>& scales, int width, int batch, double eta,
                        std::uint64_t seed) {
  UpdateNormConfig cfg;
  cfg.scales = scales;
  cfg.width = width;
  cfg.batch = batch;
  cfg.eta = eta;
  cfg.seed = seed;
  UpdateNormResult r;
  {
    py::gil_scoped_release release;
    r = update_norm_experiment(cfg);
  }
  return experiment_to_json(r);
}

py::list run_checks(const std::vector<int>& only, std::uint64_t seed) {
  AcceptanceOptions opts;
  opts.seed = seed;
  for (int id : only) {
    check_name(id);
    opts.only.insert(id);
  }
  std::vector<CheckResult> results;
  {
    py::gil_scoped_release release;
    results = run_acceptance(opts);
  }
  py::list out;
  for (const auto& r : results) {
    py::dict d;
    d["id"] = r.id;
    d["name"] = r.name;
    d["passed"] = r.passed;
    d["detail"] = r.detail;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "gammaguard native core";

  py::register_exception<SimulationError>(m, "SimulationError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ParseError& e) {
      PyErr_SetString(PyExc_ValueError,
                      ("invalid JSON at byte " + std::to_string(e.offset()) + ": " + e.what()).c_str());
    } catch (const SpecError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("canonical", [](const std::string& name, double gamma) {
    return serialize(build_canonical(name, gamma));
  }, py::arg("name"), py::arg("gamma") = 1.0);
  m.def("normalize", [](const std::string& text) { return serialize(parse_arch(text)); },
        py::arg("text"));
  m.def("role_counts", &role_counts, py::arg("text"));
  m.def("roles", &roles, py::arg("text"));
  m.def("plan", &plan, py::arg("text"), py::arg("lam") = 1e-4, py::arg("policy") = "guidelines");
  m.def("profile", &profile, py::arg("text"), py::arg("input_variance") = 1.0);
  m.def("simulate", &simulate, py::arg("text"), py::arg("batch") = 8192, py::arg("trials") = 8,
        py::arg("width") = 0, py::arg("seed") = 0, py::arg("input_variance") = 1.0);
  m.def("update_norm", &update_norm, py::arg("scales") = std::vector<double>{0.5, 1, 2, 4, 8},
        py::arg("width") = 64, py::arg("batch") = 1024, py::arg("eta") = 1e-3,
        py::arg("seed") = 0);
  m.def("run_checks", &run_checks, py::arg("only") = std::vector<int>{}, py::arg("seed") = 0);

  m.def("propagate_v1", [](double v, const std::vector<double>& g) { return propagate_v1(v, g); });
  m.def("propagate_v1_closed_form",
        [](double v, const std::vector<double>& g) { return propagate_v1_closed_form(v, g); });
  m.def("propagate_preact",
        [](double v, const std::vector<double>& g) { return propagate_preact(v, g); });
  m.def("reset_downsample_v1", &reset_downsample_v1);
  m.def("reset_downsample_preact", &reset_downsample_preact);
  m.def("early_stage_variance", &early_stage_variance);
}
