// SPDX-License-Identifier: Apache-2.0
//
// gammaguard: classify normalization gammas, emit decay plans, and check the
// variance and effective-learning-rate analysis numerically.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gammaguard/archspec.hpp"
#include "gammaguard/commands.hpp"
#include "gammaguard/simkernel.hpp"

using namespace gammaguard;

namespace {

int emit(const CommandOutput& r) {
  std::cout << r.out << std::flush;
  if (!r.err.empty()) std::cerr << r.err;
  return r.status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Normalization-gamma roles, decay plans and variance checks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("gammaguard 0.1.0"));

  std::string format = "json";
  const auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", format, "Output format")
        ->check(CLI::IsMember({"json", "table"}))
        ->capture_default_str();
  };

  GenOptions gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen", "Write a canonical architecture file");
  gen_cmd->add_option("name", gen.name,
                      "resnet18|resnet34|resnet50|resnet101|resnet152|preact18|preact50|txstack:N")
      ->required();
  gen_cmd->add_option("--gamma", gen.gamma, "Initial value for every gamma")->capture_default_str();
  gen_cmd->add_option("-o,--out", gen_out, "Output path (stdout when omitted)");

  PlanOptions plan;
  auto* plan_cmd = app.add_subcommand("plan", "Per-gamma L2 decay plan");
  plan_cmd->add_option("arch", plan.arch_path, "Architecture file")->required();
  plan_cmd->add_option("--lambda", plan.lambda, "L2 coefficient")->capture_default_str();
  plan_cmd->add_option("--policy", plan.policy, "guidelines|all|weights-only")
      ->check(CLI::IsMember({"guidelines", "all", "weights-only"}))
      ->capture_default_str();
  add_format(plan_cmd);

  VarpropOptions varprop;
  auto* varprop_cmd = app.add_subcommand("varprop", "Analytic variance profile");
  varprop_cmd->add_option("arch", varprop.arch_path, "Architecture file")->required();
  varprop_cmd->add_option("--input-var", varprop.input_variance,
                          "Stage-0 input variance when the stem has no norm")
      ->capture_default_str();
  add_format(varprop_cmd);

  SimulateOptions sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo profile compared to the analytic one");
  sim_cmd->add_option("arch", sim.arch_path, "Architecture file")->required();
  sim_cmd->add_option("--batch", sim.batch, "Batch size")->capture_default_str();
  sim_cmd->add_option("--trials", sim.trials, "Independent trials")->capture_default_str();
  sim_cmd->add_option("--width", sim.width, "Feature count (0: from the file)")
      ->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed, "RNG seed")->capture_default_str();
  sim_cmd->add_option("--threshold", sim.threshold, "Max relative error before exit status 2")
      ->capture_default_str();
  add_format(sim_cmd);

  EfflrOptions eff;
  auto* eff_cmd = app.add_subcommand("efflr", "First-update norm versus initial gamma scale");
  eff_cmd->add_option("--scales", eff.scales, "Comma-separated gamma scales")
      ->delimiter(',')
      ->capture_default_str();
  eff_cmd->add_option("--width", eff.width, "Feature count")->capture_default_str();
  eff_cmd->add_option("--batch", eff.batch, "Batch size")->capture_default_str();
  eff_cmd->add_option("--eta", eff.eta, "Learning rate")->capture_default_str();
  eff_cmd->add_option("--seed", eff.seed, "RNG seed")->capture_default_str();
  add_format(eff_cmd);

  VerifyOptions ver;
  std::string ver_arch;
  auto* ver_cmd = app.add_subcommand("verify", "Run the acceptance checks");
  ver_cmd->add_option("arch", ver_arch, "Extra architecture for the variance-law check");
  ver_cmd->add_option("--seed", ver.seed, "RNG seed")->capture_default_str();
  ver_cmd->add_option("--only", ver.only, "Check ids to run (default: all)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalidInput;
  }

  try {
    const OutputFormat fmt = format_from_string(format);
    if (gen_cmd->parsed()) {
      if (!gen_out.empty()) gen.out_path = gen_out;
      return emit(cmd_gen(gen));
    }
    if (plan_cmd->parsed()) {
      plan.format = fmt;
      return emit(cmd_plan(plan));
    }
    if (varprop_cmd->parsed()) {
      varprop.format = fmt;
      return emit(cmd_varprop(varprop));
    }
    if (sim_cmd->parsed()) {
      sim.format = fmt;
      return emit(cmd_simulate(sim));
    }
    if (eff_cmd->parsed()) {
      eff.format = fmt;
      return emit(cmd_efflr(eff));
    }
    if (ver_cmd->parsed()) {
      if (!ver_arch.empty()) ver.arch_path = ver_arch;
      return emit(cmd_verify(ver));
    }
  } catch (const ParseError& e) {
    std::cerr << "error: invalid JSON at byte " << e.offset() << ": " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const SpecError& e) {
    std::cerr << "error: invalid architecture: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const SimulationError& e) {
    std::cerr << "error: degenerate simulation: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
