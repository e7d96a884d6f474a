// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "gammaguard/acceptance.hpp"
#include "gammaguard/archspec.hpp"
#include "gammaguard/commands.hpp"

using namespace gammaguard;
namespace fs = std::filesystem;

namespace {

const std::string kGolden = GAMMA_GUARD_GOLDEN_DIR;

std::string golden(const std::string& name) { return read_text_file(kGolden + "/" + name); }

}  // namespace

TEST(Golden, CanonicalResNet18) {
  EXPECT_EQ(cmd_gen(GenOptions{"resnet18", 1.0, std::nullopt}).out, golden("resnet18.json"));
}

TEST(Golden, PlansByteStable) {
  for (const char* policy : {"guidelines", "all", "weights-only"}) {
    PlanOptions o;
    o.arch_path = kGolden + "/resnet18.json";
    o.policy = policy;
    const CommandOutput r = cmd_plan(o);
    EXPECT_EQ(r.status, kExitOk);
    EXPECT_EQ(r.out, golden(std::string("plan_resnet18_") + policy + ".json")) << policy;
  }
}

TEST(Commands, GenWritesFile) {
  const fs::path p = fs::temp_directory_path() / "gammaguard_test_gen.json";
  const CommandOutput r = cmd_gen(GenOptions{"preact18", 0.5, p.string()});
  EXPECT_EQ(r.out, p.string() + "\n");
  EXPECT_EQ(parse_arch(read_text_file(p.string())), build_canonical("preact18", 0.5));
  fs::remove(p);
}

TEST(Commands, InvalidInputThrows) {
  EXPECT_THROW(cmd_gen(GenOptions{"vgg16", 1.0, std::nullopt}), std::invalid_argument);
  PlanOptions p;
  p.arch_path = "/nonexistent/arch.json";
  EXPECT_THROW(cmd_plan(p), std::invalid_argument);
  SimulateOptions s;
  s.arch_path = kGolden + "/resnet18.json";
  s.batch = 8;
  EXPECT_THROW(cmd_simulate(s), std::invalid_argument);
  EfflrOptions e;
  e.scales = {1.0, 2.0};
  EXPECT_THROW(cmd_efflr(e), std::invalid_argument);
  VerifyOptions v;
  v.only = {11};
  EXPECT_THROW(cmd_verify(v), std::invalid_argument);
}

TEST(Commands, SimulateStatusFollowsThreshold) {
  SimulateOptions s;
  s.arch_path = kGolden + "/resnet18.json";
  s.batch = 256;
  s.trials = 2;
  s.width = 32;
  s.threshold = 1e9;
  EXPECT_EQ(cmd_simulate(s).status, kExitOk);
  s.threshold = 1e-9;
  EXPECT_EQ(cmd_simulate(s).status, kExitCheckFailed);
}

TEST(Commands, VerifyStableGivenSeed) {
  VerifyOptions v;
  v.seed = 5;
  v.only = {4, 8, 9};
  const CommandOutput a = cmd_verify(v), b = cmd_verify(v);
  EXPECT_EQ(a.status, kExitOk);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out.rfind("seed 5\n", 0), 0u);
}

TEST(Acceptance, WrongResetFormulaFailsResetCheck) {
  AcceptanceOptions opts;
  opts.model.v1_reset = [](double incoming, double gd, double gl) {
    return 0.5 * (incoming + gd * gd + gl * gl);
  };
  const CheckResult r = run_check(2, opts);
  EXPECT_FALSE(r.passed) << r.detail;
}

TEST(Acceptance, UnknownCheckId) {
  EXPECT_THROW(run_check(0, AcceptanceOptions{}), std::invalid_argument);
  EXPECT_THROW(check_name(kCheckCount + 1), std::invalid_argument);
}
