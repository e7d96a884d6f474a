// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "gammaguard/archspec.hpp"
#include "gammaguard/classify.hpp"

using namespace gammaguard;

namespace {

RoleCounts counts_of(const char* name) {
  return count_roles(classify_gammas(build_canonical(name, 1.0)));
}

GammaRole role_at(const ArchSpec& s, const std::string& path) {
  const ParamPath p = ParamPath::parse(path);
  for (const auto& c : classify_gammas(s))
    if (c.path == p) return c.role;
  throw std::runtime_error("no such path " + path);
}

}  // namespace

TEST(Classify, CanonicalCounts) {
  EXPECT_EQ(counts_of("resnet50"), (RoleCounts{1, 16, 4, 32}));
  EXPECT_EQ(counts_of("resnet18"), (RoleCounts{1, 8, 3, 8}));
  EXPECT_EQ(counts_of("preact18"), (RoleCounts{0, 8, 3, 5}));
  EXPECT_EQ(counts_of("txstack:3"), (RoleCounts{0, 6, 0, 0}));
}

TEST(Classify, PreActRoles) {
  const ArchSpec s = build_canonical("preact18", 1.0);
  EXPECT_EQ(role_at(s, "stage0.block1.norm1.gamma"), GammaRole::GammaLast);
  EXPECT_EQ(role_at(s, "stage0.block1.norm0.gamma"), GammaRole::GammaOthers);
  EXPECT_EQ(role_at(s, "stage1.block0.norm0.gamma"), GammaRole::GammaDown);
}

TEST(Classify, FinalNormIsOthers) {
  ArchSpec s = build_canonical("txstack:2", 1.0);
  s.final_norm_gamma = 1.0;
  EXPECT_EQ(role_at(s, "final.norm.gamma"), GammaRole::GammaOthers);
}

TEST(Classify, IndependentOfGammaValues) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (const char* name : {"resnet18", "resnet50", "preact50"}) {
    ArchSpec s = build_canonical(name, 1.0);
    const auto ref = classify_gammas(s);
    for (const auto& e : enumerate_gammas(s)) s = with_gamma(s, e.path, u(rng));
    const auto got = classify_gammas(s);
    ASSERT_EQ(got.size(), ref.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].path, ref[i].path);
      EXPECT_EQ(got[i].role, ref[i].role);
    }
  }
}

TEST(DecayPlanTest, PolicyCounts) {
  const ArchSpec s = build_canonical("resnet18", 1.0);
  EXPECT_EQ(make_plan(s, 1e-4, DecayPolicy{PolicyKind::Guidelines, {}}).decayed_count(), 16);
  EXPECT_EQ(make_plan(s, 1e-4, DecayPolicy{PolicyKind::WeightsOnly, {}}).decayed_count(), 0);
  EXPECT_EQ(make_plan(s, 1e-4, DecayPolicy{PolicyKind::AllParams, {}}).decayed_count(), 20);
}

TEST(DecayPlanTest, PolicyMonotone) {
  // WeightsOnly <= Guidelines <= AllParams entry by entry.
  for (const char* name : {"resnet18", "resnet50", "preact18", "txstack:3"}) {
    const ArchSpec s = build_canonical(name, 1.0);
    const auto w = make_plan(s, 1e-4, policy_from_string("weights-only"));
    const auto g = make_plan(s, 1e-4, policy_from_string("guidelines"));
    const auto a = make_plan(s, 1e-4, policy_from_string("all"));
    ASSERT_EQ(w.entries.size(), g.entries.size());
    for (std::size_t i = 0; i < g.entries.size(); ++i) {
      EXPECT_LE(w.entries[i].apply_decay, g.entries[i].apply_decay);
      EXPECT_LE(g.entries[i].apply_decay, a.entries[i].apply_decay);
    }
  }
}

TEST(DecayPlanTest, GuidelinesNeverDecayGamma0OrDown) {
  for (const auto& e : make_plan(build_canonical("resnet50", 1.0), 1e-4, DecayPolicy{}).entries) {
    const bool protect = e.role == GammaRole::Gamma0 || e.role == GammaRole::GammaDown;
    EXPECT_EQ(e.apply_decay, !protect) << e.path.str();
  }
}

TEST(DecayPlanTest, CustomPolicy) {
  const ArchSpec s = build_canonical("resnet18", 1.0);
  DecayPolicy p{PolicyKind::Custom, {{GammaRole::Gamma0, true}, {GammaRole::GammaLast, false}}};
  EXPECT_THROW(make_plan(s, 1e-4, p), std::invalid_argument);
  p.custom[GammaRole::GammaDown] = true;
  p.custom[GammaRole::GammaOthers] = false;
  EXPECT_EQ(make_plan(s, 1e-4, p).decayed_count(), 1 + 3);
}

TEST(DecayPlanTest, RejectsNegativeLambda) {
  EXPECT_THROW(make_plan(build_canonical("resnet18", 1.0), -1.0, DecayPolicy{}),
               std::invalid_argument);
}

TEST(DecayPlanTest, EntriesSortedAndStable) {
  const ArchSpec s = build_canonical("resnet50", 1.0);
  const auto plan = make_plan(s, 5e-4, DecayPolicy{});
  for (std::size_t i = 1; i < plan.entries.size(); ++i)
    EXPECT_LT(plan.entries[i - 1].path.str(), plan.entries[i].path.str());
  EXPECT_EQ(plan_to_json(plan), plan_to_json(make_plan(s, 5e-4, DecayPolicy{})));
}

TEST(Roles, StringRoundTrip) {
  for (GammaRole r : kAllRoles) EXPECT_EQ(role_from_string(to_string(r)), r);
  EXPECT_THROW(role_from_string("gamma_mid"), std::invalid_argument);
  EXPECT_THROW(policy_from_string("pytorch"), std::invalid_argument);
}
