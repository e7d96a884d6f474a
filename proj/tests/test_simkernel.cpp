// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "gammaguard/archspec.hpp"
#include "gammaguard/classify.hpp"
#include "gammaguard/simkernel.hpp"
#include "gammaguard/varprop.hpp"

using namespace gammaguard;

namespace {

BlockSpec basic(std::vector<double> g, bool down = false, std::optional<double> gd = {}) {
  return BlockSpec{BlockKind::Basic, down, std::move(g), gd};
}

// Average second moment of forward_block output over independent trials.
double mc_block_moment(const BlockSpec& b, Style style, double input_var, int trials = 8,
                       int batch = 8192, int width = 256) {
  double acc = 0.0;
  for (int t = 0; t < trials; ++t) {
    Rng rng = make_rng(42, static_cast<std::uint64_t>(t));
    const Matrix x = gaussian(batch, width, std::sqrt(input_var), rng);
    acc += second_moment(forward_block(b, style, x, rng));
  }
  return acc / trials;
}

}  // namespace

TEST(HeInit, VarianceAndDeterminism) {
  Rng rng = make_rng(1, 0);
  const Matrix w = he_init(256, 256, rng);
  const double mean = w.mean();
  const double var = (w.array() - mean).square().mean();
  EXPECT_GT(var, 2.0 / 256 * 0.9);
  EXPECT_LT(var, 2.0 / 256 * 1.1);

  Rng a = make_rng(3, 7), b = make_rng(3, 7);
  EXPECT_TRUE(he_init(32, 16, a) == he_init(32, 16, b));

  Rng c = make_rng(4, 0);
  const Matrix w1 = he_init(1, 20000, c);
  EXPECT_NEAR(w1.array().square().mean(), 2.0, 0.1);
}

TEST(BatchNorm, ExactStatistics) {
  Rng rng = make_rng(2, 0);
  Matrix x = gaussian(500, 12, 3.0, rng);
  x.array() += 5.0;
  for (double g : {1.0, 0.3, 2.5}) {
    const Matrix y = batchnorm(x, g);
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      const double m = y.col(j).mean();
      const double v = (y.col(j).array() - m).square().mean();
      EXPECT_LT(std::abs(m), 1e-10);
      EXPECT_NEAR(v, g * g, 1e-8);
    }
  }
  EXPECT_TRUE(batchnorm(x, 0.0).isZero(0.0));
  EXPECT_TRUE(batchnorm(batchnorm(x, 1.0), 1.7).isApprox(batchnorm(x, 1.7), 1e-12));
}

TEST(BatchNorm, ZeroVarianceColumnNamed) {
  Matrix x = Matrix::Ones(10, 4);
  x.col(0).setLinSpaced(10, 0.0, 1.0);
  x.col(1).setLinSpaced(10, 0.0, 1.0);
  x.col(3).setLinSpaced(10, 0.0, 1.0);
  try {
    batchnorm(x, 1.0);
    FAIL() << "expected SimulationError";
  } catch (const SimulationError& e) {
    EXPECT_NE(std::string(e.what()).find("column 2"), std::string::npos) << e.what();
  }
}

TEST(Relu, HalfSecondMomentAndIdempotence) {
  Rng rng = make_rng(3, 0);
  const Matrix x = gaussian(1000, 1000, 1.0, rng);
  const Matrix r = relu(x);
  const double m = r.array().square().mean();
  EXPECT_GE(m, 0.48);
  EXPECT_LE(m, 0.52);
  EXPECT_TRUE(relu(r) == r);
  EXPECT_TRUE(relu(Matrix::Constant(3, 3, -1.0)).isZero(0.0));
}

TEST(ForwardBlock, V1StepOnZeroMeanInput) {
  // input second moment 4, unit gammas: 0.5 * (4 + 1)
  const double m = mc_block_moment(basic({1, 1}), Style::V1, 4.0);
  EXPECT_NEAR(m, 2.5, 0.25);
}

TEST(ForwardBlock, V1DownsampleResetIgnoresInput) {
  for (double in : {0.3, 4.0, 25.0}) {
    const double m = mc_block_moment(basic({1, 1}, true, 2.0), Style::V1, in, 4);
    EXPECT_NEAR(m, 2.5, 0.25) << "input variance " << in;
  }
}

TEST(ForwardBlock, ZeroBranchLimits) {
  Rng rng = make_rng(5, 0);
  const Matrix x = gaussian(256, 32, 1.0, rng);
  EXPECT_TRUE(forward_block(basic({1, 0}), Style::PreAct, x, rng) == x);
  EXPECT_TRUE(forward_block(basic({0, 0}), Style::PreAct, x, rng) == x);
  EXPECT_TRUE(forward_block(basic({0, 0}), Style::V1, x, rng) == relu(x));
  const BlockSpec t{BlockKind::TxBlock, false, {0, 0}, {}};
  EXPECT_TRUE(forward_block(t, Style::Transformer, x, rng) == x);
}

TEST(ForwardBlock, ShapeMismatch) {
  Rng rng = make_rng(6, 0);
  const Matrix x = gaussian(128, 32, 1.0, rng);
  const BlockSpec down = basic({1, 1}, true, 1.0);
  EXPECT_NO_THROW(forward_block(down, Style::V1, x, rng));
  EXPECT_THROW(forward_block(BlockSpec{BlockKind::Basic, false, {1}, {}}, Style::V1, x, rng),
               std::invalid_argument);
}

TEST(McProfile, Deterministic) {
  const ArchSpec s = build_canonical("preact18", 1.0);
  McConfig cfg;
  cfg.batch = 512;
  cfg.width = 64;
  cfg.trials = 3;
  cfg.seed = 77;
  const auto a = mc_variance_profile(s, cfg), b = mc_variance_profile(s, cfg);
  EXPECT_EQ(a.out_var, b.out_var);
  EXPECT_EQ(a.skip_var, b.skip_var);
  EXPECT_EQ(a.branch_var, b.branch_var);
  EXPECT_EQ(*a.stderr_out, *b.stderr_out);
  EXPECT_EQ(profile_to_json(a), profile_to_json(b));
  cfg.seed = 78;
  EXPECT_NE(mc_variance_profile(s, cfg).out_var, a.out_var);
}

TEST(McProfile, PreActMatchesAnalytic) {
  const ArchSpec s = build_canonical("preact18", 1.0);
  McConfig cfg;
  cfg.width = 128;
  cfg.batch = 4096;
  cfg.trials = 4;
  const auto cmp = compare_profiles(full_profile(s), mc_variance_profile(s, cfg));
  EXPECT_LE(cmp.max_rel, 0.10);
  const auto e = mc_variance_profile(s, cfg);
  for (std::size_t i = 1; i < e.size(); ++i) {
    if (e.positions[i].block != 0) EXPECT_NEAR(e.out_var[i] - e.out_var[i - 1], 1.0, 0.1);
  }
}

TEST(McProfile, StageEntriesResetToOne) {
  const ArchSpec s = build_canonical("resnet18", 1.0);
  McConfig cfg;
  cfg.width = 128;
  cfg.batch = 4096;
  cfg.trials = 4;
  const auto e = mc_variance_profile(s, cfg);
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e.positions[i].stage > 0 && e.positions[i].block == 0) EXPECT_NEAR(e.out_var[i], 1.0, 0.1);
  }
}

TEST(McProfile, TransformerAdditive) {
  for (int n : {1, 2}) {
    const ArchSpec s = build_canonical("txstack:" + std::to_string(n), 1.0);
    McConfig cfg;
    cfg.width = 256;
    cfg.batch = 2048;
    cfg.trials = 4;
    ProfileOptions o;
    o.input_variance = cfg.input_variance = n == 1 ? 1.0 : 2.0;
    const auto cmp = compare_profiles(full_profile(s, o), mc_variance_profile(s, cfg));
    EXPECT_LE(cmp.max_rel, 0.10) << n << " blocks";
  }
}

TEST(McProfile, ConvergesWithBatchAndTrials) {
  const ArchSpec s = build_canonical("preact18", 1.0);
  const VarianceProfile a = full_profile(s);
  auto err = [&](int batch, int trials) {
    McConfig cfg;
    cfg.width = 64;
    cfg.batch = batch;
    cfg.trials = trials;
    cfg.seed = 3;
    return compare_profiles(a, mc_variance_profile(s, cfg)).mean_rel;
  };
  const double small = err(2048, 4);
  EXPECT_LE(err(8192, 4), small);
  EXPECT_LE(err(2048, 8), small);
  EXPECT_LE(err(8192, 8), small);
}

TEST(McConfigTest, Validation) {
  McConfig cfg;
  cfg.batch = 8;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.batch = 64;
  EXPECT_NO_THROW(cfg.validate());
  cfg.trials = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(CompareProfiles, Basics) {
  VarianceProfile a;
  a.positions = {{0, 0}, {0, 1}};
  a.skip_var = a.branch_var = {1, 1};
  a.out_var = {1.0, 0.0};
  VarianceProfile e = a;
  e.source = ProfileSource::Empirical;
  auto c = compare_profiles(a, e);
  EXPECT_EQ(c.max_rel, 0.0);
  EXPECT_EQ(c.mean_rel, 0.0);
  e.out_var = {1.05, 1e-7};
  c = compare_profiles(a, e);
  EXPECT_NEAR(c.rel_err[0], 0.05, 1e-12);
  EXPECT_NEAR(c.rel_err[1], 0.1, 1e-12);
  e.positions[1].block = 2;
  EXPECT_THROW(compare_profiles(a, e), std::invalid_argument);
}
