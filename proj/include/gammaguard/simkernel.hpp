// SPDX-License-Identifier: Apache-2.0
//
// Monte Carlo forward passes at initialization: fully connected He-initialized
// weights, exact batch normalization (eps = 0, biased statistics) and ReLU.
// Used as the empirical oracle for the closed forms in varprop.hpp.
//
// "Variance" of an activation here is the column-averaged second moment
// E[x^2]. That is the quantity the closed forms carry through a weight
// layer (fan_in * Var[W] * E[x^2]); the batch mean of a post-ReLU map is
// not subtracted.

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gammaguard/archspec.hpp"
#include "gammaguard/varprop.hpp"

namespace gammaguard {

/// batch x features, row-major.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Independent stream `stream` derived from `seed`.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

Matrix gaussian(int rows, int cols, double stddev, Rng& rng);

/// fan_in x fan_out, entries i.i.d. N(0, 2 / fan_in). Applied as x * W.
Matrix he_init(int fan_in, int fan_out, Rng& rng);

/// Per column: subtract the batch mean, divide by the biased standard
/// deviation, scale by gamma. gamma == 0 yields zeros without inspecting x;
/// otherwise a zero-variance column raises SimulationError.
Matrix batchnorm(const Matrix& x, double gamma);

/// Same normalization per row (over features).
Matrix layernorm(const Matrix& x, double gamma);

Matrix relu(const Matrix& x);

/// Mean of x^2 over all entries.
double second_moment(const Matrix& x);

/// Mean over columns of the biased per-column sample variance.
double mean_column_variance(const Matrix& x);

struct BlockResult {
  Matrix out;
  double branch_moment = 0.0;  // second moment of the residual branch(es)
};

/// One residual block with fresh He weights drawn from `rng`.
///   V1:     [W-BN-ReLU] x (k-1), W-BN, add skip, ReLU. Downsampling skip: W-BN(gamma_down).
///   PreAct: [BN-ReLU-W] x k, add skip. Downsampling skip: W on the first BN-ReLU output.
///   TxBlock: x += W ReLU(LN(x, g1)); x += W ReLU(LN(x, g2)).
BlockResult forward_block_traced(const BlockSpec& block, Style style, const Matrix& x, Rng& rng);
Matrix forward_block(const BlockSpec& block, Style style, const Matrix& x, Rng& rng);

struct McConfig {
  int batch = 8192;
  int width = 0;  // 0: use ArchSpec::width
  int trials = 8;
  std::uint64_t seed = 0;
  double input_variance = 1.0;  // stage-0 input when the stem has no norm

  static constexpr int kMinBatch = 64;
  /// Throws std::invalid_argument.
  void validate() const;
};

/// Runs `cfg.trials` independent networks (parallel, capped by
/// GAMMA_GUARD_THREADS) and averages per-block second moments by trial
/// index. stderr_out = sample std of out_var across trials / sqrt(trials).
VarianceProfile mc_variance_profile(const ArchSpec& spec, const McConfig& cfg);

struct ProfileComparison {
  std::vector<double> rel_err;  // per row, on out_var
  double max_rel = 0.0;
  double mean_rel = 0.0;
};

/// rel = |e - a| / max(a, 1e-6). Throws std::invalid_argument on mismatched positions.
ProfileComparison compare_profiles(const VarianceProfile& analytic,
                                   const VarianceProfile& empirical);

}  // namespace gammaguard
