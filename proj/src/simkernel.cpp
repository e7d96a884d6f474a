// SPDX-License-Identifier: Apache-2.0

#include "gammaguard/simkernel.hpp"

#include <algorithm>
#include <cmath>

#include "gammaguard/parallel.hpp"

namespace gammaguard {

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

Matrix gaussian(int rows, int cols, double stddev, Rng& rng) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("matrix dimensions must be positive");
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  double* p = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) p[i] = dist(rng);
  return m;
}

Matrix he_init(int fan_in, int fan_out, Rng& rng) {
  if (fan_in <= 0 || fan_out <= 0) throw std::invalid_argument("he_init: dimensions must be positive");
  return gaussian(fan_in, fan_out, std::sqrt(2.0 / fan_in), rng);
}

Matrix batchnorm(const Matrix& x, double gamma) {
  if (x.rows() < 2) throw std::invalid_argument("batchnorm needs a batch of at least 2");
  if (gamma == 0.0) return Matrix::Zero(x.rows(), x.cols());
  const Eigen::RowVectorXd mean = x.colwise().mean();
  Matrix centered = x.rowwise() - mean;
  const Eigen::RowVectorXd var = centered.array().square().colwise().mean();
  Eigen::RowVectorXd scale(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (!(var[j] > 0.0)) {
      throw SimulationError("batchnorm: column " + std::to_string(j) + " has zero variance");
    }
    scale[j] = gamma / std::sqrt(var[j]);
  }
  centered.array().rowwise() *= scale.array();
  return centered;
}

Matrix layernorm(const Matrix& x, double gamma) {
  if (x.cols() < 2) throw std::invalid_argument("layernorm needs at least 2 features");
  if (gamma == 0.0) return Matrix::Zero(x.rows(), x.cols());
  const Eigen::VectorXd mean = x.rowwise().mean();
  Matrix centered = x.colwise() - mean;
  const Eigen::VectorXd var = centered.array().square().rowwise().mean();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (!(var[i] > 0.0)) {
      throw SimulationError("layernorm: row " + std::to_string(i) + " has zero variance");
    }
    centered.row(i) *= gamma / std::sqrt(var[i]);
  }
  return centered;
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

double second_moment(const Matrix& x) { return x.array().square().mean(); }

double mean_column_variance(const Matrix& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  return (x.rowwise() - mean).array().square().mean();
}

namespace {

Matrix dense(const Matrix& x, Rng& rng) {
  const Matrix w = he_init(static_cast<int>(x.cols()), static_cast<int>(x.cols()), rng);
  Matrix y(x.rows(), w.cols());
  y.noalias() = x * w;
  return y;
}

BlockResult forward_v1(const BlockSpec& blk, const Matrix& x, Rng& rng) {
  const auto& g = blk.branch_gammas;
  Matrix h = x;
  for (std::size_t k = 0; k < g.size(); ++k) {
    h = batchnorm(dense(h, rng), g[k]);
    if (k + 1 < g.size()) h = relu(h);
  }
  const double branch = second_moment(h);
  if (blk.downsample) {
    h += batchnorm(dense(x, rng), blk.gamma_down.value_or(1.0));
  } else {
    h += x;
  }
  return {relu(h), branch};
}

BlockResult forward_preact(const BlockSpec& blk, const Matrix& x, Rng& rng) {
  const auto& g = blk.branch_gammas;
  const Matrix first = relu(batchnorm(x, g[0]));
  Matrix h = dense(first, rng);
  for (std::size_t k = 1; k < g.size(); ++k) h = dense(relu(batchnorm(h, g[k])), rng);
  const double branch = second_moment(h);
  if (blk.downsample) {
    h += dense(first, rng);
  } else {
    h += x;
  }
  return {std::move(h), branch};
}

BlockResult forward_tx(const BlockSpec& blk, const Matrix& x, Rng& rng) {
  Matrix h = x;
  double branch = 0.0;
  for (double g : blk.branch_gammas) {
    const Matrix f = dense(relu(layernorm(h, g)), rng);
    branch += second_moment(f);
    h += f;
  }
  return {std::move(h), branch};
}

}  // namespace

BlockResult forward_block_traced(const BlockSpec& block, Style style, const Matrix& x, Rng& rng) {
  if (block.branch_gammas.size() != branch_norm_count(block.kind)) {
    throw std::invalid_argument("forward_block: branch_gammas length does not match block kind");
  }
  if (block.kind == BlockKind::TxBlock) return forward_tx(block, x, rng);
  if (style == Style::Transformer) {
    throw std::invalid_argument("forward_block: transformer style needs txblock blocks");
  }
  if (style == Style::V1) return forward_v1(block, x, rng);
  return forward_preact(block, x, rng);
}

Matrix forward_block(const BlockSpec& block, Style style, const Matrix& x, Rng& rng) {
  return forward_block_traced(block, style, x, rng).out;
}

void McConfig::validate() const {
  if (batch < kMinBatch) {
    throw std::invalid_argument("batch must be at least " + std::to_string(kMinBatch) + ", got " +
                                std::to_string(batch));
  }
  if (width < 0) throw std::invalid_argument("width must be positive");
  if (trials <= 0) throw std::invalid_argument("trials must be positive");
  if (!(std::isfinite(input_variance) && input_variance > 0.0)) {
    throw std::invalid_argument("input variance must be positive");
  }
}

namespace {

struct TrialTrace {
  std::vector<double> skip, branch, out;
};

TrialTrace run_trial(const ArchSpec& spec, const McConfig& cfg, int width, std::uint64_t t) {
  Rng rng = make_rng(cfg.seed, t);
  TrialTrace tr;
  Matrix x;
  switch (spec.style) {
    case Style::V1:
      if (!spec.stem.has_norm) throw std::invalid_argument("v1 simulation needs a stem norm");
      x = relu(batchnorm(dense(gaussian(cfg.batch, width, 1.0, rng), rng), spec.stem.gamma0));
      break;
    case Style::PreAct:
      x = gaussian(cfg.batch, width, std::sqrt(cfg.input_variance), rng);
      break;
    case Style::Transformer:
      x = gaussian(cfg.batch, width, std::sqrt(cfg.input_variance), rng);
      if (spec.stem.has_norm) x = layernorm(x, spec.stem.gamma0);
      break;
  }
  for (const auto& stage : spec.stages) {
    for (const auto& blk : stage.blocks) {
      tr.skip.push_back(second_moment(x));
      BlockResult r = forward_block_traced(blk, spec.style, x, rng);
      tr.branch.push_back(r.branch_moment);
      x = std::move(r.out);
      tr.out.push_back(second_moment(x));
    }
  }
  return tr;
}

}  // namespace

VarianceProfile mc_variance_profile(const ArchSpec& spec, const McConfig& cfg) {
  validate(spec);
  cfg.validate();
  const int width = cfg.width > 0 ? cfg.width : spec.width;
  if (width < 2) throw std::invalid_argument("simulation width must be at least 2");

  std::vector<TrialTrace> traces(static_cast<std::size_t>(cfg.trials));
  parallel_for(traces.size(), [&](std::size_t t) {
    traces[t] = run_trial(spec, cfg, width, static_cast<std::uint64_t>(t));
  });

  VarianceProfile prof;
  prof.source = ProfileSource::Empirical;
  const std::size_t n = spec.block_count();
  const double trials = static_cast<double>(cfg.trials);
  prof.stderr_out.emplace();
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    for (std::size_t b = 0; b < spec.stages[s].blocks.size(); ++b) {
      prof.positions.push_back({static_cast<int>(s), static_cast<int>(b)});
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double skip = 0.0, branch = 0.0, out = 0.0;
    for (const auto& tr : traces) {
      skip += tr.skip[i];
      branch += tr.branch[i];
      out += tr.out[i];
    }
    const double out_mean = out / trials;
    double ss = 0.0;
    for (const auto& tr : traces) ss += (tr.out[i] - out_mean) * (tr.out[i] - out_mean);
    const double sd = cfg.trials > 1 ? std::sqrt(ss / (trials - 1.0)) : 0.0;
    prof.skip_var.push_back(skip / trials);
    prof.branch_var.push_back(branch / trials);
    prof.out_var.push_back(out_mean);
    prof.stderr_out->push_back(sd / std::sqrt(trials));
  }
  return prof;
}

ProfileComparison compare_profiles(const VarianceProfile& analytic,
                                   const VarianceProfile& empirical) {
  if (analytic.positions != empirical.positions) {
    throw std::invalid_argument("compare_profiles: profiles cover different block positions");
  }
  constexpr double kFloor = 1e-6;
  ProfileComparison c;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.out_var[i];
    const double rel = std::abs(empirical.out_var[i] - a) / std::max(a, kFloor);
    c.rel_err.push_back(rel);
    c.max_rel = std::max(c.max_rel, rel);
    c.mean_rel += rel;
  }
  if (!c.rel_err.empty()) c.mean_rel /= static_cast<double>(c.rel_err.size());
  return c;
}

}  // namespace gammaguard
