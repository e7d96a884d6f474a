// SPDX-License-Identifier: Apache-2.0

#include "gammaguard/efflr.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "gammaguard/json_out.hpp"
#include "gammaguard/parallel.hpp"

namespace gammaguard {

double GammaVec::norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

GammaVec GammaVec::scaled(double c) const {
  GammaVec out = *this;
  for (double& v : out.values) v *= c;
  return out;
}

GammaVec GammaVec::direction() const {
  const double n = norm();
  if (n == 0.0) throw std::domain_error("gamma has zero norm");
  return scaled(1.0 / n);
}

Matrix intermediate_forward(const Matrix& x, const GammaVec& gamma, const Matrix& w) {
  if (static_cast<std::size_t>(x.cols()) != gamma.size() || w.rows() != x.cols()) {
    throw std::invalid_argument("intermediate_forward: shape mismatch");
  }
  if (x.rows() < 2) throw std::invalid_argument("intermediate_forward: batch must be >= 2");
  const Eigen::Map<const Eigen::RowVectorXd> g(gamma.values.data(),
                                               static_cast<Eigen::Index>(gamma.size()));
  Matrix h = x;
  h.array().rowwise() *= g.array();
  Matrix y(x.rows(), w.cols());
  y.noalias() = relu(h) * w;
  try {
    return batchnorm(y, 1.0);
  } catch (const SimulationError& e) {
    throw SimulationError(std::string("intermediate_forward: ") + e.what());
  }
}

double surrogate_loss(const GammaVec& gamma, const Matrix& x, const Matrix& w,
                      const Matrix& target) {
  const Matrix y = intermediate_forward(x, gamma, w);
  if (y.rows() != target.rows() || y.cols() != target.cols()) {
    throw std::invalid_argument("surrogate_loss: target shape mismatch");
  }
  return 0.5 * (y - target).array().square().mean();
}

std::vector<double> grad_gamma(const GammaVec& gamma, const Matrix& x, const Matrix& w,
                               const Matrix& target, std::optional<double> step) {
  if (step && !(*step > 0.0)) throw std::invalid_argument("grad_gamma: step must be > 0");
  std::vector<double> grad(gamma.size());
  GammaVec probe = gamma;
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    const double g = gamma.values[i];
    const double h = step.value_or(1e-5 * std::max(1.0, std::abs(g)));
    probe.values[i] = g + h;
    const double up = surrogate_loss(probe, x, w, target);
    probe.values[i] = g - h;
    const double down = surrogate_loss(probe, x, w, target);
    probe.values[i] = g;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::runtime_error("grad_gamma: non-finite loss at coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

GammaVec sgd_step(const GammaVec& gamma, std::span<const double> grad, double eta) {
  if (grad.size() != gamma.size()) throw std::invalid_argument("sgd_step: size mismatch");
  GammaVec out = gamma;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] -= eta * grad[i];
  return out;
}

RegressionFit fit_loglog(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) throw std::invalid_argument("fit_loglog: need at least two points");
  std::set<double> xs;
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0) || !std::isfinite(x) || !std::isfinite(y)) {
      throw std::invalid_argument("fit_loglog: coordinates must be finite and positive");
    }
    xs.insert(x);
  }
  if (xs.size() < 2) throw std::invalid_argument("fit_loglog: need two distinct x values");

  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : points) {
    mx += std::log(x);
    my += std::log(y);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : points) {
    const double dx = std::log(x) - mx;
    const double dy = std::log(y) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  RegressionFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  // A constant y is fit perfectly.
  fit.r2 = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  return fit;
}

void UpdateNormConfig::validate() const {
  std::set<double> distinct;
  for (double c : scales) {
    if (!(std::isfinite(c) && c > 0.0)) throw std::invalid_argument("scales must be positive");
    distinct.insert(c);
  }
  if (distinct.size() < 3) throw std::invalid_argument("need at least 3 distinct scales");
  if (width < 2) throw std::invalid_argument("width must be at least 2");
  if (batch < 2) throw std::invalid_argument("batch must be at least 2");
  if (!(std::isfinite(eta) && eta > 0.0)) throw std::invalid_argument("eta must be positive");
}

UpdateNormResult update_norm_experiment(const UpdateNormConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, 0);
  const Matrix x = gaussian(cfg.batch, cfg.width, 1.0, rng);
  const Matrix w = he_init(cfg.width, cfg.width, rng);
  const Matrix target = gaussian(cfg.batch, cfg.width, 1.0, rng);
  GammaVec dir;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < cfg.width; ++i) dir.values.push_back(std::abs(normal(rng)) + 0.1);
  dir = dir.direction();

  UpdateNormResult result;
  result.points.resize(cfg.scales.size());
  parallel_for(cfg.scales.size(), [&](std::size_t k) {
    const double c = cfg.scales[k];
    const GammaVec g0 = dir.scaled(c);
    const auto grad = grad_gamma(g0, x, w, target);
    const GammaVec d1 = sgd_step(g0, grad, cfg.eta).direction();
    double sq = 0.0;
    for (std::size_t i = 0; i < d1.size(); ++i) {
      const double d = d1.values[i] - dir.values[i];
      sq += d * d;
    }
    result.points[k] = {c, std::sqrt(sq)};
  });

  std::vector<std::pair<double, double>> pts;
  for (const auto& p : result.points) {
    if (!(p.update_norm > 0.0)) {
      throw std::runtime_error("update_norm_experiment: zero update at scale " +
                               format_number(p.scale));
    }
    pts.emplace_back(p.scale, p.update_norm);
  }
  result.fit = fit_loglog(pts);
  return result;
}

ordered_json experiment_document(const UpdateNormResult& result) {
  ordered_json doc;
  ordered_json pts = ordered_json::array();
  for (const auto& p : result.points) {
    pts.push_back(ordered_json{{"scale", p.scale}, {"update_norm", p.update_norm}});
  }
  doc["points"] = std::move(pts);
  doc["fit"] = ordered_json{{"slope", result.fit.slope},
                            {"intercept", result.fit.intercept},
                            {"r2", result.fit.r2}};
  return doc;
}

std::string experiment_to_json(const UpdateNormResult& result) {
  return dump_json(experiment_document(result));
}

}  // namespace gammaguard
