// SPDX-License-Identifier: Apache-2.0
//
// Effective learning rate of a norm gamma. The intermediate block
// y = N[W ReLU(Gamma x)] is invariant to the scale of Gamma, so the gradient
// scales as 1/|Gamma| and one SGD step moves the direction Gamma/|Gamma| by
// an amount proportional to eta/|Gamma|^2.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gammaguard/json_out.hpp"
#include "gammaguard/simkernel.hpp"

namespace gammaguard {

/// Diagonal of Gamma.
struct GammaVec {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double norm() const;
  GammaVec scaled(double c) const;
  /// values / norm(); throws std::domain_error when the norm is zero.
  GammaVec direction() const;
};

/// Scale columns by gamma, ReLU, multiply by w, then standardize every column
/// exactly (mean 0, biased variance 1).
Matrix intermediate_forward(const Matrix& x, const GammaVec& gamma, const Matrix& w);

/// Half the mean squared error between intermediate_forward and `target`.
double surrogate_loss(const GammaVec& gamma, const Matrix& x, const Matrix& w,
                      const Matrix& target);

/// Central differences. Default step for coordinate i: 1e-5 * max(1, |gamma_i|).
std::vector<double> grad_gamma(const GammaVec& gamma, const Matrix& x, const Matrix& w,
                               const Matrix& target, std::optional<double> step = std::nullopt);

/// gamma - eta * grad, elementwise.
GammaVec sgd_step(const GammaVec& gamma, std::span<const double> grad, double eta);

struct RegressionFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares of ln y on ln x. Needs two distinct x values and
/// strictly positive coordinates.
RegressionFit fit_loglog(std::span<const std::pair<double, double>> points);

struct UpdateNormConfig {
  std::vector<double> scales = {0.5, 1.0, 2.0, 4.0, 8.0};
  int width = 64;
  int batch = 1024;
  double eta = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct UpdateNormPoint {
  double scale = 0.0;
  double update_norm = 0.0;
};

struct UpdateNormResult {
  std::vector<UpdateNormPoint> points;  // in `scales` order
  RegressionFit fit;
};

/// For every scale c: Gamma_0 = c * d with a shared unit direction d, one SGD
/// step on the surrogate loss, renormalize, record |d_1 - d_0|. x, W, target
/// and d are drawn once from `seed` and reused for every scale.
UpdateNormResult update_norm_experiment(const UpdateNormConfig& cfg);

/// {"points": [{"scale","update_norm"}], "fit": {"slope","intercept","r2"}}
ordered_json experiment_document(const UpdateNormResult& result);
std::string experiment_to_json(const UpdateNormResult& result);

}  // namespace gammaguard
