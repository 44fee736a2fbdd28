// Copyright 2026 The distpriv Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Noise mechanisms for distribution privacy and their calibration.
//
// Every calibration returns a NoisePlan: a fully resolved description of
// the noise to add plus the parameters it was derived from. `apply` turns a
// plan and a query value into a release.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "distpriv/error.hpp"
#include "distpriv/model.hpp"
#include "distpriv/random.hpp"

namespace distpriv {

enum class NoiseKind { kLaplace, kGaussian };

inline const char* to_string(NoiseKind kind) {
  return kind == NoiseKind::kLaplace ? "laplace" : "gaussian";
}

struct NoNoise {};

// Independent Laplace noise with the same scale on every axis.
struct LaplaceIid {
  double scale = 0.0;
};

// Independent Gaussian noise with the same standard deviation on every axis.
struct GaussianIid {
  double sigma = 0.0;
};

// Correlated Gaussian noise. `factor` has columns sqrt(lambda_k) v_k so that
// factor * factor^T == cov.
struct GaussianCov {
  Matrix cov;
  Matrix factor;
};

// A single scalar draw Y added along the unit vector `direction`.
struct ScalarAlongDirection {
  NoiseKind distribution = NoiseKind::kGaussian;
  double scale = 0.0;
  Vector direction;
};

using NoiseShape =
    std::variant<NoNoise, LaplaceIid, GaussianIid, GaussianCov,
                 ScalarAlongDirection>;

struct Provenance {
  std::string mechanism;
  std::map<std::string, double> parameters;
  std::vector<std::string> warnings;
};

inline Matrix gaussian_factor(const Matrix& cov) {
  detail::require(is_psd(cov), ErrorCode::kParameter,
                  "noise covariance must be positive semi-definite");
  const auto eig = eigendecompose(cov);
  Matrix factor(cov.rows(), cov.cols());
  for (std::size_t k = 0; k < eig.size(); ++k) {
    factor.col(static_cast<Eigen::Index>(k)) =
        std::sqrt(std::max(0.0, eig[k].value)) * eig[k].vector;
  }
  return factor;
}

class NoisePlan {
 public:
  static NoisePlan none(Provenance provenance = {"none", {}, {}}) {
    return NoisePlan(NoNoise{}, std::move(provenance));
  }

  static NoisePlan laplace_iid(double scale, Provenance provenance) {
    detail::require(std::isfinite(scale) && scale >= 0.0, ErrorCode::kParameter,
                    "Laplace scale must be finite and nonnegative");
    return NoisePlan(LaplaceIid{scale}, std::move(provenance));
  }

  static NoisePlan gaussian_iid(double sigma, Provenance provenance) {
    detail::require(std::isfinite(sigma) && sigma >= 0.0, ErrorCode::kParameter,
                    "Gaussian sigma must be finite and nonnegative");
    return NoisePlan(GaussianIid{sigma}, std::move(provenance));
  }

  static NoisePlan gaussian_cov(Matrix cov, Provenance provenance) {
    detail::require(cov.rows() == cov.cols() && cov.rows() > 0,
                    ErrorCode::kParameter, "noise covariance must be square");
    detail::require(cov.allFinite(), ErrorCode::kParameter,
                    "noise covariance not finite");
    Matrix factor = gaussian_factor(cov);
    return NoisePlan(GaussianCov{std::move(cov), std::move(factor)},
                     std::move(provenance));
  }

  static NoisePlan along_direction(NoiseKind distribution, double scale,
                                   Vector direction, Provenance provenance) {
    detail::require(std::isfinite(scale) && scale >= 0.0, ErrorCode::kParameter,
                    "directional scale must be finite and nonnegative");
    detail::require(direction.size() > 0 &&
                        std::abs(direction.norm() - 1.0) <= 1e-9,
                    ErrorCode::kParameter, "direction must be a unit vector");
    return NoisePlan(
        ScalarAlongDirection{distribution, scale, std::move(direction)},
        std::move(provenance));
  }

  const NoiseShape& shape() const { return shape_; }
  const Provenance& provenance() const { return provenance_; }

  bool is_none() const { return std::holds_alternative<NoNoise>(shape_); }

  // Noise covariance when the query has dimension m.
  Matrix covariance(Eigen::Index m) const {
    return std::visit(
        [m](const auto& s) -> Matrix {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, NoNoise>) {
            return Matrix::Zero(m, m);
          } else if constexpr (std::is_same_v<T, LaplaceIid>) {
            return 2.0 * s.scale * s.scale * Matrix::Identity(m, m);
          } else if constexpr (std::is_same_v<T, GaussianIid>) {
            return s.sigma * s.sigma * Matrix::Identity(m, m);
          } else if constexpr (std::is_same_v<T, GaussianCov>) {
            return s.cov;
          } else {
            const double var = s.distribution == NoiseKind::kLaplace
                                   ? 2.0 * s.scale * s.scale
                                   : s.scale * s.scale;
            return var * s.direction * s.direction.transpose();
          }
        },
        shape_);
  }

 private:
  NoisePlan(NoiseShape shape, Provenance provenance)
      : shape_(std::move(shape)), provenance_(std::move(provenance)) {}

  NoiseShape shape_;
  Provenance provenance_;
};

struct RelaxedBudget {
  double epsilon_prime = 0.0;
  double delta_prime = 0.0;
  std::optional<double> extra_noise_scale;
};

struct AuditReport {
  double estimated_violation = 0.0;
  std::size_t trials = 0;
  std::string event_family;
  std::string worst_event;
};

// ---------------------------------------------------------------------------
// Samplers

inline Vector sample_laplace_vec(double scale, Eigen::Index m, Rng& rng) {
  detail::require(std::isfinite(scale) && scale > 0.0, ErrorCode::kParameter,
                  "Laplace scale must be positive");
  detail::require(m > 0, ErrorCode::kParameter, "dimension must be positive");
  Vector out(m);
  for (Eigen::Index i = 0; i < m; ++i) out(i) = laplace_draw(rng, scale);
  return out;
}

inline Vector standard_normal_vec(Eigen::Index m, Rng& rng) {
  Vector z(m);
  for (Eigen::Index i = 0; i < m; ++i) z(i) = standard_normal(rng);
  return z;
}

inline Vector sample_gaussian_cov(const Matrix& cov, Rng& rng) {
  detail::require(cov.rows() == cov.cols() && cov.rows() > 0,
                  ErrorCode::kParameter, "covariance must be square");
  const Matrix factor = gaussian_factor(cov);
  return factor * standard_normal_vec(cov.rows(), rng);
}

// ---------------------------------------------------------------------------
// Calibration

namespace detail {

inline Provenance provenance(std::string mechanism, const PrivacyParams& params) {
  Provenance p;
  p.mechanism = std::move(mechanism);
  p.parameters["epsilon"] = params.epsilon;
  p.parameters["delta"] = params.delta;
  return p;
}

inline void warn_gaussian_epsilon(Provenance& p, double epsilon) {
  if (epsilon >= 1.0) {
    p.warnings.push_back(
        "epsilon >= 1: the Gaussian calibration is only guaranteed for "
        "epsilon in (0,1)");
  }
}

inline void require_unit(const Vector& v, Eigen::Index m) {
  require(v.size() == m, ErrorCode::kParameter,
          "direction has the wrong dimension");
  require(std::abs(v.norm() - 1.0) <= 1e-9, ErrorCode::kParameter,
          "direction must be a unit vector");
}

inline void require_parallel(const PairFamily& family, const Vector& v,
                             double tolerance) {
  for (const auto& pair : family.pairs()) {
    const double angle = angle_to_direction(family.mean_gap(pair), v);
    if (angle > tolerance) {
      std::ostringstream msg;
      msg << "mean gap of pair (" << to_string(family.label(pair.first))
          << ", " << to_string(family.label(pair.second))
          << ") is " << angle << " rad off the noise direction";
      throw AssumptionViolation(msg.str(), pair);
    }
  }
}

}  // namespace detail

inline constexpr double kDirectionTolerance = 1e-6;
inline constexpr double kEigenbasisTolerance = 0.1;

// Laplace noise scaled to the worst infinity-Wasserstein distance.
inline NoisePlan calibrate_wasserstein(double delta_w, const PrivacyParams& params) {
  detail::require(delta_w >= 0.0 && std::isfinite(delta_w), ErrorCode::kParameter,
                  "Wasserstein sensitivity must be finite and nonnegative");
  auto p = detail::provenance("wasserstein", params);
  p.parameters["delta"] = 0.0;
  p.parameters["delta_w"] = delta_w;
  return NoisePlan::laplace_iid(delta_w / params.epsilon, std::move(p));
}

// Laplace noise scaled to a (w, delta)-closeness radius.
inline NoisePlan calibrate_approx_wasserstein(double w, const PrivacyParams& params) {
  detail::require(w >= 0.0 && std::isfinite(w), ErrorCode::kParameter,
                  "closeness radius must be finite and nonnegative");
  auto p = detail::provenance("approx_wasserstein", params);
  p.parameters["w"] = w;
  return NoisePlan::laplace_iid(w / params.epsilon, std::move(p));
}

// Radius c with P(||X - mean||_1 > c) <= delta / 2 for X ~ model, from a
// per-axis union bound.
inline double l1_concentration_radius(const GaussianModel& model, double delta) {
  detail::require(delta > 0.0 && delta < 1.0, ErrorCode::kParameter,
                  "delta must lie in (0,1)");
  const auto m = static_cast<double>(model.dimension());
  const boost::math::normal standard;
  const double z = boost::math::quantile(standard, 1.0 - delta / (4.0 * m));
  return z * model.cov().diagonal().cwiseMax(0.0).cwiseSqrt().sum();
}

// Expected Value Mechanism: Laplace scale delta_E1/eps, or Gaussian
// sigma = c * delta_E2 / eps.
inline NoisePlan calibrate_expm(const PairFamily& family,
                                const PrivacyParams& params, NoiseKind noise) {
  if (noise == NoiseKind::kLaplace) {
    const double d1 = delta_e(family, Norm::kL1);
    auto p = detail::provenance("expm_laplace", params);
    p.parameters["delta"] = 0.0;
    p.parameters["delta_e1"] = d1;
    return NoisePlan::laplace_iid(d1 / params.epsilon, std::move(p));
  }
  detail::require(params.delta > 0.0, ErrorCode::kParameter,
                  "Gaussian mechanism needs delta > 0");
  const double d2 = delta_e(family, Norm::kL2);
  const double c = gaussian_multiplier(params.delta);
  auto p = detail::provenance("expm_gaussian", params);
  p.parameters["delta_e2"] = d2;
  p.parameters["c"] = c;
  detail::warn_gaussian_epsilon(p, params.epsilon);
  return NoisePlan::gaussian_iid(c * d2 / params.epsilon, std::move(p));
}

inline NoisePlan calibrate_directional(const PairFamily& family, const Vector& v,
                                       const PrivacyParams& params,
                                       NoiseKind noise) {
  detail::require_unit(v, family.dimension());
  detail::require_parallel(family, v, kDirectionTolerance);
  const double d2 = delta_e(family, Norm::kL2);
  if (noise == NoiseKind::kLaplace) {
    auto p = detail::provenance("directional_laplace", params);
    p.parameters["delta"] = 0.0;
    p.parameters["delta_e2"] = d2;
    return NoisePlan::along_direction(NoiseKind::kLaplace, d2 / params.epsilon,
                                      v, std::move(p));
  }
  detail::require(params.delta > 0.0, ErrorCode::kParameter,
                  "Gaussian mechanism needs delta > 0");
  const double c = gaussian_multiplier(params.delta);
  auto p = detail::provenance("directional_gaussian", params);
  p.parameters["delta_e2"] = d2;
  p.parameters["c"] = c;
  detail::warn_gaussian_epsilon(p, params.epsilon);
  return NoisePlan::along_direction(NoiseKind::kGaussian, c * d2 / params.epsilon,
                                    v, std::move(p));
}

// True when (mu_i - mu_j)^T (Sigma_i + added)^{-1} (mu_i - mu_j) <= (eps/c)^2
// for every pair. Assumes each pair shares its covariance.
inline bool added_cov_check(const PairFamily& family, const Matrix& sigma_add,
                            const PrivacyParams& params) {
  const auto m = family.dimension();
  detail::require(sigma_add.rows() == m && sigma_add.cols() == m,
                  ErrorCode::kParameter, "added covariance has the wrong shape");
  const double c = gaussian_multiplier(params.delta);
  const double bound = (params.epsilon / c) * (params.epsilon / c);
  for (const auto& pair : family.pairs()) {
    const Matrix total = family.model(pair.first).cov() + sigma_add;
    if (inverse_quadratic_form(total, family.mean_gap(pair)) > bound) {
      return false;
    }
  }
  return true;
}

// True when the query can be released as is.
inline bool no_noise_check(const PairFamily& family, const PrivacyParams& params) {
  const auto m = family.dimension();
  return added_cov_check(family, Matrix::Zero(m, m), params);
}

// True when every catalog covariance plus the added noise has minimum
// eigenvalue at least (c * delta_E2 / eps)^2.
inline bool min_eig_check(const PairFamily& family, const Matrix& sigma_add,
                          const PrivacyParams& params) {
  const auto m = family.dimension();
  detail::require(sigma_add.rows() == m && sigma_add.cols() == m,
                  ErrorCode::kParameter, "added covariance has the wrong shape");
  const double c = gaussian_multiplier(params.delta);
  const double target = std::pow(c * delta_e(family, Norm::kL2) / params.epsilon, 2);
  for (const auto& entry : family.catalog()) {
    const double lowest = min_eigenvalue(entry.model.cov() + sigma_add);
    if (lowest < target - 1e-9 * std::max(1.0, target)) return false;
  }
  return true;
}

struct EigPlanOptions {
  std::size_t reference = 0;
  double basis_tolerance = kEigenbasisTolerance;
};

// Eigenvector Gaussian Mechanism. The eigenvectors v_k of the reference
// model's covariance are the noise axes; the variance along v_k is
// max over models of max(0, s^2 - v_k^T Sigma v_k) with s = c delta_E2/eps.
inline NoisePlan eig_plan(const PairFamily& family, const PrivacyParams& params,
                          const EigPlanOptions& options = {}) {
  detail::require(params.delta > 0.0, ErrorCode::kParameter,
                  "Gaussian mechanism needs delta > 0");
  const double residual = common_eigenbasis_residual(family, options.reference);
  if (residual > options.basis_tolerance) {
    std::ostringstream msg;
    msg << "covariances do not share an eigenbasis (residual " << residual
        << " > " << options.basis_tolerance << ")";
    throw AssumptionViolation(msg.str());
  }
  const double c = gaussian_multiplier(params.delta);
  const double d2 = delta_e(family, Norm::kL2);
  const double target = std::pow(c * d2 / params.epsilon, 2);
  const auto basis = eigendecompose(family.model(options.reference).cov());
  const auto m = family.dimension();
  Matrix cov = Matrix::Zero(m, m);
  auto p = detail::provenance("eigenvector_gaussian", params);
  p.parameters["delta_e2"] = d2;
  p.parameters["c"] = c;
  p.parameters["target_variance"] = target;
  p.parameters["eigenbasis_residual"] = residual;
  for (std::size_t k = 0; k < basis.size(); ++k) {
    const Vector& v = basis[k].vector;
    double variance = 0.0;
    for (const auto& entry : family.catalog()) {
      const double lambda = v.dot(entry.model.cov() * v);
      variance = std::max(variance, target - lambda);
    }
    cov += variance * v * v.transpose();
    p.parameters["sigma_sq_" + std::to_string(k)] = variance;
  }
  cov = 0.5 * (cov + cov.transpose());
  detail::warn_gaussian_epsilon(p, params.epsilon);
  return NoisePlan::gaussian_cov(std::move(cov), std::move(p));
}

// Smallest noise variance along v (plus a small bump) that makes
// Sigma + (sigma^2 - (alpha c/eps)^2) v v^T positive definite. The
// determinant of that matrix vanishes at beta = -1 / (v^T Sigma^{-1} v).
inline double dau_sigma(const GaussianModel& model, double alpha, const Vector& v,
                        const PrivacyParams& params) {
  detail::require_unit(v, model.dimension());
  const double c = gaussian_multiplier(params.delta);
  const double required = std::pow(alpha * c / params.epsilon, 2);
  const double bump = 1e-6 * required + 1e-12;
  Eigen::LLT<Matrix> llt(ridge_repair(model.cov()));
  detail::require(llt.info() == Eigen::Success, ErrorCode::kNumeric,
                  "covariance is singular after ridge repair");
  const double precision_along_v = v.dot(llt.solve(v));
  detail::require(std::isfinite(precision_along_v) && precision_along_v > 0.0,
                  ErrorCode::kNumeric, "covariance is numerically singular");
  return std::max(bump, required - 1.0 / precision_along_v + bump);
}

// Directional Gaussian mechanism crediting the data's own variance along v.
inline NoisePlan dau_plan(const PairFamily& family, const Vector& v,
                          const PrivacyParams& params) {
  detail::require(params.delta > 0.0, ErrorCode::kParameter,
                  "Gaussian mechanism needs delta > 0");
  detail::require_unit(v, family.dimension());
  detail::require_parallel(family, v, kDirectionTolerance);
  double variance = 0.0;
  for (const auto& pair : family.pairs()) {
    const double alpha = family.mean_gap(pair).dot(v);
    variance = std::max(variance,
                        dau_sigma(family.model(pair.first), alpha, v, params));
  }
  auto p = detail::provenance("directional_adversarial_uncertainty", params);
  p.parameters["c"] = gaussian_multiplier(params.delta);
  p.parameters["delta_e2"] = delta_e(family, Norm::kL2);
  p.parameters["sigma_sq"] = variance;
  detail::warn_gaussian_epsilon(p, params.epsilon);
  return NoisePlan::along_direction(NoiseKind::kGaussian, std::sqrt(variance), v,
                                    std::move(p));
}

enum class Aggregate { kAverage, kCount };

struct ComponentBound {
  double lo = 0.0;
  double hi = 1.0;
  Aggregate aggregate = Aggregate::kAverage;
};

// Norm of the per-component change caused by replacing one record in a
// subset of n records: (hi - lo)/n for averages, 1 for counts.
inline double per_record_sensitivity(std::span<const ComponentBound> bounds,
                                     long n, Norm norm) {
  detail::require(n > 0, ErrorCode::kParameter, "subset size must be positive");
  Vector change(static_cast<Eigen::Index>(bounds.size()));
  for (std::size_t k = 0; k < bounds.size(); ++k) {
    const auto& b = bounds[k];
    detail::require(b.hi >= b.lo, ErrorCode::kParameter,
                    "component bound has hi < lo");
    change(static_cast<Eigen::Index>(k)) =
        b.aggregate == Aggregate::kCount ? 1.0 : (b.hi - b.lo) / static_cast<double>(n);
  }
  return vector_norm(change, norm);
}

// Group differential privacy baseline for groups of k records.
inline NoisePlan group_dp_calibrate(double per_record_sens, long k,
                                    const PrivacyParams& params, NoiseKind noise) {
  detail::require(k >= 1, ErrorCode::kParameter, "group size must be at least 1");
  detail::require(per_record_sens >= 0.0 && std::isfinite(per_record_sens),
                  ErrorCode::kParameter, "sensitivity must be nonnegative");
  const double group_sens = static_cast<double>(k) * per_record_sens;
  if (noise == NoiseKind::kLaplace) {
    auto p = detail::provenance("group_dp_laplace", params);
    p.parameters["delta"] = 0.0;
    p.parameters["group_size"] = static_cast<double>(k);
    p.parameters["sensitivity"] = per_record_sens;
    return NoisePlan::laplace_iid(group_sens / params.epsilon, std::move(p));
  }
  detail::require(params.delta > 0.0, ErrorCode::kParameter,
                  "Gaussian mechanism needs delta > 0");
  const double c = gaussian_multiplier(params.delta);
  auto p = detail::provenance("group_dp_gaussian", params);
  p.parameters["group_size"] = static_cast<double>(k);
  p.parameters["sensitivity"] = per_record_sens;
  p.parameters["c"] = c;
  detail::warn_gaussian_epsilon(p, params.epsilon);
  return NoisePlan::gaussian_iid(c * group_sens / params.epsilon, std::move(p));
}

// Budget when the models are only lambda-close in eta-approximate
// max-divergence to the true query distributions.
inline RelaxedBudget relaxed_budget_maxdiv(const PrivacyParams& params,
                                           double lambda, double eta) {
  detail::require(lambda >= 0.0 && eta >= 0.0, ErrorCode::kParameter,
                  "lambda and eta must be nonnegative");
  RelaxedBudget out;
  out.epsilon_prime = params.epsilon + 2.0 * lambda;
  out.delta_prime = (1.0 + std::exp(params.epsilon + lambda)) * eta +
                    std::exp(lambda) * params.delta;
  return out;
}

// Budget when the models are within infinity-Wasserstein distance w_dev of
// the truth and extra Laplace(w_dev / lambda) noise is added per axis.
inline RelaxedBudget relaxed_budget_wasserstein(const PrivacyParams& params,
                                                double lambda, double w_dev) {
  detail::require(lambda >= 0.0 && w_dev >= 0.0, ErrorCode::kParameter,
                  "lambda and the Wasserstein deviation must be nonnegative");
  detail::require(lambda > 0.0 || w_dev == 0.0, ErrorCode::kParameter,
                  "lambda must be positive when the deviation is nonzero");
  RelaxedBudget out;
  out.epsilon_prime = params.epsilon + 2.0 * lambda;
  out.delta_prime = std::exp(lambda) * params.delta;
  out.extra_noise_scale = w_dev == 0.0 ? 0.0 : w_dev / lambda;
  return out;
}

// ---------------------------------------------------------------------------
// Release

inline Vector apply(const NoisePlan& plan, const Vector& query_value, Rng& rng) {
  const auto m = query_value.size();
  return std::visit(
      [&](const auto& s) -> Vector {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, NoNoise>) {
          return query_value;
        } else if constexpr (std::is_same_v<T, LaplaceIid>) {
          Vector out = query_value;
          for (Eigen::Index i = 0; i < m; ++i) out(i) += laplace_draw(rng, s.scale);
          return out;
        } else if constexpr (std::is_same_v<T, GaussianIid>) {
          Vector out = query_value;
          for (Eigen::Index i = 0; i < m; ++i) out(i) += s.sigma * standard_normal(rng);
          return out;
        } else if constexpr (std::is_same_v<T, GaussianCov>) {
          detail::require(s.cov.rows() == m, ErrorCode::kInput,
                          "noise covariance does not match the query dimension");
          return query_value + s.factor * standard_normal_vec(m, rng);
        } else {
          detail::require(s.direction.size() == m, ErrorCode::kInput,
                          "noise direction does not match the query dimension");
          const double y = s.distribution == NoiseKind::kLaplace
                               ? laplace_draw(rng, s.scale)
                               : s.scale * standard_normal(rng);
          Vector out = query_value;
          for (Eigen::Index i = 0; i < m; ++i) {
            if (s.direction(i) != 0.0) out(i) += y * s.direction(i);
          }
          return out;
        }
      },
      plan.shape());
}

// ---------------------------------------------------------------------------
// Empirical audit

namespace detail {

struct EventCount {
  double p_i;
  double p_j;
};

inline double slack_violation(double p_i, double p_j, double n, double e_eps,
                              double delta) {
  const double sd = std::sqrt(p_i * (1.0 - p_i) / n +
                              e_eps * e_eps * p_j * (1.0 - p_j) / n);
  return p_i - e_eps * p_j - delta - 3.0 * sd;
}

}  // namespace detail

inline constexpr int kAuditQuantiles = 41;
inline constexpr std::size_t kMinAuditTrials = 10000;

// Monte Carlo check of the distribution-privacy inequality for one ordered
// pair. The reported violation is the largest lower confidence bound
// (3 binomial standard deviations) of P_i(S) - e^eps P_j(S) - delta over a
// fixed event family, so it can only under-estimate the true violation.
inline AuditReport audit(const NoisePlan& plan, const GaussianModel& model_i,
                         const GaussianModel& model_j, const PrivacyParams& params,
                         std::size_t trials, Rng& rng) {
  detail::require(trials >= kMinAuditTrials, ErrorCode::kParameter,
                  "audit needs at least 10000 trials");
  detail::require(model_i.dimension() == model_j.dimension(), ErrorCode::kInput,
                  "audited models differ in dimension");
  const auto m = model_i.dimension();
  const Matrix factor_i = gaussian_factor(model_i.cov());
  const Matrix factor_j = gaussian_factor(model_j.cov());
  std::vector<Vector> out_i(trials), out_j(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    out_i[t] = apply(plan, model_i.mean() + factor_i * standard_normal_vec(m, rng), rng);
    out_j[t] = apply(plan, model_j.mean() + factor_j * standard_normal_vec(m, rng), rng);
  }

  std::vector<std::pair<std::string, Vector>> directions;
  for (Eigen::Index a = 0; a < m; ++a) {
    directions.emplace_back("axis " + std::to_string(a), Vector::Unit(m, a));
  }
  const Vector gap = model_i.mean() - model_j.mean();
  if (gap.norm() > 0.0) {
    const Matrix total =
        ridge_repair(0.5 * (model_i.cov() + model_j.cov()) + plan.covariance(m));
    Eigen::LDLT<Matrix> ldlt(total);
    Vector w = ldlt.solve(gap);
    if (!w.allFinite() || w.norm() == 0.0) w = gap;
    directions.emplace_back("likelihood ratio", w.normalized());
  }

  const double n = static_cast<double>(trials);
  const double e_eps = std::exp(params.epsilon);
  AuditReport report;
  report.trials = trials;
  report.event_family =
      "half-spaces {x.w <= t} and {x.w > t} for every axis and the "
      "likelihood-ratio direction at " + std::to_string(kAuditQuantiles) +
      " pooled quantiles; a lower bound on the true violation";
  report.estimated_violation = -std::numeric_limits<double>::infinity();
  std::vector<double> proj_i(trials), proj_j(trials), pooled;
  for (const auto& [name, w] : directions) {
    for (std::size_t t = 0; t < trials; ++t) {
      proj_i[t] = out_i[t].dot(w);
      proj_j[t] = out_j[t].dot(w);
    }
    std::sort(proj_i.begin(), proj_i.end());
    std::sort(proj_j.begin(), proj_j.end());
    pooled.assign(proj_i.begin(), proj_i.end());
    pooled.insert(pooled.end(), proj_j.begin(), proj_j.end());
    std::sort(pooled.begin(), pooled.end());
    for (int q = 1; q <= kAuditQuantiles; ++q) {
      const auto idx = static_cast<std::size_t>(
          static_cast<double>(q) / (kAuditQuantiles + 1) * pooled.size());
      const double threshold = pooled[std::min(idx, pooled.size() - 1)];
      const double below_i =
          static_cast<double>(std::upper_bound(proj_i.begin(), proj_i.end(), threshold) -
                              proj_i.begin()) / n;
      const double below_j =
          static_cast<double>(std::upper_bound(proj_j.begin(), proj_j.end(), threshold) -
                              proj_j.begin()) / n;
      const std::pair<double, double> events[2] = {{below_i, below_j},
                                                   {1.0 - below_i, 1.0 - below_j}};
      for (int side = 0; side < 2; ++side) {
        const double v = detail::slack_violation(events[side].first, events[side].second,
                                                 n, e_eps, params.delta);
        if (v > report.estimated_violation) {
          report.estimated_violation = v;
          std::ostringstream desc;
          desc << name << (side == 0 ? " <= " : " > ") << threshold;
          report.worst_event = desc.str();
        }
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const NoisePlan& plan) {
  json shape = std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, NoNoise>) {
          return json{{"kind", "none"}};
        } else if constexpr (std::is_same_v<T, LaplaceIid>) {
          return json{{"kind", "laplace_iid"}, {"scale", s.scale}};
        } else if constexpr (std::is_same_v<T, GaussianIid>) {
          return json{{"kind", "gaussian_iid"}, {"sigma", s.sigma}};
        } else if constexpr (std::is_same_v<T, GaussianCov>) {
          return json{{"kind", "gaussian_cov"}, {"cov", matrix_to_json(s.cov)}};
        } else {
          return json{{"kind", "scalar_along_direction"},
                      {"distribution", to_string(s.distribution)},
                      {"scale", s.scale},
                      {"direction", vector_to_json(s.direction)}};
        }
      },
      plan.shape());
  shape["provenance"] = json{{"mechanism", plan.provenance().mechanism},
                             {"parameters", plan.provenance().parameters},
                             {"warnings", plan.provenance().warnings}};
  return shape;
}

inline NoisePlan noise_plan_from_json(const json& j) {
  try {
    Provenance p;
    if (j.contains("provenance")) {
      const auto& pj = j.at("provenance");
      p.mechanism = pj.value("mechanism", "");
      if (pj.contains("parameters")) {
        p.parameters = pj.at("parameters").get<std::map<std::string, double>>();
      }
      if (pj.contains("warnings")) {
        p.warnings = pj.at("warnings").get<std::vector<std::string>>();
      }
    }
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "none") return NoisePlan::none(std::move(p));
    if (kind == "laplace_iid") {
      return NoisePlan::laplace_iid(j.at("scale").get<double>(), std::move(p));
    }
    if (kind == "gaussian_iid") {
      return NoisePlan::gaussian_iid(j.at("sigma").get<double>(), std::move(p));
    }
    if (kind == "gaussian_cov") {
      return NoisePlan::gaussian_cov(matrix_from_json(j.at("cov")), std::move(p));
    }
    if (kind == "scalar_along_direction") {
      const auto dist = j.at("distribution").get<std::string>();
      return NoisePlan::along_direction(
          dist == "laplace" ? NoiseKind::kLaplace : NoiseKind::kGaussian,
          j.at("scale").get<double>(), vector_from_json(j.at("direction")),
          std::move(p));
    }
    detail::fail(ErrorCode::kFormat, "unknown noise plan kind '" + kind + "'");
  } catch (const json::exception& e) {
    detail::fail(ErrorCode::kFormat, std::string("bad noise plan: ") + e.what());
  }
}

inline json to_json(const RelaxedBudget& b) {
  json out{{"epsilon_prime", b.epsilon_prime}, {"delta_prime", b.delta_prime}};
  out["extra_noise_scale"] =
      b.extra_noise_scale ? json(*b.extra_noise_scale) : json(nullptr);
  return out;
}

inline json to_json(const AuditReport& r) {
  return json{{"estimated_violation", r.estimated_violation},
              {"trials", r.trials},
              {"event_family", r.event_family},
              {"worst_event", r.worst_event}};
}

}  // namespace distpriv
