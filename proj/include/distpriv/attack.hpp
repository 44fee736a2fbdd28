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

// Property inference by shadow datasets and a logistic meta-classifier.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "distpriv/dataio.hpp"
#include "distpriv/error.hpp"
#include "distpriv/mechanisms.hpp"
#include "distpriv/model.hpp"
#include "distpriv/random.hpp"

namespace distpriv {

struct ShadowConfig {
  std::size_t n = 100;
  std::size_t shadow_count = 200;
  std::size_t test_count = 200;
  std::size_t repetitions = 50;
  double p_low = 0.45;
  double p_high = 0.55;
  std::uint64_t seed = 0;
  bool noise_shadow = true;
  bool standardize = true;

  void validate() const {
    detail::require(n > 0, ErrorCode::kConfig, "subset size must be positive");
    detail::require(shadow_count > 0 && shadow_count % 2 == 0, ErrorCode::kConfig,
                    "shadow_count must be even and positive");
    detail::require(test_count > 0 && test_count % 2 == 0, ErrorCode::kConfig,
                    "test_count must be even and positive");
    detail::require(repetitions > 0, ErrorCode::kConfig,
                    "repetitions must be positive");
    detail::require(p_low >= 0.0 && p_low < p_high && p_high <= 1.0,
                    ErrorCode::kConfig, "need 0 <= p_low < p_high <= 1");
  }
};

struct LinearClassifier {
  Vector weights;
  double bias = 0.0;
  Vector feature_means;
  Vector feature_scales;

  double decision(const Vector& x) const {
    detail::require(x.size() == weights.size(), ErrorCode::kInput,
                    "feature dimension does not match the classifier");
    return weights.dot((x - feature_means).cwiseQuotient(feature_scales)) + bias;
  }

  // Ties go to class 1.
  int predict(const Vector& x) const { return decision(x) >= 0.0 ? 1 : 0; }
};

struct TrainOptions {
  bool standardize = true;
  double l2_strength = 1.0;
  double gradient_tolerance = 1e-6;
  int max_iterations = 500;
};

namespace detail {

inline double log1p_exp(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Standardized design matrix with a trailing column of ones.
inline Matrix design_matrix(std::span<const Vector> features,
                            const Vector& means, const Vector& scales) {
  const auto m = means.size();
  Matrix x(static_cast<Eigen::Index>(features.size()), m + 1);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    x.row(r).head(m) = (features[i] - means).cwiseQuotient(scales).transpose();
    x(r, m) = 1.0;
  }
  return x;
}

inline double objective(const Matrix& x, const Vector& y, const Vector& theta,
                        double l2) {
  const Vector z = x * theta;
  double f = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) f += log1p_exp(z(i)) - y(i) * z(i);
  const auto m = theta.size() - 1;
  return f + 0.5 * l2 * theta.head(m).squaredNorm();
}

}  // namespace detail

// Regularized logistic loss sum_i log(1 + e^{z_i}) - y_i z_i + l2/2 |w|^2
// of a trained classifier on raw features.
inline double logistic_objective(const LinearClassifier& clf,
                                 std::span<const Vector> features,
                                 std::span<const int> labels, double l2 = 1.0) {
  const Matrix x = detail::design_matrix(features, clf.feature_means,
                                         clf.feature_scales);
  Vector y(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    y(static_cast<Eigen::Index>(i)) = labels[i];
  }
  Vector theta(clf.weights.size() + 1);
  theta << clf.weights, clf.bias;
  return detail::objective(x, y, theta, l2);
}

// L2-regularized logistic regression by damped Newton iterations on
// standardized features (bias unpenalized).
inline LinearClassifier train_meta_classifier(std::span<const Vector> features,
                                              std::span<const int> labels,
                                              const TrainOptions& options = {}) {
  detail::require(features.size() == labels.size(), ErrorCode::kTraining,
                  "one label per feature vector required");
  detail::require(!features.empty(), ErrorCode::kTraining, "no training data");
  const auto m = features.front().size();
  std::size_t positives = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    detail::require(features[i].size() == m, ErrorCode::kTraining,
                    "feature vectors differ in dimension");
    detail::require(features[i].allFinite(), ErrorCode::kTraining,
                    "non-finite feature");
    detail::require(labels[i] == 0 || labels[i] == 1, ErrorCode::kTraining,
                    "labels must be 0 or 1");
    positives += static_cast<std::size_t>(labels[i]);
  }
  detail::require(positives >= 2 && features.size() - positives >= 2,
                  ErrorCode::kTraining, "need at least two examples of each class");

  LinearClassifier clf;
  clf.feature_means = Vector::Zero(m);
  clf.feature_scales = Vector::Ones(m);
  if (options.standardize) {
    const auto n = static_cast<double>(features.size());
    for (const auto& f : features) clf.feature_means += f;
    clf.feature_means /= n;
    Vector var = Vector::Zero(m);
    for (const auto& f : features) var += (f - clf.feature_means).cwiseAbs2();
    for (Eigen::Index k = 0; k < m; ++k) {
      const double sd = std::sqrt(var(k) / n);
      clf.feature_scales(k) = sd > 0.0 ? sd : 1.0;
    }
  }

  const Matrix x = detail::design_matrix(features, clf.feature_means,
                                         clf.feature_scales);
  Vector y(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    y(static_cast<Eigen::Index>(i)) = labels[i];
  }
  Vector penalty = Vector::Constant(m + 1, options.l2_strength);
  penalty(m) = 0.0;

  Vector theta = Vector::Zero(m + 1);
  double f = detail::objective(x, y, theta, options.l2_strength);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Vector z = x * theta;
    Vector residual(z.size()), curvature(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double s = detail::sigmoid(z(i));
      residual(i) = s - y(i);
      curvature(i) = s * (1.0 - s);
    }
    const Vector grad = x.transpose() * residual + penalty.cwiseProduct(theta);
    if (grad.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) break;
    Matrix hessian = x.transpose() * curvature.asDiagonal() * x;
    hessian.diagonal() += penalty + Vector::Constant(m + 1, 1e-12);
    const Vector step = hessian.ldlt().solve(grad);
    double t = 1.0;
    Vector next = theta - step;
    double f_next = detail::objective(x, y, next, options.l2_strength);
    while (f_next > f - 1e-4 * t * grad.dot(step) && t > 1e-10) {
      t *= 0.5;
      next = theta - t * step;
      f_next = detail::objective(x, y, next, options.l2_strength);
    }
    if (f_next > f) break;
    theta = std::move(next);
    f = f_next;
  }
  clf.weights = theta.head(m);
  clf.bias = theta(m);
  return clf;
}

inline double evaluate_attack(const LinearClassifier& clf,
                              std::span<const Vector> features,
                              std::span<const int> labels) {
  detail::require(!features.empty() && features.size() == labels.size(),
                  ErrorCode::kInput, "need matching, nonempty features and labels");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    correct += clf.predict(features[i]) == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(features.size());
}

struct LabeledFeatures {
  std::vector<Vector> features;
  std::vector<int> labels;
};

// Half the subsets at p_low (label 0), half at p_high (label 1), each a
// query value optionally passed through the plan.
inline LabeledFeatures sample_labeled_queries(const StratifiedSampler& sampler,
                                              const ShadowConfig& cfg,
                                              std::size_t count,
                                              const NoisePlan* plan, Rng& rng) {
  LabeledFeatures out;
  out.features.reserve(count);
  out.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = i < count / 2 ? 0 : 1;
    const double p = label == 0 ? cfg.p_low : cfg.p_high;
    const auto subset = sampler.sample(p, cfg.n, rng);
    Vector q = compute_query(subset);
    if (plan != nullptr) q = apply(*plan, q, rng);
    out.features.push_back(std::move(q));
    out.labels.push_back(label);
  }
  return out;
}

// One attack: train on shadow subsets from aux, score on fresh subsets
// from test. Returns the meta-classifier accuracy.
inline double run_attack_trial(const StratifiedSampler& aux,
                               const StratifiedSampler& test,
                               const ShadowConfig& cfg, const NoisePlan& plan,
                               Rng& rng) {
  cfg.validate();
  const auto shadow = sample_labeled_queries(
      aux, cfg, cfg.shadow_count, cfg.noise_shadow ? &plan : nullptr, rng);
  TrainOptions options;
  options.standardize = cfg.standardize;
  const auto clf = train_meta_classifier(shadow.features, shadow.labels, options);
  const auto held_out = sample_labeled_queries(test, cfg, cfg.test_count, &plan, rng);
  return evaluate_attack(clf, held_out.features, held_out.labels);
}

inline double run_attack_trial(const Table& aux_table, const Table& test_table,
                               Property which, const ShadowConfig& cfg,
                               const NoisePlan& plan, Rng& rng) {
  const StratifiedSampler aux(aux_table, which);
  const StratifiedSampler test(test_table, which);
  return run_attack_trial(aux, test, cfg, plan, rng);
}

// Accuracy of each repetition; repetition r draws from
// derive_seed(base_seed, {r}).
inline std::vector<double> run_attack_repetitions(const StratifiedSampler& aux,
                                                  const StratifiedSampler& test,
                                                  const ShadowConfig& cfg,
                                                  const NoisePlan& plan,
                                                  std::uint64_t base_seed) {
  std::vector<double> out;
  out.reserve(cfg.repetitions);
  for (std::size_t r = 0; r < cfg.repetitions; ++r) {
    Rng rng(derive_seed(base_seed, {r}));
    out.push_back(run_attack_trial(aux, test, cfg, plan, rng));
  }
  return out;
}

}  // namespace distpriv
