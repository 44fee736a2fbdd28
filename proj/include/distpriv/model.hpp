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

// Gaussian models of query distributions, the protected pair family, and
// the quantities the mechanisms are calibrated from.

#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "distpriv/error.hpp"

namespace distpriv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using json = nlohmann::json;

inline constexpr double kSymmetryTolerance = 1e-9;
inline constexpr double kPsdTolerance = 1e-9;
inline constexpr double kRidgeFactor = 1e-9;

// Proportions are snapped to a 1e-9 grid so that 0.5 - 0.1 / 2 and 0.45
// name the same secret.
inline double canonical_proportion(double p) {
  return std::round(p * 1e9) / 1e9;
}

struct SecretLabel {
  std::string property_id;
  double value = 0.0;

  SecretLabel() = default;
  SecretLabel(std::string id, double p)
      : property_id(std::move(id)), value(canonical_proportion(p)) {
    detail::require(!property_id.empty(), ErrorCode::kInput,
                    "secret label needs a property id");
    detail::require(value >= 0.0 && value <= 1.0, ErrorCode::kInput,
                    "secret value must lie in [0,1]");
  }

  auto operator<=>(const SecretLabel&) const = default;
  bool operator==(const SecretLabel&) const = default;
};

inline std::string to_string(const SecretLabel& label) {
  return label.property_id + "=" + json(label.value).dump();
}

struct PrivacyParams {
  double epsilon = 1.0;
  double delta = 0.0;

  PrivacyParams() = default;
  PrivacyParams(double eps, double del) : epsilon(eps), delta(del) {
    detail::require(std::isfinite(epsilon) && epsilon > 0.0,
                    ErrorCode::kParameter, "epsilon must be positive");
    detail::require(delta >= 0.0 && delta < 1.0, ErrorCode::kParameter,
                    "delta must lie in [0,1)");
  }
};

// c = sqrt(2 ln(1.25 / delta)), the Gaussian-mechanism multiplier.
inline double gaussian_multiplier(double delta) {
  detail::require(delta > 0.0 && delta < 1.0, ErrorCode::kParameter,
                  "Gaussian calibration needs delta in (0,1)");
  return std::sqrt(2.0 * std::log(1.25 / delta));
}

inline double max_abs(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline bool is_symmetric(const Matrix& a, double rel_tol = kSymmetryTolerance) {
  if (a.rows() != a.cols()) return false;
  const double scale = max_abs(a);
  return max_abs(a - a.transpose()) <= rel_tol * scale;
}

struct EigenPair {
  double value;
  Vector vector;
};

// Eigenpairs of a symmetric matrix, eigenvalues descending. Each
// eigenvector is unit length with its first nonzero component positive.
inline std::vector<EigenPair> eigendecompose(const Matrix& a) {
  detail::require(a.rows() == a.cols(), ErrorCode::kInput,
                  "eigendecompose needs a square matrix");
  detail::require(a.allFinite(), ErrorCode::kInput,
                  "eigendecompose needs finite entries");
  detail::require(is_symmetric(a), ErrorCode::kInput,
                  "eigendecompose needs a symmetric matrix");
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  detail::require(solver.info() == Eigen::Success, ErrorCode::kNumeric,
                  "eigensolver did not converge");
  const auto n = a.rows();
  std::vector<EigenPair> pairs;
  pairs.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    Vector v = solver.eigenvectors().col(k).normalized();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(v(i)) > 1e-12) {
        if (v(i) < 0) v = -v;
        break;
      }
    }
    pairs.push_back({solver.eigenvalues()(k), std::move(v)});
  }
  return pairs;
}

inline double max_eigenvalue(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return eigendecompose(a).front().value;
}

inline double min_eigenvalue(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return eigendecompose(a).back().value;
}

inline bool is_psd(const Matrix& a, double rel_tol = kPsdTolerance) {
  if (!is_symmetric(a)) return false;
  const auto eig = eigendecompose(a);
  const double top = std::max(0.0, eig.front().value);
  return eig.back().value >= -rel_tol * top;
}

// Adds kRidgeFactor * trace / m to the diagonal.
inline Matrix ridge_repair(const Matrix& cov) {
  const auto m = cov.rows();
  if (m == 0) return cov;
  const double ridge = kRidgeFactor * std::max(0.0, cov.trace()) /
                       static_cast<double>(m);
  return cov + ridge * Matrix::Identity(m, m);
}

// g^T cov^{-1} g on the ridge-repaired covariance. Directions with zero
// variance make the form infinite unless g has no component along them.
inline double inverse_quadratic_form(const Matrix& cov, const Vector& g) {
  const double gnorm = g.norm();
  if (gnorm == 0.0) return 0.0;
  const auto eig = eigendecompose(ridge_repair(cov));
  const double top = std::max(0.0, eig.front().value);
  double q = 0.0;
  for (const auto& [lambda, v] : eig) {
    const double proj = v.dot(g);
    if (lambda <= 1e-15 * top || lambda <= 0.0) {
      if (std::abs(proj) > 1e-12 * gnorm) {
        return std::numeric_limits<double>::infinity();
      }
      continue;
    }
    q += proj * proj / lambda;
  }
  return q;
}

// Gaussian approximation N(mean, cov) of a query distribution.
class GaussianModel {
 public:
  GaussianModel(Vector mean, Matrix cov, std::size_t sample_count)
      : mean_(std::move(mean)), cov_(std::move(cov)),
        sample_count_(sample_count) {
    detail::require(mean_.size() > 0, ErrorCode::kInput, "empty mean vector");
    detail::require(mean_.allFinite(), ErrorCode::kInput, "mean not finite");
    detail::require(cov_.rows() == mean_.size() && cov_.cols() == mean_.size(),
                    ErrorCode::kInput, "covariance shape does not match mean");
    detail::require(cov_.allFinite(), ErrorCode::kInput,
                    "covariance not finite");
    detail::require(is_symmetric(cov_), ErrorCode::kInput,
                    "covariance not symmetric");
    detail::require(is_psd(cov_), ErrorCode::kInput,
                    "covariance not positive semi-definite");
    detail::require(sample_count_ > 0, ErrorCode::kInput,
                    "sample count must be positive");
  }

  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  std::size_t sample_count() const { return sample_count_; }
  Eigen::Index dimension() const { return mean_.size(); }

 private:
  Vector mean_;
  Matrix cov_;
  std::size_t sample_count_;
};

// Sample mean and unbiased covariance, accumulated in one pass (Welford).
inline GaussianModel estimate_gaussian(std::span<const Vector> samples) {
  detail::require(samples.size() >= 2, ErrorCode::kEstimation,
                  "need at least two samples to estimate a covariance");
  const auto m = samples.front().size();
  detail::require(m > 0, ErrorCode::kInput, "empty sample vectors");
  Vector mean = Vector::Zero(m);
  Matrix scatter = Matrix::Zero(m, m);
  double count = 0.0;
  for (const Vector& x : samples) {
    detail::require(x.size() == m, ErrorCode::kInput,
                    "samples have inconsistent dimensions");
    detail::require(x.allFinite(), ErrorCode::kInput, "non-finite sample");
    count += 1.0;
    const Vector before = x - mean;
    mean += before / count;
    scatter.noalias() += before * (x - mean).transpose();
  }
  Matrix cov = scatter / (count - 1.0);
  cov = 0.5 * (cov + cov.transpose());
  return GaussianModel(std::move(mean), std::move(cov), samples.size());
}

struct CatalogEntry {
  SecretLabel label;
  GaussianModel model;
};

// The protected instantiation: a catalog of models (one per secret) and
// the ordered pairs of secrets that must stay indistinguishable.
class PairFamily {
 public:
  using IndexPair = std::pair<std::size_t, std::size_t>;

  PairFamily(std::vector<CatalogEntry> catalog, std::vector<IndexPair> pairs)
      : catalog_(std::move(catalog)), pairs_(std::move(pairs)) {
    validate();
  }

  static PairFamily from_labels(
      std::vector<CatalogEntry> catalog,
      const std::vector<std::pair<SecretLabel, SecretLabel>>& label_pairs) {
    std::vector<IndexPair> pairs;
    pairs.reserve(label_pairs.size());
    for (const auto& [a, b] : label_pairs) {
      pairs.emplace_back(index_of(catalog, a), index_of(catalog, b));
    }
    return PairFamily(std::move(catalog), std::move(pairs));
  }

  const std::vector<CatalogEntry>& catalog() const { return catalog_; }
  const std::vector<IndexPair>& pairs() const { return pairs_; }
  const GaussianModel& model(std::size_t i) const { return catalog_[i].model; }
  const SecretLabel& label(std::size_t i) const { return catalog_[i].label; }
  Eigen::Index dimension() const { return catalog_.front().model.dimension(); }

  Vector mean_gap(const IndexPair& pair) const {
    return model(pair.first).mean() - model(pair.second).mean();
  }

 private:
  static std::size_t index_of(const std::vector<CatalogEntry>& catalog,
                              const SecretLabel& label) {
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      if (catalog[i].label == label) return i;
    }
    detail::fail(ErrorCode::kConfig,
                 "pair label " + to_string(label) + " is not in the catalog");
  }

  void validate() const {
    detail::require(!catalog_.empty(), ErrorCode::kConfig, "empty catalog");
    detail::require(!pairs_.empty(), ErrorCode::kConfig,
                    "pair family has no pairs");
    const auto m = catalog_.front().model.dimension();
    for (std::size_t i = 0; i < catalog_.size(); ++i) {
      detail::require(catalog_[i].model.dimension() == m, ErrorCode::kConfig,
                      "catalog models have different dimensions");
      for (std::size_t j = 0; j < i; ++j) {
        detail::require(catalog_[i].label != catalog_[j].label,
                        ErrorCode::kConfig,
                        "duplicate catalog label " +
                            to_string(catalog_[i].label));
      }
    }
    for (const auto& [a, b] : pairs_) {
      detail::require(a < catalog_.size() && b < catalog_.size(),
                      ErrorCode::kConfig, "pair index outside the catalog");
      const bool mirrored =
          std::find(pairs_.begin(), pairs_.end(), IndexPair{b, a}) !=
          pairs_.end();
      detail::require(mirrored, ErrorCode::kConfig,
                      "pair (" + to_string(label(a)) + ", " +
                          to_string(label(b)) + ") has no mirror pair");
    }
  }

  std::vector<CatalogEntry> catalog_;
  std::vector<IndexPair> pairs_;
};

enum class Norm { kL1, kL2 };

inline double vector_norm(const Vector& v, Norm norm) {
  return norm == Norm::kL1 ? v.lpNorm<1>() : v.norm();
}

// Worst-case distance between expected query values over the pairs.
inline double delta_e(const PairFamily& family, Norm norm) {
  detail::require(!family.pairs().empty(), ErrorCode::kConfig,
                  "pair family has no pairs");
  double worst = 0.0;
  for (const auto& pair : family.pairs()) {
    worst = std::max(worst, vector_norm(family.mean_gap(pair), norm));
  }
  return worst;
}

struct AssumptionReport {
  double max_cov_discrepancy = 0.0;
  double max_direction_angle = 0.0;
  double common_eigenbasis_residual = 0.0;
  // Dominant left singular direction of the mean gaps; empty when every gap
  // is zero.
  std::optional<Vector> fitted_direction;
};

// Unit vector along the dominant singular direction of the mean gaps, or
// nullopt when all gaps vanish.
inline std::optional<Vector> fit_common_direction(const PairFamily& family) {
  const auto& pairs = family.pairs();
  Matrix gaps(family.dimension(), static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    gaps.col(static_cast<Eigen::Index>(k)) = family.mean_gap(pairs[k]);
  }
  if (max_abs(gaps) == 0.0) return std::nullopt;
  Eigen::JacobiSVD<Matrix> svd(gaps, Eigen::ComputeThinU);
  Vector v = svd.matrixU().col(0).normalized();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-12) {
      if (v(i) < 0) v = -v;
      break;
    }
  }
  return v;
}

// Angle in [0, pi/2] between the line through v and the gap; zero gaps
// count as parallel.
inline double angle_to_direction(const Vector& gap, const Vector& v) {
  const double gnorm = gap.norm();
  if (gnorm == 0.0) return 0.0;
  const double cosine = std::min(1.0, std::abs(gap.dot(v)) / (gnorm * v.norm()));
  return std::acos(cosine);
}

// Largest off-diagonal entry of each cov expressed in the eigenbasis of the
// reference model, over the reference's largest eigenvalue.
inline double common_eigenbasis_residual(const PairFamily& family,
                                         std::size_t reference = 0) {
  detail::require(reference < family.catalog().size(), ErrorCode::kConfig,
                  "reference model index outside the catalog");
  const auto eig = eigendecompose(family.model(reference).cov());
  Matrix basis(family.dimension(), family.dimension());
  for (std::size_t k = 0; k < eig.size(); ++k) {
    basis.col(static_cast<Eigen::Index>(k)) = eig[k].vector;
  }
  const double top = eig.front().value > 0.0 ? eig.front().value : 1.0;
  double worst = 0.0;
  for (const auto& entry : family.catalog()) {
    Matrix rotated = basis.transpose() * entry.model.cov() * basis;
    rotated.diagonal().setZero();
    worst = std::max(worst, max_abs(rotated) / top);
  }
  return worst;
}

inline AssumptionReport check_assumptions(const PairFamily& family,
                                          std::size_t reference = 0) {
  AssumptionReport report;
  for (const auto& [i, j] : family.pairs()) {
    const Matrix& a = family.model(i).cov();
    const Matrix& b = family.model(j).cov();
    const double diff = max_abs(a - b);
    if (diff == 0.0) continue;
    const double scale = std::max(max_eigenvalue(a), max_eigenvalue(b));
    report.max_cov_discrepancy =
        std::max(report.max_cov_discrepancy, scale > 0.0 ? diff / scale : diff);
  }
  report.fitted_direction = fit_common_direction(family);
  if (report.fitted_direction) {
    for (const auto& pair : family.pairs()) {
      report.max_direction_angle =
          std::max(report.max_direction_angle,
                   angle_to_direction(family.mean_gap(pair),
                                      *report.fitted_direction));
    }
  }
  report.common_eigenbasis_residual =
      common_eigenbasis_residual(family, reference);
  return report;
}

// ---------------------------------------------------------------------------
// JSON

inline json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Vector vector_from_json(const json& j) {
  detail::require(j.is_array(), ErrorCode::kFormat, "expected a JSON array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    detail::require(j[i].is_number(), ErrorCode::kFormat,
                    "expected a numeric array entry");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline json matrix_to_json(const Matrix& a) {
  json out = json::array();
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    out.push_back(vector_to_json(a.row(r).transpose()));
  }
  return out;
}

inline Matrix matrix_from_json(const json& j) {
  detail::require(j.is_array(), ErrorCode::kFormat,
                  "expected a JSON array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j[0].size());
  Matrix a(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vector row = vector_from_json(j[static_cast<std::size_t>(r)]);
    detail::require(row.size() == cols, ErrorCode::kFormat, "ragged matrix");
    a.row(r) = row.transpose();
  }
  return a;
}

inline json to_json(const CatalogEntry& entry) {
  return json{{"property_id", entry.label.property_id},
              {"value", entry.label.value},
              {"mean", vector_to_json(entry.model.mean())},
              {"cov", matrix_to_json(entry.model.cov())},
              {"sample_count", entry.model.sample_count()}};
}

inline CatalogEntry catalog_entry_from_json(const json& j) {
  try {
    return CatalogEntry{
        SecretLabel(j.at("property_id").get<std::string>(),
                    j.at("value").get<double>()),
        GaussianModel(vector_from_json(j.at("mean")),
                      matrix_from_json(j.at("cov")),
                      j.at("sample_count").get<std::size_t>())};
  } catch (const json::exception& e) {
    detail::fail(ErrorCode::kFormat,
                 std::string("bad model document: ") + e.what());
  }
}

inline json catalog_to_json(const std::vector<CatalogEntry>& catalog) {
  json out = json::array();
  for (const auto& entry : catalog) out.push_back(to_json(entry));
  return out;
}

inline std::vector<CatalogEntry> catalog_from_json(const json& j) {
  detail::require(j.is_array(), ErrorCode::kFormat,
                  "model catalog must be a JSON array");
  std::vector<CatalogEntry> catalog;
  for (const auto& item : j) catalog.push_back(catalog_entry_from_json(item));
  return catalog;
}

}  // namespace distpriv
