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


#include <numbers>

#include "test_support.hpp"
#include "transport_oracle.hpp"

namespace distpriv {
namespace {

using testing::mat2;
using testing::vec;

const double kC = std::sqrt(2.0 * std::log(1.25 / 0.001));

double laplace_scale(const NoisePlan& p) { return std::get<LaplaceIid>(p.shape()).scale; }
double gaussian_sigma(const NoisePlan& p) { return std::get<GaussianIid>(p.shape()).sigma; }
const ScalarAlongDirection& directional(const NoisePlan& p) {
  return std::get<ScalarAlongDirection>(p.shape());
}

// Family whose covariances share the eigenvectors of a random rotation.
PairFamily common_basis_family(Rng& rng, Eigen::Index m) {
  const auto basis = eigendecompose(testing::random_spd(m, rng));
  Matrix q(m, m);
  for (Eigen::Index k = 0; k < m; ++k) q.col(k) = basis[static_cast<std::size_t>(k)].vector;
  auto cov = [&] {
    Vector d(m);
    for (Eigen::Index k = 0; k < m; ++k) d(k) = 0.1 + 5.0 * uniform_open01(rng);
    Matrix s = q * d.asDiagonal() * q.transpose();
    return Matrix(0.5 * (s + s.transpose()));
  };
  return testing::pair_family(testing::random_vector(m, rng), cov(),
                              testing::random_vector(m, rng), cov());
}

TEST(Samplers, LaplaceVariance) {
  Rng rng(1);
  const double b = 3.0;
  double sq = 0.0, sum = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n / 5; ++i) {
    const Vector x = sample_laplace_vec(b, 5, rng);
    sum += x.sum();
    sq += x.squaredNorm();
  }
  const double mean = sum / n;
  EXPECT_NEAR((sq / n - mean * mean) / (2 * b * b), 1.0, 0.02);
  EXPECT_ERROR_CODE(sample_laplace_vec(0.0, 3, rng), ErrorCode::kParameter);
  EXPECT_ERROR_CODE(sample_laplace_vec(-1.0, 3, rng), ErrorCode::kParameter);
}

TEST(Samplers, LaplaceDeterministic) {
  Rng a(17), b(17);
  EXPECT_EQ(sample_laplace_vec(1.0, 50, a), sample_laplace_vec(1.0, 50, b));
}

TEST(Samplers, GaussianCovariance) {
  Rng rng(2);
  Matrix cov(3, 3);
  cov << 4, 1, 0.5, 1, 3, -0.7, 0.5, -0.7, 2;
  const int n = 1000000;
  Matrix acc = Matrix::Zero(3, 3);
  for (int i = 0; i < n; ++i) {
    const Vector x = sample_gaussian_cov(cov, rng);
    acc += x * x.transpose();
  }
  acc /= n;
  EXPECT_LT((acc - cov).norm() / cov.norm(), 0.03);
  EXPECT_EQ(sample_gaussian_cov(Matrix::Zero(2, 2), rng), Vector::Zero(2));
  EXPECT_ERROR_CODE(sample_gaussian_cov(mat2(1, 2, 2, 1), rng), ErrorCode::kParameter);
}

TEST(Samplers, DiagonalCovarianceIsUncorrelated) {
  Rng rng(3);
  const Matrix cov = vec({1.0, 9.0}).asDiagonal();
  const int n = 200000;
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vector z = sample_gaussian_cov(cov, rng);
    xy += z(0) * z(1);
    xx += z(0) * z(0);
    yy += z(1) * z(1);
  }
  EXPECT_LT(std::abs(xy / std::sqrt(xx * yy)), 0.01);
}

TEST(Wasserstein, Calibration) {
  EXPECT_DOUBLE_EQ(laplace_scale(calibrate_wasserstein(97, PrivacyParams(1, 0))), 97.0);
  EXPECT_EQ(laplace_scale(calibrate_wasserstein(0, PrivacyParams(1, 0))), 0.0);
  EXPECT_DOUBLE_EQ(laplace_scale(calibrate_wasserstein(10, PrivacyParams(2, 0))),
                   0.5 * laplace_scale(calibrate_wasserstein(10, PrivacyParams(1, 0))));
  EXPECT_ERROR_CODE(calibrate_wasserstein(-1, PrivacyParams(1, 0)), ErrorCode::kParameter);
}

TEST(ApproxWasserstein, OutlierPairScale) {
  const auto mu = testing::outlier_pair_mu(), nu = testing::outlier_pair_nu();
  const double w = min_w_for_delta(mu, nu, 0.1);
  ASSERT_TRUE(is_w_delta_close(mu, nu, w, 0.1).close);
  const auto plan = calibrate_approx_wasserstein(w, PrivacyParams(1, 0.1));
  EXPECT_DOUBLE_EQ(laplace_scale(plan), 1.0);
  EXPECT_EQ(plan.provenance().parameters.at("w"), 1.0);
  EXPECT_EQ(plan.provenance().parameters.at("delta"), 0.1);
  const double exact = winf_distance(mu, nu);
  EXPECT_EQ(laplace_scale(calibrate_approx_wasserstein(exact, PrivacyParams(1, 0))),
            laplace_scale(calibrate_wasserstein(exact, PrivacyParams(1, 0))));
  EXPECT_DOUBLE_EQ(
      laplace_scale(calibrate_approx_wasserstein(closeness_from_bounds(4, 1.5),
                                                 PrivacyParams(2, 0.01))),
      3.5);
}

TEST(ExpM, WorkedExample) {
  const auto fam = testing::worked_example_family();
  const auto g = calibrate_expm(fam, PrivacyParams(1, 0.001), NoiseKind::kGaussian);
  EXPECT_NEAR(gaussian_sigma(g) * gaussian_sigma(g), 28.52, 0.01);
  EXPECT_NEAR(gaussian_sigma(g), kC * std::numbers::sqrt2, 1e-12);
  EXPECT_NEAR(g.provenance().parameters.at("c"), kC, 1e-12);
  EXPECT_FALSE(g.provenance().warnings.empty());
  const auto l = calibrate_expm(fam, PrivacyParams(0.5, 0), NoiseKind::kLaplace);
  EXPECT_DOUBLE_EQ(laplace_scale(l), 4.0);
  EXPECT_ERROR_CODE(calibrate_expm(fam, PrivacyParams(1, 0), NoiseKind::kGaussian),
                    ErrorCode::kParameter);
}

TEST(ExpM, IdenticalMeansAndLinearity) {
  const Matrix c = Matrix::Identity(2, 2);
  const auto same = testing::pair_family(vec({1, 1}), c, vec({1, 1}), c);
  EXPECT_EQ(laplace_scale(calibrate_expm(same, PrivacyParams(1, 0), NoiseKind::kLaplace)), 0.0);
  EXPECT_EQ(gaussian_sigma(calibrate_expm(same, PrivacyParams(0.5, 0.01), NoiseKind::kGaussian)),
            0.0);
  const auto a = testing::pair_family(vec({0, 0}), c, vec({1, 3}), c);
  const auto b = testing::pair_family(vec({0, 0}), c, vec({2, 6}), c);
  EXPECT_DOUBLE_EQ(laplace_scale(calibrate_expm(b, PrivacyParams(1, 0), NoiseKind::kLaplace)),
                   2 * laplace_scale(calibrate_expm(a, PrivacyParams(1, 0), NoiseKind::kLaplace)));
}

TEST(ExpM, MonotoneInEpsilonAndDelta) {
  const auto fam = testing::worked_example_family();
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.1, 0.5, 1.0, 3.0}) {
    const double s = gaussian_sigma(calibrate_expm(fam, PrivacyParams(eps, 0.001), NoiseKind::kGaussian));
    EXPECT_LE(s, prev);
    prev = s;
  }
  prev = std::numeric_limits<double>::infinity();
  for (double d : {1e-6, 1e-4, 1e-2, 0.1}) {
    const double s = gaussian_sigma(calibrate_expm(fam, PrivacyParams(1, d), NoiseKind::kGaussian));
    EXPECT_LE(s, prev);
    prev = s;
  }
}

TEST(Directional, WorkedExample) {
  const auto fam = testing::worked_example_family();
  const Vector v = vec({1, -1}) / std::numbers::sqrt2;
  const auto lap = calibrate_directional(fam, v, PrivacyParams(2, 0), NoiseKind::kLaplace);
  EXPECT_NEAR(directional(lap).scale, std::numbers::sqrt2 / 2, 1e-12);
  EXPECT_EQ(directional(lap).distribution, NoiseKind::kLaplace);
  const auto gau = calibrate_directional(fam, -v, PrivacyParams(1, 0.001), NoiseKind::kGaussian);
  EXPECT_NEAR(directional(gau).scale, kC * std::numbers::sqrt2, 1e-12);
}

TEST(Directional, OrthogonalDirectionIsRejectedWithPair) {
  const auto fam = testing::worked_example_family();
  try {
    calibrate_directional(fam, vec({1, 1}) / std::numbers::sqrt2, PrivacyParams(1, 0),
                          NoiseKind::kLaplace);
    ADD_FAILURE() << "expected an assumption violation";
  } catch (const AssumptionViolation& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAssumption);
    ASSERT_TRUE(e.pair().has_value());
    EXPECT_EQ(e.pair()->first, 0u);
    EXPECT_EQ(e.pair()->second, 1u);
  }
  EXPECT_ERROR_CODE(calibrate_directional(fam, vec({1, 0, 0}), PrivacyParams(1, 0),
                                          NoiseKind::kLaplace),
                    ErrorCode::kParameter);
}

TEST(NoNoiseCheck, WorkedExampleAgainstDirectSolve) {
  const auto fam = testing::worked_example_family();
  const Vector g = vec({1, -1});
  const double mahalanobis = g.dot(mat2(22, -6, -6, 13).inverse() * g);
  EXPECT_NEAR(mahalanobis, 23.0 / 250.0, 1e-12);
  EXPECT_NEAR(std::pow(1.0 / kC, 2), 1.0 / (2.0 * std::log(1250.0)), 1e-15);
  EXPECT_GT(mahalanobis, std::pow(1.0 / kC, 2));
  EXPECT_FALSE(no_noise_check(fam, PrivacyParams(1, 0.001)));
  EXPECT_LT(mahalanobis, std::pow(1.2 / kC, 2));
  EXPECT_TRUE(no_noise_check(fam, PrivacyParams(1.2, 0.001)));
  EXPECT_ERROR_CODE(no_noise_check(fam, PrivacyParams(1, 0)), ErrorCode::kParameter);
}

TEST(NoNoiseCheck, ZeroGapAndLargeVariance) {
  const Matrix c = mat2(2, 0.3, 0.3, 1);
  EXPECT_TRUE(no_noise_check(testing::pair_family(vec({4, 4}), c, vec({4, 4}), c),
                             PrivacyParams(0.01, 1e-6)));
  const auto fam = testing::pair_family(vec({0, 0}), c * 1e6, vec({1, 2}), c * 1e6);
  EXPECT_TRUE(no_noise_check(fam, PrivacyParams(1, 0.001)));
}

TEST(AddedCovCheck, ReductionAndOracle) {
  const auto fam = testing::worked_example_family();
  const PrivacyParams params(1, 0.001);
  EXPECT_EQ(added_cov_check(fam, Matrix::Zero(2, 2), params), no_noise_check(fam, params));
  EXPECT_TRUE(added_cov_check(fam, 1e4 * Matrix::Identity(2, 2), params));
  Rng rng(8);
  for (int rep = 0; rep < 30; ++rep) {
    const Matrix s = testing::random_spd(3, rng);
    const Matrix add = testing::random_spd(3, rng, 0.0);
    const Vector mu = testing::random_vector(3, rng);
    const Vector gap = 0.3 * testing::random_vector(3, rng);
    const auto f = testing::pair_family(mu, s, mu + gap, s);
    const double form = gap.dot((s + add).ldlt().solve(gap));
    const double bound = std::pow(params.epsilon / kC, 2);
    if (std::abs(form - bound) > 1e-9) {
      EXPECT_EQ(added_cov_check(f, add, params), form <= bound);
    }
  }
}

TEST(MinEigCheck, BasicsAndImplication) {
  const auto fam = testing::worked_example_family();
  EXPECT_FALSE(min_eig_check(fam, Matrix::Zero(2, 2), PrivacyParams(0.01, 0.001)));
  EXPECT_ERROR_CODE(min_eig_check(fam, Matrix::Zero(2, 2), PrivacyParams(1, 0)),
                    ErrorCode::kParameter);
  Rng rng(9);
  for (int rep = 0; rep < 40; ++rep) {
    const Matrix s = testing::random_spd(3, rng, 0.1);
    const Matrix add = testing::random_spd(3, rng, 0.0) * uniform_open01(rng) * 20.0;
    const Vector mu = testing::random_vector(3, rng);
    const auto f = testing::pair_family(mu, s, mu + testing::random_vector(3, rng), s);
    const PrivacyParams params(0.2 + 2.0 * uniform_open01(rng), 0.001);
    if (min_eig_check(f, add, params)) EXPECT_TRUE(added_cov_check(f, add, params));
  }
}

TEST(EigPlan, WorkedExample) {
  const auto fam = testing::worked_example_family();
  const PrivacyParams params(1, 0.001);
  const auto plan = eig_plan(fam, params);
  const Matrix cov = std::get<GaussianCov>(plan.shape()).cov;
  const Vector v1 = vec({1, 2}) / std::sqrt(5.0);
  const Vector v2 = vec({2, -1}) / std::sqrt(5.0);
  EXPECT_NEAR(v1.dot(cov * v1), 18.52, 0.01);
  EXPECT_NEAR(v2.dot(cov * v2), 3.52, 0.01);
  EXPECT_NEAR(v1.dot(cov * v2), 0.0, 1e-9);
  EXPECT_NEAR(plan.provenance().parameters.at("target_variance"), 28.52, 0.01);
  EXPECT_NEAR(plan.provenance().parameters.at("target_variance"), 2 * kC * kC, 1e-9);
  EXPECT_NEAR(plan.provenance().parameters.at("sigma_sq_0"), 2 * kC * kC - 25, 1e-9);
  EXPECT_NEAR(plan.provenance().parameters.at("sigma_sq_1"), 2 * kC * kC - 10, 1e-9);
  EXPECT_TRUE(min_eig_check(fam, cov, params));
  EXPECT_NEAR(min_eigenvalue(fam.model(0).cov() + cov), 2 * kC * kC, 1e-9);
}

TEST(EigPlan, ClippedAndZeroCovariance) {
  const Matrix big = 1e4 * Matrix::Identity(2, 2);
  const auto quiet = testing::pair_family(vec({0, 0}), big, vec({1, 1}), big);
  const auto zero_plan = eig_plan(quiet, PrivacyParams(1, 0.001));
  EXPECT_EQ(max_abs(std::get<GaussianCov>(zero_plan.shape()).cov), 0.0);

  const Matrix none = Matrix::Zero(2, 2);
  const auto bare = testing::pair_family(vec({0, 0}), none, vec({1, 3}), none);
  const PrivacyParams params(0.5, 0.01);
  const Matrix cov = std::get<GaussianCov>(eig_plan(bare, params).shape()).cov;
  const double s = gaussian_sigma(calibrate_expm(bare, params, NoiseKind::kGaussian));
  EXPECT_LE(max_abs(cov - s * s * Matrix::Identity(2, 2)), 1e-9 * s * s);
}

TEST(EigPlan, CommonBasisFamiliesPassMinEig) {
  Rng rng(10);
  for (int rep = 0; rep < 20; ++rep) {
    const auto fam = common_basis_family(rng, 3);
    const PrivacyParams params(0.5, 0.001);
    const Matrix cov = std::get<GaussianCov>(eig_plan(fam, params).shape()).cov;
    EXPECT_TRUE(min_eig_check(fam, cov, params));
  }
}

TEST(EigPlan, RejectsMismatchedBases) {
  const auto fam = testing::pair_family(vec({0, 0}), mat2(5, 0, 0, 1), vec({1, 0}),
                                        mat2(3, 2, 2, 3));
  EXPECT_ERROR_CODE(eig_plan(fam, PrivacyParams(1, 0.001)), ErrorCode::kAssumption);
  EXPECT_ERROR_CODE(eig_plan(fam, PrivacyParams(1, 0)), ErrorCode::kParameter);
}

TEST(DauSigma, Limits) {
  const Vector v = vec({1, 0});
  const PrivacyParams params(1, 0.001);
  const double required = std::pow(2.0 * kC, 2);
  const GaussianModel tiny(vec({0, 0}), 1e-12 * Matrix::Identity(2, 2), 10);
  EXPECT_NEAR(dau_sigma(tiny, 2.0, v, params), required, 1e-6 * required);
  const GaussianModel wide(vec({0, 0}), 1e6 * Matrix::Identity(2, 2), 10);
  EXPECT_DOUBLE_EQ(dau_sigma(wide, 2.0, v, params), 1e-6 * required + 1e-12);
}

TEST(DauSigma, PositiveDefinitenessOracle) {
  Rng rng(11);
  const PrivacyParams params(0.7, 0.001);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix s = testing::random_spd(3, rng, 0.05);
    const Vector v = testing::random_vector(3, rng).normalized();
    const double alpha = 0.5 + 3.0 * uniform_open01(rng);
    const GaussianModel g(Vector::Zero(3), s, 10);
    const double sigma_sq = dau_sigma(g, alpha, v, params);
    const double required = std::pow(alpha * kC / params.epsilon, 2);
    const double eta = 1e-6 * required + 1e-12;
    auto perturbed_min = [&](double x) {
      return min_eigenvalue(s + (x - required) * v * v.transpose());
    };
    EXPECT_GT(perturbed_min(sigma_sq), 0.0);
    if (sigma_sq > eta) EXPECT_LE(perturbed_min(sigma_sq - 2 * eta), 0.0);
  }
}

TEST(DauPlan, ReductionsAndCredit) {
  const Vector v = vec({1, -1}) / std::numbers::sqrt2;
  const PrivacyParams params(1, 0.001);
  const Matrix tiny = 1e-12 * Matrix::Identity(2, 2);
  const auto bare = testing::pair_family(vec({100, 101}), tiny, vec({99, 102}), tiny);
  const double s_dir = directional(calibrate_directional(bare, v, params, NoiseKind::kGaussian)).scale;
  EXPECT_NEAR(directional(dau_plan(bare, v, params)).scale, s_dir, 1e-5 * s_dir);

  const auto fam = testing::worked_example_family();
  const double sigma = directional(dau_plan(fam, v, params)).scale;
  EXPECT_LT(sigma * sigma, 2 * kC * kC);
  const double closed = 2 * kC * kC - 1.0 / v.dot(mat2(22, -6, -6, 13).inverse() * v);
  const double required = 2 * kC * kC;
  EXPECT_NEAR(sigma * sigma, closed + 1e-6 * required + 1e-12, 1e-9 * required);

  const Matrix c = mat2(2, 0, 0, 1);
  const auto flat = testing::pair_family(vec({3, 3}), c, vec({3, 3}), c);
  const double s0 = directional(dau_plan(flat, v, params)).scale;
  EXPECT_DOUBLE_EQ(s0 * s0, 1e-12);
}

TEST(GroupDp, PerRecordSensitivity) {
  const auto bounds = adult_query_bounds();
  const double l1 = per_record_sensitivity(bounds, 100, Norm::kL1);
  EXPECT_NEAR(l1, 0.73 + 0.15 + 1 + 1 + 0.98, 1e-12);
  const double l2 = per_record_sensitivity(bounds, 100, Norm::kL2);
  EXPECT_NEAR(l2, std::sqrt(0.73 * 0.73 + 0.15 * 0.15 + 1 + 1 + 0.98 * 0.98), 1e-12);
  EXPECT_LE(l2, l1);
  const std::vector<ComponentBound> single{{0, 1, Aggregate::kAverage}};
  EXPECT_DOUBLE_EQ(per_record_sensitivity(single, 10, Norm::kL1), 0.1);
  EXPECT_ERROR_CODE(per_record_sensitivity(single, 0, Norm::kL1), ErrorCode::kParameter);
}

TEST(GroupDp, Calibration) {
  const double l2 = per_record_sensitivity(adult_query_bounds(), 100, Norm::kL2);
  const PrivacyParams params(1, 0.001);
  const double sigma = gaussian_sigma(group_dp_calibrate(l2, 100, params, NoiseKind::kGaussian));
  EXPECT_NEAR(sigma, kC * 100 * l2, 1e-9);
  EXPECT_NEAR(sigma, 708, 0.02 * 708);
  EXPECT_DOUBLE_EQ(gaussian_sigma(group_dp_calibrate(l2, 1, params, NoiseKind::kGaussian)),
                   kC * l2);
  EXPECT_DOUBLE_EQ(laplace_scale(group_dp_calibrate(2.0, 7, PrivacyParams(0.5, 0),
                                                    NoiseKind::kLaplace)),
                   28.0);
  EXPECT_ERROR_CODE(group_dp_calibrate(1.0, 0, params, NoiseKind::kLaplace),
                    ErrorCode::kParameter);
}

TEST(RelaxedBudget, MaxDivergence) {
  const auto id = relaxed_budget_maxdiv(PrivacyParams(1, 0), 0, 0);
  EXPECT_EQ(id.epsilon_prime, 1.0);
  EXPECT_EQ(id.delta_prime, 0.0);
  EXPECT_FALSE(id.extra_noise_scale.has_value());
  const auto b = relaxed_budget_maxdiv(PrivacyParams(1, 0.001), 0.1, 0.01);
  EXPECT_NEAR(b.epsilon_prime, 1.2, 1e-12);
  EXPECT_NEAR(b.delta_prime, (1 + std::exp(1.1)) * 0.01 + std::exp(0.1) * 0.001, 1e-12);
  EXPECT_NEAR(b.delta_prime, 0.04115, 1e-5);
  EXPECT_GT(relaxed_budget_maxdiv(PrivacyParams(1, 0.001), 0.1, 0.02).delta_prime, b.delta_prime);
  EXPECT_GT(relaxed_budget_maxdiv(PrivacyParams(1, 0.001), 0.2, 0.01).delta_prime, b.delta_prime);
  EXPECT_GT(relaxed_budget_maxdiv(PrivacyParams(1, 0.002), 0.1, 0.01).delta_prime, b.delta_prime);
}

TEST(RelaxedBudget, Wasserstein) {
  const auto b = relaxed_budget_wasserstein(PrivacyParams(1, 0.001), 0.5, 2);
  EXPECT_NEAR(b.epsilon_prime, 2.0, 1e-12);
  EXPECT_NEAR(b.delta_prime, std::exp(0.5) * 0.001, 1e-12);
  EXPECT_NEAR(*b.extra_noise_scale, 4.0, 1e-12);
  EXPECT_EQ(*relaxed_budget_wasserstein(PrivacyParams(1, 0.001), 0.5, 0).extra_noise_scale, 0.0);
  EXPECT_EQ(relaxed_budget_wasserstein(PrivacyParams(1, 0), 0.5, 2).delta_prime, 0.0);
  EXPECT_ERROR_CODE(relaxed_budget_wasserstein(PrivacyParams(1, 0), 0, 2),
                    ErrorCode::kParameter);
}

TEST(Apply, NoneIsIdentity) {
  Rng rng(1);
  const Vector q = vec({1.5, -2, 3});
  EXPECT_EQ(apply(NoisePlan::none(), q, rng), q);
}

TEST(Apply, DirectionalLeavesOtherCoordinatesBitwise) {
  Rng rng(2);
  const Vector q = vec({0.1, 1.0 / 3.0, 7.7, -2.2, 1e-300});
  Vector v = Vector::Zero(5);
  v(1) = 0.6;
  v(3) = 0.8;
  for (auto kind : {NoiseKind::kLaplace, NoiseKind::kGaussian}) {
    const auto plan = NoisePlan::along_direction(kind, 5.0, v, {"test", {}, {}});
    for (int rep = 0; rep < 100; ++rep) {
      const Vector out = apply(plan, q, rng);
      for (int i : {0, 2, 4}) {
        EXPECT_EQ(std::bit_cast<std::uint64_t>(out(i)), std::bit_cast<std::uint64_t>(q(i)));
      }
    }
  }
}

TEST(Apply, DirectionalProjectionOntoComplementVanishes) {
  Rng rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    const Vector v = testing::random_vector(4, rng).normalized();
    const Vector q = testing::random_vector(4, rng, 10.0);
    const auto plan = NoisePlan::along_direction(NoiseKind::kGaussian, 3.0, v, {"t", {}, {}});
    const Vector diff = apply(plan, q, rng) - q;
    const Vector off = diff - v * v.dot(diff);
    EXPECT_LE(off.norm(), 1e-12 * (1.0 + diff.norm() + q.norm()));
  }
}

TEST(Apply, GaussianCovMoments) {
  Rng rng(4);
  Matrix cov(2, 2);
  cov << 3, -1, -1, 2;
  const auto plan = NoisePlan::gaussian_cov(cov, {"t", {}, {}});
  Matrix acc = Matrix::Zero(2, 2);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Vector x = apply(plan, Vector::Zero(2), rng);
    acc += x * x.transpose();
  }
  EXPECT_LT(((acc / n) - cov).norm() / cov.norm(), 0.03);
  EXPECT_ERROR_CODE(apply(plan, Vector::Zero(3), rng), ErrorCode::kInput);
}

TEST(Audit, CalibratedPlanPasses) {
  const auto fam = testing::worked_example_family();
  const PrivacyParams params(1, 0.001);
  const auto plan = calibrate_expm(fam, params, NoiseKind::kGaussian);
  Rng rng(5);
  const auto r = audit(plan, fam.model(0), fam.model(1), params, 100000, rng);
  EXPECT_LE(r.estimated_violation, 0.0) << r.worst_event;
  EXPECT_EQ(r.trials, 100000u);
  EXPECT_FALSE(r.event_family.empty());
}

TEST(Audit, NoNoiseOnSeparatedModelsFails) {
  const Matrix c = Matrix::Identity(2, 2);
  const auto fam = testing::pair_family(vec({0, 0}), c, vec({3, 0}), c);
  const PrivacyParams params(0.1, 0.001);
  Rng rng(6);
  const auto r = audit(NoisePlan::none(), fam.model(0), fam.model(1), params, 20000, rng);
  EXPECT_GT(r.estimated_violation, 0.0);
}

TEST(Audit, IdenticalModelsAndTrialFloor) {
  const GaussianModel g(vec({1, 2}), mat2(2, 0.5, 0.5, 1), 10);
  Rng rng(7);
  EXPECT_LE(audit(NoisePlan::none(), g, g, PrivacyParams(0.1, 0), 20000, rng).estimated_violation,
            0.0);
  EXPECT_ERROR_CODE(audit(NoisePlan::none(), g, g, PrivacyParams(0.1, 0), 9999, rng),
                    ErrorCode::kParameter);
}

TEST(NoisePlanJson, RoundTrip) {
  const auto fam = testing::worked_example_family();
  const PrivacyParams params(1, 0.001);
  const std::vector<NoisePlan> plans{
      NoisePlan::none(), calibrate_expm(fam, params, NoiseKind::kLaplace),
      calibrate_expm(fam, params, NoiseKind::kGaussian), eig_plan(fam, params),
      dau_plan(fam, vec({1, -1}) / std::numbers::sqrt2, params)};
  for (const auto& p : plans) {
    const json j = to_json(p);
    EXPECT_TRUE(j.contains("provenance"));
    const auto back = noise_plan_from_json(json::parse(j.dump()));
    EXPECT_EQ(to_json(back).dump(), j.dump());
  }
  EXPECT_ERROR_CODE(noise_plan_from_json(json::parse(R"({"kind":"bogus"})")),
                    ErrorCode::kFormat);
}

}  // namespace
}  // namespace distpriv
