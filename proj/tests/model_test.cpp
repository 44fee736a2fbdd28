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

namespace distpriv {
namespace {

using testing::mat2;
using testing::vec;

TEST(SecretLabel, Validation) {
  EXPECT_ERROR_CODE(SecretLabel("", 0.5), ErrorCode::kInput);
  EXPECT_ERROR_CODE(SecretLabel("income", 1.5), ErrorCode::kInput);
  EXPECT_ERROR_CODE(SecretLabel("income", -0.1), ErrorCode::kInput);
  EXPECT_EQ(SecretLabel("income", 0.5 - 0.05), SecretLabel("income", 0.45));
}

TEST(PrivacyParams, Validation) {
  EXPECT_ERROR_CODE(PrivacyParams(0.0, 0.1), ErrorCode::kParameter);
  EXPECT_ERROR_CODE(PrivacyParams(1.0, 1.0), ErrorCode::kParameter);
  EXPECT_ERROR_CODE(PrivacyParams(1.0, -0.1), ErrorCode::kParameter);
  EXPECT_NEAR(gaussian_multiplier(0.001), std::sqrt(2.0 * std::log(1250.0)), 1e-15);
}

TEST(EstimateGaussian, TwoPointFormula) {
  const std::vector<Vector> xs{vec({0, 0}), vec({2, 2})};
  const auto g = estimate_gaussian(xs);
  EXPECT_TRUE(g.mean().isApprox(vec({1, 1})));
  EXPECT_TRUE(g.cov().isApprox(mat2(2, 2, 2, 2)));
  EXPECT_EQ(g.sample_count(), 2u);
}

TEST(EstimateGaussian, DegenerateSamples) {
  const std::vector<Vector> xs(10, vec({5, 5, 5}));
  const auto g = estimate_gaussian(xs);
  EXPECT_TRUE(g.mean().isApprox(vec({5, 5, 5})));
  EXPECT_EQ(max_abs(g.cov()), 0.0);
}

TEST(EstimateGaussian, Errors) {
  const std::vector<Vector> one{vec({1, 2})};
  EXPECT_ERROR_CODE(estimate_gaussian(one), ErrorCode::kEstimation);
  const std::vector<Vector> bad{vec({1, 2}), vec({std::nan(""), 0})};
  EXPECT_ERROR_CODE(estimate_gaussian(bad), ErrorCode::kInput);
}

TEST(EstimateGaussian, MatchesTwoPassOracleAndIsPsd) {
  Rng rng(21);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Vector> xs;
    const Vector shift = testing::random_vector(4, rng, 100.0);
    for (int i = 0; i < 500; ++i) xs.push_back(shift + testing::random_vector(4, rng));
    const auto g = estimate_gaussian(xs);
    const auto [mean, cov] = testing::two_pass_moments(xs);
    EXPECT_LE((g.mean() - mean).norm(), 1e-10 * mean.norm());
    EXPECT_LE(max_abs(g.cov() - cov), 1e-10 * max_abs(cov));
    EXPECT_TRUE(is_psd(g.cov()));
  }
}

TEST(GaussianModel, RejectsInvalid) {
  EXPECT_ERROR_CODE(GaussianModel(vec({0, 0}), mat2(1, 0.5, 0, 1), 10), ErrorCode::kInput);
  EXPECT_ERROR_CODE(GaussianModel(vec({0, 0}), mat2(1, 2, 2, 1), 10), ErrorCode::kInput);
  EXPECT_ERROR_CODE(GaussianModel(vec({0}), mat2(1, 0, 0, 1), 10), ErrorCode::kInput);
  EXPECT_ERROR_CODE(GaussianModel(vec({0, 0}), mat2(1, 0, 0, 1), 0), ErrorCode::kInput);
}

TEST(Eigendecompose, WorkedExample) {
  const auto eig = eigendecompose(mat2(22, -6, -6, 13));
  ASSERT_EQ(eig.size(), 2u);
  EXPECT_NEAR(eig[0].value, 25.0, 1e-12);
  EXPECT_NEAR(eig[1].value, 10.0, 1e-12);
  EXPECT_TRUE(eig[0].vector.isApprox(vec({2, -1}) / std::sqrt(5.0), 1e-12));
  EXPECT_TRUE(eig[1].vector.isApprox(vec({1, 2}) / std::sqrt(5.0), 1e-12));
}

TEST(Eigendecompose, Identity) {
  for (const auto& p : eigendecompose(Matrix::Identity(4, 4))) {
    EXPECT_DOUBLE_EQ(p.value, 1.0);
  }
}

TEST(Eigendecompose, RandomSymmetricInvariants) {
  Rng rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    Matrix a(5, 5);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) a(i, j) = standard_normal(rng);
    }
    a = 0.5 * (a + a.transpose()).eval();
    const auto eig = eigendecompose(a);
    Matrix rebuilt = Matrix::Zero(5, 5);
    for (std::size_t k = 0; k < eig.size(); ++k) {
      if (k > 0) EXPECT_GE(eig[k - 1].value, eig[k].value);
      EXPECT_LE((a * eig[k].vector - eig[k].value * eig[k].vector).norm(),
                1e-8 * a.norm());
      for (std::size_t l = 0; l < k; ++l) {
        EXPECT_LE(std::abs(eig[k].vector.dot(eig[l].vector)), 1e-8);
      }
      const auto& v = eig[k].vector;
      const auto first = std::find_if(v.begin(), v.end(),
                                      [](double x) { return std::abs(x) > 1e-12; });
      EXPECT_GT(*first, 0.0);
      rebuilt += eig[k].value * v * v.transpose();
    }
    EXPECT_LE(max_abs(rebuilt - a), 1e-8);
    const auto scaled = eigendecompose(7.0 * a);
    for (std::size_t k = 0; k < eig.size(); ++k) {
      EXPECT_NEAR(scaled[k].value, 7.0 * eig[k].value, 1e-9 * std::abs(scaled[k].value) + 1e-12);
      EXPECT_TRUE(scaled[k].vector.isApprox(eig[k].vector, 1e-8));
    }
  }
}

TEST(Eigendecompose, AsymmetricIsInputError) {
  EXPECT_ERROR_CODE(eigendecompose(mat2(1, 2, 3, 4)), ErrorCode::kInput);
}

TEST(InverseQuadraticForm, MatchesDirectSolve) {
  Rng rng(6);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix s = testing::random_spd(3, rng);
    const Vector g = testing::random_vector(3, rng);
    const double direct = g.dot(s.ldlt().solve(g));
    EXPECT_NEAR(inverse_quadratic_form(s, g), direct, 1e-6 * direct);
  }
  EXPECT_EQ(inverse_quadratic_form(Matrix::Zero(2, 2), vec({0, 0})), 0.0);
  // Ridge repair turns a zero-variance direction into a tiny positive one.
  EXPECT_GE(inverse_quadratic_form(mat2(1, 0, 0, 0), vec({0, 1})), 1e9);
  EXPECT_TRUE(std::isinf(inverse_quadratic_form(Matrix::Zero(2, 2), vec({0, 1}))));
}

TEST(PairFamily, Validation) {
  const Matrix c = Matrix::Identity(2, 2);
  std::vector<CatalogEntry> cat{{SecretLabel("p", 0.4), GaussianModel(vec({0, 0}), c, 5)},
                                {SecretLabel("p", 0.6), GaussianModel(vec({1, 0}), c, 5)}};
  EXPECT_ERROR_CODE(PairFamily(cat, {{0, 1}}), ErrorCode::kConfig);
  EXPECT_ERROR_CODE(PairFamily(cat, {}), ErrorCode::kConfig);
  EXPECT_ERROR_CODE(PairFamily(cat, {{0, 2}, {2, 0}}), ErrorCode::kConfig);
  auto dup = cat;
  dup[1].label = dup[0].label;
  EXPECT_ERROR_CODE(PairFamily(dup, {{0, 1}, {1, 0}}), ErrorCode::kConfig);
  auto mixed = cat;
  mixed[1].model = GaussianModel(vec({1}), Matrix::Identity(1, 1), 5);
  EXPECT_ERROR_CODE(PairFamily(mixed, {{0, 1}, {1, 0}}), ErrorCode::kConfig);
  const auto fam = PairFamily::from_labels(
      cat, {{SecretLabel("p", 0.4), SecretLabel("p", 0.6)},
            {SecretLabel("p", 0.6), SecretLabel("p", 0.4)}});
  EXPECT_EQ(fam.pairs().size(), 2u);
  EXPECT_ERROR_CODE(
      PairFamily::from_labels(cat, {{SecretLabel("p", 0.4), SecretLabel("q", 0.6)}}),
      ErrorCode::kConfig);
}

TEST(DeltaE, WorkedExample) {
  const auto fam = testing::worked_example_family();
  EXPECT_NEAR(delta_e(fam, Norm::kL2), std::numbers::sqrt2, 1e-12);
  EXPECT_NEAR(delta_e(fam, Norm::kL1), 2.0, 1e-12);
}

TEST(DeltaE, IdenticalMeansAndSupremum) {
  const Matrix c = Matrix::Identity(1, 1);
  const auto same = testing::pair_family(vec({3}), c, vec({3}), c);
  EXPECT_EQ(delta_e(same, Norm::kL1), 0.0);
  EXPECT_EQ(delta_e(same, Norm::kL2), 0.0);

  std::vector<CatalogEntry> cat;
  for (double m : {0.0, 3.0, 10.0, 5.0}) {
    cat.push_back({SecretLabel("p", m / 10.0), GaussianModel(vec({m}), c, 5)});
  }
  // L1 gaps 3, 7, 5.
  const PairFamily fam(cat, {{0, 1}, {1, 0}, {1, 2}, {2, 1}, {2, 3}, {3, 2}});
  EXPECT_DOUBLE_EQ(delta_e(fam, Norm::kL1), 7.0);
}

TEST(DeltaE, L2NeverExceedsL1) {
  Rng rng(13);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix c = Matrix::Identity(4, 4);
    const auto fam = testing::pair_family(testing::random_vector(4, rng), c,
                                          testing::random_vector(4, rng), c);
    EXPECT_LE(delta_e(fam, Norm::kL2), delta_e(fam, Norm::kL1) + 1e-12);
  }
}

TEST(CheckAssumptions, TranslationsAreClean) {
  Rng rng(14);
  const Matrix s = testing::random_spd(3, rng);
  const Vector mu = testing::random_vector(3, rng);
  const Vector d = testing::random_vector(3, rng);
  std::vector<CatalogEntry> cat;
  for (int k = 0; k < 3; ++k) {
    cat.push_back({SecretLabel("p", 0.1 * (k + 1)), GaussianModel(mu + k * d, s, 100)});
  }
  const PairFamily fam(cat, {{0, 1}, {1, 0}, {1, 2}, {2, 1}, {0, 2}, {2, 0}});
  const auto r = check_assumptions(fam);
  EXPECT_EQ(r.max_cov_discrepancy, 0.0);
  EXPECT_NEAR(r.max_direction_angle, 0.0, 1e-7);
  EXPECT_NEAR(r.common_eigenbasis_residual, 0.0, 1e-12);
  ASSERT_TRUE(r.fitted_direction.has_value());
  EXPECT_NEAR(std::abs(r.fitted_direction->dot(d.normalized())), 1.0, 1e-12);
}

TEST(CheckAssumptions, ParallelGapsAndDiscrepancy) {
  const Matrix c = Matrix::Identity(2, 2);
  std::vector<CatalogEntry> cat{{SecretLabel("p", 0.1), GaussianModel(vec({0, 0}), c, 5)},
                                {SecretLabel("p", 0.2), GaussianModel(vec({1, -1}), c, 5)},
                                {SecretLabel("p", 0.3), GaussianModel(vec({3, -3}), 2 * c, 5)}};
  const PairFamily fam(cat, {{0, 1}, {1, 0}, {1, 2}, {2, 1}});
  const auto r = check_assumptions(fam);
  EXPECT_NEAR(r.max_direction_angle, 0.0, 1e-7);
  EXPECT_NEAR(r.max_cov_discrepancy, 0.5, 1e-12);
  EXPECT_TRUE(r.fitted_direction->isApprox(vec({1, -1}) / std::numbers::sqrt2, 1e-12));

  const auto orth = testing::pair_family(vec({0, 0}), c, vec({0, 0}), c);
  EXPECT_FALSE(check_assumptions(orth).fitted_direction.has_value());
  EXPECT_EQ(check_assumptions(orth).max_direction_angle, 0.0);
}

TEST(AngleToDirection, Basics) {
  EXPECT_NEAR(angle_to_direction(vec({1, 0}), vec({0, 1})), std::numbers::pi / 2, 1e-12);
  EXPECT_NEAR(angle_to_direction(vec({-2, 0}), vec({1, 0})), 0.0, 1e-12);
  EXPECT_EQ(angle_to_direction(vec({0, 0}), vec({1, 0})), 0.0);
}

TEST(CatalogJson, RoundTrip) {
  const auto fam = testing::worked_example_family();
  const json j = catalog_to_json(fam.catalog());
  ASSERT_TRUE(j.is_array());
  EXPECT_EQ(j[0].at("property_id"), "p");
  const auto back = catalog_from_json(json::parse(j.dump()));
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].label, fam.label(i));
    EXPECT_EQ(back[i].model.mean(), fam.model(i).mean());
    EXPECT_EQ(back[i].model.cov(), fam.model(i).cov());
    EXPECT_EQ(back[i].model.sample_count(), 1000u);
  }
  EXPECT_ERROR_CODE(catalog_from_json(json::object()), ErrorCode::kFormat);
  EXPECT_ERROR_CODE(catalog_from_json(json::parse(R"([{"property_id":"p"}])")),
                    ErrorCode::kFormat);
}

}  // namespace
}  // namespace distpriv
