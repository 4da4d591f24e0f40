#include "problems.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace sdot;
using sdot::fixtures::Canonical1D;
using sdot::fixtures::Symmetric2D;
using sdot::fixtures::ThreeSite2D;

namespace {

Vector canonical_potential(double b) { return Vector{{0.5 * (b - 0.5), -0.5 * (b - 0.5)}}; }

CovarianceModel canonical_model() {
  Canonical1D c;
  return covariance_model(c.p, PotentialVector(c.z_star), c.R, c.sites);
}

std::vector<FacetMeasureRecord> canonical_facets() {
  Canonical1D c;
  return facet_table(c.R, build_diagram(c.sites, c.z_star, c.R.support()));
}

}  // namespace

TEST(Inference, EmpiricalFrequencies) {
  const auto f = empirical_frequencies(SampleData::from_counts({3, 7}), 2);
  EXPECT_DOUBLE_EQ(f[0], 0.3);
  EXPECT_DOUBLE_EQ(f[1], 0.7);
  EXPECT_TRUE(f.interior());
  EXPECT_FALSE(empirical_frequencies(SampleData::from_counts({0, 4, 6}), 3).interior());
  const auto one = empirical_frequencies(SampleData({1}, 2), 2);
  EXPECT_EQ(one[0], 0.0);
  EXPECT_EQ(one[1], 1.0);
  EXPECT_THROW(SampleData({}, 2), Error);
  EXPECT_THROW(SampleData({2}, 2), Error);
  EXPECT_THROW(empirical_frequencies(SampleData({0}, 2), 3), Error);
}

TEST(Inference, MultinomialCounts) {
  Rng rng(1);
  const Vector p{{0.2, 0.0, 0.5, 0.3}};
  std::vector<double> total(4, 0.0);
  for (int k = 0; k < 2000; ++k) {
    const auto c = multinomial_counts(100, p, rng);
    EXPECT_EQ(std::accumulate(c.begin(), c.end(), std::size_t(0)), 100u);
    EXPECT_EQ(c[1], 0u);
    for (int i = 0; i < 4; ++i) total[i] += double(c[i]);
  }
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(total[i] / 2000.0, 100 * p[i], 0.3);
}

TEST(Inference, CovarianceExamples) {
  const auto m = canonical_model();
  ASSERT_EQ(m.A.rows(), 1);
  EXPECT_NEAR(m.A(0, 0), 0.21, 1e-15);
  EXPECT_NEAR(m.B(0, 0), 0.5, 1e-14);
  EXPECT_NEAR(m.B(0, 1), -0.5, 1e-14);
  const Matrix expected{{0.0525, -0.0525}, {-0.0525, 0.0525}};
  EXPECT_LT((m.Sigma - expected).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((m.Sigma * Vector::Ones(2)).cwiseAbs().maxCoeff(), 1e-15);

  Symmetric2D s;
  const auto ms = covariance_model(s.p, PotentialVector::zero(2), s.R, s.sites);
  EXPECT_NEAR(ms.A(0, 0), 0.25, 1e-15);
}

TEST(InferenceProperty, CovarianceIsPsdAndSingularAlongOnes) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + trial % 5;
    const auto sites = fixtures::random_sites_2d(rng, n);
    const auto p = fixtures::random_weights(rng, n, 0.2);
    const auto R = ReferenceMeasure::uniform(SupportRegion::unit_cube(2));
    const auto m = covariance_model(p, solve_dual(p, R, sites).z, R, sites);
    EXPECT_LT((m.Sigma - m.Sigma.transpose()).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((m.Sigma * Vector::Ones(n)).cwiseAbs().maxCoeff(), 1e-10);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m.Sigma);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> eig_a(m.A);
    EXPECT_GT(eig_a.eigenvalues().minCoeff(), 0.0);
    const Matrix root = psd_sqrt(m.Sigma);
    EXPECT_LT((root * root - m.Sigma).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Inference, PsdSqrtRejectsIndefinite) {
  try {
    psd_sqrt(Matrix{{1.0, 0.0}, {0.0, -0.5}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::not_psd);
  }
}

TEST(Inference, LimitLawDeltaCanonical) {
  const auto m = canonical_model();
  Canonical1D c;
  const auto draws = sample_limit_delta(m, canonical_facets(), c.sites, 1.0, 100000, 42);
  EXPECT_EQ(draws.n_draws, 100000u);
  EXPECT_EQ(draws.seed, 42u);
  for (double v : draws.draws) ASSERT_GE(v, 0.0);
  const double expected = std::sqrt(0.21) * std::sqrt(2.0 / std::numbers::pi);
  EXPECT_NEAR(expected, 0.36567, 5e-5);  // the familiar rounded value
  EXPECT_LE(std::abs(stats::mean(draws.draws) - expected), 3 * stats::standard_error(draws.draws));
  // Determinism.
  EXPECT_EQ(draws.draws, sample_limit_delta(m, canonical_facets(), c.sites, 1.0, 100000, 42).draws);
  EXPECT_NE(draws.draws, sample_limit_delta(m, canonical_facets(), c.sites, 1.0, 100000, 43).draws);
}

TEST(Inference, LimitLawDeltaDegenerate) {
  Canonical1D c;
  CovarianceModel zero{Matrix::Zero(1, 1), Matrix::Zero(1, 2), Matrix::Zero(2, 2)};
  for (double v : sample_limit_delta(zero, canonical_facets(), c.sites, 2.0, 100, 1).draws) EXPECT_EQ(v, 0.0);
  auto facets = canonical_facets();
  for (auto& f : facets) f.surface_mass = 0.0;
  for (double v : sample_limit_delta(canonical_model(), facets, c.sites, 1.0, 100, 1).draws) EXPECT_EQ(v, 0.0);
}

TEST(Inference, LimitVarianceGamma) {
  Canonical1D c;
  const auto m = canonical_model();
  const auto d = build_diagram(c.sites, c.z_star, c.R.support());
  const auto ones = gamma_facet_integrals(c.R, d, VectorField::constant(Vector::Ones(1)));
  EXPECT_NEAR(limit_variance_gamma(m, ones, c.sites), 0.21, 1e-14);
  EXPECT_EQ(limit_variance_gamma(m, gamma_facet_integrals(c.R, d, VectorField::zero(1)), c.sites), 0.0);
  const auto away = VectorField::smoothed_indicator(Vector{{0.8}}, 0.05, 0.01, Vector::Ones(1));
  EXPECT_EQ(limit_variance_gamma(m, gamma_facet_integrals(c.R, d, away), c.sites), 0.0);
  const auto draws = sample_limit_gamma(m, ones, c.sites, 100000, 3);
  EXPECT_LE(std::abs(stats::mean(draws.draws)), 3 * stats::standard_error(draws.draws));
  EXPECT_NEAR(stats::variance(draws.draws), 0.21, 0.21 * 0.02);
}

TEST(InferenceProperty, GammaLimitDrawsLookGaussian) {
  ThreeSite2D t;
  const auto z = solve_dual(t.p, t.R, t.sites).z;
  const auto m = covariance_model(t.p, z, t.R, t.sites);
  const auto d = build_diagram(t.sites, z.values(), t.R.support());
  const auto integrals = gamma_facet_integrals(t.R, d, VectorField::coordinate(2, 0, 1.0));
  const double var = limit_variance_gamma(m, integrals, t.sites);
  ASSERT_GT(var, 1e-6);
  const auto draws = sample_limit_gamma(m, integrals, t.sites, 100000, 9);
  EXPECT_LE(std::abs(stats::skewness(draws.draws)), 0.1);
  EXPECT_NEAR(stats::variance(draws.draws), var, 0.02 * var);
  EXPECT_LE(std::abs(stats::mean(draws.draws)), 3 * stats::standard_error(draws.draws));
}

TEST(Inference, PluginEstimate) {
  Canonical1D c;
  const auto est = plugin_estimate(SampleData::from_counts({300, 700}), c.R, c.sites);
  EXPECT_FALSE(est.fallback);
  EXPECT_NEAR(est.z.values()[0], -0.1, 1e-10);
  EXPECT_NEAR(est.z.values()[1], 0.1, 1e-10);
  const auto shifted = plugin_estimate(SampleData::from_counts({320, 680}), c.R, c.sites);
  EXPECT_NEAR(shifted.z.values()[0], -0.1 + 0.01, 1e-10);
  EXPECT_NEAR(shifted.z.values()[1], 0.1 - 0.01, 1e-10);

  const PotentialVector z0(Vector{{0.25, -0.25}});
  const auto fb = plugin_estimate(SampleData::from_counts({0, 10}), c.R, c.sites, z0);
  EXPECT_TRUE(fb.fallback);
  EXPECT_EQ(fb.z.values(), z0.values());
}

TEST(InferenceProperty, PluginErrorShrinksAtRootNRate) {
  ThreeSite2D t;
  const Vector z_star = solve_dual(t.p, t.R, t.sites).z.values();
  Rng rng(2024);
  std::vector<double> log_n, log_err;
  for (std::size_t n : {100u, 1000u, 10000u, 100000u}) {
    double sum = 0.0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
      const auto counts = multinomial_counts(n, t.p.values(), rng);
      sum += (plugin_estimate(SampleData::from_counts(counts), t.R, t.sites).z.values() - z_star).norm();
    }
    log_n.push_back(std::log(double(n)));
    log_err.push_back(std::log(sum / reps));
  }
  const double mx = stats::mean(log_n), my = stats::mean(log_err);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < log_n.size(); ++k) {
    sxy += (log_n[k] - mx) * (log_err[k] - my);
    sxx += (log_n[k] - mx) * (log_n[k] - mx);
  }
  EXPECT_NEAR(sxy / sxx, -0.5, 0.05);
}

TEST(Inference, BootstrapEdgeCases) {
  Canonical1D c;
  const auto sample = SampleData::from_counts({30, 70});
  const auto one = bootstrap_delta(sample, c.R, c.sites, 1.0, 1, 5);
  ASSERT_EQ(one.sample.draws.size(), 1u);
  EXPECT_GE(one.sample.draws[0], 0.0);

  BootstrapOptions identity;
  identity.resampler = [](const std::vector<std::size_t>& counts, Rng&) { return counts; };
  for (double v : bootstrap_delta(sample, c.R, c.sites, 2.0, 5, 5, identity).sample.draws) EXPECT_EQ(v, 0.0);

  for (double v : bootstrap_gamma(sample, c.R, c.sites, VectorField::zero(1), 20, 5).sample.draws) EXPECT_EQ(v, 0.0);

  BootstrapOptions lossy;
  lossy.resampler = [](const std::vector<std::size_t>& counts, Rng&) {
    auto out = counts;
    out[1] += out[0];
    out[0] = 0;
    return out;
  };
  const auto fb = bootstrap_delta(sample, c.R, c.sites, 1.0, 7, 5, lossy);
  EXPECT_EQ(fb.fallback_count, 7u);
  EXPECT_TRUE(fb.sample.draws.empty());

  try {
    bootstrap_delta(SampleData::from_counts({0, 10}), c.R, c.sites, 1.0, 3, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::not_interior);
  }
}

TEST(Inference, BootstrapIsDeterministicAcrossThreadCounts) {
  ThreeSite2D t;
  Rng rng(3);
  const auto sample = draw_sample(t.p, 500, rng);
  BootstrapOptions serial, parallel;
  parallel.threads = 3;
  const auto a = bootstrap_delta(sample, t.R, t.sites, 1.0, 40, 99, serial);
  const auto b = bootstrap_delta(sample, t.R, t.sites, 1.0, 40, 99, parallel);
  EXPECT_EQ(a.sample.draws, b.sample.draws);
  EXPECT_EQ(a.sample.draws, bootstrap_delta(sample, t.R, t.sites, 1.0, 40, 99, serial).sample.draws);
  EXPECT_NE(a.sample.draws, bootstrap_delta(sample, t.R, t.sites, 1.0, 40, 100, serial).sample.draws);
}

TEST(Inference, BootstrapGammaVarianceCanonical) {
  Canonical1D c;
  Rng rng(77);
  const auto sample = draw_sample(c.p, 5000, rng);
  const auto res = bootstrap_gamma(sample, c.R, c.sites, VectorField::constant(Vector::Ones(1)), 2000, 78);
  ASSERT_EQ(res.sample.draws.size(), 2000u);
  EXPECT_NEAR(stats::variance(res.sample.draws), 0.21, 0.15 * 0.21);
  EXPECT_LE(std::abs(stats::mean(res.sample.draws)), 3 * stats::standard_error(res.sample.draws));
}

TEST(Inference, ConfidenceSetRadius) {
  std::vector<double> draws(100);
  std::iota(draws.begin(), draws.end(), 1.0);
  std::shuffle(draws.begin(), draws.end(), Rng(4));
  EXPECT_EQ(confidence_set_radius(draws, 0.10), 90.0);
  EXPECT_EQ(confidence_set_radius(draws, 0.05), 95.0);
  EXPECT_EQ(confidence_set_radius(std::vector<double>(10, 0.0), 0.1), 0.0);
  try {
    confidence_set_radius({}, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_draws);
  }
  EXPECT_THROW(confidence_set_radius(draws, 1.0), Error);
}

TEST(InferenceProperty, RadiusIsMonotoneInConfidence) {
  Rng rng(6);
  std::vector<double> draws;
  for (int k = 0; k < 537; ++k) draws.push_back(std::abs(fixtures::gaussian_vector(rng, 1)[0]));
  double prev = -1.0;
  for (double alpha = 0.5; alpha > 0.001; alpha *= 0.8) {
    const double r = confidence_set_radius(draws, alpha);
    EXPECT_GE(r, prev);
    prev = r;
  }
}

TEST(Inference, ConfidenceBand) {
  Canonical1D c;
  const PotentialVector z(c.z_star);
  std::vector<Vector> grid;
  for (int k = 0; k < 10; ++k) grid.push_back(Vector{{(k + 0.5) / 10.0}});
  EXPECT_NEAR(band_radius(0.5, 100, 0.1), 0.5 / 10 * 20, 1e-15);
  for (const auto& bp : confidence_band(c.sites, z, 100.0, 100, 0.1, grid)) EXPECT_EQ(bp.members.size(), 2u);
  for (const auto& bp : confidence_band(c.sites, z, 0.0, 100, 0.1, grid)) {
    ASSERT_EQ(bp.members.size(), 1u);
    EXPECT_EQ(bp.members[0], bp.center);
    EXPECT_EQ(bp.center, bp.y[0] <= 0.3 ? 0u : 1u);
  }
}

TEST(Inference, BandCoverageMass) {
  Canonical1D c;
  const PotentialVector z(c.z_star), z_hat(canonical_potential(0.35));
  EXPECT_NEAR(band_coverage_mass(c.R, c.sites, z, z, 0.0), 1.0, 1e-15);
  EXPECT_NEAR(band_coverage_mass(c.R, c.sites, z_hat, z, 0.5), 0.95, 1e-14);
  EXPECT_NEAR(band_coverage_mass(c.R, c.sites, z_hat, z, 1.0), 1.0, 1e-14);
}

TEST(Inference, SuperConsistencyProbe) {
  Canonical1D c;
  const PotentialVector z(c.z_star);
  EXPECT_EQ(super_consistency_probe(z, z, c.R.support(), c.sites, 0.05, 200).value(), 1.0);
  EXPECT_EQ(super_consistency_probe(PotentialVector(canonical_potential(0.33)), z, c.R.support(), c.sites, 0.05, 200)
                .value(),
            1.0);
  EXPECT_LT(super_consistency_probe(PotentialVector(canonical_potential(0.33)), z, c.R.support(), c.sites, 0.01, 200)
                .value(),
            1.0);
  EXPECT_FALSE(super_consistency_probe(z, z, c.R.support(), c.sites, 0.8, 200).has_value());
  EXPECT_THROW(super_consistency_probe(z, z, c.R.support(), c.sites, 0.0, 10), Error);

  ThreeSite2D t;
  const auto zs = solve_dual(t.p, t.R, t.sites).z;
  EXPECT_EQ(super_consistency_probe(zs, zs, t.R.support(), t.sites, 0.05, 40).value(), 1.0);
  EXPECT_FALSE(super_consistency_probe(zs, zs, t.R.support(), t.sites, 2.0, 40).has_value());
}
