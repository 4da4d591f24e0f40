#include "problems.hpp"

#include <gtest/gtest.h>

using namespace sdot;
using sdot::fixtures::Canonical1D;
using sdot::fixtures::Symmetric2D;
using sdot::fixtures::ThreeSite2D;

namespace {

// Midpoint-rule oracle for the dual objective on [0,1].
double objective_oracle_1d(const std::vector<double>& x, const Vector& z, const Vector& q, int cells = 200000) {
  double sum = 0.0;
  for (int k = 0; k < cells; ++k) {
    const double y = (k + 0.5) / cells;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < x.size(); ++i) best = std::min(best, 0.5 * (y - x[i]) * (y - x[i]) - z[Eigen::Index(i)]);
    sum += best;
  }
  return z.dot(q) + sum / cells;
}

Vector reduced_gradient(const Vector& g) { return g.head(g.size() - 1).array() - g[g.size() - 1]; }

SimplexWeights shift_weights(const SimplexWeights& q, Eigen::Index l, double eps) {
  Vector v = q.values();
  v[l] += eps;
  v[v.size() - 1] -= eps;
  return SimplexWeights(v);
}

}  // namespace

TEST(Dual, ObjectiveMatchesQuadratureOracle) {
  Canonical1D c;
  EXPECT_NEAR(dual_objective(c.z_star, c.p, c.R, c.sites), 0.04 + 0.0345 + 0.343 / 6.0 - 0.07, 1e-13);
  Rng rng(2);
  for (int k = 0; k < 5; ++k) {
    const Vector z = fixtures::random_vector(rng, 2, -0.3, 0.3);
    EXPECT_NEAR(dual_objective(z, c.p, c.R, c.sites), objective_oracle_1d({0.0, 1.0}, z, c.p.values()), 1e-9);
  }
  const SimplexWeights one{Vector::Ones(1)};
  EXPECT_NEAR(dual_objective(Vector::Zero(1), one, c.R, SiteSet::on_line({0.5})), 1.0 / 24.0, 1e-15);
}

TEST(Dual, ObjectiveIsMaximizedAtSolution) {
  ThreeSite2D t;
  const Vector z = solve_dual(t.p, t.R, t.sites).z.values();
  const double best = dual_objective(z, t.p, t.R, t.sites);
  Rng rng(12);
  for (int k = 0; k < 20; ++k) {
    const Vector h = fixtures::gaussian_vector(rng, 3);
    for (double step : {0.1, 0.01}) EXPECT_LT(dual_objective(z + step * h, t.p, t.R, t.sites), best);
  }
}

TEST(Dual, GradientExamples) {
  Canonical1D c;
  const Vector g0 = dual_gradient(Vector::Zero(2), c.p, c.R, c.sites);
  EXPECT_NEAR(g0[0], -0.2, 1e-15);
  EXPECT_NEAR(g0[1], 0.2, 1e-15);
  EXPECT_LT(dual_gradient(c.z_star, c.p, c.R, c.sites).cwiseAbs().maxCoeff(), 1e-15);

  Symmetric2D s;
  EXPECT_LT(dual_gradient(Vector::Zero(2), s.p, s.R, s.sites).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Dual, GradientMatchesObjectiveDifferences) {
  ThreeSite2D t;
  Rng rng(6);
  const Vector z = fixtures::random_vector(rng, 3, -0.1, 0.1);
  const Vector g = dual_gradient(z, t.p, t.R, t.sites);
  for (Eigen::Index k = 0; k < 3; ++k) {
    Vector e = Vector::Zero(3);
    e[k] = 1e-5;
    const double fd = (dual_objective(z + e, t.p, t.R, t.sites) - dual_objective(z - e, t.p, t.R, t.sites)) / 2e-5;
    EXPECT_NEAR(fd, g[k], 1e-7);
  }
}

TEST(Dual, ReducedHessianCanonical) {
  Canonical1D c;
  const Matrix H = dual_hessian_reduced(c.z_star, c.R, c.sites);
  ASSERT_EQ(H.rows(), 1);
  EXPECT_NEAR(H(0, 0), -4.0, 1e-14);
}

TEST(Dual, ReducedHessianMatchesFiniteDifferences) {
  Rng rng(15);
  for (int trial = 0; trial < 6; ++trial) {
    const int n = 3 + trial % 3;
    const auto sites = fixtures::random_sites_2d(rng, n);
    const auto R = trial % 2 ? fixtures::affine_square(0.4, -0.7) : ReferenceMeasure::uniform(SupportRegion::unit_cube(2));
    const auto q = fixtures::random_weights(rng, n, 0.3);
    const Vector z = solve_dual(q, R, sites).z.values();
    const Matrix H = dual_hessian_reduced(z, R, sites);
    EXPECT_LT((H - H.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    const double h = 1e-5;
    for (Eigen::Index l = 0; l < n - 1; ++l) {
      Vector e = Vector::Zero(n);
      e[l] = h;
      e[n - 1] = -h;
      const Vector col =
          (reduced_gradient(dual_gradient(z + e, q, R, sites)) - reduced_gradient(dual_gradient(z - e, q, R, sites))) /
          (2 * h);
      EXPECT_LE((col - H.col(l)).norm(), 1e-3 * H.col(l).norm()) << "trial " << trial << " column " << l;
    }
  }
}

TEST(Dual, HessianNeedsNonemptyCells) {
  const auto sites = SiteSet::from_rows({{0.5, 0.5}, {3.0, 3.0}});
  try {
    dual_hessian_reduced(Vector::Zero(2), ReferenceMeasure::uniform(SupportRegion::unit_cube(2)), sites);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_cell);
  }
}

TEST(Dual, SolveExamples) {
  Canonical1D c;
  const auto rep = solve_dual(c.p, c.R, c.sites);
  EXPECT_TRUE(rep.converged);
  EXPECT_NEAR(rep.z.values()[0], -0.1, 1e-10);
  EXPECT_NEAR(rep.z.values()[1], 0.1, 1e-10);

  ThreeSite2D t;
  const auto r3 = solve_dual(t.p, t.R, t.sites);
  const Vector m = cell_masses(t.R, build_diagram(t.sites, r3.z.values(), t.R.support()));
  EXPECT_LT((m.array() - 1.0 / 3.0).abs().maxCoeff(), 1e-10);
  EXPECT_NEAR(r3.z.values().sum(), 0.0, 1e-14);
  // Sites (1,0) and (0,1) are mirror images, so their potentials agree.
  EXPECT_NEAR(r3.z.values()[1], r3.z.values()[2], 1e-10);

  const SimplexWeights one{Vector::Ones(1)};
  const auto r1 = solve_dual(one, c.R, SiteSet::on_line({0.2}));
  EXPECT_EQ(r1.z.values().size(), 1);
  EXPECT_EQ(r1.z.values()[0], 0.0);
  EXPECT_EQ(r1.iterations, 0);
}

TEST(Dual, SolveRandomProblemsWithMonotoneDamping) {
  Rng rng(77);
  const auto pentagon = SupportRegion::polygon({{0, 0}, {2, 0}, {2.5, 1}, {1, 2}, {-0.5, 1}});
  for (int trial = 0; trial < 24; ++trial) {
    const int n = 2 + trial % 9;
    const auto sites = fixtures::random_sites_2d(rng, n, -0.5, 2.5);
    const auto q = fixtures::random_weights(rng, n, 0.05);
    const auto R = trial % 3 == 0 ? fixtures::affine_square(-0.6, 0.9)
                                  : ReferenceMeasure::uniform(trial % 3 == 1 ? pentagon : SupportRegion::unit_cube(2));
    const auto rep = solve_dual(q, R, sites);
    ASSERT_TRUE(rep.converged);
    EXPECT_LE(rep.gradient_norm, 1e-10);
    for (std::size_t k = 1; k < rep.gradient_norms.size(); ++k) EXPECT_LT(rep.gradient_norms[k], rep.gradient_norms[k - 1]);
    const double floor = 0.5 * std::min(q.min(), rep.min_cell_mass.front());
    for (double m : rep.min_cell_mass) EXPECT_GE(m, floor);
    const Vector m = cell_masses(R, build_diagram(sites, rep.z.values(), R.support()));
    EXPECT_LT((m - q.values()).cwiseAbs().maxCoeff(), 1e-10) << "trial " << trial;
  }
}

TEST(Dual, WarmStartRecoversEmptyCells) {
  const auto sites = SiteSet::from_rows({{0.5, 0.5}, {3.0, 3.0}, {-2.0, 0.4}});
  const SimplexWeights q{Vector{{0.5, 0.3, 0.2}}};
  const auto R = ReferenceMeasure::uniform(SupportRegion::unit_cube(2));
  const auto rep = solve_dual(q, R, sites);
  EXPECT_GT(rep.warm_start_iterations, 0);
  const Vector m = cell_masses(R, build_diagram(sites, rep.z.values(), R.support()));
  EXPECT_LT((m - q.values()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Dual, SolveErrors) {
  Canonical1D c;
  try {
    solve_dual(SimplexWeights(Vector{{1.0, 0.0}}), c.R, c.sites);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::not_interior);
  }
  EXPECT_THROW(solve_dual(SimplexWeights(Vector::Constant(3, 1.0 / 3.0)), c.R, c.sites), Error);
  try {
    solve_dual(SimplexWeights(Vector{{0.5, 0.5}}), ReferenceMeasure::uniform(SupportRegion::unit_cube(3)),
               SiteSet::from_rows({{0.2, 0.2, 0.2}, {0.8, 0.8, 0.8}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unsupported_exact_dimension);
  }
}

TEST(DualProperty, ShiftInvariance) {
  ThreeSite2D t;
  Rng rng(4);
  for (int k = 0; k < 10; ++k) {
    const Vector z = fixtures::random_vector(rng, 3, -0.2, 0.2);
    const Vector shifted = z.array() + 1.5;
    EXPECT_NEAR(dual_objective(z, t.p, t.R, t.sites), dual_objective(shifted, t.p, t.R, t.sites), 1e-12);
    EXPECT_LT((dual_gradient(z, t.p, t.R, t.sites) - dual_gradient(shifted, t.p, t.R, t.sites)).cwiseAbs().maxCoeff(),
              1e-12);
  }
}

TEST(Dual, SensitivityCanonical) {
  Canonical1D c;
  const Matrix B = dual_sensitivity(PotentialVector(c.z_star), c.p, c.R, c.sites);
  ASSERT_EQ(B.rows(), 1);
  ASSERT_EQ(B.cols(), 2);
  EXPECT_NEAR(B(0, 0), 0.5, 1e-14);
  EXPECT_NEAR(B(0, 1), -0.5, 1e-14);
}

TEST(Dual, SensitivityMatchesResolvedPerturbations) {
  Rng rng(19);
  for (int trial = 0; trial < 4; ++trial) {
    const int n = 3 + trial;
    const auto sites = trial == 0 ? ThreeSite2D{}.sites : fixtures::random_sites_2d(rng, n);
    const auto q = trial == 0 ? ThreeSite2D{}.p : fixtures::random_weights(rng, n, 0.3);
    const auto R = ReferenceMeasure::uniform(SupportRegion::unit_cube(2));
    const auto z = solve_dual(q, R, sites).z;
    const Matrix B = dual_sensitivity(z, q, R, sites);
    EXPECT_LT(B.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
    const double eps = 1e-5;
    for (Eigen::Index l = 0; l < n - 1; ++l) {
      const Vector up = solve_dual(shift_weights(q, l, eps), R, sites).z.values();
      const Vector down = solve_dual(shift_weights(q, l, -eps), R, sites).z.values();
      const Vector fd = (up - down) / (2 * eps);
      EXPECT_LE((fd - B.row(l).transpose()).norm(), 1e-4 * std::max(1.0, fd.norm())) << "trial " << trial;
    }
  }
}
