#include "problems.hpp"

#include <gtest/gtest.h>

using namespace sdot;
using sdot::fixtures::Canonical1D;
using sdot::fixtures::Symmetric2D;

namespace {

// Independent point-in-cell test straight from the cost comparison, with slack.
bool cost_minimal(const SiteSet& sites, const Vector& z, Index i, const Vector& y, double slack) {
  const double ci = 0.5 * (y - sites.point(i)).squaredNorm() - z[Eigen::Index(i)];
  for (Index k = 0; k < sites.size(); ++k)
    if (0.5 * (y - sites.point(k)).squaredNorm() - z[Eigen::Index(k)] < ci - slack) return false;
  return true;
}

bool point_in_polygon(const Polygon& poly, const Point2& p) {
  if (poly.empty()) return false;
  for (std::size_t k = 0; k < poly.size(); ++k)
    if (cross(poly[(k + 1) % poly.size()] - poly[k], p - poly[k]) < 0.0) return false;
  return true;
}

}  // namespace

TEST(Geometry, CanonicalIntervalCells) {
  Canonical1D c;
  const auto d = build_diagram(c.sites, c.z_star, c.R.support());
  // Boundary solves y^2/2 - z1 = (y-1)^2/2 - z2, i.e. y = 1/2 + z1 - z2.
  const double boundary = 0.5 + c.z_star[0] - c.z_star[1];
  ASSERT_NEAR(boundary, 0.3, 1e-15);
  EXPECT_NEAR(d.cell(0).interval()->lo, 0.0, 1e-15);
  EXPECT_NEAR(d.cell(0).interval()->hi, boundary, 1e-15);
  EXPECT_NEAR(d.cell(1).interval()->lo, boundary, 1e-15);
  EXPECT_NEAR(d.cell(1).interval()->hi, 1.0, 1e-15);
  ASSERT_EQ(d.facets().size(), 1u);
  EXPECT_NEAR(d.facets()[0].points[0][0], boundary, 1e-15);
  EXPECT_DOUBLE_EQ(d.facets()[0].extent, 1.0);
}

TEST(Geometry, SymmetricBisectorFacet) {
  Symmetric2D c;
  const auto d = build_diagram(c.sites, Vector::Zero(2), c.R.support());
  ASSERT_EQ(d.facets().size(), 1u);
  const auto& f = d.facets()[0];
  EXPECT_EQ(f.i, 0u);
  EXPECT_EQ(f.j, 1u);
  std::vector<Point2> ends{Point2(f.points[0]), Point2(f.points[1])};
  std::sort(ends.begin(), ends.end(), [](const Point2& a, const Point2& b) { return a.y() < b.y(); });
  EXPECT_NEAR(ends[0].x(), 0.5, 1e-12);
  EXPECT_NEAR(ends[0].y(), 0.0, 1e-12);
  EXPECT_NEAR(ends[1].x(), 0.5, 1e-12);
  EXPECT_NEAR(ends[1].y(), 1.0, 1e-12);
  EXPECT_NEAR(f.extent, 1.0, 1e-12);

  const CellGeometry left = cell_clip(d, 0);
  EXPECT_NEAR(left.volume, 0.5, 1e-12);
  for (const auto& v : *left.polygon()) {
    EXPECT_LE(v.x(), 0.5 + 1e-12);
    EXPECT_GE(v.x(), -1e-12);
  }
  EXPECT_GT(signed_area(*left.polygon()), 0.0);
}

TEST(Geometry, SingleSiteIsWholeSupport) {
  const auto sites = SiteSet::from_rows({{0.3, 0.9}});
  const auto Y = SupportRegion::unit_cube(2);
  for (double z : {-3.0, 0.0, 5.0}) {
    const auto d = build_diagram(sites, Vector::Constant(1, z), Y);
    EXPECT_TRUE(d.facets().empty());
    EXPECT_NEAR(d.cell(0).volume, 1.0, 1e-15);
    EXPECT_EQ(locate(sites, Vector::Constant(1, z), Vector{{0.1, 0.2}}), 0u);
  }
}

TEST(Geometry, LocateCanonicalAndTies) {
  Canonical1D c;
  EXPECT_EQ(locate(c.sites, c.z_star, Vector::Constant(1, 0.2)), 0u);
  EXPECT_EQ(locate(c.sites, c.z_star, Vector::Constant(1, 0.9)), 1u);
  // Exactly on the facet: smallest index wins.
  EXPECT_EQ(locate(c.sites, Vector::Zero(2), Vector::Constant(1, 0.5)), 0u);
  EXPECT_EQ(locate(SiteSet::on_line({0.4, 0.6}), Vector::Zero(2), Vector::Constant(1, 0.5)), 0u);
}

TEST(Geometry, CanonicalSecondCellClip) {
  Canonical1D c;
  const auto cell = cell_clip(build_diagram(c.sites, c.z_star, c.R.support()), 1);
  EXPECT_NEAR(cell.interval()->lo, 0.3, 1e-15);
  EXPECT_NEAR(cell.interval()->hi, 1.0, 1e-15);
}

TEST(Geometry, EmptyCellsAreFlagged) {
  Canonical1D c;
  // Boundary 1/2 + z1 - z2 = -3.5 lies left of Y.
  const auto d = build_diagram(c.sites, Vector{{-2.0, 2.0}}, c.R.support());
  EXPECT_TRUE(d.cell(0).empty);
  EXPECT_FALSE(d.cell(1).empty);
  EXPECT_TRUE(d.facets().empty());

  Symmetric2D s;
  const auto d2 = build_diagram(s.sites, Vector{{5.0, -5.0}}, s.R.support());
  EXPECT_TRUE(cell_clip(d2, 1).empty);
  EXPECT_NEAR(d2.cell(0).volume, 1.0, 1e-12);
}

TEST(Geometry, Errors) {
  Canonical1D c;
  try {
    build_diagram(c.sites, Vector::Zero(3), c.R.support());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::dimension_mismatch);
  }
  try {
    build_diagram(c.sites, Vector::Zero(2), SupportRegion::unit_cube(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::dimension_mismatch);
  }
  try {
    locate(c.sites, Vector::Zero(2), Vector::Zero(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::dimension_mismatch);
  }
  const auto sites3 = SiteSet::from_rows({{0, 0, 0}, {1, 1, 1}});
  try {
    build_diagram(sites3, Vector::Zero(2), SupportRegion::unit_cube(3), true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unsupported_exact_dimension);
  }
  const auto implicit = build_diagram(sites3, Vector::Zero(2), SupportRegion::unit_cube(3));
  EXPECT_TRUE(implicit.cell(0).implicit());
  EXPECT_EQ(implicit.facets().size(), 1u);
  EXPECT_THROW(cell_clip(implicit, 0), Error);
}

TEST(Geometry, SupportValidation) {
  EXPECT_THROW(SupportRegion::polygon({{0, 0}, {0, 1}, {1, 1}, {1, 0}}), Error);            // clockwise
  EXPECT_THROW(SupportRegion::polygon({{0, 0}, {2, 0}, {1, 0.2}, {2, 2}, {0, 2}}), Error);  // reflex vertex
  EXPECT_THROW(SupportRegion::interval(1.0, 1.0), Error);
  EXPECT_THROW(SiteSet::on_line({0.5, 0.5}), Error);
  EXPECT_NO_THROW(SupportRegion::polygon({{0, 0}, {1, 0}, {0, 1}}));
}

TEST(GeometryProperty, CellsTileTheSupport) {
  Rng rng(11);
  const auto Y = SupportRegion::polygon({{0, 0}, {2, 0}, {2.5, 1}, {1, 2}, {-0.5, 1}});
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + trial % 7;
    const auto sites = fixtures::random_sites_2d(rng, n, -0.5, 2.5);
    const Vector z = fixtures::random_vector(rng, n, -0.5, 0.5);
    const auto d = build_diagram(sites, z, Y);
    double total = 0.0;
    for (const auto& cell : d.cells()) total += cell.volume;
    EXPECT_NEAR(total, Y.volume(), 1e-9 * Y.volume()) << "trial " << trial;
  }
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + trial % 6;
    const auto sites = SiteSet(fixtures::random_vector(rng, n, -1.0, 2.0));
    const Vector z = fixtures::random_vector(rng, n, -0.5, 0.5);
    const auto d = build_diagram(sites, z, SupportRegion::interval(0.0, 1.0));
    double total = 0.0;
    for (const auto& cell : d.cells()) total += cell.volume;
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(GeometryProperty, LocateAgreesWithClippedCells) {
  Rng rng(5);
  const auto Y = SupportRegion::unit_cube(2);
  const auto sites = fixtures::random_sites_2d(rng, 7);
  const Vector z = fixtures::random_vector(rng, 7, -0.05, 0.05);
  const auto d = build_diagram(sites, z, Y);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0;
  for (int k = 0; k < 10000; ++k) {
    const Vector y{{u(rng), u(rng)}};
    const Index i = locate(sites, z, y);
    // Exempt points within 1e-10 of any bisector through the located cell.
    bool near_facet = false;
    for (Index j = 0; j < sites.size(); ++j) {
      if (j == i) continue;
      const Vector v = sites.point(i) - sites.point(j);
      if (std::abs(v.dot(y) - laguerre_offset(sites, z, i, j)) / v.norm() < 1e-10) near_facet = true;
    }
    if (near_facet) continue;
    ++checked;
    ASSERT_TRUE(cost_minimal(sites, z, i, y, 0.0));
    for (Index j = 0; j < sites.size(); ++j)
      ASSERT_EQ(point_in_polygon(*d.cell(j).polygon(), Point2(y)), j == i) << "point " << y.transpose();
  }
  EXPECT_GT(checked, 9900);
}

TEST(GeometryProperty, OffsetAntisymmetryAndCocycle) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto sites = fixtures::random_sites_2d(rng, 5, -3.0, 3.0);
    const Vector z = fixtures::random_vector(rng, 5, -2.0, 2.0);
    const Matrix b = laguerre_offsets(sites, z);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        EXPECT_NEAR(b(i, j), -b(j, i), 1e-12);
        for (int k = 0; k < 5; ++k) {
          if (i == j || j == k || i == k) continue;
          EXPECT_NEAR(b(i, j) + b(j, k), b(i, k), 1e-12);
        }
      }
  }
}

TEST(GeometryProperty, ShiftAlongOnesChangesNothing) {
  Rng rng(8);
  const auto Y = SupportRegion::unit_cube(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto sites = fixtures::random_sites_2d(rng, 5);
    const Vector z = fixtures::random_vector(rng, 5, -0.1, 0.1);
    const Vector shifted = z.array() + 3.7;
    EXPECT_LT((laguerre_offsets(sites, z) - laguerre_offsets(sites, shifted)).cwiseAbs().maxCoeff(), 1e-12);
    const auto a = build_diagram(sites, z, Y), b = build_diagram(sites, shifted, Y);
    for (Index i = 0; i < 5; ++i) {
      EXPECT_NEAR(a.cell(i).volume, b.cell(i).volume, 1e-12);
      ASSERT_EQ(a.cell(i).polygon()->size(), b.cell(i).polygon()->size());
      for (std::size_t v = 0; v < a.cell(i).polygon()->size(); ++v)
        EXPECT_LT(((*a.cell(i).polygon())[v] - (*b.cell(i).polygon())[v]).norm(), 1e-12);
    }
    const Vector y = fixtures::random_vector(rng, 2, 0.0, 1.0);
    EXPECT_EQ(locate(sites, z, y), locate(sites, shifted, y));
  }
}

TEST(GeometryProperty, FacetEndpointsLieOnBothCells) {
  Rng rng(21);
  const auto Y = SupportRegion::unit_cube(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto sites = fixtures::random_sites_2d(rng, 6);
    const Vector z = fixtures::random_vector(rng, 6, -0.05, 0.05);
    const auto d = build_diagram(sites, z, Y);
    EXPECT_FALSE(d.facets().empty());
    for (const auto& f : d.facets()) {
      ASSERT_EQ(f.points.size(), 2u);
      for (const auto& p : f.points) {
        EXPECT_NEAR(f.difference.dot(p), f.offset, 1e-10);
        EXPECT_TRUE(cost_minimal(sites, z, f.i, p, 1e-10));
        EXPECT_TRUE(cost_minimal(sites, z, f.j, p, 1e-10));
        EXPECT_TRUE((p.array() >= -1e-12).all() && (p.array() <= 1 + 1e-12).all());
      }
      EXPECT_NEAR(f.normal.norm(), 1.0, 1e-15);
    }
  }
}
