#pragma once

#include "sdot/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace sdot {

/// b_ij(z) = (|x_i|^2 - |x_j|^2)/2 - z_i + z_j, the offset of the bisector between cells i and j.
inline double laguerre_offset(const SiteSet& sites, const Vector& z, Index i, Index j) {
  return 0.5 * (sites.sq_norm(i) - sites.sq_norm(j)) - z[Eigen::Index(i)] + z[Eigen::Index(j)];
}

inline Matrix laguerre_offsets(const SiteSet& sites, const Vector& z) {
  const auto n = Eigen::Index(sites.size());
  Matrix b = Matrix::Zero(n, n);
  for (Index i = 0; i < sites.size(); ++i)
    for (Index j = 0; j < sites.size(); ++j)
      if (i != j) b(Eigen::Index(i), Eigen::Index(j)) = laguerre_offset(sites, z, i, j);
  return b;
}

namespace detail {
inline void check_potential(const SiteSet& sites, const Vector& z) {
  if (Index(z.size()) != sites.size())
    fail(Errc::dimension_mismatch, "potential has " + std::to_string(z.size()) + " entries, expected " +
                                       std::to_string(sites.size()));
}
inline void check_point(const SiteSet& sites, const Vector& y) {
  if (y.size() != sites.dim()) fail(Errc::dimension_mismatch, "query point dimension differs from sites");
}
}  // namespace detail

/// Index of the cell containing y: argmin_i |y - x_i|^2/2 - z_i, smallest index on ties.
inline Index locate(const SiteSet& sites, const Vector& z, const Vector& y) {
  detail::check_potential(sites, z);
  detail::check_point(sites, y);
  const Matrix& X = sites.points();
  Index best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double cost = 0.5 * (y.transpose() - X.row(i)).squaredNorm() - z[i];
    if (cost < best_cost) {
      best_cost = cost;
      best = Index(i);
    }
  }
  return best;
}

/// Closed half-space {y : <normal, y> >= offset}.
struct HalfSpace {
  Vector normal;
  double offset = 0.0;
  bool contains(const Vector& y, double slack = 0.0) const { return normal.dot(y) >= offset - slack; }
};

/// The N-1 half-spaces whose intersection (with Y) is the Laguerre cell C_i(z).
inline std::vector<HalfSpace> cell_halfspaces(const SiteSet& sites, const Vector& z, Index i) {
  std::vector<HalfSpace> hs;
  hs.reserve(sites.size() - 1);
  for (Index j = 0; j < sites.size(); ++j) {
    if (j == i) continue;
    hs.push_back({sites.point(i) - sites.point(j), laguerre_offset(sites, z, i, j)});
  }
  return hs;
}

/// Sutherland-Hodgman step: keeps the part of a convex polygon where <normal, y> >= offset.
inline Polygon clip_polygon(const Polygon& poly, const Point2& normal, double offset) {
  Polygon out;
  const std::size_t n = poly.size();
  if (n == 0) return out;
  out.reserve(n + 1);
  for (std::size_t k = 0; k < n; ++k) {
    const Point2& p = poly[k];
    const Point2& q = poly[(k + 1) % n];
    const double fp = normal.dot(p) - offset;
    const double fq = normal.dot(q) - offset;
    if (fp >= 0.0) out.push_back(p);
    if ((fp >= 0.0) != (fq >= 0.0)) out.push_back(p + (q - p) * (fp / (fp - fq)));
  }
  // Drop near-duplicate consecutive vertices produced by clipping through a vertex.
  Polygon clean;
  clean.reserve(out.size());
  for (const auto& v : out) {
    const double scale = 1.0 + v.cwiseAbs().maxCoeff();
    if (clean.empty() || (v - clean.back()).norm() > tol::algebraic * scale) clean.push_back(v);
  }
  while (clean.size() > 1 && (clean.front() - clean.back()).norm() <= tol::algebraic * (1.0 + clean.front().cwiseAbs().maxCoeff()))
    clean.pop_back();
  if (clean.size() < 3) clean.clear();
  return clean;
}

inline Polygon clip_polygon(Polygon poly, const std::vector<HalfSpace>& halfspaces) {
  for (const auto& h : halfspaces) {
    if (poly.empty()) break;
    poly = clip_polygon(poly, Point2(h.normal[0], h.normal[1]), h.offset);
  }
  return poly;
}

/// Intersection of an interval with 1-D half-lines a*y >= c.
inline std::optional<Interval> clip_interval(Interval iv, const std::vector<HalfSpace>& halfspaces) {
  for (const auto& h : halfspaces) {
    const double a = h.normal[0];
    if (a > 0.0) {
      iv.lo = std::max(iv.lo, h.offset / a);
    } else if (a < 0.0) {
      iv.hi = std::min(iv.hi, h.offset / a);
    } else if (h.offset > 0.0) {
      return std::nullopt;
    }
  }
  if (!(iv.hi > iv.lo)) return std::nullopt;
  return iv;
}

/// Geometry of one cell: an interval (d=1), a convex polygon (d=2), or the implicit half-space list.
struct CellGeometry {
  std::variant<Interval, Polygon, std::vector<HalfSpace>> shape;
  bool empty = false;
  /// Lebesgue volume of C_i ∩ Y; NaN when the cell is implicit.
  double volume = std::numeric_limits<double>::quiet_NaN();

  const Interval* interval() const { return std::get_if<Interval>(&shape); }
  const Polygon* polygon() const { return std::get_if<Polygon>(&shape); }
  const std::vector<HalfSpace>* halfspaces() const { return std::get_if<std::vector<HalfSpace>>(&shape); }
  bool implicit() const { return halfspaces() != nullptr; }
};

/// Shared face D_ij = C_i ∩ C_j on the hyperplane <x_i - x_j, y> = b_ij, with i < j.
struct FacetGeometry {
  Index i = 0;
  Index j = 0;
  Vector difference;  // x_i - x_j
  Vector normal;      // unit normal, (x_i - x_j)/|x_i - x_j|
  double offset = 0.0;
  /// One point for d=1, two segment endpoints for d=2, empty when implicit.
  std::vector<Vector> points;
  /// (d-1)-dimensional Hausdorff measure: 1 for a point, segment length in d=2, NaN when implicit.
  double extent = std::numeric_limits<double>::quiet_NaN();

  bool implicit() const { return points.empty(); }
};

class LaguerreDiagram {
 public:
  LaguerreDiagram(SiteSet sites, Vector z, SupportRegion support, std::vector<CellGeometry> cells,
                  std::vector<FacetGeometry> facets)
      : sites_(std::move(sites)),
        z_(std::move(z)),
        support_(std::move(support)),
        cells_(std::move(cells)),
        facets_(std::move(facets)),
        offsets_(laguerre_offsets(sites_, z_)) {}

  const SiteSet& sites() const { return sites_; }
  const Vector& potential() const { return z_; }
  const SupportRegion& support() const { return support_; }
  int dim() const { return sites_.dim(); }
  Index size() const { return sites_.size(); }
  bool exact() const { return support_.exact(); }

  const CellGeometry& cell(Index i) const { return cells_.at(i); }
  const std::vector<CellGeometry>& cells() const { return cells_; }
  const std::vector<FacetGeometry>& facets() const { return facets_; }
  const Matrix& offsets() const { return offsets_; }

  const FacetGeometry* facet(Index i, Index j) const {
    if (i > j) std::swap(i, j);
    for (const auto& f : facets_)
      if (f.i == i && f.j == j) return &f;
    return nullptr;
  }

 private:
  SiteSet sites_;
  Vector z_;
  SupportRegion support_;
  std::vector<CellGeometry> cells_;
  std::vector<FacetGeometry> facets_;
  Matrix offsets_;
};

namespace detail {

inline FacetGeometry facet_frame(const SiteSet& sites, const Vector& z, Index i, Index j) {
  FacetGeometry f;
  f.i = i;
  f.j = j;
  f.difference = sites.point(i) - sites.point(j);
  f.normal = f.difference / f.difference.norm();
  f.offset = laguerre_offset(sites, z, i, j);
  return f;
}

// Parameter range of the line {p0 + s*dir} satisfying alpha + beta*s >= 0 for all constraints.
struct LineRange {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool feasible = true;

  void add(double alpha, double beta, double scale) {
    if (std::abs(beta) <= tol::algebraic * scale) {
      if (alpha < -tol::algebraic * scale) feasible = false;
      return;
    }
    const double s = -alpha / beta;
    if (beta > 0.0) lo = std::max(lo, s);
    else hi = std::min(hi, s);
  }
};

inline std::optional<FacetGeometry> facet_2d(const SiteSet& sites, const Vector& z, const Polygon& region, Index i,
                                             Index j, double diam) {
  FacetGeometry f = facet_frame(sites, z, i, j);
  const Point2 v(f.difference[0], f.difference[1]);
  const Point2 p0 = v * (f.offset / v.squaredNorm());
  const Point2 dir(-v.y() / v.norm(), v.x() / v.norm());
  const double scale = 1.0 + diam + p0.norm();

  LineRange range;
  const std::size_t m = region.size();
  for (std::size_t k = 0; k < m; ++k) {
    const Point2& a = region[k];
    const Point2 e = region[(k + 1) % m] - a;
    // cross(e, y - a) >= 0 keeps the left side of a counterclockwise edge.
    range.add(cross(e, p0 - a), cross(e, dir), scale * e.norm());
  }
  const Vector xi = sites.point(i);
  for (Index k = 0; k < sites.size(); ++k) {
    if (k == i || k == j) continue;
    const Vector w = xi - sites.point(k);
    const Point2 w2(w[0], w[1]);
    range.add(w2.dot(p0) - laguerre_offset(sites, z, i, k), w2.dot(dir), scale * w2.norm());
  }
  if (!range.feasible || !(range.hi - range.lo > tol::algebraic * (1.0 + diam))) return std::nullopt;
  const Point2 a = p0 + range.lo * dir;
  const Point2 b = p0 + range.hi * dir;
  f.points = {Vector(a), Vector(b)};
  f.extent = (b - a).norm();
  return f;
}

inline std::optional<FacetGeometry> facet_1d(const SiteSet& sites, const Vector& z, const Interval& region, Index i,
                                             Index j) {
  FacetGeometry f = facet_frame(sites, z, i, j);
  const double y = f.offset / f.difference[0];
  const double scale = 1.0 + std::abs(y) + region.length();
  if (y < region.lo - tol::algebraic * scale || y > region.hi + tol::algebraic * scale) return std::nullopt;
  const Vector yv = Vector::Constant(1, y);
  for (Index k = 0; k < sites.size(); ++k) {
    if (k == i || k == j) continue;
    const double lhs = (sites.point(i) - sites.point(k)).dot(yv);
    if (lhs < laguerre_offset(sites, z, i, k) - tol::algebraic * scale * (1.0 + std::abs(lhs))) return std::nullopt;
  }
  f.points = {yv};
  f.extent = 1.0;
  return f;
}

}  // namespace detail

/// Builds the Laguerre (power) diagram of the sites with potential z, restricted to the support.
/// Exact cells and facets for interval and polygon supports; implicit half-space cells otherwise.
inline LaguerreDiagram build_diagram(const SiteSet& sites, const Vector& z, const SupportRegion& support,
                                     bool require_exact = false) {
  detail::check_potential(sites, z);
  if (support.dim() != sites.dim()) fail(Errc::dimension_mismatch, "support and sites differ in dimension");
  if (require_exact && !support.exact())
    fail(Errc::unsupported_exact_dimension, "exact cell geometry is only available on interval/polygon supports");

  const Index n = sites.size();
  const double total = support.volume();
  std::vector<CellGeometry> cells(n);
  std::vector<FacetGeometry> facets;

  if (!support.exact()) {
    for (Index i = 0; i < n; ++i) cells[i].shape = cell_halfspaces(sites, z, i);
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) facets.push_back(detail::facet_frame(sites, z, i, j));
    return LaguerreDiagram(sites, z, support, std::move(cells), std::move(facets));
  }

  const double empty_volume = 1e-14 * total;
  for (Index i = 0; i < n; ++i) {
    const auto hs = cell_halfspaces(sites, z, i);
    CellGeometry& c = cells[i];
    if (auto iv = support.as_interval()) {
      auto clipped = clip_interval(*iv, hs);
      c.shape = clipped.value_or(Interval{0.0, 0.0});
      c.volume = clipped ? clipped->length() : 0.0;
    } else {
      Polygon poly = clip_polygon(*support.as_polygon(), hs);
      c.volume = poly.empty() ? 0.0 : signed_area(poly);
      c.shape = std::move(poly);
    }
    c.empty = !(c.volume > empty_volume);
  }

  for (Index i = 0; i < n; ++i) {
    if (cells[i].empty) continue;
    for (Index j = i + 1; j < n; ++j) {
      if (cells[j].empty) continue;
      std::optional<FacetGeometry> f = support.as_interval()
                                           ? detail::facet_1d(sites, z, *support.as_interval(), i, j)
                                           : detail::facet_2d(sites, z, *support.as_polygon(), i, j, support.diameter());
      if (f) facets.push_back(std::move(*f));
    }
  }
  return LaguerreDiagram(sites, z, support, std::move(cells), std::move(facets));
}

/// Exact geometry of C_i(z) ∩ Y.
inline CellGeometry cell_clip(const LaguerreDiagram& diagram, Index i) {
  if (!diagram.exact())
    fail(Errc::unsupported_exact_dimension, "cell clipping requires an interval or polygon support");
  if (i >= diagram.size()) fail(Errc::invalid_argument, "cell index out of range");
  return diagram.cell(i);
}

/// Exact geometry of an arbitrary region C ∩ ⋂ halfspaces for an exact cell C.
inline CellGeometry clip_cell(const CellGeometry& cell, const std::vector<HalfSpace>& halfspaces) {
  CellGeometry out;
  if (cell.empty) {
    out.shape = cell.shape;
    out.empty = true;
    out.volume = 0.0;
    return out;
  }
  if (auto iv = cell.interval()) {
    auto clipped = clip_interval(*iv, halfspaces);
    out.shape = clipped.value_or(Interval{0.0, 0.0});
    out.volume = clipped ? clipped->length() : 0.0;
  } else if (auto pg = cell.polygon()) {
    Polygon poly = clip_polygon(*pg, halfspaces);
    out.volume = poly.empty() ? 0.0 : signed_area(poly);
    out.shape = std::move(poly);
  } else {
    fail(Errc::unsupported_exact_dimension, "cannot clip an implicit cell exactly");
  }
  out.empty = !(out.volume > 0.0);
  return out;
}

}  // namespace sdot
