#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace sdot {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Point2 = Eigen::Vector2d;
using Index = std::size_t;

enum class Errc {
  invalid_argument,
  dimension_mismatch,
  unsupported_exact_dimension,
  not_built_against_support,
  empty_facet,
  no_sampler,
  empty_cell,
  not_interior,
  max_iterations_exceeded,
  degenerate_configuration,
  singular_hessian,
  not_psd,
  empty_draws,
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::unsupported_exact_dimension: return "UnsupportedExactDimension";
    case Errc::not_built_against_support: return "NotBuiltAgainstSupport";
    case Errc::empty_facet: return "EmptyFacet";
    case Errc::no_sampler: return "NoSampler";
    case Errc::empty_cell: return "EmptyCell";
    case Errc::not_interior: return "NotInterior";
    case Errc::max_iterations_exceeded: return "MaxIterationsExceeded";
    case Errc::degenerate_configuration: return "DegenerateConfiguration";
    case Errc::singular_hessian: return "SingularHessian";
    case Errc::not_psd: return "NotPSD";
    case Errc::empty_draws: return "EmptyDraws";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

/// Numeric tolerances shared across modules.
namespace tol {
inline constexpr double algebraic = 1e-12;
inline constexpr double on_plane = 1e-10;
inline constexpr double volume = 1e-9;
}  // namespace tol

/// How a numeric result was obtained.
enum class Backend { exact, quadrature, monte_carlo };

inline const char* backend_name(Backend b) {
  switch (b) {
    case Backend::exact: return "exact";
    case Backend::quadrature: return "quadrature";
    case Backend::monte_carlo: return "monte_carlo";
  }
  return "unknown";
}

/// A scalar result with its provenance. std_error is zero for deterministic backends.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  Backend backend = Backend::exact;
};

/// Settings for estimators that fall back to sampling (d >= 3, or on request).
struct MonteCarloOptions {
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
};

/// Support points x_1..x_N of the discrete target, stored row-wise.
class SiteSet {
 public:
  SiteSet() = default;

  explicit SiteSet(Matrix points) : points_(std::move(points)) {
    if (points_.rows() < 1) fail(Errc::invalid_argument, "site set needs at least one point");
    if (points_.cols() < 1) fail(Errc::invalid_argument, "site dimension must be positive");
    for (Eigen::Index i = 0; i < points_.rows(); ++i) {
      if (!points_.row(i).allFinite()) fail(Errc::invalid_argument, "site coordinates must be finite");
      for (Eigen::Index j = 0; j < i; ++j) {
        if ((points_.row(i) - points_.row(j)).squaredNorm() == 0.0) {
          fail(Errc::invalid_argument,
               "sites " + std::to_string(j) + " and " + std::to_string(i) + " coincide");
        }
      }
    }
  }

  static SiteSet from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) fail(Errc::invalid_argument, "site set needs at least one point");
    const std::size_t d = rows.front().size();
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != d) fail(Errc::dimension_mismatch, "inconsistent site dimension");
      for (std::size_t k = 0; k < d; ++k) m(Eigen::Index(i), Eigen::Index(k)) = rows[i][k];
    }
    return SiteSet(std::move(m));
  }

  static SiteSet on_line(const std::vector<double>& xs) {
    Matrix m(static_cast<Eigen::Index>(xs.size()), 1);
    for (std::size_t i = 0; i < xs.size(); ++i) m(Eigen::Index(i), 0) = xs[i];
    return SiteSet(std::move(m));
  }

  Index size() const { return static_cast<Index>(points_.rows()); }
  int dim() const { return static_cast<int>(points_.cols()); }
  Vector point(Index i) const { return points_.row(Eigen::Index(i)).transpose(); }
  const Matrix& points() const { return points_; }

  double sq_norm(Index i) const { return points_.row(Eigen::Index(i)).squaredNorm(); }
  double distance(Index i, Index j) const {
    return (points_.row(Eigen::Index(i)) - points_.row(Eigen::Index(j))).norm();
  }
  double max_pairwise_distance() const {
    double m = 0.0;
    for (Index i = 0; i < size(); ++i)
      for (Index j = i + 1; j < size(); ++j) m = std::max(m, distance(i, j));
    return m;
  }

 private:
  Matrix points_;
};

/// Probability vector over the N sites.
class SimplexWeights {
 public:
  SimplexWeights() = default;

  explicit SimplexWeights(Vector p) : p_(std::move(p)) {
    if (p_.size() < 1) fail(Errc::invalid_argument, "weights must be nonempty");
    for (Eigen::Index i = 0; i < p_.size(); ++i) {
      if (!std::isfinite(p_[i]) || p_[i] < 0.0) fail(Errc::invalid_argument, "weights must be nonnegative");
    }
    if (std::abs(p_.sum() - 1.0) > tol::algebraic) fail(Errc::invalid_argument, "weights must sum to 1");
  }

  static SimplexWeights from_counts(const std::vector<std::size_t>& counts) {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    if (n == 0) fail(Errc::invalid_argument, "counts must not all be zero");
    Vector p(static_cast<Eigen::Index>(counts.size()));
    for (std::size_t i = 0; i < counts.size(); ++i) p[Eigen::Index(i)] = double(counts[i]) / double(n);
    // Division rounding can leave the sum a few ulps off; absorb into the largest entry.
    Eigen::Index imax = 0;
    p.maxCoeff(&imax);
    p[imax] += 1.0 - p.sum();
    return SimplexWeights(std::move(p));
  }

  Index size() const { return static_cast<Index>(p_.size()); }
  double operator[](Index i) const { return p_[Eigen::Index(i)]; }
  const Vector& values() const { return p_; }
  Vector reduced() const { return p_.head(p_.size() - 1); }
  bool interior() const { return (p_.array() > 0.0).all(); }
  double min() const { return p_.minCoeff(); }

 private:
  Vector p_;
};

/// Dual potential normalized so that its entries sum to zero.
class PotentialVector {
 public:
  PotentialVector() = default;

  explicit PotentialVector(Vector z) : z_(std::move(z)) {
    const double scale = std::max(1.0, z_.cwiseAbs().maxCoeff());
    if (std::abs(z_.sum()) > tol::algebraic * scale * double(z_.size())) {
      fail(Errc::invalid_argument, "potential vector is not normalized");
    }
  }

  /// Projects onto the sum-zero hyperplane.
  static PotentialVector normalize(const Vector& z) {
    Vector c = z.array() - z.mean();
    return PotentialVector(std::move(c));
  }

  static PotentialVector zero(Index n) { return PotentialVector(Vector::Zero(Eigen::Index(n))); }

  Index size() const { return static_cast<Index>(z_.size()); }
  double operator[](Index i) const { return z_[Eigen::Index(i)]; }
  const Vector& values() const { return z_; }

 private:
  Vector z_;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  bool operator==(const Interval&) const = default;
};

using Polygon = std::vector<Point2>;

inline double signed_area(const Polygon& poly) {
  double a = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Point2& p = poly[k];
    const Point2& q = poly[(k + 1) % n];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

inline double cross(const Point2& a, const Point2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Convex body known only through a membership test (general dimension, sampling only).
struct ConvexBody {
  int dim = 0;
  std::function<bool(const Vector&)> contains;
  Vector lower;
  Vector upper;
  double volume = 0.0;
  std::string name;
};

/// Convex compact support Y of the reference measure.
class SupportRegion {
 public:
  static SupportRegion interval(double lo, double hi) {
    if (!(hi > lo)) fail(Errc::invalid_argument, "interval support needs lo < hi");
    SupportRegion r;
    r.rep_ = Interval{lo, hi};
    return r;
  }

  /// Counterclockwise convex polygon; validated.
  static SupportRegion polygon(Polygon vertices) {
    const std::size_t n = vertices.size();
    if (n < 3) fail(Errc::invalid_argument, "polygon support needs at least 3 vertices");
    if (!(signed_area(vertices) > 0.0)) fail(Errc::invalid_argument, "polygon must be counterclockwise with positive area");
    double turning = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const Point2 e0 = vertices[(k + 1) % n] - vertices[k];
      const Point2 e1 = vertices[(k + 2) % n] - vertices[(k + 1) % n];
      if (e0.norm() == 0.0) fail(Errc::invalid_argument, "polygon has repeated vertices");
      if (cross(e0, e1) < -tol::algebraic * e0.norm() * e1.norm())
        fail(Errc::invalid_argument, "polygon is not convex");
      turning += std::atan2(cross(e0, e1), e0.dot(e1));
    }
    if (std::abs(turning - 2.0 * std::numbers::pi) > 1e-6) fail(Errc::invalid_argument, "polygon is not simple");
    SupportRegion r;
    r.rep_ = std::move(vertices);
    return r;
  }

  /// Axis-aligned box; an interval in d=1, a polygon in d=2, an implicit body otherwise.
  static SupportRegion box(const Vector& lower, const Vector& upper) {
    if (lower.size() != upper.size() || lower.size() < 1) fail(Errc::dimension_mismatch, "box bounds");
    if (!((upper - lower).array() > 0.0).all()) fail(Errc::invalid_argument, "box needs lower < upper");
    if (lower.size() == 1) return interval(lower[0], upper[0]);
    if (lower.size() == 2) {
      return polygon({{lower[0], lower[1]}, {upper[0], lower[1]}, {upper[0], upper[1]}, {lower[0], upper[1]}});
    }
    auto body = std::make_shared<ConvexBody>();
    body->dim = int(lower.size());
    body->lower = lower;
    body->upper = upper;
    body->volume = (upper - lower).prod();
    body->contains = [lower, upper](const Vector& y) {
      return ((y - lower).array() >= 0.0).all() && ((upper - y).array() >= 0.0).all();
    };
    body->name = "box";
    return SupportRegion(std::move(body));
  }

  static SupportRegion unit_cube(int d) { return box(Vector::Zero(d), Vector::Ones(d)); }

  /// Euclidean ball; always an implicit body (no exact curved clipping).
  static SupportRegion ball(const Vector& center, double radius) {
    if (!(radius > 0.0)) fail(Errc::invalid_argument, "ball radius must be positive");
    const int d = int(center.size());
    if (d < 1) fail(Errc::dimension_mismatch, "ball center");
    auto body = std::make_shared<ConvexBody>();
    body->dim = d;
    body->lower = center.array() - radius;
    body->upper = center.array() + radius;
    body->volume = std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0) * std::pow(radius, d);
    body->contains = [center, radius](const Vector& y) { return (y - center).squaredNorm() <= radius * radius; };
    body->name = "ball";
    return SupportRegion(std::move(body));
  }

  static SupportRegion body(std::shared_ptr<const ConvexBody> b) {
    if (!b || b->dim < 1 || !b->contains || b->lower.size() != b->dim || b->upper.size() != b->dim)
      fail(Errc::invalid_argument, "convex body needs dimension, membership predicate and bounding box");
    return SupportRegion(std::move(b));
  }

  int dim() const {
    if (std::holds_alternative<Interval>(rep_)) return 1;
    if (std::holds_alternative<Polygon>(rep_)) return 2;
    return std::get<Body>(rep_)->dim;
  }

  /// True when cells can be clipped exactly (interval or polygon representation).
  bool exact() const { return !std::holds_alternative<Body>(rep_); }

  const Interval* as_interval() const { return std::get_if<Interval>(&rep_); }
  const Polygon* as_polygon() const { return std::get_if<Polygon>(&rep_); }
  const ConvexBody* as_body() const {
    auto p = std::get_if<Body>(&rep_);
    return p ? p->get() : nullptr;
  }

  double volume() const {
    if (auto iv = as_interval()) return iv->length();
    if (auto pg = as_polygon()) return signed_area(*pg);
    return as_body()->volume;
  }

  bool contains(const Vector& y) const {
    if (y.size() != dim()) fail(Errc::dimension_mismatch, "point dimension differs from support");
    if (auto iv = as_interval()) return y[0] >= iv->lo && y[0] <= iv->hi;
    if (auto pg = as_polygon()) {
      const Point2 p(y[0], y[1]);
      for (std::size_t k = 0; k < pg->size(); ++k) {
        const Point2& a = (*pg)[k];
        const Point2& b = (*pg)[(k + 1) % pg->size()];
        if (cross(b - a, p - a) < 0.0) return false;
      }
      return true;
    }
    return as_body()->contains(y);
  }

  std::pair<Vector, Vector> bounding_box() const {
    if (auto iv = as_interval()) return {Vector::Constant(1, iv->lo), Vector::Constant(1, iv->hi)};
    if (auto pg = as_polygon()) {
      Vector lo = Vector::Constant(2, std::numeric_limits<double>::infinity());
      Vector hi = -lo;
      for (const auto& v : *pg) {
        lo = lo.cwiseMin(Vector(v));
        hi = hi.cwiseMax(Vector(v));
      }
      return {lo, hi};
    }
    return {as_body()->lower, as_body()->upper};
  }

  double diameter() const {
    if (auto iv = as_interval()) return iv->length();
    if (auto pg = as_polygon()) {
      double m = 0.0;
      for (const auto& a : *pg)
        for (const auto& b : *pg) m = std::max(m, (a - b).norm());
      return m;
    }
    auto [lo, hi] = bounding_box();
    return (hi - lo).norm();
  }

  bool operator==(const SupportRegion& other) const {
    if (rep_.index() != other.rep_.index()) return false;
    if (auto iv = as_interval()) return *iv == *other.as_interval();
    if (auto pg = as_polygon()) return *pg == *other.as_polygon();
    return as_body() == other.as_body();
  }

 private:
  using Body = std::shared_ptr<const ConvexBody>;
  SupportRegion() = default;
  explicit SupportRegion(Body b) : rep_(std::move(b)) {}

  std::variant<Interval, Polygon, Body> rep_;
};

}  // namespace sdot
