#pragma once

#include "sdot/core.hpp"
#include "sdot/geometry.hpp"
#include "sdot/quadrature.hpp"
#include "sdot/random.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>

namespace sdot {

/// Absolutely continuous reference measure R on a convex compact support Y.
class ReferenceMeasure {
 public:
  using Density = std::function<double(const Vector&)>;

  static ReferenceMeasure uniform(SupportRegion support) {
    ReferenceMeasure r(std::move(support));
    r.constant_ = 1.0 / r.support_.volume();
    r.sup_bound_ = r.constant_;
    return r;
  }

  /// User density; it must be continuous on Y and integrate to one. The normalization is
  /// checked by quadrature on exact supports and by sampling otherwise. Without a sup-norm
  /// bound the measure cannot be sampled.
  static ReferenceMeasure with_density(SupportRegion support, Density rho, std::optional<double> sup_bound,
                                       const MonteCarloOptions& validation = {}) {
    if (!rho) fail(Errc::invalid_argument, "density evaluator is empty");
    if (sup_bound && !(*sup_bound > 0.0)) fail(Errc::invalid_argument, "density sup-norm bound must be positive");
    ReferenceMeasure r(std::move(support));
    r.rho_ = std::move(rho);
    r.sup_bound_ = sup_bound;

    if (r.support_.exact()) {
      const double total = r.integrate_exact_region(r.whole_support(), [](const Vector&) { return 1.0; }, 0.0);
      if (std::abs(total - 1.0) > 1e-6)
        fail(Errc::invalid_argument, "density integrates to " + std::to_string(total) + ", expected 1");
    } else {
      // Uniform proposal on Y: E[vol(Y) rho(Y)] = 1.
      Rng rng(validation.seed);
      const double vol = r.support_.volume();
      double sum = 0.0, sum_sq = 0.0;
      for (std::size_t k = 0; k < validation.samples; ++k) {
        const double v = vol * r.rho_(r.sample_support(rng));
        sum += v;
        sum_sq += v * v;
      }
      const double n = double(validation.samples);
      const double mean = sum / n;
      const double se = std::sqrt(std::max(0.0, sum_sq / n - mean * mean) / n);
      if (std::abs(mean - 1.0) > 4.0 * se + 1e-6)
        fail(Errc::invalid_argument, "density integrates to about " + std::to_string(mean) + ", expected 1");
    }
    return r;
  }

  const SupportRegion& support() const { return support_; }
  int dim() const { return support_.dim(); }
  bool is_uniform() const { return !rho_; }
  bool can_sample() const { return sup_bound_.has_value(); }
  std::optional<double> sup_bound() const { return sup_bound_; }

  /// Density value; zero outside Y.
  double density(const Vector& y) const {
    if (!support_.contains(y)) return 0.0;
    return rho_ ? rho_(y) : constant_;
  }

  Vector sample(Rng& rng) const {
    if (!can_sample()) fail(Errc::no_sampler, "reference measure has no sup-norm bound for rejection sampling");
    if (!rho_) return sample_support(rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (;;) {
      Vector y = sample_support(rng);
      if (unit(rng) * *sup_bound_ <= rho_(y)) return y;
    }
  }

  /// ∫_region f dR over an exact cell (interval or polygon).
  template <class F, class T>
  T integrate_exact_region(const CellGeometry& region, F f, const T& zero) const {
    if (region.empty) return zero;
    auto weighted = [&](const Vector& y) { return f(y) * (rho_ ? rho_(y) : constant_); };
    if (auto iv = region.interval()) return quadrature::integrate_interval(iv->lo, iv->hi, weighted, zero);
    if (auto pg = region.polygon()) return quadrature::integrate_polygon(*pg, weighted, zero);
    fail(Errc::unsupported_exact_dimension, "region is implicit; use a Monte Carlo estimator");
  }

  /// R(region) for an exact cell: closed form for uniform densities, quadrature otherwise.
  Estimate region_mass(const CellGeometry& region) const {
    if (region.implicit()) fail(Errc::unsupported_exact_dimension, "region is implicit; use a Monte Carlo estimator");
    if (region.empty) return {0.0, 0.0, rho_ ? Backend::quadrature : Backend::exact};
    if (!rho_) return {region.volume * constant_, 0.0, Backend::exact};
    return {integrate_exact_region(region, [](const Vector&) { return 1.0; }, 0.0), 0.0, Backend::quadrature};
  }

  /// Line density along an exact facet (ρ at the point in d=1, ∫ρ dH^1 along the segment in d=2).
  template <class F, class T>
  T integrate_facet(const FacetGeometry& facet, F f, const T& zero) const {
    if (facet.points.size() == 1) return f(facet.points[0]) * density(facet.points[0]);
    if (facet.points.size() == 2) {
      auto weighted = [&](const Vector& y) { return f(y) * (rho_ ? rho_(y) : constant_); };
      return quadrature::integrate_segment(facet.points[0], facet.points[1], weighted, zero);
    }
    fail(Errc::unsupported_exact_dimension, "facet is implicit; use the thin-slab estimator");
  }

  CellGeometry whole_support() const {
    CellGeometry c;
    if (auto iv = support_.as_interval()) c.shape = *iv;
    else if (auto pg = support_.as_polygon()) c.shape = *pg;
    else c.shape = std::vector<HalfSpace>{};
    c.volume = support_.volume();
    return c;
  }

 private:
  explicit ReferenceMeasure(SupportRegion support) : support_(std::move(support)) {}

  Vector sample_support(Rng& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (auto iv = support_.as_interval()) return Vector::Constant(1, iv->lo + unit(rng) * iv->length());
    auto [lo, hi] = support_.bounding_box();
    Vector y(lo.size());
    for (;;) {
      for (Eigen::Index k = 0; k < y.size(); ++k) y[k] = lo[k] + unit(rng) * (hi[k] - lo[k]);
      if (support_.contains(y)) return y;
    }
  }

  SupportRegion support_;
  Density rho_;
  double constant_ = 0.0;
  std::optional<double> sup_bound_;
};

enum class FacetEstimator { exact_line_integral, thin_slab_mc };

inline const char* facet_estimator_name(FacetEstimator e) {
  return e == FacetEstimator::exact_line_integral ? "exact-line-integral" : "thin-slab-mc";
}

/// R-surface measure R+(D_ij) = ∫_{D_ij} ρ dH^{d-1} of one facet.
struct FacetMeasureRecord {
  Index i = 0;
  Index j = 0;
  double surface_mass = 0.0;
  double extent = 0.0;
  FacetEstimator estimator = FacetEstimator::exact_line_integral;
  double std_error = 0.0;
};

namespace detail {
inline void check_support(const ReferenceMeasure& R, const LaguerreDiagram& diagram) {
  if (!(R.support() == diagram.support()))
    fail(Errc::not_built_against_support, "diagram was built against a different support");
}
}  // namespace detail

/// Hit-or-miss estimate of R(C_i(z)).
inline Estimate mc_cell_mass(const ReferenceMeasure& R, const SiteSet& sites, const Vector& z, Index i,
                             std::size_t n_samples, std::uint64_t seed) {
  if (!R.can_sample()) fail(Errc::no_sampler, "reference measure cannot be sampled");
  if (n_samples == 0) fail(Errc::invalid_argument, "need at least one sample");
  Rng rng(seed);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < n_samples; ++k)
    if (locate(sites, z, R.sample(rng)) == i) ++hits;
  const double m = double(hits) / double(n_samples);
  return {m, std::sqrt(m * (1.0 - m) / double(n_samples)), Backend::monte_carlo};
}

/// R(C_i(z)). Exact for uniform densities on interval/polygon supports, quadrature for
/// other densities there, Monte Carlo on implicit supports.
inline Estimate cell_mass(const ReferenceMeasure& R, const LaguerreDiagram& diagram, Index i,
                          const MonteCarloOptions& mc = {}) {
  detail::check_support(R, diagram);
  if (i >= diagram.size()) fail(Errc::invalid_argument, "cell index out of range");
  if (!diagram.exact()) return mc_cell_mass(R, diagram.sites(), diagram.potential(), i, mc.samples, mc.seed);
  return R.region_mass(diagram.cell(i));
}

inline Vector cell_masses(const ReferenceMeasure& R, const LaguerreDiagram& diagram, const MonteCarloOptions& mc = {}) {
  Vector m(Eigen::Index(diagram.size()));
  for (Index i = 0; i < diagram.size(); ++i) m[Eigen::Index(i)] = cell_mass(R, diagram, i, mc).value;
  return m;
}

namespace detail {

// Half-spaces of the slab |<n, y> - c| <= eps around the bisector of (i, j), plus the
// constraints keeping i and j the two cheapest sites.
inline std::vector<HalfSpace> slab_halfspaces(const LaguerreDiagram& diagram, Index i, Index j, double eps) {
  const SiteSet& sites = diagram.sites();
  const Vector& z = diagram.potential();
  const Vector v = sites.point(i) - sites.point(j);
  const double norm = v.norm();
  const Vector n = v / norm;
  const double c = laguerre_offset(sites, z, i, j) / norm;
  std::vector<HalfSpace> hs{{n, c - eps}, {-n, -c - eps}};
  for (Index k = 0; k < sites.size(); ++k) {
    if (k == i || k == j) continue;
    hs.push_back({sites.point(i) - sites.point(k), laguerre_offset(sites, z, i, k)});
    hs.push_back({sites.point(j) - sites.point(k), laguerre_offset(sites, z, j, k)});
  }
  return hs;
}

inline bool in_all(const std::vector<HalfSpace>& hs, const Vector& y) {
  for (const auto& h : hs)
    if (!h.contains(y)) return false;
  return true;
}

inline void check_pair(const LaguerreDiagram& diagram, Index i, Index j) {
  if (i == j || i >= diagram.size() || j >= diagram.size()) fail(Errc::empty_facet, "invalid facet pair");
}

}  // namespace detail

inline double default_slab_half_width(const SupportRegion& support) { return 1e-3 * support.diameter(); }

/// Thin-slab estimate R(slab_eps ∩ adjacency region)/(2 eps) of R+(D_ij), by sampling.
/// Bias is O(eps).
inline FacetMeasureRecord thin_slab_surface_mass(const ReferenceMeasure& R, const LaguerreDiagram& diagram, Index i,
                                                 Index j, double eps, const MonteCarloOptions& mc) {
  detail::check_support(R, diagram);
  detail::check_pair(diagram, i, j);
  if (i > j) std::swap(i, j);
  if (!(eps > 0.0)) fail(Errc::invalid_argument, "slab half-width must be positive");
  if (!R.can_sample()) fail(Errc::no_sampler, "reference measure cannot be sampled");
  const auto hs = detail::slab_halfspaces(diagram, i, j, eps);
  Rng rng(mc.seed);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < mc.samples; ++k)
    if (detail::in_all(hs, R.sample(rng))) ++hits;
  const double n = double(mc.samples);
  const double m = double(hits) / n;
  FacetMeasureRecord rec;
  rec.i = i;
  rec.j = j;
  rec.surface_mass = m / (2.0 * eps);
  rec.std_error = std::sqrt(m * (1.0 - m) / n) / (2.0 * eps);
  rec.estimator = FacetEstimator::thin_slab_mc;
  rec.extent = std::numeric_limits<double>::quiet_NaN();
  return rec;
}

/// Same slab quotient with the slab region clipped exactly (interval/polygon supports).
inline double thin_slab_surface_mass_exact(const ReferenceMeasure& R, const LaguerreDiagram& diagram, Index i,
                                           Index j, double eps) {
  detail::check_support(R, diagram);
  detail::check_pair(diagram, i, j);
  if (!(eps > 0.0)) fail(Errc::invalid_argument, "slab half-width must be positive");
  const CellGeometry slab = clip_cell(R.whole_support(), detail::slab_halfspaces(diagram, i, j, eps));
  return R.region_mass(slab).value / (2.0 * eps);
}

/// R+(D) for a facet of the diagram.
inline FacetMeasureRecord facet_surface_mass(const ReferenceMeasure& R, const LaguerreDiagram& diagram,
                                             const FacetGeometry& facet, const MonteCarloOptions& mc = {}) {
  detail::check_support(R, diagram);
  detail::check_pair(diagram, facet.i, facet.j);
  if (facet.implicit()) {
    FacetMeasureRecord rec =
        thin_slab_surface_mass(R, diagram, facet.i, facet.j, default_slab_half_width(R.support()), mc);
    return rec;
  }
  FacetMeasureRecord rec;
  rec.i = facet.i;
  rec.j = facet.j;
  rec.extent = facet.extent;
  rec.estimator = FacetEstimator::exact_line_integral;
  if (facet.points.size() == 2 && facet.extent == 0.0) return rec;
  rec.surface_mass = R.integrate_facet(facet, [](const Vector&) { return 1.0; }, 0.0);
  return rec;
}

inline FacetMeasureRecord facet_surface_mass(const ReferenceMeasure& R, const LaguerreDiagram& diagram, Index i,
                                             Index j, const MonteCarloOptions& mc = {}) {
  const FacetGeometry* f = diagram.facet(i, j);
  if (!f) fail(Errc::empty_facet, "cells " + std::to_string(i) + " and " + std::to_string(j) + " share no facet");
  return facet_surface_mass(R, diagram, *f, mc);
}

/// Surface measures of every facet of the diagram.
inline std::vector<FacetMeasureRecord> facet_table(const ReferenceMeasure& R, const LaguerreDiagram& diagram,
                                                   const MonteCarloOptions& mc = {}) {
  std::vector<FacetMeasureRecord> out;
  out.reserve(diagram.facets().size());
  std::uint64_t stream = 0;
  for (const auto& f : diagram.facets()) {
    MonteCarloOptions local = mc;
    local.seed = derive_seed(mc.seed, stream++);
    out.push_back(facet_surface_mass(R, diagram, f, local));
  }
  return out;
}

/// Vector field y -> φ(y) in R^d with a declared sup-norm bound.
struct VectorField {
  std::function<Vector(const Vector&)> eval;
  double sup_bound = 0.0;
  std::string description;

  Vector operator()(const Vector& y) const { return eval(y); }

  static VectorField constant(Vector value) {
    const double bound = value.norm();
    std::string text = "constant";
    return {[value](const Vector&) { return value; }, bound, text};
  }
  static VectorField zero(int dim) { return constant(Vector::Zero(dim)); }
  /// e_axis * y_axis; bounded on compact supports by the caller-provided bound.
  static VectorField coordinate(int dim, int axis, double bound) {
    return {[dim, axis](const Vector& y) {
              Vector v = Vector::Zero(dim);
              v[axis] = y[axis];
              return v;
            },
            bound, "coordinate projection"};
  }
  /// direction * s(|y - center|) with s a smooth step from 1 (inside radius) to 0 over `width`.
  static VectorField smoothed_indicator(Vector center, double radius, double width, Vector direction) {
    const double bound = direction.norm();
    return {[center, radius, width, direction](const Vector& y) {
              const double r = (y - center).norm();
              double t = (r - radius) / width;
              t = std::clamp(t, 0.0, 1.0);
              const double s = 1.0 - t * t * (3.0 - 2.0 * t);
              return Vector(direction * s);
            },
            bound, "smoothed indicator"};
  }
};

/// ∫_{D_ij} <x_i - x_j, φ(y)> ρ(y) dH^{d-1}(y).
inline Estimate facet_weighted_integral(const ReferenceMeasure& R, const LaguerreDiagram& diagram,
                                        const FacetGeometry& facet, const VectorField& phi,
                                        const MonteCarloOptions& mc = {}) {
  detail::check_support(R, diagram);
  detail::check_pair(diagram, facet.i, facet.j);
  const Vector diff = facet.difference;
  auto integrand = [&](const Vector& y) { return diff.dot(phi(y)); };
  if (!facet.implicit()) {
    if (facet.points.size() == 2 && facet.extent == 0.0) return {0.0, 0.0, Backend::quadrature};
    const Backend b = facet.points.size() == 1 ? Backend::exact : Backend::quadrature;
    return {R.integrate_facet(facet, integrand, 0.0), 0.0, b};
  }
  if (!R.can_sample()) fail(Errc::no_sampler, "reference measure cannot be sampled");
  const double eps = default_slab_half_width(R.support());
  const auto hs = detail::slab_halfspaces(diagram, facet.i, facet.j, eps);
  Rng rng(mc.seed);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t k = 0; k < mc.samples; ++k) {
    Vector y = R.sample(rng);
    if (!detail::in_all(hs, y)) continue;
    const double v = integrand(y) / (2.0 * eps);
    sum += v;
    sum_sq += v * v;
  }
  const double n = double(mc.samples);
  const double mean = sum / n;
  return {mean, std::sqrt(std::max(0.0, sum_sq / n - mean * mean) / n), Backend::monte_carlo};
}

}  // namespace sdot
