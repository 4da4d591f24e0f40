#pragma once

#include "sdot/core.hpp"
#include "sdot/geometry.hpp"
#include "sdot/measure.hpp"
#include "sdot/random.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace sdot {

/// Evaluation mode for functionals that need cell intersections. Implicit supports (d >= 3,
/// balls) can only be handled by sampling, which must be requested explicitly.
struct EvalMode {
  bool allow_monte_carlo = false;
  MonteCarloOptions mc{};
};

/// T_z(y) = x_i with i = locate(y).
inline Vector transport_map(const SiteSet& sites, const Vector& z, const Vector& y) {
  return sites.point(locate(sites, z, y));
}

namespace detail {
inline void check_functional(const ReferenceMeasure& R, const SiteSet& sites, const EvalMode& mode) {
  if (R.dim() != sites.dim()) fail(Errc::dimension_mismatch, "reference measure and sites differ in dimension");
  if (!R.support().exact() && !mode.allow_monte_carlo)
    fail(Errc::unsupported_exact_dimension, "exact evaluation needs an interval or polygon support");
}

template <class F>
Estimate sample_mean(const ReferenceMeasure& R, const MonteCarloOptions& mc, F f) {
  if (!R.can_sample()) fail(Errc::no_sampler, "reference measure cannot be sampled");
  if (mc.samples == 0) fail(Errc::invalid_argument, "need at least one sample");
  Rng rng(mc.seed);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t k = 0; k < mc.samples; ++k) {
    const double v = f(R.sample(rng));
    sum += v;
    sum_sq += v * v;
  }
  const double n = double(mc.samples);
  const double mean = sum / n;
  return {mean, std::sqrt(std::max(0.0, sum_sq / n - mean * mean) / n), Backend::monte_carlo};
}
}  // namespace detail

/// R(C_i(z1) ∩ C_j(z2)) for all pairs, exact supports only. Entry (i, j) of the result.
inline Matrix cell_overlap_masses(const Vector& z1, const Vector& z2, const ReferenceMeasure& R, const SiteSet& sites) {
  detail::check_potential(sites, z1);
  detail::check_potential(sites, z2);
  const LaguerreDiagram first = build_diagram(sites, z1, R.support(), true);
  const auto n = Eigen::Index(sites.size());
  Matrix overlap = Matrix::Zero(n, n);
  for (Index i = 0; i < sites.size(); ++i) {
    if (first.cell(i).empty) continue;
    for (Index j = 0; j < sites.size(); ++j)
      overlap(Eigen::Index(i), Eigen::Index(j)) =
          R.region_mass(clip_cell(first.cell(i), cell_halfspaces(sites, z2, j))).value;
  }
  return overlap;
}

/// δ_s(z1, z2) = ||T_{z1} - T_{z2}||^s_{L^s(R)} = Σ_{i≠j} |x_i - x_j|^s R(C_i(z1) ∩ C_j(z2)).
inline Estimate delta_s(const Vector& z1, const Vector& z2, double s, const ReferenceMeasure& R,
                        const SiteSet& sites, const EvalMode& mode = {}) {
  if (!(s >= 1.0)) fail(Errc::invalid_argument, "exponent s must be at least 1");
  detail::check_functional(R, sites, mode);
  detail::check_potential(sites, z1);
  detail::check_potential(sites, z2);
  if (!R.support().exact()) {
    return detail::sample_mean(R, mode.mc, [&](const Vector& y) {
      const Index i = locate(sites, z1, y), j = locate(sites, z2, y);
      return i == j ? 0.0 : std::pow(sites.distance(i, j), s);
    });
  }
  const Matrix overlap = cell_overlap_masses(z1, z2, R, sites);
  double total = 0.0;
  for (Index i = 0; i < sites.size(); ++i)
    for (Index j = 0; j < sites.size(); ++j)
      if (i != j) total += std::pow(sites.distance(i, j), s) * overlap(Eigen::Index(i), Eigen::Index(j));
  return {total, 0.0, R.is_uniform() ? Backend::exact : Backend::quadrature};
}

/// γ_φ(z) = <φ, T_z>_{L²(R)} = Σ_i <∫_{C_i(z)} φ dR, x_i>.
inline Estimate gamma_phi(const Vector& z, const VectorField& phi, const ReferenceMeasure& R, const SiteSet& sites,
                          const EvalMode& mode = {}) {
  detail::check_functional(R, sites, mode);
  detail::check_potential(sites, z);
  if (!R.support().exact()) {
    return detail::sample_mean(R, mode.mc,
                               [&](const Vector& y) { return phi(y).dot(sites.point(locate(sites, z, y))); });
  }
  const LaguerreDiagram diagram = build_diagram(sites, z, R.support(), true);
  double total = 0.0;
  for (Index i = 0; i < sites.size(); ++i) {
    const Vector xi = sites.point(i);
    total += R.integrate_exact_region(diagram.cell(i), [&](const Vector& y) { return phi(y).dot(xi); }, 0.0);
  }
  return {total, 0.0, Backend::quadrature};
}

struct DerivativeTerm {
  Index i = 0;
  Index j = 0;
  /// |x_i - x_j|^{s-1} R+(D_ij) for δ_s; (1/|x_i - x_j|) ∫_{D_ij} <x_i - x_j, φ> ρ dH for γ_φ.
  double weight = 0.0;
  double contribution = 0.0;
};

struct DerivativeBreakdown {
  std::vector<DerivativeTerm> terms;
  double total = 0.0;
};

/// Hadamard directional derivative of δ_s at (z*, z*) in direction (h1, h2):
/// Σ_{i<j} |x_i - x_j|^{s-1} R+(D_ij) |h2_j - h2_i - h1_j + h1_i|.
inline DerivativeBreakdown hadamard_delta_deriv(const SiteSet& sites,
                                                const std::vector<FacetMeasureRecord>& facet_measures,
                                                const Vector& h1, const Vector& h2, double s) {
  if (Index(h1.size()) != sites.size() || Index(h2.size()) != sites.size())
    fail(Errc::dimension_mismatch, "direction length differs from site count");
  DerivativeBreakdown out;
  for (const auto& rec : facet_measures) {
    const auto i = Eigen::Index(rec.i), j = Eigen::Index(rec.j);
    DerivativeTerm t{rec.i, rec.j, std::pow(sites.distance(rec.i, rec.j), s - 1.0) * rec.surface_mass, 0.0};
    t.contribution = t.weight * std::abs(h2[j] - h2[i] - h1[j] + h1[i]);
    out.total += t.contribution;
    out.terms.push_back(t);
  }
  return out;
}

/// ∫_{D_ij} <x_i - x_j, φ> ρ dH^{d-1} for every facet of the diagram.
struct FacetIntegral {
  Index i = 0;
  Index j = 0;
  double value = 0.0;
  double std_error = 0.0;
};

inline std::vector<FacetIntegral> gamma_facet_integrals(const ReferenceMeasure& R, const LaguerreDiagram& diagram,
                                                        const VectorField& phi, const MonteCarloOptions& mc = {}) {
  std::vector<FacetIntegral> out;
  std::uint64_t stream = 0;
  for (const auto& f : diagram.facets()) {
    MonteCarloOptions local = mc;
    local.seed = derive_seed(mc.seed, stream++);
    const Estimate e = facet_weighted_integral(R, diagram, f, phi, local);
    out.push_back({f.i, f.j, e.value, e.std_error});
  }
  return out;
}

/// Fréchet derivative of γ_φ at z*: Σ_{i<j} (h_i - h_j)/|x_i - x_j| ∫_{D_ij} <x_i - x_j, φ> ρ dH^{d-1}.
inline DerivativeBreakdown gamma_deriv(const SiteSet& sites, const std::vector<FacetIntegral>& integrals,
                                       const Vector& h) {
  if (Index(h.size()) != sites.size()) fail(Errc::dimension_mismatch, "direction length differs from site count");
  DerivativeBreakdown out;
  for (const auto& fi : integrals) {
    DerivativeTerm t{fi.i, fi.j, fi.value / sites.distance(fi.i, fi.j), 0.0};
    t.contribution = t.weight * (h[Eigen::Index(fi.i)] - h[Eigen::Index(fi.j)]);
    out.total += t.contribution;
    out.terms.push_back(t);
  }
  return out;
}

inline DerivativeBreakdown gamma_deriv(const PotentialVector& z_star, const Vector& h, const VectorField& phi,
                                       const ReferenceMeasure& R, const SiteSet& sites,
                                       const MonteCarloOptions& mc = {}) {
  const LaguerreDiagram diagram = build_diagram(sites, z_star.values(), R.support());
  return gamma_deriv(sites, gamma_facet_integrals(R, diagram, phi, mc), h);
}

namespace detail {
inline void check_steps(const std::vector<double>& ts) {
  if (ts.empty()) fail(Errc::invalid_argument, "step list is empty");
  for (std::size_t k = 0; k < ts.size(); ++k) {
    if (!(ts[k] > 0.0)) fail(Errc::invalid_argument, "steps must be positive");
    if (k > 0 && !(ts[k] < ts[k - 1])) fail(Errc::invalid_argument, "steps must be strictly decreasing");
  }
}
}  // namespace detail

/// One-sided quotients (δ_s(z* + t h1, z* + t h2) - δ_s(z*, z*))/t for each t.
inline std::vector<double> fd_delta_quotients(double s, const ReferenceMeasure& R, const SiteSet& sites,
                                              const PotentialVector& z_star, const Vector& h1, const Vector& h2,
                                              const std::vector<double>& ts, const EvalMode& mode = {}) {
  detail::check_steps(ts);
  const Vector& z = z_star.values();
  const double base = delta_s(z, z, s, R, sites, mode).value;
  std::vector<double> out;
  for (double t : ts) out.push_back((delta_s(z + t * h1, z + t * h2, s, R, sites, mode).value - base) / t);
  return out;
}

/// One-sided quotients (γ_φ(z* + t h) - γ_φ(z*))/t for each t.
inline std::vector<double> fd_gamma_quotients(const VectorField& phi, const ReferenceMeasure& R, const SiteSet& sites,
                                              const PotentialVector& z_star, const Vector& h,
                                              const std::vector<double>& ts, const EvalMode& mode = {}) {
  detail::check_steps(ts);
  const Vector& z = z_star.values();
  const double base = gamma_phi(z, phi, R, sites, mode).value;
  std::vector<double> out;
  for (double t : ts) out.push_back((gamma_phi(z + t * h, phi, R, sites, mode).value - base) / t);
  return out;
}

/// Step schedule used by the derivative validation routines.
inline const std::vector<double>& default_fd_steps() {
  static const std::vector<double> steps{1e-2, 1e-3, 1e-4};
  return steps;
}

}  // namespace sdot
