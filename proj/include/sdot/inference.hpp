#pragma once

#include "sdot/core.hpp"
#include "sdot/dual.hpp"
#include "sdot/functionals.hpp"
#include "sdot/geometry.hpp"
#include "sdot/measure.hpp"
#include "sdot/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace sdot {

/// Observed sample from P: each observation is the index of the drawn site.
class SampleData {
 public:
  SampleData(std::vector<Index> observations, Index n_sites)
      : observations_(std::move(observations)), n_sites_(n_sites) {
    if (observations_.empty()) fail(Errc::invalid_argument, "sample must contain at least one observation");
    for (Index k : observations_)
      if (k >= n_sites_) fail(Errc::invalid_argument, "observation index out of range");
  }

  static SampleData from_counts(const std::vector<std::size_t>& counts) {
    std::vector<Index> obs;
    for (Index i = 0; i < counts.size(); ++i) obs.insert(obs.end(), counts[i], i);
    return SampleData(std::move(obs), counts.size());
  }

  const std::vector<Index>& observations() const { return observations_; }
  std::size_t n() const { return observations_.size(); }
  Index n_sites() const { return n_sites_; }

  std::vector<std::size_t> counts() const {
    std::vector<std::size_t> c(n_sites_, 0);
    for (Index k : observations_) ++c[k];
    return c;
  }

 private:
  std::vector<Index> observations_;
  Index n_sites_ = 0;
};

/// Multinomial(n, p) counts via sequential conditional binomials.
inline std::vector<std::size_t> multinomial_counts(std::size_t n, const Vector& p, Rng& rng) {
  std::vector<std::size_t> counts(std::size_t(p.size()), 0);
  std::size_t remaining = n;
  double rest = 1.0;
  for (Eigen::Index k = 0; k + 1 < p.size() && remaining > 0; ++k) {
    const double prob = rest > 0.0 ? std::clamp(p[k] / rest, 0.0, 1.0) : 0.0;
    std::binomial_distribution<std::size_t> draw(remaining, prob);
    counts[std::size_t(k)] = draw(rng);
    remaining -= counts[std::size_t(k)];
    rest -= p[k];
  }
  counts.back() += remaining;
  return counts;
}

/// n i.i.d. draws from P, kept in draw order.
inline SampleData draw_sample(const SimplexWeights& p, std::size_t n, Rng& rng) {
  std::discrete_distribution<Index> pick(p.values().data(), p.values().data() + p.values().size());
  std::vector<Index> obs(n);
  for (auto& o : obs) o = pick(rng);
  return SampleData(std::move(obs), p.size());
}

/// Frequency vector p̂_n; interior() reports whether every site was observed.
inline SimplexWeights empirical_frequencies(const SampleData& sample, Index n_sites) {
  if (sample.n_sites() != n_sites) fail(Errc::dimension_mismatch, "sample refers to a different site count");
  return SimplexWeights::from_counts(sample.counts());
}

/// Limiting covariance of sqrt(n)(ẑ_n - z*): Σ = Bᵀ A B.
struct CovarianceModel {
  Matrix A;      // (N-1)x(N-1) multinomial covariance of the reduced frequencies
  Matrix B;      // (N-1)xN sensitivity of z* to the reduced weights
  Matrix Sigma;  // NxN, singular along the ones vector
};

inline CovarianceModel covariance_model(const SimplexWeights& p, const PotentialVector& z_star,
                                        const ReferenceMeasure& R, const SiteSet& sites) {
  if (!p.interior()) fail(Errc::not_interior, "covariance model needs all weights positive");
  CovarianceModel m;
  const Vector pr = p.reduced();
  m.A = Matrix(pr.asDiagonal()) - pr * pr.transpose();
  m.B = dual_sensitivity(z_star, p, R, sites);
  m.Sigma = m.B.transpose() * m.A * m.B;
  m.Sigma = 0.5 * (m.Sigma + m.Sigma.transpose()).eval();
  return m;
}

/// Symmetric square root via eigendecomposition; eigenvalues below 1e-12 are clipped to zero.
inline Matrix psd_sqrt(const Matrix& sigma) {
  if (sigma.size() == 0) return sigma;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (sigma + sigma.transpose()));
  if (eig.info() != Eigen::Success) fail(Errc::not_psd, "eigendecomposition failed");
  Vector lambda = eig.eigenvalues();
  const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
  if (lambda.minCoeff() < -1e-10 * scale)
    fail(Errc::not_psd, "covariance has eigenvalue " + std::to_string(lambda.minCoeff()));
  for (auto& l : lambda) l = l < 1e-12 ? 0.0 : std::sqrt(l);
  return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
}

struct LimitLawSample {
  std::vector<double> draws;
  std::string tag;
  std::uint64_t seed = 0;
  std::size_t n_draws = 0;
};

namespace detail {
template <class Stat>
LimitLawSample gaussian_functional_draws(const Matrix& sigma, std::size_t n_draws, std::uint64_t seed,
                                         std::string tag, Stat stat) {
  const Matrix root = psd_sqrt(sigma);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  LimitLawSample out{{}, std::move(tag), seed, n_draws};
  out.draws.reserve(n_draws);
  Vector xi(sigma.rows());
  for (std::size_t k = 0; k < n_draws; ++k) {
    for (Eigen::Index r = 0; r < xi.size(); ++r) xi[r] = normal(rng);
    out.draws.push_back(stat(Vector(root * xi)));
  }
  return out;
}
}  // namespace detail

/// Draws of Σ_{i<j} |x_i - x_j|^{s-1} R+(D_ij) |W_i - W_j| with W ~ N(0, Σ).
inline LimitLawSample sample_limit_delta(const CovarianceModel& model,
                                         const std::vector<FacetMeasureRecord>& facet_measures, const SiteSet& sites,
                                         double s, std::size_t n_draws, std::uint64_t seed) {
  if (Index(model.Sigma.rows()) != sites.size()) fail(Errc::dimension_mismatch, "covariance size differs from sites");
  const Vector zero = Vector::Zero(model.Sigma.rows());
  return detail::gaussian_functional_draws(model.Sigma, n_draws, seed, "delta_s=" + std::to_string(s),
                                           [&](const Vector& w) {
                                             return hadamard_delta_deriv(sites, facet_measures, zero, w, s).total;
                                           });
}

/// Coefficients c with Σ_{i<j} (W_i - W_j)/|x_i - x_j| ∫_{D_ij}<x_i - x_j, φ>ρ dH = <c, W>.
inline Vector gamma_limit_coefficients(const std::vector<FacetIntegral>& integrals, const SiteSet& sites) {
  Vector c = Vector::Zero(Eigen::Index(sites.size()));
  for (const auto& fi : integrals) {
    const double a = fi.value / sites.distance(fi.i, fi.j);
    c[Eigen::Index(fi.i)] += a;
    c[Eigen::Index(fi.j)] -= a;
  }
  return c;
}

/// σ²_{P,φ} = cᵀ Σ c.
inline double limit_variance_gamma(const CovarianceModel& model, const std::vector<FacetIntegral>& integrals,
                                   const SiteSet& sites) {
  const Vector c = gamma_limit_coefficients(integrals, sites);
  return std::max(0.0, c.dot(model.Sigma * c));
}

/// Draws of <c, W>, W ~ N(0, Σ): the Gaussian limit of the linear functional.
inline LimitLawSample sample_limit_gamma(const CovarianceModel& model, const std::vector<FacetIntegral>& integrals,
                                         const SiteSet& sites, std::size_t n_draws, std::uint64_t seed) {
  const Vector c = gamma_limit_coefficients(integrals, sites);
  return detail::gaussian_functional_draws(model.Sigma, n_draws, seed, "gamma",
                                           [&](const Vector& w) { return c.dot(w); });
}

struct PluginEstimate {
  PotentialVector z;
  SimplexWeights p_hat;
  /// True when some site was unobserved and the fixed fallback potential was returned.
  bool fallback = false;
  int iterations = 0;
};

/// ẑ_n = z*(p̂_n) when every site is observed, z0 otherwise.
inline PluginEstimate plugin_estimate(const SampleData& sample, const ReferenceMeasure& R, const SiteSet& sites,
                                      const PotentialVector& z0, const SolverOptions& options = {}) {
  if (z0.size() != sites.size()) fail(Errc::dimension_mismatch, "fallback potential length differs from sites");
  PluginEstimate est;
  est.p_hat = empirical_frequencies(sample, sites.size());
  if (!est.p_hat.interior()) {
    est.z = z0;
    est.fallback = true;
    return est;
  }
  try {
    const DualSolveReport report = solve_dual(est.p_hat, R, sites, options);
    est.z = report.z;
    est.iterations = report.iterations;
  } catch (const Error& e) {
    throw Error(e.code(), std::string("plug-in solve at empirical frequencies: ") + e.what());
  }
  return est;
}

inline PluginEstimate plugin_estimate(const SampleData& sample, const ReferenceMeasure& R, const SiteSet& sites,
                                      const SolverOptions& options = {}) {
  return plugin_estimate(sample, R, sites, PotentialVector::zero(sites.size()), options);
}

struct BootstrapOptions {
  unsigned threads = 1;
  SolverOptions solver{};
  /// Replaces multinomial resampling; receives the observed counts and a per-replication RNG.
  std::function<std::vector<std::size_t>(const std::vector<std::size_t>&, Rng&)> resampler;
};

struct BootstrapResult {
  LimitLawSample sample;
  /// Replications whose resample missed a site (excluded from the draws).
  std::size_t fallback_count = 0;
  /// Replications whose dual solve failed (excluded from the draws).
  std::size_t failure_count = 0;
};

namespace detail {
template <class Stat>
BootstrapResult bootstrap(const SampleData& sample, const ReferenceMeasure& R, const SiteSet& sites,
                          std::size_t replications, std::uint64_t seed, const BootstrapOptions& options,
                          std::string tag, Stat stat) {
  const PluginEstimate base = plugin_estimate(sample, R, sites, options.solver);
  if (base.fallback) fail(Errc::not_interior, "bootstrap needs every site observed in the sample");
  const std::vector<std::size_t> counts = sample.counts();
  const double root_n = std::sqrt(double(sample.n()));

  enum class Outcome { ok, fallback, failure };
  std::vector<double> values(replications, 0.0);
  std::vector<Outcome> outcome(replications, Outcome::ok);
  parallel_for(replications, options.threads, [&](std::size_t b) {
    Rng rng(derive_seed(seed, b));
    const std::vector<std::size_t> resampled =
        options.resampler ? options.resampler(counts, rng) : multinomial_counts(sample.n(), base.p_hat.values(), rng);
    const SimplexWeights p_boot = SimplexWeights::from_counts(resampled);
    if (!p_boot.interior()) {
      outcome[b] = Outcome::fallback;
      return;
    }
    try {
      const DualSolveReport rep = solve_dual(p_boot, R, sites, options.solver);
      values[b] = root_n * stat(rep.z.values(), base.z.values());
    } catch (const Error&) {
      outcome[b] = Outcome::failure;
    }
  });

  BootstrapResult out;
  out.sample.tag = std::move(tag);
  out.sample.seed = seed;
  for (std::size_t b = 0; b < replications; ++b) {
    if (outcome[b] == Outcome::ok) out.sample.draws.push_back(values[b]);
    else if (outcome[b] == Outcome::fallback) ++out.fallback_count;
    else ++out.failure_count;
  }
  out.sample.n_draws = out.sample.draws.size();
  return out;
}
}  // namespace detail

/// Bootstrap draws of sqrt(n) δ_s(ẑ_n^B, ẑ_n).
inline BootstrapResult bootstrap_delta(const SampleData& sample, const ReferenceMeasure& R, const SiteSet& sites,
                                       double s, std::size_t replications, std::uint64_t seed,
                                       const BootstrapOptions& options = {}) {
  return detail::bootstrap(sample, R, sites, replications, seed, options, "bootstrap_delta_s=" + std::to_string(s),
                           [&](const Vector& zb, const Vector& zhat) { return delta_s(zb, zhat, s, R, sites).value; });
}

/// Bootstrap draws of sqrt(n) (γ_φ(ẑ_n^B) - γ_φ(ẑ_n)).
inline BootstrapResult bootstrap_gamma(const SampleData& sample, const ReferenceMeasure& R, const SiteSet& sites,
                                       const VectorField& phi, std::size_t replications, std::uint64_t seed,
                                       const BootstrapOptions& options = {}) {
  const PluginEstimate base = plugin_estimate(sample, R, sites, options.solver);
  const double gamma_hat = base.fallback ? 0.0 : gamma_phi(base.z.values(), phi, R, sites).value;
  return detail::bootstrap(sample, R, sites, replications, seed, options, "bootstrap_gamma",
                           [&](const Vector& zb, const Vector&) { return gamma_phi(zb, phi, R, sites).value - gamma_hat; });
}

/// Empirical (1 - α)-quantile with the higher convention: the smallest draw of rank >= ceil((1 - α) B).
inline double confidence_set_radius(std::vector<double> draws, double alpha) {
  if (draws.empty()) fail(Errc::empty_draws, "no bootstrap draws");
  if (!(alpha > 0.0 && alpha < 1.0)) fail(Errc::invalid_argument, "alpha must lie in (0, 1)");
  std::sort(draws.begin(), draws.end());
  const double target = (1.0 - alpha) * double(draws.size());
  // Guard against 0.9 * 100 evaluating to 90.00000000000001.
  auto rank = std::size_t(std::ceil(target - 1e-9 * std::max(1.0, target)));
  rank = std::clamp<std::size_t>(rank, 1, draws.size());
  return draws[rank - 1];
}

struct BandPoint {
  Vector y;
  Index center = 0;  // index of T̂_n(y)
  double radius = 0.0;
  std::vector<Index> members;  // sites within radius of T̂_n(y)
};

/// Radius τ̂(1 - α/2)/sqrt(n) · 2/α around T̂_n(y), intersected with the site set. The band has
/// average coverage over y ~ R, not uniform coverage.
inline double band_radius(double tau_half, std::size_t n, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(Errc::invalid_argument, "alpha must lie in (0, 1)");
  if (n == 0) fail(Errc::invalid_argument, "sample size must be positive");
  return tau_half / std::sqrt(double(n)) * 2.0 / alpha;
}

inline std::vector<BandPoint> confidence_band(const SiteSet& sites, const PotentialVector& z_hat, double tau_half,
                                              std::size_t n, double alpha, const std::vector<Vector>& grid) {
  const double radius = band_radius(tau_half, n, alpha);
  std::vector<BandPoint> out;
  out.reserve(grid.size());
  for (const auto& y : grid) {
    BandPoint bp;
    bp.y = y;
    bp.center = locate(sites, z_hat.values(), y);
    bp.radius = radius;
    for (Index k = 0; k < sites.size(); ++k)
      if (sites.distance(k, bp.center) <= radius) bp.members.push_back(k);
    out.push_back(std::move(bp));
  }
  return out;
}

/// R({y : |T̂(y) - T*(y)| <= radius}), the conditional coverage of the discrete band.
inline double band_coverage_mass(const ReferenceMeasure& R, const SiteSet& sites, const PotentialVector& z_hat,
                                 const PotentialVector& z_star, double radius) {
  const Matrix overlap = cell_overlap_masses(z_hat.values(), z_star.values(), R, sites);
  double covered = 0.0;
  for (Index i = 0; i < sites.size(); ++i)
    for (Index j = 0; j < sites.size(); ++j)
      if (sites.distance(i, j) <= radius) covered += overlap(Eigen::Index(i), Eigen::Index(j));
  return covered;
}

namespace detail {
inline double segment_distance(const Vector& y, const Vector& a, const Vector& b) {
  const Vector ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((y - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (y - (a + t * ab)).norm();
}
}  // namespace detail

/// Fraction of grid points in K = {y in C_i(z*) : dist(y, D_ij) >= margin for all j} where
/// T̂ = T*. grid_per_cell points per axis span each cell's bounding box. Returns nullopt when
/// K contains no grid point.
inline std::optional<double> super_consistency_probe(const PotentialVector& z_hat, const PotentialVector& z_star,
                                                     const SupportRegion& support, const SiteSet& sites,
                                                     double margin, std::size_t grid_per_cell) {
  if (!(margin > 0.0)) fail(Errc::invalid_argument, "margin must be positive");
  if (grid_per_cell == 0) fail(Errc::invalid_argument, "grid must have at least one point per axis");
  const LaguerreDiagram diagram = build_diagram(sites, z_star.values(), support, true);
  std::size_t total = 0, matches = 0;
  const auto far_from_facets = [&](Index i, const Vector& y) {
    for (const auto& f : diagram.facets()) {
      if (f.i != i && f.j != i) continue;
      const double d = f.points.size() == 1 ? (y - f.points[0]).norm()
                                            : detail::segment_distance(y, f.points[0], f.points[1]);
      if (d < margin) return false;
    }
    return true;
  };
  const auto visit = [&](Index i, const Vector& y) {
    if (!far_from_facets(i, y)) return;
    ++total;
    if (locate(sites, z_hat.values(), y) == i) ++matches;
  };
  for (Index i = 0; i < sites.size(); ++i) {
    const CellGeometry& cell = diagram.cell(i);
    if (cell.empty) continue;
    if (auto iv = cell.interval()) {
      for (std::size_t k = 0; k < grid_per_cell; ++k)
        visit(i, Vector::Constant(1, iv->lo + (double(k) + 0.5) / double(grid_per_cell) * iv->length()));
    } else if (auto pg = cell.polygon()) {
      Point2 lo = pg->front(), hi = pg->front();
      for (const auto& v : *pg) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
      }
      for (std::size_t a = 0; a < grid_per_cell; ++a) {
        for (std::size_t b = 0; b < grid_per_cell; ++b) {
          const Point2 p(lo.x() + (double(a) + 0.5) / double(grid_per_cell) * (hi.x() - lo.x()),
                         lo.y() + (double(b) + 0.5) / double(grid_per_cell) * (hi.y() - lo.y()));
          bool inside = true;
          for (std::size_t k = 0; k < pg->size() && inside; ++k)
            inside = cross((*pg)[(k + 1) % pg->size()] - (*pg)[k], p - (*pg)[k]) >= 0.0;
          if (inside) visit(i, Vector(p));
        }
      }
    }
  }
  if (total == 0) return std::nullopt;
  return double(matches) / double(total);
}

}  // namespace sdot
