#pragma once

// Invariant checks on a configured problem and outer Monte Carlo studies (coverage, pointwise
// agreement, direct replications of the plug-in statistics).

#include "sdot/app/format.hpp"
#include "sdot/sdot.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sdot::app {

struct Problem {
  SiteSet sites;
  ReferenceMeasure R;
  SimplexWeights p;
};

// ---------------------------------------------------------------------------------------------
// Validation

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;      // observed error measure
  double tolerance = 0.0;  // pass threshold on value
  std::string backend;
  std::string detail;
};

struct ValidationSettings {
  std::vector<double> s_values{1.0};
  std::vector<std::pair<std::string, VectorField>> phis;
  std::size_t directions = 5;
  double fd_step = 1e-4;
  double rel_tol = 0.01;
  std::size_t mc_samples = 200000;
  double corrupt_facet_measure = 1.0;
  std::uint64_t seed = 0;
  SolverOptions solver{};
};

namespace detail {
inline CheckResult make_check(std::string name, double value, double tolerance, std::string backend,
                              std::string detail = {}) {
  return {std::move(name), value <= tolerance, value, tolerance, std::move(backend), std::move(detail)};
}
}  // namespace detail

/// Solver residual, mass conservation, Hessian and derivative finite-difference checks, and
/// exact-versus-sampling cross-checks. A single site yields no checks (vacuous pass).
inline std::vector<CheckResult> run_validation(const Problem& P, const ValidationSettings& cfg) {
  std::vector<CheckResult> out;
  const auto n = Eigen::Index(P.sites.size());
  if (n == 1) return out;
  const std::string exact_tag = P.R.is_uniform() ? "exact" : "quadrature";

  const DualSolveReport rep = solve_dual(P.p, P.R, P.sites, cfg.solver);
  const PotentialVector& z = rep.z;
  const LaguerreDiagram diagram = build_diagram(P.sites, z.values(), P.R.support(), true);
  const Vector mass = cell_masses(P.R, diagram);
  out.push_back(detail::make_check("solve_residual", (mass - P.p.values()).cwiseAbs().maxCoeff(), 1e-9, exact_tag,
                                   std::to_string(rep.iterations) + " Newton iterations"));
  out.push_back(detail::make_check("mass_conservation", std::abs(mass.sum() - 1.0), 1e-9, exact_tag));

  {
    const Matrix H = dual_hessian_reduced(z.values(), P.R, P.sites);
    const double h = 1e-5;
    double worst = 0.0;
    for (Eigen::Index l = 0; l < n - 1; ++l) {
      Vector e = Vector::Zero(n);
      e[l] = h;
      e[n - 1] = -h;
      const Vector gp = dual_gradient(z.values() + e, P.p, P.R, P.sites);
      const Vector gm = dual_gradient(z.values() - e, P.p, P.R, P.sites);
      const Vector col = ((gp.head(n - 1).array() - gp[n - 1]) - (gm.head(n - 1).array() - gm[n - 1])) / (2 * h);
      worst = std::max(worst, (col - H.col(l)).norm() / std::max(H.col(l).norm(), 1e-300));
    }
    out.push_back(detail::make_check("hessian_fd", worst, 1e-3, exact_tag, "relative column error, step 1e-5"));
  }

  auto facets = facet_table(P.R, diagram);
  for (auto& f : facets) f.surface_mass *= cfg.corrupt_facet_measure;
  Rng rng(derive_seed(cfg.seed, 0x7661));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto direction = [&] {
    Vector h(n);
    for (auto& v : h) v = normal(rng);
    return h;
  };
  const std::vector<double> ts{cfg.fd_step};

  for (double s : cfg.s_values) {
    double worst = 0.0;
    for (std::size_t k = 0; k < cfg.directions; ++k) {
      const Vector h1 = direction(), h2 = direction();
      const double exact = hadamard_delta_deriv(P.sites, facets, h1, h2, s).total;
      const double q = fd_delta_quotients(s, P.R, P.sites, z, h1, h2, ts)[0];
      worst = std::max(worst, std::abs(q - exact) / std::max(std::abs(exact), 1e-12));
    }
    out.push_back(detail::make_check("fd_delta_s" + num(s), worst, cfg.rel_tol, exact_tag,
                                     "max relative error over directions at t=" + std::to_string(cfg.fd_step)));
  }
  for (const auto& [name, phi] : cfg.phis) {
    auto integrals = gamma_facet_integrals(P.R, diagram, phi);
    for (auto& fi : integrals) fi.value *= cfg.corrupt_facet_measure;
    double worst = 0.0;
    for (std::size_t k = 0; k < cfg.directions; ++k) {
      const Vector h = direction();
      const double exact = gamma_deriv(P.sites, integrals, h).total;
      const double q = fd_gamma_quotients(phi, P.R, P.sites, z, h, ts)[0];
      // A field vanishing near every facet has a zero derivative; judge it on an absolute scale.
      const double scale = std::max(std::abs(exact), 1e-6);
      worst = std::max(worst, std::abs(q - exact) / scale);
    }
    out.push_back(detail::make_check("fd_gamma_" + name, worst, cfg.rel_tol, "quadrature",
                                     "max relative error over directions at t=" + std::to_string(cfg.fd_step)));
  }

  if (P.R.can_sample()) {
    double worst = 0.0;
    for (Index i = 0; i < P.sites.size(); ++i) {
      const Estimate e = mc_cell_mass(P.R, P.sites, z.values(), i, cfg.mc_samples, derive_seed(cfg.seed, 0x6d63 + i));
      const double err = std::abs(e.value - mass[Eigen::Index(i)]);
      worst = std::max(worst, e.std_error > 0.0 ? err / e.std_error : (err > 1e-12 ? 1e300 : 0.0));
    }
    out.push_back(detail::make_check("mc_vs_exact_mass", worst, 3.0, "monte_carlo",
                                     "largest deviation in standard errors, " + std::to_string(cfg.mc_samples) +
                                         " samples per cell"));
    worst = 0.0;
    std::uint64_t stream = 0;
    for (const auto& f : diagram.facets()) {
      const auto exact = facet_surface_mass(P.R, diagram, f);
      const auto slab = thin_slab_surface_mass(P.R, diagram, f.i, f.j, default_slab_half_width(P.R.support()),
                                               {cfg.mc_samples, derive_seed(cfg.seed, 0x736c + stream++)});
      const double err = std::abs(slab.surface_mass - exact.surface_mass);
      worst = std::max(worst, slab.std_error > 0.0 ? err / slab.std_error : (err > 1e-12 ? 1e300 : 0.0));
    }
    out.push_back(detail::make_check("slab_vs_line_facet", worst, 3.0, "monte_carlo",
                                     "largest deviation in standard errors"));
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Outer replication studies

struct DirectReplications {
  std::vector<double> delta;  // sqrt(n) δ_s(ẑ_n, z*)
  std::vector<double> gamma;  // sqrt(n) (γ_φ(ẑ_n) - γ_φ(z*))
  std::size_t fallbacks = 0;
};

/// Independent samples of size n from P, each giving the plug-in statistics against the truth.
inline DirectReplications direct_replications(const Problem& P, std::size_t n, std::size_t reps, double s,
                                              const VectorField& phi, std::uint64_t seed, unsigned threads = 1) {
  const PotentialVector z_star = solve_dual(P.p, P.R, P.sites).z;
  const double gamma_star = gamma_phi(z_star.values(), phi, P.R, P.sites).value;
  const double root_n = std::sqrt(double(n));
  std::vector<double> delta(reps), gamma(reps);
  std::vector<char> fallback(reps, 0);
  parallel_for(reps, threads, [&](std::size_t r) {
    Rng rng(derive_seed(seed, r));
    const auto sample = SampleData::from_counts(multinomial_counts(n, P.p.values(), rng));
    const PluginEstimate est = plugin_estimate(sample, P.R, P.sites);
    fallback[r] = est.fallback;
    delta[r] = root_n * delta_s(est.z.values(), z_star.values(), s, P.R, P.sites).value;
    gamma[r] = root_n * (gamma_phi(est.z.values(), phi, P.R, P.sites).value - gamma_star);
  });
  DirectReplications out;
  for (std::size_t r = 0; r < reps; ++r) {
    if (fallback[r]) {
      ++out.fallbacks;
      continue;
    }
    out.delta.push_back(delta[r]);
    out.gamma.push_back(gamma[r]);
  }
  return out;
}

struct CoverageSettings {
  std::size_t outer = 500;
  std::size_t n = 5000;
  std::size_t replications = 1000;
  double alpha = 0.1;
  double s = 1.0;
  double margin = 0.05;
  std::size_t grid_per_cell = 50;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct CoverageRow {
  std::size_t replication = 0;
  bool fallback = false;
  double statistic = 0.0;  // sqrt(n) δ_s(ẑ_n, z*)
  double tau = 0.0;        // τ̂(1 - α)
  double tau_half = 0.0;   // τ̂(1 - α/2)
  bool covered = false;
  double band_radius = 0.0;
  double band_coverage = 0.0;  // R-mass of {y : T*(y) in band(y)}
  std::optional<double> probe;
  std::size_t bootstrap_used = 0;
  std::size_t bootstrap_fallbacks = 0;
  std::size_t bootstrap_failures = 0;
};

struct CoverageSummary {
  std::vector<CoverageRow> rows;
  std::size_t used = 0;
  std::size_t fallbacks = 0;
  double set_coverage = 0.0;
  double band_average_coverage = 0.0;
  double probe_exact_rate = 0.0;  // share of replications with probe fraction 1
  std::size_t probe_applicable = 0;
};

/// Repeats sample -> plug-in -> bootstrap -> confidence set and band, comparing with the truth.
inline CoverageSummary run_coverage_study(const Problem& P, const CoverageSettings& cfg) {
  const PotentialVector z_star = solve_dual(P.p, P.R, P.sites).z;
  std::vector<CoverageRow> rows(cfg.outer);
  parallel_for(cfg.outer, cfg.threads, [&](std::size_t r) {
    CoverageRow& row = rows[r];
    row.replication = r;
    Rng rng(derive_seed(cfg.seed, r));
    const auto sample = SampleData::from_counts(multinomial_counts(cfg.n, P.p.values(), rng));
    const PluginEstimate est = plugin_estimate(sample, P.R, P.sites);
    if (est.fallback) {
      row.fallback = true;
      return;
    }
    const double root_n = std::sqrt(double(cfg.n));
    row.statistic = root_n * delta_s(est.z.values(), z_star.values(), cfg.s, P.R, P.sites).value;
    const BootstrapResult boot =
        bootstrap_delta(sample, P.R, P.sites, cfg.s, cfg.replications, derive_seed(cfg.seed ^ 0xb007, r));
    row.bootstrap_used = boot.sample.draws.size();
    row.bootstrap_fallbacks = boot.fallback_count;
    row.bootstrap_failures = boot.failure_count;
    if (boot.sample.draws.empty()) {
      row.fallback = true;
      return;
    }
    row.tau = confidence_set_radius(boot.sample.draws, cfg.alpha);
    row.tau_half = confidence_set_radius(boot.sample.draws, cfg.alpha / 2.0);
    row.covered = row.statistic <= row.tau;
    row.band_radius = band_radius(row.tau_half, cfg.n, cfg.alpha);
    row.band_coverage = band_coverage_mass(P.R, P.sites, est.z, z_star, row.band_radius);
    row.probe = super_consistency_probe(est.z, z_star, P.R.support(), P.sites, cfg.margin, cfg.grid_per_cell);
  });

  CoverageSummary out;
  std::size_t covered = 0, probe_exact = 0;
  double band = 0.0;
  for (const auto& row : rows) {
    if (row.fallback) {
      ++out.fallbacks;
      continue;
    }
    ++out.used;
    covered += row.covered;
    band += row.band_coverage;
    if (row.probe) {
      ++out.probe_applicable;
      probe_exact += *row.probe == 1.0;
    }
  }
  if (out.used) {
    out.set_coverage = double(covered) / double(out.used);
    out.band_average_coverage = band / double(out.used);
  }
  if (out.probe_applicable) out.probe_exact_rate = double(probe_exact) / double(out.probe_applicable);
  out.rows = std::move(rows);
  return out;
}

struct ProbeStudy {
  std::vector<std::optional<double>> fractions;
  std::size_t exact = 0;       // replications with fraction 1
  std::size_t applicable = 0;  // replications where K held grid points
};

/// Pointwise agreement of T̂_n and T* away from the facets over independent samples.
inline ProbeStudy run_probe_study(const Problem& P, std::size_t n, std::size_t reps, double margin,
                                  std::size_t grid_per_cell, std::uint64_t seed, unsigned threads = 1) {
  const PotentialVector z_star = solve_dual(P.p, P.R, P.sites).z;
  ProbeStudy out;
  out.fractions.resize(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    Rng rng(derive_seed(seed, r));
    const auto sample = SampleData::from_counts(multinomial_counts(n, P.p.values(), rng));
    const PluginEstimate est = plugin_estimate(sample, P.R, P.sites);
    out.fractions[r] = super_consistency_probe(est.z, z_star, P.R.support(), P.sites, margin, grid_per_cell);
  });
  for (const auto& f : out.fractions) {
    if (!f) continue;
    ++out.applicable;
    out.exact += *f == 1.0;
  }
  return out;
}

}  // namespace sdot::app
