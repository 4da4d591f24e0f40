#pragma once

// Subcommands of the command-line front end. Each writes CSV tables and JSON-lines draw files
// into the output directory; wall-clock timings go to the log stream only, so reruns with the
// same configuration and seed reproduce the files byte for byte.

#include "sdot/app/config.hpp"
#include "sdot/app/format.hpp"
#include "sdot/app/studies.hpp"
#include "sdot/sdot.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace sdot::app {

enum ExitCode : int { exit_ok = 0, exit_config = 1, exit_numeric = 2, exit_validation = 3 };

struct RunOptions {
  std::filesystem::path out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::ostream* log = &std::cerr;
};

/// Problem-definition errors map to the configuration exit code; everything else is numeric.
inline int exit_code_for(Errc code) {
  switch (code) {
    case Errc::invalid_argument:
    case Errc::dimension_mismatch:
    case Errc::unsupported_exact_dimension:
    case Errc::not_built_against_support:
    case Errc::not_interior:
    case Errc::no_sampler:
      return exit_config;
    default:
      return exit_numeric;
  }
}

namespace detail {

class Timer {
 public:
  Timer(std::ostream& log, std::string label)
      : log_(log), label_(std::move(label)), start_(std::chrono::steady_clock::now()) {}
  ~Timer() {
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start_;
    log_ << "[" << label_ << "] " << dt.count() << " s\n";
  }

 private:
  std::ostream& log_;
  std::string label_;
  std::chrono::steady_clock::time_point start_;
};

struct Context {
  const ProblemConfig& cfg;
  Provenance prov;
  std::filesystem::path out;
  std::ostream& log;

  void write(const std::string& name, const CsvTable& t) const { t.write(out / name, prov); }
};

inline std::string exact_backend(const ReferenceMeasure& R) { return R.is_uniform() ? "exact" : "quadrature"; }

inline std::vector<std::string> coord_columns(const std::string& prefix, int d) {
  std::vector<std::string> c;
  for (int k = 1; k <= d; ++k) c.push_back(prefix + std::to_string(k));
  return c;
}

inline std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline std::vector<std::string> coords(const Vector& v) {
  std::vector<std::string> out;
  for (double x : v) out.push_back(num(x));
  return out;
}

inline SimplexWeights solve_target(const ProblemConfig& cfg) {
  if (cfg.weights) return *cfg.weights;
  return SimplexWeights::from_counts(*cfg.counts);
}

inline void write_solution(const Context& ctx, const SimplexWeights& q, const DualSolveReport& rep) {
  const auto& cfg = ctx.cfg;
  const int d = cfg.sites.dim();
  const LaguerreDiagram diagram = build_diagram(cfg.sites, rep.z.values(), cfg.R.support());
  const MonteCarloOptions mc{cfg.mc_samples, derive_seed(ctx.prov.seed, 0x6d617373)};

  CsvTable pot(concat(concat({"site"}, coord_columns("x", d)), {"weight", "z", "mass", "mass_backend", "mass_std_error"}));
  for (Index i = 0; i < cfg.sites.size(); ++i) {
    const Estimate m = cell_mass(cfg.R, diagram, i, mc);
    auto row = concat({num(i)}, coords(cfg.sites.point(i)));
    row = concat(row, {num(q[i]), num(rep.z[i]), num(m.value), backend_name(m.backend), num(m.std_error)});
    pot.add(row);
  }
  ctx.write("potentials.csv", pot);

  CsvTable facets({"i", "j", "surface_mass", "extent", "estimator", "std_error"});
  for (const auto& rec : facet_table(cfg.R, diagram, mc))
    facets.add({num(rec.i), num(rec.j), num(rec.surface_mass), num(rec.extent), facet_estimator_name(rec.estimator),
                num(rec.std_error)});
  ctx.write("facets.csv", facets);

  CsvTable it({"iteration", "gradient_norm", "min_cell_mass"});
  for (std::size_t k = 0; k < rep.gradient_norms.size(); ++k)
    it.add({num(k), num(rep.gradient_norms[k]), num(rep.min_cell_mass[k])});
  ctx.write("solver.csv", it);
}

// Histogram of draws with an optional reference density evaluated at bin midpoints.
inline CsvTable histogram(const std::vector<double>& draws, std::size_t bins,
                          const std::function<double(double)>& density) {
  CsvTable t({"bin_lo", "bin_hi", "empirical_density", "reference_density"});
  if (draws.empty()) return t;
  const auto [lo_it, hi_it] = std::minmax_element(draws.begin(), draws.end());
  const double lo = *lo_it, hi = *hi_it > *lo_it ? *hi_it : *lo_it + 1.0;
  const double w = (hi - lo) / double(bins);
  std::vector<std::size_t> counts(bins, 0);
  for (double v : draws) counts[std::min(bins - 1, std::size_t((v - lo) / w))]++;
  for (std::size_t b = 0; b < bins; ++b) {
    const double a = lo + double(b) * w;
    const double mid = a + 0.5 * w;
    t.add({num(a), num(a + w), num(double(counts[b]) / (double(draws.size()) * w)), density ? num(density(mid)) : ""});
  }
  return t;
}

inline std::vector<Vector> band_grid(const SupportRegion& Y, std::size_t per_axis) {
  const auto [lo, hi] = Y.bounding_box();
  const int d = Y.dim();
  std::vector<Vector> grid;
  std::vector<std::size_t> idx(std::size_t(d), 0);
  while (true) {
    Vector y(d);
    for (int k = 0; k < d; ++k) y[k] = lo[k] + (double(idx[std::size_t(k)]) + 0.5) / double(per_axis) * (hi[k] - lo[k]);
    if (Y.contains(y)) grid.push_back(y);
    int k = 0;
    while (k < d && ++idx[std::size_t(k)] == per_axis) idx[std::size_t(k++)] = 0;
    if (k == d) break;
  }
  return grid;
}

}  // namespace detail

inline int cmd_solve(const detail::Context& ctx) {
  const detail::Timer timer(ctx.log, "solve");
  const SimplexWeights q = detail::solve_target(ctx.cfg);
  const DualSolveReport rep = solve_dual(q, ctx.cfg.R, ctx.cfg.sites, ctx.cfg.solver);
  detail::write_solution(ctx, q, rep);
  ctx.log << "solve: " << rep.iterations << " Newton iterations, gradient norm " << rep.gradient_norm << "\n";
  return exit_ok;
}

inline int cmd_infer(const detail::Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& sites = cfg.sites;
  const auto& R = cfg.R;
  const std::uint64_t seed = ctx.prov.seed;
  const std::string exact = detail::exact_backend(R);

  // Data: observed counts, or a sample drawn from the configured weights.
  std::optional<SampleData> sample;
  {
    const detail::Timer timer(ctx.log, "infer/data");
    if (cfg.counts) {
      sample = SampleData::from_counts(*cfg.counts);
    } else {
      if (cfg.sample_n == 0) throw ConfigError("field 'sample.n': infer needs 'counts' or a positive sample size");
      Rng rng(derive_seed(seed, 1));
      sample = SampleData::from_counts(multinomial_counts(cfg.sample_n, cfg.weights->values(), rng));
    }
  }
  const std::size_t n = sample->n();

  std::optional<PluginEstimate> est;
  {
    const detail::Timer timer(ctx.log, "infer/plugin");
    est = plugin_estimate(*sample, R, sites, cfg.solver);
    CsvTable t({"site", "count", "p_hat", "z_hat", "fallback", "iterations", "backend"});
    const auto counts = sample->counts();
    for (Index i = 0; i < sites.size(); ++i)
      t.add({num(i), num(counts[i]), num(est->p_hat[i]), num(est->z[i]), est->fallback ? "true" : "false",
             num(est->iterations), exact});
    ctx.write("plugin.csv", t);
  }
  if (est->fallback) fail(Errc::not_interior, "some site is unobserved; the plug-in estimate is the fallback potential");

  const LaguerreDiagram diagram = build_diagram(sites, est->z.values(), R.support(), true);
  const auto facets = facet_table(R, diagram);
  std::vector<std::vector<FacetIntegral>> integrals;
  for (const auto& phi : cfg.phis) integrals.push_back(gamma_facet_integrals(R, diagram, phi.field));

  {
    const detail::Timer timer(ctx.log, "infer/derivatives");
    CsvTable t({"functional", "i", "j", "weight", "backend"});
    const Vector zero = Vector::Zero(Eigen::Index(sites.size()));
    for (double s : cfg.s_values)
      for (const auto& term : hadamard_delta_deriv(sites, facets, zero, zero, s).terms)
        t.add({"delta_s" + num(s), num(term.i), num(term.j), num(term.weight), exact});
    for (std::size_t k = 0; k < cfg.phis.size(); ++k)
      for (const auto& term : gamma_deriv(sites, integrals[k], zero).terms)
        t.add({"gamma_" + cfg.phis[k].name, num(term.i), num(term.j), num(term.weight), "quadrature"});
    ctx.write("derivatives.csv", t);
  }

  const CovarianceModel model = covariance_model(est->p_hat, est->z, R, sites);
  {
    CsvTable t({"matrix", "row", "col", "value", "backend"});
    auto dump = [&](const char* name, const Matrix& m) {
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) t.add({name, num(r), num(c), num(m(r, c)), exact});
    };
    dump("A", model.A);
    dump("B", model.B);
    dump("Sigma", model.Sigma);
    ctx.write("covariance.csv", t);
  }

  // Limit laws.
  std::vector<LimitLawSample> limit_delta;
  {
    const detail::Timer timer(ctx.log, "infer/limit");
    CsvTable summary({"statistic", "draws", "mean", "std_error", "variance", "analytic_variance", "draw_seed", "backend"});
    std::uint64_t stream = 0x11;
    for (double s : cfg.s_values) {
      const std::uint64_t ds = derive_seed(seed, stream++);
      limit_delta.push_back(sample_limit_delta(model, facets, sites, s, cfg.limit_draws, ds));
      const auto& draws = limit_delta.back().draws;
      const std::string name = "delta_s" + num(s);
      write_draws_jsonl(ctx.out / ("limit_" + name + ".jsonl"), ctx.prov, name, "monte_carlo", ds, draws);
      // With a single facet the limit is a scaled half-normal.
      std::function<double(double)> ref;
      if (facets.size() == 1) {
        const auto& f = facets[0];
        const Eigen::Index i = Eigen::Index(f.i), j = Eigen::Index(f.j);
        const double var = model.Sigma(i, i) + model.Sigma(j, j) - 2 * model.Sigma(i, j);
        const double scale = std::pow(sites.distance(f.i, f.j), s - 1) * f.surface_mass * std::sqrt(std::max(var, 0.0));
        if (scale > 0)
          ref = [scale](double x) {
            return x < 0 ? 0.0 : 2.0 / (scale * std::sqrt(2 * std::numbers::pi)) * std::exp(-0.5 * x * x / (scale * scale));
          };
      }
      ctx.write("histogram_limit_" + name + ".csv", detail::histogram(draws, 40, ref));
      summary.add({name, num(draws.size()), num(stats::mean(draws)), num(stats::standard_error(draws)),
                   num(stats::variance(draws)), "", num(ds), "monte_carlo"});
    }
    for (std::size_t k = 0; k < cfg.phis.size(); ++k) {
      const std::uint64_t ds = derive_seed(seed, stream++);
      const auto lim = sample_limit_gamma(model, integrals[k], sites, cfg.limit_draws, ds);
      const double var = limit_variance_gamma(model, integrals[k], sites);
      const std::string name = "gamma_" + cfg.phis[k].name;
      write_draws_jsonl(ctx.out / ("limit_" + name + ".jsonl"), ctx.prov, name, "monte_carlo", ds, lim.draws);
      std::function<double(double)> ref;
      if (var > 0)
        ref = [var](double x) { return std::exp(-0.5 * x * x / var) / std::sqrt(2 * std::numbers::pi * var); };
      ctx.write("histogram_limit_" + name + ".csv", detail::histogram(lim.draws, 40, ref));
      summary.add({name, num(lim.draws.size()), num(stats::mean(lim.draws)), num(stats::standard_error(lim.draws)),
                   num(stats::variance(lim.draws)), num(var), num(ds), "monte_carlo"});
    }
    ctx.write("limit_summary.csv", summary);
  }

  // Bootstrap.
  // Draws feeding the quantiles, with the seed that produced them.
  std::vector<std::vector<double>> quantile_source;
  std::vector<std::uint64_t> quantile_seed;
  std::string source = "limit";
  if (cfg.bootstrap_enabled) {
    const detail::Timer timer(ctx.log, "infer/bootstrap");
    BootstrapOptions opts;
    opts.threads = cfg.threads;
    opts.solver = cfg.solver;
    CsvTable summary({"statistic", "replications", "used", "fallback", "failures", "mean", "std_error", "variance",
                      "draw_seed", "backend"});
    std::uint64_t stream = 0x21;
    for (double s : cfg.s_values) {
      const std::uint64_t ds = derive_seed(seed, stream++);
      const auto res = bootstrap_delta(*sample, R, sites, s, cfg.bootstrap_replications, ds, opts);
      const std::string name = "delta_s" + num(s);
      write_draws_jsonl(ctx.out / ("bootstrap_" + name + ".jsonl"), ctx.prov, name, "monte_carlo", ds,
                        res.sample.draws);
      summary.add({name, num(cfg.bootstrap_replications), num(res.sample.draws.size()), num(res.fallback_count),
                   num(res.failure_count), num(stats::mean(res.sample.draws)), num(stats::standard_error(res.sample.draws)),
                   num(stats::variance(res.sample.draws)),
                   num(ds), "monte_carlo"});
      quantile_source.push_back(res.sample.draws);
      quantile_seed.push_back(ds);
    }
    for (std::size_t k = 0; k < cfg.phis.size(); ++k) {
      const std::uint64_t ds = derive_seed(seed, stream++);
      const auto res = bootstrap_gamma(*sample, R, sites, cfg.phis[k].field, cfg.bootstrap_replications, ds, opts);
      const std::string name = "gamma_" + cfg.phis[k].name;
      write_draws_jsonl(ctx.out / ("bootstrap_" + name + ".jsonl"), ctx.prov, name, "monte_carlo", ds,
                        res.sample.draws);
      summary.add({name, num(cfg.bootstrap_replications), num(res.sample.draws.size()), num(res.fallback_count),
                   num(res.failure_count), num(stats::mean(res.sample.draws)), num(stats::standard_error(res.sample.draws)),
                   num(stats::variance(res.sample.draws)),
                   num(ds), "monte_carlo"});
    }
    ctx.write("bootstrap_summary.csv", summary);
    source = "bootstrap";
  } else {
    for (const auto& l : limit_delta) {
      quantile_source.push_back(l.draws);
      quantile_seed.push_back(l.seed);
    }
  }

  // Confidence sets for each δ_s, and the band derived from the L1 set.
  {
    const detail::Timer timer(ctx.log, "infer/confidence");
    CsvTable t({"statistic", "alpha", "level", "tau", "radius", "source", "draws", "draw_seed", "backend"});
    std::optional<std::size_t> l1;
    for (std::size_t k = 0; k < cfg.s_values.size(); ++k) {
      if (cfg.s_values[k] == 1.0) l1 = k;
      if (quantile_source[k].empty()) continue;
      for (double a : cfg.alphas) {
        const double tau = confidence_set_radius(quantile_source[k], a);
        t.add({"delta_s" + num(cfg.s_values[k]), num(a), num(1 - a), num(tau), num(tau / std::sqrt(double(n))),
               source, num(quantile_source[k].size()), num(quantile_seed[k]), "monte_carlo"});
      }
    }
    ctx.write("confidence.csv", t);

    if (l1 && !quantile_source[*l1].empty()) {
      const int d = sites.dim();
      CsvTable band(detail::concat(detail::concat({"alpha", "point"}, detail::coord_columns("y", d)),
                                   {"center", "radius", "members"}));
      const auto grid = detail::band_grid(R.support(), cfg.band_grid);
      for (double a : cfg.alphas) {
        const double tau_half = confidence_set_radius(quantile_source[*l1], a / 2);
        const auto points = confidence_band(sites, est->z, tau_half, n, a, grid);
        for (std::size_t k = 0; k < points.size(); ++k) {
          std::string members;
          for (Index m : points[k].members) members += (members.empty() ? "" : ";") + num(m);
          auto row = detail::concat({num(a), num(k)}, detail::coords(points[k].y));
          band.add(detail::concat(row, {num(points[k].center), num(points[k].radius), members}));
        }
      }
      ctx.write("band.csv", band);
    }
  }

  // Pointwise agreement with the true map, when the truth is known.
  if (cfg.weights && cfg.weights->interior()) {
    const PotentialVector z_star = solve_dual(*cfg.weights, R, sites, cfg.solver).z;
    const auto frac = super_consistency_probe(est->z, z_star, R.support(), sites, cfg.probe_margin, cfg.probe_grid);
    CsvTable t({"margin", "grid_per_cell", "fraction", "backend"});
    t.add({num(cfg.probe_margin), num(cfg.probe_grid), frac ? num(*frac) : "not_applicable", "exact"});
    ctx.write("probe.csv", t);
  }

  CsvTable summary({"key", "value"});
  summary.add({"n", num(n)});
  summary.add({"sites", num(sites.size())});
  summary.add({"dimension", num(sites.dim())});
  summary.add({"reference", cfg.reference_kind});
  summary.add({"bootstrap", cfg.bootstrap_enabled ? "enabled" : "disabled"});
  summary.add({"limit_draws", num(cfg.limit_draws)});
  ctx.write("summary.csv", summary);
  return exit_ok;
}

inline int cmd_validate(const detail::Context& ctx) {
  const detail::Timer timer(ctx.log, "validate");
  const auto& cfg = ctx.cfg;
  ValidationSettings vs;
  vs.s_values = cfg.s_values;
  for (const auto& phi : cfg.phis) vs.phis.emplace_back(phi.name, phi.field);
  vs.directions = cfg.validate.directions;
  vs.fd_step = cfg.validate.fd_step;
  vs.rel_tol = cfg.validate.rel_tol;
  vs.mc_samples = cfg.validate.mc_samples;
  vs.corrupt_facet_measure = cfg.validate.corrupt_facet_measure;
  vs.seed = ctx.prov.seed;
  vs.solver = cfg.solver;
  const auto checks = run_validation(Problem{cfg.sites, cfg.R, detail::solve_target(cfg)}, vs);

  CsvTable t({"check", "status", "value", "tolerance", "backend", "detail"});
  bool ok = true;
  for (const auto& c : checks) {
    ok = ok && c.passed;
    t.add({c.name, c.passed ? "pass" : "FAIL", num(c.value), num(c.tolerance), c.backend, c.detail});
    ctx.log << (c.passed ? "pass  " : "FAIL  ") << c.name << "  " << c.value << " (tolerance " << c.tolerance << ")\n";
  }
  if (checks.empty()) {
    t.add({"vacuous", "pass", "0", "0", "exact", "single site: nothing to check"});
    ctx.log << "pass  vacuous (single site)\n";
  }
  ctx.write("validate.csv", t);
  return ok ? exit_ok : exit_validation;
}

inline int cmd_coverage_study(const detail::Context& ctx) {
  const detail::Timer timer(ctx.log, "coverage-study");
  const auto& cfg = ctx.cfg;
  if (!cfg.weights) throw ConfigError("field 'weights': the coverage study needs the true weights");
  CoverageSettings cs;
  cs.outer = cfg.coverage.outer;
  cs.n = cfg.coverage.n;
  cs.replications = cfg.coverage.replications;
  cs.alpha = cfg.coverage.alpha;
  cs.s = cfg.coverage.s;
  cs.margin = cfg.coverage.margin;
  cs.grid_per_cell = cfg.coverage.grid_per_cell;
  cs.seed = ctx.prov.seed;
  cs.threads = cfg.threads;
  const auto result = run_coverage_study(Problem{cfg.sites, cfg.R, *cfg.weights}, cs);

  CsvTable rows({"replication", "fallback", "statistic", "tau", "tau_half", "covered", "band_radius", "band_coverage",
                 "probe_fraction", "bootstrap_used", "bootstrap_fallbacks", "bootstrap_failures"});
  for (const auto& r : result.rows)
    rows.add({num(r.replication), r.fallback ? "true" : "false", num(r.statistic), num(r.tau), num(r.tau_half),
              r.covered ? "true" : "false", num(r.band_radius), num(r.band_coverage),
              r.probe ? num(*r.probe) : "not_applicable", num(r.bootstrap_used), num(r.bootstrap_fallbacks),
              num(r.bootstrap_failures)});
  ctx.write("coverage_replications.csv", rows);

  // Binomial standard error for the coverage rate; sample standard error of the mean band coverage.
  std::vector<double> band;
  for (const auto& r : result.rows)
    if (!r.fallback) band.push_back(r.band_coverage);
  const double used = double(std::max<std::size_t>(result.used, 1));
  const double set_se = std::sqrt(result.set_coverage * (1 - result.set_coverage) / used);
  CsvTable summary({"nominal", "set_coverage", "set_coverage_std_error", "band_average_coverage",
                    "band_average_std_error", "probe_exact_rate", "outer", "used", "fallbacks", "n",
                    "bootstrap_replications", "backend"});
  summary.add({num(1 - cs.alpha), num(result.set_coverage), num(set_se), num(result.band_average_coverage),
               num(band.size() > 1 ? stats::standard_error(band) : 0.0), num(result.probe_exact_rate), num(cs.outer),
               num(result.used), num(result.fallbacks), num(cs.n), num(cs.replications), "monte_carlo"});
  ctx.write("coverage_summary.csv", summary);
  ctx.log << "coverage-study: set coverage " << result.set_coverage << ", band average coverage "
          << result.band_average_coverage << " at nominal " << 1 - cs.alpha << "\n";
  return exit_ok;
}

/// Loads the configuration, applies flag overrides and dispatches. Never throws.
inline int run_command(const std::string& command, const std::filesystem::path& config_path, const RunOptions& opts) {
  std::ostream& log = *opts.log;
  try {
    ProblemConfig cfg = load_config(config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.threads) {
      if (*opts.threads == 0) throw ConfigError("--threads must be positive");
      cfg.threads = *opts.threads;
    }
    std::error_code ec;
    std::filesystem::create_directories(opts.out, ec);
    if (ec || !std::filesystem::is_directory(opts.out))
      throw ConfigError("cannot create output directory " + opts.out.string());
    const detail::Context ctx{cfg, Provenance{cfg.hash, cfg.seed}, opts.out, log};
    if (command == "solve") return cmd_solve(ctx);
    if (command == "infer") return cmd_infer(ctx);
    if (command == "validate") return cmd_validate(ctx);
    if (command == "coverage-study") return cmd_coverage_study(ctx);
    throw ConfigError("unknown subcommand '" + command + "'");
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const Error& e) {
    const int code = exit_code_for(e.code());
    log << (code == exit_config ? "problem error: " : "numeric failure: ") << e.what() << "\n";
    return code;
  } catch (const std::exception& e) {
    log << "numeric failure: " << e.what() << "\n";
    return exit_numeric;
  }
}

}  // namespace sdot::app
