#pragma once

// Problem configuration: a YAML document validated field by field. Every rejection names the
// offending field and, where the parser knows it, the line.

#include "sdot/app/format.hpp"
#include "sdot/sdot.hpp"

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace sdot::app {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PhiSpec {
  std::string name;
  std::string kind;
  VectorField field;
};

struct CoverageSpec {
  std::size_t outer = 500;
  std::size_t n = 5000;
  std::size_t replications = 1000;
  double alpha = 0.1;
  double s = 1.0;
  double margin = 0.05;
  std::size_t grid_per_cell = 50;
};

struct ValidateSpec {
  std::size_t directions = 5;
  double fd_step = 1e-4;
  double rel_tol = 0.01;
  std::size_t mc_samples = 200000;
  /// Test hook: multiplies the facet measures fed to the analytic derivative.
  double corrupt_facet_measure = 1.0;
};

struct ProblemConfig {
  std::string source;  // path or "<string>"
  std::string hash;    // FNV-1a of the raw text
  SiteSet sites;
  ReferenceMeasure R;
  std::string reference_kind;
  std::optional<SimplexWeights> weights{};
  std::optional<std::vector<std::size_t>> counts{};
  std::vector<double> s_values{1.0};
  std::vector<PhiSpec> phis{};
  std::uint64_t seed = 0;
  std::size_t sample_n = 0;
  std::size_t limit_draws = 10000;
  bool bootstrap_enabled = true;
  std::size_t bootstrap_replications = 1000;
  std::vector<double> alphas{0.1};
  std::size_t band_grid = 20;
  double probe_margin = 0.05;
  std::size_t probe_grid = 50;
  CoverageSpec coverage{};
  ValidateSpec validate{};
  SolverOptions solver{};
  unsigned threads = 1;
  std::size_t mc_samples = 100000;
};

namespace detail {

class Field {
 public:
  Field(YAML::Node node, std::string path, int fallback_line)
      : node_(std::move(node)), path_(std::move(path)), line_(fallback_line) {
    if (node_ && node_.Mark().line >= 0) line_ = node_.Mark().line;
  }

  [[noreturn]] void error(const std::string& msg) const {
    std::string where = line_ >= 0 ? "line " + std::to_string(line_ + 1) + ", " : "";
    throw ConfigError(where + "field '" + (path_.empty() ? "<root>" : path_) + "': " + msg);
  }

  bool present() const { return node_ && !node_.IsNull(); }
  bool has(const std::string& key) const { return present() && node_.IsMap() && node_[key] && !node_[key].IsNull(); }
  const std::string& path() const { return path_; }

  Field operator[](const std::string& key) const {
    if (present() && !node_.IsMap()) error("expected a mapping");
    return Field(present() ? node_[key] : YAML::Node(), path_.empty() ? key : path_ + "." + key, line_);
  }
  Field operator[](std::size_t k) const {
    return Field(node_[k], path_ + "[" + std::to_string(k) + "]", line_);
  }

  void require_map(const std::set<std::string>& allowed) const {
    if (!present()) return;
    if (!node_.IsMap()) error("expected a mapping");
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!allowed.count(key)) Field(kv.first, path_.empty() ? key : path_ + "." + key, line_).error("unknown key");
    }
  }

  std::size_t list_size() const {
    if (!present() || !node_.IsSequence()) error("expected a list");
    return node_.size();
  }
  bool is_list() const { return present() && node_.IsSequence(); }

  double number() const {
    if (!present()) error("missing required value");
    try {
      const double v = node_.as<double>();
      if (!std::isfinite(v)) error("value must be finite");
      return v;
    } catch (const YAML::Exception&) {
      error("expected a number");
    }
  }
  double number_or(double fallback) const { return present() ? number() : fallback; }

  std::uint64_t count() const {
    if (!present()) error("missing required value");
    if (!node_.IsScalar()) error("expected a nonnegative integer");
    const std::string text = node_.as<std::string>();
    if (!std::regex_match(text, std::regex("[0-9]+"))) error("expected a nonnegative integer");
    try {
      return node_.as<std::uint64_t>();
    } catch (const YAML::Exception&) {
      error("integer out of range");
    }
  }
  std::uint64_t count_or(std::uint64_t fallback) const { return present() ? count() : fallback; }

  bool boolean_or(bool fallback) const {
    if (!present()) return fallback;
    try {
      return node_.as<bool>();
    } catch (const YAML::Exception&) {
      error("expected true or false");
    }
  }

  std::string text() const {
    if (!present()) error("missing required value");
    if (!node_.IsScalar()) error("expected a string");
    return node_.as<std::string>();
  }

  std::vector<double> numbers() const {
    if (present() && node_.IsScalar()) return {number()};
    std::vector<double> out;
    for (std::size_t k = 0, n = list_size(); k < n; ++k) out.push_back((*this)[k].number());
    return out;
  }

  Vector vector(int dim) const {
    const auto v = numbers();
    if (dim >= 0 && int(v.size()) != dim) error("expected " + std::to_string(dim) + " coordinates");
    return Eigen::Map<const Vector>(v.data(), Eigen::Index(v.size()));
  }

 private:
  YAML::Node node_;
  std::string path_;
  int line_ = -1;
};

template <class F>
auto guarded(const Field& f, F&& build) {
  try {
    return build();
  } catch (const Error& e) {
    f.error(e.what());
  }
}

inline SupportRegion parse_support(const Field& f) {
  f.require_map({"kind", "lower", "upper", "vertices", "center", "radius"});
  const std::string kind = f["kind"].text();
  if (kind == "interval") {
    return guarded(f, [&] { return SupportRegion::interval(f["lower"].number(), f["upper"].number()); });
  }
  if (kind == "box") {
    const Vector lo = f["lower"].vector(-1);
    const Vector hi = f["upper"].vector(int(lo.size()));
    return guarded(f, [&] { return SupportRegion::box(lo, hi); });
  }
  if (kind == "polygon") {
    const Field vs = f["vertices"];
    Polygon poly;
    for (std::size_t k = 0, n = vs.list_size(); k < n; ++k) poly.push_back(Point2(vs[k].vector(2)));
    return guarded(vs, [&] { return SupportRegion::polygon(poly); });
  }
  if (kind == "ball") {
    const Vector c = f["center"].vector(-1);
    return guarded(f, [&] { return SupportRegion::ball(c, f["radius"].number()); });
  }
  f["kind"].error("unknown support kind '" + kind + "' (interval, box, polygon, ball)");
}

// Centroid of Y and the largest distance from it to a point of Y.
inline std::pair<Vector, double> centroid_and_reach(const SupportRegion& Y) {
  if (const auto* iv = Y.as_interval()) {
    const double c = 0.5 * (iv->lo + iv->hi);
    return {Vector::Constant(1, c), 0.5 * iv->length()};
  }
  if (const auto* pg = Y.as_polygon()) {
    double a = 0.0, cx = 0.0, cy = 0.0;
    for (std::size_t k = 0; k < pg->size(); ++k) {
      const Point2& p = (*pg)[k];
      const Point2& q = (*pg)[(k + 1) % pg->size()];
      const double w = p.x() * q.y() - q.x() * p.y();
      a += w;
      cx += (p.x() + q.x()) * w;
      cy += (p.y() + q.y()) * w;
    }
    const Vector c{{cx / (3.0 * a), cy / (3.0 * a)}};
    double reach = 0.0;
    for (const auto& v : *pg) reach = std::max(reach, (Vector(v) - c).norm());
    return {c, reach};
  }
  // Boxes and balls are centrally symmetric about the middle of their bounding box.
  const auto [lo, hi] = Y.bounding_box();
  const Vector c = 0.5 * (lo + hi);
  const bool is_ball = Y.as_body()->name == "ball";
  return {c, is_ball ? 0.5 * (hi - lo)[0] : 0.5 * (hi - lo).norm()};
}

inline ReferenceMeasure parse_reference(const Field& f, std::string& kind_out, std::size_t mc_samples) {
  f.require_map({"support", "density"});
  SupportRegion Y = parse_support(f["support"]);
  const Field dens = f["density"];
  dens.require_map({"kind", "slope"});
  const std::string kind = dens.present() ? dens["kind"].text() : "uniform";
  kind_out = kind;
  if (kind == "uniform") return ReferenceMeasure::uniform(std::move(Y));
  if (kind == "affine") {
    // ρ(y) = (1 + <a, y - c>)/vol(Y) with c the centroid, so ρ integrates to one.
    const Vector a = dens["slope"].vector(Y.dim());
    const auto [c, reach] = centroid_and_reach(Y);
    if (a.norm() * reach >= 1.0) dens["slope"].error("slope too large: density would not stay positive on the support");
    const double vol = Y.volume();
    auto rho = [a, c, vol](const Vector& y) { return (1.0 + a.dot(y - c)) / vol; };
    const double bound = (1.0 + a.norm() * reach) / vol;
    return guarded(dens, [&] {
      return ReferenceMeasure::with_density(std::move(Y), rho, bound, MonteCarloOptions{mc_samples, 0});
    });
  }
  dens["kind"].error("unknown density kind '" + kind + "' (uniform, affine)");
}

inline PhiSpec parse_phi(const Field& f, int dim, double reach) {
  f.require_map({"name", "kind", "value", "axis", "center", "radius", "width", "direction"});
  PhiSpec spec;
  spec.name = f["name"].text();
  if (!std::regex_match(spec.name, std::regex("[A-Za-z0-9_-]+"))) f["name"].error("use letters, digits, '_' or '-'");
  spec.kind = f["kind"].text();
  if (spec.kind == "constant") {
    spec.field = VectorField::constant(f["value"].vector(dim));
  } else if (spec.kind == "zero") {
    spec.field = VectorField::zero(dim);
  } else if (spec.kind == "coordinate") {
    const auto axis = f["axis"].count();
    if (axis >= std::uint64_t(dim)) f["axis"].error("axis must be below the dimension " + std::to_string(dim));
    spec.field = VectorField::coordinate(dim, int(axis), reach);
  } else if (spec.kind == "smoothed_indicator") {
    const double radius = f["radius"].number(), width = f["width"].number();
    if (!(radius >= 0.0)) f["radius"].error("must be nonnegative");
    if (!(width > 0.0)) f["width"].error("must be positive");
    spec.field = VectorField::smoothed_indicator(f["center"].vector(dim), radius, width, f["direction"].vector(dim));
  } else {
    f["kind"].error("unknown field kind '" + spec.kind + "' (constant, zero, coordinate, smoothed_indicator)");
  }
  return spec;
}

inline double alpha_value(const Field& f) {
  const double a = f.number();
  if (!(a > 0.0 && a < 1.0)) f.error("alpha must lie strictly between 0 and 1");
  return a;
}

}  // namespace detail

inline ProblemConfig parse_config(const std::string& text, const std::string& source = "<string>") {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("line " + std::to_string(e.mark.line + 1) + ": YAML syntax error: " + e.msg);
  }
  using detail::Field;
  const Field f(root, "", 0);
  if (!f.present()) f.error("configuration is empty");
  f.require_map({"sites", "weights", "counts", "reference", "functionals", "seed", "sample", "limit", "bootstrap",
                 "confidence", "probe", "coverage", "validate", "solver", "threads", "monte_carlo"});

  const Field mc = f["monte_carlo"];
  mc.require_map({"samples"});
  const std::size_t mc_samples = mc["samples"].count_or(100000);
  if (mc_samples == 0) mc["samples"].error("must be positive");

  // Sites: a list of coordinate lists, or a list of numbers in one dimension.
  const Field sf = f["sites"];
  const std::size_t n_sites = sf.list_size();
  if (n_sites == 0) sf.error("need at least one site");
  int dim = -1;
  Matrix pts;
  for (std::size_t k = 0; k < n_sites; ++k) {
    const Vector x = sf[k].vector(dim);
    if (dim < 0) {
      dim = int(x.size());
      if (dim == 0) sf[k].error("site has no coordinates");
      pts.resize(Eigen::Index(n_sites), dim);
    }
    pts.row(Eigen::Index(k)) = x.transpose();
  }
  SiteSet sites = detail::guarded(sf, [&] { return SiteSet(pts); });

  std::string reference_kind;
  ReferenceMeasure R = detail::parse_reference(f["reference"], reference_kind, mc_samples);
  if (R.dim() != dim) f["reference"]["support"].error("support dimension differs from the site dimension");

  ProblemConfig cfg{.source = source, .hash = hex64(fnv1a(text)), .sites = std::move(sites), .R = std::move(R),
                    .reference_kind = reference_kind};
  cfg.mc_samples = mc_samples;

  if (f.has("weights")) {
    const Field wf = f["weights"];
    const Vector w = wf.vector(int(n_sites));
    cfg.weights = detail::guarded(wf, [&] { return SimplexWeights(w); });
  }
  if (f.has("counts")) {
    const Field cf = f["counts"];
    if (cf.list_size() != n_sites) cf.error("expected " + std::to_string(n_sites) + " counts");
    std::vector<std::size_t> counts;
    for (std::size_t k = 0; k < n_sites; ++k) counts.push_back(cf[k].count());
    if (std::accumulate(counts.begin(), counts.end(), std::size_t(0)) == 0) cf.error("counts sum to zero");
    cfg.counts = std::move(counts);
  }
  if (!cfg.weights && !cfg.counts) f.error("provide 'weights', 'counts', or both");

  const Field fn = f["functionals"];
  fn.require_map({"s", "phi"});
  if (fn.has("s")) {
    cfg.s_values = fn["s"].numbers();
    for (std::size_t k = 0; k < cfg.s_values.size(); ++k)
      if (!(cfg.s_values[k] >= 1.0)) fn["s"][k].error("exponent s must be at least 1");
  }
  if (fn.has("phi")) {
    const Field pf = fn["phi"];
    const auto [lo, hi] = cfg.R.support().bounding_box();
    const double reach = std::max(lo.cwiseAbs().maxCoeff(), hi.cwiseAbs().maxCoeff());
    std::set<std::string> names;
    for (std::size_t k = 0, n = pf.list_size(); k < n; ++k) {
      cfg.phis.push_back(detail::parse_phi(pf[k], dim, reach));
      if (!names.insert(cfg.phis.back().name).second) pf[k]["name"].error("duplicate name");
    }
  }

  cfg.seed = f["seed"].count_or(0);

  const Field sample = f["sample"];
  sample.require_map({"n"});
  cfg.sample_n = sample["n"].count_or(0);

  const Field lim = f["limit"];
  lim.require_map({"draws"});
  cfg.limit_draws = lim["draws"].count_or(cfg.limit_draws);

  const Field boot = f["bootstrap"];
  boot.require_map({"enabled", "replications"});
  cfg.bootstrap_enabled = boot["enabled"].boolean_or(true);
  cfg.bootstrap_replications = boot["replications"].count_or(cfg.bootstrap_replications);
  if (cfg.bootstrap_enabled && cfg.bootstrap_replications == 0) boot["replications"].error("must be positive");

  const Field conf = f["confidence"];
  conf.require_map({"alpha", "band_grid"});
  if (conf.has("alpha")) {
    cfg.alphas.clear();
    const Field af = conf["alpha"];
    if (af.is_list())
      for (std::size_t k = 0, n = af.list_size(); k < n; ++k) cfg.alphas.push_back(detail::alpha_value(af[k]));
    else
      cfg.alphas.push_back(detail::alpha_value(af));
  }
  cfg.band_grid = conf["band_grid"].count_or(cfg.band_grid);
  if (cfg.band_grid == 0) conf["band_grid"].error("must be positive");

  const Field probe = f["probe"];
  probe.require_map({"margin", "grid_per_cell"});
  cfg.probe_margin = probe["margin"].number_or(cfg.probe_margin);
  if (!(cfg.probe_margin > 0.0)) probe["margin"].error("must be positive");
  cfg.probe_grid = probe["grid_per_cell"].count_or(cfg.probe_grid);
  if (cfg.probe_grid == 0) probe["grid_per_cell"].error("must be positive");

  const Field cov = f["coverage"];
  cov.require_map({"outer", "n", "replications", "alpha", "s", "margin", "grid_per_cell"});
  cfg.coverage.outer = cov["outer"].count_or(cfg.coverage.outer);
  cfg.coverage.n = cov["n"].count_or(cfg.coverage.n);
  cfg.coverage.replications = cov["replications"].count_or(cfg.coverage.replications);
  if (cov.has("alpha")) cfg.coverage.alpha = detail::alpha_value(cov["alpha"]);
  cfg.coverage.s = cov["s"].number_or(cfg.coverage.s);
  if (!(cfg.coverage.s >= 1.0)) cov["s"].error("exponent s must be at least 1");
  cfg.coverage.margin = cov["margin"].number_or(cfg.coverage.margin);
  if (!(cfg.coverage.margin > 0.0)) cov["margin"].error("must be positive");
  cfg.coverage.grid_per_cell = cov["grid_per_cell"].count_or(cfg.coverage.grid_per_cell);
  for (const char* key : {"outer", "n", "replications", "grid_per_cell"})
    if (cov.has(key) && cov[key].count() == 0) cov[key].error("must be positive");

  const Field val = f["validate"];
  val.require_map({"directions", "fd_step", "rel_tol", "mc_samples", "corrupt_facet_measure"});
  cfg.validate.directions = val["directions"].count_or(cfg.validate.directions);
  cfg.validate.fd_step = val["fd_step"].number_or(cfg.validate.fd_step);
  if (!(cfg.validate.fd_step > 0.0)) val["fd_step"].error("must be positive");
  cfg.validate.rel_tol = val["rel_tol"].number_or(cfg.validate.rel_tol);
  if (!(cfg.validate.rel_tol > 0.0)) val["rel_tol"].error("must be positive");
  cfg.validate.mc_samples = val["mc_samples"].count_or(cfg.validate.mc_samples);
  if (cfg.validate.mc_samples == 0) val["mc_samples"].error("must be positive");
  cfg.validate.corrupt_facet_measure = val["corrupt_facet_measure"].number_or(1.0);

  const Field sol = f["solver"];
  sol.require_map({"tolerance", "max_iterations", "max_halvings"});
  cfg.solver.tolerance = sol["tolerance"].number_or(cfg.solver.tolerance);
  if (!(cfg.solver.tolerance > 0.0)) sol["tolerance"].error("must be positive");
  cfg.solver.max_iterations = int(sol["max_iterations"].count_or(std::uint64_t(cfg.solver.max_iterations)));
  cfg.solver.max_halvings = int(sol["max_halvings"].count_or(std::uint64_t(cfg.solver.max_halvings)));

  cfg.threads = unsigned(f["threads"].count_or(1));
  if (cfg.threads == 0) f["threads"].error("must be positive");
  return cfg;
}

inline ProblemConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read configuration file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

}  // namespace sdot::app
