#pragma once

#include "sdot/core.hpp"
#include "sdot/geometry.hpp"
#include "sdot/measure.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace sdot {

struct SolverOptions {
  double tolerance = 1e-10;  // on the sup-norm of the gradient
  int max_iterations = 100;
  int max_halvings = 50;
  int max_warm_start_iterations = 10000;
};

struct DualSolveReport {
  PotentialVector z;
  int iterations = 0;
  double gradient_norm = 0.0;
  /// Gradient sup-norm and smallest cell mass at every accepted iterate, starting point included.
  std::vector<double> gradient_norms;
  std::vector<double> min_cell_mass;
  int warm_start_iterations = 0;
  bool converged = false;
};

namespace detail {

inline void check_problem(const SimplexWeights& q, const ReferenceMeasure& R, const SiteSet& sites) {
  if (q.size() != sites.size()) fail(Errc::dimension_mismatch, "weights and sites differ in length");
  if (R.dim() != sites.dim()) fail(Errc::dimension_mismatch, "reference measure and sites differ in dimension");
}

inline void require_exact(const ReferenceMeasure& R) {
  if (!R.support().exact())
    fail(Errc::unsupported_exact_dimension, "dual derivatives need exact cell geometry (d <= 2, polygonal support)");
}

// Weighted graph Laplacian L with w_ij = R+(D_ij)/|x_i - x_j|; dm/dz = L.
inline Matrix mass_jacobian(const ReferenceMeasure& R, const LaguerreDiagram& diagram) {
  const auto n = Eigen::Index(diagram.size());
  Matrix L = Matrix::Zero(n, n);
  for (const auto& f : diagram.facets()) {
    const double w = facet_surface_mass(R, diagram, f).surface_mass / f.difference.norm();
    const auto i = Eigen::Index(f.i), j = Eigen::Index(f.j);
    L(i, j) -= w;
    L(j, i) -= w;
    L(i, i) += w;
    L(j, j) += w;
  }
  return L;
}

// J^T H J with J = [I; -1^T], i.e. the Hessian in coordinates z_1..z_{N-1}, z_N = -sum.
inline Matrix reduce_symmetric(const Matrix& H) {
  const Eigen::Index m = H.rows() - 1;
  Matrix out(m, m);
  for (Eigen::Index k = 0; k < m; ++k)
    for (Eigen::Index l = 0; l < m; ++l) out(k, l) = H(k, l) - H(k, m) - H(m, l) + H(m, m);
  return out;
}

inline Vector expand_reduced(const Vector& u) {
  Vector z(u.size() + 1);
  z.head(u.size()) = u;
  z[u.size()] = -u.sum();
  return z;
}

inline Matrix reduced_hessian_at(const ReferenceMeasure& R, const LaguerreDiagram& diagram) {
  for (Index i = 0; i < diagram.size(); ++i) {
    if (diagram.cell(i).empty)
      fail(Errc::empty_cell, "cell " + std::to_string(i) + " is empty; potential is outside the positive-mass set");
  }
  return reduce_symmetric(-mass_jacobian(R, diagram));
}

// With c inside Y and x'_i = c + λ(x_i - c), the choice z_i = |x_i|²/2 - |x'_i|²/(2λ) turns the
// Laguerre cells into the Voronoi cells of the x'_i. λ is halved until every x'_i sits well inside Y,
// so each cell contains a neighbourhood of its contracted site.
inline Vector contracted_start(const SiteSet& sites, const SupportRegion& support) {
  const auto [lo, hi] = support.bounding_box();
  Vector c = 0.5 * (lo + hi);
  if (const auto* poly = support.as_polygon()) {
    c = Vector::Zero(2);
    for (const auto& v : *poly) c += v;
    c /= double(poly->size());
  }
  const auto inside = [&](const Vector& x) { return support.contains(c + (x - c) / 0.9); };
  double lambda = 1.0;
  for (int k = 0; k < 200; ++k, lambda *= 0.5) {
    bool ok = true;
    for (Index i = 0; i < sites.size() && ok; ++i) ok = inside(c + lambda * (sites.point(i) - c));
    if (ok) break;
  }
  Vector z(Eigen::Index(sites.size()));
  for (Index i = 0; i < sites.size(); ++i) {
    const Vector x = sites.point(i);
    z[Eigen::Index(i)] = 0.5 * x.squaredNorm() - (c + lambda * (x - c)).squaredNorm() / (2.0 * lambda);
  }
  return z.array() - z.mean();
}

}  // namespace detail

/// Φ(z, q) = <z, q> + ∫ min_i (|y - x_i|^2/2 - z_i) dR(y).
inline double dual_objective(const Vector& z, const SimplexWeights& q, const ReferenceMeasure& R,
                             const SiteSet& sites, const MonteCarloOptions& mc = {}) {
  detail::check_problem(q, R, sites);
  detail::check_potential(sites, z);
  double value = z.dot(q.values());
  if (!R.support().exact()) {
    if (!R.can_sample()) fail(Errc::no_sampler, "objective on implicit support needs sampling");
    Rng rng(mc.seed);
    double sum = 0.0;
    for (std::size_t k = 0; k < mc.samples; ++k) {
      const Vector y = R.sample(rng);
      const Index i = locate(sites, z, y);
      sum += 0.5 * (y - sites.point(i)).squaredNorm() - z[Eigen::Index(i)];
    }
    return value + sum / double(mc.samples);
  }
  const LaguerreDiagram diagram = build_diagram(sites, z, R.support(), true);
  for (Index i = 0; i < sites.size(); ++i) {
    const Vector xi = sites.point(i);
    const double zi = z[Eigen::Index(i)];
    value += R.integrate_exact_region(
        diagram.cell(i), [&](const Vector& y) { return 0.5 * (y - xi).squaredNorm() - zi; }, 0.0);
  }
  return value;
}

/// (q_i - R(C_i(z)))_i.
inline Vector dual_gradient(const Vector& z, const SimplexWeights& q, const ReferenceMeasure& R,
                            const SiteSet& sites, const MonteCarloOptions& mc = {}) {
  detail::check_problem(q, R, sites);
  const LaguerreDiagram diagram = build_diagram(sites, z, R.support());
  return q.values() - cell_masses(R, diagram, mc);
}

/// Hessian of the concave reduced objective u -> Φ((u, -<u,1>), q), an (N-1)x(N-1) matrix.
inline Matrix dual_hessian_reduced(const Vector& z, const ReferenceMeasure& R, const SiteSet& sites) {
  detail::check_potential(sites, z);
  if (R.dim() != sites.dim()) fail(Errc::dimension_mismatch, "reference measure and sites differ in dimension");
  detail::require_exact(R);
  return detail::reduced_hessian_at(R, build_diagram(sites, z, R.support(), true));
}

/// Damped Newton ascent on the reduced dual, started from z = 0.
inline DualSolveReport solve_dual(const SimplexWeights& q, const ReferenceMeasure& R, const SiteSet& sites,
                                  const SolverOptions& options = {}) {
  detail::check_problem(q, R, sites);
  if (!q.interior()) fail(Errc::not_interior, "target weights must all be positive");
  detail::require_exact(R);

  const Index n = sites.size();
  DualSolveReport report;
  if (n == 1) {
    report.z = PotentialVector::zero(1);
    report.gradient_norms = {0.0};
    report.min_cell_mass = {1.0};
    report.converged = true;
    return report;
  }

  Vector z = Vector::Zero(Eigen::Index(n));
  LaguerreDiagram diagram = build_diagram(sites, z, R.support(), true);
  Vector mass = cell_masses(R, diagram);

  // Some site's Voronoi cell misses Y: restart from the potentials whose Laguerre cells are the
  // Voronoi cells of the sites contracted into Y, then fall back to fixed-step ascent.
  if (mass.minCoeff() <= 0.0) {
    z = detail::contracted_start(sites, R.support());
    diagram = build_diagram(sites, z, R.support(), true);
    mass = cell_masses(R, diagram);
    ++report.warm_start_iterations;
  }
  const double diam = R.support().diameter();
  const double warm_step = diam * diam;
  while (mass.minCoeff() <= 0.0) {
    if (report.warm_start_iterations++ >= options.max_warm_start_iterations)
      fail(Errc::max_iterations_exceeded, "warm start could not make every cell nonempty");
    z += warm_step * (q.values() - mass);
    z.array() -= z.mean();
    diagram = build_diagram(sites, z, R.support(), true);
    mass = cell_masses(R, diagram);
  }

  const double floor = 0.5 * std::min(q.min(), mass.minCoeff());
  Vector grad = q.values() - mass;
  double gnorm = grad.cwiseAbs().maxCoeff();
  report.gradient_norms.push_back(gnorm);
  report.min_cell_mass.push_back(mass.minCoeff());

  while (gnorm > options.tolerance) {
    if (report.iterations >= options.max_iterations)
      fail(Errc::max_iterations_exceeded, "Newton iteration cap reached with gradient norm " + std::to_string(gnorm));
    const Matrix neg_hessian = -detail::reduced_hessian_at(R, diagram);
    const Vector reduced_grad = grad.head(Eigen::Index(n - 1)).array() - grad[Eigen::Index(n - 1)];
    Eigen::LLT<Matrix> llt(neg_hessian);
    if (llt.info() != Eigen::Success)
      fail(Errc::degenerate_configuration, "reduced Hessian is singular although every cell has mass");
    const Vector step = detail::expand_reduced(llt.solve(reduced_grad));

    bool accepted = false;
    double tau = 1.0;
    for (int h = 0; h <= options.max_halvings; ++h, tau *= 0.5) {
      Vector trial = z + tau * step;
      LaguerreDiagram trial_diagram = build_diagram(sites, trial, R.support(), true);
      Vector trial_mass = cell_masses(R, trial_diagram);
      Vector trial_grad = q.values() - trial_mass;
      const double trial_norm = trial_grad.cwiseAbs().maxCoeff();
      if (trial_mass.minCoeff() >= floor && trial_norm < gnorm) {
        z = std::move(trial);
        diagram = std::move(trial_diagram);
        mass = std::move(trial_mass);
        grad = std::move(trial_grad);
        gnorm = trial_norm;
        accepted = true;
        break;
      }
    }
    if (!accepted)
      fail(Errc::degenerate_configuration, "line search failed at gradient norm " + std::to_string(gnorm));
    ++report.iterations;
    report.gradient_norms.push_back(gnorm);
    report.min_cell_mass.push_back(mass.minCoeff());
  }

  report.z = PotentialVector::normalize(z);
  report.gradient_norm = gnorm;
  report.converged = true;
  return report;
}

/// B = ∇_q z*(q): an (N-1) x N matrix whose row l holds ∂z*/∂q_l, obtained by implicit
/// differentiation of the reduced first-order condition.
inline Matrix dual_sensitivity(const PotentialVector& z_star, const SimplexWeights& q, const ReferenceMeasure& R,
                               const SiteSet& sites) {
  detail::check_problem(q, R, sites);
  detail::check_potential(sites, z_star.values());
  detail::require_exact(R);
  const auto n = Eigen::Index(sites.size());
  if (n == 1) return Matrix::Zero(0, 1);
  const Matrix neg_hessian = -detail::reduced_hessian_at(R, build_diagram(sites, z_star.values(), R.support(), true));
  Eigen::LLT<Matrix> llt(neg_hessian);
  if (llt.info() != Eigen::Success) fail(Errc::singular_hessian, "reduced Hessian is not invertible");
  // Mixed partial ∂²Φ/∂u∂q = I + 11^T; du/dq = -H^{-1} M = (-H)^{-1} M.
  const Matrix mixed = Matrix::Identity(n - 1, n - 1) + Matrix::Ones(n - 1, n - 1);
  const Matrix du_dq = llt.solve(mixed);
  Matrix B(n - 1, n);
  B.leftCols(n - 1) = du_dq.transpose();
  B.col(n - 1) = -du_dq.colwise().sum().transpose();
  return B;
}

}  // namespace sdot
