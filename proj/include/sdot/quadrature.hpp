#pragma once

#include "sdot/core.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace sdot::quadrature {

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline GaussRule make_gauss_legendre(int n) {
  GaussRule rule;
  rule.nodes.resize(std::size_t(n));
  rule.weights.resize(std::size_t(n));
  for (int k = 0; k < (n + 1) / 2; ++k) {
    double x = std::cos(std::numbers::pi * (k + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int m = 2; m <= n; ++m) {
        const double p2 = ((2.0 * m - 1.0) * x * p1 - (m - 1.0) * p0) / m;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute the derivative at the converged root for the weight.
    double p0 = 1.0, p1 = x;
    for (int m = 2; m <= n; ++m) {
      const double p2 = ((2.0 * m - 1.0) * x * p1 - (m - 1.0) * p0) / m;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[std::size_t(k)] = -x;
    rule.nodes[std::size_t(n - 1 - k)] = x;
    rule.weights[std::size_t(k)] = w;
    rule.weights[std::size_t(n - 1 - k)] = w;
  }
  return rule;
}

inline const GaussRule& coarse_rule() {
  static const GaussRule rule = make_gauss_legendre(16);
  return rule;
}

inline const GaussRule& fine_rule() {
  static const GaussRule rule = make_gauss_legendre(32);
  return rule;
}

/// Two successive orders must agree to this before a panel is accepted.
inline constexpr double agreement = 1e-10;
inline constexpr int max_depth = 8;

namespace detail {
inline double magnitude(double v) { return std::abs(v); }
inline double magnitude(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

template <class F, class T>
T segment_fixed(const Vector& a, const Vector& b, F& f, const T& zero, const GaussRule& rule) {
  T acc = zero;
  const double half = 0.5 * (b - a).norm();
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double u = 0.5 * (rule.nodes[k] + 1.0);
    acc += (rule.weights[k] * half) * f(Vector(a + u * (b - a)));
  }
  return acc;
}

template <class F, class T>
T segment_adaptive(const Vector& a, const Vector& b, F& f, const T& zero, int depth) {
  const T coarse = segment_fixed(a, b, f, zero, coarse_rule());
  const T fine = segment_fixed(a, b, f, zero, fine_rule());
  const T diff = fine - coarse;
  if (depth >= max_depth || magnitude(diff) <= agreement * std::max(1.0, magnitude(fine))) return fine;
  const Vector mid = 0.5 * (a + b);
  return segment_adaptive(a, mid, f, zero, depth + 1) + segment_adaptive(mid, b, f, zero, depth + 1);
}

// Collapsed-square (Duffy) map of [0,1]^2 onto triangle abc.
template <class F, class T>
T triangle_fixed(const Point2& a, const Point2& b, const Point2& c, F& f, const T& zero, const GaussRule& rule) {
  T acc = zero;
  const double jac = std::abs(cross(b - a, c - b));
  Vector y(2);
  for (std::size_t p = 0; p < rule.nodes.size(); ++p) {
    const double u = 0.5 * (rule.nodes[p] + 1.0);
    const double wu = 0.5 * rule.weights[p];
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const double v = 0.5 * (rule.nodes[q] + 1.0);
      const double wv = 0.5 * rule.weights[q];
      const Point2 pt = a + u * ((b - a) + v * (c - b));
      y[0] = pt.x();
      y[1] = pt.y();
      acc += (wu * wv * u * jac) * f(y);
    }
  }
  return acc;
}

template <class F, class T>
T triangle_adaptive(const Point2& a, const Point2& b, const Point2& c, F& f, const T& zero, int depth) {
  const T coarse = triangle_fixed(a, b, c, f, zero, coarse_rule());
  const T fine = triangle_fixed(a, b, c, f, zero, fine_rule());
  const T diff = fine - coarse;
  if (depth >= max_depth / 2 || magnitude(diff) <= agreement * std::max(1.0, magnitude(fine))) return fine;
  const Point2 ab = 0.5 * (a + b), bc = 0.5 * (b + c), ca = 0.5 * (c + a);
  return triangle_adaptive(a, ab, ca, f, zero, depth + 1) + triangle_adaptive(ab, b, bc, f, zero, depth + 1) +
         triangle_adaptive(ca, bc, c, f, zero, depth + 1) + triangle_adaptive(ab, bc, ca, f, zero, depth + 1);
}
}  // namespace detail

/// Line integral of f along the segment [a, b] (arc-length measure).
template <class F, class T>
T integrate_segment(const Vector& a, const Vector& b, F f, const T& zero) {
  if ((b - a).norm() == 0.0) return zero;
  return detail::segment_adaptive(a, b, f, zero, 0);
}

template <class F, class T>
T integrate_interval(double lo, double hi, F f, const T& zero) {
  if (!(hi > lo)) return zero;
  return integrate_segment(Vector::Constant(1, lo), Vector::Constant(1, hi), f, zero);
}

/// Area integral of f over a convex polygon (fan triangulation).
template <class F, class T>
T integrate_polygon(const Polygon& poly, F f, const T& zero) {
  T acc = zero;
  for (std::size_t k = 1; k + 1 < poly.size(); ++k)
    acc += detail::triangle_adaptive(poly[0], poly[k], poly[k + 1], f, zero, 0);
  return acc;
}

}  // namespace sdot::quadrature
