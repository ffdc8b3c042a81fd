#pragma once

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace fsde {

struct QuadratureRule {
  std::vector<double> nodes;    // in (-1,1)
  std::vector<double> weights;  // sum to 2
};

// Gauss-Legendre nodes and weights via Newton iteration on the Legendre
// recurrence (symmetric; only half the roots are computed).
inline QuadratureRule make_gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

inline const QuadratureRule& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, QuadratureRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, make_gauss_legendre(n)).first;
  return it->second;
}

template <class F>
double integrate_gl(F&& f, double a, double b, int order = 16) {
  if (!(b > a)) return 0.0;
  const QuadratureRule& rule = gauss_legendre(order);
  const double mid = 0.5 * (a + b);
  const double rad = 0.5 * (b - a);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    acc += rule.weights[i] * f(mid + rad * rule.nodes[i]);
  return acc * rad;
}

// Integrate over [a,b] with panels refined geometrically toward `a`;
// suited to integrands with power-type behavior at the lower endpoint.
template <class F>
double integrate_refined_lower(F&& f, double a, double b, int panels = 20,
                               int order = 12) {
  if (!(b > a)) return 0.0;
  const double len = b - a;
  double acc = 0.0;
  double hi = b;
  for (int k = 0; k < panels - 1; ++k) {
    const double lo = a + len * std::ldexp(1.0, -(k + 1));
    if (!(lo < hi)) break;
    acc += integrate_gl(f, lo, hi, order);
    hi = lo;
  }
  acc += integrate_gl(f, a, hi, order);
  return acc;
}

// Refinement toward both endpoints (split at the midpoint).
template <class F>
double integrate_refined_both(F&& f, double a, double b, int panels = 16,
                              int order = 12) {
  if (!(b > a)) return 0.0;
  const double mid = 0.5 * (a + b);
  const double upper =
      integrate_refined_lower([&](double x) { return f(a + b - x); }, a, mid,
                              panels, order);
  return integrate_refined_lower(f, a, mid, panels, order) + upper;
}

}  // namespace fsde
