#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fsde/hilbert.hpp"
#include "fsde/quadrature.hpp"

namespace fsde {

inline void require_rough(const HurstParameter& h, const char* what) {
  if (h.regime() != HurstRegime::rough)
    throw std::domain_error(std::string(what) +
                            ": defined only in the rough regime (H < 1/2)");
}

/**
 * Normalization constant of the rough-regime Volterra kernel,
 * d_H = sqrt( 2H / ((1-2H) Beta(1-2H, H+1/2)) ). The reproduction identity
 * int_0^{s^t} K(t,u)K(s,u) du = R(s,t) validates it numerically (see tests);
 * it is the defining property of the normalization.
 */
inline double volterra_normalization(double H) {
  return std::sqrt(2.0 * H /
                   ((1.0 - 2.0 * H) * std::beta(1.0 - 2.0 * H, H + 0.5)));
}

// I(s,t) = int_s^t v^{H-3/2} (v-s)^{H-1/2} dv. The substitution v = s + x^2
// removes the endpoint weight; panels refine toward x = 0 where the
// integrand crosses over from the x^{2H} to the x^{4H-3} power law.
inline double volterra_inner_integral(double s, double t, double H) {
  const double L = std::sqrt(t - s);
  auto f = [&](double x) {
    return 2.0 * std::pow(x, 2.0 * H) * std::pow(s + x * x, H - 1.5);
  };
  return integrate_refined_lower(f, 0.0, L, 26, 12);
}

/// Volterra kernel K_H(t,s) of fBm for H < 1/2, 0 < s < t.
inline double volterra_kernel(double t, double s, const HurstParameter& h) {
  require_rough(h, "volterra_kernel");
  if (!(s > 0.0) || !(s < t))
    throw std::domain_error("volterra_kernel: requires 0 < s < t");
  const double H = h.value();
  const double dH = volterra_normalization(H);
  const double lead = std::pow(t / s, H - 0.5) * std::pow(t - s, H - 0.5);
  const double tail =
      (H - 0.5) * std::pow(s, 0.5 - H) * volterra_inner_integral(s, t, H);
  return dH * (lead - tail);
}

/// Closed form: dK_H/dt (t,s) = d_H (H-1/2) (t/s)^{H-1/2} (t-s)^{H-3/2}.
inline double volterra_kernel_dt(double t, double s, const HurstParameter& h) {
  require_rough(h, "volterra_kernel_dt");
  if (!(s > 0.0) || !(s < t))
    throw std::domain_error("volterra_kernel_dt: requires 0 < s < t");
  const double H = h.value();
  return volterra_normalization(H) * (H - 0.5) *
         std::pow(t / s, H - 0.5) * std::pow(t - s, H - 1.5);
}

namespace detail {

/// Evaluates K_H(t, s) for one fixed s at an ascending sequence of t's,
/// accumulating the inner integral incrementally.
class VolterraRow {
 public:
  VolterraRow(double s, const HurstParameter& h)
      : s_(s), H_(h.value()), dH_(volterra_normalization(H_)), t_prev_(s) {
    require_rough(h, "VolterraRow");
    if (!(s > 0.0)) throw std::domain_error("VolterraRow: requires s > 0");
  }

  double advance(double t) {
    if (!(t > t_prev_)) throw std::logic_error("VolterraRow: t not ascending");
    if (t_prev_ == s_) {
      acc_ = volterra_inner_integral(s_, t, H_);
    } else {
      auto f = [&](double v) {
        return std::pow(v, H_ - 1.5) * std::pow(v - s_, H_ - 0.5);
      };
      acc_ += integrate_refined_lower(f, t_prev_, t, 8, 10);
    }
    t_prev_ = t;
    const double lead =
        std::pow(t / s_, H_ - 0.5) * std::pow(t - s_, H_ - 0.5);
    return dH_ * (lead - (H_ - 0.5) * std::pow(s_, 0.5 - H_) * acc_);
  }

 private:
  double s_, H_, dH_;
  double acc_ = 0.0;
  double t_prev_;
};

}  // namespace detail

/**
 * The induced linear operator applied to a step function, evaluated at s.
 * For step functions the defining expression
 *   K_H(phi)(s) = K_H(T,s) phi(s) + int_s^T (phi(t)-phi(s)) dK_H/dt (t,s) dt
 * telescopes exactly (the dK/dt cell integrals are kernel differences), so
 * the value is independent of the enclosing T by construction:
 *   K_H(phi)(s) = sum_{cells j >= cell(s)} phi_j (K(t_{j+1},s) - K(t_j,s)),
 * with K(t,s) treated as 0 for t <= s.
 */
inline Eigen::VectorXd volterra_transform_at(const StepFunction& phi,
                                             const HurstParameter& h,
                                             double s) {
  require_rough(h, "volterra_transform_at");
  const TimeGrid& g = phi.grid;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(phi.d);
  const int send = phi.support_end();
  if (!(s > 0.0) || s >= g.node(send)) return out;
  const int k = std::min(static_cast<int>(s / g.dt), g.n_steps - 1);
  detail::VolterraRow row(s, h);
  double prev = 0.0;  // K(t_k, s) with t_k <= s counts as zero
  for (int j = k; j < send; ++j) {
    const double cur = row.advance(g.node(j + 1));
    out += phi.values.col(j) * (cur - prev);
    prev = cur;
  }
  return out;
}

/// Literal evaluation of the defining display with explicit quadrature of
/// dK/dt; used as an independent cross-check of the telescoped form.
inline Eigen::VectorXd volterra_transform_display(const StepFunction& phi,
                                                  const HurstParameter& h,
                                                  double T, double s) {
  require_rough(h, "volterra_transform_display");
  const TimeGrid& g = phi.grid;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(phi.d);
  if (!(s > 0.0) || s >= T) return out;
  const int k = std::min(static_cast<int>(s / g.dt), g.n_steps - 1);
  Eigen::VectorXd here = Eigen::VectorXd::Zero(phi.d);
  if (s < g.horizon()) here = phi.values.col(k);
  out = here * volterra_kernel(T, s, h);
  auto add_piece = [&](double a, double b, const Eigen::VectorXd& val) {
    if (!(b > a)) return;
    const Eigen::VectorXd diff = val - here;
    if (diff.cwiseAbs().maxCoeff() == 0.0) return;
    const double w = integrate_refined_lower(
        [&](double t) { return volterra_kernel_dt(t, s, h); }, a, b, 16, 10);
    out += diff * w;
  };
  for (int j = k; j < g.n_steps; ++j) {
    const double a = std::max(s, g.node(j));
    const double b = std::min(T, g.node(j + 1));
    add_piece(a, b, phi.values.col(j));
  }
  if (T > g.horizon())
    add_piece(std::max(s, g.horizon()), T, Eigen::VectorXd::Zero(phi.d));
  return out;
}

/**
 * L^2 inner product of transformed step functions,
 * int_0^inf K_H(phi)(s) . K_H(psi)(s) ds.
 * Each cell is split at its midpoint; the right half is integrated in
 * y = sqrt(t_{k+1}-s) because the transform carries a (t_{k+1}-s)^{H-1/2}
 * edge singularity, and the first cell gets the matching s = x^2 treatment
 * at the origin. By the isometry this equals <phi,psi> on the step core.
 */
inline double volterra_l2_inner(const StepFunction& phi,
                                const StepFunction& psi,
                                const HurstParameter& h) {
  require_rough(h, "volterra_l2_inner");
  phi.check_compatible(psi);
  const TimeGrid& g = phi.grid;
  const int send = std::max(phi.support_end(), psi.support_end());

  auto product_at = [&](double s, int k) {
    detail::VolterraRow row(s, h);
    Eigen::VectorXd fp = Eigen::VectorXd::Zero(phi.d);
    Eigen::VectorXd fq = Eigen::VectorXd::Zero(phi.d);
    double prev = 0.0;
    for (int j = k; j < send; ++j) {
      const double cur = row.advance(g.node(j + 1));
      fp += phi.values.col(j) * (cur - prev);
      fq += psi.values.col(j) * (cur - prev);
      prev = cur;
    }
    return fp.dot(fq);
  };

  double acc = 0.0;
  for (int k = 0; k < send; ++k) {
    const double L = g.node(k), R = g.node(k + 1);
    const double mid = 0.5 * (L + R);
    if (k == 0) {
      // s = x^2 handles the s^{2H-1} origin singularity
      acc += integrate_refined_lower(
          [&](double x) { return 2.0 * x * product_at(x * x, k); }, 0.0,
          std::sqrt(mid), 10, 12);
    } else {
      acc += integrate_gl([&](double s) { return product_at(s, k); }, L, mid,
                          16);
    }
    acc += integrate_refined_lower(
        [&](double y) { return 2.0 * y * product_at(R - y * y, k); }, 0.0,
        std::sqrt(R - mid), 10, 12);
  }
  return acc;
}

inline double volterra_l2_norm_sq(const StepFunction& phi,
                                  const HurstParameter& h) {
  return volterra_l2_inner(phi, phi, h);
}

/// Quadrature of int_0^{min(s,t)} K(t,u) K(s,u) du; reproduces R(s,t).
inline double kernel_covariance_quadrature(double s, double t,
                                           const HurstParameter& h) {
  require_rough(h, "kernel_covariance_quadrature");
  const double m = std::min(s, t);
  if (!(m > 0.0)) return 0.0;
  return integrate_refined_both(
      [&](double u) {
        return volterra_kernel(t, u, h) * volterra_kernel(s, u, h);
      },
      0.0, m, 18, 12);
}

}  // namespace fsde
