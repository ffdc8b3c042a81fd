#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsde/fbm.hpp"
#include "fsde/grid.hpp"
#include "fsde/rng.hpp"

namespace fsde {

struct GrowthCertificate {
  double L2 = 1.0;
  double gamma = 1.0;
};

/**
 * Drift model dX = -f(X) theta dt + sigma dB with one-sided dissipative
 * drift: the symmetric part of sum_j theta_j grad f_j(x) stays above L1 > 0.
 * f maps R^m to R^{m x l}; sigma is m x d. hess_f is optional (analytic
 * Hessian of component (row i) of f_j) and used only for certification.
 */
struct DriftModel {
  std::string id;
  int m = 1, l = 1, d = 1;
  Eigen::VectorXd theta;   // length l, the true parameter
  Eigen::MatrixXd sigma;   // m x d
  double L1 = 1.0;
  GrowthCertificate growth;

  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> f;        // m x l
  std::function<Eigen::MatrixXd(int, const Eigen::VectorXd&)> grad_f;  // j -> m x m
  std::function<Eigen::MatrixXd(int, int, const Eigen::VectorXd&)> hess_f;  // (j,i) -> m x m

  // sum_j theta_j grad f_j(x)
  Eigen::MatrixXd drift_jacobian(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
    for (int j = 0; j < l; ++j) a += theta(j) * grad_f(j, x);
    return a;
  }

  Eigen::VectorXd drift(const Eigen::VectorXd& x) const {
    return -(f(x) * theta);
  }
};

struct SolutionPath {
  TimeGrid grid;
  std::string model_id;
  Eigen::VectorXd x0;
  Eigen::MatrixXd values;  // m x (n_steps + 1)

  Eigen::VectorXd at(int i) const { return values.col(i); }
};

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& msg, int step)
      : std::runtime_error(msg), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct IntegrateOptions {
  // Substep the drift over the first `warmup_steps` steps; useful when x0
  // sits far outside the dissipativity basin and the first drift increments
  // would overshoot at the nominal dt.
  int warmup_steps = 0;
  int warmup_substeps = 1;
};

/// Explicit Euler. Additive noise enters exactly, so no Milstein correction
/// exists to be taken.
inline SolutionPath integrate_euler(const DriftModel& model,
                                    const FbmPath& noise,
                                    const Eigen::VectorXd& x0,
                                    const IntegrateOptions& opts = {}) {
  if (noise.d != model.d)
    throw std::invalid_argument("integrate_euler: noise dimension mismatch");
  if (x0.size() != model.m)
    throw std::invalid_argument("integrate_euler: x0 dimension mismatch");
  const TimeGrid& grid = noise.grid;
  SolutionPath path;
  path.grid = grid;
  path.model_id = model.id;
  path.x0 = x0;
  path.values.resize(model.m, grid.n_steps + 1);
  path.values.col(0) = x0;
  Eigen::VectorXd x = x0;
  for (int i = 0; i < grid.n_steps; ++i) {
    const Eigen::VectorXd noise_inc =
        model.sigma * (noise.values.col(i + 1) - noise.values.col(i));
    if (i < opts.warmup_steps && opts.warmup_substeps > 1) {
      const int q = opts.warmup_substeps;
      const double sub_dt = grid.dt / q;
      for (int k = 0; k < q; ++k)
        x += model.drift(x) * sub_dt + noise_inc / q;
    } else {
      x += model.drift(x) * grid.dt + noise_inc;
    }
    if (!x.allFinite()) {
      std::ostringstream os;
      os << "integrate_euler: non-finite state at step " << i + 1 << " (t="
         << grid.node(i + 1)
         << "); check the dissipativity certificate or reduce dt";
      throw IntegrationError(os.str(), i + 1);
    }
    path.values.col(i + 1) = x;
  }
  return path;
}

/**
 * Random-probe certification of the standing hypotheses: Jacobian lower
 * bound, one-sided dissipativity on pairs, and the polynomial growth
 * envelope. Probes are Gaussian with the given radius plus any extra states
 * supplied (typically the visited path). Reports; never throws.
 */
struct HypothesisCertificate {
  double min_jacobian_eigenvalue = 0.0;
  Eigen::VectorXd jacobian_witness;
  double worst_dissipativity_ratio = 0.0;
  Eigen::VectorXd dissipativity_witness_x, dissipativity_witness_y;
  double max_growth_ratio = 0.0;  // (|f|+|grad f|) / (L2 (1+|x|^gamma))
  double max_jacobian_norm = 0.0;
  bool jacobian_ok = false, dissipativity_ok = false, growth_ok = false;

  bool ok() const { return jacobian_ok && dissipativity_ok && growth_ok; }
  // dt above this value violates the reported stability heuristic
  double stable_dt_bound() const { return 0.5 / max_jacobian_norm; }
};

inline HypothesisCertificate certify_hypotheses(
    const DriftModel& model, int probe_count, double probe_radius,
    std::uint64_t seed, const std::vector<Eigen::VectorXd>& extra_states = {}) {
  HypothesisCertificate cert;
  GaussianStream g(seed);
  std::vector<Eigen::VectorXd> probes;
  probes.reserve(probe_count + extra_states.size());
  for (int k = 0; k < probe_count; ++k) {
    Eigen::VectorXd x(model.m);
    for (int i = 0; i < model.m; ++i) x(i) = probe_radius * g.normal();
    probes.push_back(std::move(x));
  }
  for (const auto& x : extra_states) probes.push_back(x);
  if (probes.empty()) return cert;

  cert.min_jacobian_eigenvalue = std::numeric_limits<double>::infinity();
  cert.max_growth_ratio = 0.0;
  for (const auto& x : probes) {
    const Eigen::MatrixXd a = model.drift_jacobian(x);
    const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    const double lo = es.eigenvalues().minCoeff();
    if (lo < cert.min_jacobian_eigenvalue) {
      cert.min_jacobian_eigenvalue = lo;
      cert.jacobian_witness = x;
    }
    cert.max_jacobian_norm = std::max(cert.max_jacobian_norm, a.norm());

    double grad_norm_sq = 0.0;
    for (int j = 0; j < model.l; ++j)
      grad_norm_sq += model.grad_f(j, x).squaredNorm();
    const double size = model.f(x).norm() + std::sqrt(grad_norm_sq);
    const double envelope =
        model.growth.L2 *
        (1.0 + std::pow(x.norm(), model.growth.gamma));
    cert.max_growth_ratio = std::max(cert.max_growth_ratio, size / envelope);
  }

  cert.worst_dissipativity_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < probes.size(); ++k) {
    const Eigen::VectorXd& x = probes[k];
    const Eigen::VectorXd& y = probes[k + 1];
    const double dist2 = (x - y).squaredNorm();
    if (dist2 < 1e-20) continue;
    const double ratio =
        (x - y).dot((model.f(x) - model.f(y)) * model.theta) / dist2;
    if (ratio < cert.worst_dissipativity_ratio) {
      cert.worst_dissipativity_ratio = ratio;
      cert.dissipativity_witness_x = x;
      cert.dissipativity_witness_y = y;
    }
  }

  cert.jacobian_ok = cert.min_jacobian_eigenvalue >= model.L1 - 1e-8;
  cert.dissipativity_ok = cert.worst_dissipativity_ratio >= model.L1 - 1e-8;
  cert.growth_ok = cert.max_growth_ratio <= 1.0 + 1e-8;
  return cert;
}

// ---------------------------------------------------------------------------
// Built-in model registry
// ---------------------------------------------------------------------------

/// f(x) = x (one column); the fractional Ornstein-Uhlenbeck drift for m = 1.
inline DriftModel make_linear_model(int m, double theta,
                                    const Eigen::MatrixXd& sigma) {
  if (theta <= 0.0)
    throw std::invalid_argument("linear model: theta must be positive");
  DriftModel model;
  model.id = "linear";
  model.m = m;
  model.l = 1;
  model.d = static_cast<int>(sigma.cols());
  model.theta = Eigen::VectorXd::Constant(1, theta);
  model.sigma = sigma;
  model.L1 = theta;
  model.growth = {2.0, 1.0};
  model.f = [](const Eigen::VectorXd& x) { return Eigen::MatrixXd(x); };
  model.grad_f = [m](int, const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Identity(m, m);
  };
  model.hess_f = [m](int, int, const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Zero(m, m);
  };
  return model;
}

/// m = 1, l = 2, f = (x, x^3); requires theta1 > 0, theta2 >= 0.
inline DriftModel make_cubic_model(double theta1, double theta2,
                                   double sigma) {
  if (theta1 <= 0.0 || theta2 < 0.0)
    throw std::invalid_argument("cubic model: need theta1 > 0, theta2 >= 0");
  DriftModel model;
  model.id = "cubic";
  model.m = 1;
  model.l = 2;
  model.d = 1;
  model.theta = (Eigen::VectorXd(2) << theta1, theta2).finished();
  model.sigma = Eigen::MatrixXd::Constant(1, 1, sigma);
  model.L1 = theta1;  // theta1 + 3 theta2 x^2 >= theta1
  model.growth = {4.0, 3.0};
  model.f = [](const Eigen::VectorXd& x) {
    Eigen::MatrixXd out(1, 2);
    out(0, 0) = x(0);
    out(0, 1) = x(0) * x(0) * x(0);
    return out;
  };
  model.grad_f = [](int j, const Eigen::VectorXd& x) {
    Eigen::MatrixXd out(1, 1);
    out(0, 0) = (j == 0) ? 1.0 : 3.0 * x(0) * x(0);
    return out;
  };
  model.hess_f = [](int j, int, const Eigen::VectorXd& x) {
    Eigen::MatrixXd out(1, 1);
    out(0, 0) = (j == 0) ? 0.0 : 6.0 * x(0);
    return out;
  };
  return model;
}

/// m = 2, l = 1, f(x) = x + eps |x|^2 x. The perturbation Jacobian
/// eps(|x|^2 I + 2 x x^T) is PSD, so the drift stays dissipative with
/// L1 = theta for every eps >= 0.
inline DriftModel make_coupled2d_model(double theta, const Eigen::MatrixXd& sigma,
                                       double eps = 0.1) {
  if (theta <= 0.0 || eps < 0.0)
    throw std::invalid_argument("coupled2d model: need theta > 0, eps >= 0");
  DriftModel model;
  model.id = "coupled2d";
  model.m = 2;
  model.l = 1;
  model.d = static_cast<int>(sigma.cols());
  model.theta = Eigen::VectorXd::Constant(1, theta);
  model.sigma = sigma;
  model.L1 = theta;
  model.growth = {8.0 * (1.0 + eps), 3.0};
  model.f = [eps](const Eigen::VectorXd& x) {
    return Eigen::MatrixXd(x + eps * x.squaredNorm() * x);
  };
  model.grad_f = [eps](int, const Eigen::VectorXd& x) {
    return Eigen::MatrixXd(
        (1.0 + eps * x.squaredNorm()) * Eigen::MatrixXd::Identity(2, 2) +
        2.0 * eps * x * x.transpose());
  };
  model.hess_f = [eps](int, int i, const Eigen::VectorXd& x) {
    // Hessian of component i of f_1
    Eigen::MatrixXd out = 2.0 * eps * x(i) * Eigen::MatrixXd::Identity(2, 2);
    out.col(i) += 2.0 * eps * x;
    out.row(i) += 2.0 * eps * x.transpose();
    return out;
  };
  return model;
}

/// Registry lookup used by the CLI. theta and the flattened sigma come from
/// the caller; dimensions are fixed per id.
inline DriftModel make_model(const std::string& id,
                             const std::vector<double>& theta,
                             const std::vector<double>& sigma) {
  if (id == "linear" || id == "fou") {
    if (theta.size() != 1 || sigma.size() != 1)
      throw std::invalid_argument("linear model: theta and sigma are scalars");
    DriftModel m =
        make_linear_model(1, theta[0], Eigen::MatrixXd::Constant(1, 1, sigma[0]));
    m.id = id;
    return m;
  }
  if (id == "cubic") {
    if (theta.size() != 2 || sigma.size() != 1)
      throw std::invalid_argument("cubic model: need theta1,theta2 and sigma");
    return make_cubic_model(theta[0], theta[1], sigma[0]);
  }
  if (id == "coupled2d") {
    if (theta.size() != 1)
      throw std::invalid_argument("coupled2d model: theta is a scalar");
    Eigen::MatrixXd s;
    if (sigma.size() == 2) {
      s = Eigen::MatrixXd::Zero(2, 1);
      s(0, 0) = sigma[0];
      s(1, 0) = sigma[1];
    } else if (sigma.size() == 4) {
      s = Eigen::MatrixXd(2, 2);
      s << sigma[0], sigma[1], sigma[2], sigma[3];
    } else {
      throw std::invalid_argument(
          "coupled2d model: sigma must have 2 (m x 1) or 4 (m x 2) entries");
    }
    return make_coupled2d_model(theta[0], s);
  }
  throw std::invalid_argument("unknown model id: " + id);
}

// ---------------------------------------------------------------------------
// Observables g(X) used by divergence integrals and ergodic averages
// ---------------------------------------------------------------------------

/// g : R^m -> R^d with analytic Jacobian; growth certificate per C^1_p / C^2_p.
struct VectorObservable {
  std::string name;
  int m = 1, d = 1;
  bool bounded = false;
  GrowthCertificate growth;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> value;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;  // d x m
};

inline VectorObservable make_observable(const std::string& name, int m, int d) {
  VectorObservable g;
  g.name = name;
  g.m = m;
  g.d = d;
  if (name == "one") {
    g.bounded = true;
    g.growth = {1.0, 0.0};
    g.value = [d](const Eigen::VectorXd&) { return Eigen::VectorXd::Ones(d); };
    g.jacobian = [m, d](const Eigen::VectorXd&) {
      return Eigen::MatrixXd::Zero(d, m);
    };
    return g;
  }
  if (name == "identity") {
    if (d != m) throw std::invalid_argument("identity observable needs d == m");
    g.growth = {2.0, 1.0};
    g.value = [](const Eigen::VectorXd& x) { return x; };
    g.jacobian = [m](const Eigen::VectorXd&) {
      return Eigen::MatrixXd::Identity(m, m);
    };
    return g;
  }
  if (name == "square") {
    // componentwise square, padded cyclically when d != m
    g.growth = {4.0, 2.0};
    g.value = [m, d](const Eigen::VectorXd& x) {
      Eigen::VectorXd out(d);
      for (int i = 0; i < d; ++i) out(i) = x(i % m) * x(i % m);
      return out;
    };
    g.jacobian = [m, d](const Eigen::VectorXd& x) {
      Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, m);
      for (int i = 0; i < d; ++i) out(i, i % m) += 2.0 * x(i % m);
      return out;
    };
    return g;
  }
  if (name == "bounded") {
    // smooth, bounded, with bounded derivatives: 1 / (1 + |x|^2)
    g.bounded = true;
    g.growth = {2.0, 0.0};
    g.value = [m, d](const Eigen::VectorXd& x) {
      const double v = 1.0 / (1.0 + x.squaredNorm());
      return Eigen::VectorXd::Constant(d, v);
    };
    g.jacobian = [m, d](const Eigen::VectorXd& x) {
      const double denom = 1.0 + x.squaredNorm();
      const Eigen::RowVectorXd row = -2.0 * x.transpose() / (denom * denom);
      Eigen::MatrixXd out(d, m);
      for (int i = 0; i < d; ++i) out.row(i) = row;
      return out;
    };
    return g;
  }
  throw std::invalid_argument("unknown observable: " + name);
}

/// g_j(x) = sigma^T f_j(x), the integrand of the estimator's j-th divergence
/// integral.
inline VectorObservable estimator_observable(const DriftModel& model, int j) {
  VectorObservable g;
  g.name = "drift_column_" + std::to_string(j);
  g.m = model.m;
  g.d = model.d;
  g.growth = model.growth;
  const Eigen::MatrixXd sigma_t = model.sigma.transpose();
  const auto f = model.f;
  const auto grad = model.grad_f;
  g.value = [sigma_t, f, j](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(sigma_t * f(x).col(j));
  };
  g.jacobian = [sigma_t, grad, j](const Eigen::VectorXd& x) {
    return Eigen::MatrixXd(sigma_t * grad(j, x));
  };
  return g;
}

/// Scalar observables for ergodic averages (C^1_p class).
struct ScalarObservable {
  std::string name;
  GrowthCertificate growth;
  std::function<double(const Eigen::VectorXd&)> value;
};

inline ScalarObservable make_scalar_observable(const std::string& name) {
  if (name == "one")
    return {"one", {1.0, 0.0}, [](const Eigen::VectorXd&) { return 1.0; }};
  if (name == "coordinate")
    return {"coordinate", {1.0, 1.0},
            [](const Eigen::VectorXd& x) { return x(0); }};
  if (name == "square")
    return {"square", {2.0, 2.0},
            [](const Eigen::VectorXd& x) { return x.squaredNorm(); }};
  throw std::invalid_argument("unknown scalar observable: " + name);
}

}  // namespace fsde
