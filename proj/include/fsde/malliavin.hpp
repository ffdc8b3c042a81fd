#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsde/hilbert.hpp"
#include "fsde/sde.hpp"

namespace fsde {

/// Evenly spread pivot node indices {p_0 = 0 < p_1 < ... }; the j-th pivot
/// cell is [t_{p_j}, t_{p_{j+1}}) with the last cell ending at t_n.
inline std::vector<int> make_pivots(int n_steps, int count) {
  if (count < 1) throw std::invalid_argument("make_pivots: count must be >= 1");
  count = std::min(count, n_steps);
  std::vector<int> pivots;
  pivots.reserve(count);
  for (int j = 0; j < count; ++j) {
    const int p = static_cast<int>((static_cast<long long>(j) * n_steps) / count);
    if (pivots.empty() || p > pivots.back()) pivots.push_back(p);
  }
  return pivots;
}

inline int pivot_cell_end(const std::vector<int>& pivots, int j, int n_steps) {
  return (j + 1 < static_cast<int>(pivots.size())) ? pivots[j + 1] : n_steps;
}

/**
 * Derivative of the solution with respect to a noise shock at the pivot
 * times: D holds the m x d matrices D_{s_j} X_{t_i} for t_i >= s_j, obtained
 * by propagating dZ = -(sum_j theta_j grad f_j(X_t)) Z dt from Z_{s_j} = sigma
 * on the same Euler grid as the path.
 */
struct MalliavinGrid {
  TimeGrid grid;
  std::string model_id;
  int m = 1, d = 1;
  std::vector<int> pivots;
  std::vector<std::vector<Eigen::MatrixXd>> D;  // D[j][i - pivots[j]]

  const Eigen::MatrixXd& at(int pivot_idx, int node) const {
    const int off = node - pivots[pivot_idx];
    if (off < 0)
      throw std::out_of_range("MalliavinGrid::at: node precedes the pivot");
    return D[pivot_idx][off];
  }
};

inline MalliavinGrid propagate_derivative(const DriftModel& model,
                                          const SolutionPath& path,
                                          int pivot_count) {
  MalliavinGrid mg;
  mg.grid = path.grid;
  mg.model_id = model.id;
  mg.m = model.m;
  mg.d = model.d;
  mg.pivots = make_pivots(path.grid.n_steps, pivot_count);
  const int n = path.grid.n_steps;
  const double dt = path.grid.dt;

  std::vector<Eigen::MatrixXd> jac(n);
  for (int i = 0; i < n; ++i) jac[i] = model.drift_jacobian(path.at(i));

  const double blowup = 10.0 * model.sigma.norm() + 1.0;
  mg.D.resize(mg.pivots.size());
  for (std::size_t j = 0; j < mg.pivots.size(); ++j) {
    const int p = mg.pivots[j];
    std::vector<Eigen::MatrixXd>& row = mg.D[j];
    row.reserve(n - p + 1);
    Eigen::MatrixXd z = model.sigma;
    row.push_back(z);
    for (int i = p; i < n; ++i) {
      z -= dt * (jac[i] * z);
      if (!(z.norm() <= blowup)) {
        std::ostringstream os;
        os << "propagate_derivative: derivative grew beyond the dissipative "
              "envelope at step "
           << i + 1 << " (pivot t=" << path.grid.node(p) << ")";
        throw IntegrationError(os.str(), i + 1);
      }
      row.push_back(z);
    }
  }
  return mg;
}

/// Max over stored entries of |D_s X_t| / (|sigma| e^{-L1 (t-s)}); values up
/// to exp(2 dt L1) are within the discrete slack of the decay bound.
struct DecayReport {
  double max_ratio = 0.0;
  double slack = 1.0;
  bool within_slack = true;
};

inline DecayReport decay_bound_report(const MalliavinGrid& mg,
                                      const DriftModel& model) {
  DecayReport rep;
  rep.slack = std::exp(2.0 * mg.grid.dt * model.L1);
  const double sig = model.sigma.norm();
  for (std::size_t j = 0; j < mg.pivots.size(); ++j) {
    const double s = mg.grid.node(mg.pivots[j]);
    for (std::size_t off = 0; off < mg.D[j].size(); ++off) {
      const double t = mg.grid.node(mg.pivots[j] + static_cast<int>(off));
      const double bound = sig * std::exp(-model.L1 * (t - s));
      rep.max_ratio = std::max(rep.max_ratio, mg.D[j][off].norm() / bound);
    }
  }
  rep.within_slack = rep.max_ratio <= rep.slack + 1e-12;
  return rep;
}

/**
 * A process u_t = g(X_t) together with the trace of its Malliavin derivative
 * on the pivot grid; by the chain rule Du(s,t) = grad g(X_t) . D_s X_t.
 * Deterministic integrands carry trace_du = 0. Full derivative matrices are
 * retained only on request (small grids / diagnostics).
 */
struct DerivedProcess {
  TimeGrid grid;
  int d = 1;
  Eigen::MatrixXd u;          // d x (n+1), value at each node
  std::vector<int> pivots;
  Eigen::MatrixXd trace_du;   // pivots x (n+1); zero where t < s
  bool deterministic = false;
  std::vector<std::vector<Eigen::MatrixXd>> full_du;  // optional [j][i - p_j]
};

inline DerivedProcess derived_process(const VectorObservable& g,
                                      const DriftModel& model,
                                      const SolutionPath& path,
                                      const MalliavinGrid& mg,
                                      bool keep_full = false) {
  if (g.m != model.m || g.d != model.d)
    throw std::invalid_argument("derived_process: observable dimensions");
  DerivedProcess proc;
  proc.grid = path.grid;
  proc.d = model.d;
  proc.pivots = mg.pivots;
  const int nodes = path.grid.n_steps + 1;
  proc.u.resize(model.d, nodes);
  for (int i = 0; i < nodes; ++i) proc.u.col(i) = g.value(path.at(i));
  proc.trace_du = Eigen::MatrixXd::Zero(mg.pivots.size(), nodes);
  if (keep_full) proc.full_du.resize(mg.pivots.size());
  for (std::size_t j = 0; j < mg.pivots.size(); ++j) {
    for (int i = mg.pivots[j]; i < nodes; ++i) {
      const Eigen::MatrixXd du = g.jacobian(path.at(i)) * mg.at(j, i);
      proc.trace_du(j, i) = du.trace();
      if (keep_full) proc.full_du[j].push_back(du);
    }
  }
  return proc;
}

/// Deterministic integrand (d x nodes values); Skorohod and Wiener integrals
/// coincide.
inline DerivedProcess deterministic_process(const TimeGrid& grid,
                                            const Eigen::MatrixXd& values) {
  DerivedProcess proc;
  proc.grid = grid;
  proc.d = static_cast<int>(values.rows());
  proc.u = values;
  proc.pivots = {0};
  proc.trace_du = Eigen::MatrixXd::Zero(1, grid.n_steps + 1);
  proc.deterministic = true;
  return proc;
}

/// u_t = B_t itself: D^k_s B^j_t = delta_{jk} 1_{[0,t]}(s), so the trace of
/// Du is d on every admissible (s,t) pair.
inline DerivedProcess noise_process(const FbmPath& noise, int pivot_count) {
  DerivedProcess proc;
  proc.grid = noise.grid;
  proc.d = noise.d;
  proc.u = noise.values;
  proc.pivots = make_pivots(noise.grid.n_steps, pivot_count);
  proc.trace_du = Eigen::MatrixXd::Constant(proc.pivots.size(),
                                            noise.grid.n_steps + 1,
                                            static_cast<double>(noise.d));
  return proc;
}

/// Lookup table of (k dt)^{2H}; turns every four-point indicator inner
/// product on the grid into index arithmetic.
class CovariancePowerTable {
 public:
  CovariancePowerTable(const TimeGrid& grid, const HurstParameter& h)
      : dt_(grid.dt) {
    const double hh = h.two_h();
    table_.resize(grid.n_steps + 1);
    for (int k = 0; k <= grid.n_steps; ++k)
      table_[k] = std::pow(k * dt_, hh);
  }

  double power(int k) const { return table_[k < 0 ? -k : k]; }

  // <1_{[t_a, t_b]}, 1_{[t_i, t_{i+1}]}> for node indices a <= b.
  double cell_inner(int a, int b, int i) const {
    return -0.5 * (power(b - i - 1) - power(b - i) - power(a - i - 1) +
                   power(a - i));
  }

 private:
  double dt_;
  std::vector<double> table_;
};

struct SkorohodResult {
  double value = 0.0;
  double correction = 0.0;
  double pathwise_sum = 0.0;
  int window_begin = 0, window_end = 0;
  int pivot_count = 0;
  bool coarse_pivots = false;  // pivot cells coarser than the node grid
};

/**
 * Discrete divergence integral of u over the window [t_a, t_b):
 *   sum_i u_{t_i} . dB_i  -  sum_i sum_j Tr[Du(s_j, t_i)] <c_j(i), cell_i>
 * where c_j(i) is the pivot cell [s_j, s_{j+1}) truncated at t_i. The
 * truncation keeps the correction consistent with Du vanishing on (t_i, inf)
 * for adapted integrands and makes the u = B correction exactly
 * sum_i [R(t_i, t_{i+1}) - R(t_i, t_i)]. Only covariance differences enter,
 * so every H in (0,1) is admissible.
 */
inline SkorohodResult skorohod_integral(const DerivedProcess& proc,
                                        const FbmPath& noise,
                                        const HurstParameter& h, int a = 0,
                                        int b = -1) {
  if (!(proc.grid == noise.grid))
    throw std::invalid_argument("skorohod_integral: grid mismatch");
  if (proc.d != noise.d)
    throw std::invalid_argument("skorohod_integral: dimension mismatch");
  const int n = proc.grid.n_steps;
  if (b < 0) b = n;
  if (a < 0 || b > n || a >= b)
    throw std::invalid_argument("skorohod_integral: bad window");

  SkorohodResult res;
  res.window_begin = a;
  res.window_end = b;
  res.pivot_count = static_cast<int>(proc.pivots.size());
  res.coarse_pivots = res.pivot_count < n;

  for (int i = a; i < b; ++i) {
    double dot = 0.0;
    for (int c = 0; c < proc.d; ++c)
      dot += proc.u(c, i) * (noise.values(c, i + 1) - noise.values(c, i));
    res.pathwise_sum += dot;
  }

  if (!proc.deterministic) {
    const CovariancePowerTable table(proc.grid, h);
    const int np = res.pivot_count;
    for (int i = a; i < b; ++i) {
      for (int j = 0; j < np && proc.pivots[j] < i; ++j) {
        const int cell_end =
            std::min(pivot_cell_end(proc.pivots, j, n), i);
        res.correction +=
            proc.trace_du(j, i) * table.cell_inner(proc.pivots[j], cell_end, i);
      }
    }
  }
  res.value = res.pathwise_sum - res.correction;
  return res;
}

/// How the derivative is frozen in s between pivots when accumulating trace
/// corrections. left_constant is the plain pivot-value rule; trapezoid
/// interpolates linearly between consecutive pivot values and uses the exact
/// boundary value grad g(X_t) sigma at the cell truncated by t. The latter
/// matters in the rough regime, where the s-measure of the correction
/// concentrates near s = t and the constant rule stalls the T-decay of the
/// divergence (see the estimator).
enum class SInterpolation { left_constant, trapezoid };

/**
 * Streaming trace corrections for integrands u_g = g(X): entry (g, i) is
 * sum over pivot cells of Tr[grad g(X_{t_i}) D_s X_{t_i}] <c_j(i), cell_i>
 * with D frozen per the interpolation rule. All pivot rows are propagated in
 * lockstep, so the cost is O(pivots * n) time and O(pivots) state; the
 * scalar (m = d = 1) loop avoids matrix temporaries since the long campaigns
 * run there.
 */
inline Eigen::MatrixXd divergence_correction_cells(
    const DriftModel& model, const SolutionPath& path,
    const std::vector<VectorObservable>& obs, const HurstParameter& h,
    const std::vector<int>& pivots,
    SInterpolation rule = SInterpolation::left_constant) {
  const int n = path.grid.n_steps;
  const double dt = path.grid.dt;
  const int nobs = static_cast<int>(obs.size());
  const int np = static_cast<int>(pivots.size());
  Eigen::MatrixXd cells = Eigen::MatrixXd::Zero(nobs, n);
  const CovariancePowerTable table(path.grid, h);
  const bool trap = rule == SInterpolation::trapezoid;

  if (model.m == 1 && model.d == 1) {
    std::vector<double> jac(n);
    for (int i = 0; i < n; ++i)
      jac[i] = model.drift_jacobian(path.at(i))(0, 0);
    Eigen::MatrixXd gp(nobs, n);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd x = path.at(i);
      for (int g = 0; g < nobs; ++g) gp(g, i) = obs[g].jacobian(x)(0, 0);
    }
    const double sigma = model.sigma(0, 0);
    std::vector<double> z(np, 0.0);
    int active = 0;
    for (int i = 0; i < n; ++i) {
      while (active < np && pivots[active] == i) z[active++] = sigma;
      for (int j = 0; j < np && pivots[j] < i; ++j) {
        const int pe = pivot_cell_end(pivots, j, n);
        const double w = table.cell_inner(pivots[j], std::min(pe, i), i);
        double zeff = z[j];
        if (trap) zeff = 0.5 * (z[j] + (pe <= i ? z[j + 1] : sigma));
        for (int g = 0; g < nobs; ++g) cells(g, i) += gp(g, i) * zeff * w;
      }
      const double step = 1.0 - jac[i] * dt;
      for (int j = 0; j < active; ++j) z[j] *= step;
    }
    return cells;
  }

  std::vector<Eigen::MatrixXd> jac(n);
  for (int i = 0; i < n; ++i) jac[i] = model.drift_jacobian(path.at(i));
  std::vector<std::vector<Eigen::MatrixXd>> gj(nobs);
  for (int g = 0; g < nobs; ++g) {
    gj[g].reserve(n);
    for (int i = 0; i < n; ++i) gj[g].push_back(obs[g].jacobian(path.at(i)));
  }
  std::vector<Eigen::MatrixXd> z(np);
  int active = 0;
  for (int i = 0; i < n; ++i) {
    while (active < np && pivots[active] == i) z[active++] = model.sigma;
    for (int j = 0; j < np && pivots[j] < i; ++j) {
      const int pe = pivot_cell_end(pivots, j, n);
      const double w = table.cell_inner(pivots[j], std::min(pe, i), i);
      Eigen::MatrixXd zeff = z[j];
      if (trap) zeff = 0.5 * (z[j] + (pe <= i ? z[j + 1] : model.sigma));
      for (int g = 0; g < nobs; ++g)
        cells(g, i) += (gj[g][i] * zeff).trace() * w;
    }
    for (int j = 0; j < active; ++j) z[j] -= dt * (jac[i] * z[j]);
  }
  return cells;
}

/// Forward noise sums per cell: entry (g, i) = g(X_{t_i}) . dB_i.
inline Eigen::MatrixXd forward_noise_cells(
    const DriftModel& model, const SolutionPath& path, const FbmPath& noise,
    const std::vector<VectorObservable>& obs) {
  const int n = path.grid.n_steps;
  const int nobs = static_cast<int>(obs.size());
  Eigen::MatrixXd cells(nobs, n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd db =
        noise.values.col(i + 1) - noise.values.col(i);
    const Eigen::VectorXd x = path.at(i);
    for (int g = 0; g < nobs; ++g) cells(g, i) = obs[g].value(x).dot(db);
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Duality diagnostics
// ---------------------------------------------------------------------------

/// Smooth cylindrical functional with an analytic derivative (a step
/// function on the noise grid).
struct CylindricalFunctional {
  std::string name;
  std::function<double(const FbmPath&)> value;
  std::function<StepFunction(const FbmPath&)> derivative;
};

inline CylindricalFunctional functional_one() {
  return {"one", [](const FbmPath&) { return 1.0; },
          [](const FbmPath& path) {
            return StepFunction::zero(path.grid, path.d);
          }};
}

inline CylindricalFunctional functional_endpoint(int comp = 0) {
  return {"endpoint",
          [comp](const FbmPath& path) {
            return path.values(comp, path.grid.n_steps);
          },
          [comp](const FbmPath& path) {
            return StepFunction::indicator(path.grid, 0, path.grid.n_steps,
                                           path.d, comp);
          }};
}

inline CylindricalFunctional functional_endpoint_square(int comp = 0) {
  return {"endpoint_square",
          [comp](const FbmPath& path) {
            const double v = path.values(comp, path.grid.n_steps);
            return v * v;
          },
          [comp](const FbmPath& path) {
            StepFunction df = StepFunction::indicator(
                path.grid, 0, path.grid.n_steps, path.d, comp);
            df.values *= 2.0 * path.values(comp, path.grid.n_steps);
            return df;
          }};
}

inline CylindricalFunctional functional_sin_mid(int comp = 0) {
  return {"sin_mid",
          [comp](const FbmPath& path) {
            return std::sin(path.values(comp, path.grid.n_steps / 2));
          },
          [comp](const FbmPath& path) {
            const int k = path.grid.n_steps / 2;
            StepFunction df =
                StepFunction::indicator(path.grid, 0, k, path.d, comp);
            df.values *= std::cos(path.values(comp, k));
            return df;
          }};
}

inline StepFunction to_step_function(const DerivedProcess& proc) {
  StepFunction phi = StepFunction::zero(proc.grid, proc.d);
  phi.values = proc.u.leftCols(proc.grid.n_steps);
  return phi;
}

struct DualityReport {
  std::string functional, process;
  int paths = 0;
  double lhs_mean = 0.0, lhs_se = 0.0;  // E[F delta(u)]
  double rhs_mean = 0.0, rhs_se = 0.0;  // E[<DF, u>]
  double gap = 0.0, pooled_se = 0.0, gap_in_se = 0.0;
};

/// Monte Carlo check of E[F delta(u)] = E[<DF, u>] for one (F, u) pair. The
/// u provider builds the integrand (and its derivative traces) per path.
inline DualityReport duality_check(
    const CylindricalFunctional& functional,
    const std::function<DerivedProcess(const FbmPath&)>& make_u,
    const std::string& process_name, const TimeGrid& grid,
    const HurstParameter& h, int d, int n_paths, std::uint64_t seed) {
  const FbmSampler sampler(grid, h);
  double s1l = 0, s2l = 0, s1r = 0, s2r = 0;
  for (int p = 0; p < n_paths; ++p) {
    const FbmPath path = sampler.sample(d, stream_seed(seed, p));
    const DerivedProcess proc = make_u(path);
    const double lhs =
        functional.value(path) * skorohod_integral(proc, path, h).value;
    const double rhs =
        step_inner_product(functional.derivative(path), to_step_function(proc), h);
    s1l += lhs;
    s2l += lhs * lhs;
    s1r += rhs;
    s2r += rhs * rhs;
  }
  DualityReport rep;
  rep.functional = functional.name;
  rep.process = process_name;
  rep.paths = n_paths;
  rep.lhs_mean = s1l / n_paths;
  rep.rhs_mean = s1r / n_paths;
  rep.lhs_se = std::sqrt(std::max(0.0, s2l / n_paths - rep.lhs_mean * rep.lhs_mean) /
                         n_paths);
  rep.rhs_se = std::sqrt(std::max(0.0, s2r / n_paths - rep.rhs_mean * rep.rhs_mean) /
                         n_paths);
  rep.gap = std::abs(rep.lhs_mean - rep.rhs_mean);
  rep.pooled_se = std::sqrt(rep.lhs_se * rep.lhs_se + rep.rhs_se * rep.rhs_se);
  rep.gap_in_se = rep.pooled_se > 0.0 ? rep.gap / rep.pooled_se
                                      : (rep.gap > 0.0 ? 1e300 : 0.0);
  return rep;
}

// ---------------------------------------------------------------------------
// Derivative increment diagnostics
// ---------------------------------------------------------------------------

/// Empirical ratios of L^p increment norms of D X against the exponential *
/// (1 ^ gap) envelopes, plus the measured Lipschitz-in-t exponent.
struct IncrementRatioReport {
  double max_ratio_shift_s = 0.0;   // |D_u X_t - D_v X_t| envelope ratio
  double max_ratio_shift_t = 0.0;   // |D_u X_t - D_u X_s| envelope ratio
  double max_ratio_double = 0.0;    // second difference envelope ratio
  double lipschitz_slope = 0.0;     // log-log slope of |D_u X_t - D_u X_s| in |t-s|
  int paths = 0;
};

inline IncrementRatioReport derivative_increments_check(
    const DriftModel& model, const HurstParameter& h, const TimeGrid& grid,
    int pivot_count, int n_paths, int p, std::uint64_t seed) {
  const FbmSampler sampler(grid, h, FbmMethod::circulant);
  const int n = grid.n_steps;
  const std::vector<int> pivots = make_pivots(n, pivot_count);
  const int np = static_cast<int>(pivots.size());

  // tuple selections: v < u from pivots, s < t from nodes
  const std::vector<int> uv = {np / 10, np / 5, (2 * np) / 5};
  const std::vector<int> st = {n / 2, (3 * n) / 5, (4 * n) / 5, n};
  const std::vector<int> lip_lags = {1, 2, 4, 8, 16, 32};

  std::vector<double> acc_shift_s, acc_shift_t, acc_double;
  std::vector<double> acc_lip(lip_lags.size(), 0.0);
  bool sized = false;
  std::vector<std::array<double, 4>> combos_s, combos_t, combos_d;

  for (int rep = 0; rep < n_paths; ++rep) {
    const FbmPath noise = sampler.sample(model.d, stream_seed(seed, rep));
    const SolutionPath path =
        integrate_euler(model, noise, Eigen::VectorXd::Zero(model.m));
    const MalliavinGrid mg = propagate_derivative(model, path, pivot_count);

    std::size_t idx_s = 0, idx_t = 0, idx_d = 0;
    for (std::size_t a = 0; a + 1 < uv.size(); ++a) {
      for (std::size_t b = a + 1; b < uv.size(); ++b) {
        const int jv = uv[a], ju = uv[b];
        for (int t_node : st) {
          if (t_node <= mg.pivots[ju]) continue;
          const double diff =
              (mg.at(ju, t_node) - mg.at(jv, t_node)).norm();
          if (!sized) {
            combos_s.push_back({double(jv), double(ju), double(t_node), 0.0});
            acc_shift_s.push_back(0.0);
          }
          acc_shift_s[idx_s++] += std::pow(diff, p);
        }
      }
    }
    for (int ju : uv) {
      for (std::size_t a = 0; a + 1 < st.size(); ++a) {
        const int s_node = st[a], t_node = st[a + 1];
        if (s_node <= mg.pivots[ju]) continue;
        const double diff = (mg.at(ju, t_node) - mg.at(ju, s_node)).norm();
        if (!sized) {
          combos_t.push_back({double(ju), double(s_node), double(t_node), 0.0});
          acc_shift_t.push_back(0.0);
        }
        acc_shift_t[idx_t++] += std::pow(diff, p);
      }
    }
    for (std::size_t a = 0; a + 1 < uv.size(); ++a) {
      const int jv = uv[a], ju = uv[a + 1];
      for (std::size_t c = 0; c + 1 < st.size(); ++c) {
        const int s_node = st[c], t_node = st[c + 1];
        if (s_node <= mg.pivots[ju]) continue;
        const double diff =
            (mg.at(ju, t_node) - mg.at(jv, t_node) -
             (mg.at(ju, s_node) - mg.at(jv, s_node)))
                .norm();
        if (!sized) {
          combos_d.push_back(
              {double(jv), double(ju), double(s_node), double(t_node)});
          acc_double.push_back(0.0);
        }
        acc_double[idx_d++] += std::pow(diff, p);
      }
    }
    const int anchor_pivot = np / 10;
    for (std::size_t k = 0; k < lip_lags.size(); ++k) {
      const int s_node = n / 2;
      const int t_node = s_node + lip_lags[k];
      const double diff =
          (mg.at(anchor_pivot, t_node) - mg.at(anchor_pivot, s_node)).norm();
      acc_lip[k] += std::pow(diff, p);
    }
    sized = true;
  }

  IncrementRatioReport rep;
  rep.paths = n_paths;
  auto lp = [&](double acc) { return std::pow(acc / n_paths, 1.0 / p); };
  for (std::size_t k = 0; k < acc_shift_s.size(); ++k) {
    const double u_t = grid.node(pivots[int(combos_s[k][1])]);
    const double v_t = grid.node(pivots[int(combos_s[k][0])]);
    const double t_t = grid.node(int(combos_s[k][2]));
    const double env =
        std::exp(-model.L1 * (t_t - u_t)) * std::min(1.0, u_t - v_t);
    rep.max_ratio_shift_s = std::max(rep.max_ratio_shift_s, lp(acc_shift_s[k]) / env);
  }
  for (std::size_t k = 0; k < acc_shift_t.size(); ++k) {
    const double u_t = grid.node(pivots[int(combos_t[k][0])]);
    const double s_t = grid.node(int(combos_t[k][1]));
    const double t_t = grid.node(int(combos_t[k][2]));
    const double env =
        std::exp(-model.L1 * (s_t - u_t)) * std::min(1.0, t_t - s_t);
    rep.max_ratio_shift_t = std::max(rep.max_ratio_shift_t, lp(acc_shift_t[k]) / env);
  }
  for (std::size_t k = 0; k < acc_double.size(); ++k) {
    const double v_t = grid.node(pivots[int(combos_d[k][0])]);
    const double u_t = grid.node(pivots[int(combos_d[k][1])]);
    const double s_t = grid.node(int(combos_d[k][2]));
    const double t_t = grid.node(int(combos_d[k][3]));
    const double env = std::exp(-model.L1 * (s_t - u_t)) *
                       std::min(1.0, u_t - v_t) * std::min(1.0, t_t - s_t);
    rep.max_ratio_double = std::max(rep.max_ratio_double, lp(acc_double[k]) / env);
  }
  {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < lip_lags.size(); ++k) {
      const double x = std::log(lip_lags[k] * grid.dt);
      const double y = std::log(lp(acc_lip[k]));
      sx += x; sy += y; sxx += x * x; sxy += x * y;
    }
    const double m = static_cast<double>(lip_lags.size());
    rep.lipschitz_slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  }
  return rep;
}

}  // namespace fsde
