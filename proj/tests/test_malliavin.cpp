#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fsde/estimator.hpp"
#include "fsde/malliavin.hpp"

using namespace fsde;

namespace {

// Independent discrete divergence: same cell convention, but every inner
// product evaluated through the continuous-time four-point covariance rather
// than the power table, and with plain double loops.
double oracle_skorohod(const DerivedProcess& proc, const FbmPath& noise,
                       const HurstParameter& h) {
  const TimeGrid& g = proc.grid;
  double fwd = 0.0, corr = 0.0;
  for (int i = 0; i < g.n_steps; ++i) {
    for (int c = 0; c < proc.d; ++c)
      fwd += proc.u(c, i) * (noise.values(c, i + 1) - noise.values(c, i));
    if (proc.deterministic) continue;
    for (std::size_t j = 0; j < proc.pivots.size(); ++j) {
      const double sj = g.node(proc.pivots[j]);
      const double ti = g.node(i);
      if (!(sj < ti)) continue;
      const double sj1 = g.node(
          pivot_cell_end(proc.pivots, static_cast<int>(j), g.n_steps));
      corr += proc.trace_du(j, i) *
              inner_product_indicator(sj, std::min(sj1, ti), ti,
                                      g.node(i + 1), h);
    }
  }
  return fwd - corr;
}

}  // namespace

TEST_CASE("propagated fOU derivative matches sigma e^{-theta (t-s)}") {
  const DriftModel model =
      make_linear_model(1, 1.0, Eigen::MatrixXd::Constant(1, 1, 2.0));
  double prev_err = -1.0;
  for (int n : {256, 512}) {
    const TimeGrid grid(n, 2.0 / n);
    const FbmPath noise = sample_fbm(grid, HurstParameter(0.7), 1, 3);
    const SolutionPath path =
        integrate_euler(model, noise, Eigen::VectorXd::Zero(1));
    const MalliavinGrid mg = propagate_derivative(model, path, 16);
    double sup = 0.0;
    for (std::size_t j = 0; j < mg.pivots.size(); ++j) {
      const double s = grid.node(mg.pivots[j]);
      for (int i = mg.pivots[j]; i <= n; i += 7) {
        const double want = 2.0 * std::exp(-(grid.node(i) - s));
        sup = std::max(sup, std::abs(mg.at(j, i)(0, 0) - want));
      }
    }
    if (prev_err > 0.0) CHECK(sup < 0.6 * prev_err);
    prev_err = sup;
  }
}

TEST_CASE("derivative at t = s equals sigma exactly") {
  const DriftModel model = make_cubic_model(1.0, 0.5, 1.5);
  const TimeGrid grid(64, 0.02);
  const FbmPath noise = sample_fbm(grid, HurstParameter(0.35), 1, 9);
  const SolutionPath path =
      integrate_euler(model, noise, Eigen::VectorXd::Zero(1));
  const MalliavinGrid mg = propagate_derivative(model, path, 8);
  for (std::size_t j = 0; j < mg.pivots.size(); ++j)
    REQUIRE(mg.at(j, mg.pivots[j])(0, 0) == 1.5);
}

TEST_CASE("decay bound holds pathwise with the discrete slack") {
  for (double hv : {0.35, 0.7}) {
    const HurstParameter h(hv);
    const TimeGrid grid(512, 0.02);
    const FbmSampler sampler(grid, h, FbmMethod::circulant);
    for (int rep = 0; rep < 5; ++rep) {
      const FbmPath noise = sampler.sample(1, stream_seed(71, rep));
      {
        const DriftModel fou =
            make_linear_model(1, 1.0, Eigen::MatrixXd::Ones(1, 1));
        const SolutionPath path =
            integrate_euler(fou, noise, Eigen::VectorXd::Zero(1));
        const DecayReport rep1 =
            decay_bound_report(propagate_derivative(fou, path, 32), fou);
        REQUIRE(rep1.within_slack);
        REQUIRE(rep1.max_ratio <= 1.0 + 1e-12);  // scalar Euler contracts
      }
      {
        const DriftModel cubic = make_cubic_model(1.0, 0.5, 1.0);
        const SolutionPath path =
            integrate_euler(cubic, noise, Eigen::VectorXd::Zero(1));
        const DecayReport rep2 =
            decay_bound_report(propagate_derivative(cubic, path, 32), cubic);
        REQUIRE(rep2.within_slack);
      }
    }
  }
}

TEST_CASE("chain rule: Du(s,t) = grad g(X_t) D_s X_t") {
  const DriftModel model = make_cubic_model(1.0, 0.5, 1.0);
  const TimeGrid grid(64, 0.05);
  const FbmPath noise = sample_fbm(grid, HurstParameter(0.7), 1, 21);
  const SolutionPath path =
      integrate_euler(model, noise, Eigen::VectorXd::Zero(1));
  const MalliavinGrid mg = propagate_derivative(model, path, 8);
  const VectorObservable g = make_observable("square", 1, 1);
  const DerivedProcess proc = derived_process(g, model, path, mg, true);
  for (std::size_t j = 0; j < mg.pivots.size(); ++j) {
    for (int i = mg.pivots[j]; i <= 64; i += 5) {
      const double x = path.values(0, i);
      const double want = 2.0 * x * mg.at(j, i)(0, 0);
      REQUIRE(proc.full_du[j][i - mg.pivots[j]](0, 0) ==
              Catch::Approx(want).margin(1e-14));
      REQUIRE(proc.trace_du(j, i) == Catch::Approx(want).margin(1e-14));
    }
  }
}

TEST_CASE("divergence matches the brute-force oracle at n = 2^6") {
  const int n = 64;
  const TimeGrid grid(n, 1.0 / n);
  for (double hv : {0.35, 0.7}) {
    const HurstParameter h(hv);
    const FbmPath noise = sample_fbm(grid, h, 1, 2024);

    // u = B with full and coarse pivot grids
    for (int pivots : {n, 16}) {
      const DerivedProcess proc = noise_process(noise, pivots);
      const SkorohodResult got = skorohod_integral(proc, noise, h);
      const double want = oracle_skorohod(proc, noise, h);
      REQUIRE(got.value == Catch::Approx(want).margin(1e-12));
      REQUIRE(got.value ==
              Catch::Approx(got.pathwise_sum - got.correction).margin(1e-14));
    }

    // u = g(X) along a cubic path
    const DriftModel model = make_cubic_model(1.0, 0.5, 1.0);
    const SolutionPath path =
        integrate_euler(model, noise, Eigen::VectorXd::Zero(1));
    const MalliavinGrid mg = propagate_derivative(model, path, 16);
    const DerivedProcess proc = derived_process(
        make_observable("square", 1, 1), model, path, mg);
    const SkorohodResult got = skorohod_integral(proc, noise, h);
    REQUIRE(got.value ==
            Catch::Approx(oracle_skorohod(proc, noise, h)).margin(1e-12));
    CHECK(got.coarse_pivots);
  }
}

TEST_CASE("correction for u = B equals its closed form") {
  const int n = 128;
  const TimeGrid grid(n, 1.0 / n);
  for (double hv : {0.35, 0.7}) {
    const HurstParameter h(hv);
    const FbmPath noise = sample_fbm(grid, h, 1, 5);
    double want = 0.0;
    for (int i = 0; i < n; ++i)
      want += covariance(grid.node(i), grid.node(i + 1), h) -
              covariance(grid.node(i), grid.node(i), h);
    for (int pivots : {n, 32}) {
      const SkorohodResult res =
          skorohod_integral(noise_process(noise, pivots), noise, h);
      REQUIRE(res.correction == Catch::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("first-chaos identity: delta(B 1_{[0,T]}) vs (B_T^2 - T^{2H})/2") {
  const int n = 1 << 12;
  const TimeGrid grid(n, 1.0 / n);
  const HurstParameter h(0.7);
  const FbmSampler sampler(grid, h, FbmMethod::circulant);
  for (int rep = 0; rep < 5; ++rep) {
    const FbmPath noise = sampler.sample(1, stream_seed(40, rep));
    const SkorohodResult res =
        skorohod_integral(noise_process(noise, 512), noise, h);
    const double bt = noise.values(0, n);
    const double want = 0.5 * (bt * bt - 1.0);
    REQUIRE(std::abs(res.value - want) / std::abs(want) < 0.05);
  }
}

TEST_CASE("deterministic integrand: Wiener law of the divergence") {
  const int n = 64;
  const TimeGrid grid(n, 1.0 / n);
  const HurstParameter h(0.7);
  GaussianStream stream(12);
  Eigen::MatrixXd uvals(1, n + 1);
  for (int i = 0; i <= n; ++i) uvals(0, i) = stream.normal();
  const DerivedProcess proc = deterministic_process(grid, uvals);

  StepFunction phi = StepFunction::zero(grid, 1);
  phi.values = uvals.leftCols(n);
  const double norm2 = hilbert_norm_sq(phi, h);

  const FbmSampler sampler(grid, h, FbmMethod::cholesky);
  const int n_paths = 6000;
  double s1 = 0, s2 = 0;
  for (int p = 0; p < n_paths; ++p) {
    const FbmPath path = sampler.sample(1, stream_seed(88, p));
    const double v = skorohod_integral(proc, path, h).value;
    s1 += v;
    s2 += v * v;
  }
  const double mean = s1 / n_paths;
  const double var = s2 / n_paths - mean * mean;
  CHECK(std::abs(mean) < 3.0 * std::sqrt(var / n_paths));
  CHECK(std::abs(var - norm2) < 5.0 * var * std::sqrt(2.0 / n_paths));
}

TEST_CASE("mean-zero law of delta(g(X))") {
  const int n = 64;
  const TimeGrid grid(n, 2.0 / n);
  const HurstParameter h(0.35);
  const DriftModel model =
      make_linear_model(1, 1.0, Eigen::MatrixXd::Ones(1, 1));
  const VectorObservable g = make_observable("bounded", 1, 1);
  const FbmSampler sampler(grid, h, FbmMethod::cholesky);
  const int n_paths = 4000;
  double s1 = 0, s2 = 0;
  for (int p = 0; p < n_paths; ++p) {
    const FbmPath noise = sampler.sample(1, stream_seed(302, p));
    const SolutionPath path =
        integrate_euler(model, noise, Eigen::VectorXd::Zero(1));
    const MalliavinGrid mg = propagate_derivative(model, path, 32);
    const double v =
        skorohod_integral(derived_process(g, model, path, mg), noise, h).value;
    s1 += v;
    s2 += v * v;
  }
  const double mean = s1 / n_paths;
  const double se = std::sqrt((s2 / n_paths - mean * mean) / n_paths);
  CHECK(std::abs(mean) < 3.0 * se);
}

TEST_CASE("duality holds for the registry pairs") {
  const int n = 64;
  const TimeGrid grid(n, 1.0 / n);
  const int n_paths = 4000;

  for (double hv : {0.35, 0.7}) {
    const HurstParameter h(hv);

    SECTION("F = 1, u = B at H=" + std::to_string(hv)) {
      const DualityReport rep = duality_check(
          functional_one(),
          [&](const FbmPath& path) { return noise_process(path, 32); },
          "noise", grid, h, 1, n_paths, 1001);
      CHECK(rep.rhs_mean == 0.0);
      CHECK(std::abs(rep.lhs_mean) < 3.0 * rep.lhs_se);
    }

    SECTION("F = B_T, deterministic u at H=" + std::to_string(hv)) {
      GaussianStream stream(2);
      Eigen::MatrixXd uvals(1, n + 1);
      for (int i = 0; i <= n; ++i) uvals(0, i) = stream.normal();
      const DualityReport rep = duality_check(
          functional_endpoint(),
          [&](const FbmPath&) { return deterministic_process(grid, uvals); },
          "deterministic", grid, h, 1, n_paths, 1002);
      // analytic right side: <1_{[0,T]}, u>
      StepFunction phi = StepFunction::zero(grid, 1);
      phi.values = uvals.leftCols(n);
      const double want =
          step_inner_product(StepFunction::indicator(grid, 0, n), phi, h);
      CHECK(rep.rhs_mean == Catch::Approx(want).epsilon(1e-12));
      CHECK(rep.rhs_se == 0.0);
      CHECK(rep.gap_in_se < 3.0);
    }

    SECTION("F = B_T^2, u = B at H=" + std::to_string(hv)) {
      const DualityReport rep = duality_check(
          functional_endpoint_square(),
          [&](const FbmPath& path) { return noise_process(path, n); },
          "noise", grid, h, 1, n_paths, 1003);
      CHECK(rep.gap_in_se < 3.0);
    }

    SECTION("F = sin(B_{T/2}), u = g(X) at H=" + std::to_string(hv)) {
      const DriftModel model =
          make_linear_model(1, 1.0, Eigen::MatrixXd::Ones(1, 1));
      const VectorObservable g = make_observable("bounded", 1, 1);
      const DualityReport rep = duality_check(
          functional_sin_mid(),
          [&](const FbmPath& path) {
            const SolutionPath sol =
                integrate_euler(model, path, Eigen::VectorXd::Zero(1));
            return derived_process(g, model, sol,
                                   propagate_derivative(model, sol, 32));
          },
          "bounded(X)", grid, h, 1, n_paths, 1004);
      CHECK(rep.gap_in_se < 3.0);
    }
  }
}

TEST_CASE("window semantics: left-closed right-open on grid nodes") {
  const int n = 32;
  const TimeGrid grid(n, 0.125);
  const HurstParameter h(0.4);
  const FbmPath noise = sample_fbm(grid, h, 1, 6);
  const DerivedProcess proc = noise_process(noise, n);
  const SkorohodResult full = skorohod_integral(proc, noise, h, 0, n);
  const SkorohodResult left = skorohod_integral(proc, noise, h, 0, 20);
  const SkorohodResult right = skorohod_integral(proc, noise, h, 20, n);
  CHECK(full.pathwise_sum ==
        Catch::Approx(left.pathwise_sum + right.pathwise_sum).epsilon(1e-12));
  CHECK(full.correction ==
        Catch::Approx(left.correction + right.correction).epsilon(1e-12));
  CHECK_THROWS_AS(skorohod_integral(proc, noise, h, 20, 20),
                  std::invalid_argument);
}

TEST_CASE("streaming corrections agree with the materialized grid") {
  const int n = 128;
  const TimeGrid grid(n, 0.02);
  const HurstParameter h(0.35);
  const DriftModel model = make_cubic_model(1.0, 0.5, 1.0);
  const FbmPath noise = sample_fbm(grid, h, 1, 77);
  const SolutionPath path =
      integrate_euler(model, noise, Eigen::VectorXd::Zero(1));

  std::vector<VectorObservable> obs = {estimator_observable(model, 0),
                                       estimator_observable(model, 1)};
  const std::vector<int> pivots = make_pivots(n, 16);
  const Eigen::MatrixXd cells =
      divergence_correction_cells(model, path, obs, h, pivots);

  const MalliavinGrid mg = propagate_derivative(model, path, 16);
  for (int g = 0; g < 2; ++g) {
    const DerivedProcess proc = derived_process(obs[g], model, path, mg);
    const SkorohodResult res = skorohod_integral(proc, noise, h);
    REQUIRE(cells.row(g).sum() == Catch::Approx(res.correction).margin(1e-12));
  }
}

TEST_CASE("trapezoid freezing beats the constant rule at coarse pivots") {
  const int n = 1024;
  const TimeGrid grid(n, 40.0 / n);
  const HurstParameter h(0.35);
  const DriftModel model = make_cubic_model(1.0, 0.5, 1.0);
  const FbmPath noise = sample_fbm(grid, h, 1, 909);
  const SolutionPath path =
      integrate_euler(model, noise, Eigen::VectorXd::Zero(1));
  std::vector<VectorObservable> obs = {estimator_observable(model, 0)};

  const Eigen::MatrixXd exact = divergence_correction_cells(
      model, path, obs, h, make_pivots(n, n), SInterpolation::left_constant);
  const std::vector<int> coarse = make_pivots(n, n / 4);
  const Eigen::MatrixXd left = divergence_correction_cells(
      model, path, obs, h, coarse, SInterpolation::left_constant);
  const Eigen::MatrixXd trap = divergence_correction_cells(
      model, path, obs, h, coarse, SInterpolation::trapezoid);

  const double err_left = std::abs(left.sum() - exact.sum());
  const double err_trap = std::abs(trap.sum() - exact.sum());
  INFO("left " << err_left << " trapezoid " << err_trap << " exact "
               << exact.sum());
  CHECK(err_trap < 0.3 * err_left);
  CHECK(err_trap < 0.01 * std::abs(exact.sum()));
}

TEST_CASE("estimator uses the refined rule only in the rough regime") {
  const int n = 512;
  const TimeGrid grid(n, 20.0 / n);
  const DriftModel model =
      make_linear_model(1, 1.0, Eigen::MatrixXd::Ones(1, 1));
  const FbmPath rough_noise = sample_fbm(grid, HurstParameter(0.35), 1, 31);
  const SolutionPath rough_path =
      integrate_euler(model, rough_noise, Eigen::VectorXd::Zero(1));
  const EstimateResult rough_res =
      estimate(model, rough_path, rough_noise, HurstParameter(0.35), 16);
  CHECK(rough_res.pivot_count == n / 4);  // densified beyond the request

  const FbmPath smooth_noise = sample_fbm(grid, HurstParameter(0.7), 1, 31);
  const SolutionPath smooth_path =
      integrate_euler(model, smooth_noise, Eigen::VectorXd::Zero(1));
  const EstimateResult smooth_res =
      estimate(model, smooth_path, smooth_noise, HurstParameter(0.7), 16);
  CHECK(smooth_res.pivot_count == 16);
}

TEST_CASE("derivative increment ratios: fOU closed form and bounded envelopes") {
  const DriftModel fou =
      make_linear_model(1, 1.0, Eigen::MatrixXd::Ones(1, 1));
  const TimeGrid grid(512, 4.0 / 512);
  const IncrementRatioReport rep = derivative_increments_check(
      fou, HurstParameter(0.7), grid, 64, 40, 2, 31337);
  CHECK(rep.lipschitz_slope == Catch::Approx(1.0).margin(0.1));
  CHECK(rep.max_ratio_shift_s > 0.0);
  CHECK(rep.max_ratio_shift_s < 5.0);
  CHECK(rep.max_ratio_shift_t < 5.0);
  CHECK(rep.max_ratio_double < 5.0);

  // fOU closed form for the shift in u at fixed t
  const FbmPath noise = sample_fbm(grid, HurstParameter(0.7), 1, 4);
  const SolutionPath path =
      integrate_euler(fou, noise, Eigen::VectorXd::Zero(1));
  const MalliavinGrid mg = propagate_derivative(fou, path, 64);
  const int jv = 6, ju = 12, t_node = 400;
  const double tu = grid.node(mg.pivots[ju]), tv = grid.node(mg.pivots[jv]);
  const double t = grid.node(t_node);
  const double want = std::exp(-(t - tu)) - std::exp(-(t - tv));
  const double got = mg.at(ju, t_node)(0, 0) - mg.at(jv, t_node)(0, 0);
  CHECK(got == Catch::Approx(want).margin(0.02));

  // degenerate u = v difference vanishes identically
  CHECK((mg.at(ju, t_node) - mg.at(ju, t_node)).norm() == 0.0);

  const DriftModel cubic = make_cubic_model(1.0, 0.5, 1.0);
  const IncrementRatioReport rep2 = derivative_increments_check(
      cubic, HurstParameter(0.35), grid, 64, 40, 2, 31338);
  CHECK(rep2.max_ratio_shift_s < 5.0);
  CHECK(rep2.max_ratio_shift_t < 5.0);
  CHECK(rep2.max_ratio_double < 5.0);
}
