#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fsde/sde.hpp"

using namespace fsde;

namespace {

DriftModel make_zero_drift() {
  DriftModel model;
  model.id = "zero";
  model.m = model.l = model.d = 1;
  model.theta = Eigen::VectorXd::Zero(1);
  model.sigma = Eigen::MatrixXd::Constant(1, 1, 2.0);
  model.L1 = 0.0;
  model.f = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(1, 1); };
  model.grad_f = [](int, const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Zero(1, 1);
  };
  return model;
}

DriftModel make_antidissipative() {
  DriftModel model = make_linear_model(1, 1.0, Eigen::MatrixXd::Ones(1, 1));
  model.id = "negated";
  model.f = [](const Eigen::VectorXd& x) { return Eigen::MatrixXd(-x); };
  model.grad_f = [](int, const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Constant(1, 1, -1.0);
  };
  return model;
}

// closed-form fOU via integration by parts; the time integral by trapezoid
double fou_closed_form(double theta, double sigma, double x0,
                       const FbmPath& noise, int node) {
  const TimeGrid& g = noise.grid;
  const double t = g.node(node);
  double integral = 0.0;
  for (int i = 0; i < node; ++i) {
    const double a = std::exp(-theta * (t - g.node(i))) * noise.values(0, i);
    const double b =
        std::exp(-theta * (t - g.node(i + 1))) * noise.values(0, i + 1);
    integral += 0.5 * (a + b) * g.dt;
  }
  return x0 * std::exp(-theta * t) +
         sigma * (noise.values(0, node) - theta * integral);
}

}  // namespace

TEST_CASE("zero drift integrates to x0 + sigma B exactly") {
  const TimeGrid grid(64, 0.05);
  const FbmPath noise = sample_fbm(grid, HurstParameter(0.4), 1, 42);
  const DriftModel model = make_zero_drift();
  const SolutionPath path =
      integrate_euler(model, noise, Eigen::VectorXd::Ones(1));
  for (int i = 0; i <= 64; ++i)
    REQUIRE(path.values(0, i) ==
            Catch::Approx(1.0 + 2.0 * noise.values(0, i)).margin(1e-12));
}

TEST_CASE("noiseless linear model converges to exp(-T) at first order") {
  const DriftModel model =
      make_linear_model(1, 1.0, Eigen::MatrixXd::Zero(1, 1));
  const double T = 1.0;
  std::vector<double> dts = {1e-2, 5e-3, 2.5e-3, 1.25e-3};
  std::vector<double> errs;
  for (double dt : dts) {
    const int n = static_cast<int>(std::lround(T / dt));
    const TimeGrid grid(n, dt);
    const FbmPath noise = sample_fbm(grid, HurstParameter(0.5), 1, 1);
    const SolutionPath path =
        integrate_euler(model, noise, Eigen::VectorXd::Ones(1));
    errs.push_back(std::abs(path.values(0, n) - std::exp(-T)));
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < dts.size(); ++k) {
    const double x = std::log(dts[k]), y = std::log(errs[k]);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
  }
  const double m = dts.size();
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  CHECK(slope > 0.8);
  CHECK(slope < 1.2);
}

TEST_CASE("fOU path matches the integration-by-parts closed form") {
  for (double hv : {0.35, 0.7}) {
    const HurstParameter h(hv);
    double prev_err = -1.0;
    for (int n : {256, 512}) {
      const TimeGrid grid(n, 2.0 / n);
      const FbmPath noise = sample_fbm(grid, h, 1, 7, FbmMethod::circulant);
      const DriftModel model =
          make_linear_model(1, 1.0, Eigen::MatrixXd::Ones(1, 1));
      const SolutionPath path =
          integrate_euler(model, noise, Eigen::VectorXd::Ones(1));
      double sup = 0.0;
      for (int i = 0; i <= n; i += 8) {
        const double want = fou_closed_form(1.0, 1.0, 1.0, noise, i);
        sup = std::max(sup, std::abs(path.values(0, i) - want));
      }
      if (prev_err > 0.0) CHECK(sup < 0.65 * prev_err);
      prev_err = sup;
    }
  }
}

TEST_CASE("certificates for registry models") {
  const DriftModel lin = make_linear_model(1, 1.0, Eigen::MatrixXd::Ones(1, 1));
  const HypothesisCertificate c1 = certify_hypotheses(lin, 200, 3.0, 11);
  CHECK(c1.min_jacobian_eigenvalue == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(c1.worst_dissipativity_ratio == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(c1.ok());

  const DriftModel cubic = make_cubic_model(1.0, 0.5, 1.0);
  const HypothesisCertificate c2 = certify_hypotheses(cubic, 200, 3.0, 11);
  CHECK(c2.min_jacobian_eigenvalue >= 1.0 - 1e-10);
  CHECK(c2.jacobian_ok);
  CHECK(c2.dissipativity_ok);

  const DriftModel coupled =
      make_coupled2d_model(1.0, Eigen::MatrixXd::Identity(2, 2));
  const HypothesisCertificate c3 = certify_hypotheses(coupled, 200, 2.0, 11);
  CHECK(c3.min_jacobian_eigenvalue >= 1.0 - 1e-10);
  CHECK(c3.ok());

  const HypothesisCertificate bad =
      certify_hypotheses(make_antidissipative(), 100, 2.0, 11);
  CHECK_FALSE(bad.jacobian_ok);
  CHECK_FALSE(bad.dissipativity_ok);
  CHECK(bad.jacobian_witness.size() == 1);
}

TEST_CASE("second moments stay bounded along the fOU path") {
  const double T = 25.0;
  const int n = 500;
  const TimeGrid grid(n, T / n);
  const HurstParameter h(0.7);
  const DriftModel model =
      make_linear_model(1, 1.0, Eigen::MatrixXd::Ones(1, 1));
  const FbmSampler sampler(grid, h, FbmMethod::circulant);
  const int n_paths = 300;
  Eigen::VectorXd second = Eigen::VectorXd::Zero(n + 1);
  for (int p = 0; p < n_paths; ++p) {
    const FbmPath noise = sampler.sample(1, stream_seed(21, p));
    const SolutionPath path =
        integrate_euler(model, noise, Eigen::VectorXd::Zero(1));
    second += path.values.row(0).cwiseAbs2().transpose();
  }
  second /= n_paths;
  CHECK(second.maxCoeff() <= 2.0 * second(n));
}

TEST_CASE("Hoelder moment slope of the solution is 2H") {
  const double hv = 0.35;
  const HurstParameter h(hv);
  const int n = 1 << 10;
  const TimeGrid grid(n, 1.0 / n);
  const DriftModel model =
      make_linear_model(1, 1.0, Eigen::MatrixXd::Ones(1, 1));
  const FbmSampler sampler(grid, h, FbmMethod::circulant);
  const std::vector<int> lags = {4, 8, 16, 32, 64};
  std::vector<double> acc(lags.size(), 0.0);
  const int n_paths = 400;
  const int anchor = n / 2;
  for (int p = 0; p < n_paths; ++p) {
    const FbmPath noise = sampler.sample(1, stream_seed(33, p));
    const SolutionPath path =
        integrate_euler(model, noise, Eigen::VectorXd::Zero(1));
    for (std::size_t k = 0; k < lags.size(); ++k) {
      const double diff =
          path.values(0, anchor + lags[k]) - path.values(0, anchor);
      acc[k] += diff * diff;
    }
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < lags.size(); ++k) {
    const double x = std::log(lags[k] * grid.dt);
    const double y = std::log(acc[k] / n_paths);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
  }
  const double m = lags.size();
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  CHECK(slope == Catch::Approx(2.0 * hv).margin(0.15));
}

TEST_CASE("trajectories forget the initial condition exponentially") {
  const TimeGrid grid(400, 0.02);
  const HurstParameter h(0.7);
  const FbmPath noise = sample_fbm(grid, h, 1, 3);
  const DriftModel model = make_cubic_model(1.0, 0.5, 1.0);
  const SolutionPath a =
      integrate_euler(model, noise, Eigen::VectorXd::Constant(1, 2.0));
  const SolutionPath b =
      integrate_euler(model, noise, Eigen::VectorXd::Constant(1, -1.0));
  const double slack = std::exp(2.0 * grid.dt * model.L1);
  for (int i = 0; i <= 400; ++i) {
    const double gap = std::abs(a.values(0, i) - b.values(0, i));
    REQUIRE(gap <=
            3.0 * std::exp(-model.L1 * grid.node(i)) * slack + 1e-12);
  }
}

TEST_CASE("integration failure names the first bad step") {
  const TimeGrid grid(50, 0.5);
  const FbmPath noise = sample_fbm(grid, HurstParameter(0.5), 1, 5);
  const DriftModel model = make_cubic_model(1.0, 1.0, 1.0);
  try {
    integrate_euler(model, noise, Eigen::VectorXd::Constant(1, 10.0));
    FAIL("expected IntegrationError");
  } catch (const IntegrationError& e) {
    CHECK(e.step() >= 1);
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("warmup substepping rescues a far-out initial condition") {
  const TimeGrid grid(200, 0.01);
  const FbmPath noise = sample_fbm(grid, HurstParameter(0.5), 1, 5);
  const DriftModel model = make_cubic_model(1.0, 0.5, 1.0);
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, 30.0);
  CHECK_THROWS_AS(integrate_euler(model, noise, x0), IntegrationError);
  IntegrateOptions opts;
  opts.warmup_steps = 10;
  opts.warmup_substeps = 128;
  const SolutionPath path = integrate_euler(model, noise, x0, opts);
  CHECK(std::abs(path.values(0, 200)) < 5.0);
}

TEST_CASE("registry lookup validates parameters") {
  CHECK_NOTHROW(make_model("fou", {1.0}, {1.0}));
  CHECK_NOTHROW(make_model("cubic", {1.0, 0.5}, {1.0}));
  CHECK_NOTHROW(make_model("coupled2d", {1.0}, {1.0, 0.5}));
  CHECK_THROWS_AS(make_model("cubic", {1.0}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(make_model("nope", {1.0}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(make_cubic_model(-1.0, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("estimator observable matches sigma^T f_j") {
  const DriftModel model = make_cubic_model(1.0, 0.5, 2.0);
  const VectorObservable g0 = estimator_observable(model, 0);
  const VectorObservable g1 = estimator_observable(model, 1);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.5);
  CHECK(g0.value(x)(0) == Catch::Approx(2.0 * 1.5));
  CHECK(g1.value(x)(0) == Catch::Approx(2.0 * 1.5 * 1.5 * 1.5));
  CHECK(g1.jacobian(x)(0, 0) == Catch::Approx(2.0 * 3.0 * 1.5 * 1.5));
}
