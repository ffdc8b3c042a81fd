// Command line front end: fBm sampling, SDE integration, divergence
// integrals, drift estimation, and the experiment campaigns.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "fsde/experiment.hpp"
#include "fsde/io.hpp"

namespace {

using namespace fsde;

std::vector<double> parse_csv_doubles(const std::string& text) {
  return detail::parse_doubles(text);
}

void write_path_csv(const std::string& out, const TimeGrid& grid,
                    const Eigen::MatrixXd& values, const std::string& prefix) {
  std::ofstream os(out);
  if (!os) throw std::runtime_error("cannot open " + out);
  os << "t";
  for (int c = 0; c < values.rows(); ++c) os << "," << prefix << c + 1;
  os << "\n";
  for (int i = 0; i <= grid.n_steps; ++i) {
    os << format_full(grid.node(i));
    for (int c = 0; c < values.rows(); ++c)
      os << "," << format_full(values(c, i));
    os << "\n";
  }
}

int run_sample_fbm(double hv, int n, double dt, int d, std::uint64_t seed,
                   const std::string& method, const std::string& out) {
  const TimeGrid grid(n, dt);
  const FbmPath path = sample_fbm(grid, HurstParameter(hv), d, seed,
                                  fbm_method_from_string(method));
  write_path_csv(out, grid, path.values, "B");
  std::cout << "wrote " << out << " (" << to_string(path.method) << ", n=" << n
            << ", d=" << d << ")\n";
  return 0;
}

int run_integrate(const std::string& model_id, const std::string& theta,
                  const std::string& sigma, const std::string& x0, double hv,
                  int n, double dt, std::uint64_t seed,
                  const std::string& method, const std::string& out) {
  const DriftModel model =
      make_model(model_id, parse_csv_doubles(theta), parse_csv_doubles(sigma));
  const TimeGrid grid(n, dt);
  const FbmPath noise = sample_fbm(grid, HurstParameter(hv), model.d, seed,
                                   fbm_method_from_string(method));
  const std::vector<double> x0v = parse_csv_doubles(x0);
  if (static_cast<int>(x0v.size()) != model.m)
    throw std::invalid_argument("x0 must have m entries");
  const SolutionPath path = integrate_euler(
      model, noise, Eigen::Map<const Eigen::VectorXd>(x0v.data(), model.m));
  write_path_csv(out, grid, path.values, "X");
  std::cout << "wrote " << out << "\n";
  return 0;
}

int run_skorohod(const std::string& model_id, const std::string& theta,
                 const std::string& sigma, const std::string& x0,
                 const std::string& g_name, double hv, int n, double dt,
                 std::uint64_t seed, int pivots, const std::string& window,
                 const std::string& out) {
  const DriftModel model =
      make_model(model_id, parse_csv_doubles(theta), parse_csv_doubles(sigma));
  const HurstParameter h(hv);
  const TimeGrid grid(n, dt);
  const FbmPath noise = sample_fbm(grid, h, model.d, seed);
  const std::vector<double> x0v = parse_csv_doubles(x0);
  const SolutionPath path = integrate_euler(
      model, noise, Eigen::Map<const Eigen::VectorXd>(x0v.data(), model.m));
  const MalliavinGrid mg = propagate_derivative(model, path, pivots);
  const DerivedProcess proc = derived_process(
      make_observable(g_name, model.m, model.d), model, path, mg);

  int a = 0, b = n;
  if (!window.empty()) {
    const std::vector<double> w = parse_csv_doubles(window);
    if (w.size() != 2) throw std::invalid_argument("window must be 'a,b'");
    a = static_cast<int>(std::lround(w[0] / dt));
    b = static_cast<int>(std::lround(w[1] / dt));
  }
  const SkorohodResult res = skorohod_integral(proc, noise, h, a, b);

  nlohmann::json record = {
      {"value", res.value},
      {"correction", res.correction},
      {"pathwise_sum", res.pathwise_sum},
      {"metadata",
       {{"model", model_id},
        {"g", g_name},
        {"h", hv},
        {"n", n},
        {"dt", dt},
        {"seed", seed},
        {"pivots", res.pivot_count},
        {"coarse_pivots", res.coarse_pivots},
        {"window_begin", grid.node(res.window_begin)},
        {"window_end", grid.node(res.window_end)},
        {"library_version", kLibraryVersion}}}};
  if (out.empty()) {
    std::cout << record.dump() << "\n";
  } else {
    std::ofstream os(out);
    os << record.dump() << "\n";
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

int run_estimate(const std::string& model_id, const std::string& theta,
                 const std::string& sigma, const std::string& x0, double hv,
                 int n, double dt, std::uint64_t seed, int pivots,
                 const std::string& mode, const std::string& out) {
  const DriftModel model =
      make_model(model_id, parse_csv_doubles(theta), parse_csv_doubles(sigma));
  const HurstParameter h = HurstParameter::estimation(hv);
  const TimeGrid grid(n, dt);
  const FbmPath noise = sample_fbm(grid, h, model.d, seed);
  const std::vector<double> x0v = parse_csv_doubles(x0);
  const SolutionPath path = integrate_euler(
      model, noise, Eigen::Map<const Eigen::VectorXd>(x0v.data(), model.m));
  const EstimateResult res = estimate(model, path, noise, h, pivots);

  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  nlohmann::json record = {
      {"T", res.T},
      {"gram", std::vector<double>(res.gram.data(),
                                   res.gram.data() + res.gram.size())},
      {"det_gram", res.det_gram},
      {"cond_gram", res.cond_gram},
      {"pivots", res.pivot_count},
      {"metadata",
       {{"model", model_id},
        {"h", hv},
        {"n", n},
        {"dt", dt},
        {"seed", seed},
        {"mode", mode},
        {"library_version", kLibraryVersion}}}};
  if (mode == "oracle" || mode == "both") {
    record["theta_hat"] = vec(res.theta_hat);
    record["Z"] = vec(res.Z);
    record["correction"] = vec(res.correction);
  }
  if (mode == "pathwise" || mode == "both") {
    record["theta_hat_pathwise"] = vec(res.theta_hat_pathwise);
    record["forward"] = vec(res.forward);
  }
  if (out.empty()) {
    std::cout << record.dump() << "\n";
  } else {
    std::ofstream os(out);
    os << record.dump() << "\n";
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

int run_campaign(const std::string& name, const std::string& config_path,
                 const std::string& out_dir, int workers) {
  ExperimentConfig cfg = config_path.empty()
                             ? ExperimentConfig::parse_text("", name)
                             : ExperimentConfig::parse_file(config_path, name);
  if (workers > 0) cfg.workers = workers;
  const CampaignResult result = run_experiment(cfg);
  write_reports(cfg, result, out_dir);
  int fails = 0;
  for (const ReportRow& r : result.rows) {
    if (r.verdict == "info") continue;
    std::printf("[%s] %s %s h=%g %s value=%.6g%s\n",
                r.verdict == "pass" ? "PASS" : "FAIL", r.statistic.c_str(),
                r.model.c_str(), r.h, r.param.c_str(), r.value,
                r.criterion.empty() ? ""
                                    : (" (criterion " + r.criterion + ")").c_str());
    if (r.verdict == "fail") ++fails;
  }
  std::cout << (fails == 0 ? "all verdicts pass" : "some verdicts FAILED")
            << "; reports in " << out_dir << "\n";
  return fails == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fsde: drift estimation laboratory for fractional SDEs"};
  app.set_help_flag("--help", "print help");  // --h is the Hurst parameter
  app.require_subcommand(1);
  auto sub = [&](CLI::App* parent, const std::string& name,
                 const std::string& desc = "") {
    CLI::App* c = parent->add_subcommand(name, desc);
    c->set_help_flag("--help", "print help");
    return c;
  };

  // sample-fbm
  double hv = 0.7, dt = 0.001, x0_scalar = 0.0;
  int n = 1024, d = 1, pivots = 512, workers = 0;
  std::uint64_t seed = 1;
  std::string method = "auto", out, model_id = "fou", theta = "1", sigma = "1",
              x0 = "0", g_name = "bounded", window, mode = "both", config_path,
              out_dir = "reports";
  (void)x0_scalar;

  CLI::App* sf = sub(&app, "sample-fbm", "sample fractional Brownian motion");
  sf->add_option("--h", hv, "Hurst parameter in (0,1)")->required();
  sf->add_option("--n", n, "number of steps")->required();
  sf->add_option("--dt", dt, "step size")->required();
  sf->add_option("--d", d, "dimension");
  sf->add_option("--seed", seed, "seed");
  sf->add_option("--method", method, "circulant|cholesky|auto");
  sf->add_option("--out", out, "output CSV")->required();

  CLI::App* ig = sub(&app, "integrate", "Euler-integrate the SDE");
  ig->add_option("--model", model_id, "fou|cubic|coupled2d")->required();
  ig->add_option("--theta", theta, "drift parameters (csv)");
  ig->add_option("--sigma", sigma, "diffusion entries (csv)");
  ig->add_option("--x0", x0, "initial state (csv)");
  ig->add_option("--h", hv, "Hurst parameter")->required();
  ig->add_option("--n", n, "steps")->required();
  ig->add_option("--dt", dt, "step size")->required();
  ig->add_option("--seed", seed, "seed");
  ig->add_option("--method", method, "sampling method");
  ig->add_option("--out", out, "output CSV")->required();

  CLI::App* sk = sub(&app, "skorohod", "divergence integral of g(X)");
  sk->add_option("--model", model_id)->required();
  sk->add_option("--theta", theta);
  sk->add_option("--sigma", sigma);
  sk->add_option("--x0", x0);
  sk->add_option("--g", g_name, "observable: one|identity|square|bounded");
  sk->add_option("--h", hv)->required();
  sk->add_option("--n", n)->required();
  sk->add_option("--dt", dt)->required();
  sk->add_option("--seed", seed);
  sk->add_option("--pivots", pivots, "derivative pivot count");
  sk->add_option("--window", window, "a,b in model time");
  sk->add_option("--out", out, "output JSON-lines file (default stdout)");

  CLI::App* es = sub(&app, "estimate", "drift least-squares estimate");
  es->add_option("--model", model_id)->required();
  es->add_option("--theta", theta, "true drift parameters (csv)");
  es->add_option("--sigma", sigma);
  es->add_option("--x0", x0);
  es->add_option("--h", hv)->required();
  es->add_option("--n", n)->required();
  es->add_option("--dt", dt)->required();
  es->add_option("--seed", seed);
  es->add_option("--pivots", pivots);
  es->add_option("--mode", mode, "oracle|pathwise|both");
  es->add_option("--out", out, "output JSON-lines file (default stdout)");

  CLI::App* ex = sub(&app, "experiment", "run a verification campaign");
  ex->require_subcommand(1);
  std::vector<CLI::App*> campaigns;
  for (const char* name :
       {"consistency", "ergodic", "moments", "maximal", "decay", "norms"}) {
    CLI::App* c = sub(ex, name);
    c->add_option("--config", config_path, "flat key=value config file");
    c->add_option("--out-dir", out_dir, "report directory");
    c->add_option("--workers", workers, "worker threads (0 = hardware)");
    campaigns.push_back(c);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (sf->parsed())
      return run_sample_fbm(hv, n, dt, d, seed, method, out);
    if (ig->parsed())
      return run_integrate(model_id, theta, sigma, x0, hv, n, dt, seed, method,
                           out);
    if (sk->parsed())
      return run_skorohod(model_id, theta, sigma, x0, g_name, hv, n, dt, seed,
                          pivots, window, out);
    if (es->parsed())
      return run_estimate(model_id, theta, sigma, x0, hv, n, dt, seed, pivots,
                          mode, out);
    if (ex->parsed())
      for (CLI::App* c : campaigns)
        if (c->parsed())
          return run_campaign(c->get_name(), config_path, out_dir, workers);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
