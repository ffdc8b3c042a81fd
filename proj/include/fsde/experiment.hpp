#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fsde/estimator.hpp"
#include "fsde/io.hpp"
#include "fsde/kernel.hpp"

namespace fsde {

// ---------------------------------------------------------------------------
// Configuration: flat key = value text, unknown keys rejected
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string experiment;
  std::vector<std::string> models = {"fou"};
  std::vector<double> h_list = {0.5};
  std::vector<double> horizons = {10, 20, 40, 80, 160};
  double dt = 160.0 / 32768.0;
  int reps = 100;
  int pivots = 512;
  std::uint64_t seed = 20240801;
  std::vector<double> theta = {1.0};            // linear / coupled2d models
  std::vector<double> theta_cubic = {1.0, 0.5}; // cubic model
  std::vector<double> sigma = {1.0};
  double x0 = 0.0;
  int p = 4;
  int workers = 0;  // 0 = hardware concurrency
  // ergodic campaign
  double t_single = 500.0;
  double t_cross = 20.0;
  int cross_paths = 4000;
  double ergodic_tol = 0.05;
  // moments / maximal campaigns
  double slope_tol = 0.15;
  int wiener_reps = 6000;
  double window_anchor = 1.0;
  std::vector<double> window_widths = {0.0625, 0.125, 0.25, 0.5, 1.0};
  int n_steps = 1 << 12;
  // decay / norms campaigns
  double ratio_bound = 5.0;
  std::vector<int> grid_sizes = {8, 16, 32};
  int per_grid = 34;

  std::string canonical_text() const;
  static ExperimentConfig parse_text(const std::string& text,
                                     const std::string& experiment_name);
  static ExperimentConfig parse_file(const std::string& path,
                                     const std::string& experiment_name);
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const std::string& tok : split_list(s)) out.push_back(std::stod(tok));
  return out;
}

inline std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  for (const std::string& tok : split_list(s)) out.push_back(std::stoi(tok));
  return out;
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out += (i ? "," : "") + format_full(v[i]);
  return out;
}

inline const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::set<std::string> common = {
      "experiment", "models", "h_list", "seed", "workers", "dt", "reps"};
  static const std::map<std::string, std::set<std::string>> table = [] {
    std::map<std::string, std::set<std::string>> t;
    auto with = [&](std::set<std::string> extra) {
      extra.insert(common.begin(), common.end());
      return extra;
    };
    t["consistency"] = with({"horizons", "pivots", "theta", "theta_cubic",
                             "sigma", "x0", "p", "slope_tol"});
    t["ergodic"] = with({"theta", "sigma", "x0", "t_single", "t_cross",
                         "cross_paths", "ergodic_tol"});
    t["moments"] = with({"horizons", "pivots", "theta", "theta_cubic", "sigma",
                         "x0", "p", "slope_tol", "n_steps", "wiener_reps"});
    t["maximal"] = with({"pivots", "theta", "theta_cubic", "sigma", "x0", "p",
                         "slope_tol", "window_anchor", "window_widths",
                         "n_steps"});
    t["decay"] = with({"pivots", "theta", "theta_cubic", "sigma", "x0",
                       "ratio_bound", "n_steps"});
    t["norms"] = with({"grid_sizes", "per_grid", "ratio_bound"});
    return t;
  }();
  return table;
}

}  // namespace detail

inline std::string ExperimentConfig::canonical_text() const {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("experiment", experiment);
  {
    std::string m;
    for (std::size_t i = 0; i < models.size(); ++i) m += (i ? "," : "") + models[i];
    kv.emplace_back("models", m);
  }
  kv.emplace_back("h_list", detail::join_doubles(h_list));
  kv.emplace_back("horizons", detail::join_doubles(horizons));
  kv.emplace_back("dt", format_full(dt));
  kv.emplace_back("reps", std::to_string(reps));
  kv.emplace_back("pivots", std::to_string(pivots));
  kv.emplace_back("seed", std::to_string(seed));
  kv.emplace_back("theta", detail::join_doubles(theta));
  kv.emplace_back("theta_cubic", detail::join_doubles(theta_cubic));
  kv.emplace_back("sigma", detail::join_doubles(sigma));
  kv.emplace_back("x0", format_full(x0));
  kv.emplace_back("p", std::to_string(p));
  kv.emplace_back("t_single", format_full(t_single));
  kv.emplace_back("t_cross", format_full(t_cross));
  kv.emplace_back("cross_paths", std::to_string(cross_paths));
  kv.emplace_back("ergodic_tol", format_full(ergodic_tol));
  kv.emplace_back("slope_tol", format_full(slope_tol));
  kv.emplace_back("wiener_reps", std::to_string(wiener_reps));
  kv.emplace_back("window_anchor", format_full(window_anchor));
  kv.emplace_back("window_widths", detail::join_doubles(window_widths));
  kv.emplace_back("n_steps", std::to_string(n_steps));
  kv.emplace_back("ratio_bound", format_full(ratio_bound));
  {
    std::string gsz;
    for (std::size_t i = 0; i < grid_sizes.size(); ++i)
      gsz += (i ? "," : "") + std::to_string(grid_sizes[i]);
    kv.emplace_back("grid_sizes", gsz);
  }
  kv.emplace_back("per_grid", std::to_string(per_grid));

  const auto it = detail::allowed_keys().find(experiment);
  std::ostringstream os;
  for (const auto& [key, value] : kv) {
    if (key != "experiment" && key != "workers" &&
        it != detail::allowed_keys().end() && !it->second.count(key))
      continue;  // only keys meaningful for this experiment
    os << key << " = " << value << "\n";
  }
  return os.str();
}

inline ExperimentConfig ExperimentConfig::parse_text(
    const std::string& text, const std::string& experiment_name) {
  ExperimentConfig cfg;
  cfg.experiment = experiment_name;
  if (experiment_name == "norms") {
    cfg.seed = 1234;  // fixed random test set
    cfg.h_list = {0.3, 0.35, 0.45, 0.6, 0.75, 0.9};
  } else if (experiment_name == "ergodic") {
    cfg.h_list = {0.5, 0.7};
    cfg.dt = 0.025;
  } else if (experiment_name == "consistency") {
    cfg.h_list = {0.35, 0.5, 0.7};
  } else if (experiment_name == "moments") {
    cfg.h_list = {0.35, 0.5, 0.7};
    cfg.horizons = {2, 4, 8, 16, 32};
    cfg.dt = 1.0 / 128.0;
    cfg.reps = 200;
    cfg.pivots = 256;
  } else if (experiment_name == "maximal") {
    cfg.h_list = {0.35, 0.7};
    cfg.reps = 400;
    cfg.pivots = 256;
  } else if (experiment_name == "decay") {
    cfg.h_list = {0.35, 0.7};
    cfg.reps = 20;
    cfg.pivots = 128;
    cfg.n_steps = 1024;
    cfg.dt = 0.02;
  }
  const auto it = detail::allowed_keys().find(experiment_name);
  if (it == detail::allowed_keys().end())
    throw std::invalid_argument("unknown experiment: " + experiment_name);
  const std::set<std::string>& allowed = it->second;

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = true;
      for (char c : line)
        if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
      if (blank) continue;
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (!allowed.count(key))
      throw std::invalid_argument("config key '" + key +
                                  "' is not valid for experiment '" +
                                  experiment_name + "'");
    if (key == "experiment") {
      if (val != experiment_name)
        throw std::invalid_argument("config experiment '" + val +
                                    "' does not match '" + experiment_name +
                                    "'");
    } else if (key == "models") {
      cfg.models = detail::split_list(val);
    } else if (key == "h_list") {
      cfg.h_list = detail::parse_doubles(val);
    } else if (key == "horizons") {
      cfg.horizons = detail::parse_doubles(val);
    } else if (key == "dt") {
      cfg.dt = std::stod(val);
    } else if (key == "reps") {
      cfg.reps = std::stoi(val);
    } else if (key == "pivots") {
      cfg.pivots = std::stoi(val);
    } else if (key == "seed") {
      cfg.seed = std::stoull(val);
    } else if (key == "theta") {
      cfg.theta = detail::parse_doubles(val);
    } else if (key == "theta_cubic") {
      cfg.theta_cubic = detail::parse_doubles(val);
    } else if (key == "sigma") {
      cfg.sigma = detail::parse_doubles(val);
    } else if (key == "x0") {
      cfg.x0 = std::stod(val);
    } else if (key == "p") {
      cfg.p = std::stoi(val);
    } else if (key == "workers") {
      cfg.workers = std::stoi(val);
    } else if (key == "t_single") {
      cfg.t_single = std::stod(val);
    } else if (key == "t_cross") {
      cfg.t_cross = std::stod(val);
    } else if (key == "cross_paths") {
      cfg.cross_paths = std::stoi(val);
    } else if (key == "ergodic_tol") {
      cfg.ergodic_tol = std::stod(val);
    } else if (key == "slope_tol") {
      cfg.slope_tol = std::stod(val);
    } else if (key == "wiener_reps") {
      cfg.wiener_reps = std::stoi(val);
    } else if (key == "window_anchor") {
      cfg.window_anchor = std::stod(val);
    } else if (key == "window_widths") {
      cfg.window_widths = detail::parse_doubles(val);
    } else if (key == "n_steps") {
      cfg.n_steps = std::stoi(val);
    } else if (key == "ratio_bound") {
      cfg.ratio_bound = std::stod(val);
    } else if (key == "grid_sizes") {
      cfg.grid_sizes = detail::parse_ints(val);
    } else if (key == "per_grid") {
      cfg.per_grid = std::stoi(val);
    }
  }
  return cfg;
}

inline ExperimentConfig ExperimentConfig::parse_file(
    const std::string& path, const std::string& experiment_name) {
  return parse_text(read_text_file(path), experiment_name);
}

// ---------------------------------------------------------------------------
// Report rows and campaign results
// ---------------------------------------------------------------------------

struct ReportRow {
  std::string statistic;
  std::string model;
  double h = 0.0;
  std::string param;
  double value = 0.0;
  double std_error = 0.0;
  std::string verdict;    // pass | fail | info
  std::string criterion;  // acceptance criterion id, "" for campaign-local rows
};

struct CampaignResult {
  std::string experiment;
  std::vector<ReportRow> rows;
  std::vector<std::string> detail_header;
  std::vector<std::vector<std::string>> detail_rows;
  // wall-clock measurements; reported next to the timestamp in the summary
  // metadata, outside the byte-stable artifacts
  std::vector<std::pair<std::string, double>> timings;

  bool pass() const {
    for (const ReportRow& r : rows)
      if (r.verdict == "fail") return false;
    return true;
  }
};

namespace detail {

template <class Fn>
void parallel_for(int count, int workers, Fn&& fn) {
  if (workers <= 0)
    workers = static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (std::thread& t : pool) t.join();
}

inline double regression_slope(const std::vector<double>& x,
                               const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * (v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

inline DriftModel config_model(const ExperimentConfig& cfg,
                               const std::string& id) {
  if (id == "fou" || id == "linear")
    return make_model("fou", {cfg.theta.at(0)}, {cfg.sigma.at(0)});
  if (id == "cubic")
    return make_model("cubic", {cfg.theta_cubic.at(0), cfg.theta_cubic.at(1)},
                      {cfg.sigma.at(0)});
  if (id == "coupled2d") {
    const double s = cfg.sigma.at(0);
    return make_model("coupled2d", {cfg.theta.at(0)}, {s, s});
  }
  throw std::invalid_argument("config_model: unknown model id " + id);
}

}  // namespace detail

/// Exponent used by the rough-regime Step-1 slope check; stays strictly
/// inside (0, 1-2H) as the summability argument requires.
inline double step1_lambda(double H) {
  double lam = std::min(H, 0.5 * (1.0 - H));
  const double cap = 1.0 - 2.0 * H;
  if (lam >= cap) lam = 0.99 * cap;
  return lam;
}

/// Running sup of the divergence over a node window: cells carry the
/// forward noise terms and the trace corrections per node.
inline double window_sup_divergence(const Eigen::VectorXd& forward_cells,
                                    const Eigen::VectorXd& correction_cells,
                                    int a, int b) {
  double acc = 0.0, sup = 0.0;
  for (int i = a; i < b; ++i) {
    acc += forward_cells(i) - correction_cells(i);
    sup = std::max(sup, std::abs(acc));
  }
  return sup;
}

// ---------------------------------------------------------------------------
// consistency campaign
// ---------------------------------------------------------------------------

inline CampaignResult run_consistency(const ExperimentConfig& cfg) {
  CampaignResult out;
  out.experiment = "consistency";
  out.detail_header = {"model", "H", "T", "rep", "abs_err_oracle",
                       "abs_err_pathwise", "det_gram", "Z_over_T"};
  double longest_cell_seconds = 0.0;
  std::string longest_cell;
  std::uint64_t cell_index = 0;

  for (const std::string& model_id : cfg.models) {
    const DriftModel model = detail::config_model(cfg, model_id);
    for (double hv : cfg.h_list) {
      const HurstParameter h = HurstParameter::estimation(hv);
      std::vector<double> med_err, med_err_pw, med_zt, step1_stat, log_T;
      for (double T : cfg.horizons) {
        const int n = static_cast<int>(std::lround(T / cfg.dt));
        const TimeGrid grid(n, cfg.dt);
        const FbmSampler sampler(grid, h, FbmMethod::circulant);
        const std::uint64_t cell_seed = stream_seed(cfg.seed, cell_index++);

        std::vector<double> err(cfg.reps), err_pw(cfg.reps), zt(cfg.reps),
            dets(cfg.reps), ztp(cfg.reps);
        const auto t0 = std::chrono::steady_clock::now();
        detail::parallel_for(cfg.reps, cfg.workers, [&](int rep) {
          const FbmPath noise =
              sampler.sample(model.d, stream_seed(cell_seed, rep));
          const SolutionPath path = integrate_euler(
              model, noise, Eigen::VectorXd::Constant(model.m, cfg.x0));
          const EstimateResult res =
              estimate(model, path, noise, h, cfg.pivots);
          err[rep] = (res.theta_hat - model.theta).norm();
          err_pw[rep] = (res.theta_hat_pathwise - model.theta).norm();
          zt[rep] = res.Z.norm() / T;
          ztp[rep] = std::pow(res.Z.norm() / T, cfg.p);
          dets[rep] = res.det_gram;
        });
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        if (secs > longest_cell_seconds) {
          longest_cell_seconds = secs;
          std::ostringstream os;
          os << model_id << " H=" << hv << " T=" << T;
          longest_cell = os.str();
        }

        for (int rep = 0; rep < cfg.reps; ++rep)
          out.detail_rows.push_back(
              {model_id, format_full(hv), format_full(T), std::to_string(rep),
               format_full(err[rep]), format_full(err_pw[rep]),
               format_full(dets[rep]), format_full(zt[rep])});

        med_err.push_back(detail::median(err));
        med_err_pw.push_back(detail::median(err_pw));
        med_zt.push_back(detail::median(zt));
        double mean_p = 0.0;
        for (double v : ztp) mean_p += v;
        step1_stat.push_back(std::pow(mean_p / cfg.reps, 1.0 / cfg.p));
        log_T.push_back(std::log(T));

        std::ostringstream param;
        param << "T=" << format_full(T);
        out.rows.push_back({"median_abs_err_oracle", model_id, hv, param.str(),
                            med_err.back(),
                            detail::quantile(err, 0.75) -
                                detail::quantile(err, 0.25),
                            "info", ""});
        out.rows.push_back({"median_abs_err_pathwise", model_id, hv,
                            param.str(), med_err_pw.back(), 0.0, "info", ""});
        out.rows.push_back({"median_Z_over_T", model_id, hv, param.str(),
                            med_zt.back(), 0.0, "info", ""});
      }

      const double shrink = med_err.front() / med_err.back();
      out.rows.push_back({"oracle_error_shrink_factor", model_id, hv,
                          "first_to_last", shrink, 0.0,
                          shrink >= 2.0 ? "pass" : "fail", "9"});

      std::vector<double> log_zt;
      for (double v : med_zt) log_zt.push_back(std::log(v));
      const double z_slope = detail::regression_slope(log_T, log_zt);
      out.rows.push_back({"Z_over_T_log_slope", model_id, hv, "", z_slope, 0.0,
                          z_slope < 0.0 ? "pass" : "fail", "9"});

      std::vector<double> log_s1;
      for (double v : step1_stat) log_s1.push_back(std::log(v));
      const double s1_slope = detail::regression_slope(log_T, log_s1);
      const double lam = hv < 0.5 ? step1_lambda(hv) : 0.0;
      const double bound = (hv > 0.5 ? hv - 1.0 : 2.0 * hv + lam - 1.0) + 0.1;
      std::ostringstream param;
      param << "p=" << cfg.p;
      if (hv < 0.5) param << ",lambda=" << format_full(lam);
      out.rows.push_back({"step1_lp_slope", model_id, hv, param.str(), s1_slope,
                          0.0, s1_slope <= bound ? "pass" : "fail", "9"});
    }
  }

  out.rows.push_back({"longest_cell_within_runtime_budget", "", 0.0,
                      longest_cell, 0.0, 0.0,
                      longest_cell_seconds < 600.0 ? "pass" : "fail", "9"});
  out.timings.emplace_back("longest_cell_seconds", longest_cell_seconds);
  return out;
}

// ---------------------------------------------------------------------------
// ergodic campaign
// ---------------------------------------------------------------------------

inline CampaignResult run_ergodic(const ExperimentConfig& cfg) {
  CampaignResult out;
  out.experiment = "ergodic";
  out.detail_header = {"model", "H", "statistic", "value"};
  const ScalarObservable square = make_scalar_observable("square");

  for (std::size_t hi = 0; hi < cfg.h_list.size(); ++hi) {
    const double hv = cfg.h_list[hi];
    const HurstParameter h = HurstParameter::estimation(hv);
    const DriftModel model = detail::config_model(cfg, "fou");

    const int n_single = static_cast<int>(std::lround(cfg.t_single / cfg.dt));
    const TimeGrid grid_single(n_single, cfg.dt);
    const FbmPath noise = sample_fbm(grid_single, h, 1,
                                     stream_seed(cfg.seed, 9000 + hi),
                                     FbmMethod::circulant);
    const SolutionPath path = integrate_euler(
        model, noise, Eigen::VectorXd::Constant(model.m, cfg.x0));
    const double time_avg = ergodic_average(square, path);

    const int n_cross = static_cast<int>(std::lround(cfg.t_cross / cfg.dt));
    const TimeGrid grid_cross(n_cross, cfg.dt);
    const FbmSampler sampler(grid_cross, h, FbmMethod::circulant);
    std::vector<double> endpoint(cfg.cross_paths);
    const std::uint64_t cross_seed = stream_seed(cfg.seed, 9100 + hi);
    detail::parallel_for(cfg.cross_paths, cfg.workers, [&](int rep) {
      const FbmPath w = sampler.sample(1, stream_seed(cross_seed, rep));
      const SolutionPath p = integrate_euler(
          model, w, Eigen::VectorXd::Constant(model.m, cfg.x0));
      endpoint[rep] = square.value(p.at(n_cross));
    });
    double s1 = 0, s2 = 0;
    for (double v : endpoint) {
      s1 += v;
      s2 += v * v;
    }
    const double cross_mean = s1 / cfg.cross_paths;
    const double cross_se = std::sqrt(
        (s2 / cfg.cross_paths - cross_mean * cross_mean) / cfg.cross_paths);

    const double rel_gap = std::abs(time_avg - cross_mean) / cross_mean;
    out.rows.push_back(
        {"time_average_x2", "fou", hv, "T=" + format_full(cfg.t_single),
         time_avg, 0.0, "info", ""});
    out.rows.push_back({"cross_path_mean_x2", "fou", hv,
                        "T=" + format_full(cfg.t_cross), cross_mean, cross_se,
                        "info", ""});
    out.rows.push_back({"time_vs_cross_rel_gap", "fou", hv, "", rel_gap, 0.0,
                        rel_gap <= cfg.ergodic_tol ? "pass" : "fail", "8"});
    if (hv == 0.5) {
      const double dev = std::abs(time_avg - 0.5);
      out.rows.push_back({"brownian_stationary_variance_dev", "fou", hv,
                          "analytic=0.5", dev, 0.0,
                          dev <= 0.05 ? "pass" : "fail", "8"});
    }
    out.detail_rows.push_back(
        {"fou", format_full(hv), "time_average_x2", format_full(time_avg)});
    out.detail_rows.push_back(
        {"fou", format_full(hv), "cross_path_mean_x2", format_full(cross_mean)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// moment-scaling campaign
// ---------------------------------------------------------------------------

inline CampaignResult run_moment_scaling(const ExperimentConfig& cfg) {
  CampaignResult out;
  out.experiment = "moments";
  out.detail_header = {"model", "H", "statistic", "param", "value"};

  for (double hv : cfg.h_list) {
    const HurstParameter h = HurstParameter::estimation(hv);

    // Wiener surrogate u = 1: E|Z_T|^2 = T^{2H} exactly
    {
      std::vector<double> log_T, log_m;
      for (double T : cfg.horizons) {
        const TimeGrid grid(16, T / 16.0);
        const FbmSampler sampler(grid, h, FbmMethod::cholesky);
        const std::uint64_t s =
            stream_seed(cfg.seed, 100 + static_cast<int>(1000 * hv));
        std::vector<double> sq(cfg.wiener_reps);
        detail::parallel_for(cfg.wiener_reps, cfg.workers, [&](int rep) {
          const FbmPath w = sampler.sample(1, stream_seed(s, rep));
          const double bt = w.values(0, 16);
          sq[rep] = bt * bt;
        });
        double acc = 0;
        for (double v : sq) acc += v;
        log_T.push_back(std::log(T));
        log_m.push_back(std::log(acc / cfg.wiener_reps));
        out.detail_rows.push_back({"wiener", format_full(hv), "E|Z_T|^2",
                                   "T=" + format_full(T),
                                   format_full(acc / cfg.wiener_reps)});
      }
      const double slope = detail::regression_slope(log_T, log_m);
      out.rows.push_back({"wiener_moment_slope", "wiener", hv, "p=2", slope,
                          0.0,
                          std::abs(slope - 2.0 * hv) <= 0.02 ? "pass" : "fail",
                          ""});
    }

    // Z_{g,T} for bounded g along the fOU path
    {
      const DriftModel model = detail::config_model(cfg, "fou");
      const VectorObservable g = make_observable("bounded", model.m, model.d);
      std::vector<double> log_T, log_m;
      for (double T : cfg.horizons) {
        const int n = static_cast<int>(std::lround(T / cfg.dt));
        const TimeGrid grid(n, cfg.dt);
        const FbmSampler sampler(grid, h, FbmMethod::circulant);
        const std::vector<int> pivots =
            make_pivots(n, std::min(cfg.pivots, n));
        const std::uint64_t s =
            stream_seed(cfg.seed, 200 + static_cast<int>(1000 * hv));
        std::vector<double> sq(cfg.reps);
        detail::parallel_for(cfg.reps, cfg.workers, [&](int rep) {
          const FbmPath noise = sampler.sample(1, stream_seed(s, rep));
          const SolutionPath path = integrate_euler(
              model, noise, Eigen::VectorXd::Constant(model.m, cfg.x0));
          const Eigen::VectorXd fwd =
              forward_noise_cells(model, path, noise, {g}).row(0);
          const Eigen::VectorXd corr =
              divergence_correction_cells(model, path, {g}, h, pivots).row(0);
          const double z = fwd.sum() - corr.sum();
          sq[rep] = z * z;
        });
        double acc = 0;
        for (double v : sq) acc += v;
        log_T.push_back(std::log(T));
        log_m.push_back(std::log(acc / cfg.reps));
        out.detail_rows.push_back({"fou", format_full(hv), "E|Z_gT|^2",
                                   "T=" + format_full(T),
                                   format_full(acc / cfg.reps)});
      }
      const double slope = detail::regression_slope(log_T, log_m);
      if (hv > 0.5) {
        out.rows.push_back({"zg_moment_slope", "fou", hv, "p=2,g=bounded",
                            slope, 0.0,
                            slope <= 2.0 * hv + cfg.slope_tol ? "pass" : "fail",
                            ""});
      } else {
        const double envelope = 2.0 * (2.0 * hv + step1_lambda(hv));
        std::ostringstream param;
        param << "p=2,g=bounded,envelope=" << format_full(envelope);
        out.rows.push_back({"zg_moment_slope", "fou", hv, param.str(), slope,
                            0.0, slope <= envelope + cfg.slope_tol ? "pass"
                                                                   : "fail",
                            ""});
      }
    }

    // Hoelder continuity of the path itself (criterion 7)
    {
      const DriftModel model = detail::config_model(cfg, "fou");
      const TimeGrid grid(cfg.n_steps, 1.0 / cfg.n_steps);
      const FbmSampler sampler(grid, h, FbmMethod::circulant);
      const std::vector<int> lags = {4, 8, 16, 32, 64};
      const int anchor = cfg.n_steps / 2;
      const std::uint64_t s =
          stream_seed(cfg.seed, 300 + static_cast<int>(1000 * hv));
      std::vector<std::vector<double>> acc(cfg.reps,
                                           std::vector<double>(lags.size()));
      detail::parallel_for(cfg.reps, cfg.workers, [&](int rep) {
        const FbmPath noise = sampler.sample(1, stream_seed(s, rep));
        const SolutionPath path = integrate_euler(
            model, noise, Eigen::VectorXd::Constant(model.m, cfg.x0));
        for (std::size_t k = 0; k < lags.size(); ++k) {
          const double diff =
              (path.at(anchor + lags[k]) - path.at(anchor)).norm();
          acc[rep][k] = diff * diff;
        }
      });
      std::vector<double> log_lag, log_m;
      for (std::size_t k = 0; k < lags.size(); ++k) {
        double m = 0;
        for (int rep = 0; rep < cfg.reps; ++rep) m += acc[rep][k];
        log_lag.push_back(std::log(lags[k] * grid.dt));
        log_m.push_back(std::log(m / cfg.reps));
      }
      const double slope = detail::regression_slope(log_lag, log_m);
      out.rows.push_back(
          {"holder_moment_slope", "fou", hv, "p=2", slope, 0.0,
           std::abs(slope - 2.0 * hv) <= cfg.slope_tol ? "pass" : "fail",
           "7"});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// maximal-inequality campaign
// ---------------------------------------------------------------------------

inline CampaignResult run_maximal_inequality(const ExperimentConfig& cfg) {
  CampaignResult out;
  out.experiment = "maximal";
  out.detail_header = {"model", "H", "statistic", "param", "value"};

  const double total = cfg.window_anchor +
                       *std::max_element(cfg.window_widths.begin(),
                                         cfg.window_widths.end());
  const TimeGrid grid(cfg.n_steps, total / cfg.n_steps);
  const int a_node =
      static_cast<int>(std::lround(cfg.window_anchor / grid.dt));

  for (double hv : cfg.h_list) {
    const HurstParameter h = HurstParameter::estimation(hv);
    const FbmSampler sampler(grid, h, FbmMethod::circulant);

    // exact self-similar case u = 1
    {
      const std::uint64_t s =
          stream_seed(cfg.seed, 400 + static_cast<int>(1000 * hv));
      std::vector<std::vector<double>> sups(
          cfg.reps, std::vector<double>(cfg.window_widths.size()));
      detail::parallel_for(cfg.reps, cfg.workers, [&](int rep) {
        const FbmPath noise = sampler.sample(1, stream_seed(s, rep));
        for (std::size_t k = 0; k < cfg.window_widths.size(); ++k) {
          const int b_node = a_node + static_cast<int>(std::lround(
                                          cfg.window_widths[k] / grid.dt));
          double sup = 0.0;
          for (int i = a_node; i <= b_node; ++i)
            sup = std::max(sup, std::abs(noise.values(0, i) -
                                         noise.values(0, a_node)));
          sups[rep][k] = sup;
        }
      });
      std::vector<double> log_w, log_m, means;
      for (std::size_t k = 0; k < cfg.window_widths.size(); ++k) {
        double m = 0;
        for (int rep = 0; rep < cfg.reps; ++rep)
          m += std::pow(sups[rep][k], 2.0);
        means.push_back(m / cfg.reps);
        log_w.push_back(std::log(cfg.window_widths[k]));
        log_m.push_back(std::log(means.back()));
        out.detail_rows.push_back({"wiener", format_full(hv), "E_sup_p2",
                                   "width=" + format_full(cfg.window_widths[k]),
                                   format_full(means.back())});
      }
      const double slope = detail::regression_slope(log_w, log_m);
      out.rows.push_back({"sup_slope_unit_integrand", "wiener", hv, "p=2",
                          slope, 0.0,
                          std::abs(slope - 2.0 * hv) <= 0.1 ? "pass" : "fail",
                          "10"});
      bool monotone = true;
      for (std::size_t k = 0; k + 1 < means.size(); ++k)
        if (means[k] > means[k + 1]) monotone = false;
      out.rows.push_back({"sup_monotone_in_width", "wiener", hv, "", 0.0, 0.0,
                          monotone ? "pass" : "fail", ""});
    }

    // u = g(X) along the fOU path
    {
      const DriftModel model = detail::config_model(cfg, "fou");
      const VectorObservable g = make_observable("bounded", model.m, model.d);
      const std::vector<int> pivots =
          make_pivots(cfg.n_steps, std::min(cfg.pivots, cfg.n_steps));
      const std::uint64_t s =
          stream_seed(cfg.seed, 500 + static_cast<int>(1000 * hv));
      std::vector<std::vector<double>> sups(
          cfg.reps, std::vector<double>(cfg.window_widths.size()));
      detail::parallel_for(cfg.reps, cfg.workers, [&](int rep) {
        const FbmPath noise = sampler.sample(1, stream_seed(s, rep));
        const SolutionPath path = integrate_euler(
            model, noise, Eigen::VectorXd::Constant(model.m, cfg.x0));
        const Eigen::VectorXd fwd =
            forward_noise_cells(model, path, noise, {g}).row(0);
        const Eigen::VectorXd corr =
            divergence_correction_cells(model, path, {g}, h, pivots).row(0);
        for (std::size_t k = 0; k < cfg.window_widths.size(); ++k) {
          const int b_node = a_node + static_cast<int>(std::lround(
                                          cfg.window_widths[k] / grid.dt));
          sups[rep][k] = window_sup_divergence(fwd, corr, a_node, b_node);
        }
      });
      for (int pexp : {2, cfg.p}) {
        std::vector<double> log_w, log_m;
        for (std::size_t k = 0; k < cfg.window_widths.size(); ++k) {
          double m = 0;
          for (int rep = 0; rep < cfg.reps; ++rep)
            m += std::pow(sups[rep][k], pexp);
          log_w.push_back(std::log(cfg.window_widths[k]));
          log_m.push_back(std::log(m / cfg.reps));
        }
        const double slope = detail::regression_slope(log_w, log_m);
        std::ostringstream param;
        param << "p=" << pexp << ",g=bounded";
        const bool is_main = pexp == 2;
        out.rows.push_back(
            {"sup_slope_state_integrand", "fou", hv, param.str(), slope, 0.0,
             slope <= pexp * hv + 0.2 ? "pass" : "fail", is_main ? "10" : ""});
        if (pexp == cfg.p) break;
      }
    }
  }

  // Borel-Cantelli proxy: unit windows along one long horizon, H > 1/2
  {
    const double hv = 0.7;
    const HurstParameter h(hv);
    const int windows = 8;
    const int per = cfg.n_steps / windows;
    const TimeGrid wgrid(cfg.n_steps, double(windows) / cfg.n_steps);
    const FbmSampler sampler(wgrid, h, FbmMethod::circulant);
    const DriftModel model = detail::config_model(cfg, "fou");
    const VectorObservable g = make_observable("bounded", model.m, model.d);
    const std::vector<int> pivots =
        make_pivots(cfg.n_steps, std::min(cfg.pivots, cfg.n_steps));
    const std::uint64_t s = stream_seed(cfg.seed, 600);
    const int reps = std::max(50, cfg.reps / 2);
    std::vector<std::vector<double>> sup4(reps, std::vector<double>(windows));
    detail::parallel_for(reps, cfg.workers, [&](int rep) {
      const FbmPath noise = sampler.sample(1, stream_seed(s, rep));
      const SolutionPath path = integrate_euler(
          model, noise, Eigen::VectorXd::Constant(model.m, cfg.x0));
      const Eigen::VectorXd fwd =
          forward_noise_cells(model, path, noise, {g}).row(0);
      const Eigen::VectorXd corr =
          divergence_correction_cells(model, path, {g}, h, pivots).row(0);
      for (int k = 0; k < windows; ++k)
        sup4[rep][k] =
            std::pow(window_sup_divergence(fwd, corr, k * per, (k + 1) * per),
                     4.0);
    });
    std::vector<double> moment(windows, 0.0);
    for (int k = 0; k < windows; ++k) {
      for (int rep = 0; rep < reps; ++rep) moment[k] += sup4[rep][k];
      moment[k] /= reps;
    }
    const double max_m = *std::max_element(moment.begin(), moment.end());
    const double med_m = detail::median(moment);
    out.rows.push_back({"unit_window_sup_moment_ratio", "fou", hv,
                        "p=4,windows=8", max_m / med_m, 0.0,
                        max_m <= 2.0 * med_m ? "pass" : "fail", ""});
  }
  return out;
}

// ---------------------------------------------------------------------------
// decay campaign
// ---------------------------------------------------------------------------

inline CampaignResult run_decay_campaign(const ExperimentConfig& cfg) {
  CampaignResult out;
  out.experiment = "decay";
  out.detail_header = {"model", "H", "statistic", "value"};

  for (const std::string& model_id : cfg.models) {
    const DriftModel model = detail::config_model(cfg, model_id);
    for (double hv : cfg.h_list) {
      const HurstParameter h = HurstParameter::estimation(hv);
      const TimeGrid grid(cfg.n_steps, cfg.dt);
      const FbmSampler sampler(grid, h, FbmMethod::circulant);
      const std::uint64_t s =
          stream_seed(cfg.seed, 700 + static_cast<int>(1000 * hv));

      double worst = 0.0;
      int violations = 0;
      const int reps = std::min(cfg.reps, 20);
      std::vector<double> ratios(reps);
      std::vector<int> viol(reps);
      detail::parallel_for(reps, cfg.workers, [&](int rep) {
        const FbmPath noise = sampler.sample(model.d, stream_seed(s, rep));
        const SolutionPath path = integrate_euler(
            model, noise, Eigen::VectorXd::Constant(model.m, cfg.x0));
        const MalliavinGrid mg =
            propagate_derivative(model, path, cfg.pivots);
        const DecayReport rep_d = decay_bound_report(mg, model);
        ratios[rep] = rep_d.max_ratio;
        viol[rep] = rep_d.within_slack ? 0 : 1;
      });
      for (int rep = 0; rep < reps; ++rep) {
        worst = std::max(worst, ratios[rep]);
        violations += viol[rep];
      }
      out.rows.push_back({"decay_bound_max_ratio", model_id, hv,
                          "slack=" + format_full(std::exp(2.0 * cfg.dt * model.L1)),
                          worst, 0.0, violations == 0 ? "pass" : "fail", "6"});
      out.detail_rows.push_back({model_id, format_full(hv),
                                 "decay_bound_max_ratio", format_full(worst)});

      if (model_id == "fou" || model_id == "linear") {
        // closed form sigma e^{-theta (t-s)}: halving dt halves the error
        double errs[2];
        for (int lvl = 0; lvl < 2; ++lvl) {
          const int n = cfg.n_steps << lvl;
          const TimeGrid g2(n, cfg.dt * cfg.n_steps / n);
          const FbmPath noise = sample_fbm(g2, h, 1, stream_seed(s, 999));
          const SolutionPath path = integrate_euler(
              model, noise, Eigen::VectorXd::Constant(model.m, cfg.x0));
          const MalliavinGrid mg = propagate_derivative(model, path, 64);
          double sup = 0.0;
          const double sg = model.sigma(0, 0), th = model.theta(0);
          for (std::size_t j = 0; j < mg.pivots.size(); ++j) {
            const double sj = g2.node(mg.pivots[j]);
            for (int i = mg.pivots[j]; i <= n; i += 11) {
              const double want = sg * std::exp(-th * (g2.node(i) - sj));
              sup = std::max(sup, std::abs(mg.at(j, i)(0, 0) - want));
            }
          }
          errs[lvl] = sup;
        }
        out.rows.push_back({"fou_derivative_error_halving", model_id, hv,
                            "coarse=" + format_full(errs[0]),
                            errs[1] / errs[0], 0.0,
                            errs[1] <= 0.65 * errs[0] ? "pass" : "fail", "6"});
      }

      const IncrementRatioReport inc = derivative_increments_check(
          model, h, grid, std::min(cfg.pivots, 64), std::min(cfg.reps, 40), 2,
          stream_seed(s, 777));
      const char* names[3] = {"increment_ratio_shift_s",
                              "increment_ratio_shift_t",
                              "increment_ratio_double"};
      const double vals[3] = {inc.max_ratio_shift_s, inc.max_ratio_shift_t,
                              inc.max_ratio_double};
      for (int k = 0; k < 3; ++k) {
        out.rows.push_back({names[k], model_id, hv, "p=2", vals[k], 0.0,
                            vals[k] <= cfg.ratio_bound ? "pass" : "fail",
                            ""});
        out.detail_rows.push_back(
            {model_id, format_full(hv), names[k], format_full(vals[k])});
      }
      if (model_id == "fou" && hv > 0.5) {
        out.rows.push_back({"lipschitz_in_t_slope", model_id, hv, "",
                            inc.lipschitz_slope, 0.0,
                            std::abs(inc.lipschitz_slope - 1.0) <= 0.1
                                ? "pass"
                                : "fail",
                            ""});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// norm-inequality campaign
// ---------------------------------------------------------------------------

inline CampaignResult run_norm_inequalities(const ExperimentConfig& cfg) {
  CampaignResult out;
  out.experiment = "norms";
  out.detail_header = {"H", "statistic", "param", "value"};
  GaussianStream stream(cfg.seed);

  std::vector<double> rough, smooth;
  for (double hv : cfg.h_list) {
    if (hv < 0.5) rough.push_back(hv);
    if (hv > 0.5) smooth.push_back(hv);  // neither norm exists at H = 1/2
  }

  for (double hv : rough) {
    const HurstParameter h(hv);
    double max_ratio = 0.0;
    int skipped = 0;
    for (int n : cfg.grid_sizes) {
      const TimeGrid grid(n, 1.0 / n);
      for (int rep = 0; rep < cfg.per_grid; ++rep) {
        const StepFunction phi = random_step_function(grid, 1, stream);
        const double den = weighted_holder_norm_sq(phi, h, 1.0);
        if (den <= 0.0) {  // zero function guard
          ++skipped;
          continue;
        }
        max_ratio = std::max(max_ratio, hilbert_norm_sq(phi, h) / den);
      }
    }
    out.rows.push_back({"hnorm_over_window_norm_max", "", hv,
                        "set=" + std::to_string(cfg.per_grid * 3), max_ratio,
                        0.0,
                        std::isfinite(max_ratio) && max_ratio <= cfg.ratio_bound
                            ? "pass"
                            : "fail",
                        ""});
    out.detail_rows.push_back({format_full(hv), "hnorm_over_window_norm_max",
                               "", format_full(max_ratio)});
    out.rows.push_back({"zero_functions_skipped", "", hv, "", double(skipped),
                        0.0, "info", ""});
  }

  for (double hv : smooth) {
    const HurstParameter h(hv);
    double max_ratio = 0.0;
    double max_nonneg_dev = 0.0;
    for (int n : cfg.grid_sizes) {
      const TimeGrid grid(n, 1.0 / n);
      for (int rep = 0; rep < cfg.per_grid; ++rep) {
        const StepFunction phi = random_step_function(grid, 1, stream);
        const double den = lp_norm(phi, 1.0 / hv);
        if (den <= 0.0) continue;
        max_ratio = std::max(max_ratio, std::sqrt(abs_norm_sq(phi, h)) / den);
        // componentwise-nonnegative variant: |phi| norms coincide
        const StepFunction pos = phi.componentwise_abs();
        const double a = abs_norm_sq(pos, h);
        const double b = hilbert_norm_sq(pos, h);
        max_nonneg_dev = std::max(max_nonneg_dev, std::abs(a - b) / b);
      }
    }
    out.rows.push_back({"absnorm_over_lp_max", "", hv,
                        "set=" + std::to_string(cfg.per_grid * 3), max_ratio,
                        0.0,
                        std::isfinite(max_ratio) && max_ratio <= cfg.ratio_bound
                            ? "pass"
                            : "fail",
                        ""});
    out.rows.push_back({"nonnegative_norms_coincide_dev", "", hv, "",
                        max_nonneg_dev, 0.0,
                        max_nonneg_dev <= 1e-12 ? "pass" : "fail", ""});
    out.detail_rows.push_back({format_full(hv), "absnorm_over_lp_max", "",
                               format_full(max_ratio)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// dispatch and reporting
// ---------------------------------------------------------------------------

inline CampaignResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.experiment == "consistency") return run_consistency(cfg);
  if (cfg.experiment == "ergodic") return run_ergodic(cfg);
  if (cfg.experiment == "moments") return run_moment_scaling(cfg);
  if (cfg.experiment == "maximal") return run_maximal_inequality(cfg);
  if (cfg.experiment == "decay") return run_decay_campaign(cfg);
  if (cfg.experiment == "norms") return run_norm_inequalities(cfg);
  throw std::invalid_argument("unknown experiment: " + cfg.experiment);
}

/// Writes <exp>_rows.csv (per-replication detail), <exp>_summary.csv and
/// <exp>_summary.json (statistics + metadata), and <exp>_verdicts.json.
/// The timestamp lives only in the summary JSON metadata; everything else is
/// byte-stable for identical config + seed.
inline void write_reports(const ExperimentConfig& cfg,
                          const CampaignResult& result,
                          const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string base = out_dir + "/" + result.experiment;
  const std::string config_hash = hex64(fnv1a(cfg.canonical_text()));

  write_csv(base + "_rows.csv", result.detail_header, result.detail_rows);

  std::vector<std::vector<std::string>> summary_rows;
  for (const ReportRow& r : result.rows)
    summary_rows.push_back({r.statistic, r.model, format_full(r.h), r.param,
                            format_full(r.value), format_full(r.std_error),
                            r.verdict, r.criterion});
  write_csv(base + "_summary.csv",
            {"statistic", "model", "h", "param", "value", "std_error",
             "verdict", "criterion"},
            summary_rows);

  nlohmann::json summary;
  summary["experiment"] = result.experiment;
  summary["metadata"] = {
      {"config_hash", config_hash},
      {"library_version", kLibraryVersion},
      {"timestamp",
       std::chrono::duration_cast<std::chrono::seconds>(
           std::chrono::system_clock::now().time_since_epoch())
           .count()}};
  for (const auto& [name, secs] : result.timings)
    summary["metadata"][name] = secs;
  summary["config"] = cfg.canonical_text();
  summary["rows"] = nlohmann::json::array();
  for (const ReportRow& r : result.rows)
    summary["rows"].push_back({{"statistic", r.statistic},
                               {"model", r.model},
                               {"h", r.h},
                               {"param", r.param},
                               {"value", r.value},
                               {"std_error", r.std_error},
                               {"verdict", r.verdict},
                               {"criterion", r.criterion}});
  {
    std::ofstream js(base + "_summary.json");
    js << summary.dump(2) << "\n";
  }

  nlohmann::json verdicts;
  verdicts["experiment"] = result.experiment;
  verdicts["config_hash"] = config_hash;
  verdicts["pass"] = result.pass();
  verdicts["criteria"] = nlohmann::json::array();
  for (const ReportRow& r : result.rows) {
    if (r.verdict == "info") continue;
    verdicts["criteria"].push_back({{"criterion", r.criterion},
                                    {"statistic", r.statistic},
                                    {"model", r.model},
                                    {"h", r.h},
                                    {"param", r.param},
                                    {"value", r.value},
                                    {"pass", r.verdict == "pass"}});
  }
  {
    std::ofstream js(base + "_verdicts.json");
    js << verdicts.dump(2) << "\n";
  }
}

}  // namespace fsde
