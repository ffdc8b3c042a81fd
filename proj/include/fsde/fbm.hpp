#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <fftw3.h>

#include "fsde/grid.hpp"
#include "fsde/rng.hpp"

namespace fsde {

enum class HurstRegime { rough, brownian, smooth };

/**
 * Validated Hurst parameter. Covariance primitives accept any H in (0,1);
 * estimation workflows construct through `estimation`, which restricts to
 * (1/4, 1), the range the consistency result covers.
 */
class HurstParameter {
 public:
  explicit HurstParameter(double h) : h_(h) {
    if (!(h > 0.0 && h < 1.0))
      throw std::domain_error("HurstParameter: H must lie in (0,1)");
  }

  static HurstParameter estimation(double h) {
    if (!(h > 0.25 && h < 1.0))
      throw std::domain_error(
          "HurstParameter: estimation workflows require H in (1/4, 1)");
    return HurstParameter(h);
  }

  double value() const { return h_; }
  double two_h() const { return 2.0 * h_; }

  HurstRegime regime() const {
    if (h_ < 0.5) return HurstRegime::rough;
    if (h_ > 0.5) return HurstRegime::smooth;
    return HurstRegime::brownian;
  }

 private:
  double h_;
};

/// fBm covariance R(s,t) = (|t|^{2H} + |s|^{2H} - |t-s|^{2H}) / 2.
inline double covariance(double s, double t, const HurstParameter& h) {
  if (s < 0.0 || t < 0.0)
    throw std::domain_error("covariance: times must be nonnegative");
  const double hh = h.two_h();
  return 0.5 *
         (std::pow(t, hh) + std::pow(s, hh) - std::pow(std::abs(t - s), hh));
}

/**
 * Exact covariance of grid increments. Uniform spacing makes the matrix
 * Toeplitz, so only the first row is stored; entry (i,j) is
 * R(t_{i+1},t_{j+1}) - R(t_{i+1},t_j) - R(t_i,t_{j+1}) + R(t_i,t_j).
 */
class IncrementCovariance {
 public:
  IncrementCovariance(const TimeGrid& grid, const HurstParameter& h)
      : grid_(grid) {
    const double hh = h.two_h();
    const double scale = std::pow(grid.dt, hh);
    row_.resize(grid.n_steps);
    for (int k = 0; k < grid.n_steps; ++k) {
      if (k == 0) {
        row_[k] = scale;
      } else {
        row_[k] = 0.5 * scale *
                  (std::pow(k + 1.0, hh) - 2.0 * std::pow(double(k), hh) +
                   std::pow(k - 1.0, hh));
      }
    }
  }

  const TimeGrid& grid() const { return grid_; }
  double lag(int k) const { return row_[k]; }
  double operator()(int i, int j) const { return row_[std::abs(i - j)]; }
  const std::vector<double>& toeplitz_row() const { return row_; }

  Eigen::MatrixXd dense() const {
    const int n = grid_.n_steps;
    Eigen::MatrixXd g(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) g(i, j) = row_[std::abs(i - j)];
    return g;
  }

 private:
  TimeGrid grid_;
  std::vector<double> row_;
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex mu;
  return mu;
}

/**
 * Circulant embedding of the increment covariance (Davies-Harte). The
 * embedding of fractional Gaussian noise is nonnegative definite for every H,
 * so failure indicates either rounding (clamped within tolerance) or a
 * covariance that is not an fGn row.
 *
 * apply() is a fixed linear map from 2n iid standard normals to one exact
 * fGn sample of length n; it is const and safe to call concurrently.
 */
class CirculantEmbedding {
 public:
  CirculantEmbedding(const TimeGrid& grid, const HurstParameter& h,
                     double rel_tol = 1e-9)
      : n_(grid.n_steps), size_(2 * grid.n_steps) {
    IncrementCovariance cov(grid, h);
    // row extended to lag n: the embedding needs lags 0..n.
    const double hh = h.two_h();
    const double scale = std::pow(grid.dt, hh);
    std::vector<double> r(n_ + 1);
    for (int k = 0; k <= n_; ++k)
      r[k] = (k == 0) ? scale
                      : 0.5 * scale *
                            (std::pow(k + 1.0, hh) -
                             2.0 * std::pow(double(k), hh) +
                             std::pow(k - 1.0, hh));

    std::vector<std::complex<double>> c(size_), lam(size_);
    for (int k = 0; k <= n_; ++k) c[k] = r[k];
    for (int k = n_ + 1; k < size_; ++k) c[k] = r[size_ - k];

    {
      std::lock_guard<std::mutex> lock(fftw_planner_mutex());
      plan_ = fftw_plan_dft_1d(
          size_, reinterpret_cast<fftw_complex*>(c.data()),
          reinterpret_cast<fftw_complex*>(lam.data()), FFTW_FORWARD,
          FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    fftw_execute_dft(plan_, reinterpret_cast<fftw_complex*>(c.data()),
                     reinterpret_cast<fftw_complex*>(lam.data()));

    double max_eig = 0.0;
    min_eig_ = std::numeric_limits<double>::infinity();
    for (int k = 0; k < size_; ++k) {
      max_eig = std::max(max_eig, lam[k].real());
      min_eig_ = std::min(min_eig_, lam[k].real());
    }
    valid_ = min_eig_ >= -rel_tol * max_eig;
    scaled_.resize(size_);
    if (valid_) {
      const double m = static_cast<double>(size_);
      for (int k = 0; k < size_; ++k) {
        const double ev = std::max(lam[k].real(), 0.0);
        // k = 0 and k = n carry a real normal; interior bins a complex one.
        scaled_[k] = (k == 0 || k == n_) ? std::sqrt(ev / m)
                                         : std::sqrt(ev / (2.0 * m));
      }
    }
  }

  ~CirculantEmbedding() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
  }

  CirculantEmbedding(const CirculantEmbedding&) = delete;
  CirculantEmbedding& operator=(const CirculantEmbedding&) = delete;

  bool valid() const { return valid_; }
  double min_eigenvalue() const { return min_eig_; }
  int sample_length() const { return n_; }
  int noise_length() const { return size_; }

  // xi holds 2n iid standard normals.
  std::vector<double> apply(const std::vector<double>& xi) const {
    if (static_cast<int>(xi.size()) != size_)
      throw std::invalid_argument("CirculantEmbedding: need 2n normals");
    if (!valid_)
      throw std::runtime_error(embedding_error());
    std::vector<std::complex<double>> v(size_), w(size_);
    v[0] = scaled_[0] * xi[0];
    v[n_] = scaled_[n_] * xi[1];
    for (int k = 1; k < n_; ++k) {
      const std::complex<double> z(xi[2 * k], xi[2 * k + 1]);
      v[k] = scaled_[k] * z;
      v[size_ - k] = std::conj(v[k]);
    }
    fftw_execute_dft(plan_,
                     reinterpret_cast<fftw_complex*>(v.data()),
                     reinterpret_cast<fftw_complex*>(w.data()));
    std::vector<double> out(n_);
    for (int k = 0; k < n_; ++k) out[k] = w[k].real();
    return out;
  }

  std::vector<double> sample(GaussianStream& g) const {
    std::vector<double> xi(size_);
    for (double& x : xi) x = g.normal();
    return apply(xi);
  }

  std::string embedding_error() const {
    std::ostringstream os;
    os << "circulant embedding is not nonnegative definite; most negative "
          "eigenvalue "
       << min_eig_;
    return os.str();
  }

 private:
  int n_;
  int size_;
  bool valid_ = false;
  double min_eig_ = 0.0;
  std::vector<double> scaled_;
  fftw_plan plan_;
};

/// Dense Cholesky factor of the increment covariance; exact for any n where
/// the O(n^2) memory is affordable.
class CholeskyFactor {
 public:
  CholeskyFactor(const TimeGrid& grid, const HurstParameter& h) {
    Eigen::LLT<Eigen::MatrixXd> llt(IncrementCovariance(grid, h).dense());
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("CholeskyFactor: increment covariance not SPD");
    L_ = llt.matrixL();
  }

  int sample_length() const { return static_cast<int>(L_.rows()); }

  std::vector<double> apply(const std::vector<double>& xi) const {
    const int n = sample_length();
    if (static_cast<int>(xi.size()) != n)
      throw std::invalid_argument("CholeskyFactor: need n normals");
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(xi.data(), n);
    Eigen::VectorXd w = L_ * v;
    return std::vector<double>(w.data(), w.data() + n);
  }

  std::vector<double> sample(GaussianStream& g) const {
    std::vector<double> xi(sample_length());
    for (double& x : xi) x = g.normal();
    return apply(xi);
  }

  const Eigen::MatrixXd& matrix() const { return L_; }

 private:
  Eigen::MatrixXd L_;
};

}  // namespace detail

enum class FbmMethod { circulant, cholesky, auto_select };

inline std::string to_string(FbmMethod m) {
  switch (m) {
    case FbmMethod::circulant: return "circulant";
    case FbmMethod::cholesky: return "cholesky";
    default: return "auto";
  }
}

inline FbmMethod fbm_method_from_string(const std::string& s) {
  if (s == "circulant") return FbmMethod::circulant;
  if (s == "cholesky") return FbmMethod::cholesky;
  if (s == "auto") return FbmMethod::auto_select;
  throw std::invalid_argument("unknown fbm method: " + s);
}

/// One d-dimensional fBm path on a uniform grid. Components are independent;
/// values.col(0) is exactly zero.
struct FbmPath {
  TimeGrid grid;
  int d = 1;
  std::uint64_t seed = 0;
  FbmMethod method = FbmMethod::auto_select;
  Eigen::MatrixXd values;  // d x (n_steps + 1)

  Eigen::MatrixXd increments() const {
    return values.rightCols(grid.n_steps) - values.leftCols(grid.n_steps);
  }
  double increment(int comp, int i) const {
    return values(comp, i + 1) - values(comp, i);
  }
};

/**
 * Sampler for d-dimensional fBm with exact increment covariance. Component j
 * of a path draws from the stream (seed, j), so output is deterministic in
 * (grid, h, d, seed, method) and independent of sampling order elsewhere.
 *
 * auto_select uses Cholesky for small n and the circulant embedding
 * otherwise, falling back to Cholesky if the embedding fails and the dense
 * factor is affordable.
 */
class FbmSampler {
 public:
  static constexpr int kCholeskyAutoLimit = 64;
  static constexpr int kCholeskyFallbackLimit = 4096;

  FbmSampler(const TimeGrid& grid, const HurstParameter& h,
             FbmMethod method = FbmMethod::auto_select)
      : grid_(grid), h_(h), requested_(method) {
    resolved_ = resolve(method, grid.n_steps);
    if (resolved_ == FbmMethod::circulant) {
      circulant_ = std::make_unique<detail::CirculantEmbedding>(grid, h);
      if (!circulant_->valid()) {
        if (method == FbmMethod::auto_select &&
            grid.n_steps <= kCholeskyFallbackLimit) {
          resolved_ = FbmMethod::cholesky;
        } else {
          throw std::runtime_error(circulant_->embedding_error());
        }
      }
    }
    if (resolved_ == FbmMethod::cholesky)
      cholesky_ = std::make_unique<detail::CholeskyFactor>(grid, h);
  }

  FbmMethod resolved_method() const { return resolved_; }

  FbmPath sample(int d, std::uint64_t seed) const {
    FbmPath path;
    path.grid = grid_;
    path.d = d;
    path.seed = seed;
    path.method = resolved_;
    path.values = Eigen::MatrixXd::Zero(d, grid_.n_steps + 1);
    for (int j = 0; j < d; ++j) {
      GaussianStream g(stream_seed(seed, static_cast<std::uint64_t>(j)));
      const std::vector<double> inc = (resolved_ == FbmMethod::circulant)
                                          ? circulant_->sample(g)
                                          : cholesky_->sample(g);
      double acc = 0.0;
      for (int i = 0; i < grid_.n_steps; ++i) {
        acc += inc[i];
        path.values(j, i + 1) = acc;
      }
    }
    return path;
  }

 private:
  static FbmMethod resolve(FbmMethod m, int n) {
    if (m != FbmMethod::auto_select) return m;
    return n <= kCholeskyAutoLimit ? FbmMethod::cholesky
                                   : FbmMethod::circulant;
  }

  TimeGrid grid_;
  HurstParameter h_;
  FbmMethod requested_;
  FbmMethod resolved_;
  std::unique_ptr<detail::CirculantEmbedding> circulant_;
  std::unique_ptr<detail::CholeskyFactor> cholesky_;
};

inline FbmPath sample_fbm(const TimeGrid& grid, const HurstParameter& h, int d,
                          std::uint64_t seed,
                          FbmMethod method = FbmMethod::auto_select) {
  return FbmSampler(grid, h, method).sample(d, seed);
}

}  // namespace fsde
