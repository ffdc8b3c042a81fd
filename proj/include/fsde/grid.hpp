#pragma once

#include <stdexcept>

namespace fsde {

/// Uniform time grid t_i = i*dt for i = 0..n_steps.
struct TimeGrid {
  int n_steps = 0;
  double dt = 0.0;

  TimeGrid() = default;
  TimeGrid(int n, double step) : n_steps(n), dt(step) {
    if (n < 1) throw std::invalid_argument("TimeGrid: n_steps must be >= 1");
    if (!(step > 0.0)) throw std::invalid_argument("TimeGrid: dt must be positive");
  }

  double horizon() const { return n_steps * dt; }
  double node(int i) const { return i * dt; }
  int nodes() const { return n_steps + 1; }

  bool operator==(const TimeGrid& o) const {
    return n_steps == o.n_steps && dt == o.dt;
  }
};

}  // namespace fsde
