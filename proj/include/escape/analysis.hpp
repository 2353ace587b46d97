#ifndef ESCAPE_ANALYSIS_HPP_
#define ESCAPE_ANALYSIS_HPP_

// Diagnostics built on the escape-function machinery: uncontrolled escape
// times, the (xi0, u0) -> minimal-horizon sweep, and an exhaustive game-tree
// evaluation of escape values used to cross-check the dynamic programme.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "escape/controller.hpp"
#include "escape/discretization.hpp"
#include "escape/escape_functions.hpp"
#include "escape/map_model.hpp"
#include "escape/parallel.hpp"

namespace escape {

/// Escape step of the uncontrolled noisy orbit from every grid point, or
/// max_iters + 1 for orbits still inside after max_iters steps.
///
/// All initial conditions see the same disturbance sequence, drawn once from
/// trial stream 0 of `noise`, so the profile is a function of q0 alone.
template <ScalarMap Map>
std::vector<std::size_t> uncontrolled_escape_time(const Map& map, Region region, const Grid& grid,
                                                  const NoiseModel& noise, std::size_t max_iters,
                                                  std::size_t threads = 1) {
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (noise.kind == NoiseKind::grid_adversarial) {
    throw std::invalid_argument("uncontrolled orbits have no adversary; use a random noise kind");
  }
  if (noise.kind == NoiseKind::fixed_sequence && noise.sequence.size() < max_iters) {
    throw std::invalid_argument("fixed noise sequence shorter than max_iters");
  }
  std::vector<double> xi(max_iters);
  NoiseStream stream(noise, 0);
  for (auto& x : xi) x = stream.next([] { return std::size_t{0}; });

  std::vector<std::size_t> steps(grid.size(), max_iters + 1);
  parallel_for(grid.size(), threads, [&](std::size_t i) {
    double q = grid[i];
    for (std::size_t n = 0; n < max_iters; ++n) {
      q = map(q) + xi[n];
      if (!region.contains(q)) {
        steps[i] = n + 1;
        return;
      }
    }
  });
  return steps;
}

enum class SweepCoverage { all, any };

struct SweepMatrix {
  std::vector<double> xi0s;
  std::vector<double> u0s;
  /// Row-major over (xi0, u0); nullopt marks an infeasible cell.
  std::vector<std::optional<std::size_t>> cells;

  const std::optional<std::size_t>& at(std::size_t r, std::size_t c) const {
    return cells[r * u0s.size() + c];
  }
};

struct SweepOptions {
  std::size_t m{1000};
  std::size_t w{21};
  bool inflate_noise{true};
  std::size_t n_max{25};
  SweepCoverage coverage{SweepCoverage::all};
  std::size_t threads{1};
  /// Called with the row index after each xi0 row finishes.
  std::function<void(std::size_t)> on_row;
};

/// Smallest N <= n_max for which the case A escape set E_N at bound u0
/// covers the whole grid (coverage all) or is nonempty (coverage any).
///
/// U_k does not depend on u0, so each xi0 row computes one stack to n_max and
/// thresholds it for every u0.
template <ScalarMap Map>
SweepMatrix sweep_min_n(const Map& map, Region region, const std::vector<double>& xi0s,
                        const std::vector<double>& u0s, const SweepOptions& opt) {
  if (xi0s.empty() || u0s.empty()) throw std::invalid_argument("sweep ranges must be nonempty");
  if (opt.n_max < 1) throw std::invalid_argument("n_max must be >= 1");
  SweepMatrix out;
  out.xi0s = xi0s;
  out.u0s = u0s;
  out.cells.assign(xi0s.size() * u0s.size(), std::nullopt);
  const Grid grid = Grid::uniform(region, opt.m);
  parallel_for(xi0s.size(), opt.threads, [&](std::size_t r) {
    const auto stack = compute_stack(map, grid, dp_noise(xi0s[r], opt.w, opt.inflate_noise),
                                     opt.n_max, EscapeCase::A);
    std::vector<double> level(opt.n_max);
    for (std::size_t k = 1; k <= opt.n_max; ++k) {
      level[k - 1] = opt.coverage == SweepCoverage::all ? stack.at(k).max() : stack.at(k).min();
    }
    for (std::size_t c = 0; c < u0s.size(); ++c) {
      for (std::size_t k = 1; k <= opt.n_max; ++k) {
        if (level[k - 1] <= u0s[c]) {
          out.cells[r * u0s.size() + c] = k;
          break;
        }
      }
    }
    if (opt.on_row) opt.on_row(r);
  });
  return out;
}

/// Evenly spaced values from lo to hi inclusive.
inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
  if (count == 0) throw std::invalid_argument("linspace count must be >= 1");
  if (count == 1) return {lo};
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i) {
    v[i] = lo + (hi - lo) * (static_cast<double>(i) / static_cast<double>(count - 1));
  }
  v.back() = hi;
  return v;
}

/// Instance too large for exhaustive enumeration.
class InstanceTooLarge : public std::length_error {
 public:
  using std::length_error::length_error;
};

inline constexpr double kMaxGameTreeNodes = 1e8;

/// Exact game-tree value of the escape problem from grid point q0_index.
///
/// Every node re-expands its whole subtree: nature picks a disturbance from
/// the grid, then the controller picks an arrival grid point of Q (or, in
/// case A, leaves Q right away), and the value is the largest control
/// magnitude along the path. The last step must leave Q. Nothing is cached
/// and no candidate is pruned.
template <ScalarMap Map>
double brute_force_escape_value(const Map& map, const Grid& grid, const DisturbanceGrid& noise,
                                std::size_t n, EscapeCase c, std::size_t q0_index,
                                double margin = -1.0) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (c != EscapeCase::A && c != EscapeCase::B) {
    throw std::invalid_argument("brute force handles cases A and B");
  }
  const double m = static_cast<double>(grid.size());
  const double w = static_cast<double>(noise.size());
  if (w * std::pow(w * m, static_cast<double>(n - 1)) > kMaxGameTreeNodes) {
    throw InstanceTooLarge("game tree exceeds " + std::to_string(kMaxGameTreeNodes) + " nodes");
  }
  const double lo = grid[0];
  const double hi = grid[grid.size() - 1];
  const double eps = margin < 0.0 ? 0.5 * grid.h() : margin;

  auto leave = [&](double y) {
    return (y < lo || y > hi) ? 0.0 : std::min(y - lo, hi - y) + eps;
  };

  std::function<double(std::size_t, std::size_t)> value = [&](std::size_t i,
                                                               std::size_t k) -> double {
    const double fx = map(grid[i]);
    double worst = 0.0;
    for (std::size_t s = 0; s < noise.size(); ++s) {
      const double y = fx + noise[s];
      double best = std::numeric_limits<double>::infinity();
      if (k == 1 || c == EscapeCase::A) best = leave(y);
      if (k > 1) {
        for (std::size_t j = 0; j < grid.size(); ++j) {
          best = std::min(best, std::max(std::abs(grid[j] - y), value(j, k - 1)));
        }
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return value(q0_index, n);
}

}  // namespace escape

#endif  // ESCAPE_ANALYSIS_HPP_
