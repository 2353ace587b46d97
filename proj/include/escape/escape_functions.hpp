#ifndef ESCAPE_ESCAPE_FUNCTIONS_HPP_
#define ESCAPE_ESCAPE_FUNCTIONS_HPP_

// Backward minimax dynamic programming for escape functions.
//
// An escape function U_k assigns to every grid point q[i] the smallest
// control bound u0 for which some feedback strategy, applying |u_n| <= u0,
// completes the task within k steps against every disturbance sequence
// drawn from the disturbance grid. The escape set E_k is its sublevel set
// {q[i] : U_k(q[i]) <= u0}.
//
// Case A: leave Q within k steps.  Case B: leave Q at exactly step k.
// Case C: alternate between two regions, N_l steps left then N_r right.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "escape/discretization.hpp"
#include "escape/map_model.hpp"
#include "escape/parallel.hpp"

namespace escape {

enum class EscapeCase { A, B, C_left, C_right };

inline std::string_view to_string(EscapeCase c) {
  switch (c) {
    case EscapeCase::A: return "A";
    case EscapeCase::B: return "B";
    case EscapeCase::C_left: return "C_left";
    case EscapeCase::C_right: return "C_right";
  }
  return "?";
}

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

struct EscapeFunction {
  std::vector<double> values;
  std::size_t k{1};
  EscapeCase tag{EscapeCase::A};

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double min() const { return *std::min_element(values.begin(), values.end()); }
  double max() const { return *std::max_element(values.begin(), values.end()); }
};

/// [U_1, ..., U_N] on one grid.
struct EscapeFunctionStack {
  EscapeCase tag{EscapeCase::A};
  Grid grid;
  std::vector<EscapeFunction> functions;

  std::size_t horizon() const { return functions.size(); }
  /// U_k, 1-based.
  const EscapeFunction& at(std::size_t k) const { return functions.at(k - 1); }
  double min() const {
    double m = kUnreachable;
    for (const auto& f : functions) m = std::min(m, f.min());
    return m;
  }
};

/// Sublevel set {q[i] : U(q[i]) <= u0}.
struct EscapeSet {
  std::vector<std::uint8_t> mask;
  std::size_t k{1};
  double u0{0.0};

  bool contains(std::size_t i) const { return mask[i] != 0; }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  }
  bool empty() const { return count() == 0; }

  /// Maximal runs of member indices as [first, last] index pairs.
  std::vector<std::pair<std::size_t, std::size_t>> runs() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) continue;
      if (!out.empty() && out.back().second + 1 == i) {
        out.back().second = i;
      } else {
        out.emplace_back(i, i);
      }
    }
    return out;
  }

  /// Runs as coordinate intervals on `grid`.
  std::vector<Region> intervals(const Grid& grid) const {
    std::vector<Region> out;
    for (auto [a, b] : runs()) {
      Region r;
      r.lo = grid[a];
      r.hi = grid[b];
      out.push_back(r);
    }
    return out;
  }
};

inline EscapeSet extract_escape_set(const EscapeFunction& u, double u0) {
  EscapeSet e;
  e.k = u.k;
  e.u0 = u0;
  e.mask.resize(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) e.mask[i] = u[i] <= u0 ? 1 : 0;
  return e;
}

namespace detail {

/// min(cap, min over j of max(|arrivals[j] - y|, cont[j])) for sorted
/// arrivals; cap is the cost of an alternative to arriving anywhere.
///
/// Candidates are visited in order of increasing distance from y; once the
/// distance alone reaches the best value found, no later candidate can
/// improve on it. Equal distances are visited lower index first.
inline double min_arrival_cost(std::span<const double> arrivals, std::span<const double> cont,
                               double y, double cap = kUnreachable) {
  const std::size_t n = arrivals.size();
  auto right = static_cast<std::size_t>(
      std::lower_bound(arrivals.begin(), arrivals.end(), y) - arrivals.begin());
  std::size_t left = right;  // next left candidate is left - 1
  double best = cap;
  while (left > 0 || right < n) {
    std::size_t j;
    double d;
    const double dl = left > 0 ? y - arrivals[left - 1] : kUnreachable;
    const double dr = right < n ? arrivals[right] - y : kUnreachable;
    if (dl <= dr) {
      j = --left;
      d = dl;
    } else {
      j = right++;
      d = dr;
    }
    if (d >= best) break;
    best = std::min(best, std::max(d, cont[j]));
  }
  return best;
}

}  // namespace detail

/// V(i) = max_s min_j max(|arrivals[j] - image[i][s]|, cont[j]).
///
/// With allow_exit, leaving at cost u_out[i][s] competes with every arrival
/// for each disturbance separately: the controller sees the disturbed image
/// before choosing.
inline std::vector<double> minimax_step(const ImageTable& table, std::span<const double> arrivals,
                                        std::span<const double> cont, std::size_t threads = 1,
                                        bool allow_exit = false) {
  if (arrivals.size() != cont.size()) {
    throw std::invalid_argument("continuation does not match the arrival grid");
  }
  std::vector<double> out(table.rows(), 0.0);
  parallel_for(table.rows(), threads, [&](std::size_t i) {
    double worst = 0.0;
    for (std::size_t s = 0; s < table.cols(); ++s) {
      const double cap = allow_exit ? table.u_out(i, s) : kUnreachable;
      worst = std::max(worst, detail::min_arrival_cost(arrivals, cont, table.image(i, s), cap));
    }
    out[i] = worst;
  });
  return out;
}

/// U_1(q[i]) = max_s u_out[i][s].
inline EscapeFunction compute_u1(const ImageTable& table, EscapeCase tag = EscapeCase::A) {
  EscapeFunction u;
  u.k = 1;
  u.tag = tag;
  u.values.resize(table.rows());
  for (std::size_t i = 0; i < table.rows(); ++i) {
    double worst = 0.0;
    for (std::size_t s = 0; s < table.cols(); ++s) worst = std::max(worst, table.u_out(i, s));
    u.values[i] = worst;
  }
  return u;
}

/// Escape within k+1 steps. For each disturbance the controller takes the
/// cheaper of leaving Q now and moving to a grid point of Q from which k
/// steps suffice:
///   U_{k+1}(i) = max_s min(u_out[i][s], min_j max(|q[j] - image[i][s]|, U_k(j))).
/// This never exceeds min(U_1(i), U^in_{k+1}(i)), where U^in is the
/// stay-inside term alone.
inline EscapeFunction step_case_a(const EscapeFunction& uk, const EscapeFunction& u1,
                                  const ImageTable& table, const Grid& grid,
                                  std::size_t threads = 1) {
  if (uk.size() != grid.size() || u1.size() != grid.size()) {
    throw std::invalid_argument("escape functions do not share the grid");
  }
  EscapeFunction next;
  next.k = uk.k + 1;
  next.tag = EscapeCase::A;
  next.values = minimax_step(table, grid.points(), uk.values, threads, true);
  return next;
}

/// U^in_{k+1}(i) = max_s min_j max(|q[j] - image[i][s]|, U_k(j)): the bound
/// when the orbit must stay in Q for the next step.
inline EscapeFunction stay_inside_step(const EscapeFunction& uk, const ImageTable& table,
                                       const Grid& grid, std::size_t threads = 1) {
  if (uk.size() != grid.size()) throw std::invalid_argument("escape function does not match grid");
  EscapeFunction next;
  next.k = uk.k + 1;
  next.tag = uk.tag;
  next.values = minimax_step(table, grid.points(), uk.values, threads);
  return next;
}

/// Escape at exactly k+1 steps: the next state must be a grid point of Q.
inline EscapeFunction step_case_b(const EscapeFunction& uk, const ImageTable& table,
                                  const Grid& grid, std::size_t threads = 1) {
  EscapeFunction next = stay_inside_step(uk, table, grid, threads);
  next.tag = EscapeCase::B;
  return next;
}

struct DpOptions {
  /// Exit clearance; negative selects half a grid cell.
  double margin{-1.0};
  std::size_t threads{1};
};

inline double resolve_margin(const DpOptions& opt, const Grid& grid) {
  return opt.margin < 0.0 ? 0.5 * grid.h() : opt.margin;
}

template <ScalarMap Map>
EscapeFunctionStack compute_stack(const Map& map, const Grid& grid, const DisturbanceGrid& noise,
                                  std::size_t n, EscapeCase c, const DpOptions& opt = {}) {
  if (n < 1) throw std::invalid_argument("horizon n must be >= 1");
  if (c != EscapeCase::A && c != EscapeCase::B) {
    throw std::invalid_argument("compute_stack handles cases A and B");
  }
  const ImageTable table = build_image_table(
      map, grid, noise, ExitSpec::outside(grid.region(), resolve_margin(opt, grid)), opt.threads);
  EscapeFunctionStack stack;
  stack.tag = c;
  stack.grid = grid;
  stack.functions.push_back(compute_u1(table, c));
  for (std::size_t k = 1; k < n; ++k) {
    const EscapeFunction& prev = stack.functions.back();
    stack.functions.push_back(c == EscapeCase::A
                                  ? step_case_a(prev, stack.functions.front(), table, grid,
                                                opt.threads)
                                  : step_case_b(prev, table, grid, opt.threads));
  }
  return stack;
}

/// Overload building the uniform grid on `region` with m points.
template <ScalarMap Map>
EscapeFunctionStack compute_stack(const Map& map, Region region, std::size_t m,
                                  const DisturbanceGrid& noise, std::size_t n, EscapeCase c,
                                  const DpOptions& opt = {}) {
  return compute_stack(map, Grid::uniform(region, m), noise, n, c, opt);
}

/// Raised when the alternating sweep does not settle.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(std::size_t sweeps, double residual)
      : std::runtime_error("alternating escape functions did not converge after " +
                           std::to_string(sweeps) + " sweeps (residual " +
                           std::to_string(residual) + ")"),
        sweeps_(sweeps),
        residual_(residual) {}

  std::size_t sweeps() const { return sweeps_; }
  double residual() const { return residual_; }

 private:
  std::size_t sweeps_;
  double residual_;
};

struct CaseCOptions {
  std::size_t m{1000};
  double tol{1e-10};
  std::size_t max_sweeps{10000};
  std::size_t threads{1};
};

struct CaseCResult {
  Grid global;
  /// Index in `global` of the first right-region point.
  std::size_t split{0};
  EscapeFunctionStack left;
  EscapeFunctionStack right;
  std::size_t sweeps{0};
  double residual{0.0};

  double min() const { return std::min(left.min(), right.min()); }
};

/// Splits a uniform grid on the partition's global domain into the points
/// of the left region and those of the right region.
inline std::pair<Grid, std::size_t> partition_grid(const RegionPartition& part, std::size_t m) {
  Grid global = Grid::uniform(part.global(), m);
  const auto pts = global.points();
  const auto split = static_cast<std::size_t>(
      std::lower_bound(pts.begin(), pts.end(), part.boundary()) - pts.begin());
  if (split == 0 || split == m) {
    throw std::invalid_argument("grid too coarse: a partition region holds no grid point");
  }
  return {std::move(global), split};
}

/// Escape functions for alternating N_l steps in the left region with N_r
/// steps in the right region.
///
/// U^l_k (k >= 2) keeps the orbit in the left region heading for E^l_{k-1};
/// U^l_1 crosses into E^r_{N_r}. Symmetrically on the right. The cycle is
/// iterated, seeded by U^l_1 = max_s min_j |q[j] - image| over left points,
/// until the sup-norm change of U^l_1 and U^r_1 drops below tol.
template <ScalarMap Map>
CaseCResult compute_case_c(const Map& map, const RegionPartition& part,
                           const DisturbanceGrid& noise, std::size_t n_left, std::size_t n_right,
                           const CaseCOptions& opt = {}) {
  if (n_left < 1 || n_right < 1) throw std::invalid_argument("N_l and N_r must be >= 1");
  auto [global, split] = partition_grid(part, opt.m);
  const Grid lgrid = global.slice(0, split);
  const Grid rgrid = global.slice(split, global.size());
  const double margin = 0.5 * global.h();
  const Region dom = part.global();
  const ImageTable ltab =
      build_image_table(map, lgrid, noise, ExitSpec::into(part.right, dom, margin), opt.threads);
  const ImageTable rtab =
      build_image_table(map, rgrid, noise, ExitSpec::into(part.left, dom, margin), opt.threads);

  auto make = [](std::vector<double> v, std::size_t k, EscapeCase tag) {
    EscapeFunction f;
    f.values = std::move(v);
    f.k = k;
    f.tag = tag;
    return f;
  };

  CaseCResult res;
  res.global = global;
  res.split = split;
  res.left.tag = EscapeCase::C_left;
  res.left.grid = lgrid;
  res.right.tag = EscapeCase::C_right;
  res.right.grid = rgrid;

  const std::vector<double> zeros(lgrid.size(), 0.0);
  std::vector<double> l1 = minimax_step(ltab, lgrid.points(), zeros, opt.threads);
  std::vector<double> r1_prev;

  auto sup_diff = [](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] == b[i]) continue;  // also covers matching infinities
      d = std::max(d, std::abs(a[i] - b[i]));
    }
    return d;
  };

  for (std::size_t sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    std::vector<EscapeFunction> left;
    left.push_back(make(l1, 1, EscapeCase::C_left));
    for (std::size_t k = 1; k < n_left; ++k) {
      left.push_back(make(minimax_step(ltab, lgrid.points(), left.back().values, opt.threads),
                          k + 1, EscapeCase::C_left));
    }
    std::vector<EscapeFunction> right;
    right.push_back(make(minimax_step(rtab, lgrid.points(), left.back().values, opt.threads), 1,
                         EscapeCase::C_right));
    for (std::size_t k = 1; k < n_right; ++k) {
      right.push_back(make(minimax_step(rtab, rgrid.points(), right.back().values, opt.threads),
                           k + 1, EscapeCase::C_right));
    }
    std::vector<double> l1_next =
        minimax_step(ltab, rgrid.points(), right.back().values, opt.threads);

    double residual = sup_diff(l1_next, l1);
    if (r1_prev.empty()) {
      residual = kUnreachable;
    } else {
      residual = std::max(residual, sup_diff(right.front().values, r1_prev));
    }
    r1_prev = right.front().values;
    res.left.functions = std::move(left);
    res.right.functions = std::move(right);
    res.sweeps = sweep;
    res.residual = residual;
    if (residual < opt.tol) return res;
    l1 = std::move(l1_next);
  }
  throw ConvergenceError(opt.max_sweeps, res.residual);
}

}  // namespace escape

#endif  // ESCAPE_ESCAPE_FUNCTIONS_HPP_
