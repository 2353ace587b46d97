#ifndef ESCAPE_CONTROLLER_HPP_
#define ESCAPE_CONTROLLER_HPP_

// Controlled orbits q_{n+1} = f(q_n) + xi_n + u_n driven by escape sets.
//
// Controlled arrivals land exactly on the grid point the escape sets certify,
// u_n = q[j] - (f(q_n) + xi_n), so the orbit stays on the lattice the
// dynamic programme reasons about. Exits land past the region boundary by
// the exit margin.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "escape/discretization.hpp"
#include "escape/escape_functions.hpp"
#include "escape/map_model.hpp"
#include "escape/parallel.hpp"
#include "escape/rng.hpp"

namespace escape {

/// The orbit needed a control larger than the bound. Under a certified
/// policy this means the orbit left the certified lattice.
class GuaranteeViolation : public std::runtime_error {
 public:
  GuaranteeViolation(double image, double needed, double u0)
      : std::runtime_error("control " + std::to_string(needed) + " exceeds bound " +
                           std::to_string(u0) + " at image " + std::to_string(image)),
        image_(image),
        needed_(needed) {}
  double image() const { return image_; }
  double needed() const { return needed_; }

 private:
  double image_;
  double needed_;
};

/// Starting point outside the escape set the policy certifies.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A policy was requested with a bound below what some escape set needs.
class EmptyEscapeSetError : public std::runtime_error {
 public:
  EmptyEscapeSetError(std::string which, double min_value, double u0)
      : std::runtime_error("escape set " + which + " is empty at u0 = " + std::to_string(u0) +
                           "; the smallest escape-function value is " +
                           std::to_string(min_value)),
        min_value_(min_value) {}
  double min_value() const { return min_value_; }

 private:
  double min_value_;
};

// ---------------------------------------------------------------------------
// Noise

enum class NoiseKind { grid_adversarial, grid_random, continuous_uniform, fixed_sequence };

inline std::string_view to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::grid_adversarial: return "grid_adversarial";
    case NoiseKind::grid_random: return "grid_random";
    case NoiseKind::continuous_uniform: return "continuous_uniform";
    case NoiseKind::fixed_sequence: return "fixed_sequence";
  }
  return "?";
}

inline NoiseKind noise_kind_from_string(std::string_view s) {
  if (s == "grid_adversarial") return NoiseKind::grid_adversarial;
  if (s == "grid_random") return NoiseKind::grid_random;
  if (s == "continuous_uniform") return NoiseKind::continuous_uniform;
  if (s == "fixed_sequence") return NoiseKind::fixed_sequence;
  throw std::invalid_argument("unknown noise kind '" + std::string(s) + "'");
}

/// Disturbance source. Grid kinds emit values of the physical disturbance
/// grid (never the inflated one used by the dynamic programme).
struct NoiseModel {
  NoiseKind kind{NoiseKind::grid_adversarial};
  DisturbanceGrid grid;
  std::uint64_t seed{0};
  std::vector<double> sequence;

  static NoiseModel adversarial(double xi0, std::size_t w) {
    return {NoiseKind::grid_adversarial, DisturbanceGrid::uniform(xi0, w), 0, {}};
  }
  static NoiseModel random_grid(double xi0, std::size_t w, std::uint64_t seed) {
    return {NoiseKind::grid_random, DisturbanceGrid::uniform(xi0, w), seed, {}};
  }
  static NoiseModel uniform(double xi0, std::size_t w, std::uint64_t seed) {
    return {NoiseKind::continuous_uniform, DisturbanceGrid::uniform(xi0, w), seed, {}};
  }
  static NoiseModel fixed(std::vector<double> seq, double xi0 = -1.0) {
    double bound = 0.0;
    for (double x : seq) bound = std::max(bound, std::abs(x));
    if (xi0 >= 0.0 && bound > xi0) {
      throw std::invalid_argument("fixed noise sequence exceeds xi0");
    }
    return {NoiseKind::fixed_sequence, DisturbanceGrid::uniform(std::max(xi0, bound), 3), 0,
            std::move(seq)};
  }

  double xi0() const { return grid.xi0(); }
};

/// Per-run draw state of a NoiseModel.
class NoiseStream {
 public:
  NoiseStream(const NoiseModel& model, std::uint64_t trial)
      : model_(&model), rng_(Rng::stream(model.seed, trial)) {}

  /// Next disturbance. `adversary` returns the grid index to use and is
  /// consulted only for grid_adversarial.
  template <class Adversary>
  double next(Adversary&& adversary) {
    switch (model_->kind) {
      case NoiseKind::grid_adversarial:
        return model_->grid[adversary()];
      case NoiseKind::grid_random:
        return model_->grid[rng_.index(model_->grid.size())];
      case NoiseKind::continuous_uniform:
        return model_->xi0() * (2.0 * rng_.uniform01() - 1.0);
      case NoiseKind::fixed_sequence:
        if (pos_ >= model_->sequence.size()) {
          throw std::out_of_range("fixed noise sequence exhausted");
        }
        return model_->sequence[pos_++];
    }
    return 0.0;
  }

  Rng& rng() { return rng_; }

 private:
  const NoiseModel* model_;
  Rng rng_;
  std::size_t pos_{0};
};

// ---------------------------------------------------------------------------
// Policy

enum class PolicyMode { A, B, C };

inline std::string_view to_string(PolicyMode m) {
  switch (m) {
    case PolicyMode::A: return "A";
    case PolicyMode::B: return "B";
    case PolicyMode::C: return "C";
  }
  return "?";
}

/// Escape functions plus the escape sets they induce at bound u0.
class ControlPolicy {
 public:
  /// Timed-escape policy (cases A and B) on `region`.
  static ControlPolicy escape(EscapeFunctionStack stack, double u0, double margin = -1.0) {
    ControlPolicy p;
    p.mode_ = stack.tag == EscapeCase::A ? PolicyMode::A : PolicyMode::B;
    if (stack.tag != EscapeCase::A && stack.tag != EscapeCase::B) {
      throw std::invalid_argument("escape policy needs a case A or B stack");
    }
    p.u0_ = u0;
    p.margin_ = margin < 0.0 ? 0.5 * stack.grid.h() : margin;
    p.exit_ = ExitSpec::outside(stack.grid.region(), p.margin_);
    p.first_ = std::move(stack);
    p.first_sets_ = make_sets(p.first_, u0, "E_");
    return p;
  }

  /// Alternating policy (case C).
  static ControlPolicy alternating(CaseCResult alt, const RegionPartition& part, double u0) {
    ControlPolicy p;
    p.mode_ = PolicyMode::C;
    p.u0_ = u0;
    p.partition_ = part;
    p.global_ = alt.global;
    p.split_ = alt.split;
    p.first_ = std::move(alt.left);
    p.second_ = std::move(alt.right);
    p.first_sets_ = make_sets(p.first_, u0, "E^l_");
    p.second_sets_ = make_sets(p.second_, u0, "E^r_");
    return p;
  }

  PolicyMode mode() const { return mode_; }
  double u0() const { return u0_; }
  double margin() const { return margin_; }
  const ExitSpec& exit() const { return exit_; }

  /// Cases A/B: the stack and E_k (1-based).
  const EscapeFunctionStack& stack() const { return first_; }
  const EscapeSet& set(std::size_t k) const { return first_sets_.at(k - 1); }
  std::size_t horizon() const { return first_.horizon(); }

  /// Case C accessors; side 0 is left, 1 is right.
  const EscapeFunctionStack& side_stack(int side) const { return side == 0 ? first_ : second_; }
  const EscapeSet& side_set(int side, std::size_t k) const {
    return (side == 0 ? first_sets_ : second_sets_).at(k - 1);
  }
  const Grid& global_grid() const { return global_; }
  std::size_t split() const { return split_; }
  const RegionPartition& partition() const { return partition_; }

 private:
  static std::vector<EscapeSet> make_sets(const EscapeFunctionStack& s, double u0,
                                          const std::string& name) {
    std::vector<EscapeSet> sets;
    for (const auto& f : s.functions) {
      sets.push_back(extract_escape_set(f, u0));
      if (sets.back().empty()) {
        throw EmptyEscapeSetError(name + std::to_string(f.k), f.min(), u0);
      }
    }
    return sets;
  }

  PolicyMode mode_{PolicyMode::A};
  double u0_{0.0};
  double margin_{0.0};
  ExitSpec exit_;
  EscapeFunctionStack first_;
  EscapeFunctionStack second_;
  std::vector<EscapeSet> first_sets_;
  std::vector<EscapeSet> second_sets_;
  RegionPartition partition_;
  Grid global_;
  std::size_t split_{0};
};

// ---------------------------------------------------------------------------
// Single control decision

enum class ControlKind { to_set, to_exit };

struct ControlChoice {
  double u{0.0};
  double target{0.0};
  ControlKind kind{ControlKind::to_set};
  /// Arrival index in the set's grid when kind == to_set.
  std::size_t j{0};
};

/// Nearest grid index in `set`, ties to the smaller index; nullopt if empty.
inline std::optional<std::size_t> nearest_member(const Grid& grid, const EscapeSet& set,
                                                 double y) {
  const std::size_t n = grid.size();
  const auto pts = grid.points();
  auto right = static_cast<std::size_t>(std::lower_bound(pts.begin(), pts.end(), y) - pts.begin());
  std::size_t left = right;
  while (left > 0 || right < n) {
    const double dl = left > 0 ? y - pts[left - 1] : kUnreachable;
    const double dr = right < n ? pts[right] - y : kUnreachable;
    const std::size_t j = dl <= dr ? --left : right++;
    if (set.contains(j)) return j;
  }
  return std::nullopt;
}

/// How a step may end.
enum class StepRule {
  set_or_exit,  // case A, before the last step
  set_only,     // case B before the last step, and every case C step
  exit_only,    // the last step of cases A and B
};

/// Control for disturbed image y: the nearest point of next_set, the exit,
/// or the cheaper of the two (exit wins ties).
inline ControlChoice choose_control(double y, const EscapeSet* next_set, const Grid& grid,
                                    const ExitSpec& exit, StepRule rule, double u0) {
  ControlChoice c;
  double set_cost = kUnreachable;
  std::optional<std::size_t> j;
  if (rule != StepRule::exit_only) {
    if (next_set == nullptr) throw std::invalid_argument("step rule needs a target set");
    j = nearest_member(grid, *next_set, y);
    if (j) set_cost = std::abs(grid[*j] - y);
  }
  const double exit_cost = rule == StepRule::set_only ? kUnreachable : exit.distance(y);
  if (rule != StepRule::set_only && exit_cost <= set_cost) {
    c.kind = ControlKind::to_exit;
    c.u = exit.control(y);
    c.target = y + c.u;
  } else if (j) {
    c.kind = ControlKind::to_set;
    c.j = *j;
    c.u = grid[*j] - y;
    c.target = grid[*j];
  } else {
    throw GuaranteeViolation(y, kUnreachable, u0);
  }
  if (std::abs(c.u) > u0) throw GuaranteeViolation(y, std::abs(c.u), u0);
  return c;
}

// ---------------------------------------------------------------------------
// Orbits

struct TraceStep {
  std::size_t n{0};
  double q{0.0};
  /// Disturbance and control applied from this state; absent on the final row.
  std::optional<double> xi;
  std::optional<double> u;
  /// Index k of the targeted escape set, 0 for the exit; absent on the final row.
  std::optional<std::size_t> k_target;
  std::string region;
  bool escaped{false};
};

struct OrbitTrace {
  double q0_requested{0.0};
  double q0{0.0};
  std::vector<TraceStep> steps;
  std::optional<std::size_t> escape_step;
  double max_abs_u{0.0};

  /// Disturbances in order, for replay as a fixed sequence.
  std::vector<double> noise() const {
    std::vector<double> out;
    for (const auto& s : steps) {
      if (s.xi) out.push_back(*s.xi);
    }
    return out;
  }

  /// Region label of every visited state, final state included.
  std::vector<std::string> occupancy() const {
    std::vector<std::string> out;
    for (const auto& s : steps) out.push_back(s.region);
    return out;
  }
};

namespace detail {

/// Grid index of s maximizing cost(y_s), ties to the smaller index.
template <class Cost>
std::size_t argmax_disturbance(double fx, const DisturbanceGrid& noise, Cost&& cost) {
  std::size_t best = 0;
  double worst = -1.0;
  for (std::size_t s = 0; s < noise.size(); ++s) {
    const double c = cost(fx + noise[s]);
    if (c > worst) {
      worst = c;
      best = s;
    }
  }
  return best;
}

}  // namespace detail

/// Runs a case A or B orbit from q0 (snapped to the grid) until it leaves Q.
/// Case A leaves within N steps, case B at exactly step N.
template <ScalarMap Map>
OrbitTrace simulate_escape(const Map& map, const ControlPolicy& policy, double q0,
                           const NoiseModel& noise, std::uint64_t trial = 0) {
  if (policy.mode() == PolicyMode::C) {
    throw std::invalid_argument("simulate_escape needs a case A or B policy");
  }
  const Grid& grid = policy.stack().grid;
  const std::size_t horizon = policy.horizon();
  const EscapeFunctionStack& stack = policy.stack();

  OrbitTrace trace;
  trace.q0_requested = q0;
  std::size_t i = grid.nearest_index(q0);
  trace.q0 = grid[i];
  if (!policy.set(horizon).contains(i)) {
    throw PreconditionError("q0 = " + std::to_string(q0) + " (grid point " +
                            std::to_string(trace.q0) + ") is not in E_" +
                            std::to_string(horizon));
  }

  NoiseStream stream(noise, trial);
  double q = trace.q0;
  for (std::size_t n = 0; n < horizon; ++n) {
    const std::size_t k = horizon - n;  // q lies in E_k
    const StepRule rule = k == 1 ? StepRule::exit_only
                          : policy.mode() == PolicyMode::A ? StepRule::set_or_exit
                                                           : StepRule::set_only;
    const double fx = map(q);
    const EscapeFunction* next_u = k > 1 ? &stack.at(k - 1) : nullptr;

    // Nature picks the grid disturbance attaining the max in the stored step.
    auto adversary = [&] {
      return detail::argmax_disturbance(fx, noise.grid, [&](double y) {
        const double exit_cost =
            rule == StepRule::set_only ? kUnreachable : policy.exit().distance(y);
        if (rule == StepRule::exit_only) return exit_cost;
        return detail::min_arrival_cost(grid.points(), next_u->values, y, exit_cost);
      });
    };
    const double xi = stream.next(adversary);
    const double y = fx + xi;
    const ControlChoice c = choose_control(y, k > 1 ? &policy.set(k - 1) : nullptr, grid,
                                           policy.exit(), rule, policy.u0());
    TraceStep st;
    st.n = n;
    st.q = q;
    st.xi = xi;
    st.u = c.u;
    st.k_target = c.kind == ControlKind::to_exit ? 0 : k - 1;
    st.region = "Q";
    trace.steps.push_back(st);
    trace.max_abs_u = std::max(trace.max_abs_u, std::abs(c.u));
    q = c.target;
    if (c.kind == ControlKind::to_exit) {
      trace.steps.back().escaped = true;
      trace.escape_step = n + 1;
      break;
    }
    i = c.j;
  }
  TraceStep last;
  last.n = trace.steps.size();
  last.q = q;
  last.region = trace.escape_step ? "out" : "Q";
  last.escaped = trace.escape_step.has_value();
  trace.steps.push_back(last);
  return trace;
}

/// Runs a case C orbit for total_steps transitions. The start is snapped to
/// the global grid and placed in the escape set E_k of its region with the
/// largest k that contains it.
template <ScalarMap Map>
OrbitTrace simulate_alternating(const Map& map, const ControlPolicy& policy, double q0,
                                const NoiseModel& noise, std::size_t total_steps,
                                std::uint64_t trial = 0) {
  if (policy.mode() != PolicyMode::C) {
    throw std::invalid_argument("simulate_alternating needs a case C policy");
  }
  const Grid& global = policy.global_grid();
  const std::size_t split = policy.split();
  const std::array<std::size_t, 2> n_side{policy.side_stack(0).horizon(),
                                          policy.side_stack(1).horizon()};
  const ExitSpec no_exit;
  const char* labels[2] = {"L", "R"};

  OrbitTrace trace;
  trace.q0_requested = q0;
  const std::size_t g = global.nearest_index(q0);
  trace.q0 = global[g];
  int side = g < split ? 0 : 1;
  std::size_t i = side == 0 ? g : g - split;
  std::size_t k = 0;
  for (std::size_t kk = n_side[side]; kk >= 1; --kk) {
    if (policy.side_set(side, kk).contains(i)) {
      k = kk;
      break;
    }
  }
  if (k == 0) {
    throw PreconditionError("q0 = " + std::to_string(q0) +
                            " is not in any escape set of its region");
  }

  if (total_steps == 0) return trace;

  NoiseStream stream(noise, trial);
  double q = trace.q0;
  for (std::size_t n = 0; n < total_steps; ++n) {
    const int next_side = k > 1 ? side : 1 - side;
    const std::size_t next_k = k > 1 ? k - 1 : n_side[next_side];
    const Grid& next_grid = policy.side_stack(next_side).grid;
    const EscapeFunction& next_u = policy.side_stack(next_side).at(next_k);
    const double fx = map(q);
    auto adversary = [&] {
      return detail::argmax_disturbance(fx, noise.grid, [&](double y) {
        return detail::min_arrival_cost(next_grid.points(), next_u.values, y);
      });
    };
    const double xi = stream.next(adversary);
    const double y = fx + xi;
    const ControlChoice c = choose_control(y, &policy.side_set(next_side, next_k), next_grid,
                                           no_exit, StepRule::set_only, policy.u0());
    TraceStep st;
    st.n = n;
    st.q = q;
    st.xi = xi;
    st.u = c.u;
    st.k_target = next_k;
    st.region = labels[side];
    trace.steps.push_back(st);
    trace.max_abs_u = std::max(trace.max_abs_u, std::abs(c.u));
    q = c.target;
    side = next_side;
    k = next_k;
    i = c.j;
  }
  TraceStep last;
  last.n = total_steps;
  last.q = q;
  last.region = labels[side];
  trace.steps.push_back(last);
  return trace;
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct TrialResult {
  std::size_t trial{0};
  double q0{0.0};
  std::optional<std::size_t> escape_step;
  double max_abs_u{0.0};
  bool violation{false};
  std::string error;
};

/// Grid indices of a set, for sampling certified starts.
inline std::vector<std::size_t> members(const EscapeSet& set) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < set.mask.size(); ++i) {
    if (set.contains(i)) out.push_back(i);
  }
  return out;
}

/// Independent escape runs from starts drawn uniformly from E_N. Trial t
/// uses the stream (noise.seed, t) for both the start and the disturbances.
template <ScalarMap Map>
std::vector<TrialResult> run_escape_trials(const Map& map, const ControlPolicy& policy,
                                           const NoiseModel& noise, std::size_t trials,
                                           std::size_t threads = 1) {
  const std::vector<std::size_t> starts = members(policy.set(policy.horizon()));
  std::vector<TrialResult> out(trials);
  parallel_for(trials, threads, [&](std::size_t t) {
    Rng pick = Rng::stream(noise.seed ^ 0x5DEECE66DULL, t);
    TrialResult& r = out[t];
    r.trial = t;
    r.q0 = policy.stack().grid[starts[pick.index(starts.size())]];
    try {
      const OrbitTrace tr = simulate_escape(map, policy, r.q0, noise, t);
      r.escape_step = tr.escape_step;
      r.max_abs_u = tr.max_abs_u;
      const std::size_t n = policy.horizon();
      const bool timed = tr.escape_step && (policy.mode() == PolicyMode::A
                                                ? *tr.escape_step <= n
                                                : *tr.escape_step == n);
      r.violation = !timed || tr.max_abs_u > policy.u0();
    } catch (const GuaranteeViolation& e) {
      r.violation = true;
      r.error = e.what();
    }
  });
  return out;
}

/// Whether the visited regions form blocks of exactly n_left "L" states and
/// n_right "R" states in alternation. The first and last blocks may be
/// shorter: the orbit can start mid-stay and the run can stop mid-stay.
inline bool occupancy_is_periodic(const OrbitTrace& trace, std::size_t n_left,
                                  std::size_t n_right) {
  std::vector<std::pair<std::string, std::size_t>> blocks;
  for (const auto& label : trace.occupancy()) {
    if (label != "L" && label != "R") return false;
    if (!blocks.empty() && blocks.back().first == label) {
      ++blocks.back().second;
    } else {
      blocks.emplace_back(label, 1);
    }
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::size_t want = blocks[b].first == "L" ? n_left : n_right;
    const bool edge = b == 0 || b + 1 == blocks.size();
    if (edge ? blocks[b].second > want : blocks[b].second != want) return false;
  }
  return true;
}

/// Independent alternating runs of total_steps transitions from starts drawn
/// uniformly from E^l_{N_l}. A trial fails on a guarantee violation or when
/// its occupancy is not the exact N_l / N_r pattern from the first step.
template <ScalarMap Map>
std::vector<TrialResult> run_alternating_trials(const Map& map, const ControlPolicy& policy,
                                                const NoiseModel& noise, std::size_t trials,
                                                std::size_t total_steps, std::size_t threads = 1) {
  const std::size_t n_left = policy.side_stack(0).horizon();
  const std::size_t n_right = policy.side_stack(1).horizon();
  const std::vector<std::size_t> starts = members(policy.side_set(0, n_left));
  std::vector<TrialResult> out(trials);
  parallel_for(trials, threads, [&](std::size_t t) {
    Rng pick = Rng::stream(noise.seed ^ 0x5DEECE66DULL, t);
    TrialResult& r = out[t];
    r.trial = t;
    r.q0 = policy.side_stack(0).grid[starts[pick.index(starts.size())]];
    try {
      const OrbitTrace tr = simulate_alternating(map, policy, r.q0, noise, total_steps, t);
      r.max_abs_u = tr.max_abs_u;
      const auto occ = tr.occupancy();
      bool exact = true;
      for (std::size_t n = 0; n < occ.size(); ++n) {
        const bool left = n % (n_left + n_right) < n_left;
        exact = exact && occ[n] == (left ? "L" : "R");
      }
      r.violation = !exact || tr.max_abs_u > policy.u0();
    } catch (const GuaranteeViolation& e) {
      r.violation = true;
      r.error = e.what();
    }
  });
  return out;
}

}  // namespace escape

#endif  // ESCAPE_CONTROLLER_HPP_
