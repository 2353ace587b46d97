#ifndef ESCAPE_CLI_HPP_
#define ESCAPE_CLI_HPP_

// Subcommands of the `escape` tool. Each takes a validated RunConfig, writes
// its CSV outputs under cfg.out_dir and returns the process exit code:
//   0 success, 1 invalid input, 2 empty required escape set,
//   3 guarantee violated during simulation.

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "escape/analysis.hpp"
#include "escape/config.hpp"
#include "escape/controller.hpp"
#include "escape/csv_io.hpp"
#include "escape/escape_functions.hpp"

namespace escape::cli {

enum ExitCode : int { kOk = 0, kInvalid = 1, kEmptySet = 2, kViolation = 3 };

struct Io {
  std::ostream& out;
  std::ostream& err;
};

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return RunConfig::from_json(j);
}

/// Rebuilds the config echoed into an output file.
inline RunConfig config_from_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read_file(path);
  const auto it = t.meta.find("config");
  if (it == t.meta.end()) throw ConfigError(path.string() + " carries no config metadata");
  return RunConfig::from_json(nlohmann::json::parse(it->second));
}

namespace detail {

inline csv::Metadata metadata(const RunConfig& cfg, std::string_view what,
                              std::string_view case_label) {
  csv::Metadata m;
  m.emplace_back("content", std::string(what));
  m.emplace_back("map", std::string(to_string(cfg.map.kind())));
  m.emplace_back("mu", csv::fmt(cfg.map.mu()));
  m.emplace_back("xi0", csv::fmt(cfg.xi0));
  m.emplace_back("xi0_dp", csv::fmt(dp_noise(cfg.xi0, cfg.w, cfg.inflate_noise).xi0()));
  m.emplace_back("M", csv::fmt(cfg.m));
  m.emplace_back("W", csv::fmt(cfg.w));
  m.emplace_back("case", std::string(case_label));
  m.emplace_back("inflate_noise", cfg.inflate_noise ? "true" : "false");
  m.emplace_back("rng", kRngName);
  m.emplace_back("seed", std::to_string(cfg.seed));
  return m;
}

inline void finish(csv::Metadata& m, const RunConfig& cfg) {
  m.emplace_back("config", cfg.to_json().dump());
}

inline std::filesystem::path out_path(const RunConfig& cfg, const std::string& name) {
  return std::filesystem::path(cfg.out_dir) / name;
}

inline std::string num(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << x;
  return os.str();
}

struct EscapeRun {
  EscapeFunctionStack stack;
  double u0{0.0};
};

inline EscapeRun escape_stack(const RunConfig& cfg) {
  EscapeRun r;
  DpOptions opt;
  opt.threads = cfg.threads;
  r.stack = compute_stack(cfg.map, Grid::uniform(cfg.region, cfg.m),
                          dp_noise(cfg.xi0, cfg.w, cfg.inflate_noise), cfg.n, cfg.escape_case(),
                          opt);
  r.u0 = cfg.u0 ? *cfg.u0 : r.stack.at(cfg.n).min();
  return r;
}

struct AlternatingRun {
  CaseCResult result;
  double u0{0.0};
};

inline AlternatingRun alternating(const RunConfig& cfg) {
  CaseCOptions opt;
  opt.m = cfg.m;
  opt.tol = cfg.tol;
  opt.max_sweeps = cfg.max_sweeps;
  opt.threads = cfg.threads;
  AlternatingRun r;
  r.result = compute_case_c(cfg.map, cfg.partition, dp_noise(cfg.xi0, cfg.w, cfg.inflate_noise),
                            cfg.n_left, cfg.n_right, opt);
  r.u0 = cfg.u0 ? *cfg.u0 : r.result.min();
  return r;
}

inline std::vector<EscapeSet> sets_of(const EscapeFunctionStack& s, double u0) {
  std::vector<EscapeSet> out;
  for (const auto& f : s.functions) out.push_back(extract_escape_set(f, u0));
  return out;
}

inline void summarize(std::ostream& os, const std::string& prefix,
                      const EscapeFunctionStack& stack, const std::vector<EscapeSet>& sets) {
  for (std::size_t k = 1; k <= stack.horizon(); ++k) {
    os << prefix << k << ": min=" << num(stack.at(k).min()) << " max=" << num(stack.at(k).max())
       << " |E|=" << sets[k - 1].count() << '/' << stack.grid.size() << '\n';
  }
}

inline std::string trials_csv(const std::vector<TrialResult>& trials, csv::Metadata meta) {
  std::ostringstream os;
  csv::write_metadata(os, meta);
  os << "trial,q0,escape_step,max_abs_u,violation\n";
  for (const auto& t : trials) {
    os << t.trial << ',' << csv::fmt(t.q0) << ','
       << (t.escape_step ? std::to_string(*t.escape_step) : "") << ',' << csv::fmt(t.max_abs_u)
       << ',' << (t.violation ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace detail

/// Escape functions and escape sets.
inline int cmd_compute(const RunConfig& cfg, Io io) {
  if (!cfg.is_case_c()) {
    const auto run = detail::escape_stack(cfg);
    const auto sets = detail::sets_of(run.stack, run.u0);
    const std::string label(to_string(run.stack.tag));
    auto meta = detail::metadata(cfg, "escape_functions", label);
    meta.emplace_back("u0", csv::fmt(run.u0));
    detail::finish(meta, cfg);
    csv::write_atomic(detail::out_path(cfg, "escape_functions_" + label + ".csv"),
                      csv::escape_functions(run.stack, meta));
    meta.front().second = "escape_sets";
    csv::write_atomic(detail::out_path(cfg, "escape_sets_" + label + ".csv"),
                      csv::escape_sets(run.stack.grid, sets, meta));
    io.out << "case " << label << ", N=" << cfg.n << ", u0=" << detail::num(run.u0) << '\n';
    detail::summarize(io.out, "U_", run.stack, sets);
    if (sets.back().empty()) {
      io.err << "escape set E_" << cfg.n << " is empty: u0 = " << detail::num(run.u0)
             << " is below min(U_" << cfg.n << ") = " << detail::num(run.stack.at(cfg.n).min())
             << '\n';
      return kEmptySet;
    }
    return kOk;
  }

  const auto run = detail::alternating(cfg);
  const auto lsets = detail::sets_of(run.result.left, run.u0);
  const auto rsets = detail::sets_of(run.result.right, run.u0);
  for (const auto& [stack, sets, side] :
       {std::tuple{&run.result.left, &lsets, "C_left"}, {&run.result.right, &rsets, "C_right"}}) {
    auto meta = detail::metadata(cfg, "escape_functions", side);
    meta.emplace_back("u0", csv::fmt(run.u0));
    meta.emplace_back("sweeps", std::to_string(run.result.sweeps));
    detail::finish(meta, cfg);
    csv::write_atomic(detail::out_path(cfg, std::string("escape_functions_") + side + ".csv"),
                      csv::escape_functions(*stack, meta));
    meta.front().second = "escape_sets";
    csv::write_atomic(detail::out_path(cfg, std::string("escape_sets_") + side + ".csv"),
                      csv::escape_sets(stack->grid, *sets, meta));
  }
  io.out << "case C, N_l=" << cfg.n_left << ", N_r=" << cfg.n_right << ", converged after "
         << run.result.sweeps << " sweeps, min=" << detail::num(run.result.min())
         << ", u0=" << detail::num(run.u0) << '\n';
  detail::summarize(io.out, "U^l_", run.result.left, lsets);
  detail::summarize(io.out, "U^r_", run.result.right, rsets);
  for (const auto* sets : {&lsets, &rsets}) {
    for (const auto& e : *sets) {
      if (e.empty()) {
        io.err << "an escape set is empty: u0 = " << detail::num(run.u0)
               << " is below the escape-function minimum " << detail::num(run.result.min())
               << '\n';
        return kEmptySet;
      }
    }
  }
  return kOk;
}

/// Controlled orbits. One trace file for the first run plus a per-trial
/// summary.
inline int cmd_simulate(const RunConfig& cfg, Io io) {
  const NoiseModel noise = cfg.noise_model();
  std::vector<TrialResult> trials;
  OrbitTrace first;
  std::string label;
  double u0 = 0.0;

  if (!cfg.is_case_c()) {
    const auto run = detail::escape_stack(cfg);
    label = std::string(to_string(run.stack.tag));
    const auto policy = ControlPolicy::escape(run.stack, run.u0);
    u0 = run.u0;
    if (cfg.q0) {
      first = simulate_escape(cfg.map, policy, *cfg.q0, noise, 0);
      TrialResult r;
      r.q0 = first.q0;
      r.escape_step = first.escape_step;
      r.max_abs_u = first.max_abs_u;
      const bool timed = first.escape_step && (policy.mode() == PolicyMode::A
                                                   ? *first.escape_step <= cfg.n
                                                   : *first.escape_step == cfg.n);
      r.violation = !timed;
      trials.push_back(r);
    } else {
      trials = run_escape_trials(cfg.map, policy, noise, cfg.trials, cfg.threads);
      if (!trials.front().violation) {
        first = simulate_escape(cfg.map, policy, trials.front().q0, noise, 0);
      }
    }
  } else {
    const auto run = detail::alternating(cfg);
    label = "C";
    const auto policy = ControlPolicy::alternating(run.result, cfg.partition, run.u0);
    u0 = run.u0;
    if (cfg.q0) {
      first = simulate_alternating(cfg.map, policy, *cfg.q0, noise, cfg.steps, 0);
      TrialResult r;
      r.q0 = first.q0;
      r.max_abs_u = first.max_abs_u;
      r.violation = !occupancy_is_periodic(first, cfg.n_left, cfg.n_right);
      trials.push_back(r);
    } else {
      trials = run_alternating_trials(cfg.map, policy, noise, cfg.trials, cfg.steps, cfg.threads);
      if (!trials.front().violation) {
        first = simulate_alternating(cfg.map, policy, trials.front().q0, noise, cfg.steps, 0);
      }
    }
  }

  auto meta = detail::metadata(cfg, "trace", label);
  meta.emplace_back("u0", csv::fmt(u0));
  meta.emplace_back("noise", std::string(to_string(cfg.noise_kind)));
  meta.emplace_back("q0_requested", csv::fmt(first.q0_requested));
  meta.emplace_back("q0_snapped", csv::fmt(first.q0));
  detail::finish(meta, cfg);
  if (!first.steps.empty()) {
    csv::write_atomic(detail::out_path(cfg, "trace.csv"), csv::trace(first, meta));
  }
  meta.front().second = "trials";
  csv::write_atomic(detail::out_path(cfg, "trials.csv"), detail::trials_csv(trials, meta));

  std::size_t violations = 0;
  double max_u = 0.0;
  for (const auto& t : trials) {
    violations += t.violation ? 1 : 0;
    max_u = std::max(max_u, t.max_abs_u);
    if (!t.error.empty()) io.err << "trial " << t.trial << ": " << t.error << '\n';
  }
  io.out << "case " << label << ": " << trials.size() << " run(s), " << violations
         << " violation(s), max |u| = " << detail::num(max_u) << " (u0 = " << detail::num(u0)
         << ")\n";
  if (!cfg.is_case_c()) {
    std::vector<std::size_t> hist(cfg.n + 2, 0);
    for (const auto& t : trials) ++hist[t.escape_step ? std::min(*t.escape_step, cfg.n + 1) : 0];
    for (std::size_t k = 1; k <= cfg.n; ++k) {
      io.out << "escaped at step " << k << ": " << hist[k] << '\n';
    }
  }
  return violations == 0 ? kOk : kViolation;
}

/// Minimal-horizon matrix over (xi0, u0).
inline int cmd_sweep(const RunConfig& cfg, Io io) {
  const auto xi0s = linspace(cfg.sweep_xi0.lo, cfg.sweep_xi0.hi, cfg.sweep_xi0.count);
  const auto u0s = linspace(cfg.sweep_u0.lo, cfg.sweep_u0.hi, cfg.sweep_u0.count);
  SweepOptions opt;
  opt.m = cfg.m;
  opt.w = cfg.w;
  opt.inflate_noise = cfg.inflate_noise;
  opt.n_max = cfg.sweep_n_max;
  opt.coverage = cfg.coverage;
  opt.threads = cfg.threads;
  std::size_t done = 0;
  std::mutex progress;
  opt.on_row = [&](std::size_t r) {
    std::lock_guard lock(progress);
    io.err << "row " << ++done << '/' << xi0s.size() << " (xi0 = " << detail::num(xi0s[r])
           << ")\n";
  };
  const SweepMatrix m = sweep_min_n(cfg.map, cfg.region, xi0s, u0s, opt);
  auto meta = detail::metadata(cfg, "sweep", "A");
  meta.emplace_back("n_max", std::to_string(cfg.sweep_n_max));
  meta.emplace_back("coverage", cfg.coverage == SweepCoverage::all ? "all" : "any");
  detail::finish(meta, cfg);
  csv::write_atomic(detail::out_path(cfg, "sweep.csv"), csv::sweep_matrix(m, meta));
  std::size_t feasible = 0;
  for (const auto& c : m.cells) feasible += c ? 1 : 0;
  io.out << "sweep " << xi0s.size() << 'x' << u0s.size() << ": " << feasible
         << " feasible cell(s)\n";
  return kOk;
}

/// Uncontrolled escape step from every grid point.
inline int cmd_escape_time(const RunConfig& cfg, Io io) {
  const Grid grid = Grid::uniform(cfg.region, cfg.m);
  const NoiseModel noise = cfg.noise_model(cfg.xi0, cfg.escape_time_noise);
  const auto steps =
      uncontrolled_escape_time(cfg.map, cfg.region, grid, noise, cfg.max_iters, cfg.threads);
  auto meta = detail::metadata(cfg, "escape_time", "uncontrolled");
  meta.emplace_back("noise", std::string(to_string(cfg.escape_time_noise)));
  meta.emplace_back("sentinel", std::to_string(cfg.max_iters + 1) + " (never escaped)");
  detail::finish(meta, cfg);
  csv::write_atomic(detail::out_path(cfg, "escape_time.csv"),
                    csv::escape_times(grid, steps, meta));
  std::size_t never = 0;
  for (auto s : steps) never += s > cfg.max_iters ? 1 : 0;
  io.out << "escape time for " << grid.size() << " initial conditions, " << never
         << " still inside after " << cfg.max_iters << " iterations\n";
  return kOk;
}

/// Runs `command` and maps library exceptions to exit codes.
template <class Command>
int guarded(Command&& command, const RunConfig& cfg, Io io) {
  try {
    return command(cfg, io);
  } catch (const EmptyEscapeSetError& e) {
    io.err << e.what() << '\n';
    return kEmptySet;
  } catch (const GuaranteeViolation& e) {
    io.err << e.what() << '\n';
    return kViolation;
  } catch (const ConfigError& e) {
    io.err << e.what() << '\n';
    return kInvalid;
  } catch (const PreconditionError& e) {
    io.err << e.what() << '\n';
    return kInvalid;
  } catch (const ConvergenceError& e) {
    io.err << e.what() << '\n';
    return kInvalid;
  } catch (const std::invalid_argument& e) {
    io.err << e.what() << '\n';
    return kInvalid;
  }
}

}  // namespace escape::cli

#endif  // ESCAPE_CLI_HPP_
