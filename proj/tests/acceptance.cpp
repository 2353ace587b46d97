// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "escape/analysis.hpp"
#include "escape/cli.hpp"
#include "escape/controller.hpp"
#include "escape/escape_functions.hpp"
#include "oracle.hpp"

using namespace escape;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass{true};
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string num(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

const MapSpec kLogistic = MapSpec::logistic(4.7);

EscapeFunctionStack benchmark(EscapeCase c) {
  return compute_stack(kLogistic, Region(0.0, 1.0), 1000, dp_noise(0.030, 21, true), 3, c);
}

bool has_zero_interval(const EscapeFunction& u) {
  for (std::size_t i = 0; i + 1 < u.size(); ++i) {
    if (u[i] == 0.0 && u[i + 1] == 0.0) return true;
  }
  return false;
}

Outcome escape_sets_a() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto s = benchmark(EscapeCase::A);
  const double secs = seconds_since(t0);
  const double m3 = s.at(3).min();
  o.require(m3 >= 0.0 && m3 <= 0.022, "min U_3 = " + num(m3));
  for (std::size_t k = 1; k <= 3; ++k) {
    const auto e = extract_escape_set(s.at(k), 0.022);
    o.require(!e.empty(), "E_" + std::to_string(k) + " empty");
    o.require(has_zero_interval(s.at(k)), "U_" + std::to_string(k) + " has no zero interval");
  }
  o.require(secs < 60.0, "runtime " + num(secs) + " s");
  if (o.pass) {
    o.detail = "min U_3 = " + num(m3) + ", |E_3| = " +
               std::to_string(extract_escape_set(s.at(3), 0.022).count()) + ", " + num(secs) +
               " s";
  }
  return o;
}

Outcome monotonicity() {
  Outcome o;
  const auto a = benchmark(EscapeCase::A);
  const auto b = benchmark(EscapeCase::B);
  std::size_t bad_k = 0, bad_ab = 0, bad_nest = 0;
  for (std::size_t k = 1; k <= 3; ++k) {
    const auto ek = extract_escape_set(a.at(k), 0.022);
    for (std::size_t i = 0; i < a.grid.size(); ++i) {
      if (k < 3 && a.at(k + 1)[i] > a.at(k)[i] + 1e-12) ++bad_k;
      if (b.at(k)[i] < a.at(k)[i] - 1e-12) ++bad_ab;
      if (k < 3 && ek.contains(i) && !extract_escape_set(a.at(k + 1), 0.022).contains(i)) {
        ++bad_nest;
      }
    }
  }
  o.require(bad_k == 0, std::to_string(bad_k) + " points with U_{k+1} > U_k");
  o.require(bad_ab == 0, std::to_string(bad_ab) + " points with U^B < U^A");
  o.require(bad_nest == 0, std::to_string(bad_nest) + " nesting failures");
  if (o.pass) o.detail = "U_{k+1} <= U_k, U^B >= U^A, E_k within E_{k+1} on 1000 points";
  return o;
}

Outcome safety() {
  Outcome o;
  const auto noise = NoiseModel::adversarial(0.030, 21);
  double max_u = 0.0;
  for (EscapeCase c : {EscapeCase::A, EscapeCase::B}) {
    const auto policy = ControlPolicy::escape(benchmark(c), 0.022);
    const auto trials = run_escape_trials(kLogistic, policy, noise, 1000);
    std::size_t bad = 0;
    for (const auto& t : trials) {
      const bool timed = t.escape_step &&
                         (c == EscapeCase::A ? *t.escape_step <= 3 : *t.escape_step == 3);
      if (t.violation || !timed || t.max_abs_u > 0.022) ++bad;
      max_u = std::max(max_u, t.max_abs_u);
    }
    o.require(bad == 0, std::string("case ") + std::string(to_string(c)) + ": " +
                            std::to_string(bad) + " of 1000 failed");
  }
  if (o.pass) o.detail = "2 x 1000 adversarial runs, max |u| = " + num(max_u);
  return o;
}

Outcome oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  const Grid g = Grid::uniform(Region(0.0, 1.0), 64);
  const auto noise = DisturbanceGrid::uniform(0.030, 3);
  std::size_t mismatches = 0;
  for (EscapeCase c : {EscapeCase::A, EscapeCase::B}) {
    const auto s = compute_stack(kLogistic, g, noise, 3, c);
    const test::GameTree tree(kLogistic, test::to_vector(g.points()),
                              test::to_vector(noise.values()), 0.5 * g.h(), c == EscapeCase::A);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double dp = s.at(3)[i];
      if (dp != tree.value(i, 3)) ++mismatches;
      if (dp != brute_force_escape_value(kLogistic, g, noise, 3, c, i)) ++mismatches;
    }
  }
  const double secs = seconds_since(t0);
  o.require(mismatches == 0, std::to_string(mismatches) + " mismatches");
  o.require(secs < 10.0, "runtime " + num(secs) + " s");
  if (o.pass) o.detail = "128 points exact, " + num(secs) + " s";
  return o;
}

Outcome alternating() {
  Outcome o;
  const auto f = MapSpec::double_parabola(10.0);
  const RegionPartition part;
  const auto noise = dp_noise(0.015, 21, true);
  const auto short_cycle = compute_case_c(f, part, noise, 2, 3);
  o.require(std::abs(short_cycle.min() - 0.014) <= 0.002,
            "2/3 minimum " + num(short_cycle.min()));
  const auto long_cycle = compute_case_c(f, part, noise, 20, 30);
  const double m = long_cycle.min();
  o.require(std::abs(m - 0.0135) <= 0.1 * 0.0135, "20/30 minimum " + num(m));

  const auto policy = ControlPolicy::alternating(long_cycle, part, m);
  const auto q0 = policy.side_stack(0).grid[members(policy.side_set(0, 20)).front()];
  const auto tr =
      simulate_alternating(f, policy, q0, NoiseModel::adversarial(0.015, 21), 250);
  const auto occ = tr.occupancy();
  bool exact = occ.size() == 251;
  for (std::size_t n = 0; exact && n < occ.size(); ++n) {
    exact = occ[n] == (n % 50 < 20 ? "L" : "R");
  }
  o.require(exact, "occupancy is not the 20/30 pattern");
  o.require(tr.max_abs_u <= m, "max |u| = " + num(tr.max_abs_u) + " above " + num(m));
  if (o.pass) {
    o.detail = "2/3 min " + num(short_cycle.min()) + " (" + std::to_string(short_cycle.sweeps) +
               " sweeps), 20/30 min " + num(m) + ", 250 steps, max |u| = " + num(tr.max_abs_u);
  }
  return o;
}

Outcome regimes() {
  Outcome o;
  const RegionPartition part;
  const auto low = attractor_merging_check(MapSpec::double_parabola(7.2), part, 100, 10000);
  const auto high = attractor_merging_check(MapSpec::double_parabola(10.0), part, 100, 10000);
  o.require(!low.left_escapes && !low.right_escapes, "mu = 7.2 crosses");
  o.require(high.left_escapes && high.right_escapes, "mu = 10 does not cross from both sides");
  if (o.pass) o.detail = "mu = 7.2 confined, mu = 10 merged";
  return o;
}

Outcome sweep() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto axis = linspace(0.005, 0.05, 20);
  SweepOptions opt;
  opt.n_max = 25;
  const auto m = sweep_min_n(kLogistic, Region(0.0, 1.0), axis, axis, opt);
  const double secs = seconds_since(t0);
  auto le = [](const std::optional<std::size_t>& a, const std::optional<std::size_t>& b) {
    return !b || (a && *a <= *b);
  };
  std::size_t bad_u = 0, bad_xi = 0, below = 0;
  for (std::size_t r = 0; r < axis.size(); ++r) {
    for (std::size_t c = 0; c < axis.size(); ++c) {
      if (c + 1 < axis.size() && !le(m.at(r, c + 1), m.at(r, c))) ++bad_u;
      if (r + 1 < axis.size() && !le(m.at(r, c), m.at(r + 1, c))) ++bad_xi;
      if (m.u0s[c] < m.xi0s[r] && m.at(r, c)) ++below;
    }
  }
  o.require(bad_u == 0, std::to_string(bad_u) + " increases along u0");
  o.require(bad_xi == 0, std::to_string(bad_xi) + " decreases along xi0");
  o.require(below > 0, "no feasible cell below the diagonal");
  o.require(secs < 600.0, "runtime " + num(secs) + " s");
  if (o.pass) {
    o.detail = std::to_string(below) + " feasible cells with u0 < xi0, " + num(secs) + " s";
  }
  return o;
}

Outcome roughness() {
  Outcome o;
  const Grid g = Grid::uniform(Region(0.0, 1.0), 1000);
  const auto t = uncontrolled_escape_time(kLogistic, Region(0.0, 1.0), g,
                                          NoiseModel::uniform(0.030, 21, 1), 100);
  std::size_t jump = 0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    jump = std::max(jump, t[i] > t[i + 1] ? t[i] - t[i + 1] : t[i + 1] - t[i]);
  }
  o.require(jump > 5, "largest adjacent difference " + std::to_string(jump));
  if (o.pass) o.detail = "largest adjacent difference " + std::to_string(jump) + " steps";
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome determinism() {
  Outcome o;
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "escape_acceptance_determinism";
  fs::remove_all(root);
  std::ostringstream sink;
  cli::Io io{sink, sink};

  auto config = [](const std::string& json) {
    return RunConfig::from_json(nlohmann::json::parse(json));
  };
  const std::vector<RunConfig> jobs = {
      config(R"({"noise":{"kind":"continuous_uniform","seed":3},"control":{"trials":500}})"),
      config(R"({"noise":{"kind":"grid_random","seed":4},"control":{"case":"B","trials":500}})"),
      config(R"({"map":{"kind":"double_parabola","mu":10},"noise":{"xi0":0.015,"seed":5},
                 "control":{"case":"C","u0":"min","N_l":2,"N_r":3,"trials":50}})"),
      config(R"({"sweep":{"xi0":[0.01,0.05,5],"u0":[0.01,0.05,5]}})")};

  std::size_t compared = 0;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    std::vector<fs::path> dirs;
    for (std::size_t run = 0; run < 3; ++run) {
      RunConfig cfg = jobs[j];
      cfg.threads = run == 2 ? 4 : 1;
      cfg.out_dir = (root / std::to_string(j) / std::to_string(run)).string();
      int rc = cli::cmd_compute(cfg, io);
      if (rc == 0) rc = cli::cmd_simulate(cfg, io);
      if (rc == 0 && j == 3) rc = cli::cmd_sweep(cfg, io);
      if (rc == 0 && j == 0) rc = cli::cmd_escape_time(cfg, io);
      o.require(rc == 0, "job " + std::to_string(j) + " exit " + std::to_string(rc));
      dirs.emplace_back(cfg.out_dir);
    }
    for (const auto& e : fs::directory_iterator(dirs[0])) {
      const std::string ref = slurp(e.path());
      for (std::size_t run = 1; run < dirs.size(); ++run) {
        ++compared;
        o.require(slurp(dirs[run] / e.path().filename()) == ref,
                  e.path().filename().string() + " differs in run " + std::to_string(run));
      }
    }
  }
  fs::remove_all(root);
  if (o.pass) o.detail = std::to_string(compared) + " file comparisons identical (1 and 4 threads)";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"escape sets, case A benchmark", escape_sets_a},
      {"monotonicity", monotonicity},
      {"safety under adversarial noise", safety},
      {"oracle equivalence", oracle},
      {"alternating control", alternating},
      {"double parabola regimes", regimes},
      {"sweep matrix properties", sweep},
      {"escape-time roughness", roughness},
      {"determinism", determinism}};
  int failed = 0;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    Outcome o;
    try {
      o = criteria[c].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", c + 1, criteria[c].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
