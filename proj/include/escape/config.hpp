#ifndef ESCAPE_CONFIG_HPP_
#define ESCAPE_CONFIG_HPP_

// Run configuration: a JSON document, validated before any computation.
// to_json() echoes every field, defaults included, so outputs carry enough
// to reproduce themselves.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "escape/analysis.hpp"
#include "escape/controller.hpp"
#include "escape/map_model.hpp"

namespace escape {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Range {
  double lo{0.005};
  double hi{0.05};
  std::size_t count{20};
};

struct RunConfig {
  MapSpec map = MapSpec::logistic(4.7);
  Region region{0.0, 1.0};
  RegionPartition partition;

  std::size_t m{1000};

  double xi0{0.030};
  std::size_t w{21};
  NoiseKind noise_kind{NoiseKind::grid_adversarial};
  std::uint64_t seed{1};
  std::vector<double> noise_sequence;

  std::string control_case{"A"};
  /// nullopt selects the smallest escape-function value.
  std::optional<double> u0{0.022};
  std::size_t n{3};
  std::size_t n_left{2};
  std::size_t n_right{3};
  std::optional<double> q0;
  std::size_t steps{250};
  std::size_t trials{1};

  bool inflate_noise{true};

  double tol{1e-10};
  std::size_t max_sweeps{10000};

  Range sweep_xi0;
  Range sweep_u0;
  std::size_t sweep_n_max{25};
  SweepCoverage coverage{SweepCoverage::all};

  std::size_t max_iters{100};
  NoiseKind escape_time_noise{NoiseKind::continuous_uniform};

  std::size_t threads{0};
  std::string out_dir{"out"};

  bool is_case_c() const { return control_case == "C"; }
  EscapeCase escape_case() const { return control_case == "B" ? EscapeCase::B : EscapeCase::A; }

  NoiseModel noise_model(double bound, NoiseKind kind) const {
    switch (kind) {
      case NoiseKind::grid_adversarial: return NoiseModel::adversarial(bound, w);
      case NoiseKind::grid_random: return NoiseModel::random_grid(bound, w, seed);
      case NoiseKind::continuous_uniform: return NoiseModel::uniform(bound, w, seed);
      case NoiseKind::fixed_sequence: return NoiseModel::fixed(noise_sequence, bound);
    }
    return NoiseModel::adversarial(bound, w);
  }
  NoiseModel noise_model() const { return noise_model(xi0, noise_kind); }

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (m < 2) fail("grid.m must be >= 2");
    if (!(xi0 >= 0.0)) fail("noise.xi0 must be >= 0");
    if (w < 3 || w % 2 == 0) fail("noise.w must be odd and >= 3");
    if (control_case != "A" && control_case != "B" && control_case != "C") {
      fail("control.case must be A, B or C");
    }
    if (u0 && !(*u0 >= 0.0)) fail("control.u0 must be >= 0");
    if (n < 1) fail("control.N must be >= 1");
    if (n_left < 1 || n_right < 1) fail("control.N_l and control.N_r must be >= 1");
    if (trials < 1) fail("control.trials must be >= 1");
    if (!(tol > 0.0)) fail("case_c.tol must be > 0");
    if (max_sweeps < 1) fail("case_c.max_sweeps must be >= 1");
    for (const Range* r : {&sweep_xi0, &sweep_u0}) {
      if (r->count < 1) fail("sweep ranges need count >= 1");
      if (!(r->lo > 0.0) || r->hi < r->lo) fail("sweep ranges need 0 < lo <= hi");
    }
    if (sweep_n_max < 1) fail("sweep.n_max must be >= 1");
    if (max_iters < 1) fail("escape_time.max_iters must be >= 1");
    if (escape_time_noise == NoiseKind::grid_adversarial) {
      fail("escape_time.noise_kind cannot be grid_adversarial");
    }
    if (noise_kind == NoiseKind::fixed_sequence) {
      for (double x : noise_sequence) {
        if (std::abs(x) > xi0) fail("noise.sequence entries must satisfy |xi| <= xi0");
      }
    }
  }

  /// The job description, without execution settings (threads, output
  /// directory) that must not influence results.
  nlohmann::json to_json() const {
    using nlohmann::json;
    json jm = {{"kind", std::string(to_string(map.kind()))}, {"mu", map.mu()}};
    if (map.kind() == MapKind::piecewise_poly) {
      json pieces = json::array();
      for (const auto& p : map.pieces()) {
        pieces.push_back({{"interval", {p.interval.lo, p.interval.hi}}, {"coeffs", p.coeffs}});
      }
      jm["pieces"] = pieces;
    }
    json j;
    j["map"] = jm;
    j["region"] = {region.lo, region.hi};
    j["partition"] = {{"left", {partition.left.lo, partition.left.hi}},
                      {"right", {partition.right.lo, partition.right.hi}}};
    j["grid"] = {{"m", m}};
    j["noise"] = {{"xi0", xi0},
                  {"w", w},
                  {"kind", std::string(to_string(noise_kind))},
                  {"seed", seed},
                  {"sequence", noise_sequence}};
    j["control"] = {{"case", control_case},
                    {"u0", u0 ? json(*u0) : json("min")},
                    {"N", n},
                    {"N_l", n_left},
                    {"N_r", n_right},
                    {"q0", q0 ? json(*q0) : json(nullptr)},
                    {"steps", steps},
                    {"trials", trials}};
    j["flags"] = {{"inflate_noise", inflate_noise}};
    j["case_c"] = {{"tol", tol}, {"max_sweeps", max_sweeps}};
    j["sweep"] = {{"xi0", {sweep_xi0.lo, sweep_xi0.hi, sweep_xi0.count}},
                  {"u0", {sweep_u0.lo, sweep_u0.hi, sweep_u0.count}},
                  {"n_max", sweep_n_max},
                  {"coverage", coverage == SweepCoverage::all ? "all" : "any"}};
    j["escape_time"] = {{"max_iters", max_iters},
                        {"noise_kind", std::string(to_string(escape_time_noise))}};
    return j;
  }

  static RunConfig from_json(const nlohmann::json& j) {
    using nlohmann::json;
    RunConfig c;
    try {
      check_keys(j, {"map", "region", "partition", "grid", "noise", "control", "flags", "case_c",
                     "sweep", "escape_time", "threads", "output"},
                 "");
      if (j.contains("map")) {
        const json& jm = j["map"];
        check_keys(jm, {"kind", "mu", "pieces"}, "map.");
        const MapKind kind = map_kind_from_string(jm.value("kind", std::string("logistic")));
        const double mu = jm.value("mu", 4.7);
        if (kind == MapKind::logistic) {
          c.map = MapSpec::logistic(mu);
        } else if (kind == MapKind::double_parabola) {
          c.map = MapSpec::double_parabola(mu);
        } else {
          std::vector<PolyPiece> pieces;
          for (const auto& p : jm.at("pieces")) {
            const auto iv = p.at("interval").get<std::vector<double>>();
            if (iv.size() != 2) throw ConfigError("piece interval must be [a, b]");
            pieces.push_back({Region(iv[0], iv[1]), p.at("coeffs").get<std::vector<double>>()});
          }
          c.map = MapSpec::piecewise(std::move(pieces));
        }
      }
      if (j.contains("region")) c.region = region_from(j["region"]);
      if (j.contains("partition")) {
        check_keys(j["partition"], {"left", "right"}, "partition.");
        c.partition = RegionPartition(region_from(j["partition"].at("left")),
                                      region_from(j["partition"].at("right")));
      }
      if (j.contains("grid")) {
        check_keys(j["grid"], {"m"}, "grid.");
        c.m = j["grid"].value("m", c.m);
      }
      if (j.contains("noise")) {
        const json& jn = j["noise"];
        check_keys(jn, {"xi0", "w", "kind", "seed", "sequence"}, "noise.");
        c.xi0 = jn.value("xi0", c.xi0);
        c.w = jn.value("w", c.w);
        if (jn.contains("kind")) c.noise_kind = noise_kind_from_string(jn["kind"].get<std::string>());
        c.seed = jn.value("seed", c.seed);
        if (jn.contains("sequence")) c.noise_sequence = jn["sequence"].get<std::vector<double>>();
      }
      if (j.contains("control")) {
        const json& jc = j["control"];
        check_keys(jc, {"case", "u0", "N", "N_l", "N_r", "q0", "steps", "trials"}, "control.");
        c.control_case = jc.value("case", c.control_case);
        if (jc.contains("u0")) {
          if (jc["u0"].is_string()) {
            if (jc["u0"].get<std::string>() != "min") {
              throw ConfigError("control.u0 must be a number or \"min\"");
            }
            c.u0.reset();
          } else {
            c.u0 = jc["u0"].get<double>();
          }
        }
        c.n = jc.value("N", c.n);
        c.n_left = jc.value("N_l", c.n_left);
        c.n_right = jc.value("N_r", c.n_right);
        if (jc.contains("q0") && !jc["q0"].is_null()) c.q0 = jc["q0"].get<double>();
        c.steps = jc.value("steps", c.steps);
        c.trials = jc.value("trials", c.trials);
      }
      if (j.contains("flags")) {
        check_keys(j["flags"], {"inflate_noise"}, "flags.");
        c.inflate_noise = j["flags"].value("inflate_noise", c.inflate_noise);
      }
      if (j.contains("case_c")) {
        check_keys(j["case_c"], {"tol", "max_sweeps"}, "case_c.");
        c.tol = j["case_c"].value("tol", c.tol);
        c.max_sweeps = j["case_c"].value("max_sweeps", c.max_sweeps);
      }
      if (j.contains("sweep")) {
        const json& js = j["sweep"];
        check_keys(js, {"xi0", "u0", "n_max", "coverage"}, "sweep.");
        if (js.contains("xi0")) c.sweep_xi0 = range_from(js["xi0"]);
        if (js.contains("u0")) c.sweep_u0 = range_from(js["u0"]);
        c.sweep_n_max = js.value("n_max", c.sweep_n_max);
        const std::string cov = js.value("coverage", std::string("all"));
        if (cov != "all" && cov != "any") throw ConfigError("sweep.coverage must be all or any");
        c.coverage = cov == "all" ? SweepCoverage::all : SweepCoverage::any;
      }
      if (j.contains("escape_time")) {
        const json& je = j["escape_time"];
        check_keys(je, {"max_iters", "noise_kind"}, "escape_time.");
        c.max_iters = je.value("max_iters", c.max_iters);
        if (je.contains("noise_kind")) {
          c.escape_time_noise = noise_kind_from_string(je["noise_kind"].get<std::string>());
        }
      }
      c.threads = j.value("threads", c.threads);
      if (j.contains("output")) {
        check_keys(j["output"], {"dir"}, "output.");
        c.out_dir = j["output"].value("dir", c.out_dir);
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string("invalid config: ") + e.what());
    }
    c.validate();
    return c;
  }

 private:
  static void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                         const std::string& prefix) {
    if (!j.is_object()) throw ConfigError("expected an object at '" + prefix + "'");
    for (const auto& [k, v] : j.items()) {
      if (!allowed.count(k)) throw ConfigError("unknown config key '" + prefix + k + "'");
    }
  }

  static Region region_from(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 2) throw ConfigError("a region is written [lo, hi]");
    return Region(v[0], v[1]);
  }

  static Range range_from(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 3) throw ConfigError("a sweep range is written [lo, hi, count]");
    if (v[2] < 1.0) throw ConfigError("sweep range count must be >= 1");
    return {v[0], v[1], static_cast<std::size_t>(v[2])};
  }
};

}  // namespace escape

#endif  // ESCAPE_CONFIG_HPP_
