#include <cmath>

#include <gtest/gtest.h>

#include "escape/controller.hpp"
#include "escape/escape_functions.hpp"

using namespace escape;

namespace {

const MapSpec& logistic() {
  static const MapSpec f = MapSpec::logistic(4.7);
  return f;
}

const EscapeFunctionStack& stack(EscapeCase c) {
  static const auto a = compute_stack(logistic(), Region(0.0, 1.0), 1000,
                                      dp_noise(0.03, 21, true), 3, EscapeCase::A);
  static const auto b = compute_stack(logistic(), Region(0.0, 1.0), 1000,
                                      dp_noise(0.03, 21, true), 3, EscapeCase::B);
  return c == EscapeCase::A ? a : b;
}

ControlPolicy policy(EscapeCase c, double u0 = 0.022) {
  return ControlPolicy::escape(stack(c), u0);
}

}  // namespace

TEST(ChooseControl, ImageOnSetPointNeedsNothing) {
  const Grid g = Grid::uniform(Region(0.0, 1.0), 11);
  EscapeSet e;
  e.mask.assign(11, 1);
  const auto exit = ExitSpec::outside(g.region(), 0.05);
  const auto c = choose_control(g[4], &e, g, exit, StepRule::set_only, 0.01);
  EXPECT_EQ(c.u, 0.0);
  EXPECT_EQ(c.j, 4u);
  const auto near = choose_control(g[4] + 0.02, &e, g, exit, StepRule::set_only, 0.05);
  EXPECT_LE(std::abs(near.u), 0.5 * g.h());
  EXPECT_EQ(near.target, g[4]);
}

TEST(ChooseControl, OutsideImageExitsForFree) {
  const Grid g = Grid::uniform(Region(0.0, 1.0), 11);
  EscapeSet e;
  e.mask.assign(11, 1);
  const auto exit = ExitSpec::outside(g.region(), 0.05);
  const auto c = choose_control(1.1, &e, g, exit, StepRule::set_or_exit, 0.0);
  EXPECT_EQ(c.kind, ControlKind::to_exit);
  EXPECT_EQ(c.u, 0.0);
}

TEST(ChooseControl, ExitWinsTies) {
  const Grid g = Grid::uniform(Region(0.0, 1.0), 5);
  EscapeSet e;
  e.mask.assign(5, 0);
  e.mask[3] = 1;
  // y = 0.875 is exactly 0.125 from both q = 0.75 and the upper boundary.
  const auto exit = ExitSpec::outside(g.region(), 0.0);
  const auto c = choose_control(0.875, &e, g, exit, StepRule::set_or_exit, 1.0);
  EXPECT_EQ(c.kind, ControlKind::to_exit);
  EXPECT_EQ(c.u, 0.125);
  const auto b = choose_control(0.875, &e, g, exit, StepRule::set_only, 1.0);
  EXPECT_EQ(b.kind, ControlKind::to_set);
  EXPECT_EQ(b.u, -0.125);
}

TEST(ChooseControl, RaisesWhenBudgetTooSmall) {
  const Grid g = Grid::uniform(Region(0.0, 1.0), 11);
  EscapeSet e;
  e.mask.assign(11, 0);
  e.mask[0] = 1;
  const auto exit = ExitSpec::outside(g.region(), 0.05);
  EXPECT_THROW(choose_control(0.5, &e, g, exit, StepRule::set_only, 0.1), GuaranteeViolation);
  EXPECT_THROW(choose_control(0.5, nullptr, g, exit, StepRule::set_only, 1.0),
               std::invalid_argument);
}

TEST(Policy, RefusesEmptySet) {
  // Between min U_2 and min U_3, so E_3 is the first empty set.
  const auto& b = stack(EscapeCase::B);
  ASSERT_LT(b.at(2).min(), b.at(3).min());
  const double below = 0.5 * (b.at(2).min() + b.at(3).min());
  EXPECT_THROW(policy(EscapeCase::B, below), EmptyEscapeSetError);
  try {
    policy(EscapeCase::B, below);
  } catch (const EmptyEscapeSetError& e) {
    EXPECT_EQ(e.min_value(), stack(EscapeCase::B).at(3).min());
  }
}

TEST(Simulate, PreconditionOnStart) {
  const auto p = policy(EscapeCase::B);
  const auto& e3 = p.set(3);
  std::size_t outside = 0;
  while (e3.contains(outside)) ++outside;
  EXPECT_THROW(simulate_escape(logistic(), p, p.stack().grid[outside],
                               NoiseModel::adversarial(0.03, 21)),
               PreconditionError);
}

TEST(Simulate, OffGridStartIsSnapped) {
  const auto p = policy(EscapeCase::A);
  const auto tr = simulate_escape(logistic(), p, 0.5 + 1e-7, NoiseModel::adversarial(0.03, 21));
  EXPECT_EQ(tr.q0_requested, 0.5 + 1e-7);
  EXPECT_EQ(tr.q0, p.stack().grid[p.stack().grid.nearest_index(0.5 + 1e-7)]);
}

TEST(Simulate, UncontrolledEscapeWithZeroNoise) {
  const auto s = compute_stack(logistic(), Region(0.0, 1.0), 1000, dp_noise(0.03, 21, true), 1,
                               EscapeCase::A);
  const auto p = ControlPolicy::escape(s, 0.0);
  const auto tr = simulate_escape(logistic(), p, 0.5, NoiseModel::fixed({0.0}));
  ASSERT_TRUE(tr.escape_step);
  EXPECT_EQ(*tr.escape_step, 1u);
  EXPECT_EQ(*tr.steps.front().u, 0.0);
  EXPECT_EQ(tr.steps.back().region, "out");
}

TEST(SimulateProperty, SafetyCaseA) {
  const auto p = policy(EscapeCase::A);
  for (auto noise : {NoiseModel::adversarial(0.03, 21), NoiseModel::uniform(0.03, 21, 5),
                     NoiseModel::random_grid(0.03, 21, 5)}) {
    const auto trials = run_escape_trials(logistic(), p, noise, 2000, 2);
    for (const auto& t : trials) {
      ASSERT_FALSE(t.violation) << to_string(noise.kind) << " trial " << t.trial << t.error;
      ASSERT_LE(*t.escape_step, 3u);
      ASSERT_LE(t.max_abs_u, 0.022);
    }
  }
}

TEST(SimulateProperty, SafetyCaseB) {
  const auto p = policy(EscapeCase::B);
  for (auto noise : {NoiseModel::adversarial(0.03, 21), NoiseModel::uniform(0.03, 21, 9)}) {
    const auto trials = run_escape_trials(logistic(), p, noise, 2000, 2);
    for (const auto& t : trials) {
      ASSERT_FALSE(t.violation) << t.error;
      ASSERT_EQ(*t.escape_step, 3u);
      ASSERT_LE(t.max_abs_u, 0.022);
    }
  }
}

TEST(SimulateProperty, UniformNoiseTenThousandTrials) {
  const auto p = policy(EscapeCase::A);
  const auto trials = run_escape_trials(logistic(), p, NoiseModel::uniform(0.03, 21, 1), 10000, 4);
  std::size_t bad = 0;
  for (const auto& t : trials) bad += t.violation ? 1 : 0;
  EXPECT_EQ(bad, 0u);
}

TEST(SimulateProperty, TraceReplay) {
  const auto p = policy(EscapeCase::B);
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    const auto starts = members(p.set(3));
    const double q0 = p.stack().grid[starts[(trial * 37) % starts.size()]];
    const auto tr = simulate_escape(logistic(), p, q0, NoiseModel::uniform(0.03, 21, 2), trial);
    const auto replay = simulate_escape(logistic(), p, q0, NoiseModel::fixed(tr.noise(), 0.03));
    ASSERT_EQ(tr.steps.size(), replay.steps.size());
    for (std::size_t n = 0; n < tr.steps.size(); ++n) {
      EXPECT_EQ(tr.steps[n].q, replay.steps[n].q);
      EXPECT_EQ(tr.steps[n].xi, replay.steps[n].xi);
      EXPECT_EQ(tr.steps[n].u, replay.steps[n].u);
      EXPECT_EQ(tr.steps[n].k_target, replay.steps[n].k_target);
    }
  }
}

TEST(Simulate, TrialsIndependentOfThreads) {
  const auto p = policy(EscapeCase::A);
  const auto noise = NoiseModel::uniform(0.03, 21, 77);
  const auto a = run_escape_trials(logistic(), p, noise, 300, 1);
  const auto b = run_escape_trials(logistic(), p, noise, 300, 3);
  for (std::size_t t = 0; t < a.size(); ++t) {
    EXPECT_EQ(a[t].q0, b[t].q0);
    EXPECT_EQ(a[t].escape_step, b[t].escape_step);
    EXPECT_EQ(a[t].max_abs_u, b[t].max_abs_u);
  }
}

TEST(NoiseModel, FixedSequenceBounds) {
  EXPECT_THROW(NoiseModel::fixed({0.1}, 0.05), std::invalid_argument);
  NoiseModel m = NoiseModel::fixed({0.01});
  NoiseStream s(m, 0);
  EXPECT_EQ(s.next([] { return std::size_t{0}; }), 0.01);
  EXPECT_THROW(s.next([] { return std::size_t{0}; }), std::out_of_range);
}

TEST(NoiseModel, UniformWithinBound) {
  const auto m = NoiseModel::uniform(0.03, 21, 4);
  NoiseStream s(m, 0);
  for (int n = 0; n < 10000; ++n) {
    const double x = s.next([] { return std::size_t{0}; });
    ASSERT_LE(std::abs(x), 0.03);
  }
}

TEST(NoiseModel, KindNames) {
  for (auto k : {NoiseKind::grid_adversarial, NoiseKind::grid_random,
                 NoiseKind::continuous_uniform, NoiseKind::fixed_sequence}) {
    EXPECT_EQ(noise_kind_from_string(to_string(k)), k);
  }
  EXPECT_THROW(noise_kind_from_string("gaussian"), std::invalid_argument);
}

TEST(Rng, StreamsDifferAndRepeat) {
  Rng a = Rng::stream(1, 0);
  Rng b = Rng::stream(1, 0);
  Rng c = Rng::stream(1, 1);
  const auto x = a.next();
  EXPECT_EQ(x, b.next());
  EXPECT_NE(x, c.next());
  Rng d(5);
  for (int n = 0; n < 1000; ++n) {
    const double u = d.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(d.index(7), 7u);
  }
}

// Alternating control

namespace {

struct Alt {
  CaseCResult result;
  ControlPolicy policy;
};

const Alt& alt(std::size_t nl, std::size_t nr) {
  static const Alt short_cycle = [] {
    auto r = compute_case_c(MapSpec::double_parabola(10.0), RegionPartition(),
                            dp_noise(0.015, 21, true), 2, 3);
    auto p = ControlPolicy::alternating(r, RegionPartition(), r.min());
    return Alt{std::move(r), std::move(p)};
  }();
  static const Alt long_cycle = [] {
    auto r = compute_case_c(MapSpec::double_parabola(10.0), RegionPartition(),
                            dp_noise(0.015, 21, true), 20, 30);
    auto p = ControlPolicy::alternating(r, RegionPartition(), r.min());
    return Alt{std::move(r), std::move(p)};
  }();
  return nl == 2 && nr == 3 ? short_cycle : long_cycle;
}

}  // namespace

TEST(Alternating, LongCycleOccupancy) {
  const auto& a = alt(20, 30);
  const auto f = MapSpec::double_parabola(10.0);
  for (auto noise : {NoiseModel::adversarial(0.015, 21), NoiseModel::uniform(0.015, 21, 3)}) {
    const auto trials = run_alternating_trials(f, a.policy, noise, 40, 250, 2);
    for (const auto& t : trials) {
      ASSERT_FALSE(t.violation) << t.error;
      ASSERT_LE(t.max_abs_u, a.policy.u0());
    }
  }
  const auto q0 = a.policy.side_stack(0).grid[members(a.policy.side_set(0, 20)).front()];
  const auto tr = simulate_alternating(f, a.policy, q0, NoiseModel::adversarial(0.015, 21), 250);
  const auto occ = tr.occupancy();
  ASSERT_EQ(occ.size(), 251u);
  for (std::size_t n = 0; n < 250; ++n) {
    EXPECT_EQ(occ[n], n % 50 < 20 ? "L" : "R") << "n=" << n;
  }
  EXPECT_TRUE(occupancy_is_periodic(tr, 20, 30));
}

TEST(Alternating, ShortCyclePeriodFive) {
  const auto& a = alt(2, 3);
  const auto f = MapSpec::double_parabola(10.0);
  const auto trials = run_alternating_trials(f, a.policy, NoiseModel::adversarial(0.015, 21), 100,
                                             100, 1);
  for (const auto& t : trials) ASSERT_FALSE(t.violation) << t.error;
}

TEST(Alternating, ZeroStepsGivesEmptyTrace) {
  const auto& a = alt(2, 3);
  const auto q0 = a.policy.side_stack(0).grid[members(a.policy.side_set(0, 2)).front()];
  const auto tr = simulate_alternating(MapSpec::double_parabola(10.0), a.policy, q0,
                                       NoiseModel::adversarial(0.015, 21), 0);
  EXPECT_TRUE(tr.steps.empty());
}

TEST(Alternating, PeriodicityChecker) {
  OrbitTrace tr;
  for (const char* r : {"R", "L", "L", "R", "R", "R", "L"}) {
    TraceStep s;
    s.region = r;
    tr.steps.push_back(s);
  }
  EXPECT_TRUE(occupancy_is_periodic(tr, 2, 3));
  tr.steps[2].region = "R";
  EXPECT_FALSE(occupancy_is_periodic(tr, 2, 3));
}
