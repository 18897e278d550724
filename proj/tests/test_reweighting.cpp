#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "grw/error.hpp"
#include "grw/reweighting.hpp"

using namespace grw;

namespace {

std::size_t support(const Vector& q) {
  return static_cast<std::size_t>(std::count_if(q.begin(), q.end(), [](double v) { return v > 0.0; }));
}

}  // namespace

TEST(ErmWeights, Uniform) {
  for (std::size_t n : {1u, 4u, 6u}) {
    const WeightState w = erm_weights(n);
    ASSERT_EQ(w.q.size(), n);
    for (double q : w.q) EXPECT_DOUBLE_EQ(q, 1.0 / static_cast<double>(n));
  }
  EXPECT_THROW(erm_weights(0), Error);
}

TEST(IwWeights, PaperImbalance) {
  const WeightState w = iw_weights(GroupInfo::from_sizes({5, 1}));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(w.q[i], 0.1);
  EXPECT_DOUBLE_EQ(w.q[5], 0.5);
}

TEST(IwWeights, SingleGroupIsErm) {
  const WeightState w = iw_weights(GroupInfo::from_sizes({4}));
  for (double q : w.q) EXPECT_DOUBLE_EQ(q, 0.25);
}

TEST(IwWeights, BalancedIsErm) {
  const WeightState w = iw_weights(GroupInfo::from_sizes({2, 2, 2}));
  for (double q : w.q) EXPECT_NEAR(q, 1.0 / 6.0, 1e-16);
}

TEST(IwWeights, WeightedRiskIsBalancedRisk) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const GroupInfo g = GroupInfo::from_labels({0, 2, 1, 0, 2, 2, 1, 0});
    Vector losses(8);
    for (double& l : losses) l = u(rng);
    const WeightState w = iw_weights(g);
    const Vector r = group_risks(losses, g);
    const double balanced = std::accumulate(r.begin(), r.end(), 0.0) / 3.0;
    EXPECT_NEAR(dot(w.q, losses), balanced, 1e-14);
  }
}

TEST(GdroStep, EqualRisksLeaveWeightsUnchanged) {
  const GroupInfo g = GroupInfo::from_sizes({3, 2});
  WeightState s = gdro_init(g);
  s = gdro_step(s, Vector{0.4, 0.4}, 0.5, g);
  EXPECT_NEAR((*s.gdro_g)[0], 0.5, 1e-16);
  EXPECT_NEAR((*s.gdro_g)[1], 0.5, 1e-16);
}

TEST(GdroStep, HandComputedUpdate) {
  const GroupInfo g = GroupInfo::from_sizes({1, 1});
  const WeightState s = gdro_step(gdro_init(g), Vector{1.0, 2.0}, 0.1, g);
  EXPECT_NEAR((*s.gdro_g)[0], 0.475020812521060, 1e-12);
  EXPECT_NEAR((*s.gdro_g)[1], 0.524979187478940, 1e-12);
  EXPECT_EQ(s.q, *s.gdro_g);
}

TEST(GdroStep, SmallNuIsContinuous) {
  const GroupInfo g = GroupInfo::from_sizes({2, 1, 1});
  const WeightState s0 = gdro_init(g);
  for (double nu : {1e-2, 1e-4, 1e-6}) {
    const WeightState s = gdro_step(s0, Vector{1.0, 0.0, 3.0}, nu, g);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_LE(std::abs((*s.gdro_g)[k] - (*s0.gdro_g)[k]), 3.0 * nu);
  }
}

TEST(GdroStep, ShiftInvariance) {
  const GroupInfo g = GroupInfo::from_sizes({2, 3, 1});
  WeightState s = gdro_init(g);
  s = gdro_step(s, Vector{0.3, 0.9, 0.1}, 0.2, g);
  const WeightState a = gdro_step(s, Vector{1.0, 2.0, 0.5}, 0.2, g);
  const WeightState b = gdro_step(s, Vector{6.0, 7.0, 5.5}, 0.2, g);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR((*a.gdro_g)[k], (*b.gdro_g)[k], 1e-15);
}

TEST(GdroStep, QSpreadsGroupWeightOverMembers) {
  const GroupInfo g = GroupInfo::from_sizes({4, 1});
  const WeightState s = gdro_step(gdro_init(g), Vector{0.0, 1.0}, 1.0, g);
  const double g0 = (*s.gdro_g)[0];
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(s.q[i], g0 / 4.0);
  EXPECT_DOUBLE_EQ(s.q[4], (*s.gdro_g)[1]);
}

TEST(GdroStep, RejectsBadInput) {
  const GroupInfo g = GroupInfo::from_sizes({1, 1});
  EXPECT_THROW(gdro_step(gdro_init(g), Vector{1.0, 2.0}, 0.0, g), Error);
  EXPECT_THROW(gdro_step(gdro_init(g), Vector{1.0, NAN}, 0.1, g), Error);
  EXPECT_THROW(gdro_step(gdro_init(g), Vector{1.0}, 0.1, g), Error);
}

TEST(GdroStep, LongRunStaysOnSimplex) {
  const GroupInfo g = GroupInfo::from_sizes({5, 1});
  WeightState s = gdro_init(g);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int t = 0; t < 100000; ++t) {
    s = gdro_step(s, Vector{u(rng), u(rng)}, 0.01, g);
    ASSERT_LE(simplex_violation(s), 1e-12);
  }
}

TEST(CvarWeights, FullSupportIsErm) {
  const WeightState w = cvar_weights(Vector{3.0, 1.0, 2.0, 5.0}, 1.0);
  for (double q : w.q) EXPECT_DOUBLE_EQ(q, 0.25);
}

TEST(CvarWeights, SingleWorstSample) {
  EXPECT_EQ(cvar_weights(Vector{3.0, 1.0, 2.0}, 1.0 / 3.0).q, (Vector{1.0, 0.0, 0.0}));
}

TEST(CvarWeights, TiesGoToLowestIndex) {
  EXPECT_EQ(cvar_weights(Vector{2.0, 2.0, 1.0}, 2.0 / 3.0).q, (Vector{0.5, 0.5, 0.0}));
  EXPECT_EQ(cvar_weights(Vector{1.0, 1.0, 1.0}, 1.0 / 3.0).q, (Vector{1.0, 0.0, 0.0}));
}

TEST(CvarWeights, SupportSizeProperty) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> small(0, 3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + trial % 12;
    Vector losses(n);
    for (double& l : losses) l = small(rng) == 0 ? 0.5 : u(rng);
    const double alpha = std::max(1e-3, u(rng));
    const WeightState w = cvar_weights(losses, alpha);
    const auto m = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(n) - 1e-9));
    EXPECT_EQ(support(w.q), std::max<std::size_t>(1, m));
    EXPECT_LE(simplex_violation(w), 1e-12);
  }
}

TEST(CvarWeights, RejectsBadAlpha) {
  EXPECT_THROW(cvar_weights(Vector{1.0}, 0.0), Error);
  EXPECT_THROW(cvar_weights(Vector{1.0}, 1.5), Error);
}

TEST(Assumption1, ConstantHistory) {
  const std::vector<Vector> h(50, Vector{0.2, 0.3, 0.5});
  const Assumption1Report r = check_assumption1(h, 20, 1e-4);
  EXPECT_TRUE(r.satisfied);
  EXPECT_DOUBLE_EQ(r.q_star, 0.2);
  EXPECT_EQ(r.t_eps, 0u);
}

TEST(Assumption1, VanishingCoordinate) {
  std::vector<Vector> h;
  for (int t = 0; t < 3000; ++t) {
    const double v = 0.5 * std::exp(-0.01 * t);
    h.push_back(Vector{v, 1.0 - v});
  }
  const Assumption1Report r = check_assumption1(h);
  EXPECT_FALSE(r.satisfied);
  EXPECT_EQ(r.q_star, 0.0);
}

TEST(Assumption1, SettlingHistoryReportsTEps) {
  std::vector<Vector> h;
  for (int t = 0; t < 2000; ++t) {
    const double v = 0.3 + 0.2 * std::exp(-0.05 * t);
    h.push_back(Vector{v, 1.0 - v});
  }
  const Assumption1Report r = check_assumption1(h);
  EXPECT_TRUE(r.satisfied);
  EXPECT_NEAR(r.q_star, 0.3, 1e-4);
  EXPECT_GT(r.t_eps, 100u);
  EXPECT_LT(r.t_eps, 300u);
}

TEST(Assumption1, EmptyHistoryNotSatisfied) {
  const Assumption1Report r = check_assumption1({});
  EXPECT_FALSE(r.satisfied);
  EXPECT_EQ(r.q_star, 0.0);
}

TEST(Schemes, ParsePrintAndDynamics) {
  EXPECT_EQ(parse_scheme("erm"), Scheme(ErmScheme{}));
  EXPECT_EQ(parse_scheme("iw"), Scheme(IwScheme{}));
  EXPECT_EQ(parse_scheme("gdro:0.001"), Scheme(GdroScheme{0.001}));
  EXPECT_EQ(parse_scheme("cvar:0.25"), Scheme(CvarScheme{0.25}));
  for (const char* s : {"erm", "iw", "gdro:0.5", "cvar:0.1"}) EXPECT_EQ(parse_scheme(to_string(parse_scheme(s))), parse_scheme(s));
  EXPECT_FALSE(is_dynamic(ErmScheme{}));
  EXPECT_FALSE(is_dynamic(IwScheme{}));
  EXPECT_TRUE(is_dynamic(GdroScheme{}));
  EXPECT_TRUE(is_dynamic(CvarScheme{}));
  EXPECT_THROW(parse_scheme("dro"), Error);
  EXPECT_THROW(parse_scheme("gdro:-1"), Error);
  EXPECT_THROW(parse_scheme("cvar:2"), Error);
}

TEST(Schemes, StaticNextWeightsUnchanged) {
  const GroupInfo g = GroupInfo::from_sizes({2, 1});
  const WeightState w0 = initial_weights(IwScheme{}, g);
  const WeightState w1 = next_weights(IwScheme{}, w0, Vector{1.0, 2.0, 3.0}, g);
  EXPECT_EQ(w1.q, w0.q);
}

TEST(Schemes, GdroStartsAtIwWeights) {
  const GroupInfo g = GroupInfo::from_sizes({5, 1});
  EXPECT_EQ(initial_weights(GdroScheme{}, g).q, iw_weights(g).q);
}

TEST(Schemes, EveryStepOnSimplex) {
  const GroupInfo g = GroupInfo::from_labels({0, 1, 1, 2, 0, 0, 2});
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (const Scheme& s : {Scheme(ErmScheme{}), Scheme(IwScheme{}), Scheme(GdroScheme{0.3}), Scheme(CvarScheme{0.4})}) {
    WeightState w = initial_weights(s, g);
    for (int t = 0; t < 1000; ++t) {
      Vector losses(7);
      for (double& l : losses) l = u(rng);
      w = next_weights(s, w, losses, g);
      ASSERT_LE(simplex_violation(w), 1e-12) << to_string(s);
    }
  }
}

TEST(GroupInfo, Validation) {
  EXPECT_THROW(GroupInfo::from_labels({0, 2}), Error);
  EXPECT_THROW(GroupInfo::from_sizes({3, 0}), Error);
  const GroupInfo g = GroupInfo::from_sizes({2, 1});
  EXPECT_EQ(g.labels, (std::vector<std::size_t>{0, 0, 1}));
  EXPECT_EQ(group_risks(Vector{1.0, 3.0, 5.0}, g), (Vector{2.0, 5.0}));
}
