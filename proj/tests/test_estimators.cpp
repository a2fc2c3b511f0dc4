#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "ane/estimators.hpp"
#include "oracles.hpp"

using namespace ane;

namespace {

IndicatorSet from_values(std::vector<double> v) {
  IndicatorSet s;
  s.values = std::move(v);
  return s;
}

// Smallest number of cells whose squared indicators reach gamma1 of the
// total, by exhaustive subset search.
std::size_t minimal_bulk_size(const std::vector<double>& v, double gamma1) {
  double total = 0.0;
  for (double x : v) total += x * x;
  const std::size_t n = v.size();
  std::size_t best = n;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    double s = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        s += v[i] * v[i];
        ++k;
      }
    }
    if (s >= gamma1 * total) best = std::min(best, k);
  }
  return best;
}

}  // namespace

TEST(FitIndicators, SumOfSquaresEqualsUnpartitionedNorm) {
  const auto t = target_transition(0.05);
  const auto grid = make_grid(t.domain, 60);
  const FunctionFitObjective obj(t, grid);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Network net = oracle::random_network(Architecture({5, 3}), rng);
    const auto pp = physical_partition(net, t.domain);
    const auto ind = fn_indicators(obj, net, pp);
    const double norm = discrete_norm(grid, sample(t.f, grid.points) - forward(net, grid.points));
    EXPECT_NEAR(std::sqrt(ind.sum_of_squares()), norm, 1e-12 * std::max(1.0, norm));
    EXPECT_NEAR(ind.total * ind.normalizer, std::sqrt(ind.sum_of_squares()), 1e-14);
    EXPECT_EQ(ind.values.size(), pp.size());
  }
}

TEST(FitIndicators, SingleCellEqualsTotal) {
  const auto t = target_transition(0.05);
  const auto grid = make_grid(t.domain, 30);
  const FunctionFitObjective obj(t, grid);
  const Network net = Network::zeros(Architecture({1}));  // line x = 0 splits the square
  Network far = net;
  far.first.biases << 5.0;
  const auto pp = physical_partition(far, t.domain);
  ASSERT_EQ(pp.size(), 1u);
  const auto ind = fn_indicators(obj, far, pp);
  EXPECT_NEAR(ind.values[0] / ind.normalizer, ind.total, 1e-15);
}

TEST(FitIndicators, ExactFitGivesZero) {
  FunctionTarget t;
  t.domain = RectDomain(-1, 1, -1, 1);
  t.f = [](const Point& p) { return std::max(p.x(), 0.0) + 1.0; };
  Network net = Network::zeros(Architecture({1}));
  net.output.weights << 1.0;
  net.output.bias = -1.0;
  const auto grid = make_grid(t.domain, 20);
  const FunctionFitObjective obj(t, grid);
  const auto ind = fn_indicators(obj, net, physical_partition(net, t.domain));
  EXPECT_EQ(ind.total, 0.0);
  for (double v : ind.values) EXPECT_EQ(v, 0.0);
}

TEST(FitIndicators, EmptyCellIsFlagged) {
  FunctionTarget t = target_transition(0.1);
  const auto grid = make_grid(t.domain, 2);  // points at (+-0.5, +-0.5)
  const FunctionFitObjective obj(t, grid);
  Network net = Network::zeros(Architecture({2}));
  net.first.angles << 0.0, 0.0;
  net.first.biases << 0.1, 0.2;  // thin strip 0.1 < x < 0.2 holds no point
  const auto pp = physical_partition(net, t.domain);
  const auto ind = fn_indicators(obj, net, pp);
  ASSERT_EQ(ind.empty_cells.size(), 1u);
  EXPECT_EQ(ind.values[static_cast<std::size_t>(ind.empty_cells[0])], 0.0);
}

TEST(LsnnIndicators, SumOfSquaresEqualsFunctional) {
  for (const auto& p : {problem_two_segments(), problem_nonconstant_jump()}) {
    const auto grid = make_grid(p.domain, 40);
    const auto inflow = inflow_mesh(p.domain, p.beta, 40);
    const LsnnObjective obj(p, grid, inflow);
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
      const Network net = oracle::random_network(Architecture({6, 4}), rng);
      const auto pp = physical_partition(net, p.domain);
      const auto ind = lsnn_indicators(obj, net, pp);
      const double lt = obj.loss(net);
      EXPECT_NEAR(ind.sum_of_squares(), lt, 1e-12 * std::max(1.0, lt));
      EXPECT_NEAR(ind.total, std::sqrt(lt), 1e-12 * std::max(1.0, lt));
    }
  }
}

TEST(LsnnIndicators, TrivialProblemZeroNetwork) {
  AdvectionProblem p;
  p.domain = RectDomain(0, 1, 0, 1);
  p.beta = [](const Point&) { return Point(1.0, 0.0); };
  p.gamma = [](const Point&) { return 0.0; };
  p.f = [](const Point&) { return 0.0; };
  p.g = [](const Point&) { return 0.0; };
  const auto grid = make_grid(p.domain, 10);
  const auto inflow = inflow_mesh(p.domain, p.beta, 10);
  const LsnnObjective obj(p, grid, inflow);
  const Network net = Network::zeros(Architecture({3}));
  EXPECT_EQ(lsnn_indicators(obj, net, physical_partition(net, p.domain)).total, 0.0);
}

TEST(LsnnIndicators, AffineExactSolutionIsResolved) {
  // u = 1 + x + y is representable (one neuron active everywhere plus a
  // constant) and solves beta . grad u + u = f for f = 2 + 1 + x + y.
  AdvectionProblem p;
  p.domain = RectDomain(0, 1, 0, 1);
  p.beta = [](const Point&) { return Point(1.0, 1.0); };
  p.gamma = [](const Point&) { return 1.0; };
  p.f = [](const Point& x) { return 3.0 + x.x() + x.y(); };
  p.g = [](const Point& x) { return 1.0 + x.x() + x.y(); };
  Network net = Network::zeros(Architecture({1}));
  net.first.angles << M_PI / 4;
  net.first.biases << -1.0;  // (x + y)/sqrt2 + 1 > 0 on the square
  net.output.weights << std::sqrt(2.0);
  net.output.bias = std::sqrt(2.0) - 1.0;
  const auto grid = make_grid(p.domain, 20);
  const auto inflow = inflow_mesh(p.domain, p.beta, 20);
  const LsnnObjective obj(p, grid, inflow);
  EXPECT_LT(lsnn_indicators(obj, net, physical_partition(net, p.domain)).total, 1e-12);
}

TEST(MarkAverage, Examples) {
  EXPECT_EQ(mark_average(from_values({2.0, 2.0, 2.0})), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(mark_average(from_values({3.0, 1.0, 1.0, 1.0})), std::vector<int>{0});
  EXPECT_TRUE(mark_average(from_values({})).empty());
}

TEST(MarkAverage, MatchesDirectRecomputation) {
  std::mt19937_64 rng(14);
  std::exponential_distribution<double> e(1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(1 + trial % 20);
    for (double& x : v) x = e(rng);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    std::vector<int> expect;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] >= mean) expect.push_back(static_cast<int>(i));
    }
    EXPECT_EQ(mark_average(from_values(v)), expect);
  }
}

TEST(MarkBulk, Examples) {
  // squared values {4,3,2,1}
  const auto s = from_values({2.0, std::sqrt(3.0), std::sqrt(2.0), 1.0});
  EXPECT_EQ(mark_bulk(s, 0.5), (std::vector<int>{0, 1}));
  EXPECT_EQ(mark_bulk(s, 0.999999), (std::vector<int>{0, 1, 2, 3}));
  EXPECT_TRUE(mark_bulk(from_values({0.0, 0.0}), 0.5).empty());
  EXPECT_THROW(mark_bulk(s, 0.0), std::invalid_argument);
  EXPECT_THROW(mark_bulk(s, 1.0), std::invalid_argument);
}

TEST(MarkBulk, TiesBrokenByCellId) {
  EXPECT_EQ(mark_bulk(from_values({1.0, 2.0, 2.0, 1.0}), 0.3), std::vector<int>{1});
  EXPECT_EQ(mark_bulk(from_values({1.0, 2.0, 2.0, 1.0}), 0.5), (std::vector<int>{1, 2}));
}

TEST(MarkBulk, PrefixIsMinimal) {
  std::mt19937_64 rng(21);
  std::exponential_distribution<double> e(1.0);
  std::uniform_real_distribution<double> g(0.05, 0.95);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + trial % 15);
    for (double& x : v) x = e(rng);
    const double gamma1 = g(rng);
    const auto marked = mark_bulk(from_values(v), gamma1);
    EXPECT_EQ(marked.size(), minimal_bulk_size(v, gamma1));
    double total = 0.0;
    double got = 0.0;
    for (double x : v) total += x * x;
    for (int id : marked) got += v[static_cast<std::size_t>(id)] * v[static_cast<std::size_t>(id)];
    EXPECT_GE(got, gamma1 * total);
  }
}

TEST(MarkBulk, MonotoneInGammaAndScaleInvariant) {
  std::mt19937_64 rng(31);
  std::exponential_distribution<double> e(1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(12);
    for (double& x : v) x = e(rng);
    auto small = mark_bulk(from_values(v), 0.3);
    auto large = mark_bulk(from_values(v), 0.7);
    std::sort(small.begin(), small.end());
    std::sort(large.begin(), large.end());
    EXPECT_TRUE(std::includes(large.begin(), large.end(), small.begin(), small.end()));
    std::vector<double> scaled = v;
    for (double& x : scaled) x *= 7.5;
    EXPECT_EQ(mark_bulk(from_values(scaled), 0.5), mark_bulk(from_values(v), 0.5));
    EXPECT_EQ(mark_average(from_values(scaled)), mark_average(from_values(v)));
  }
}

TEST(ImprovementRate, TableValues) {
  EXPECT_NEAR(improvement_rate(0.357414, 0.323118, 37, 55, 1.0), 0.293198, 1e-5);
  EXPECT_NEAR(improvement_rate(0.323118, 0.272614, 55, 93, 1.0), 0.382528, 1e-5);
  EXPECT_NEAR(improvement_rate(0.323118, 0.025483, 55, 137, 1.0), 1.538967, 1e-5);
}

TEST(ImprovementRate, EdgeCases) {
  EXPECT_EQ(improvement_rate(0.3, 0.3, 10, 20, 1.0), 0.0);
  EXPECT_THROW(improvement_rate(0.0, 0.1, 10, 20, 1.0), std::domain_error);
  EXPECT_THROW(improvement_rate(0.3, 0.1, 20, 20, 1.0), std::invalid_argument);
  EXPECT_THROW(improvement_rate(0.3, 0.1, 10, 20, 0.0), std::invalid_argument);
  // r = 2: growth (400 - 100) / 400
  EXPECT_NEAR(improvement_rate(1.0, 0.25, 10, 20, 2.0), 0.75 / 0.75, 1e-15);
}

TEST(LsnnIndicators, DifferenceRuleKeepsTheIdentity) {
  const auto p = problem_two_segments();
  const auto grid = make_grid(p.domain, 30);
  const auto inflow = inflow_mesh(p.domain, p.beta, 30);
  const LsnnObjective obj(p, grid, inflow, SlopeRule::kCentralDifference);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const Network net = oracle::random_network(Architecture({6, 3}), rng);
    const auto ind = lsnn_indicators(obj, net, physical_partition(net, p.domain));
    EXPECT_NEAR(ind.sum_of_squares(), obj.loss(net), 1e-12 * std::max(1.0, obj.loss(net)));
  }
}
