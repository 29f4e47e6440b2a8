#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "slicejam/slicing.hpp"

using namespace slicejam;

namespace {

// Q(x) by composite Simpson integration of the normal density over [x, x + 12].
double tail_by_quadrature(double x) {
  const int n = 20000;
  const double a = x, b = x + 12.0, h = (b - a) / n;
  auto pdf = [](double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * M_PI); };
  double s = pdf(a) + pdf(b);
  for (int i = 1; i < n; ++i) s += pdf(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

Request demand(double min_rate) {
  Request r;
  r.min_rate = min_rate;
  return r;
}

}  // namespace

TEST(RateModel, ZeroBerGivesConstant) {
  RateModel m;
  m.ber_curve = [](double) { return 0.0; };
  EXPECT_DOUBLE_EQ(achievable_rate(2.0, m), 12.59e6);
}

TEST(RateModel, HalfBerGivesHalf) {
  RateModel m;
  m.ber_curve = [](double) { return 0.5; };
  EXPECT_DOUBLE_EQ(achievable_rate(2.0, m), 6.295e6);
}

TEST(RateModel, DefaultCurveAgainstQuadrature) {
  const double q = tail_by_quadrature(std::sqrt(3.0));
  EXPECT_NEAR(achievable_rate(1.5, RateModel{}), 12.59e6 * (1.0 - q), 1e-3);
}

TEST(RateModel, CarriersScale) {
  RateModel m;
  m.carriers = 3;
  EXPECT_DOUBLE_EQ(achievable_rate(2.0, m), 3.0 * achievable_rate(2.0, RateModel{}));
}

TEST(RateModel, NonPositiveSnrIsDomainError) {
  EXPECT_THROW(achievable_rate(0.0, RateModel{}), DomainError);
  EXPECT_THROW(achievable_rate(-1.0, RateModel{}), DomainError);
}

TEST(RateModel, BerMonotoneAndBounded) {
  double prev = 1.0;
  for (double snr = 1e-4; snr < 40.0; snr *= 1.3) {
    const double b = qpsk_ber(snr);
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 0.5);
    EXPECT_LE(b, prev);
    prev = b;
  }
}

TEST(RbsNeeded, ExactFit) { EXPECT_EQ(rbs_needed(demand(1e6), 1e6), 1); }

TEST(RbsNeeded, Ceiling) { EXPECT_EQ(rbs_needed(demand(2.5e6), 1e6), 3); }

TEST(RbsNeeded, RejectsNonPositiveRate) { EXPECT_THROW(rbs_needed(demand(1.0), 0.0), DomainError); }

TEST(RbsNeeded, SmallestSufficientCountOnSweep) {
  // brute force: count up from 1 until n * per_rb covers the demand
  for (double per_rb = 0.3e6; per_rb < 2.0e6; per_rb += 0.0731e6)
    for (double rate = 0.01e6; rate < 4.0e6; rate += 0.0137e6) {
      int n = 1;
      while (n * per_rb < rate) ++n;
      ASSERT_EQ(rbs_needed(demand(rate), per_rb), n) << rate << " / " << per_rb;
    }
}

TEST(RbsNeeded, DefaultScenarioNeedsOneOrTwo) {
  ScenarioParams p;
  std::map<int, int> seen;
  for (int i = 0; i <= 200; ++i)
    for (int j = 0; j <= 200; ++j) {
      const double snr = p.snr.lo + (p.snr.hi - p.snr.lo) * i / 200.0;
      const double rate = p.min_rate.lo + (p.min_rate.hi - p.min_rate.lo) * j / 200.0;
      const int n = rbs_needed(demand(rate), per_rb_rate(snr, p.rate, p.rbs));
      ASSERT_GE(n, 1);
      ASSERT_LE(n, 2);
      ++seen[n];
    }
  EXPECT_EQ(seen.size(), 2u);
  EXPECT_EQ(p.max_request_rbs(), 2);
}

TEST(Arrivals, MeanRate) {
  ScenarioParams p;
  Rng rng = make_rng(7, Stream::kArrivals);
  long total = 0;
  const int slots = 100000;
  for (int t = 0; t < slots; ++t) total += static_cast<long>(generate_arrivals(rng, t, p).size());
  EXPECT_NEAR(static_cast<double>(total) / slots, 1.5, 0.02);
}

TEST(Arrivals, ZeroProbabilityIsEmpty) {
  ScenarioParams p;
  p.arrival_prob = 0.0;
  Rng rng = make_rng(1, Stream::kArrivals);
  for (int t = 0; t < 1000; ++t) EXPECT_TRUE(generate_arrivals(rng, t, p).empty());
}

TEST(Arrivals, WeightMeanOverManyArrivals) {
  ScenarioParams p;
  Rng rng = make_rng(11, Stream::kArrivals);
  long n = 0;
  double sum = 0.0;
  for (int t = 0; n < 100000; ++t)
    for (const auto& r : generate_arrivals(rng, t, p)) {
      sum += r.weight;
      ++n;
    }
  EXPECT_NEAR(sum / static_cast<double>(n), 3.0, 0.05);
}

TEST(Arrivals, FieldsWithinRangesAndSized) {
  ScenarioParams p;
  Rng rng = make_rng(3, Stream::kArrivals);
  for (int t = 0; t < 5000; ++t)
    for (const auto& r : generate_arrivals(rng, t, p)) {
      ASSERT_GE(r.weight, 1);
      ASSERT_LE(r.weight, 5);
      ASSERT_GE(r.lifetime, 1);
      ASSERT_GE(r.deadline_slot, r.arrival_slot);
      ASSERT_EQ(r.arrival_slot, t);
      ASSERT_EQ(r.req_id, t * p.ue_count + r.ue_id);
      const double per_rb = per_rb_rate(r.snr, p.rate, p.rbs);
      ASSERT_GE(r.rbs * per_rb, r.min_rate);
      ASSERT_LT((r.rbs - 1) * per_rb, r.min_rate);
    }
}

TEST(Arrivals, ReplayIsIdentical) {
  ScenarioParams p;
  Rng a = make_rng(5, Stream::kArrivals), b = make_rng(5, Stream::kArrivals);
  for (int t = 0; t < 2000; ++t) {
    const auto x = generate_arrivals(a, t, p), y = generate_arrivals(b, t, p);
    ASSERT_EQ(x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      ASSERT_EQ(x[i].req_id, y[i].req_id);
      ASSERT_EQ(x[i].min_rate, y[i].min_rate);
      ASSERT_EQ(x[i].snr, y[i].snr);
    }
  }
}

TEST(Scenario, InvalidParamsRejected) {
  ScenarioParams p;
  p.arrival_prob = 1.5;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.lifetime = {3, 2};
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.weight = {0, 5};
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Pool, EmptyStepIsIdentity) {
  RbPool pool(5);
  const auto step = step_pool(pool, 10);
  EXPECT_EQ(step.released, 0u);
  EXPECT_EQ(step.pool.available(), full_mask(5));
}

TEST(Pool, SingleReleaseReturnsItsRbs) {
  RbPool pool(11);
  Request r;
  r.req_id = 9;
  pool.grant({r, mask_of({3, 7}), 2, 4});
  auto step = step_pool(pool, 4);
  EXPECT_EQ(step.released, 0u);
  step = step_pool(step.pool, 5);
  EXPECT_EQ(step.released, mask_of({3, 7}));
  EXPECT_EQ(step.pool.available(), full_mask(11));
}

TEST(Pool, GrantRejectsBusyRbs) {
  RbPool pool(4);
  pool.grant({Request{}, mask_of({1}), 0, 0});
  EXPECT_THROW(pool.grant({Request{}, mask_of({1, 2}), 0, 0}), InternalError);
  EXPECT_THROW(pool.grant({Request{}, 0, 0, 0}), InternalError);
}

TEST(Pool, RandomTraceConserves) {
  const int F = 11;
  RbPool pool(F);
  Rng rng(99);
  std::int64_t id = 0;
  for (std::int64_t t = 0; t < 10000; ++t) {
    const RbMask before_free = pool.available();
    auto step = step_pool(pool, t);
    pool = std::move(step.pool);
    ASSERT_EQ(pool.available(), before_free | step.released);
    ASSERT_EQ(before_free & step.released, 0u);
    for (int k = 0; k < 3; ++k) {
      const int want = uniform_int(rng, 1, 3);
      RbMask pick = 0;
      for (int rb : rb_indices(pool.available()))
        if (popcount(pick) < want && uniform01(rng) < 0.5) pick |= RbMask{1} << rb;
      if (pick == 0) continue;
      Request r;
      r.req_id = id++;
      pool.grant({r, pick, t, t + uniform_int(rng, 0, 9)});
    }
    int held = 0;
    for (const auto& s : pool.services()) held += popcount(s.rb_set);
    ASSERT_EQ(pool.free_count() + held, F);
    ASSERT_TRUE(pool.invariants_hold());
  }
}
