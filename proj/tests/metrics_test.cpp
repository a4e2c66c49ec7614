#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "rcti/rcti.hpp"

using namespace rcti;

namespace {

void expect_rel(double actual, double expected, double tol) {
  EXPECT_LE(std::abs(actual - expected), tol * std::abs(expected)) << actual << " vs " << expected;
}

int rank(Elasticity e) {
  switch (e) {
    case Elasticity::EcoCritical: return 0;
    case Elasticity::EcoCostly: return 1;
    case Elasticity::EcoNeutral: return 2;
    case Elasticity::EcoEfficient: return 3;
    case Elasticity::EcoIdeal: return 4;
  }
  return -1;
}

ModelMeasurement m(double eps, double perf, double carbon) {
  return {eps, perf, carbon, CarbonBasis::Energy, "attack+eval"};
}

}  // namespace

TEST(Robustness, ReferenceValues) {
  expect_rel(compute_robustness(0.9506, 0.8370).value, 0.13570, 5e-4);
  expect_rel(compute_robustness(0.9174, 0.3031).value, 2.02672, 5e-4);
  EXPECT_EQ(compute_robustness(0.42, 0.42).value, 0.0);
  EXPECT_TRUE(compute_robustness(0.02, 0.0).is_infinite());
  EXPECT_TRUE(compute_robustness(0.0, 0.0).no_change);
  EXPECT_THROW(compute_robustness(-0.1, 0.5), std::invalid_argument);
}

TEST(Robustness, ScaleInvariant) {
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const double p = rng.uniform(0.0, 1.0), b = rng.uniform(0.01, 1.0), k = rng.uniform(0.1, 100.0);
    EXPECT_NEAR(compute_robustness(k * p, k * b).value, compute_robustness(p, b).value,
                1e-12 * std::max(1.0, std::abs(compute_robustness(p, b).value)));
  }
}

TEST(CarbonDelta, ReferenceValues) {
  expect_rel(compute_carbon_delta(4.814e-4, 3.36e-4), 0.429, 0.01);
  expect_rel(compute_carbon_delta(3.068e-5, 3.63e-5), -0.159, 0.03);
  EXPECT_EQ(compute_carbon_delta(2.5, 2.5), 0.0);
  EXPECT_THROW(compute_carbon_delta(1.0, 0.0), std::invalid_argument);
}

TEST(Rcti, ReferenceValues) {
  expect_rel(compute_rcti(0.41401, Ratio::finite(2.02672)).value, 0.20427, 1e-3);
  expect_rel(compute_rcti(-0.159, Ratio::finite(-0.01077)).value, 14.73085, 3e-3);
  expect_rel(compute_rcti(0.473309, Ratio::finite(86.3043)).value, 0.005484, 1e-3);
  for (double x : {-3.0, -0.2, 1e-9, 0.5, 42.0}) EXPECT_EQ(compute_rcti(x, Ratio::finite(x)).value, 1.0);
}

TEST(Rcti, SentinelsAndDegenerateCases) {
  EXPECT_TRUE(compute_rcti(0.00043, Ratio::infinite()).is_infinite());
  EXPECT_TRUE(compute_rcti(0.0, Ratio::infinite()).is_infinite());
  EXPECT_TRUE(compute_rcti(0.2, Ratio::finite(0.0)).is_infinite());
  EXPECT_TRUE(compute_rcti(0.2, Ratio::undefined()).is_infinite());
  EXPECT_TRUE(compute_rcti(0.0, Ratio::finite(0.0)).no_change);
  EXPECT_TRUE(compute_rcti(0.0, Ratio::undefined()).no_change);
}

TEST(Rcti, NeverNegativeAndMatchesQuotient) {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double dc = rng.uniform(-5.0, 5.0), dr = rng.uniform(-5.0, 5.0);
    if (dr == 0.0) continue;
    const auto r = compute_rcti(dc, Ratio::finite(dr));
    EXPECT_GE(r.value, 0.0);
    EXPECT_EQ(r.value, std::abs(dc / dr));
  }
}

TEST(Classify, ReferenceClasses) {
  EXPECT_EQ(classify_elasticity(14.73085), Elasticity::EcoCostly);
  EXPECT_EQ(classify_elasticity(0.49921), Elasticity::EcoEfficient);
  EXPECT_EQ(classify_elasticity(kInfinity), Elasticity::EcoCritical);
  EXPECT_EQ(classify_elasticity(1.0), Elasticity::EcoNeutral);
  EXPECT_EQ(classify_elasticity(0.0), Elasticity::EcoIdeal);
  EXPECT_EQ(classify_elasticity(100.5), Elasticity::EcoCritical);
  EXPECT_EQ(classify_elasticity(100.0), Elasticity::EcoCostly);
  EXPECT_EQ(classify_elasticity(1.0 + 5e-7), Elasticity::EcoNeutral);
  EXPECT_EQ(classify_elasticity(5e-7), Elasticity::EcoIdeal);
  EXPECT_EQ(classify_elasticity(Ratio::undefined()), Elasticity::EcoNeutral);
  EXPECT_THROW(classify_elasticity(-0.1), std::invalid_argument);
  EXPECT_THROW(classify_elasticity(std::nan("")), std::invalid_argument);
}

TEST(Classify, MonotoneFromCriticalToIdeal) {
  const RctiThresholds t;
  std::vector<double> values{kInfinity, 1e6, 100.0001, 99.0, 14.7, 1.5, 1.0 + 2e-6, 1.0, 1.0 - 2e-6, 0.5, 1e-3, 1e-6, 0.0};
  int last = -1;
  for (double v : values) {
    const int r = rank(classify_elasticity(v, t));
    EXPECT_GE(r, last) << v;
    last = r;
  }
  Rng rng(4);
  for (int i = 0; i < 2000; ++i) {
    const double a = std::exp(rng.uniform(-20.0, 10.0)), b = std::exp(rng.uniform(-20.0, 10.0));
    if (a > b) {
      EXPECT_LE(rank(classify_elasticity(a)), rank(classify_elasticity(b)));
    }
  }
}

TEST(Classify, ConfigurableThresholds) {
  RctiThresholds t{10.0, 1e-3};
  EXPECT_EQ(classify_elasticity(14.73, t), Elasticity::EcoCritical);
  EXPECT_EQ(classify_elasticity(1.0005, t), Elasticity::EcoNeutral);
  EXPECT_THROW((RctiThresholds{0.5, 1e-6}.validate()), std::invalid_argument);
  EXPECT_THROW((RctiThresholds{100.0, -1.0}.validate()), std::invalid_argument);
}

TEST(Classify, NamesRoundTrip) {
  for (auto e : {Elasticity::EcoCritical, Elasticity::EcoCostly, Elasticity::EcoNeutral, Elasticity::EcoEfficient,
                 Elasticity::EcoIdeal})
    EXPECT_EQ(parse_elasticity(to_string(e)), e);
  EXPECT_THROW(parse_elasticity("Eco-Fancy"), std::invalid_argument);
}

TEST(Sweep, ReferenceTablePairs) {
  struct Row {
    double dr, dc, rcti;
    Elasticity cls;
  };
  const Row rows[] = {
      {-0.01077, -0.159, 14.73085, Elasticity::EcoCostly},   {0.13570, 0.429, 3.15769, Elasticity::EcoCostly},
      {2.02672, 0.41401, 0.20427, Elasticity::EcoEfficient}, {23.7521, 0.44954, 0.01892, Elasticity::EcoEfficient},
      {86.3043, 0.473309, 0.005484, Elasticity::EcoEfficient}, {43.6129, 0.454810, 0.010428, Elasticity::EcoEfficient},
      {0.25641, 0.128, 0.49921, Elasticity::EcoEfficient},   {12.14285, 0.28723, 0.02365, Elasticity::EcoEfficient},
      {86.0, 0.301158, 0.00350, Elasticity::EcoEfficient},
  };
  for (const auto& r : rows) {
    const auto rcti = compute_rcti(r.dc, Ratio::finite(r.dr));
    expect_rel(rcti.value, r.rcti, 3e-3);  // the printed inputs are rounded
    EXPECT_EQ(classify_elasticity(rcti), r.cls);
  }
  for (double dc : {0.00043, 0.00053}) {
    const auto rcti = compute_rcti(dc, Ratio::infinite());
    EXPECT_TRUE(rcti.is_infinite());
    EXPECT_EQ(classify_elasticity(rcti), Elasticity::EcoCritical);
  }
}

TEST(Sweep, IdenticalModelIsNoChange) {
  const std::vector<ModelMeasurement> models{m(0.1, 0.8, 2.0)};
  const auto out = run_rcti_sweep(m(0.1, 0.8, 2.0), models);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].delta_r.value, 0.0);
  EXPECT_EQ(out[0].delta_c, 0.0);
  EXPECT_TRUE(out[0].no_change());
  EXPECT_EQ(out[0].elasticity, Elasticity::EcoNeutral);
}

TEST(Sweep, PermutingInputsPermutesOutputs) {
  std::vector<ModelMeasurement> models{m(0.1, 0.9, 3.0), m(0.2, 0.7, 2.0), m(0.3, 0.5, 4.0), m(0.4, 0.1, 1.0)};
  const auto base = m(0.0, 0.6, 2.5);
  const auto forward_order = run_rcti_sweep(base, models);
  std::reverse(models.begin(), models.end());
  auto reversed = run_rcti_sweep(base, models);
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_EQ(forward_order, reversed);
}

TEST(Sweep, RejectsMixedBasesAndEmptyInput) {
  auto other = m(0.1, 0.5, 1.0);
  other.basis = CarbonBasis::Emissions;
  const std::vector<ModelMeasurement> mixed{other};
  EXPECT_THROW(run_rcti_sweep(m(0.0, 0.6, 1.0), mixed), std::invalid_argument);
  auto spans = m(0.1, 0.5, 1.0);
  spans.span_set = "train+attack+eval";
  const std::vector<ModelMeasurement> mixed_spans{spans};
  EXPECT_THROW(run_rcti_sweep(m(0.0, 0.6, 1.0), mixed_spans), std::invalid_argument);
  EXPECT_THROW(run_rcti_sweep(m(0.0, 0.6, 1.0), std::vector<ModelMeasurement>{}), std::invalid_argument);
}

TEST(Sweep, CarbonBasisInvariance) {
  Rng rng(9);
  const double intensity = 475.0;
  for (int i = 0; i < 200; ++i) {
    const double cb = rng.uniform(1e-6, 1e-3), ci = rng.uniform(1e-6, 1e-3);
    const double pb = rng.uniform(0.0, 1.0), pi = rng.uniform(0.0, 1.0);
    auto eb = m(0.1, pb, cb), ei = m(0.1, pi, ci);
    auto gb = m(0.1, pb, compute_emissions(cb, intensity)), gi = m(0.1, pi, compute_emissions(ci, intensity));
    gb.basis = gi.basis = CarbonBasis::Emissions;
    const auto by_energy = score(eb, ei);
    const auto by_emissions = score(gb, gi);
    EXPECT_NEAR(by_energy.delta_c, by_emissions.delta_c, 1e-9 * std::max(1.0, std::abs(by_energy.delta_c)));
    EXPECT_EQ(by_energy.delta_r, by_emissions.delta_r);
  }
}
