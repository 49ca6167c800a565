#include <gtest/gtest.h>

#include "ard/analysis/attention.hpp"
#include "ard/analysis/eval.hpp"
#include "ard/analysis/flops.hpp"
#include "ard/analysis/report.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace ard;
using namespace ard::testing;

namespace {

PointSet gaussian_points(Rng& rng, std::size_t n, std::size_t dim, double shift) {
  PointSet p;
  p.dim = dim;
  for (std::size_t i = 0; i < n * dim; ++i) p.data.push_back(rng.normal() + shift);
  return p;
}

double kernel(const PointSet& a, std::size_t i, const PointSet& b, std::size_t j, double bw) {
  double d2 = 0.0;
  for (std::size_t k = 0; k < a.dim; ++k) {
    const double t = a.row(i)[k] - b.row(j)[k];
    d2 += t * t;
  }
  return std::exp(-d2 / (2.0 * bw * bw));
}

// Direct U-statistic.
double mmd2_oracle(const PointSet& a, const PointSet& b, double bw) {
  const double m = a.size(), n = b.size();
  double xx = 0, yy = 0, xy = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if (i != j) xx += kernel(a, i, a, j, bw);
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      if (i != j) yy += kernel(b, i, b, j, bw);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) xy += kernel(a, i, b, j, bw);
  return xx / (m * (m - 1)) + yy / (n * (n - 1)) - 2 * xy / (m * n);
}

PointSet drop(const PointSet& p, std::size_t i) {
  PointSet q;
  q.dim = p.dim;
  for (std::size_t r = 0; r < p.size(); ++r)
    if (r != i) q.data.insert(q.data.end(), p.row(r), p.row(r) + p.dim);
  return q;
}

// Per-layer MACs written out for one evaluation without history.
double eval_macs(const ArchDims& a) {
  const double T = a.tokens, d = a.d_model;
  const double layer = 4 * T * d * d + 2 * T * T * d + 2 * a.mlp_ratio * T * d * d;
  const double io = T * a.patch * a.patch * a.channels * d * (1.0 + double(a.out_channels) / a.channels);
  const double cond = (6.0 * a.L + 2) * d * d + (a.time_freq ? a.time_freq * d + d * d : 0.0);
  return a.L * layer + io + cond;
}

}  // namespace

TEST(Mmd, MatchesTheDirectUStatistic) {
  Rng rng(1);
  for (int c = 0; c < 5; ++c) {
    auto a = gaussian_points(rng, 12 + c, 3, 0.0);
    auto b = gaussian_points(rng, 9 + 2 * c, 3, 0.4 * c);
    const double bw = 0.5 + c * 0.3;
    EXPECT_NEAR(mmd2(a, b, bw), mmd2_oracle(a, b, bw), 1e-12);
  }
}

TEST(Mmd, JackknifeErrorMatchesExplicitLeaveOneOut) {
  Rng rng(2);
  auto a = gaussian_points(rng, 10, 2, 0.0);
  auto b = gaussian_points(rng, 10, 2, 0.5);
  const double bw = 1.1;
  std::vector<double> loo;
  for (std::size_t i = 0; i < 10; ++i) loo.push_back(mmd2_oracle(drop(a, i), drop(b, i), bw));
  double avg = 0, var = 0;
  for (double v : loo) avg += v / 10;
  for (double v : loo) var += (v - avg) * (v - avg);
  const auto r = mmd2_with_error(a, b, bw);
  EXPECT_NEAR(r.std_error, std::sqrt(0.9 * var), 1e-12);
}

TEST(Mmd, SeparatesDistributionsAndIsUnbiasedForEqualOnes) {
  Rng rng(3);
  auto a = gaussian_points(rng, 300, 4, 0.0);
  auto b = gaussian_points(rng, 300, 4, 0.0);
  auto far = gaussian_points(rng, 300, 4, 1.0);
  const auto same = mmd2_with_error(a, b);
  EXPECT_LT(std::abs(same.value), 4 * same.std_error);
  const auto diff = mmd2_with_error(a, far);
  EXPECT_GT(diff.value, 4 * diff.std_error);
  EXPECT_NEAR(mmd2_biased(a, a, 1.0), 0.0, 1e-12);
}

TEST(Mmd, MedianBandwidthIsTheMedianPairwiseDistance) {
  Rng rng(4);
  for (std::size_t n : {5u, 6u, 9u}) {
    auto a = gaussian_points(rng, n, 3, 0.0);
    std::vector<double> d;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) d.push_back(std::sqrt(-2.0 * std::log(kernel(a, i, a, j, 1.0))));
    std::sort(d.begin(), d.end());
    const double want = d.size() % 2 ? d[d.size() / 2] : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
    EXPECT_NEAR(median_bandwidth(a), want, 1e-9);
  }
}

TEST(Mmd, RejectsTooFewPointsAndMismatchedDimensions) {
  Rng rng(5);
  auto one = gaussian_points(rng, 1, 2, 0.0);
  auto two = gaussian_points(rng, 5, 2, 0.0);
  auto three = gaussian_points(rng, 5, 3, 0.0);
  EXPECT_THROW(mmd2(one, two, 1.0), DimensionError);
  EXPECT_THROW(mmd2(two, three, 1.0), DimensionError);
  EXPECT_THROW(endpoint_mse(two, three), DimensionError);
}

TEST(Mmd, EndpointMseIsTheElementMean) {
  PointSet a{2, {0, 0, 1, 1}}, b{2, {1, 0, 1, 3}};
  EXPECT_DOUBLE_EQ(endpoint_mse(a, b), (1.0 + 0 + 0 + 4) / 4);
}

TEST(Flops, SingleEvaluationMatchesTheWrittenOutCount) {
  for (const auto& a : {dit_xl2(), dims_of(StudentConfig{}), ArchDims{3, 16, 2, 9, 1, 2, 4, 2, 8}}) {
    EXPECT_NEAR(flops_model(a, 1, 0, MaskOption::M1, FlopsMode::KD).total(), eval_macs(a), 1e-6 * eval_macs(a));
  }
}

TEST(Flops, ReferenceArchitectureTotals) {
  const auto a = dit_xl2();
  EXPECT_NEAR(gflops(flops_model(a, 4, 0, MaskOption::M1, FlopsMode::KD).total()), 118.62, 0.01);
  EXPECT_NEAR(gflops(flops_model(a, 4, 0, MaskOption::M1, FlopsMode::Student).total()), 474.49, 0.01);
  EXPECT_NEAR(gflops(flops_model(a, 4, 6, MaskOption::M4, FlopsMode::Student).total()), 479.92, 0.01);
  EXPECT_NEAR(gflops(flops_model(a, 25, 0, MaskOption::M1, FlopsMode::TeacherCfg).total()), 5931.07, 0.05);
}

TEST(Flops, StudentCostIsLinearInStepsWithoutHistory) {
  const auto a = dit_xl2();
  const double kd = flops_model(a, 1, 0, MaskOption::M1, FlopsMode::KD).total();
  for (std::size_t S : {1u, 2u, 4u, 8u}) {
    EXPECT_NEAR(flops_model(a, S, 0, MaskOption::M1, FlopsMode::Student).total(), S * kd, 1e-9 * S * kd);
    EXPECT_NEAR(flops_model(a, S, 28, MaskOption::M1, FlopsMode::Student).total(), S * kd, 1e-9 * S * kd);
  }
}

TEST(Flops, HistoryOverheadScalesWithLayersAndVisibleBlocks) {
  const auto a = dit_xl2();
  const double T = a.tokens, d = a.d_model;
  auto extra = [&](std::size_t S, std::size_t N, MaskOption m) {
    return flops_model(a, S, N, m, FlopsMode::Student).kv_extra();
  };
  // Visible history blocks summed over steps s = S..1.
  auto visible = [](std::size_t S, MaskOption m) {
    double h = 0;
    for (std::size_t s = S; s >= 1; --s) {
      if (s == S) continue;
      if (m == MaskOption::M2 || m == MaskOption::M3) h += 1;
      if (m == MaskOption::M4) h += S - s;
    }
    return h;
  };
  for (auto m : {MaskOption::M2, MaskOption::M3, MaskOption::M4})
    for (std::size_t N : {1u, 6u, 28u})
      EXPECT_NEAR(extra(4, N, m), 2 * T * T * d * N * visible(4, m), 1.0);
  EXPECT_NEAR(extra(4, 28, MaskOption::M4) / extra(4, 6, MaskOption::M4), 28.0 / 6.0, 1e-12);
  EXPECT_NEAR(extra(4, 6, MaskOption::M4) / extra(4, 1, MaskOption::M4), 6.0, 1e-12);
  EXPECT_EQ(extra(4, 0, MaskOption::M4), 0.0);
}

TEST(Flops, InvalidDimensionsAreConfigErrors) {
  auto a = dit_xl2();
  EXPECT_THROW(flops_model(a, 0, 0, MaskOption::M1, FlopsMode::Student), ConfigError);
  EXPECT_THROW(flops_model(a, 4, 29, MaskOption::M4, FlopsMode::Student), ConfigError);
  a.d_model = 0;
  EXPECT_THROW(flops_model(a, 4, 0, MaskOption::M1, FlopsMode::Student), ConfigError);
  EXPECT_THROW(parse_arch("resnet"), ConfigError);
}

TEST(Flops, ClosedFormParameterCountMatchesTheModel) {
  for (auto m : {MaskOption::M1, MaskOption::M4}) {
    auto c = tiny_config(m, 5, 1, 16);
    EXPECT_EQ(param_count(c), init_student(c, 0).count());
  }
}

TEST(Attention, SharesFormADistributionPerStep) {
  auto c = tiny_config(MaskOption::M4, 4, 1);
  auto r = attention_report(perturbed_params(c, 1), c, small_batch(c, 3));
  for (std::size_t l = 0; l < c.L; ++l)
    for (std::size_t s = 1; s <= c.S; ++s) {
      double total = 0;
      for (std::size_t si = 1; si <= c.S; ++si) total += r.at(l, s, si);
      EXPECT_NEAR(total, 1.0, 1e-5);
    }
}

TEST(Attention, HistoryLayersLookBackAndGatedLayersDoNot) {
  auto c = tiny_config(MaskOption::M4, 4, 1);
  auto r = attention_report(perturbed_params(c, 2), c, small_batch(c, 3));
  for (std::size_t s = 1; s < c.S; ++s) EXPECT_GT(r.history(0, s), 0.0);
  for (std::size_t s = 1; s <= c.S; ++s) {
    EXPECT_EQ(r.at(1, s, s), 1.0);
    EXPECT_EQ(r.history(1, s), 0.0);
  }
  EXPECT_EQ(r.history(0, c.S), 0.0);
}

TEST(Attention, MasksControlWhichBlocksReceiveWeight) {
  auto c = tiny_config(MaskOption::M2, 4, 2);
  auto r = attention_report(perturbed_params(c, 3), c, small_batch(c, 2));
  for (std::size_t l = 0; l < c.L; ++l)
    for (std::size_t s = 1; s < c.S; ++s)
      for (std::size_t si = s + 2; si <= c.S; ++si) EXPECT_EQ(r.at(l, s, si), 0.0);
}

TEST(Exposure, FullyTeacherFedCurveIsTheOneStepError) {
  auto c = tiny_config(MaskOption::M4, 3, 1);
  auto p = perturbed_params(c, 4);
  const auto& ds = small_dataset(3);
  const std::vector<std::size_t> idx = {0, 1, 2, 3};
  const auto curve = exposure_harness(p, c, VPSchedule{}, ds, idx, c.S - 1);
  // Oracle: cache filled only with teacher states, one prediction per step.
  std::vector<double> want(c.S, 0.0);
  for (std::size_t i : idx) {
    KVCache cache(c);
    for (std::size_t j = 0; j < c.S; ++j) {
      const std::size_t s = c.S - j;
      auto in = ds.state(i, j);
      auto y = forward_step(p, c, Tensor::from({16}, std::vector<float>(in.begin(), in.end())), s, cache, ds.label(i));
      auto x = target_transform(c, VPSchedule{}, y.data(), std::vector<float>(in.begin(), in.end()), s);
      auto truth = ds.state(i, j + 1);
      double acc = 0;
      for (std::size_t e = 0; e < 16; ++e) acc += (double(x[e]) - truth[e]) * (double(x[e]) - truth[e]);
      want[s - 1] += acc / 16 / idx.size();
    }
  }
  for (std::size_t s = 0; s < c.S; ++s) EXPECT_NEAR(curve.per_step[s], want[s], 1e-12);
}

TEST(Exposure, FirstPredictionDoesNotDependOnK) {
  auto c = tiny_config(MaskOption::M4, 4, 1);
  auto p = perturbed_params(c, 5);
  const std::vector<std::size_t> idx = {0, 1, 2};
  const auto k0 = exposure_harness(p, c, VPSchedule{}, small_dataset(4), idx, 0);
  for (std::size_t k = 1; k < c.S; ++k) {
    const auto ck = exposure_harness(p, c, VPSchedule{}, small_dataset(4), idx, k);
    EXPECT_EQ(ck.per_step[c.S - 1], k0.per_step[c.S - 1]);
  }
  EXPECT_THROW(exposure_harness(p, c, VPSchedule{}, small_dataset(4), idx, c.S), RangeError);
  EXPECT_THROW(exposure_harness(p, c, VPSchedule{}, small_dataset(3), idx, 0), DimensionError);
}

TEST(Eval, EndpointErrorIsTheFreeRunningExposureCurve) {
  auto c = tiny_config(MaskOption::M3, 3, 1);
  auto p = perturbed_params(c, 6);
  const std::vector<std::size_t> idx = {0, 1, 2, 3, 4, 5};
  const auto teacher = small_teacher();
  const auto rep = evaluate(p, c, VPSchedule{}, teacher, small_dataset(3), idx, 9);
  const auto curve = exposure_harness(p, c, VPSchedule{}, small_dataset(3), idx, 0);
  EXPECT_EQ(rep.endpoint_mse, curve.endpoint());
  EXPECT_EQ(rep.per_step, curve.per_step);
  EXPECT_GT(rep.bandwidth, 0.0);
  const auto again = evaluate(p, c, VPSchedule{}, teacher, small_dataset(3), idx, 9, 3);
  EXPECT_EQ(again.mmd2, rep.mmd2);
}

TEST(Report, CsvAndSvgOutputsAreWellFormed) {
  auto fb = flops_model(dit_xl2(), 4, 6, MaskOption::M4, FlopsMode::Student);
  const auto csv = report::flops_csv(fb);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 4 * (28 + 1));
  const auto svg = report::line_chart({{"a", {0, 1, 2}, {1, 2, 3}}}, "t", "x", "y");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}
