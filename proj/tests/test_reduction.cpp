#include <gtest/gtest.h>

#include <random>

#include "dcmon/reduction.hpp"
#include "oracles/model.hpp"

using namespace dcmon;

namespace {

om::Sample at(Timestamp t, double v) { return om::Sample{{}, v, t, {}}; }

}  // namespace

TEST(Reduction, DedupDropsOnlyExactRepeats) {
  SeriesState st;
  EXPECT_EQ(dedup_filter(st, at(0, 1.0)), Verdict::keep);
  EXPECT_EQ(dedup_filter(st, at(1, 1.0)), Verdict::drop);
  EXPECT_EQ(dedup_filter(st, at(2, 1.0000000001)), Verdict::keep);
  EXPECT_EQ(dedup_filter(st, at(3, 1.0000000001)), Verdict::drop);
}

TEST(Reduction, SamplingDeltaAndHeartbeat) {
  SamplingConfig cfg{.delta = 0.5, .heartbeat_max = Duration(10'000)};
  SeriesState st;
  EXPECT_EQ(dynamic_sample(st, at(0, 1.0), cfg), Verdict::keep);
  EXPECT_EQ(dynamic_sample(st, at(1000, 1.5), cfg), Verdict::drop);  // not strictly beyond delta
  EXPECT_EQ(dynamic_sample(st, at(2000, 1.51), cfg), Verdict::keep);
  EXPECT_EQ(dynamic_sample(st, at(11'000, 1.51), cfg), Verdict::drop);
  EXPECT_EQ(dynamic_sample(st, at(12'000, 1.51), cfg), Verdict::keep);  // heartbeat
}

TEST(Reduction, ConfigValidation) {
  ReductionConfig bad{.sampling = SamplingConfig{.delta = -1}};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_FALSE(ReductionConfig{}.enabled());
}

TEST(Reduction, ReconstructBeforeFirstSampleThrows) {
  const std::vector<om::Sample> kept{at(10, 1)};
  const std::vector<Timestamp> q{5};
  EXPECT_THROW(reconstruct_series(kept, q), BeforeFirstSample);
}

TEST(Reduction, PipelineKeepsSeriesSeparateAndCountersSkipSampling) {
  ReductionPipeline p(ReductionConfig{.sampling = SamplingConfig{.delta = 100}});
  om::Exposition e;
  e.families.push_back(om::MetricFamily{.name = "g", .type = om::MetricType::gauge});
  e.families.push_back(om::MetricFamily{.name = "c", .type = om::MetricType::counter});
  for (int i = 0; i < 5; ++i) {
    e.families[0].samples = {om::Sample{om::LabelSet({{"s", "a"}}), double(i), i * 1000, {}},
                             om::Sample{om::LabelSet({{"s", "b"}}), double(i), i * 1000, {}}};
    e.families[1].samples = {om::Sample{{}, double(i), i * 1000, {}}};
    const auto out = p.apply(e);
    if (i == 0) {
      EXPECT_EQ(out.sample_count(), 3u);
    } else {
      ASSERT_EQ(out.families.size(), 1u);
      EXPECT_EQ(out.families[0].name, "c");
    }
  }
  EXPECT_EQ(p.dropped(), 8u);
}

// Property: the LOCF error of sampled random walks never exceeds delta.
TEST(ReductionProperty, LocfErrorBounded) {
  std::mt19937_64 rng(5);
  for (double d : {0.01, 0.3, 2.0}) {
    SeriesState st;
    SamplingConfig cfg{.delta = d};
    std::vector<std::pair<Timestamp, double>> orig, kept;
    double v = 0;
    std::normal_distribution<double> step(0, 0.5);
    for (int i = 0; i < 2000; ++i) {
      v += step(rng);
      orig.emplace_back(i * 1000, v);
      if (dynamic_sample(st, at(i * 1000, v), cfg) == Verdict::keep) kept.emplace_back(i * 1000, v);
    }
    EXPECT_LE(oracle::max_locf_error(orig, kept), d);
    EXPECT_LT(kept.size(), orig.size());
  }
}
