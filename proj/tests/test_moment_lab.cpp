#include <gtest/gtest.h>

#include "stochpool/moment_lab.hpp"

using namespace stochpool;

namespace {

SweepConfig small_sweep() {
  SweepConfig cfg;
  cfg.n_batch = 3;
  cfg.n_channels = 5;
  cfg.spatial_sides = {2, 4, 8};
  cfg.keep_probs = {0.5, 0.25};
  cfg.n_trials = 3;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST(Sweep, RowLayoutAndCounts) {
  const SweepConfig cfg = small_sweep();
  const MomentReport r = run_spatial_sweep(cfg);
  EXPECT_EQ(r.rows.size(), 3u * 2u * 3u);
  EXPECT_EQ(r.ratios.size(), 3u * 2u * 2u);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.n, 3u * 5u * 3u);
    EXPECT_EQ(row.op, "sap");
  }
  EXPECT_NE(r.find("sap", Phase::kTest, 16, 0.25, "none"), nullptr);
  EXPECT_NE(r.find("sap", Phase::kTrain, 64, 0.5, "with"), nullptr);
  EXPECT_NE(r.find("sap", Phase::kTrain, 4, 0.5, "without"), nullptr);
  EXPECT_EQ(r.find("sap", Phase::kTrain, 4, 0.75, "with"), nullptr);
}

TEST(Sweep, MatchesFullTensorSapForward) {
  // Rebuild every estimate with the public operators on the same streams.
  const SweepConfig cfg = small_sweep();
  const MomentReport report = run_spatial_sweep(cfg);
  for (int side : cfg.spatial_sides) {
    const std::size_t hw = static_cast<std::size_t>(side) * side;
    for (std::size_t q = 0; q < cfg.keep_probs.size(); ++q) {
      const double p = cfg.keep_probs[q];
      double test_sum = 0.0;
      double with_sum = 0.0;
      double without_sum = 0.0;
      for (int t = 0; t < cfg.n_trials; ++t) {
        double test_ss = 0.0;
        double with_ss = 0.0;
        double without_ss = 0.0;
        for (int n = 0; n < cfg.n_batch; ++n) {
          const Shape sample{1, cfg.n_channels, side, side};
          RngStream input_rng(cfg.seed, detail::stream_key(1, side, t, n));
          const Tensor4 x = sample_gaussian(sample, input_rng);
          SapOptions opt;
          opt.keep_prob = p;
          RngStream mask_rng(cfg.seed, detail::stream_key(2, side, t, static_cast<std::uint64_t>(n) * 1024 + q));
          const auto masks = draw_sap_masks(sample, opt, mask_rng);
          RngStream unused(0);
          const Tensor4 test = sap_forward(x, opt, Phase::kTest, unused).output;
          const Tensor4 with = sap_forward_with_masks(x, opt, masks).output;
          opt.scale = false;
          const Tensor4 without = sap_forward_with_masks(x, opt, masks).output;
          for (std::size_t i = 0; i < test.size(); ++i) {
            test_ss += test.data()[i] * test.data()[i];
            with_ss += with.data()[i] * with.data()[i];
            without_ss += without.data()[i] * without.data()[i];
          }
        }
        const double outputs = static_cast<double>(cfg.n_batch) * cfg.n_channels;
        test_sum += test_ss / outputs;
        with_sum += with_ss / outputs;
        without_sum += without_ss / outputs;
      }
      const auto* test_row = report.find("sap", Phase::kTest, hw, p, "none");
      const auto* with_row = report.find("sap", Phase::kTrain, hw, p, "with");
      const auto* without_row = report.find("sap", Phase::kTrain, hw, p, "without");
      ASSERT_TRUE(test_row && with_row && without_row);
      EXPECT_NEAR(test_row->second_moment, test_sum / cfg.n_trials, 1e-12 * test_row->second_moment);
      EXPECT_NEAR(with_row->second_moment, with_sum / cfg.n_trials, 1e-12 * with_row->second_moment);
      EXPECT_NEAR(without_row->second_moment, without_sum / cfg.n_trials, 1e-12 * without_row->second_moment);
    }
  }
}

TEST(Sweep, DeterministicAndIndependentOfJobs) {
  SweepConfig cfg = small_sweep();
  const std::string a = to_csv(run_spatial_sweep(cfg));
  EXPECT_EQ(a, to_csv(run_spatial_sweep(cfg)));
  cfg.jobs = 3;
  EXPECT_EQ(a, to_csv(run_spatial_sweep(cfg)));
  cfg.seed = 12;
  EXPECT_NE(a, to_csv(run_spatial_sweep(cfg)));
}

TEST(Sweep, TestRowsIgnoreKeepProbability) {
  SweepConfig cfg = small_sweep();
  cfg.keep_probs = {0.3, 0.6, 0.9};
  const MomentReport r = run_keepprob_sweep(cfg);
  for (int side : cfg.spatial_sides) {
    const std::size_t hw = static_cast<std::size_t>(side) * side;
    const double base = r.find("sap", Phase::kTest, hw, 0.3, "none")->second_moment;
    EXPECT_EQ(r.find("sap", Phase::kTest, hw, 0.6, "none")->second_moment, base);
    EXPECT_EQ(r.find("sap", Phase::kTest, hw, 0.9, "none")->second_moment, base);
  }
}

TEST(Sweep, ScalingModesSelectSeries) {
  SweepConfig cfg = small_sweep();
  cfg.scaling = ScalingMode::kWithout;
  const MomentReport only_without = run_spatial_sweep(cfg);
  EXPECT_EQ(only_without.rows.size(), 3u * 2u * 2u);
  for (const auto& r : only_without.ratios) EXPECT_EQ(r.scaling, "without");
  cfg.scaling = ScalingMode::kWith;
  const MomentReport only_with = run_spatial_sweep(cfg);
  for (const auto& r : only_with.ratios) EXPECT_EQ(r.scaling, "with");
  // the unscaled series is the same whichever series accompany it
  const MomentReport both = run_spatial_sweep(small_sweep());
  for (const auto& r : only_without.rows) {
    const auto* twin = both.find(r.op, r.phase, r.hw, r.p, r.scaling);
    ASSERT_NE(twin, nullptr);
    EXPECT_NEAR(twin->second_moment, r.second_moment, 1e-12 * r.second_moment);
  }
}

TEST(Sweep, StandardErrorIsSampleStdOverRootTrials) {
  const std::vector<double> v{1.0, 2.0, 4.0};
  const auto s = detail::summarize(v);
  const double m = 7.0 / 3.0;
  const double var = ((1 - m) * (1 - m) + (2 - m) * (2 - m) + (4 - m) * (4 - m)) / 2.0;
  EXPECT_DOUBLE_EQ(s.mean, m);
  EXPECT_DOUBLE_EQ(s.stderr_, std::sqrt(var / 3.0));
  EXPECT_TRUE(std::isnan(detail::summarize({1.0}).stderr_));
}

TEST(Sweep, ConsistencyAtModerateScale) {
  SweepConfig cfg;
  cfg.n_batch = 16;
  cfg.n_channels = 64;
  cfg.spatial_sides = {4, 16};
  cfg.keep_probs = {0.5};
  cfg.n_trials = 8;
  const MomentReport r = run_spatial_sweep(cfg);
  const auto s = summarize_consistency(r);
  EXPECT_LT(s.max_with_dev, 0.05);
  EXPECT_LT(s.max_without_dev, 0.10);
  EXPECT_LT(s.max_gap_dev, 0.05);
  EXPECT_TRUE(s.ok());
}

TEST(Sweep, InvalidConfigurations) {
  SweepConfig cfg = small_sweep();
  cfg.keep_probs = {0.01};
  EXPECT_THROW(run_spatial_sweep(cfg), Error);
  cfg = small_sweep();
  cfg.n_trials = 0;
  EXPECT_THROW(run_spatial_sweep(cfg), Error);
  cfg = small_sweep();
  cfg.spatial_sides = {};
  EXPECT_THROW(run_spatial_sweep(cfg), Error);
  cfg = small_sweep();
  cfg.keep_probs = {1.5};
  EXPECT_THROW(run_spatial_sweep(cfg), Error);
}

TEST(Summary, FlagsViolations) {
  MomentReport r;
  r.rows.push_back({"sap", Phase::kTest, 4, 0.5, "none", 0.25, 0.0, 1});
  r.ratios.push_back({"sap", 4, 0.5, "with", 1.04, 0.0});
  r.ratios.push_back({"sap", 4, 0.5, "without", 2.1, 0.0});
  EXPECT_TRUE(summarize_consistency(r).ok());
  r.ratios.push_back({"sap", 4, 0.2, "without", 5.6, 0.0});  // 12% off, inside the small-p band
  EXPECT_TRUE(summarize_consistency(r).ok());
  r.ratios.push_back({"sap", 4, 0.5, "with", 1.06, 0.0});
  EXPECT_FALSE(summarize_consistency(r).with_ok);
  r.rows.push_back({"sap", Phase::kTest, 16, 0.5, "none", 0.05, 0.0, 1});
  EXPECT_FALSE(summarize_consistency(r).gap_ok);
}

TEST(Demos, RatiosFollowTheirLaws) {
  DemoConfig cfg;
  cfg.dropout_elements = 200000;
  cfg.n_trials = 4;
  const MomentReport r = run_inconsistency_demos(cfg);
  ASSERT_EQ(r.ratios.size(), 4u);
  EXPECT_NEAR(r.find_ratio("dropout", 200000, 0.5, "with")->ratio, 2.0, 0.04);
  EXPECT_NEAR(r.find_ratio("dropout", 200000, 0.8, "with")->ratio, 1.25, 0.025);
  EXPECT_NEAR(r.find_ratio("ss", 65536, 0.5, "none")->ratio, 1.0, 0.02);
  const auto* z = r.find_ratio("zeiler", 4, 1.0, "none");
  ASSERT_NE(z, nullptr);
  EXPECT_GT(std::fabs(z->ratio - 1.0), 3.0 * z->stderr_);
}

TEST(Csv, HeaderAndFormatting) {
  MomentReport r;
  r.rows.push_back({"sap", Phase::kTrain, 65536, 0.5, "with", 1.5e-5, 2.5e-8, 131072});
  EXPECT_EQ(to_csv(r), std::string(kMomentCsvHeader) +
                           "\nsap,train,65536,0.5,with,1.500000000e-05,2.500000000e-08,131072\n");
}
