#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "stochpool/error.hpp"
#include "stochpool/pooling.hpp"
#include "stochpool/rng.hpp"
#include "stochpool/tensor.hpp"

namespace stochpool {

enum class ScalingMode { kWith, kWithout, kBoth };

inline std::string_view to_string(ScalingMode mode) {
  switch (mode) {
    case ScalingMode::kWith: return "with";
    case ScalingMode::kWithout: return "without";
    case ScalingMode::kBoth: return "both";
  }
  return "unknown";
}

inline ScalingMode parse_scaling_mode(std::string_view name) {
  if (name == "with") return ScalingMode::kWith;
  if (name == "without") return ScalingMode::kWithout;
  if (name == "both") return ScalingMode::kBoth;
  throw Error(ErrorKind::kInvalidConfig, "unknown scaling mode '" + std::string(name) + "'");
}

/// Global-pooling SAP sweep over i.i.d. N(0,1) inputs of shape
/// (n_batch, n_channels, side, side).
struct SweepConfig {
  int n_batch = 64;
  int n_channels = 256;
  std::vector<int> spatial_sides{2, 4, 8, 16, 32, 64, 128, 256};
  std::vector<double> keep_probs{0.5};
  int n_trials = 8;
  std::uint64_t seed = 0;
  ScalingMode scaling = ScalingMode::kBoth;
  /// Worker threads over samples; never changes the report.
  int jobs = 1;

  static SweepConfig spatial_defaults() { return {}; }

  static SweepConfig keep_prob_defaults() {
    SweepConfig cfg;
    cfg.spatial_sides = {256};
    cfg.keep_probs = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    return cfg;
  }

  void validate() const {
    detail::require(n_batch >= 1 && n_channels >= 1, ErrorKind::kInvalidConfig,
                    "batch and channel counts must be >= 1");
    detail::require(n_trials >= 1, ErrorKind::kInvalidConfig, "n_trials must be >= 1");
    detail::require(jobs >= 1, ErrorKind::kInvalidConfig, "jobs must be >= 1");
    detail::require(!spatial_sides.empty() && !keep_probs.empty(), ErrorKind::kInvalidConfig,
                    "empty sweep");
    for (int side : spatial_sides) {
      detail::require(side >= 1, ErrorKind::kInvalidConfig, "spatial side must be >= 1");
    }
    for (double p : keep_probs) {
      detail::check_keep_prob(p);
      for (int side : spatial_sides) {
        detail::require(keep_count(static_cast<std::size_t>(side) * side, p) >= 1,
                        ErrorKind::kInvalidConfig,
                        "floor(HW*p) is zero for side " + std::to_string(side));
      }
    }
  }
};

/// Inputs for the Dropout / subsampling / probability-map comparisons.
struct DemoConfig {
  std::size_t dropout_elements = 1'000'000;
  std::vector<double> dropout_probs{0.5, 0.8};
  std::size_t ss_length = 65536;
  double ss_prob = 0.5;
  /// (N, C, side, side) uniform(0,1) input pooled with `zeiler_window`.
  int zeiler_batch = 64;
  int zeiler_channels = 16;
  int zeiler_side = 16;
  int zeiler_window = 2;
  int n_trials = 8;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(n_trials >= 1, ErrorKind::kInvalidConfig, "n_trials must be >= 1");
    detail::require(dropout_elements >= 1 && ss_length >= 2, ErrorKind::kInvalidConfig,
                    "input sizes too small");
    for (double p : dropout_probs) detail::check_keep_prob(p);
    detail::check_keep_prob(ss_prob);
    detail::require(zeiler_window >= 1 && zeiler_side % zeiler_window == 0,
                    ErrorKind::kInvalidConfig, "zeiler window must divide the side");
  }
};

struct MomentRow {
  std::string op;
  Phase phase = Phase::kTest;
  std::size_t hw = 0;
  double p = 1.0;
  std::string scaling;  // with | without | none
  double second_moment = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;  // pooled outputs over all trials
};

/// Train/test ratio averaged over trials, paired within each trial.
struct RatioRow {
  std::string op;
  std::size_t hw = 0;
  double p = 1.0;
  std::string scaling;
  double ratio = 0.0;
  double stderr_ = 0.0;
};

struct MomentReport {
  std::vector<MomentRow> rows;
  std::vector<RatioRow> ratios;
  std::size_t fallback_windows = 0;

  const MomentRow* find(std::string_view op, Phase phase, std::size_t hw, double p,
                        std::string_view scaling) const {
    for (const auto& r : rows) {
      if (r.op == op && r.phase == phase && r.hw == hw && r.p == p && r.scaling == scaling) return &r;
    }
    return nullptr;
  }
  const RatioRow* find_ratio(std::string_view op, std::size_t hw, double p,
                             std::string_view scaling) const {
    for (const auto& r : ratios) {
      if (r.op == op && r.hw == hw && r.p == p && r.scaling == scaling) return &r;
    }
    return nullptr;
  }
};

namespace detail {

struct TrialSummary {
  double mean = 0.0;
  double stderr_ = 0.0;
};

// Mean of per-trial estimates and their standard error (sample std / sqrt(T));
// NaN error for a single trial.
inline TrialSummary summarize(const std::vector<double>& per_trial) {
  TrialSummary s;
  CompensatedSum acc;
  for (double v : per_trial) acc.add(v);
  const double t = static_cast<double>(per_trial.size());
  s.mean = acc.value() / t;
  if (per_trial.size() < 2) {
    s.stderr_ = std::nan("");
    return s;
  }
  CompensatedSum dev;
  for (double v : per_trial) dev.add((v - s.mean) * (v - s.mean));
  s.stderr_ = std::sqrt(dev.value() / (t - 1.0)) / std::sqrt(t);
  return s;
}

// Runs body(i) for i in [0, count) on `jobs` threads, strided. Callers write to
// slot i only, so the result never depends on `jobs`.
template <typename Body>
void parallel_for(int count, int jobs, Body&& body) {
  if (jobs <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  const int workers = std::min(jobs, count);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < count; i += workers) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline std::uint64_t stream_key(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return mix64(a ^ mix64(b ^ mix64(c ^ mix64(d))));
}

inline double sum_squares(std::span<const double> values) {
  CompensatedSum acc;
  for (double v : values) acc.add(v * v);
  return acc.value();
}

}  // namespace detail

/// SAP second moments for every (side, p) of `cfg`: test phase (= GAP), train
/// phase with sqrt(p), train phase without it. Each trial draws a fresh input.
/// Rows are emitted per (side, p) in the order test, with, without.
inline MomentReport run_sap_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const bool want_with = cfg.scaling != ScalingMode::kWithout;
  const bool want_without = cfg.scaling != ScalingMode::kWith;
  const std::size_t n_probs = cfg.keep_probs.size();
  const double outputs_per_trial = static_cast<double>(cfg.n_batch) * cfg.n_channels;
  MomentReport report;

  for (int side : cfg.spatial_sides) {
    const std::size_t hw = static_cast<std::size_t>(side) * side;
    std::vector<double> test_est(cfg.n_trials);
    std::vector<std::vector<double>> with_est(n_probs, std::vector<double>(cfg.n_trials));
    std::vector<std::vector<double>> without_est(n_probs, std::vector<double>(cfg.n_trials));

    for (int t = 0; t < cfg.n_trials; ++t) {
      // per-sample partial sums of squares: [0] test, [1 + 2q] with, [2 + 2q] without
      std::vector<std::vector<double>> partial(cfg.n_batch, std::vector<double>(1 + 2 * n_probs));
      detail::parallel_for(cfg.n_batch, cfg.jobs, [&](int n) {
        // Same draws and arithmetic as sap_forward on the (1, C, side, side)
        // sample, but one plane at a time so the working set stays in cache.
        const Shape sample{1, cfg.n_channels, side, side};
        std::vector<std::vector<double>> weights(n_probs, std::vector<double>(hw, 0.0));
        std::vector<double> counts(n_probs, 0.0);
        for (std::size_t q = 0; q < n_probs; ++q) {
          RngStream mask_rng(cfg.seed, detail::stream_key(2, static_cast<std::uint64_t>(side),
                                                          static_cast<std::uint64_t>(t),
                                                          static_cast<std::uint64_t>(n) * 1024 + q));
          SapOptions opt;
          opt.keep_prob = cfg.keep_probs[q];
          const auto kept = draw_sap_masks(sample, opt, mask_rng);
          for (auto idx : kept.front().kept) weights[q][idx] = 1.0;
          counts[q] = static_cast<double>(kept.front().size());
        }
        RngStream input_rng(cfg.seed, detail::stream_key(1, static_cast<std::uint64_t>(side),
                                                         static_cast<std::uint64_t>(t),
                                                         static_cast<std::uint64_t>(n)));
        std::vector<double> plane(hw);
        std::vector<double> test_out(cfg.n_channels);
        std::vector<std::vector<double>> train_out(n_probs, std::vector<double>(cfg.n_channels));
        for (int c = 0; c < cfg.n_channels; ++c) {
          input_rng.fill_normal(plane);
          double plain = 0.0;
          double masked = 0.0;
          stochpool::detail::window_sum_pair(plane.data(), weights[0].data(), side, side, side, plain,
                                             masked);
          test_out[c] = plain / static_cast<double>(hw);
          for (std::size_t q = 0; q < n_probs; ++q) {
            if (q > 0) {
              masked = stochpool::detail::window_sum(plane.data(), weights[q].data(), side, side, side);
            }
            const double scale = want_with ? std::sqrt(cfg.keep_probs[q]) : 1.0;
            train_out[q][c] = scale * (masked / counts[q]);
          }
        }
        partial[n][0] = detail::sum_squares(test_out);
        for (std::size_t q = 0; q < n_probs; ++q) {
          // One pass serves both series: the scaled output is exactly sqrt(p)
          // times the unscaled one.
          const double ss = detail::sum_squares(train_out[q]);
          if (want_with) {
            partial[n][1 + 2 * q] = ss;
            partial[n][2 + 2 * q] = ss / cfg.keep_probs[q];
          } else {
            partial[n][2 + 2 * q] = ss;
          }
        }
      });
      std::vector<double> folded(1 + 2 * n_probs, 0.0);
      for (int n = 0; n < cfg.n_batch; ++n) {
        for (std::size_t i = 0; i < folded.size(); ++i) folded[i] += partial[n][i];
      }
      test_est[t] = folded[0] / outputs_per_trial;
      for (std::size_t q = 0; q < n_probs; ++q) {
        with_est[q][t] = folded[1 + 2 * q] / outputs_per_trial;
        without_est[q][t] = folded[2 + 2 * q] / outputs_per_trial;
      }
    }

    const auto n_total = static_cast<std::size_t>(outputs_per_trial) * cfg.n_trials;
    const auto test_sum = detail::summarize(test_est);
    for (std::size_t q = 0; q < n_probs; ++q) {
      const double p = cfg.keep_probs[q];
      report.rows.push_back({"sap", Phase::kTest, hw, p, "none", test_sum.mean, test_sum.stderr_, n_total});
      auto add_series = [&](const std::vector<double>& est, const char* label) {
        const auto s = detail::summarize(est);
        report.rows.push_back({"sap", Phase::kTrain, hw, p, label, s.mean, s.stderr_, n_total});
        std::vector<double> ratio(cfg.n_trials);
        for (int t = 0; t < cfg.n_trials; ++t) ratio[t] = est[t] / test_est[t];
        const auto r = detail::summarize(ratio);
        report.ratios.push_back({"sap", hw, p, label, r.mean, r.stderr_});
      };
      if (want_with) add_series(with_est[q], "with");
      if (want_without) add_series(without_est[q], "without");
    }
  }
  return report;
}

/// Sweep over spatial sizes at fixed keep probability.
inline MomentReport run_spatial_sweep(const SweepConfig& cfg) { return run_sap_sweep(cfg); }

/// Sweep over keep probabilities at fixed spatial size. Within a trial every
/// p sees the same input, so the test rows are identical across p.
inline MomentReport run_keepprob_sweep(const SweepConfig& cfg) { return run_sap_sweep(cfg); }

/// Dropout, stochastic subsampling and probability-map pooling, each as
/// test row, train row and paired train/test ratio.
inline MomentReport run_inconsistency_demos(const DemoConfig& cfg) {
  cfg.validate();
  MomentReport report;
  const int trials = cfg.n_trials;

  auto emit = [&](const std::string& op, std::size_t hw, double p, const std::string& train_scaling,
                  const std::vector<double>& test_est, const std::vector<double>& train_est,
                  std::size_t n_per_trial) {
    const auto te = detail::summarize(test_est);
    const auto tr = detail::summarize(train_est);
    const std::size_t n_total = n_per_trial * static_cast<std::size_t>(trials);
    report.rows.push_back({op, Phase::kTest, hw, p, "none", te.mean, te.stderr_, n_total});
    report.rows.push_back({op, Phase::kTrain, hw, p, train_scaling, tr.mean, tr.stderr_, n_total});
    std::vector<double> ratio(trials);
    for (int t = 0; t < trials; ++t) ratio[t] = train_est[t] / test_est[t];
    const auto r = detail::summarize(ratio);
    report.ratios.push_back({op, hw, p, train_scaling, r.mean, r.stderr_});
  };

  // Dropout on N(0,1) vectors.
  for (std::size_t q = 0; q < cfg.dropout_probs.size(); ++q) {
    const double p = cfg.dropout_probs[q];
    std::vector<double> test_est(trials);
    std::vector<double> train_est(trials);
    for (int t = 0; t < trials; ++t) {
      RngStream rng(cfg.seed, detail::stream_key(10, q, static_cast<std::uint64_t>(t), 0));
      const Tensor4 x = sample_gaussian(Shape{1, 1, 1, static_cast<int>(cfg.dropout_elements)}, rng);
      test_est[t] = second_moment(dropout(x, p, Phase::kTest, rng));
      train_est[t] = second_moment(dropout(x, p, Phase::kTrain, rng));
    }
    emit("dropout", cfg.dropout_elements, p, "with", test_est, train_est, cfg.dropout_elements);
  }

  // Stochastic subsampling: the control that should not move.
  {
    std::vector<double> test_est(trials);
    std::vector<double> train_est(trials);
    const std::size_t k = keep_count(cfg.ss_length, cfg.ss_prob);
    for (int t = 0; t < trials; ++t) {
      RngStream rng(cfg.seed, detail::stream_key(11, 0, static_cast<std::uint64_t>(t), 0));
      const Tensor4 x = sample_gaussian(Shape{1, 1, 1, static_cast<int>(cfg.ss_length)}, rng);
      test_est[t] = second_moment(stochastic_subsample(x, cfg.ss_prob, Phase::kTest, rng));
      train_est[t] = second_moment(stochastic_subsample(x, cfg.ss_prob, Phase::kTrain, rng));
    }
    emit("ss", cfg.ss_length, cfg.ss_prob, "none", test_est, train_est, k);
  }

  // Probability-map pooling on positive uniform windows.
  {
    std::vector<double> test_est(trials);
    std::vector<double> train_est(trials);
    const Shape shape{cfg.zeiler_batch, cfg.zeiler_channels, cfg.zeiler_side, cfg.zeiler_side};
    for (int t = 0; t < trials; ++t) {
      RngStream rng(cfg.seed, detail::stream_key(12, 0, static_cast<std::uint64_t>(t), 0));
      Tensor4 x(shape);
      for (double& v : x.data()) v = rng.uniform_open_zero();
      test_est[t] = second_moment(zeiler_stochastic_pool(x, cfg.zeiler_window, Phase::kTest, rng));
      train_est[t] = second_moment(zeiler_stochastic_pool(x, cfg.zeiler_window, Phase::kTrain, rng));
    }
    const std::size_t outputs = shape.size() / (static_cast<std::size_t>(cfg.zeiler_window) * cfg.zeiler_window);
    emit("zeiler", static_cast<std::size_t>(cfg.zeiler_window) * cfg.zeiler_window, 1.0, "none",
         test_est, train_est, outputs);
  }
  return report;
}

inline constexpr const char* kMomentCsvHeader = "operator,phase,hw,p,scaling,second_moment,stderr,n";

/// CSV with header `operator,phase,hw,p,scaling,second_moment,stderr,n`; p is
/// printed with %g, moments and errors with %.9e.
inline std::string to_csv(const MomentReport& report) {
  std::string out = std::string(kMomentCsvHeader) + "\n";
  char buf[256];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%zu,%g,%s,%.9e,%.9e,%zu\n", r.op.c_str(),
                  std::string(to_string(r.phase)).c_str(), r.hw, r.p, r.scaling.c_str(),
                  r.second_moment, r.stderr_, r.n);
    out += buf;
  }
  return out;
}

inline void write_csv(const std::string& path, const MomentReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  out << to_csv(report);
  if (!out) throw Error(ErrorKind::kIo, "failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Tolerance summary

/// Relative tolerances for the SAP consistency checks.
struct ConsistencyTolerances {
  double with_scaling = 0.05;
  /// Without scaling the ratio should be 1/p; the band widens for small p,
  /// where fewer elements survive and the estimate is noisier.
  double without_scaling = 0.10;
  double without_scaling_small_p = 0.15;
  double small_p_below = 0.3;
  /// GAP second moment times HW against 1.
  double gap_law = 0.05;

  double without_for(double p) const { return p < small_p_below ? without_scaling_small_p : without_scaling; }
};

struct ConsistencySummary {
  double max_with_dev = 0.0;     // max |ratio - 1|
  double max_without_dev = 0.0;  // max |ratio * p - 1|
  double max_gap_dev = 0.0;      // max |m2 * HW - 1|
  bool with_ok = true;
  bool without_ok = true;
  bool gap_ok = true;
  bool has_with = false;
  bool has_without = false;

  bool ok() const { return with_ok && without_ok && gap_ok; }
};

inline ConsistencySummary summarize_consistency(const MomentReport& report,
                                                const ConsistencyTolerances& tol = {}) {
  ConsistencySummary out;
  for (const auto& r : report.ratios) {
    if (r.scaling == "with") {
      out.has_with = true;
      const double dev = std::fabs(r.ratio - 1.0);
      out.max_with_dev = std::max(out.max_with_dev, dev);
      if (dev > tol.with_scaling) out.with_ok = false;
    } else if (r.scaling == "without") {
      out.has_without = true;
      const double dev = std::fabs(r.ratio * r.p - 1.0);
      out.max_without_dev = std::max(out.max_without_dev, dev);
      if (dev > tol.without_for(r.p)) out.without_ok = false;
    }
  }
  for (const auto& r : report.rows) {
    if (r.phase != Phase::kTest) continue;
    const double dev = std::fabs(r.second_moment * static_cast<double>(r.hw) - 1.0);
    out.max_gap_dev = std::max(out.max_gap_dev, dev);
    if (dev > tol.gap_law) out.gap_ok = false;
  }
  return out;
}

}  // namespace stochpool
