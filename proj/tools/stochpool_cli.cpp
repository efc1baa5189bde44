// Command-line front end: moment sweeps, operator demos, mask patterns and
// toy training. Exit codes: 0 ok, 1 usage, 2 runtime or I/O, 3 tolerance
// summary failed.

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stochpool/stochpool.hpp"

namespace {

using namespace stochpool;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitTolerance = 3;

struct Globals {
  std::uint64_t seed = 0;
  std::optional<std::string> out;
  int trials = 8;
  int jobs = 1;
};

template <typename T>
std::string join(const std::vector<T>& values) {
  std::ostringstream os;
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << values[i];
  return os.str();
}

void print_config(const std::string& command, const std::vector<std::pair<std::string, std::string>>& entries) {
  std::cout << "config: command=" << command << '\n';
  for (const auto& [key, value] : entries) std::cout << "config: " << key << '=' << value << '\n';
  std::cout.flush();
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

int report_summary(const MomentReport& report) {
  const ConsistencyTolerances tol;
  const auto s = summarize_consistency(report, tol);
  for (const auto& r : report.ratios) {
    std::printf("ratio: hw=%zu p=%g scaling=%s train/test=%.5f se=%.5f\n", r.hw, r.p, r.scaling.c_str(),
                r.ratio, r.stderr_);
  }
  if (s.has_with) {
    std::cout << "summary: with-scaling max deviation " << pct(s.max_with_dev) << " (tolerance "
              << pct(tol.with_scaling) << ") " << (s.with_ok ? "PASS" : "FAIL") << '\n';
  }
  if (s.has_without) {
    std::cout << "summary: without-scaling max deviation from 1/p " << pct(s.max_without_dev)
              << " (tolerance " << pct(tol.without_scaling) << ", " << pct(tol.without_scaling_small_p)
              << " for p < " << tol.small_p_below << ") " << (s.without_ok ? "PASS" : "FAIL") << '\n';
  }
  std::cout << "summary: GAP second moment x HW max deviation " << pct(s.max_gap_dev) << " (tolerance "
            << pct(tol.gap_law) << ") " << (s.gap_ok ? "PASS" : "FAIL") << '\n';
  std::cout << "summary: " << (s.ok() ? "PASS" : "FAIL") << '\n';
  return s.ok() ? kExitOk : kExitTolerance;
}

ScalingMode resolve_scaling(const std::string& name, bool no_scaling) {
  return no_scaling ? ScalingMode::kWithout : parse_scaling_mode(name);
}

int run_sweep(const std::string& command, SweepConfig cfg, const Globals& g, const std::string& default_out) {
  cfg.seed = g.seed;
  cfg.n_trials = g.trials;
  cfg.jobs = g.jobs;
  const std::string out = g.out.value_or(default_out);
  print_config(command, {{"seed", std::to_string(cfg.seed)},
                         {"trials", std::to_string(cfg.n_trials)},
                         {"jobs", std::to_string(cfg.jobs)},
                         {"batch", std::to_string(cfg.n_batch)},
                         {"channels", std::to_string(cfg.n_channels)},
                         {"sides", join(cfg.spatial_sides)},
                         {"p", join(cfg.keep_probs)},
                         {"scaling", std::string(to_string(cfg.scaling))},
                         {"out", out}});
  const MomentReport report = run_sap_sweep(cfg);
  write_csv(out, report);
  std::cout << "wrote " << report.rows.size() << " rows to " << out << '\n';
  return report_summary(report);
}

int run_demos(DemoConfig cfg, const Globals& g) {
  cfg.seed = g.seed;
  cfg.n_trials = g.trials;
  const std::string out = g.out.value_or("demos.csv");
  print_config("demos", {{"seed", std::to_string(cfg.seed)},
                         {"trials", std::to_string(cfg.n_trials)},
                         {"dropout-elements", std::to_string(cfg.dropout_elements)},
                         {"dropout-p", join(cfg.dropout_probs)},
                         {"ss-length", std::to_string(cfg.ss_length)},
                         {"ss-p", std::to_string(cfg.ss_prob)},
                         {"zeiler-shape", Shape{cfg.zeiler_batch, cfg.zeiler_channels, cfg.zeiler_side,
                                                cfg.zeiler_side}.str()},
                         {"zeiler-window", std::to_string(cfg.zeiler_window)},
                         {"out", out}});
  const MomentReport report = run_inconsistency_demos(cfg);
  write_csv(out, report);
  std::cout << "wrote " << report.rows.size() << " rows to " << out << '\n';
  bool ok = true;
  for (const auto& r : report.ratios) {
    std::string verdict;
    if (r.op == "dropout") {
      const double dev = std::fabs(r.ratio * r.p - 1.0);
      verdict = "expected 1/p, deviation " + pct(dev) + (dev <= 0.02 ? " PASS" : " FAIL");
      ok = ok && dev <= 0.02;
    } else if (r.op == "ss") {
      const double dev = std::fabs(r.ratio - 1.0);
      verdict = "expected 1, deviation " + pct(dev) + (dev <= 0.02 ? " PASS" : " FAIL");
      ok = ok && dev <= 0.02;
    } else {
      const double z = std::fabs(r.ratio - 1.0) / r.stderr_;
      char buf[96];
      std::snprintf(buf, sizeof buf, "expected != 1, |ratio-1|/se = %.1f%s", z, z > 3.0 ? " PASS" : " FAIL");
      verdict = buf;
      ok = ok && z > 3.0;
    }
    std::printf("ratio: %s p=%g train/test=%.5f se=%.5f %s\n", r.op.c_str(), r.p, r.ratio, r.stderr_,
                verdict.c_str());
  }
  std::cout << "summary: " << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? kExitOk : kExitTolerance;
}

struct PatternArgs {
  std::string kind = "unrestricted";
  int side = 8;
  int factor = 4;
  double p = 0.5;
  int count = 4;
  std::string channel_mode = "shared";
  int channels = 1;
};

int run_patterns(const PatternArgs& a, const Globals& g) {
  const std::string dir = g.out.value_or("patterns");
  print_config("patterns", {{"seed", std::to_string(g.seed)},
                            {"kind", a.kind},
                            {"l", std::to_string(a.side)},
                            {"s", std::to_string(a.factor)},
                            {"p", std::to_string(a.p)},
                            {"count", std::to_string(a.count)},
                            {"channel-mode", a.channel_mode},
                            {"channels", std::to_string(a.channels)},
                            {"out", dir}});
  PatternSpec spec{parse_pattern_kind(a.kind), a.factor, parse_channel_mode(a.channel_mode)};
  validate_pattern(spec, a.side, a.p);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create directory '" + dir + "': " + ec.message());
  RngStream root(g.seed, 0x9A77E4);
  for (int i = 0; i < a.count; ++i) {
    RngStream rng = root.substream(static_cast<std::uint64_t>(i));
    const KeepMask mask = broadcast_mask(spec, a.side, a.p, a.channels, rng);
    const int planes = spec.channel_mode == ChannelMode::kShared ? 1 : a.channels;
    for (int c = 0; c < planes; ++c) {
      char name[64];
      if (planes == 1) {
        std::snprintf(name, sizeof name, "mask_%03d.pgm", i);
      } else {
        std::snprintf(name, sizeof name, "mask_%03d_c%03d.pgm", i, c);
      }
      const std::string path = (std::filesystem::path(dir) / name).string();
      write_pgm(path, mask, c);
      std::printf("mask %d channel %d: kept %zu of %zu, kept fraction %.6f -> %s\n", i, c, mask.count(c),
                  mask.plane_size(), mask.kept_fraction(c), path.c_str());
    }
  }
  return kExitOk;
}

int run_train(toy::TrainConfig cfg, const Globals& g) {
  cfg.seed = g.seed;
  const std::string out = g.out.value_or("train_trace.csv");
  print_config("train", {{"seed", std::to_string(cfg.seed)},
                         {"head", std::string(toy::to_string(cfg.head.kind))},
                         {"p", std::to_string(cfg.head.keep_prob)},
                         {"steps", std::to_string(cfg.steps)},
                         {"lr", std::to_string(cfg.learning_rate)},
                         {"batch", std::to_string(cfg.batch_size)},
                         {"log-every", std::to_string(cfg.log_every)},
                         {"train-size", std::to_string(cfg.train_size)},
                         {"test-size", std::to_string(cfg.test_size)},
                         {"out", out}});
  const toy::TrainTrace trace = toy::train_toy(cfg);
  toy::write_csv(out, trace);
  std::printf("first loss %.6f\nfinal train accuracy %.6f\nfinal test accuracy %.6f\n", trace.first_loss,
              trace.final_train_acc, trace.final_test_acc);
  std::cout << "wrote " << trace.rows.size() << " rows to " << out << '\n';
  return kExitOk;
}

std::uint64_t seed_from_env() {
  const char* env = std::getenv("STOCHPOOL_SEED");
  if (env == nullptr || *env == '\0') return 0;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno != 0 || *end != '\0' || env[0] == '-') {
    throw CLI::ValidationError("STOCHPOOL_SEED", std::string("not an unsigned integer: ") + env);
  }
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic average pooling: moment sweeps, operator demos, mask patterns, toy training"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();

  Globals g;
  try {
    g.seed = seed_from_env();
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  std::string out;
  app.add_option("--seed", g.seed, "Root seed (default: $STOCHPOOL_SEED or 0)");
  app.add_option("--out", out, "Output CSV path (directory for patterns)")->default_str("per command");
  app.add_option("--trials", g.trials, "Monte-Carlo trials")->check(CLI::PositiveNumber);
  app.add_option("--jobs", g.jobs, "Worker threads; never changes results")->check(CLI::PositiveNumber);

  // moments
  SweepConfig moments = SweepConfig::spatial_defaults();
  std::string moments_scaling = "both";
  bool moments_no_scaling = false;
  double moments_p = 0.5;
  auto* cmd_moments = app.add_subcommand("moments", "Second moment of SAP vs GAP over spatial sizes (CSV)");
  cmd_moments->add_option("--batch", moments.n_batch, "Batch size N")->check(CLI::PositiveNumber);
  cmd_moments->add_option("--channels", moments.n_channels, "Channels C")->check(CLI::PositiveNumber);
  cmd_moments->add_option("--sides", moments.spatial_sides, "Spatial sides H=W")->delimiter(',');
  cmd_moments->add_option("--p", moments_p, "Keep probability");
  cmd_moments->add_option("--scaling", moments_scaling, "Train series: with | without | both")
      ->check(CLI::IsMember({"with", "without", "both"}));
  cmd_moments->add_flag("--no-scaling", moments_no_scaling, "Only the series without sqrt(p) scaling");

  // keep-prob
  SweepConfig keep = SweepConfig::keep_prob_defaults();
  std::string keep_scaling = "both";
  int keep_side = 256;
  auto* cmd_keep = app.add_subcommand("keep-prob", "Second moment of SAP vs GAP over keep probabilities (CSV)");
  cmd_keep->add_option("--batch", keep.n_batch, "Batch size N")->check(CLI::PositiveNumber);
  cmd_keep->add_option("--channels", keep.n_channels, "Channels C")->check(CLI::PositiveNumber);
  cmd_keep->add_option("--side", keep_side, "Spatial side H=W")->check(CLI::PositiveNumber);
  cmd_keep->add_option("--probs", keep.keep_probs, "Keep probabilities")->delimiter(',');
  cmd_keep->add_option("--scaling", keep_scaling, "Train series: with | without | both")
      ->check(CLI::IsMember({"with", "without", "both"}));

  // demos
  DemoConfig demos;
  auto* cmd_demos = app.add_subcommand("demos", "Dropout, subsampling and probability-map pooling moments (CSV)");
  cmd_demos->add_option("--elements", demos.dropout_elements, "Dropout input length")->check(CLI::PositiveNumber);
  cmd_demos->add_option("--dropout-p", demos.dropout_probs, "Dropout keep probabilities")->delimiter(',');
  cmd_demos->add_option("--ss-length", demos.ss_length, "Subsampling input length");
  cmd_demos->add_option("--ss-p", demos.ss_prob, "Subsampling keep probability");

  // patterns
  PatternArgs pattern;
  auto* cmd_patterns = app.add_subcommand("patterns", "Write spatial keep-mask realizations as PGM files");
  cmd_patterns->add_option("--kind", pattern.kind, "unrestricted | block | grid | uniform | duplication")
      ->check(CLI::IsMember({"unrestricted", "block", "grid", "uniform", "duplication"}));
  cmd_patterns->add_option("--l", pattern.side, "Mask side length l");
  cmd_patterns->add_option("--s", pattern.factor, "Pattern factor s");
  cmd_patterns->add_option("--p", pattern.p, "Keep probability");
  cmd_patterns->add_option("--count", pattern.count, "Number of masks")->check(CLI::PositiveNumber);
  cmd_patterns->add_option("--channel-mode", pattern.channel_mode, "shared | independent")
      ->check(CLI::IsMember({"shared", "independent"}));
  cmd_patterns->add_option("--channels", pattern.channels, "Channels per mask")->check(CLI::PositiveNumber);

  // train
  toy::TrainConfig train;
  std::string head = "gap";
  auto* cmd_train = app.add_subcommand("train", "Train the toy network on synthetic textures (trace CSV)");
  cmd_train->add_option("--head", head, "gap | sap | dropout")->check(CLI::IsMember({"gap", "sap", "dropout"}));
  cmd_train->add_option("--p", train.head.keep_prob, "Keep probability of the sap/dropout head");
  cmd_train->add_option("--steps", train.steps, "SGD steps")->check(CLI::PositiveNumber);
  cmd_train->add_option("--lr", train.learning_rate, "Learning rate");
  cmd_train->add_option("--batch", train.batch_size, "Batch size")->check(CLI::PositiveNumber);
  cmd_train->add_option("--log-every", train.log_every, "Trace interval in steps")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (!out.empty()) g.out = out;

  try {
    if (*cmd_moments) {
      moments.keep_probs = {moments_p};
      moments.scaling = resolve_scaling(moments_scaling, moments_no_scaling);
      return run_sweep("moments", moments, g, "moments.csv");
    }
    if (*cmd_keep) {
      keep.spatial_sides = {keep_side};
      keep.scaling = parse_scaling_mode(keep_scaling);
      return run_sweep("keep-prob", keep, g, "keep_prob.csv");
    }
    if (*cmd_demos) return run_demos(demos, g);
    if (*cmd_patterns) return run_patterns(pattern, g);
    if (*cmd_train) {
      train.head.kind = toy::parse_head(head);
      return run_train(train, g);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
