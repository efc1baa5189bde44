#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stochpool/error.hpp"
#include "stochpool/masks.hpp"
#include "stochpool/rng.hpp"
#include "stochpool/tensor.hpp"

namespace stochpool {

enum class Phase { kTrain, kTest };

constexpr std::string_view to_string(Phase phase) {
  return phase == Phase::kTrain ? "train" : "test";
}

namespace detail {

// Sum over a rows x cols window whose rows start `row_stride` apart. Columns
// are spread over four partial sums by (col % 4) and folded as
// (a0 + a1) + (a2 + a3). With `weight` set, each term is x * weight; a weight
// of exactly 1 therefore reproduces the unweighted sum bit for bit.
inline double window_sum(const double* x, const double* weight, std::size_t row_stride, int rows,
                         int cols) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  for (int r = 0; r < rows; ++r) {
    const double* row = x + static_cast<std::size_t>(r) * row_stride;
    int c = 0;
    if (weight == nullptr) {
      for (; c + 4 <= cols; c += 4) {
        a0 += row[c];
        a1 += row[c + 1];
        a2 += row[c + 2];
        a3 += row[c + 3];
      }
      if (c < cols) a0 += row[c];
      if (c + 1 < cols) a1 += row[c + 1];
      if (c + 2 < cols) a2 += row[c + 2];
    } else {
      const double* wrow = weight + static_cast<std::size_t>(r) * row_stride;
      for (; c + 4 <= cols; c += 4) {
        a0 += row[c] * wrow[c];
        a1 += row[c + 1] * wrow[c + 1];
        a2 += row[c + 2] * wrow[c + 2];
        a3 += row[c + 3] * wrow[c + 3];
      }
      if (c < cols) a0 += row[c] * wrow[c];
      if (c + 1 < cols) a1 += row[c + 1] * wrow[c + 1];
      if (c + 2 < cols) a2 += row[c + 2] * wrow[c + 2];
    }
  }
  return (a0 + a1) + (a2 + a3);
}

// window_sum(x, nullptr, ...) and window_sum(x, weight, ...) in one pass over
// x; both results are bit-identical to the separate calls.
inline void window_sum_pair(const double* x, const double* weight, std::size_t row_stride, int rows,
                            int cols, double& plain, double& weighted) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  double b0 = 0.0, b1 = 0.0, b2 = 0.0, b3 = 0.0;
  for (int r = 0; r < rows; ++r) {
    const double* row = x + static_cast<std::size_t>(r) * row_stride;
    const double* wrow = weight + static_cast<std::size_t>(r) * row_stride;
    int c = 0;
    for (; c + 4 <= cols; c += 4) {
      a0 += row[c];
      a1 += row[c + 1];
      a2 += row[c + 2];
      a3 += row[c + 3];
      b0 += row[c] * wrow[c];
      b1 += row[c + 1] * wrow[c + 1];
      b2 += row[c + 2] * wrow[c + 2];
      b3 += row[c + 3] * wrow[c + 3];
    }
    if (c < cols) {
      a0 += row[c];
      b0 += row[c] * wrow[c];
    }
    if (c + 1 < cols) {
      a1 += row[c + 1];
      b1 += row[c + 1] * wrow[c + 1];
    }
    if (c + 2 < cols) {
      a2 += row[c + 2];
      b2 += row[c + 2] * wrow[c + 2];
    }
  }
  plain = (a0 + a1) + (a2 + a3);
  weighted = (b0 + b1) + (b2 + b3);
}

// Window geometry shared by every 2-D pooling routine. side == 0 means global.
struct PoolGeometry {
  int win_h = 0;
  int win_w = 0;
  int out_h = 0;
  int out_w = 0;

  static PoolGeometry make(const Shape& in, std::optional<int> window) {
    PoolGeometry g;
    if (!window) {
      g.win_h = in.h;
      g.win_w = in.w;
    } else {
      const int r = *window;
      require(r >= 1, ErrorKind::kInvalidPooling, "pool size must be >= 1");
      require(in.h % r == 0 && in.w % r == 0, ErrorKind::kInvalidPooling,
              "pool size " + std::to_string(r) + " does not divide spatial extent " +
                  std::to_string(in.h) + "x" + std::to_string(in.w));
      g.win_h = r;
      g.win_w = r;
    }
    g.out_h = in.h / g.win_h;
    g.out_w = in.w / g.win_w;
    return g;
  }

  int windows() const { return out_h * out_w; }
  double window_cells() const { return static_cast<double>(win_h) * win_w; }
  std::size_t origin(int oy, int ox, int width) const {
    return static_cast<std::size_t>(oy * win_h) * width + static_cast<std::size_t>(ox * win_w);
  }
  // output cell that covers flat spatial index i
  int window_of(std::size_t i, int width) const {
    const int y = static_cast<int>(i / width);
    const int x = static_cast<int>(i % width);
    return (y / win_h) * out_w + (x / win_w);
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Dropout

/// Bernoulli keep indicators, one per input element.
struct DropMask {
  std::vector<std::uint8_t> keep;
  double keep_prob = 1.0;
};

struct DropoutResult {
  Tensor4 output;
  DropMask mask;
};

/// Train: x * m / p with m ~ Bernoulli(p) i.i.d.; test: identity (no draws).
/// Sample n draws from its own substream of one split of `rng`.
inline DropoutResult dropout_with_mask(const Tensor4& x, double p, Phase phase, RngStream& rng) {
  detail::check_keep_prob(p);
  DropoutResult res{x, {std::vector<std::uint8_t>(x.size(), 1), p}};
  if (phase == Phase::kTest) return res;

  RngStream base = rng.split();
  const std::size_t per_sample = x.size() / static_cast<std::size_t>(x.shape().n);
  const double inv_p = 1.0 / p;
  auto out = res.output.data();
  const auto in = x.data();
  for (int n = 0; n < x.shape().n; ++n) {
    RngStream sample_rng = base.substream(static_cast<std::uint64_t>(n));
    const std::size_t begin = static_cast<std::size_t>(n) * per_sample;
    for (std::size_t i = begin; i < begin + per_sample; ++i) {
      const bool keep = sample_rng.bernoulli(p);
      res.mask.keep[i] = keep ? 1 : 0;
      out[i] = keep ? in[i] * inv_p : 0.0;
    }
  }
  return res;
}

inline Tensor4 dropout(const Tensor4& x, double p, Phase phase, RngStream& rng) {
  return dropout_with_mask(x, p, phase, rng).output;
}

/// Applies a fixed mask the way the train phase does.
inline Tensor4 apply_drop_mask(const Tensor4& x, const DropMask& mask) {
  detail::require(mask.keep.size() == x.size(), ErrorKind::kShapeMismatch,
                  "drop mask size does not match input");
  Tensor4 out = x;
  const double inv_p = 1.0 / mask.keep_prob;
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = mask.keep[i] ? d[i] * inv_p : 0.0;
  return out;
}

inline Tensor4 dropout_backward(const Tensor4& grad_out, const DropMask& mask) {
  return apply_drop_mask(grad_out, mask);
}

// ---------------------------------------------------------------------------
// Stochastic subsampling

/// Train: per sample, gathers the floor(HW*p) kept spatial positions (one mask
/// shared by all channels) in permutation order; output shape (N, C, 1, k).
/// Test: returns x unchanged.
inline Tensor4 stochastic_subsample(const Tensor4& x, double p, Phase phase, RngStream& rng) {
  detail::check_keep_prob(p);
  if (phase == Phase::kTest) return x;
  const Shape& s = x.shape();
  const std::size_t hw = s.spatial();
  const std::size_t k = keep_count(hw, p);
  if (k == 0) throw Error(ErrorKind::kEmptySubsample, "floor(HW * p) is zero");

  RngStream base = rng.split();
  Tensor4 out(Shape{s.n, s.c, 1, static_cast<int>(k)});
  for (int n = 0; n < s.n; ++n) {
    RngStream sample_rng = base.substream(static_cast<std::uint64_t>(n));
    const IndexSet keep = subsample_indices(hw, p, sample_rng);
    for (int c = 0; c < s.c; ++c) {
      const auto src = x.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t j = 0; j < k; ++j) dst[j] = src[keep.kept[j]];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Average pooling

/// Non-overlapping 1-D average pooling with window and stride r.
inline std::vector<double> avg_pool_1d(std::span<const double> x, int r) {
  detail::require(r >= 1, ErrorKind::kInvalidPooling, "pool size must be >= 1");
  detail::require(x.size() % static_cast<std::size_t>(r) == 0, ErrorKind::kInvalidPooling,
                  "pool size " + std::to_string(r) + " does not divide length " +
                      std::to_string(x.size()));
  std::vector<double> out(x.size() / static_cast<std::size_t>(r));
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = detail::window_sum(x.data() + j * r, nullptr, 0, 1, r) / static_cast<double>(r);
  }
  return out;
}

namespace detail {

inline Tensor4 avg_pool(const Tensor4& x, std::optional<int> window) {
  const Shape& s = x.shape();
  const PoolGeometry g = PoolGeometry::make(s, window);
  Tensor4 out(Shape{s.n, s.c, g.out_h, g.out_w});
  const double cells = g.window_cells();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* src = x.plane(n, c).data();
      auto dst = out.plane(n, c);
      for (int oy = 0; oy < g.out_h; ++oy) {
        for (int ox = 0; ox < g.out_w; ++ox) {
          dst[static_cast<std::size_t>(oy) * g.out_w + ox] =
              window_sum(src + g.origin(oy, ox, s.w), nullptr, s.w, g.win_h, g.win_w) / cells;
        }
      }
    }
  }
  return out;
}

inline Tensor4 avg_pool_backward(const Tensor4& grad_out, const Shape& input_shape,
                                 std::optional<int> window) {
  const PoolGeometry g = PoolGeometry::make(input_shape, window);
  require(grad_out.shape() == Shape{input_shape.n, input_shape.c, g.out_h, g.out_w},
          ErrorKind::kShapeMismatch, "gradient shape does not match pooled output");
  Tensor4 grad_in(input_shape);
  const double factor = 1.0 / g.window_cells();
  for (int n = 0; n < input_shape.n; ++n) {
    for (int c = 0; c < input_shape.c; ++c) {
      const auto go = grad_out.plane(n, c);
      auto gi = grad_in.plane(n, c);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] = go[g.window_of(i, input_shape.w)] * factor;
    }
  }
  return grad_in;
}

}  // namespace detail

/// r x r average pooling with stride r; r must divide H and W.
inline Tensor4 avg_pool_2d(const Tensor4& x, int r) { return detail::avg_pool(x, r); }

/// Per-(sample, channel) spatial mean; output shape (N, C, 1, 1).
inline Tensor4 global_avg_pool(const Tensor4& x) { return detail::avg_pool(x, std::nullopt); }

inline Tensor4 avg_pool_2d_backward(const Tensor4& grad_out, const Shape& input_shape, int r) {
  return detail::avg_pool_backward(grad_out, input_shape, r);
}

inline Tensor4 global_avg_pool_backward(const Tensor4& grad_out, const Shape& input_shape) {
  return detail::avg_pool_backward(grad_out, input_shape, std::nullopt);
}

// ---------------------------------------------------------------------------
// Stochastic average pooling

/// How train-phase windowed SAP assigns subsampled elements to output cells.
/// kMasked: subsample globally, then average the survivors inside each cell's
/// own r x r window. kPermuted: average consecutive groups of the gathered
/// (permutation-ordered) vector, i.e. AP with size r*r*p over SS(x). The two
/// coincide for global pooling.
enum class SapWindowing { kMasked, kPermuted };

struct SapOptions {
  double keep_prob = 0.5;
  /// Pool side r; std::nullopt pools the whole plane.
  std::optional<int> window;
  /// Multiply train-phase outputs by sqrt(p).
  bool scale = true;
  SapWindowing windowing = SapWindowing::kMasked;
  /// Geometry of the inner subsample. Structured kinds need square planes.
  PatternSpec pattern{};
};

/// Everything sap_backward needs: the forward configuration plus the kept
/// indices (per sample when channel-shared, per (sample, channel) otherwise).
struct SapSavedState {
  Shape input_shape{0, 0, 0, 0};
  Phase phase = Phase::kTest;
  SapOptions options;
  std::vector<IndexSet> kept;
  /// One flag per output element; 1 when the window lost every element and
  /// fell back to its plain mean.
  std::vector<std::uint8_t> fallback;

  bool per_channel() const { return options.pattern.channel_mode == ChannelMode::kIndependent; }
  const IndexSet& kept_for(int n, int c) const {
    return per_channel() ? kept[static_cast<std::size_t>(n) * input_shape.c + c]
                         : kept[static_cast<std::size_t>(n)];
  }
};

struct SapResult {
  Tensor4 output;
  SapSavedState state;
  std::size_t fallback_windows = 0;
};

namespace detail {

inline void validate_sap(const Shape& s, const SapOptions& opt) {
  check_keep_prob(opt.keep_prob);
  PoolGeometry::make(s, opt.window);
  if (opt.pattern.kind != PatternKind::kUnrestricted) {
    require(s.h == s.w, ErrorKind::kInvalidPattern, "structured patterns need square planes");
  }
}

inline IndexSet draw_keep_set(const Shape& s, const SapOptions& opt, RngStream& rng) {
  if (opt.pattern.kind == PatternKind::kUnrestricted) {
    return subsample_indices(s.spatial(), opt.keep_prob, rng);
  }
  PatternSpec single = opt.pattern;
  single.channel_mode = ChannelMode::kShared;
  const KeepMask mask = make_pattern_mask(single, s.h, opt.keep_prob, rng);
  IndexSet set;
  set.n = s.spatial();
  set.p = opt.keep_prob;
  set.kept = mask.kept_indices();
  return set;
}

}  // namespace detail

/// Draws the keep sets a train-phase forward would use, without pooling.
/// Sample n (and channel c in independent mode) uses substream n (n*C + c) of
/// one split of `rng`.
inline std::vector<IndexSet> draw_sap_masks(const Shape& s, const SapOptions& opt, RngStream& rng) {
  detail::validate_sap(s, opt);
  RngStream base = rng.split();
  std::vector<IndexSet> out;
  const bool per_channel = opt.pattern.channel_mode == ChannelMode::kIndependent;
  const int per_sample = per_channel ? s.c : 1;
  out.reserve(static_cast<std::size_t>(s.n) * per_sample);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < per_sample; ++c) {
      RngStream sub = base.substream(static_cast<std::uint64_t>(n) * per_sample + c);
      out.push_back(detail::draw_keep_set(s, opt, sub));
    }
  }
  return out;
}

/// Train-phase SAP with caller-supplied keep sets (one per sample, or one per
/// (sample, channel) in independent mode).
inline SapResult sap_forward_with_masks(const Tensor4& x, const SapOptions& opt,
                                        std::vector<IndexSet> kept) {
  const Shape& s = x.shape();
  detail::validate_sap(s, opt);
  const auto g = detail::PoolGeometry::make(s, opt.window);
  const bool per_channel = opt.pattern.channel_mode == ChannelMode::kIndependent;
  detail::require(kept.size() == static_cast<std::size_t>(s.n) * (per_channel ? s.c : 1),
                  ErrorKind::kShapeMismatch, "wrong number of keep sets for input batch");
  for (const auto& set : kept) {
    detail::require(set.n == s.spatial(), ErrorKind::kShapeMismatch,
                    "keep set length does not match spatial size");
    detail::require(!set.kept.empty(), ErrorKind::kEmptySubsample, "keep set is empty");
  }

  const bool permuted = opt.windowing == SapWindowing::kPermuted && opt.window.has_value();
  std::size_t group = 0;
  if (permuted) {
    const std::size_t k = kept.front().size();
    detail::require(k % static_cast<std::size_t>(g.windows()) == 0, ErrorKind::kInvalidPooling,
                    "permuted windowing needs floor(HW*p) divisible by the number of output cells");
    group = k / static_cast<std::size_t>(g.windows());
  }

  SapResult res;
  res.output = Tensor4(Shape{s.n, s.c, g.out_h, g.out_w});
  res.state.input_shape = s;
  res.state.phase = Phase::kTrain;
  res.state.options = opt;
  res.state.fallback.assign(res.output.size(), 0);
  const double scale = opt.scale ? std::sqrt(opt.keep_prob) : 1.0;

  std::vector<double> weight(s.spatial());
  std::vector<double> counts(static_cast<std::size_t>(g.windows()));
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const IndexSet& set = per_channel ? kept[static_cast<std::size_t>(n) * s.c + c] : kept[n];
      const double* src = x.plane(n, c).data();
      auto dst = res.output.plane(n, c);
      const std::size_t out_base = res.output.offset(n, c, 0, 0);

      if (permuted) {
        for (int j = 0; j < g.windows(); ++j) {
          double acc = 0.0;
          for (std::size_t t = 0; t < group; ++t) acc += src[set.kept[j * group + t]];
          dst[j] = scale * (acc / static_cast<double>(group));
        }
        continue;
      }

      // the weight plane only changes when the keep set does
      if (c == 0 || per_channel) {
        std::fill(weight.begin(), weight.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0.0);
        for (auto idx : set.kept) {
          weight[idx] = 1.0;
          counts[static_cast<std::size_t>(g.window_of(idx, s.w))] += 1.0;
        }
      }
      for (int oy = 0; oy < g.out_h; ++oy) {
        for (int ox = 0; ox < g.out_w; ++ox) {
          const int j = oy * g.out_w + ox;
          const std::size_t origin = g.origin(oy, ox, s.w);
          if (counts[j] == 0.0) {
            dst[j] = detail::window_sum(src + origin, nullptr, s.w, g.win_h, g.win_w) / g.window_cells();
            res.state.fallback[out_base + j] = 1;
            ++res.fallback_windows;
          } else {
            dst[j] = scale * (detail::window_sum(src + origin, weight.data() + origin, s.w, g.win_h,
                                                 g.win_w) /
                              counts[j]);
          }
        }
      }
    }
  }
  res.state.kept = std::move(kept);
  return res;
}

/// Stochastic average pooling.
/// Train: sqrt(p) times the mean of the subsampled elements of each window.
/// Test: plain average pooling (global when `opt.window` is empty); draws nothing.
inline SapResult sap_forward(const Tensor4& x, const SapOptions& opt, Phase phase, RngStream& rng) {
  detail::validate_sap(x.shape(), opt);
  if (phase == Phase::kTest) {
    SapResult res;
    res.output = detail::avg_pool(x, opt.window);
    res.state.input_shape = x.shape();
    res.state.phase = Phase::kTest;
    res.state.options = opt;
    return res;
  }
  return sap_forward_with_masks(x, opt, draw_sap_masks(x.shape(), opt, rng));
}

/// Gradient of sap_forward with respect to its input, for the keep sets saved
/// in `state`. Kept elements of window j receive scale / k_j of that window's
/// gradient, dropped ones receive zero, fallback windows spread uniformly.
inline Tensor4 sap_backward(const Tensor4& grad_out, const SapSavedState& state) {
  const Shape& s = state.input_shape;
  detail::require(s.valid(), ErrorKind::kStaleCache, "saved state is empty");
  if (state.phase == Phase::kTest) return detail::avg_pool_backward(grad_out, s, state.options.window);

  const auto g = detail::PoolGeometry::make(s, state.options.window);
  detail::require(grad_out.shape() == Shape{s.n, s.c, g.out_h, g.out_w}, ErrorKind::kShapeMismatch,
                  "gradient shape " + grad_out.shape().str() + " does not match SAP output");
  const double scale = state.options.scale ? std::sqrt(state.options.keep_prob) : 1.0;
  const bool permuted = state.options.windowing == SapWindowing::kPermuted && state.options.window;
  Tensor4 grad_in(s);
  std::vector<double> counts(static_cast<std::size_t>(g.windows()));
  const double uniform = 1.0 / g.window_cells();

  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const IndexSet& set = state.kept_for(n, c);
      const auto go = grad_out.plane(n, c);
      auto gi = grad_in.plane(n, c);
      if (permuted) {
        const std::size_t group = set.size() / static_cast<std::size_t>(g.windows());
        const double factor = scale / static_cast<double>(group);
        for (std::size_t t = 0; t < group * g.windows(); ++t) {
          gi[set.kept[t]] = go[t / group] * factor;
        }
        continue;
      }
      std::fill(counts.begin(), counts.end(), 0.0);
      for (auto idx : set.kept) counts[static_cast<std::size_t>(g.window_of(idx, s.w))] += 1.0;
      const std::size_t out_base = grad_out.offset(n, c, 0, 0);
      for (auto idx : set.kept) {
        const int j = g.window_of(idx, s.w);
        gi[idx] = go[j] * (scale / counts[j]);
      }
      for (int j = 0; j < g.windows(); ++j) {
        if (!state.fallback[out_base + j]) continue;
        const int oy = j / g.out_w;
        const int ox = j % g.out_w;
        for (int y = oy * g.win_h; y < (oy + 1) * g.win_h; ++y) {
          for (int x = ox * g.win_w; x < (ox + 1) * g.win_w; ++x) {
            gi[static_cast<std::size_t>(y) * s.w + x] = go[j] * uniform;
          }
        }
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Probability-map stochastic pooling (Zeiler & Fergus)

/// Train: per window, picks element i with probability k_i = x_i / sum(x).
/// Test: sum_i k_i x_i. All-zero windows use uniform k (output 0). Inputs must
/// be nonnegative.
inline Tensor4 zeiler_stochastic_pool(const Tensor4& x, std::optional<int> window, Phase phase,
                                      RngStream& rng) {
  const Shape& s = x.shape();
  const auto g = detail::PoolGeometry::make(s, window);
  for (double v : x.data()) {
    detail::require(v >= 0.0, ErrorKind::kInvalidInput,
                    "probability-map pooling needs nonnegative inputs");
  }
  Tensor4 out(Shape{s.n, s.c, g.out_h, g.out_w});
  std::optional<RngStream> base;
  if (phase == Phase::kTrain) base = rng.split();

  for (int n = 0; n < s.n; ++n) {
    std::optional<RngStream> sample_rng;
    if (base) sample_rng = base->substream(static_cast<std::uint64_t>(n));
    for (int c = 0; c < s.c; ++c) {
      const double* src = x.plane(n, c).data();
      auto dst = out.plane(n, c);
      for (int oy = 0; oy < g.out_h; ++oy) {
        for (int ox = 0; ox < g.out_w; ++ox) {
          const double* w0 = src + g.origin(oy, ox, s.w);
          const double total = detail::window_sum(w0, nullptr, s.w, g.win_h, g.win_w);
          double value = 0.0;
          if (phase == Phase::kTest) {
            if (total > 0.0) {
              double acc = 0.0;
              for (int y = 0; y < g.win_h; ++y) {
                for (int xx = 0; xx < g.win_w; ++xx) {
                  const double v = w0[static_cast<std::size_t>(y) * s.w + xx];
                  acc += (v / total) * v;
                }
              }
              value = acc;
            }
          } else {
            const int cells = g.win_h * g.win_w;
            int pick = cells - 1;
            if (total > 0.0) {
              const double u = sample_rng->uniform() * total;
              double cum = 0.0;
              for (int i = 0; i < cells; ++i) {
                const double v = w0[static_cast<std::size_t>(i / g.win_w) * s.w + i % g.win_w];
                cum += v;
                if (u < cum) {
                  pick = i;
                  break;
                }
              }
              // rounding can leave u >= cum; take the last positive element then
              while (pick > 0 && w0[static_cast<std::size_t>(pick / g.win_w) * s.w + pick % g.win_w] == 0.0) --pick;
            } else {
              pick = static_cast<int>(sample_rng->below(static_cast<std::uint64_t>(cells)));
            }
            value = w0[static_cast<std::size_t>(pick / g.win_w) * s.w + pick % g.win_w];
          }
          dst[static_cast<std::size_t>(oy) * g.out_w + ox] = value;
        }
      }
    }
  }
  return out;
}

}  // namespace stochpool
