#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stochpool/error.hpp"
#include "stochpool/pooling.hpp"
#include "stochpool/rng.hpp"
#include "stochpool/tensor.hpp"

namespace stochpool::toy {

enum class HeadKind { kGap, kSap, kDropoutGap };

inline std::string_view to_string(HeadKind head) {
  switch (head) {
    case HeadKind::kGap: return "gap";
    case HeadKind::kSap: return "sap";
    case HeadKind::kDropoutGap: return "dropout";
  }
  return "unknown";
}

inline HeadKind parse_head(std::string_view name) {
  if (name == "gap") return HeadKind::kGap;
  if (name == "sap") return HeadKind::kSap;
  if (name == "dropout" || name == "dropout-gap") return HeadKind::kDropoutGap;
  throw Error(ErrorKind::kInvalidConfig, "unknown head '" + std::string(name) + "'");
}

struct Architecture {
  int side = 16;
  int in_channels = 1;
  int conv1_channels = 4;
  int conv2_channels = 8;
  int classes = 4;
};

/// 3x3 convolution, stride 1, zero padding 1. weight is [out][in][3][3].
struct Conv3x3 {
  int in = 0;
  int out = 0;
  std::vector<double> weight;
  std::vector<double> bias;
};

/// Per-channel batch normalization with affine parameters.
struct Norm {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

struct Params {
  Architecture arch;
  Conv3x3 conv1;
  Norm norm1;
  Conv3x3 conv2;
  Norm norm2;
  std::vector<double> fc_weight;  // [classes][conv2_channels]
  std::vector<double> fc_bias;
  /// Bumped on every update; caches from an older version are rejected.
  std::uint64_t version = 0;
};

/// He-normal convolutions, unit/zero normalization, zero classifier.
inline Params init_params(const Architecture& arch, RngStream& rng) {
  Params p;
  p.arch = arch;
  auto make_conv = [&rng](int in, int out) {
    Conv3x3 c{in, out, std::vector<double>(static_cast<std::size_t>(out) * in * 9),
              std::vector<double>(out, 0.0)};
    const double stddev = std::sqrt(2.0 / (9.0 * in));
    for (double& w : c.weight) w = stddev * rng.normal();
    return c;
  };
  auto make_norm = [](int channels) {
    return Norm{std::vector<double>(channels, 1.0), std::vector<double>(channels, 0.0),
                std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
  };
  p.conv1 = make_conv(arch.in_channels, arch.conv1_channels);
  p.norm1 = make_norm(arch.conv1_channels);
  p.conv2 = make_conv(arch.conv1_channels, arch.conv2_channels);
  p.norm2 = make_norm(arch.conv2_channels);
  p.fc_weight.assign(static_cast<std::size_t>(arch.classes) * arch.conv2_channels, 0.0);
  p.fc_bias.assign(arch.classes, 0.0);
  return p;
}

/// Trainable tensors in a fixed order (shared with Grads::views).
inline std::vector<std::span<double>> parameter_views(Params& p) {
  return {p.conv1.weight, p.conv1.bias, p.norm1.gamma, p.norm1.beta, p.conv2.weight,
          p.conv2.bias,   p.norm2.gamma, p.norm2.beta, p.fc_weight,  p.fc_bias};
}

struct Grads {
  std::vector<double> conv1_weight, conv1_bias, norm1_gamma, norm1_beta;
  std::vector<double> conv2_weight, conv2_bias, norm2_gamma, norm2_beta;
  std::vector<double> fc_weight, fc_bias;
  /// Gradient with respect to the pooling head's input.
  Tensor4 features;

  std::vector<std::span<double>> views() {
    return {conv1_weight, conv1_bias, norm1_gamma, norm1_beta, conv2_weight,
            conv2_bias,   norm2_gamma, norm2_beta, fc_weight,  fc_bias};
  }
};

struct HeadConfig {
  HeadKind kind = HeadKind::kGap;
  double keep_prob = 0.5;
};

/// Optional fixed randomness for the head; used by gradient checks.
struct FixedHeadMasks {
  std::optional<std::vector<IndexSet>> sap;
  std::optional<DropMask> dropout;
};

namespace detail {

struct NormCache {
  std::vector<double> mean;
  std::vector<double> inv_std;
  Tensor4 normalized;  // x_hat
};

// Column buffer for one sample: row (i*9 + ky*3 + kx) holds input channel i
// shifted by (ky-1, kx-1), zero outside the plane.
inline void im2col(const Tensor4& x, int n, std::vector<double>& col) {
  const Shape& s = x.shape();
  const std::size_t hw = s.spatial();
  col.assign(static_cast<std::size_t>(s.c) * 9 * hw, 0.0);
  for (int i = 0; i < s.c; ++i) {
    const auto src = x.plane(n, i);
    for (int k = 0; k < 9; ++k) {
      const int dy = k / 3 - 1, dx = k % 3 - 1;
      double* dst = &col[(static_cast<std::size_t>(i) * 9 + k) * hw];
      for (int y = std::max(0, -dy); y < std::min(s.h, s.h - dy); ++y) {
        const int x0 = std::max(0, -dx), x1 = std::min(s.w, s.w - dx);
        for (int xx = x0; xx < x1; ++xx) {
          dst[static_cast<std::size_t>(y) * s.w + xx] = src[static_cast<std::size_t>(y + dy) * s.w + xx + dx];
        }
      }
    }
  }
}

// Inverse scatter of im2col: accumulates column gradients into plane n.
inline void col2im_add(const std::vector<double>& col, Tensor4& grad, int n) {
  const Shape& s = grad.shape();
  const std::size_t hw = s.spatial();
  for (int i = 0; i < s.c; ++i) {
    auto dst = grad.plane(n, i);
    for (int k = 0; k < 9; ++k) {
      const int dy = k / 3 - 1, dx = k % 3 - 1;
      const double* src = &col[(static_cast<std::size_t>(i) * 9 + k) * hw];
      for (int y = std::max(0, -dy); y < std::min(s.h, s.h - dy); ++y) {
        const int x0 = std::max(0, -dx), x1 = std::min(s.w, s.w - dx);
        for (int xx = x0; xx < x1; ++xx) {
          dst[static_cast<std::size_t>(y + dy) * s.w + xx + dx] += src[static_cast<std::size_t>(y) * s.w + xx];
        }
      }
    }
  }
}

inline Tensor4 conv_forward(const Tensor4& x, const Conv3x3& conv) {
  const Shape& s = x.shape();
  stochpool::detail::require(s.c == conv.in, ErrorKind::kShapeMismatch, "conv input channels");
  Tensor4 out(Shape{s.n, conv.out, s.h, s.w});
  const std::size_t hw = s.spatial();
  const int rows = conv.in * 9;
  std::vector<double> col;
  for (int n = 0; n < s.n; ++n) {
    im2col(x, n, col);
    for (int o = 0; o < conv.out; ++o) {
      auto dst = out.plane(n, o);
      std::fill(dst.begin(), dst.end(), conv.bias[o]);
      for (int r = 0; r < rows; ++r) {
        const double wv = conv.weight[static_cast<std::size_t>(o) * rows + r];
        const double* src = &col[static_cast<std::size_t>(r) * hw];
        for (std::size_t q = 0; q < hw; ++q) dst[q] += wv * src[q];
      }
    }
  }
  return out;
}

// Fills weight/bias gradients and returns the input gradient.
inline Tensor4 conv_backward(const Tensor4& x, const Conv3x3& conv, const Tensor4& grad_out,
                             std::vector<double>& grad_w, std::vector<double>& grad_b) {
  const Shape& s = x.shape();
  Tensor4 grad_in(s);
  grad_w.assign(conv.weight.size(), 0.0);
  grad_b.assign(conv.bias.size(), 0.0);
  const std::size_t hw = s.spatial();
  const int rows = conv.in * 9;
  std::vector<double> col;
  std::vector<double> grad_col;
  for (int n = 0; n < s.n; ++n) {
    im2col(x, n, col);
    grad_col.assign(col.size(), 0.0);
    for (int o = 0; o < conv.out; ++o) {
      const auto go = grad_out.plane(n, o);
      for (double v : go) grad_b[o] += v;
      for (int r = 0; r < rows; ++r) {
        const double* src = &col[static_cast<std::size_t>(r) * hw];
        double* gc = &grad_col[static_cast<std::size_t>(r) * hw];
        const double wv = conv.weight[static_cast<std::size_t>(o) * rows + r];
        for (std::size_t q = 0; q < hw; ++q) gc[q] += wv * go[q];
        double acc[4] = {0.0, 0.0, 0.0, 0.0};
        std::size_t q = 0;
        for (; q + 4 <= hw; q += 4) {
          for (int lane = 0; lane < 4; ++lane) acc[lane] += go[q + lane] * src[q + lane];
        }
        for (; q < hw; ++q) acc[0] += go[q] * src[q];
        grad_w[static_cast<std::size_t>(o) * rows + r] += (acc[0] + acc[1]) + (acc[2] + acc[3]);
      }
    }
    col2im_add(grad_col, grad_in, n);
  }
  return grad_in;
}

inline Tensor4 norm_forward(const Tensor4& z, const Norm& norm, Phase phase, NormCache& cache) {
  const Shape& s = z.shape();
  const double count = static_cast<double>(s.n) * s.spatial();
  cache.mean.assign(s.c, 0.0);
  cache.inv_std.assign(s.c, 0.0);
  for (int c = 0; c < s.c; ++c) {
    double mu = norm.running_mean[c];
    double var = norm.running_var[c];
    if (phase == Phase::kTrain) {
      double sum = 0.0;
      for (int n = 0; n < s.n; ++n) {
        for (double v : z.plane(n, c)) sum += v;
      }
      mu = sum / count;
      double sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        for (double v : z.plane(n, c)) sq += (v - mu) * (v - mu);
      }
      var = sq / count;
    }
    cache.mean[c] = mu;
    cache.inv_std[c] = 1.0 / std::sqrt(var + norm.eps);
  }
  cache.normalized = Tensor4(s);
  Tensor4 out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const auto src = z.plane(n, c);
      auto xh = cache.normalized.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) {
        xh[i] = (src[i] - cache.mean[c]) * cache.inv_std[c];
        dst[i] = norm.gamma[c] * xh[i] + norm.beta[c];
      }
    }
  }
  return out;
}

inline Tensor4 norm_backward(const Tensor4& grad_out, const Norm& norm, const NormCache& cache,
                             Phase phase, std::vector<double>& grad_gamma,
                             std::vector<double>& grad_beta) {
  const Shape& s = grad_out.shape();
  const double count = static_cast<double>(s.n) * s.spatial();
  grad_gamma.assign(s.c, 0.0);
  grad_beta.assign(s.c, 0.0);
  Tensor4 grad_in(s);
  for (int c = 0; c < s.c; ++c) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const auto g = grad_out.plane(n, c);
      const auto xh = cache.normalized.plane(n, c);
      for (std::size_t i = 0; i < g.size(); ++i) {
        sum_g += g[i];
        sum_gx += g[i] * xh[i];
      }
    }
    grad_beta[c] = sum_g;
    grad_gamma[c] = sum_gx;
    const double k = norm.gamma[c] * cache.inv_std[c];
    for (int n = 0; n < s.n; ++n) {
      const auto g = grad_out.plane(n, c);
      const auto xh = cache.normalized.plane(n, c);
      auto gi = grad_in.plane(n, c);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gi[i] = phase == Phase::kTrain ? k * (g[i] - sum_g / count - xh[i] * sum_gx / count)
                                       : k * g[i];
      }
    }
  }
  return grad_in;
}

inline Tensor4 relu(const Tensor4& x) {
  Tensor4 out = x;
  for (double& v : out.data()) v = std::max(v, 0.0);
  return out;
}

inline Tensor4 relu_backward(const Tensor4& pre, const Tensor4& grad_out) {
  Tensor4 g = grad_out;
  const auto src = pre.data();
  auto d = g.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(src[i] > 0.0)) d[i] = 0.0;
  }
  return g;
}

}  // namespace detail

/// Everything backward() needs from one forward() call.
struct Cache {
  std::uint64_t params_version = 0;
  Phase phase = Phase::kTest;
  HeadConfig head;
  Tensor4 input, z1, a1, h1, z2, a2, features, pooled;
  detail::NormCache norm1, norm2;
  SapSavedState sap_state;
  DropMask drop_mask;
};

struct ForwardResult {
  Tensor4 logits;  // (B, classes, 1, 1)
  Cache cache;
};

/// conv -> norm -> relu -> conv -> norm -> relu -> head -> linear.
/// Only the head consumes randomness, and only in the train phase.
inline ForwardResult forward(const Params& params, const Tensor4& images, Phase phase,
                             const HeadConfig& head, RngStream& rng,
                             const FixedHeadMasks& fixed = {}) {
  const Architecture& a = params.arch;
  stochpool::detail::require(
      images.shape().c == a.in_channels && images.shape().h == a.side && images.shape().w == a.side,
      ErrorKind::kShapeMismatch, "batch shape " + images.shape().str() + " does not match network");
  ForwardResult r;
  Cache& c = r.cache;
  c.params_version = params.version;
  c.phase = phase;
  c.head = head;
  c.input = images;
  c.z1 = detail::conv_forward(images, params.conv1);
  c.a1 = detail::norm_forward(c.z1, params.norm1, phase, c.norm1);
  c.h1 = detail::relu(c.a1);
  c.z2 = detail::conv_forward(c.h1, params.conv2);
  c.a2 = detail::norm_forward(c.z2, params.norm2, phase, c.norm2);
  c.features = detail::relu(c.a2);

  switch (head.kind) {
    case HeadKind::kGap:
      c.pooled = global_avg_pool(c.features);
      break;
    case HeadKind::kSap: {
      SapOptions opt;
      opt.keep_prob = head.keep_prob;
      SapResult res = (phase == Phase::kTrain && fixed.sap)
                          ? sap_forward_with_masks(c.features, opt, *fixed.sap)
                          : sap_forward(c.features, opt, phase, rng);
      c.pooled = std::move(res.output);
      c.sap_state = std::move(res.state);
      break;
    }
    case HeadKind::kDropoutGap: {
      DropoutResult res{};
      if (phase == Phase::kTrain && fixed.dropout) {
        res = DropoutResult{apply_drop_mask(c.features, *fixed.dropout), *fixed.dropout};
      } else {
        res = dropout_with_mask(c.features, head.keep_prob, phase, rng);
      }
      c.drop_mask = std::move(res.mask);
      c.pooled = global_avg_pool(res.output);
      break;
    }
  }

  const int batch = images.shape().n;
  const int feat = a.conv2_channels;
  r.logits = Tensor4(Shape{batch, a.classes, 1, 1});
  for (int b = 0; b < batch; ++b) {
    for (int k = 0; k < a.classes; ++k) {
      double acc = params.fc_bias[k];
      for (int f = 0; f < feat; ++f) {
        acc += params.fc_weight[static_cast<std::size_t>(k) * feat + f] * c.pooled.at(b, f, 0, 0);
      }
      r.logits.at(b, k, 0, 0) = acc;
    }
  }
  return r;
}

/// Parameter gradients for upstream gradient `grad_logits` (shape of logits).
inline Grads backward(const Params& params, const Cache& c, const Tensor4& grad_logits) {
  stochpool::detail::require(c.params_version == params.version && c.input.size() > 0,
                             ErrorKind::kStaleCache, "cache does not belong to these parameters");
  const Architecture& a = params.arch;
  const int batch = c.input.shape().n;
  const int feat = a.conv2_channels;
  stochpool::detail::require(grad_logits.shape() == Shape{batch, a.classes, 1, 1},
                             ErrorKind::kShapeMismatch, "logit gradient shape");
  Grads g;
  g.fc_weight.assign(params.fc_weight.size(), 0.0);
  g.fc_bias.assign(params.fc_bias.size(), 0.0);
  Tensor4 grad_pooled(c.pooled.shape());
  for (int b = 0; b < batch; ++b) {
    for (int k = 0; k < a.classes; ++k) {
      const double gl = grad_logits.at(b, k, 0, 0);
      g.fc_bias[k] += gl;
      for (int f = 0; f < feat; ++f) {
        g.fc_weight[static_cast<std::size_t>(k) * feat + f] += gl * c.pooled.at(b, f, 0, 0);
        grad_pooled.at(b, f, 0, 0) += gl * params.fc_weight[static_cast<std::size_t>(k) * feat + f];
      }
    }
  }

  switch (c.head.kind) {
    case HeadKind::kGap:
      g.features = global_avg_pool_backward(grad_pooled, c.features.shape());
      break;
    case HeadKind::kSap:
      g.features = sap_backward(grad_pooled, c.sap_state);
      break;
    case HeadKind::kDropoutGap:
      g.features = dropout_backward(global_avg_pool_backward(grad_pooled, c.features.shape()),
                                    c.drop_mask);
      break;
  }

  const Tensor4 g_a2 = detail::relu_backward(c.a2, g.features);
  const Tensor4 g_z2 = detail::norm_backward(g_a2, params.norm2, c.norm2, c.phase, g.norm2_gamma, g.norm2_beta);
  const Tensor4 g_h1 = detail::conv_backward(c.h1, params.conv2, g_z2, g.conv2_weight, g.conv2_bias);
  const Tensor4 g_a1 = detail::relu_backward(c.a1, g_h1);
  const Tensor4 g_z1 = detail::norm_backward(g_a1, params.norm1, c.norm1, c.phase, g.norm1_gamma, g.norm1_beta);
  detail::conv_backward(c.input, params.conv1, g_z1, g.conv1_weight, g.conv1_bias);
  return g;
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
struct LossResult {
  double loss = 0.0;
  Tensor4 grad;
  int correct = 0;
};

inline LossResult softmax_cross_entropy(const Tensor4& logits, std::span<const int> labels) {
  const int batch = logits.shape().n;
  const int classes = logits.shape().c;
  stochpool::detail::require(labels.size() == static_cast<std::size_t>(batch),
                             ErrorKind::kShapeMismatch, "label count");
  LossResult r;
  r.grad = Tensor4(logits.shape());
  for (int b = 0; b < batch; ++b) {
    double mx = logits.at(b, 0, 0, 0);
    int arg = 0;
    for (int k = 1; k < classes; ++k) {
      if (logits.at(b, k, 0, 0) > mx) {
        mx = logits.at(b, k, 0, 0);
        arg = k;
      }
    }
    double z = 0.0;
    for (int k = 0; k < classes; ++k) z += std::exp(logits.at(b, k, 0, 0) - mx);
    const double log_z = mx + std::log(z);
    r.loss += log_z - logits.at(b, labels[b], 0, 0);
    if (arg == labels[b]) ++r.correct;
    for (int k = 0; k < classes; ++k) {
      const double prob = std::exp(logits.at(b, k, 0, 0) - log_z);
      r.grad.at(b, k, 0, 0) = (prob - (k == labels[b] ? 1.0 : 0.0)) / batch;
    }
  }
  r.loss /= batch;
  return r;
}

/// Folds the batch statistics of a train-phase forward into the running ones.
inline void update_running_stats(Params& params, const Cache& c) {
  if (c.phase != Phase::kTrain) return;
  auto fold = [](Norm& norm, const detail::NormCache& nc, double count) {
    for (std::size_t i = 0; i < norm.gamma.size(); ++i) {
      const double var = 1.0 / (nc.inv_std[i] * nc.inv_std[i]) - norm.eps;
      const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
      norm.running_mean[i] = (1.0 - norm.momentum) * norm.running_mean[i] + norm.momentum * nc.mean[i];
      norm.running_var[i] = (1.0 - norm.momentum) * norm.running_var[i] + norm.momentum * unbiased;
    }
  };
  const double count = static_cast<double>(c.input.shape().n) * c.input.shape().spatial();
  fold(params.norm1, c.norm1, count);
  fold(params.norm2, c.norm2, count);
}

inline void sgd_step(Params& params, Grads& grads, double lr) {
  auto pv = parameter_views(params);
  auto gv = grads.views();
  for (std::size_t t = 0; t < pv.size(); ++t) {
    for (std::size_t i = 0; i < pv[t].size(); ++i) pv[t][i] -= lr * gv[t][i];
  }
  ++params.version;
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Four texture classes on a side x side canvas: horizontal stripes, vertical
/// stripes, a Gaussian blob at a random position, diagonal stripes. Phase,
/// wavelength, amplitude and blob position are random; N(0, 0.3^2) pixel noise.
struct Dataset {
  Tensor4 images;
  std::vector<int> labels;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(labels.size()); }
};

inline constexpr int kSyntheticClasses = 4;

inline Dataset make_synthetic(int count, int side, std::uint64_t seed, std::uint64_t stream) {
  stochpool::detail::require(count >= 1 && side >= 4, ErrorKind::kInvalidConfig,
                             "synthetic set needs count >= 1 and side >= 4");
  Dataset d;
  d.seed = seed;
  d.images = Tensor4(Shape{count, 1, side, side});
  d.labels.resize(count);
  RngStream rng(seed, stream);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  for (int i = 0; i < count; ++i) {
    const int label = static_cast<int>(rng.below(kSyntheticClasses));
    d.labels[i] = label;
    const double amp = 0.8 + 0.4 * rng.uniform();
    const double wavelength = 4.0 + 2.0 * rng.uniform();
    const double phase = kTwoPi * rng.uniform();
    const double cy = 3.0 + (side - 7.0) * rng.uniform();
    const double cx = 3.0 + (side - 7.0) * rng.uniform();
    auto plane = d.images.plane(i, 0);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        double v = 0.0;
        switch (label) {
          case 0: v = amp * std::sin(kTwoPi * y / wavelength + phase); break;
          case 1: v = amp * std::sin(kTwoPi * x / wavelength + phase); break;
          case 2: {
            const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            v = 2.0 * amp * std::exp(-r2 / (2.0 * 2.0 * 2.0));
            break;
          }
          default: v = amp * std::sin(kTwoPi * (x + y) / (wavelength * std::numbers::sqrt2) + phase); break;
        }
        plane[static_cast<std::size_t>(y) * side + x] = v + 0.3 * rng.normal();
      }
    }
  }
  return d;
}

/// Rows [begin, end) of a dataset as a batch.
inline std::pair<Tensor4, std::vector<int>> gather_batch(const Dataset& d, std::span<const int> rows) {
  const Shape s = d.images.shape();
  Tensor4 batch(Shape{static_cast<int>(rows.size()), s.c, s.h, s.w});
  std::vector<int> labels(rows.size());
  const std::size_t per = static_cast<std::size_t>(s.c) * s.spatial();
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const auto src = d.images.data().subspan(static_cast<std::size_t>(rows[b]) * per, per);
    std::copy(src.begin(), src.end(), batch.data().begin() + static_cast<std::ptrdiff_t>(b * per));
    labels[b] = d.labels[rows[b]];
  }
  return {std::move(batch), std::move(labels)};
}

/// Test-phase accuracy; never draws from `rng`.
inline double evaluate(const Params& params, const Dataset& d, const HeadConfig& head, RngStream& rng,
                       int chunk = 128) {
  int correct = 0;
  std::vector<int> rows;
  for (int begin = 0; begin < d.size(); begin += chunk) {
    rows.clear();
    for (int i = begin; i < std::min(d.size(), begin + chunk); ++i) rows.push_back(i);
    auto [batch, labels] = gather_batch(d, rows);
    const auto fr = forward(params, batch, Phase::kTest, head, rng);
    correct += softmax_cross_entropy(fr.logits, labels).correct;
  }
  return static_cast<double>(correct) / d.size();
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  HeadConfig head{};
  int steps = 2000;
  double learning_rate = 0.1;
  int batch_size = 32;
  std::uint64_t seed = 1;
  int train_size = 512;
  int test_size = 256;
  /// A trace row is written every `log_every` steps and after the last one.
  int log_every = 100;
  Architecture arch{};

  void validate() const {
    stochpool::detail::check_keep_prob(head.keep_prob);
    stochpool::detail::require(steps >= 1 && batch_size >= 1 && train_size >= 1 && test_size >= 1 &&
                                   log_every >= 1,
                               ErrorKind::kInvalidConfig, "training sizes must be >= 1");
    stochpool::detail::require(learning_rate > 0.0 && std::isfinite(learning_rate),
                               ErrorKind::kInvalidConfig, "learning rate must be positive");
    stochpool::detail::require(arch.classes == kSyntheticClasses && arch.in_channels == 1,
                               ErrorKind::kInvalidConfig,
                               "synthetic data has 4 classes and one input channel");
  }
};

struct TraceRow {
  int step = 0;
  double loss = 0.0;       // batch loss at this step, before the update
  double train_acc = 0.0;  // test-phase accuracy on the full training set
  double test_acc = 0.0;   // test-phase accuracy on the held-out set
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  double first_loss = 0.0;
  double final_train_acc = 0.0;
  double final_test_acc = 0.0;
  Params params;
};

/// Plain SGD on the synthetic task. Step s samples its batch from substream
/// (s, 0) and feeds the head substream (s, 1), so heads that draw nothing see
/// the same batches as heads that do.
inline TrainTrace train_toy(const TrainConfig& cfg) {
  cfg.validate();
  RngStream root(cfg.seed, 0);
  RngStream init_rng = root.substream(1);
  const Dataset train = make_synthetic(cfg.train_size, cfg.arch.side, cfg.seed, 2);
  const Dataset test = make_synthetic(cfg.test_size, cfg.arch.side, cfg.seed, 3);
  TrainTrace trace;
  trace.params = init_params(cfg.arch, init_rng);
  Params& params = trace.params;
  RngStream eval_rng = root.substream(4);
  RngStream steps_rng = root.substream(5);

  std::vector<int> rows(cfg.batch_size);
  for (int step = 1; step <= cfg.steps; ++step) {
    RngStream step_rng = steps_rng.substream(static_cast<std::uint64_t>(step));
    RngStream batch_rng = step_rng.substream(0);
    RngStream head_rng = step_rng.substream(1);
    for (int& r : rows) r = static_cast<int>(batch_rng.below(static_cast<std::uint64_t>(train.size())));
    auto [batch, labels] = gather_batch(train, rows);

    const auto fr = forward(params, batch, Phase::kTrain, cfg.head, head_rng);
    const auto lr = softmax_cross_entropy(fr.logits, labels);
    if (!std::isfinite(lr.loss)) {
      throw Error(ErrorKind::kTrainingFailure, "non-finite loss at step " + std::to_string(step));
    }
    if (step == 1) trace.first_loss = lr.loss;
    Grads grads = backward(params, fr.cache, lr.grad);
    update_running_stats(params, fr.cache);
    sgd_step(params, grads, cfg.learning_rate);

    if (step % cfg.log_every == 0 || step == cfg.steps) {
      TraceRow row;
      row.step = step;
      row.loss = lr.loss;
      row.train_acc = evaluate(params, train, cfg.head, eval_rng);
      row.test_acc = evaluate(params, test, cfg.head, eval_rng);
      trace.rows.push_back(row);
    }
  }
  trace.final_train_acc = trace.rows.back().train_acc;
  trace.final_test_acc = trace.rows.back().test_acc;
  return trace;
}

inline constexpr const char* kTraceCsvHeader = "step,loss,train_acc,test_acc";

inline std::string to_csv(const TrainTrace& trace) {
  std::string out = std::string(kTraceCsvHeader) + "\n";
  char buf[160];
  for (const auto& r : trace.rows) {
    std::snprintf(buf, sizeof buf, "%d,%.9e,%.6f,%.6f\n", r.step, r.loss, r.train_acc, r.test_acc);
    out += buf;
  }
  return out;
}

inline void write_csv(const std::string& path, const TrainTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  out << to_csv(trace);
  if (!out) throw Error(ErrorKind::kIo, "failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Head consistency probe

struct HeadMoments {
  double train = 0.0;
  double test = 0.0;
  double ratio() const { return train / test; }
};

/// Second moment of the head output (what a following normalization layer
/// would receive) in both phases, for i.i.d. N(0,1) features of shape
/// `features`, averaged over `trials` fresh draws.
inline HeadMoments head_moment_probe(const HeadConfig& head, Shape features, int trials,
                                     std::uint64_t seed) {
  stochpool::detail::require(trials >= 1, ErrorKind::kInvalidConfig, "trials must be >= 1");
  HeadMoments m;
  for (int t = 0; t < trials; ++t) {
    RngStream rng(seed, static_cast<std::uint64_t>(t));
    const Tensor4 x = sample_gaussian(features, rng);
    Tensor4 train, test;
    switch (head.kind) {
      case HeadKind::kGap:
        train = test = global_avg_pool(x);
        break;
      case HeadKind::kSap: {
        SapOptions opt;
        opt.keep_prob = head.keep_prob;
        train = sap_forward(x, opt, Phase::kTrain, rng).output;
        test = sap_forward(x, opt, Phase::kTest, rng).output;
        break;
      }
      case HeadKind::kDropoutGap:
        train = global_avg_pool(dropout(x, head.keep_prob, Phase::kTrain, rng));
        test = global_avg_pool(x);
        break;
    }
    m.train += second_moment(train) / trials;
    m.test += second_moment(test) / trials;
  }
  return m;
}

}  // namespace stochpool::toy
