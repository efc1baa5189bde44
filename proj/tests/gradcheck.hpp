#pragma once

// Finite-difference gradient checks shared by the unit and acceptance tests.

#include "oracles.hpp"
#include "stochpool/stochpool.hpp"

namespace gradcheck {

using namespace stochpool;

struct Result {
  double worst = 0.0;  // max relative error
  std::size_t checked = 0;
};

inline double weighted_sum(const Tensor4& out, const Tensor4& weights) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += out.data()[i] * weights.data()[i];
  return acc;
}

/// sap_backward against central differences of sap_forward_with_masks, on a
/// random input with the keep sets held fixed.
inline Result sap(const Shape& shape, const SapOptions& opt, std::uint64_t seed) {
  RngStream rng(seed);
  Tensor4 x = sample_gaussian(shape, rng);
  const auto masks = draw_sap_masks(shape, opt, rng);
  const SapResult fwd = sap_forward_with_masks(x, opt, masks);
  const Tensor4 upstream = sample_gaussian(fwd.output.shape(), rng);
  const Tensor4 analytic = sap_backward(upstream, fwd.state);
  Result out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double numeric = oracle::central_difference(x.data()[i], 1e-6, [&] {
      return weighted_sum(sap_forward_with_masks(x, opt, masks).output, upstream);
    });
    out.worst = std::max(out.worst, oracle::rel_error(analytic.data()[i], numeric));
    ++out.checked;
  }
  return out;
}

/// Toy network with a random nonzero classifier so every layer gets gradient.
inline toy::Params random_toy_params(std::uint64_t seed) {
  RngStream rng(seed);
  toy::Params p = toy::init_params(toy::Architecture{}, rng);
  for (double& w : p.fc_weight) w = 0.5 * rng.normal();
  for (double& b : p.fc_bias) b = 0.1 * rng.normal();
  for (double& g : p.norm1.gamma) g = 1.0 + 0.2 * rng.normal();
  for (double& b : p.norm2.beta) b = 0.1 * rng.normal();
  return p;
}

/// toy::backward against central differences of a fixed linear functional
/// of the logits, over every parameter, with head masks held fixed. Entries
/// whose gradient is below 1e-4 in magnitude are compared in absolute terms.
inline Result toy_net(toy::HeadKind kind, Phase phase, std::uint64_t seed, int batch = 4) {
  toy::Params params = random_toy_params(seed);
  const toy::Dataset data = toy::make_synthetic(batch, params.arch.side, seed, 9);
  const toy::HeadConfig head{kind, 0.5};
  RngStream rng(seed, 1);
  const auto first = toy::forward(params, data.images, phase, head, rng);
  toy::FixedHeadMasks fixed;
  if (kind == toy::HeadKind::kSap && phase == Phase::kTrain) fixed.sap = first.cache.sap_state.kept;
  if (kind == toy::HeadKind::kDropoutGap && phase == Phase::kTrain) fixed.dropout = first.cache.drop_mask;

  RngStream wrng(seed, 2);
  const Tensor4 upstream = sample_gaussian(first.logits.shape(), wrng);
  auto objective = [&] {
    RngStream unused(0);
    return weighted_sum(toy::forward(params, data.images, phase, head, unused, fixed).logits, upstream);
  };
  RngStream unused(0);
  toy::Grads g =
      toy::backward(params, toy::forward(params, data.images, phase, head, unused, fixed).cache, upstream);

  Result out;
  auto pv = toy::parameter_views(params);
  auto gv = g.views();
  for (std::size_t t = 0; t < pv.size(); ++t) {
    for (std::size_t i = 0; i < pv[t].size(); ++i) {
      const double numeric = oracle::central_difference(pv[t][i], 1e-6, objective);
      out.worst = std::max(out.worst, oracle::rel_error(gv[t][i], numeric, 1e-4));
      ++out.checked;
    }
  }
  return out;
}

}  // namespace gradcheck
