// Minimal use of the library: pool a random batch in both phases and
// backpropagate through the train-phase result.
#include <cstdio>

#include "stochpool/stochpool.hpp"

int main() {
  using namespace stochpool;
  RngStream rng(42);
  const Tensor4 x = sample_gaussian(Shape{4, 8, 16, 16}, rng);

  SapOptions opt;
  opt.keep_prob = 0.5;
  const SapResult train = sap_forward(x, opt, Phase::kTrain, rng);
  const SapResult test = sap_forward(x, opt, Phase::kTest, rng);
  std::printf("output shape %s\n", train.output.shape().str().c_str());
  std::printf("second moment: train %.6f, test %.6f\n", second_moment(train.output), second_moment(test.output));

  const Tensor4 grad = sap_backward(Tensor4(train.output.shape(), 1.0), train.state);
  std::size_t nonzero = 0;
  for (double g : grad.data()) nonzero += g != 0.0;
  std::printf("input gradient: %zu of %zu entries nonzero\n", nonzero, grad.size());
  return 0;
}
