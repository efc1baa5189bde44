#include <gtest/gtest.h>

#include "stochpool/tensor.hpp"

using namespace stochpool;

namespace {

Tensor4 from_values(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Tensor4(Shape{1, 1, 1, n}, std::move(v));
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kIo;
}

}  // namespace

TEST(Tensor, RejectsNonPositiveDimensions) {
  EXPECT_EQ(kind_of([] { Tensor4(Shape{0, 1, 1, 1}); }), ErrorKind::kInvalidShape);
  EXPECT_EQ(kind_of([] { Tensor4(Shape{1, -2, 1, 1}); }), ErrorKind::kInvalidShape);
  RngStream rng(1);
  EXPECT_EQ(kind_of([&] { sample_gaussian(Shape{1, 1, 0, 3}, rng); }), ErrorKind::kInvalidShape);
  EXPECT_EQ(kind_of([] { Tensor4(Shape{1, 1, 1, 3}, std::vector<double>{1.0, 2.0}); }),
            ErrorKind::kInvalidShape);
}

TEST(Tensor, LayoutIsRowMajorWidthFastest) {
  Tensor4 t(Shape{2, 3, 4, 5});
  EXPECT_EQ(t.size(), 120u);
  EXPECT_EQ(t.offset(0, 0, 0, 1), 1u);
  EXPECT_EQ(t.offset(0, 0, 1, 0), 5u);
  EXPECT_EQ(t.offset(0, 1, 0, 0), 20u);
  EXPECT_EQ(t.offset(1, 0, 0, 0), 60u);
  t.at(1, 2, 3, 4) = 7.0;
  EXPECT_EQ(t.plane(1, 2)[19], 7.0);
}

TEST(Tensor, SingleElementSampleIsFinite) {
  RngStream rng(123);
  const Tensor4 t = sample_gaussian(Shape{1, 1, 1, 1}, rng);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_TRUE(std::isfinite(t.data()[0]));
}

TEST(Tensor, SameSeedGivesIdenticalSamples) {
  RngStream a(99, 5);
  RngStream b(99, 5);
  EXPECT_EQ(sample_gaussian(Shape{2, 3, 4, 5}, a), sample_gaussian(Shape{2, 3, 4, 5}, b));
  RngStream c(99, 6);
  RngStream d(99, 5);
  EXPECT_NE(sample_gaussian(Shape{2, 3, 4, 5}, c), sample_gaussian(Shape{2, 3, 4, 5}, d));
}

TEST(Tensor, LargeSampleMeanWithinClt) {
  RngStream rng(2024);
  const Tensor4 t = sample_gaussian(Shape{64, 256, 16, 16}, rng);
  EXPECT_LT(std::fabs(mean(t)), 4.0 / std::sqrt(64.0 * 256 * 256));
}

TEST(Moments, TrivialValues) {
  const Tensor4 ones(Shape{2, 2, 2, 2}, 1.0);
  EXPECT_EQ(mean(ones), 1.0);
  EXPECT_EQ(second_moment(ones), 1.0);
  EXPECT_EQ(variance(ones), 0.0);
  const Tensor4 pair = from_values({1.0, 3.0});
  EXPECT_EQ(mean(pair), 2.0);
  EXPECT_EQ(second_moment(pair), 5.0);
  EXPECT_EQ(variance(pair), 1.0);
}

TEST(Moments, ConstantTensorsAreExact) {
  for (double c : {0.1, -3.7, 1e-3, 12345.678}) {
    const Tensor4 t(Shape{3, 5, 7, 11}, c);
    EXPECT_DOUBLE_EQ(mean(t), c);
    EXPECT_DOUBLE_EQ(second_moment(t), c * c);
  }
}

TEST(Moments, VarianceOfSingleEntryIsDegenerate) {
  EXPECT_EQ(kind_of([] { variance(from_values({4.0})); }), ErrorKind::kDegenerateInput);
}

TEST(Moments, VarianceIdentityHolds) {
  RngStream rng(7);
  Tensor4 t = sample_gaussian(Shape{4, 4, 8, 8}, rng);
  for (double& v : t.data()) v = 3.0 + 2.0 * v;
  const double m = mean(t);
  EXPECT_NEAR(variance(t), second_moment(t) - m * m, 1e-12);
}

TEST(Moments, StandardNormalMillionEntries) {
  RngStream rng(31337);
  const Tensor4 t = sample_gaussian(Shape{1, 1, 1000, 1000}, rng);
  EXPECT_LT(std::fabs(mean(t)), 0.01);
  EXPECT_NEAR(second_moment(t), 1.0, 0.01);
  EXPECT_NEAR(variance(t), 1.0, 0.01);
  EXPECT_TRUE(all_finite(t.data()));
}

TEST(Moments, CompensatedSumBeatsNaiveAccumulation) {
  // 1 followed by many tiny values: naive summation loses them entirely.
  std::vector<double> v(1'000'001, 1e-17);
  v[0] = 1.0;
  const double exact = (1.0 + 1e-11) / static_cast<double>(v.size());
  EXPECT_NEAR(mean(std::span<const double>(v)), exact, 1e-22);
}
