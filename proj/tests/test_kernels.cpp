// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include "wardpose/kernels.hpp"

namespace wardpose::kernels {
namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

struct Columns {
  std::vector<double> x, y, c;
  std::vector<std::uint8_t> v;
  [[nodiscard]] PointColumns view() const { return {x, y, c, v}; }
};

Columns random_columns(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> coord(-50.0, 700.0), conf(0.0, 1.0);
  std::bernoulli_distribution valid(0.8), odd(0.05);
  Columns cols;
  for (std::size_t i = 0; i < n; ++i) {
    double x = coord(rng), y = coord(rng);
    if (odd(rng)) x = std::numeric_limits<double>::quiet_NaN();
    if (odd(rng)) y = std::numeric_limits<double>::infinity();
    cols.x.push_back(x);
    cols.y.push_back(y);
    cols.c.push_back(conf(rng));
    cols.v.push_back(valid(rng) ? 1 : 0);
  }
  return cols;
}

class KernelEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!cpu_supports(Isa::Avx2)) GTEST_SKIP() << "no AVX2 on this CPU";
  }
};

TEST_F(KernelEquivalence, MaskedMinMaxMatchesScalar) {
#if WARDPOSE_HAVE_AVX2_KERNELS
  std::mt19937_64 rng(11);
  for (std::size_t n = 0; n < 70; ++n) {
    for (int rep = 0; rep < 20; ++rep) {
      const Columns cols = random_columns(rng, n);
      for (const double thr : {0.0, 0.05, 0.5, 1.1}) {
        const MinMax s = scalar::masked_minmax(cols.view(), thr);
        const MinMax v = avx2::masked_minmax(cols.view(), thr);
        ASSERT_EQ(s.count, v.count) << "n=" << n;
        EXPECT_TRUE(same_bits(s.min_x, v.min_x));
        EXPECT_TRUE(same_bits(s.min_y, v.min_y));
        EXPECT_TRUE(same_bits(s.max_x, v.max_x));
        EXPECT_TRUE(same_bits(s.max_y, v.max_y));
      }
    }
  }
#endif
}

TEST_F(KernelEquivalence, IouOneToManyBitIdentical) {
#if WARDPOSE_HAVE_AVX2_KERNELS
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 100.0), len(0.0, 60.0);
  std::bernoulli_distribution degenerate(0.1);
  auto box = [&] {
    const double x = u(rng), y = u(rng);
    const double w = degenerate(rng) ? 0.0 : len(rng), h = len(rng);
    return CornerBox{x, y, x + w, y + h};
  };
  for (std::size_t n = 0; n < 40; ++n) {
    for (int rep = 0; rep < 50; ++rep) {
      const CornerBox a = box();
      std::vector<CornerBox> others(n);
      for (auto& b : others) b = box();
      if (n > 0) others[0] = a;
      std::vector<double> s(n), v(n);
      scalar::iou_one_to_many(a, others, s);
      avx2::iou_one_to_many(a, others, v);
      for (std::size_t i = 0; i < n; ++i) ASSERT_TRUE(same_bits(s[i], v[i])) << s[i] << " vs " << v[i];
    }
  }
#endif
}

TEST_F(KernelEquivalence, RgbSumExact) {
#if WARDPOSE_HAVE_AVX2_KERNELS
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> byte(0, 255);
  for (std::size_t px = 0; px < 200; ++px) {
    std::vector<std::uint8_t> data(px * 3);
    for (auto& b : data) b = static_cast<std::uint8_t>(byte(rng));
    EXPECT_EQ(scalar::rgb_sum(data), avx2::rgb_sum(data)) << "pixels=" << px;
  }
  // Long saturated run exercises wide accumulators.
  std::vector<std::uint8_t> white(3 * 100000, 255);
  const RgbSum s = avx2::rgb_sum(white);
  EXPECT_EQ(s.r, 255u * 100000u);
  EXPECT_EQ(s, scalar::rgb_sum(white));
#endif
}

TEST(KernelDispatch, SetIsaFallsBackWhenUnsupported) {
  const Isa before = active_isa();
  set_isa(Isa::Scalar);
  EXPECT_EQ(active_isa(), Isa::Scalar);
  set_isa(Isa::Avx2);
  EXPECT_EQ(active_isa(), cpu_supports(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar);
  set_isa(before);
  EXPECT_EQ(isa_name(Isa::Scalar), "scalar");
}

TEST(KernelDispatch, DispatchedMatchesScalar) {
  std::mt19937_64 rng(14);
  const Columns cols = random_columns(rng, 37);
  const MinMax s = scalar::masked_minmax(cols.view(), 0.3);
  const MinMax d = masked_minmax(cols.view(), 0.3);
  EXPECT_EQ(s.count, d.count);
  EXPECT_TRUE(same_bits(s.min_x, d.min_x));
}

TEST(KernelScalar, EmptyMinMaxLeavesInfinities) {
  const MinMax m = scalar::masked_minmax({}, 0.0);
  EXPECT_EQ(m.count, 0u);
  EXPECT_TRUE(std::isinf(m.min_x) && m.min_x > 0);
  EXPECT_TRUE(std::isinf(m.max_y) && m.max_y < 0);
}

}  // namespace
}  // namespace wardpose::kernels
