// SPDX-License-Identifier: Apache-2.0
#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference in
// kernels::scalar and, on x86-64, an AVX2 variant in kernels::avx2. The
// unqualified entry points dispatch at runtime on CPU support. Variants are
// required to agree bit-for-bit (see tests/test_kernels.cpp).

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "wardpose/geometry.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define WARDPOSE_HAVE_AVX2_KERNELS 1
#else
#define WARDPOSE_HAVE_AVX2_KERNELS 0
#endif

namespace wardpose::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa) noexcept;
bool cpu_supports(Isa isa) noexcept;

// Selected once from cpu_supports(); WARDPOSE_FORCE_SCALAR=1 in the
// environment pins the scalar path.
Isa active_isa() noexcept;
// Test hook. Requests for an unsupported ISA fall back to Scalar.
void set_isa(Isa isa) noexcept;

// Structure-of-arrays view over a keypoint set.
struct PointColumns {
  std::span<const double> x;
  std::span<const double> y;
  std::span<const double> confidence;
  std::span<const std::uint8_t> valid;
};

// Bounds of points with valid != 0, finite coordinates and
// confidence >= min_confidence. count == 0 leaves the bounds at +/-inf.
struct MinMax {
  double min_x;
  double min_y;
  double max_x;
  double max_y;
  std::size_t count;
};

// RGB channel totals over interleaved 8-bit pixels.
struct RgbSum {
  std::uint64_t r = 0;
  std::uint64_t g = 0;
  std::uint64_t b = 0;
  friend bool operator==(const RgbSum&, const RgbSum&) = default;
};

MinMax masked_minmax(const PointColumns& pts, double min_confidence) noexcept;
void iou_one_to_many(const CornerBox& a, std::span<const CornerBox> others, std::span<double> out) noexcept;
// `pixels` holds 3 * n bytes.
RgbSum rgb_sum(std::span<const std::uint8_t> pixels) noexcept;

namespace scalar {
MinMax masked_minmax(const PointColumns& pts, double min_confidence) noexcept;
void iou_one_to_many(const CornerBox& a, std::span<const CornerBox> others, std::span<double> out) noexcept;
RgbSum rgb_sum(std::span<const std::uint8_t> pixels) noexcept;
}  // namespace scalar

#if WARDPOSE_HAVE_AVX2_KERNELS
namespace avx2 {
MinMax masked_minmax(const PointColumns& pts, double min_confidence) noexcept;
void iou_one_to_many(const CornerBox& a, std::span<const CornerBox> others, std::span<double> out) noexcept;
RgbSum rgb_sum(std::span<const std::uint8_t> pixels) noexcept;
}  // namespace avx2
#endif

}  // namespace wardpose::kernels
