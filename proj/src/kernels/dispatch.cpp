// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <cstring>

#include "wardpose/kernels.hpp"

namespace wardpose::kernels {

namespace {

Isa detect_isa() noexcept {
  if (const char* env = std::getenv("WARDPOSE_FORCE_SCALAR"); env != nullptr && std::strcmp(env, "0") != 0) {
    return Isa::Scalar;
  }
  return cpu_supports(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& current() noexcept {
  static std::atomic<Isa> isa{detect_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "unknown";
}

bool cpu_supports(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if WARDPOSE_HAVE_AVX2_KERNELS
      return __builtin_cpu_supports("avx2") != 0;
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) noexcept {
  current().store(cpu_supports(isa) ? isa : Isa::Scalar, std::memory_order_relaxed);
}

MinMax masked_minmax(const PointColumns& pts, double min_confidence) noexcept {
#if WARDPOSE_HAVE_AVX2_KERNELS
  if (active_isa() == Isa::Avx2) return avx2::masked_minmax(pts, min_confidence);
#endif
  return scalar::masked_minmax(pts, min_confidence);
}

void iou_one_to_many(const CornerBox& a, std::span<const CornerBox> others, std::span<double> out) noexcept {
#if WARDPOSE_HAVE_AVX2_KERNELS
  if (active_isa() == Isa::Avx2) return avx2::iou_one_to_many(a, others, out);
#endif
  scalar::iou_one_to_many(a, others, out);
}

RgbSum rgb_sum(std::span<const std::uint8_t> pixels) noexcept {
#if WARDPOSE_HAVE_AVX2_KERNELS
  if (active_isa() == Isa::Avx2) return avx2::rgb_sum(pixels);
#endif
  return scalar::rgb_sum(pixels);
}

}  // namespace wardpose::kernels
