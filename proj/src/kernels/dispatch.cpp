#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "demea/kernels.hpp"

namespace demea::kernels {
namespace {

Isa detect_best() {
  if (const char* env = std::getenv("DEMEA_KERNELS"); env != nullptr && std::string(env) == "scalar") {
    return Isa::Scalar;
  }
  return isa_available(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& active_slot() {
  static std::atomic<Isa> slot{detect_best()};
  return slot;
}

}  // namespace

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(DEMEA_HAVE_AVX2_KERNELS)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

std::string_view isa_name(Isa isa) {
  return isa == Isa::Avx2 ? "avx2" : "scalar";
}

Isa active_isa() { return active_slot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_available(isa)) throw std::runtime_error("kernel ISA not available: " + std::string(isa_name(isa)));
  active_slot().store(isa, std::memory_order_relaxed);
}

template <>
const KernelTable<float>& table<float>(Isa isa) {
#if defined(DEMEA_HAVE_AVX2_KERNELS)
  if (isa == Isa::Avx2 && isa_available(isa)) return detail::avx2_f32();
#endif
  if (isa == Isa::Scalar) return detail::scalar_f32();
  throw std::runtime_error("kernel ISA not available: " + std::string(isa_name(isa)));
}

template <>
const KernelTable<double>& table<double>(Isa isa) {
#if defined(DEMEA_HAVE_AVX2_KERNELS)
  if (isa == Isa::Avx2 && isa_available(isa)) return detail::avx2_f64();
#endif
  if (isa == Isa::Scalar) return detail::scalar_f64();
  throw std::runtime_error("kernel ISA not available: " + std::string(isa_name(isa)));
}

}  // namespace demea::kernels
