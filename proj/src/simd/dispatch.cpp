#include <array>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "lesiontl/simd/kernels.hpp"
#include "tables.hpp"

namespace lesiontl::simd {
namespace {

bool host_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& select() {
  const char* forced = std::getenv("LESIONTL_SIMD");
  if (forced != nullptr) {
    const std::string want(forced);
    if (want == "scalar") return detail::scalar_table();
    if (want == "avx2") return table(Isa::avx2);
    throw std::runtime_error("LESIONTL_SIMD must be 'scalar' or 'avx2', got '" + want + "'");
  }
  if (supported(Isa::avx2)) return *detail::avx2_table();
  return detail::scalar_table();
}

thread_local const KernelTable* t_override = nullptr;

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

bool supported(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2: {
      static const bool ok = detail::avx2_table() != nullptr && host_has_avx2();
      return ok;
    }
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!supported(isa)) {
    throw std::runtime_error("kernel ISA '" + std::string(isa_name(isa)) +
                             "' is not supported on this host");
  }
  return isa == Isa::avx2 ? *detail::avx2_table() : detail::scalar_table();
}

const KernelTable& active() {
  if (t_override != nullptr) return *t_override;
  static const KernelTable& chosen = select();
  return chosen;
}

ScopedIsa::ScopedIsa(Isa isa) : previous_(t_override) { t_override = &table(isa); }

ScopedIsa::~ScopedIsa() { t_override = previous_; }

std::span<const Isa> available() {
  static const auto list = [] {
    std::array<Isa, 2> isas{Isa::scalar, Isa::avx2};
    return std::pair{isas, supported(Isa::avx2) ? std::size_t{2} : std::size_t{1}};
  }();
  return {list.first.data(), list.second};
}

}  // namespace lesiontl::simd
