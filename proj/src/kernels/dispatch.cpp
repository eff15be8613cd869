#include <atomic>
#include <cstdlib>
#include <string_view>

#include "lineage/kernels/kernels.hpp"

namespace lineage::kernels {

#ifndef LINEAGE_HAVE_AVX2_TU
const KernelTable* avx2_table() { return nullptr; }
#endif

bool cpu_supports_avx2() {
#if defined(__x86_64__) && defined(LINEAGE_HAVE_AVX2_TU)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

const KernelTable* pick_default() {
  if (const char* env = std::getenv("LINEAGE_KERNELS")) {
    if (std::string_view(env) == "scalar") return &scalar_table();
  }
  if (cpu_supports_avx2() && avx2_table() != nullptr) return avx2_table();
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{pick_default()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void set_active(Isa isa) {
  if (isa == Isa::avx2 && cpu_supports_avx2() && avx2_table() != nullptr) {
    slot().store(avx2_table());
  } else {
    slot().store(&scalar_table());
  }
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

}  // namespace lineage::kernels
