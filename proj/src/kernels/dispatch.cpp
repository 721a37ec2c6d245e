#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_internal.hpp"
#include "tokentiming/error.hpp"
#include "tokentiming/kernels.hpp"

namespace tokentiming::kernels {

namespace {

const KernelTable kScalar{Isa::scalar,  scalar::sum,  scalar::residual, scalar::overlap,
                          scalar::scale, scalar::fill, scalar::smooth};

#ifdef TOKENTIMING_HAVE_AVX2
const KernelTable kAvx2{Isa::avx2, avx2::sum,  avx2::residual, avx2::overlap,
                        avx2::scale, avx2::fill, avx2::smooth};
#endif

const KernelTable* detect() {
  if (const char* env = std::getenv("TOKENTIMING_KERNELS")) {
    std::string want(env);
    if (want == "scalar") return &kScalar;
    if (want == "avx2") {
      if (const KernelTable* t = avx2_table()) return t;
      throw ConfigError("TOKENTIMING_KERNELS=avx2 but AVX2 is unavailable on this CPU/build");
    }
    if (!want.empty() && want != "auto") throw ConfigError("unknown TOKENTIMING_KERNELS value: " + want);
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &kScalar;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{detect()};
  return table;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#ifdef TOKENTIMING_HAVE_AVX2
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void force(Isa isa) {
  if (isa == Isa::scalar) {
    current().store(&kScalar, std::memory_order_release);
    return;
  }
  const KernelTable* t = avx2_table();
  if (t == nullptr) throw ConfigError("AVX2 kernels unavailable");
  current().store(t, std::memory_order_release);
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

}  // namespace tokentiming::kernels
