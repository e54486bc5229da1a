#include <atomic>

#include "wsnn/errors.hpp"
#include "wsnn/kernels/kernels.hpp"

namespace wsnn::kernels {

const FloatKernels& scalar_table();   // scalar.cpp
const FloatKernels& avx2_table();     // avx2.cpp, built with -mavx2 -mfma
const FloatKernels& avx512_table();   // avx512.cpp, built with -mavx512*

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::avx512: return "avx512";
  }
  return "?";
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Isa::avx512:
      return __builtin_cpu_supports("avx512f") &&
             __builtin_cpu_supports("avx512vl") &&
             __builtin_cpu_supports("avx512bw") &&
             __builtin_cpu_supports("avx512dq");
  }
  return false;
}

Isa detect_best() {
  if (cpu_supports(Isa::avx512)) return Isa::avx512;
  if (cpu_supports(Isa::avx2)) return Isa::avx2;
  return Isa::scalar;
}

namespace {
const FloatKernels& table_unchecked(Isa isa) {
  switch (isa) {
    case Isa::avx512: return avx512_table();
    case Isa::avx2: return avx2_table();
    case Isa::scalar: break;
  }
  return scalar_table();
}

std::atomic<Isa> g_active{detect_best()};
std::atomic<const FloatKernels*> g_table{&table_unchecked(detect_best())};
}  // namespace

Isa active() { return g_active.load(std::memory_order_relaxed); }

void select(Isa isa) {
  if (!cpu_supports(isa)) {
    throw ConfigError(std::string("kernel lane '") + isa_name(isa) +
                      "' is not supported by this CPU");
  }
  g_active.store(isa, std::memory_order_relaxed);
  g_table.store(&table_unchecked(isa), std::memory_order_relaxed);
}

Isa parse_isa(const std::string& text) {
  if (text == "auto") return detect_best();
  if (text == "scalar") return Isa::scalar;
  if (text == "avx2") return Isa::avx2;
  if (text == "avx512") return Isa::avx512;
  throw ConfigError("unknown kernel lane '" + text +
                    "' (expected auto|scalar|avx2|avx512)");
}

const FloatKernels& table_for(Isa isa) {
  if (!cpu_supports(isa)) {
    throw ConfigError(std::string("kernel lane '") + isa_name(isa) +
                      "' is not supported by this CPU");
  }
  return table_unchecked(isa);
}

const FloatKernels& table() {
  return *g_table.load(std::memory_order_relaxed);
}

}  // namespace wsnn::kernels
