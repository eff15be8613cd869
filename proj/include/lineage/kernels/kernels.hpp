#pragma once

// Dense f64 inner loops. Every kernel has a scalar reference implementation and,
// on x86-64, an AVX2+FMA variant. The variant is chosen once at startup from
// CPUID; LINEAGE_KERNELS=scalar in the environment forces the reference path.
//
// All matrices are row-major with the leading dimension equal to the column
// count. The gemm kernels accumulate into C.

#include <cstddef>
#include <span>
#include <string_view>

namespace lineage::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m×n] += A[m×k] · B[k×n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C[m×n] += A[m×k] · B[n×k]ᵀ
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C[m×n] += A[k×m]ᵀ · B[k×n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
};

const KernelTable& scalar_table();
// Null when the binary was built without the AVX2 translation unit.
const KernelTable* avx2_table();
bool cpu_supports_avx2();

// Table used by the rest of the library.
const KernelTable& active();
// Test hook: pin the active table. Not thread-safe; call before spawning work.
void set_active(Isa isa);
std::string_view isa_name(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace lineage::kernels
