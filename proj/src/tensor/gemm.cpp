#include "weaknet/gemm.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>

namespace weaknet {
namespace {

typedef float float_vec __attribute__((vector_size(64)));
typedef double double_vec __attribute__((vector_size(64)));

template <class T>
struct VecOf;
template <>
struct VecOf<float> {
  using type = float_vec;
};
template <>
struct VecOf<double> {
  using type = double_vec;
};

constexpr std::size_t kMr = 8;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 128;
constexpr std::size_t kNc = 2048;

template <class T>
constexpr std::size_t kLanes = 64 / sizeof(T);
template <class T>
constexpr std::size_t kNr = 2 * kLanes<T>;

struct FreeDeleter {
  void operator()(void* p) const noexcept { std::free(p); }
};

// Per-thread packing buffers, reused across calls; a fresh multi-MB
// allocation per call costs page faults on every small product.
template <class T>
struct PackBuffers {
  std::unique_ptr<T[], FreeDeleter> a, b;
  PackBuffers() : a(allocate(kKc * (kMc + kMr))), b(allocate(kKc * (kNc + kNr<T>))) {}
  static T* allocate(std::size_t count) {
    const std::size_t bytes = ((count * sizeof(T) + 63) / 64) * 64;
    T* p = static_cast<T*>(std::aligned_alloc(64, bytes));
    if (!p) throw std::bad_alloc();
    return p;
  }
};

// kMr x kNr register tile; accumulation over p is strictly sequential per lane.
template <class T>
void micro_kernel(std::size_t kc, const T* a, const T* b, T* c,
                  std::ptrdiff_t ldc, std::size_t mr, std::size_t nr,
                  bool accumulate) {
  using V = typename VecOf<T>::type;
  constexpr std::size_t lanes = kLanes<T>;
  constexpr std::size_t nr_full = kNr<T>;
  V acc[kMr][2] = {};
  for (std::size_t p = 0; p < kc; ++p) {
    const V b0 = *reinterpret_cast<const V*>(b + p * nr_full);
    const V b1 = *reinterpret_cast<const V*>(b + p * nr_full + lanes);
    const T* ap = a + p * kMr;
    for (std::size_t i = 0; i < kMr; ++i) {
      const T av = ap[i];
      acc[i][0] += av * b0;
      acc[i][1] += av * b1;
    }
  }
  alignas(64) T tile[kMr][nr_full];
  std::memcpy(tile, acc, sizeof(tile));
  for (std::size_t i = 0; i < mr; ++i) {
    T* row = c + static_cast<std::ptrdiff_t>(i) * ldc;
    if (accumulate) {
      for (std::size_t j = 0; j < nr; ++j) row[j] += tile[i][j];
    } else {
      for (std::size_t j = 0; j < nr; ++j) row[j] = tile[i][j];
    }
  }
}

}  // namespace

template <class T>
void gemm(std::size_t m, std::size_t n, std::size_t k, MatrixView<T> a,
          MatrixView<T> b, T* c, std::ptrdiff_t ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  constexpr std::size_t nr_full = kNr<T>;
  if (k == 0) {
    if (!accumulate) {
      for (std::size_t i = 0; i < m; ++i)
        std::fill_n(c + static_cast<std::ptrdiff_t>(i) * ldc, n, T{});
    }
    return;
  }
  thread_local PackBuffers<T> buffers;
  auto& a_pack = buffers.a;
  auto& b_pack = buffers.b;

  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = std::min(kNc, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = std::min(kKc, k - pc);
      const bool acc_c = accumulate || pc > 0;

      for (std::size_t jr = 0; jr < nc; jr += nr_full) {
        const std::size_t nr = std::min(nr_full, nc - jr);
        T* dst = b_pack.get() + (jr / nr_full) * kc * nr_full;
        for (std::size_t p = 0; p < kc; ++p) {
          const T* src = b.data + static_cast<std::ptrdiff_t>(pc + p) * b.row_stride +
                         static_cast<std::ptrdiff_t>(jc + jr) * b.col_stride;
          T* d = dst + p * nr_full;
          std::size_t j = 0;
          if (b.col_stride == 1) {
            std::memcpy(d, src, nr * sizeof(T));
            j = nr;
          }
          for (; j < nr; ++j) d[j] = src[static_cast<std::ptrdiff_t>(j) * b.col_stride];
          for (; j < nr_full; ++j) d[j] = T{};
        }
      }

      for (std::size_t ic = 0; ic < m; ic += kMc) {
        const std::size_t mc = std::min(kMc, m - ic);
        for (std::size_t ir = 0; ir < mc; ir += kMr) {
          const std::size_t mr = std::min(kMr, mc - ir);
          T* dst = a_pack.get() + (ir / kMr) * kc * kMr;
          for (std::size_t p = 0; p < kc; ++p) {
            const T* src = a.data + static_cast<std::ptrdiff_t>(ic + ir) * a.row_stride +
                           static_cast<std::ptrdiff_t>(pc + p) * a.col_stride;
            std::size_t i = 0;
            for (; i < mr; ++i) dst[p * kMr + i] = src[static_cast<std::ptrdiff_t>(i) * a.row_stride];
            for (; i < kMr; ++i) dst[p * kMr + i] = T{};
          }
        }
        for (std::size_t jr = 0; jr < nc; jr += nr_full) {
          const std::size_t nr = std::min(nr_full, nc - jr);
          const T* bp = b_pack.get() + (jr / nr_full) * kc * nr_full;
          for (std::size_t ir = 0; ir < mc; ir += kMr) {
            const std::size_t mr = std::min(kMr, mc - ir);
            micro_kernel<T>(kc, a_pack.get() + (ir / kMr) * kc * kMr, bp,
                            c + static_cast<std::ptrdiff_t>(ic + ir) * ldc +
                                static_cast<std::ptrdiff_t>(jc + jr),
                            ldc, mr, nr, acc_c);
          }
        }
      }
    }
  }
}

template void gemm<float>(std::size_t, std::size_t, std::size_t,
                          MatrixView<float>, MatrixView<float>, float*,
                          std::ptrdiff_t, bool);
template void gemm<double>(std::size_t, std::size_t, std::size_t,
                           MatrixView<double>, MatrixView<double>, double*,
                           std::ptrdiff_t, bool);

}  // namespace weaknet
