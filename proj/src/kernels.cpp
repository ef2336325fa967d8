#include "eqm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace eqm::kernels {
namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 15;
constexpr std::size_t kSumChunk = 1024;

using Index = std::ptrdiff_t;

void transpose(std::span<const double> src, std::size_t rows, std::size_t cols,
               std::vector<double>& dst) {
  dst.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// C[m,n] = A[m,k] B[k,n], or A^T B when a is stored [k,m].
void matmul_rows(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n, bool trans_a) {
  // Four rows of C per task so each loaded row of B is used four times. Every
  // element still accumulates over p in ascending order, matching the reference.
  constexpr std::size_t kRows = 4;
  const std::size_t groups = (m + kRows - 1) / kRows;
  const bool par = m * k * n >= kParallelWork;
  auto a_at = [&](std::size_t i, std::size_t p) { return trans_a ? a[p * m + i] : a[i * k + p]; };
#pragma omp parallel for schedule(static) if (par)
  for (Index g = 0; g < static_cast<Index>(groups); ++g) {
    const std::size_t i0 = static_cast<std::size_t>(g) * kRows;
    const std::size_t rows = std::min(kRows, m - i0);
    double* c0 = c + i0 * n;
    std::fill(c0, c0 + rows * n, 0.0);
    if (rows == kRows) {
      double* c1 = c0 + n;
      double* c2 = c1 + n;
      double* c3 = c2 + n;
      for (std::size_t p = 0; p < k; ++p) {
        const double a0 = a_at(i0, p), a1 = a_at(i0 + 1, p), a2 = a_at(i0 + 2, p),
                     a3 = a_at(i0 + 3, p);
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) {
          const double bv = brow[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        double* crow = c0 + r * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a_at(i0 + r, p);
          const double* brow = b + p * n;
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
    }
  }
}

template <typename Op>
void elementwise(std::span<const double> a, std::span<const double> b, std::span<double> out,
                 Op op) {
  const auto n = static_cast<Index>(out.size());
#pragma omp parallel for schedule(static) if (out.size() >= kParallelWork)
  for (Index i = 0; i < n; ++i) out[i] = op(a[i], b[i]);
}

}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n, bool trans_a, bool trans_b) {
  if (trans_b) {
    std::vector<double> bt;
    transpose(b, n, k, bt);
    matmul_rows(a.data(), bt.data(), c.data(), m, k, n, trans_a);
    return;
  }
  matmul_rows(a.data(), b.data(), c.data(), m, k, n, trans_a);
}

void add(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  elementwise(a, b, out, [](double x, double y) { return x + y; });
}

void sub(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  elementwise(a, b, out, [](double x, double y) { return x - y; });
}

void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  elementwise(a, b, out, [](double x, double y) { return x * y; });
}

void scale(std::span<const double> a, double s, std::span<double> out) {
  const auto n = static_cast<Index>(out.size());
#pragma omp parallel for schedule(static) if (out.size() >= kParallelWork)
  for (Index i = 0; i < n; ++i) out[i] = a[i] * s;
}

double sum(std::span<const double> a) {
  const std::size_t chunks = (a.size() + kSumChunk - 1) / kSumChunk;
  std::vector<double> partial(chunks, 0.0);
#pragma omp parallel for schedule(static) if (a.size() >= kParallelWork)
  for (Index c = 0; c < static_cast<Index>(chunks); ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * kSumChunk;
    const std::size_t end = std::min(a.size(), begin + kSumChunk);
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += a[i];
    partial[static_cast<std::size_t>(c)] = s;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

void sum_rows(std::span<const double> a, std::size_t rows, std::size_t cols,
              std::span<double> out) {
  constexpr std::size_t kBlock = 64;
  const std::size_t blocks = (cols + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (Index blk = 0; blk < static_cast<Index>(blocks); ++blk) {
    const std::size_t j0 = static_cast<std::size_t>(blk) * kBlock;
    const std::size_t j1 = std::min(cols, j0 + kBlock);
    for (std::size_t j = j0; j < j1; ++j) out[j] = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double* row = a.data() + i * cols;
      for (std::size_t j = j0; j < j1; ++j) out[j] += row[j];
    }
  }
}

void sum_cols(std::span<const double> a, std::size_t rows, std::size_t cols,
              std::span<double> out) {
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (Index i = 0; i < static_cast<Index>(rows); ++i) {
    const double* row = a.data() + static_cast<std::size_t>(i) * cols;
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += row[j];
    out[static_cast<std::size_t>(i)] = s;
  }
}

double rbf_kernel_sum(std::span<const double> a, std::size_t na, std::span<const double> b,
                      std::size_t nb, std::size_t dim, std::span<const double> bandwidths,
                      bool exclude_diagonal) {
  std::vector<double> inv;
  for (double h : bandwidths) inv.push_back(-0.5 / (h * h));
  std::vector<double> row_sums(na, 0.0);
#pragma omp parallel for schedule(static) if (na * nb * dim >= kParallelWork)
  for (Index ii = 0; ii < static_cast<Index>(na); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* ai = a.data() + i * dim;
    double s = 0.0;
    for (std::size_t j = 0; j < nb; ++j) {
      if (exclude_diagonal && i == j) continue;
      const double* bj = b.data() + j * dim;
      double d2 = 0.0;
      for (std::size_t q = 0; q < dim; ++q) {
        const double diff = ai[q] - bj[q];
        d2 += diff * diff;
      }
      for (double w : inv) s += std::exp(w * d2);
    }
    row_sums[i] = s;
  }
  double total = 0.0;
  for (double s : row_sums) total += s;
  return total;
}

void squared_distances(std::span<const double> a, std::size_t na, std::span<const double> b,
                       std::size_t nb, std::size_t dim, std::span<double> out) {
#pragma omp parallel for schedule(static) if (na * nb * dim >= kParallelWork)
  for (Index ii = 0; ii < static_cast<Index>(na); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* ai = a.data() + i * dim;
    for (std::size_t j = 0; j < nb; ++j) {
      const double* bj = b.data() + j * dim;
      double d2 = 0.0;
      for (std::size_t q = 0; q < dim; ++q) {
        const double diff = ai[q] - bj[q];
        d2 += diff * diff;
      }
      out[i * nb + j] = d2;
    }
  }
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

namespace reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n, bool trans_a, bool trans_b) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] = s;
    }
  }
}

double sum(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v;
  return s;
}

void sum_rows(std::span<const double> a, std::size_t rows, std::size_t cols,
              std::span<double> out) {
  for (std::size_t j = 0; j < cols; ++j) out[j] = 0.0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j] += a[i * cols + j];
}

double rbf_kernel_sum(std::span<const double> a, std::size_t na, std::span<const double> b,
                      std::size_t nb, std::size_t dim, std::span<const double> bandwidths,
                      bool exclude_diagonal) {
  double total = 0.0;
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      if (exclude_diagonal && i == j) continue;
      double d2 = 0.0;
      for (std::size_t q = 0; q < dim; ++q) {
        const double diff = a[i * dim + q] - b[j * dim + q];
        d2 += diff * diff;
      }
      for (double h : bandwidths) total += std::exp(-d2 / (2.0 * h * h));
    }
  }
  return total;
}

void squared_distances(std::span<const double> a, std::size_t na, std::span<const double> b,
                       std::size_t nb, std::size_t dim, std::span<double> out) {
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) {
      double d2 = 0.0;
      for (std::size_t q = 0; q < dim; ++q) {
        const double diff = a[i * dim + q] - b[j * dim + q];
        d2 += diff * diff;
      }
      out[i * nb + j] = d2;
    }
}

}  // namespace reference
}  // namespace eqm::kernels
