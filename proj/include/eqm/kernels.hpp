#pragma once

// Dense numeric kernels behind the tensor engine and the evaluation metrics.
//
// Every kernel has two implementations: the OpenMP one in eqm::kernels, used
// everywhere, and a plain loop in eqm::kernels::reference kept for tests and
// benchmarks. The parallel kernels partition work so that each output element
// is accumulated in the same order regardless of thread count; results are
// bit-identical across thread counts (but not necessarily to the reference).

#include <cstddef>
#include <span>

namespace eqm::kernels {

/// C[m,n] = op(A) * op(B) where op transposes when the flag is set.
/// A is stored as [m,k] (or [k,m] when trans_a), B as [k,n] (or [n,k]).
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n, bool trans_a, bool trans_b);

void add(std::span<const double> a, std::span<const double> b, std::span<double> out);
void sub(std::span<const double> a, std::span<const double> b, std::span<double> out);
void mul(std::span<const double> a, std::span<const double> b, std::span<double> out);
void scale(std::span<const double> a, double s, std::span<double> out);

/// Sum of all elements with a fixed chunked order.
double sum(std::span<const double> a);

/// out[j] = sum_i a[i*cols + j] for a stored as [rows, cols].
void sum_rows(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<double> out);

/// out[i] = sum_j a[i*cols + j].
void sum_cols(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<double> out);

/// Sum over all (i, j) pairs of sum_h exp(-|a_i - b_j|^2 / (2 h^2)).
/// When exclude_diagonal is set, pairs with i == j are skipped (requires same set sizes).
double rbf_kernel_sum(std::span<const double> a, std::size_t na, std::span<const double> b,
                      std::size_t nb, std::size_t dim, std::span<const double> bandwidths,
                      bool exclude_diagonal);

/// out[i*nb + j] = |a_i - b_j|^2.
void squared_distances(std::span<const double> a, std::size_t na, std::span<const double> b,
                       std::size_t nb, std::size_t dim, std::span<double> out);

namespace reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n, bool trans_a, bool trans_b);
double sum(std::span<const double> a);
void sum_rows(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<double> out);
double rbf_kernel_sum(std::span<const double> a, std::size_t na, std::span<const double> b,
                      std::size_t nb, std::size_t dim, std::span<const double> bandwidths,
                      bool exclude_diagonal);
void squared_distances(std::span<const double> a, std::size_t na, std::span<const double> b,
                       std::size_t nb, std::size_t dim, std::span<double> out);

}  // namespace reference

/// Number of OpenMP threads the kernels will use (1 without OpenMP).
int max_threads();
/// Overrides the kernel thread count; mostly for tests.
void set_threads(int n);

}  // namespace eqm::kernels
