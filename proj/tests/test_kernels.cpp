#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <vector>

#include "eqm/kernels.hpp"

namespace k = eqm::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

}  // namespace

TEST_CASE("matmul agrees bit-for-bit with the reference loop") {
  // Both accumulate each output over the inner index in ascending order.
  const std::size_t m = 67, kk = 45, n = 129;
  for (int ta = 0; ta < 2; ++ta) {
    for (int tb = 0; tb < 2; ++tb) {
      const auto a = random_values(m * kk, 1);
      const auto b = random_values(kk * n, 2);
      std::vector<double> fast(m * n), slow(m * n);
      k::matmul(a, b, fast, m, kk, n, ta, tb);
      k::reference::matmul(a, b, slow, m, kk, n, ta, tb);
      CHECK(fast == slow);
    }
  }
}

TEST_CASE("reductions match the reference") {
  const auto a = random_values(100003, 3);
  CHECK(k::sum(a) == doctest::Approx(k::reference::sum(a)).epsilon(1e-12));

  const std::size_t rows = 300, cols = 130;
  const auto b = random_values(rows * cols, 4);
  std::vector<double> fast(cols), slow(cols);
  k::sum_rows(b, rows, cols, fast);
  k::reference::sum_rows(b, rows, cols, slow);
  CHECK(fast == slow);
}

TEST_CASE("pairwise kernels match the reference") {
  const std::size_t na = 120, nb = 90, dim = 2;
  const auto a = random_values(na * dim, 5);
  const auto b = random_values(nb * dim, 6);
  const std::vector<double> bw = {0.1, 0.5, 1.0, 2.0, 5.0};
  CHECK(k::rbf_kernel_sum(a, na, b, nb, dim, bw, false) ==
        doctest::Approx(k::reference::rbf_kernel_sum(a, na, b, nb, dim, bw, false)).epsilon(1e-12));
  CHECK(k::rbf_kernel_sum(a, na, a, na, dim, bw, true) ==
        doctest::Approx(k::reference::rbf_kernel_sum(a, na, a, na, dim, bw, true)).epsilon(1e-12));

  std::vector<double> fast(na * nb), slow(na * nb);
  k::squared_distances(a, na, b, nb, dim, fast);
  k::reference::squared_distances(a, na, b, nb, dim, slow);
  CHECK(fast == slow);
}

TEST_CASE("results do not depend on the thread count") {
  const int saved = k::max_threads();
  const auto a = random_values(200 * 150, 7);
  const auto b = random_values(150 * 170, 8);
  std::vector<double> one(200 * 170), many(200 * 170);
  k::set_threads(1);
  k::matmul(a, b, one, 200, 150, 170, false, false);
  const double s1 = k::sum(a);
  const double r1 = k::rbf_kernel_sum(a, 1000, b, 1000, 2, std::vector<double>{0.5, 1.0}, false);
  k::set_threads(4);
  k::matmul(a, b, many, 200, 150, 170, false, false);
  const double s4 = k::sum(a);
  const double r4 = k::rbf_kernel_sum(a, 1000, b, 1000, 2, std::vector<double>{0.5, 1.0}, false);
  k::set_threads(saved);
  CHECK(one == many);
  CHECK(s1 == s4);
  CHECK(r1 == r4);
}
