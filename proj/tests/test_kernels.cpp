#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "gtdlab/kernels.hpp"
#include "gtdlab/rng.hpp"

using namespace gtdlab;

namespace {

Matrix random_matrix(int r, int c, uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (auto& v : m.data) v = float(rng.uniform() * 2.0 - 1.0);
  return m;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows == b.rows && a.cols == b.cols &&
         std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(float)) == 0;
}

struct ThreadGuard {
  ThreadGuard(int n) { kernels::set_threads(n); }
  ~ThreadGuard() { kernels::set_threads(1); }
};

}  // namespace

TEST_CASE("matmul matches hand-computed product") {
  Matrix a(2, 2), b(2, 2), c;
  a.data = {1, 2, 3, 4};
  b.data = {5, 6, 7, 8};
  kernels::matmul(a, b, c);
  CHECK(c.at(0, 0) == doctest::Approx(19));
  CHECK(c.at(0, 1) == doctest::Approx(22));
  CHECK(c.at(1, 0) == doctest::Approx(43));
  CHECK(c.at(1, 1) == doctest::Approx(50));
}

TEST_CASE("parallel kernels are bit-identical to the serial references") {
  for (int threads : {1, 2, 3, 8}) {
    ThreadGuard guard(threads);
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
      Matrix a = random_matrix(37, 19, seed);
      Matrix b = random_matrix(19, 11, seed + 100);
      Matrix g = random_matrix(37, 11, seed + 200);

      Matrix ser, par;
      kernels::serial::matmul(a, b, ser);
      kernels::matmul(a, b, par);
      CHECK(bitwise_equal(ser, par));

      kernels::serial::matmul_at_b(a, g, ser);
      kernels::matmul_at_b(a, g, par);
      CHECK(bitwise_equal(ser, par));

      kernels::serial::matmul_abt(g, b, ser);  // (37x11) * (19x11)^T
      kernels::matmul_abt(g, b, par);
      CHECK(bitwise_equal(ser, par));
    }
  }
}

TEST_CASE("spmm matches serial and a dense expansion") {
  // 3-node path with weights
  std::vector<int64_t> row_ptr = {0, 1, 3, 4};
  std::vector<int> col = {1, 0, 2, 1};
  std::vector<float> val = {0.5f, 0.5f, 0.25f, 0.25f};
  kernels::CsrView s{3, row_ptr.data(), col.data(), val.data()};
  Matrix b = random_matrix(3, 5, 42);

  Matrix ser, par;
  kernels::serial::spmm(s, b, ser);
  {
    ThreadGuard guard(4);
    kernels::spmm(s, b, par);
  }
  CHECK(bitwise_equal(ser, par));

  // dense oracle
  Matrix dense(3, 3);
  dense.at(0, 1) = 0.5f;
  dense.at(1, 0) = 0.5f;
  dense.at(1, 2) = 0.25f;
  dense.at(2, 1) = 0.25f;
  Matrix expect;
  kernels::serial::matmul(dense, b, expect);
  for (size_t i = 0; i < expect.data.size(); ++i)
    CHECK(ser.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-6));
}

TEST_CASE("matmul_at_b equals explicit transpose multiply") {
  Matrix a = random_matrix(23, 7, 5);
  Matrix b = random_matrix(23, 9, 6);
  Matrix at(7, 23);
  for (int i = 0; i < 23; ++i)
    for (int j = 0; j < 7; ++j) at.at(j, i) = a.at(i, j);
  Matrix expect, got;
  kernels::serial::matmul(at, b, expect);
  kernels::matmul_at_b(a, b, got);
  for (size_t i = 0; i < expect.data.size(); ++i)
    CHECK(got.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-6));
}

TEST_CASE("elementwise helpers") {
  Matrix a(2, 3);
  a.data = {-1, 2, -3, 4, 0, -5};
  Matrix z = a;
  kernels::relu_inplace(z);
  CHECK(z.data == std::vector<float>{0, 2, 0, 4, 0, 0});

  Matrix dz(2, 3);
  dz.data = {1, 1, 1, 1, 1, 1};
  kernels::relu_backward_inplace(dz, a);
  CHECK(dz.data == std::vector<float>{0, 1, 0, 1, 0, 0});

  auto cs = kernels::colsum(a);
  CHECK(cs[0] == doctest::Approx(3));
  CHECK(cs[1] == doctest::Approx(2));
  CHECK(cs[2] == doctest::Approx(-8));

  Matrix bsd(2, 2);
  kernels::add_bias_rows(bsd, {1.0f, -2.0f});
  CHECK(bsd.at(0, 0) == 1.0f);
  CHECK(bsd.at(1, 1) == -2.0f);
}
