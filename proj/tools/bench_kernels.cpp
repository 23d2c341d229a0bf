// Compares the serial reference kernels against the OpenMP variants and
// reports throughput. The parallel kernels are bit-identical by construction;
// this also asserts that on every shape it times.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "gtdlab/kernels.hpp"
#include "gtdlab/rng.hpp"

using namespace gtdlab;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (auto& v : m.data) v = float(rng.uniform() * 2.0 - 1.0);
  return m;
}

// ring-of-cliques sparse matrix, ~deg nonzeros per row
struct Csr {
  std::vector<int64_t> row_ptr;
  std::vector<int> col;
  std::vector<float> val;
  int rows = 0;
  kernels::CsrView view() const { return {rows, row_ptr.data(), col.data(), val.data()}; }
};

Csr random_csr(int n, int deg, Rng& rng) {
  Csr s;
  s.rows = n;
  s.row_ptr.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) s.row_ptr[i + 1] = s.row_ptr[i] + deg;
  s.col.resize(s.row_ptr[n]);
  s.val.resize(s.row_ptr[n]);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < deg; ++k) {
      s.col[s.row_ptr[i] + k] = int(rng.uniform_int(uint64_t(n)));
      s.val[s.row_ptr[i] + k] = float(rng.uniform());
    }
  return s;
}

template <typename F>
double time_best_of(int reps, F&& f) {
  double best = 1e100;
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    f();
    auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows == b.rows && a.cols == b.cols &&
         std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(float)) == 0;
}

int g_failures = 0;

void report(const char* name, double flops, double t_serial, double t_par, bool equal) {
  std::printf("%-28s serial %8.2f ms  parallel %8.2f ms  speedup %5.2fx  %8.2f MFLOP/s  %s\n", name,
              t_serial * 1e3, t_par * 1e3, t_serial / t_par, flops / t_par / 1e6,
              equal ? "bit-identical" : "MISMATCH");
  if (!equal) ++g_failures;
}

}  // namespace

int main(int argc, char** argv) {
  int threads = argc > 1 ? std::atoi(argv[1]) : 2;
  Rng rng(7);

  struct Shape {
    int n, k, m;
  };
  const Shape shapes[] = {{2708, 1433, 16}, {2708, 16, 7}, {1000, 100, 16}};

  std::printf("kernel benchmark, %d thread(s)\n", threads);
  for (const auto& sh : shapes) {
    Matrix a = random_matrix(sh.n, sh.k, rng);
    Matrix b = random_matrix(sh.k, sh.m, rng);
    Matrix c_ser, c_par;
    char name[64];

    kernels::set_threads(1);
    double ts = time_best_of(3, [&] { kernels::serial::matmul(a, b, c_ser); });
    kernels::set_threads(threads);
    double tp = time_best_of(3, [&] { kernels::matmul(a, b, c_par); });
    std::snprintf(name, sizeof name, "matmul %dx%dx%d", sh.n, sh.k, sh.m);
    report(name, 2.0 * sh.n * sh.k * sh.m, ts, tp, bitwise_equal(c_ser, c_par));

    Matrix g = random_matrix(sh.n, sh.m, rng);
    kernels::set_threads(1);
    ts = time_best_of(3, [&] { kernels::serial::matmul_at_b(a, g, c_ser); });
    kernels::set_threads(threads);
    tp = time_best_of(3, [&] { kernels::matmul_at_b(a, g, c_par); });
    std::snprintf(name, sizeof name, "matmul_at_b %dx%dx%d", sh.k, sh.n, sh.m);
    report(name, 2.0 * sh.n * sh.k * sh.m, ts, tp, bitwise_equal(c_ser, c_par));
  }

  {
    const int n = 20000, deg = 16, m = 64;
    Csr s = random_csr(n, deg, rng);
    Matrix b = random_matrix(n, m, rng);
    Matrix c_ser, c_par;
    kernels::set_threads(1);
    double ts = time_best_of(3, [&] { kernels::serial::spmm(s.view(), b, c_ser); });
    kernels::set_threads(threads);
    double tp = time_best_of(3, [&] { kernels::spmm(s.view(), b, c_par); });
    char name[64];
    std::snprintf(name, sizeof name, "spmm n=%d deg=%d m=%d", n, deg, m);
    report(name, 2.0 * double(n) * deg * m, ts, tp, bitwise_equal(c_ser, c_par));
  }

  return g_failures == 0 ? 0 : 1;
}
