// Timing harness for the row-parallel kernels against their single-threaded
// references, with a bitwise equality check on every output. Sizes roughly
// track the shapes the model produces at medium scale.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "smore/kernels.hpp"
#include "smore/rng.hpp"
#include "smore/tensor.hpp"

using namespace smore;

namespace {

double seconds_of(const std::function<void()>& fn, int reps) {
  // One warm-up, then best-of-reps.
  fn();
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (s < best) best = s;
  }
  return best;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct Row {
  std::string name;
  double serial_s = 0, parallel_s = 0;
  bool equal = false;
};

void print(const Row& r) {
  std::printf("%-16s %10.3f ms %10.3f ms %7.2fx   %s\n", r.name.c_str(),
              r.serial_s * 1e3, r.parallel_s * 1e3, r.serial_s / r.parallel_s,
              r.equal ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 5;
  std::printf("threads: %d (set OMP_NUM_THREADS to vary)\n", kernels::max_threads());
  std::printf("%-16s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

  Rng rng(1234);
  const std::size_t m = 768, k = 512, n = 640;
  std::vector<double> A(m * k), B(k * n), Bt(n * k);
  std::vector<float> F(m * k);
  for (auto& x : A) x = rng.normal();
  for (auto& x : B) x = rng.normal();
  for (auto& x : Bt) x = rng.normal();
  for (auto& x : F) x = static_cast<float>(rng.normal());

  std::vector<double> c1(m * n), c2(m * n);
  bool all_ok = true;

  {
    Row r{"matmul"};
    r.serial_s = seconds_of([&] { kernels::serial::matmul(A.data(), B.data(), c1.data(), m, k, n); }, reps);
    r.parallel_s = seconds_of([&] { kernels::matmul(A.data(), B.data(), c2.data(), m, k, n); }, reps);
    r.equal = bitwise_equal(c1, c2);
    all_ok &= r.equal;
    print(r);
  }
  {
    Row r{"matmul_nt"};
    r.serial_s = seconds_of([&] { kernels::serial::matmul_nt(A.data(), Bt.data(), c1.data(), m, k, n); }, reps);
    r.parallel_s = seconds_of([&] { kernels::matmul_nt(A.data(), Bt.data(), c2.data(), m, k, n); }, reps);
    r.equal = bitwise_equal(c1, c2);
    all_ok &= r.equal;
    print(r);
  }
  {
    std::vector<double> d1(k * n), d2(k * n);
    Row r{"matmul_tn"};
    r.serial_s = seconds_of([&] { kernels::serial::matmul_tn(A.data(), c1.data(), d1.data(), m, k, n); }, reps);
    r.parallel_s = seconds_of([&] { kernels::matmul_tn(A.data(), c1.data(), d2.data(), m, k, n); }, reps);
    r.equal = bitwise_equal(d1, d2);
    all_ok &= r.equal;
    print(r);
  }
  {
    Row r{"matmul_nt_f32"};
    r.serial_s = seconds_of([&] { kernels::serial::matmul_nt_f32(F.data(), Bt.data(), c1.data(), m, k, n); }, reps);
    r.parallel_s = seconds_of([&] { kernels::matmul_nt_f32(F.data(), Bt.data(), c2.data(), m, k, n); }, reps);
    r.equal = bitwise_equal(c1, c2);
    all_ok &= r.equal;
    print(r);
  }
  {
    std::vector<double> w1(n * k), w2(n * k);
    std::vector<double> G(m * n);
    for (auto& x : G) x = rng.normal();
    Row r{"matmul_tn_f32"};
    r.serial_s = seconds_of([&] { kernels::serial::matmul_tn_f32(G.data(), F.data(), w1.data(), m, n, k); }, reps);
    r.parallel_s = seconds_of([&] { kernels::matmul_tn_f32(G.data(), F.data(), w2.data(), m, n, k); }, reps);
    r.equal = bitwise_equal(w1, w2);
    all_ok &= r.equal;
    print(r);
  }
  {
    // ~1% dense random sparse matrix, 4096 x 4096, d = 64.
    const std::size_t sn = 4096, d = 64;
    std::vector<std::tuple<uint32_t, uint32_t, double>> trip;
    for (uint32_t i = 0; i < sn; ++i)
      for (int e = 0; e < 40; ++e)
        trip.emplace_back(i, static_cast<uint32_t>(rng.uniform_index(sn)), rng.uniform());
    std::sort(trip.begin(), trip.end());
    trip.erase(std::unique(trip.begin(), trip.end(),
                           [](const auto& a, const auto& b) {
                             return std::get<0>(a) == std::get<0>(b) &&
                                    std::get<1>(a) == std::get<1>(b);
                           }),
               trip.end());
    const SparseMatrix S = SparseMatrix::from_triplets(sn, sn, std::move(trip));
    std::vector<double> X(sn * d), y1(sn * d), y2(sn * d);
    for (auto& x : X) x = rng.normal();
    Row r{"spmm"};
    r.serial_s = seconds_of([&] { kernels::serial::spmm(S, X.data(), y1.data(), d); }, reps);
    r.parallel_s = seconds_of([&] { kernels::spmm(S, X.data(), y2.data(), d); }, reps);
    r.equal = bitwise_equal(y1, y2);
    all_ok &= r.equal;
    print(r);
  }
  {
    const std::size_t rows = 3000, dim = 96;
    std::vector<float> X(rows * dim);
    for (auto& x : X) x = static_cast<float>(rng.normal());
    std::vector<std::vector<std::pair<uint32_t, double>>> g1, g2;
    Row r{"cosine_topk"};
    r.serial_s = seconds_of([&] { g1 = kernels::serial::cosine_topk(X.data(), rows, dim, 10); }, reps);
    r.parallel_s = seconds_of([&] { g2 = kernels::cosine_topk(X.data(), rows, dim, 10); }, reps);
    r.equal = g1 == g2;
    all_ok &= r.equal;
    print(r);
  }
  {
    const std::size_t rows = 2048, items = 8192;
    std::vector<double> scores(rows * items);
    for (auto& x : scores) x = rng.normal();
    std::vector<std::vector<uint32_t>> mask(rows);
    for (auto& mrow : mask)
      for (int e = 0; e < 30; ++e)
        mrow.push_back(static_cast<uint32_t>(rng.uniform_index(items)));
    std::vector<std::vector<uint32_t>> t1, t2;
    Row r{"topk_ranked"};
    r.serial_s = seconds_of([&] { t1 = kernels::serial::topk_ranked(scores.data(), rows, items, mask, 20); }, reps);
    r.parallel_s = seconds_of([&] { t2 = kernels::topk_ranked(scores.data(), rows, items, mask, 20); }, reps);
    r.equal = t1 == t2;
    all_ok &= r.equal;
    print(r);
  }

  std::printf("%s\n", all_ok ? "all kernels bitwise-equal" : "kernel outputs diverged");
  return all_ok ? 0 : 1;
}
