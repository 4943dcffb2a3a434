#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "smore/error.hpp"
#include "smore/graphs.hpp"
#include "smore/rng.hpp"

using namespace smore;

namespace {

namespace fs = std::filesystem;

FeatureMatrix make_features(char mod, std::size_t rows, std::size_t dim,
                            std::vector<float> data) {
  FeatureMatrix fm;
  fm.modality = mod;
  fm.rows = rows;
  fm.dim = dim;
  fm.data = std::move(data);
  return fm;
}

FeatureMatrix random_features(Rng& rng, char mod, std::size_t rows, std::size_t dim) {
  std::vector<float> d(rows * dim);
  for (float& x : d) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return make_features(mod, rows, dim, std::move(d));
}

// Full cosine matrix with the kernel's conventions: double accumulation over
// float entries, zero-norm sources have no candidates, zero-norm targets
// score 0.
std::vector<double> dense_cosine(const FeatureMatrix& fm) {
  const std::size_t n = fm.rows, d = fm.dim;
  std::vector<double> norms(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j)
      s += static_cast<double>(fm.row(a)[j]) * static_cast<double>(fm.row(a)[j]);
    norms[a] = std::sqrt(s);
  }
  std::vector<double> sim(n * n, 0.0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b || norms[a] == 0.0 || norms[b] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j)
        dot += static_cast<double>(fm.row(a)[j]) * static_cast<double>(fm.row(b)[j]);
      sim[a * n + b] = dot / (norms[a] * norms[b]);
    }
  return sim;
}

// Exhaustive per-row sort-and-slice reference for the kNN graph.
std::vector<double> knn_dense_oracle(const FeatureMatrix& fm, int k) {
  const std::size_t n = fm.rows;
  const auto sim = dense_cosine(fm);
  std::vector<double> norms(n, 0.0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t j = 0; j < fm.dim; ++j)
      norms[a] += static_cast<double>(fm.row(a)[j]) * static_cast<double>(fm.row(a)[j]);
  std::vector<double> out(n * n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    if (norms[a] == 0.0) continue;
    std::vector<uint32_t> idx;
    for (std::size_t b = 0; b < n; ++b)
      if (b != a) idx.push_back(static_cast<uint32_t>(b));
    std::sort(idx.begin(), idx.end(), [&](uint32_t x, uint32_t y) {
      const double sx = sim[a * n + x], sy = sim[a * n + y];
      if (sx != sy) return sx > sy;
      return x < y;
    });
    const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), idx.size());
    for (std::size_t r = 0; r < keep; ++r) out[a * n + idx[r]] = sim[a * n + idx[r]];
  }
  return out;
}

std::vector<double> dense_sym_normalize(const std::vector<double>& g, std::size_t n) {
  std::vector<double> factor(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double deg = 0.0;
    for (std::size_t c = 0; c < n; ++c) deg += g[r * n + c];
    factor[r] = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  std::vector<double> out(n * n, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = g[r * n + c] * factor[r] * factor[c];
  return out;
}

SparseMatrix from_dense(std::size_t rows, std::size_t cols, const std::vector<double>& d) {
  std::vector<std::tuple<uint32_t, uint32_t, double>> trip;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (d[r * cols + c] != 0.0)
        trip.emplace_back(static_cast<uint32_t>(r), static_cast<uint32_t>(c), d[r * cols + c]);
  return SparseMatrix::from_triplets(rows, cols, std::move(trip));
}

SparseMatrix random_sparse(Rng& rng, std::size_t n, double density) {
  std::vector<std::tuple<uint32_t, uint32_t, double>> trip;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c)
      if (r != c && rng.uniform() < density)
        trip.emplace_back(static_cast<uint32_t>(r), static_cast<uint32_t>(c),
                          rng.uniform(0.05, 1.0));
  return SparseMatrix::from_triplets(n, n, std::move(trip));
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  CHECK(worst <= tol);
}

Dataset tiny_dataset(const std::vector<UserItem>& train, std::size_t m, std::size_t n) {
  Dataset ds;
  for (std::size_t u = 0; u < m; ++u) {
    ds.user_ids.push_back("u" + std::to_string(u));
    ds.user_index[ds.user_ids.back()] = static_cast<uint32_t>(u);
  }
  for (std::size_t i = 0; i < n; ++i) {
    ds.item_ids.push_back("i" + std::to_string(i));
    ds.item_index[ds.item_ids.back()] = static_cast<uint32_t>(i);
  }
  ds.train = train;
  std::sort(ds.train.begin(), ds.train.end());
  ds.rebuild_derived();
  return ds;
}

}  // namespace

TEST_CASE("knn graph: strongest neighbor wins at K=1") {
  // Row 0 aligns almost perfectly with row 1 and poorly with row 2.
  const auto fm = make_features('v', 3, 2,
                                {1.0f, 0.0f,
                                 0.9f, 0.1f,
                                 0.1f, 0.9f});
  const auto g = build_knn_graph(fm, 1);
  REQUIRE(g.nnz() == 3);
  CHECK(g.indices[g.indptr[0]] == 1);  // 0 -> 1
  CHECK(g.indices[g.indptr[1]] == 0);  // 1 -> 0
  CHECK(g.indices[g.indptr[2]] == 1);  // 2 -> 1
}

TEST_CASE("knn graph: exact similarity ties keep the smaller index") {
  const auto fm = make_features('v', 4, 2,
                                {1.0f, 0.0f,
                                 3.0f, 4.0f,
                                 3.0f, 4.0f,   // same direction as row 1
                                 -1.0f, 0.0f});
  const auto g = build_knn_graph(fm, 1);
  CHECK(g.indices[g.indptr[0]] == 1);  // rows 1 and 2 tie at cos=0.6; 1 wins
  CHECK(g.indices[g.indptr[3]] == 1);  // rows 1 and 2 tie at cos=-0.6; 1 wins
  const auto g2 = build_knn_graph(fm, 2);
  CHECK(g2.indptr[1] - g2.indptr[0] == 2);
}

TEST_CASE("knn graph: random instances match the exhaustive oracle") {
  Rng rng(401);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 5 + rng.uniform_index(10);
    const std::size_t d = 2 + rng.uniform_index(6);
    const int k = 1 + static_cast<int>(rng.uniform_index(4));
    const auto fm = random_features(rng, 'v', n, d);
    const auto g = build_knn_graph(fm, k);
    check_close(g.to_dense(), knn_dense_oracle(fm, k), 1e-12);
    for (std::size_t r = 0; r < n; ++r) {
      CHECK(g.indptr[r + 1] - g.indptr[r] <= static_cast<std::size_t>(k));
      for (std::size_t p = g.indptr[r]; p < g.indptr[r + 1]; ++p)
        CHECK(g.indices[p] != r);  // no self-loops
    }
  }
}

TEST_CASE("knn graph: K >= N keeps all off-diagonal entries") {
  Rng rng(402);
  const auto fm = random_features(rng, 't', 6, 3);
  const auto g = build_knn_graph(fm, 100);
  CHECK(g.nnz() == 6 * 5);
  check_close(g.to_dense(), knn_dense_oracle(fm, 100), 1e-12);
}

TEST_CASE("knn graph: zero-norm rows have no neighbors") {
  auto fm = make_features('v', 3, 2, {1.0f, 0.0f, 0.0f, 0.0f, 0.0f, 1.0f});
  const auto g = build_knn_graph(fm, 2);
  CHECK(g.indptr[2] - g.indptr[1] == 0);           // zero row: no outgoing edges
  CHECK(g.indptr[1] - g.indptr[0] == 2);           // others still rank it (sim 0)
  CHECK_THROWS_AS(build_knn_graph(fm, 0), ConfigError);
}

TEST_CASE("sym normalize: analytic 2x2 and zero matrix") {
  const auto g = from_dense(2, 2, {0.0, 2.0, 2.0, 0.0});
  const auto s = sym_normalize(g);
  check_close(s.to_dense(), {0.0, 1.0, 1.0, 0.0}, 1e-15);

  const auto z = sym_normalize(SparseMatrix::empty(3, 3));
  CHECK(z.nnz() == 0);
  CHECK(z.rows == 3);

  CHECK_THROWS_AS(sym_normalize(SparseMatrix::empty(2, 3)), ShapeError);
}

TEST_CASE("sym normalize: random graphs match the dense oracle") {
  Rng rng(403);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(63);
    const auto g = random_sparse(rng, n, 0.3);
    check_close(sym_normalize(g).to_dense(), dense_sym_normalize(g.to_dense(), n), 1e-12);
  }
}

TEST_CASE("sym normalize: nonpositive degree rows are zeroed") {
  const auto g = from_dense(3, 3,
                            {0.0, 0.5, 0.5,
                             -1.0, 0.0, 0.5,   // degree sum -0.5: zeroed
                             0.5, 0.5, 0.0});
  const auto s = sym_normalize(g);
  const auto d = s.to_dense();
  for (std::size_t c = 0; c < 3; ++c) CHECK(d[1 * 3 + c] == 0.0);
  // Column factors for the bad row are 0 as well.
  CHECK(d[0 * 3 + 1] == 0.0);
  CHECK(d[2 * 3 + 1] == 0.0);
  CHECK(d[0 * 3 + 2] > 0.0);
}

TEST_CASE("max fuse: idempotent, union on disjoint patterns, dense oracle") {
  Rng rng(404);
  const auto a = random_sparse(rng, 5, 0.4);
  CHECK(max_fuse(a, a) == a);

  const auto l = from_dense(3, 3, {0, 1, 0, 0, 0, 0, 2, 0, 0});
  const auto r = from_dense(3, 3, {0, 0, 3, 0, 0, 0, 0, 4, 0});
  check_close(max_fuse(l, r).to_dense(), {0, 1, 3, 0, 0, 0, 2, 4, 0}, 0.0);

  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(8);
    const auto x = random_sparse(rng, n, 0.35);
    const auto y = random_sparse(rng, n, 0.35);
    const auto dx = x.to_dense(), dy = y.to_dense();
    std::vector<double> want(n * n);
    for (std::size_t i = 0; i < want.size(); ++i) want[i] = std::max(dx[i], dy[i]);
    check_close(max_fuse(x, y).to_dense(), want, 0.0);
    CHECK(max_fuse(x, y) == max_fuse(y, x));
    const auto z = random_sparse(rng, n, 0.35);
    CHECK(max_fuse(max_fuse(x, y), z) == max_fuse(x, max_fuse(y, z)));
  }

  CHECK_THROWS_AS(max_fuse(random_sparse(rng, 3, 0.5), random_sparse(rng, 4, 0.5)),
                  ShapeError);
}

TEST_CASE("item graphs: fusion is the element-wise max of the normalized views") {
  Rng rng(405);
  const auto vis = random_features(rng, 'v', 12, 6);
  const auto txt = random_features(rng, 't', 12, 4);
  const auto g = build_item_graphs(vis, txt, 3, 4);
  CHECK(g.fused == max_fuse(g.visual, g.text));
  CHECK(g.visual.rows == 12);
  CHECK(g.text.rows == 12);

  const auto vis_short = random_features(rng, 'v', 11, 6);
  CHECK_THROWS_AS(build_item_graphs(vis_short, txt, 3, 4), ShapeError);
}

TEST_CASE("item graphs: cache round trip, key mismatch, corruption") {
  Rng rng(406);
  const auto td = fs::temp_directory_path() / ("smore_gcache_" + std::to_string(::getpid()));
  fs::create_directories(td);
  const std::string cache = (td / "graphs.bin").string();

  std::vector<UserItem> train;
  for (uint32_t u = 0; u < 4; ++u)
    for (uint32_t i = 0; i < 6; ++i)
      if ((u + i) % 2 == 0) train.push_back({u, i});
  const auto ds = tiny_dataset(train, 4, 6);
  const auto vis = random_features(rng, 'v', 6, 5);
  const auto txt = random_features(rng, 't', 6, 3);

  const auto a = load_or_build_item_graphs(ds, vis, txt, 2, 3, cache, false);
  REQUIRE(fs::exists(cache));
  const auto bytes_before = fs::file_size(cache);

  const auto b = load_or_build_item_graphs(ds, vis, txt, 2, 3, cache, false);
  CHECK(a.visual == b.visual);
  CHECK(a.text == b.text);
  CHECK(a.fused == b.fused);
  CHECK(fs::file_size(cache) == bytes_before);

  // Different K rebuilds and rewrites the cache.
  const auto c = load_or_build_item_graphs(ds, vis, txt, 3, 3, cache, false);
  CHECK(c.visual == build_item_graphs(vis, txt, 3, 3).visual);

  // Corrupt cache falls back to a rebuild.
  std::ofstream(cache, std::ios::binary | std::ios::trunc) << "garbage";
  const auto d = load_or_build_item_graphs(ds, vis, txt, 2, 3, cache, false);
  CHECK(d.visual == a.visual);

  const auto e = load_or_build_item_graphs(ds, vis, txt, 2, 3, cache, true);
  CHECK(e.fused == a.fused);

  std::error_code ec;
  fs::remove_all(td, ec);
}

TEST_CASE("bipartite graph: inverse square-root degree weights") {
  // u0-{i0,i1}, u1-{i0}: |N_u0|=2, |N_u1|=1, |N_i0|=2, |N_i1|=1.
  const auto ds = tiny_dataset({{0, 0}, {0, 1}, {1, 0}}, 2, 2);
  const auto g = build_bipartite(ds);
  const auto d = g.user_item.to_dense();
  CHECK(d[0] == doctest::Approx(0.5).epsilon(1e-15));                    // 1/sqrt(2*2)
  CHECK(d[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));   // 1/sqrt(2*1)
  CHECK(d[2] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));   // 1/sqrt(1*2)
  CHECK(d[3] == 0.0);

  const auto t = g.user_item.transposed();
  CHECK(t == g.item_user);
}
