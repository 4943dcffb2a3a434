#include "smore/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <tuple>

#include "smore/error.hpp"
#include "smore/io_container.hpp"
#include "smore/kernels.hpp"

namespace smore {

namespace {

void put_graph(io::Container& c, const std::string& name, const SparseMatrix& g) {
  c.put_i64(name + "_shape", {2},
            {static_cast<int64_t>(g.rows), static_cast<int64_t>(g.cols)});
  std::vector<int64_t> indptr(g.indptr.begin(), g.indptr.end());
  c.put_i64(name + "_indptr", {indptr.size()}, indptr);
  std::vector<int64_t> indices(g.indices.begin(), g.indices.end());
  c.put_i64(name + "_indices", {indices.size()}, indices);
  c.put_f64(name + "_vals", {g.vals.size()}, g.vals);
}

SparseMatrix get_graph(const io::Container& c, const std::string& name) {
  const auto shape = c.get(name + "_shape").as_i64();
  const auto indptr = c.get(name + "_indptr").as_i64();
  const auto indices = c.get(name + "_indices").as_i64();
  SparseMatrix g;
  g.rows = static_cast<std::size_t>(shape.at(0));
  g.cols = static_cast<std::size_t>(shape.at(1));
  g.indptr.assign(indptr.begin(), indptr.end());
  g.indices.reserve(indices.size());
  for (int64_t i : indices) g.indices.push_back(static_cast<uint32_t>(i));
  g.vals = c.get(name + "_vals").as_f64();
  g.validate();
  return g;
}

}  // namespace

SparseMatrix build_knn_graph(const FeatureMatrix& fm, int k) {
  if (k < 1) throw ConfigError("kNN graph requires k >= 1");
  const std::size_t n = fm.rows;
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k),
                                                 n > 0 ? n - 1 : 0);
  std::size_t zero_rows = 0;
  const auto lists =
      kernels::cosine_topk(fm.data.data(), n, fm.dim, keep, &zero_rows);
  if (zero_rows > 0)
    log_warn("kNN graph (" + std::string(1, fm.modality) + "): " +
             std::to_string(zero_rows) + " items have zero-norm features and no neighbors");

  std::vector<std::tuple<uint32_t, uint32_t, double>> trip;
  trip.reserve(n * keep);
  for (std::size_t r = 0; r < n; ++r)
    for (const auto& [c, sim] : lists[r])
      trip.emplace_back(static_cast<uint32_t>(r), c, sim);
  return SparseMatrix::from_triplets(n, n, std::move(trip));
}

SparseMatrix sym_normalize(const SparseMatrix& g) {
  if (g.rows != g.cols)
    throw ShapeError("sym_normalize expects a square matrix, got " +
                     std::to_string(g.rows) + "x" + std::to_string(g.cols));
  std::vector<double> factor(g.rows, 0.0);
  std::size_t bad_rows = 0;
  for (std::size_t r = 0; r < g.rows; ++r) {
    double deg = 0.0;
    for (std::size_t p = g.indptr[r]; p < g.indptr[r + 1]; ++p) deg += g.vals[p];
    if (deg > 0.0) {
      factor[r] = 1.0 / std::sqrt(deg);
    } else if (g.indptr[r + 1] > g.indptr[r]) {
      ++bad_rows;  // nonempty row with nonpositive degree sum: zeroed
    }
  }
  if (bad_rows > 0)
    log_warn("sym_normalize: zeroed " + std::to_string(bad_rows) +
             " rows with nonpositive degree sums");

  std::vector<std::tuple<uint32_t, uint32_t, double>> trip;
  trip.reserve(g.nnz());
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t p = g.indptr[r]; p < g.indptr[r + 1]; ++p) {
      const uint32_t c = g.indices[p];
      const double v = g.vals[p] * factor[r] * factor[c];
      if (v != 0.0) trip.emplace_back(static_cast<uint32_t>(r), c, v);
    }
  return SparseMatrix::from_triplets(g.rows, g.cols, std::move(trip));
}

SparseMatrix max_fuse(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw ShapeError("max_fuse shape mismatch: " + std::to_string(a.rows) + "x" +
                     std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                     std::to_string(b.cols));
  std::vector<std::tuple<uint32_t, uint32_t, double>> trip;
  trip.reserve(a.nnz() + b.nnz());
  for (std::size_t r = 0; r < a.rows; ++r) {
    std::size_t pa = a.indptr[r], pb = b.indptr[r];
    const std::size_t ea = a.indptr[r + 1], eb = b.indptr[r + 1];
    while (pa < ea || pb < eb) {
      uint32_t c;
      double va = 0.0, vb = 0.0;
      if (pa < ea && (pb >= eb || a.indices[pa] <= b.indices[pb])) c = a.indices[pa];
      else c = b.indices[pb];
      if (pa < ea && a.indices[pa] == c) va = a.vals[pa++];
      if (pb < eb && b.indices[pb] == c) vb = b.vals[pb++];
      const double v = std::max(va, vb);  // absent entries read as 0
      if (v != 0.0) trip.emplace_back(static_cast<uint32_t>(r), c, v);
    }
  }
  return SparseMatrix::from_triplets(a.rows, a.cols, std::move(trip));
}

ItemGraphs build_item_graphs(const FeatureMatrix& visual, const FeatureMatrix& text,
                             int k_visual, int k_text) {
  if (visual.rows != text.rows)
    throw ShapeError("modality feature row counts differ: " +
                     std::to_string(visual.rows) + " vs " + std::to_string(text.rows));
  ItemGraphs g;
  g.visual = sym_normalize(build_knn_graph(visual, k_visual));
  g.text = sym_normalize(build_knn_graph(text, k_text));
  g.fused = max_fuse(g.visual, g.text);
  return g;
}

ItemGraphs load_or_build_item_graphs(const Dataset& ds, const FeatureMatrix& visual,
                                     const FeatureMatrix& text, int k_visual,
                                     int k_text, const std::string& cache_path,
                                     bool force_rebuild) {
  const auto hash = static_cast<int64_t>(ds.content_hash());
  if (!force_rebuild && std::ifstream(cache_path).good()) {
    try {
      const io::Container c = io::Container::load(cache_path);
      if (c.get("dataset_hash").as_i64().at(0) == hash &&
          c.get("k_visual").as_i64().at(0) == k_visual &&
          c.get("k_text").as_i64().at(0) == k_text) {
        ItemGraphs g;
        g.visual = get_graph(c, "visual");
        g.text = get_graph(c, "text");
        g.fused = get_graph(c, "fused");
        log_info("item graphs: cache hit (" + cache_path + ")");
        return g;
      }
      log_info("item graphs: cache key mismatch, rebuilding");
    } catch (const std::exception& e) {
      log_warn("item graphs: unreadable cache (" + std::string(e.what()) +
               "), rebuilding");
    }
  }

  ItemGraphs g = build_item_graphs(visual, text, k_visual, k_text);
  io::Container c;
  c.put_i64("dataset_hash", {1}, {hash});
  c.put_i64("k_visual", {1}, {k_visual});
  c.put_i64("k_text", {1}, {k_text});
  put_graph(c, "visual", g.visual);
  put_graph(c, "text", g.text);
  put_graph(c, "fused", g.fused);
  c.save(cache_path);
  return g;
}

BipartiteGraph build_bipartite(const Dataset& ds) {
  const std::size_t m = ds.num_users(), n = ds.num_items();
  std::vector<std::tuple<uint32_t, uint32_t, double>> trip;
  trip.reserve(ds.train.size());
  for (const auto& [u, i] : ds.train) {
    const double du = static_cast<double>(ds.user_train_items[u].size());
    const double di = static_cast<double>(ds.item_train_degree[i]);
    trip.emplace_back(u, i, 1.0 / std::sqrt(du * di));
  }
  BipartiteGraph g;
  g.user_item = SparseMatrix::from_triplets(m, n, std::move(trip));
  g.item_user = g.user_item.transposed();
  return g;
}

}  // namespace smore
