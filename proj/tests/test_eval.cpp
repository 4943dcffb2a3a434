#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "smore/diagnostics.hpp"
#include "smore/error.hpp"
#include "smore/eval.hpp"
#include "smore/rng.hpp"

using namespace smore;

namespace {

// Full-sort reference ranking: stable sort on (-score, index) after deleting
// masked items, then take the first k.
std::vector<uint32_t> rank_one_oracle(const std::vector<double>& scores,
                                      const std::vector<uint32_t>& masked,
                                      std::size_t k) {
  std::set<uint32_t> drop(masked.begin(), masked.end());
  std::vector<uint32_t> order;
  for (uint32_t i = 0; i < scores.size(); ++i)
    if (!drop.count(i)) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  if (order.size() > k) order.resize(k);
  return order;
}

double recall_oracle(const std::vector<uint32_t>& topk,
                     const std::vector<uint32_t>& relevant, int k) {
  if (relevant.empty()) return 0;
  const std::set<uint32_t> rel(relevant.begin(), relevant.end());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < topk.size() && r < static_cast<std::size_t>(k); ++r)
    hits += rel.count(topk[r]);
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double ndcg_oracle(const std::vector<uint32_t>& topk,
                   const std::vector<uint32_t>& relevant, int k) {
  if (relevant.empty()) return 0;
  const std::set<uint32_t> rel(relevant.begin(), relevant.end());
  double dcg = 0;
  for (std::size_t r = 0; r < topk.size() && r < static_cast<std::size_t>(k); ++r)
    if (rel.count(topk[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  double idcg = 0;
  const std::size_t ideal = std::min<std::size_t>(k, relevant.size());
  for (std::size_t r = 0; r < ideal; ++r)
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t = Tensor::zeros({rows, cols});
  for (auto& x : t.v) x = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("ranking matches the full-sort reference on random instances") {
  Rng rng(101);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t m = 1 + rng.uniform_index(8);
    const std::size_t n = 2 + rng.uniform_index(31);
    const std::size_t d = 1 + rng.uniform_index(6);
    const std::size_t k = 1 + rng.uniform_index(n);
    const Tensor users = random_matrix(m, d, rng);
    const Tensor items = random_matrix(n, d, rng);
    std::vector<std::vector<uint32_t>> mask(m);
    for (std::size_t u = 0; u < m; ++u) {
      for (uint32_t i = 0; i < n; ++i)
        if (rng.uniform() < 0.25) mask[u].push_back(i);
      if (mask[u].size() == n) mask[u].pop_back();  // keep one candidate
    }

    const auto got = rank_all(users, items, mask, k);
    REQUIRE(got.size() == m);
    for (std::size_t u = 0; u < m; ++u) {
      std::vector<double> scores(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c)
          scores[i] += users.v[u * d + c] * items.v[i * d + c];
      CHECK(got[u] == rank_one_oracle(scores, mask[u], k));
    }
  }
}

TEST_CASE("ranking breaks exact ties toward the smaller item index") {
  // One user embedding [1], items all equal scores.
  const Tensor users({1, 1}, {1.0});
  const Tensor items({5, 1}, {2.0, 2.0, 2.0, 2.0, 2.0});
  const auto top = rank_all(users, items, {{}}, 3);
  CHECK(top[0] == std::vector<uint32_t>{0, 1, 2});
}

TEST_CASE("masking removes training items and promotes the rest") {
  const Tensor users({1, 1}, {1.0});
  const Tensor items({4, 1}, {9.0, 7.0, 5.0, 3.0});
  CHECK(rank_all(users, items, {{}}, 2)[0] == std::vector<uint32_t>{0, 1});
  CHECK(rank_all(users, items, {{0, 1}}, 2)[0] == std::vector<uint32_t>{2, 3});
  // A masked item never appears even when k covers everything.
  const auto all = rank_all(users, items, {{1}}, 4)[0];
  CHECK(all == std::vector<uint32_t>{0, 2, 3});
}

TEST_CASE("ranking spans block boundaries consistently") {
  // More than one 256-row block of users, same item table: every row of a
  // replicated user must agree.
  Rng rng(7);
  const std::size_t m = 600, n = 40, d = 4;
  const Tensor one_user = random_matrix(1, d, rng);
  Tensor users = Tensor::zeros({m, d});
  for (std::size_t u = 0; u < m; ++u)
    for (std::size_t c = 0; c < d; ++c) users.v[u * d + c] = one_user.v[c];
  const Tensor items = random_matrix(n, d, rng);
  const auto got = rank_all(users, items, std::vector<std::vector<uint32_t>>(m), 10);
  for (std::size_t u = 1; u < m; ++u) CHECK(got[u] == got[0]);
}

TEST_CASE("metrics match brute force on 500 random instances") {
  Rng rng(202);
  std::vector<int> ks = {1, 3, 5, 10, 20};
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 5 + rng.uniform_index(40);
    const std::size_t m = 1 + rng.uniform_index(6);
    std::vector<std::vector<uint32_t>> topk(m), relevant(m);
    for (std::size_t u = 0; u < m; ++u) {
      std::vector<uint32_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t i = n; i > 1; --i)
        std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
      topk[u].assign(perm.begin(), perm.begin() + std::min<std::size_t>(n, 20));
      for (uint32_t i = 0; i < n; ++i)
        if (rng.uniform() < 0.3) relevant[u].push_back(i);
    }
    const MetricsReport rep = compute_metrics(topk, relevant, ks, "test");

    std::size_t evaluated = 0;
    for (std::size_t u = 0; u < m; ++u) evaluated += !relevant[u].empty();
    CHECK(rep.users_evaluated == evaluated);
    if (evaluated == 0) continue;
    for (int k : ks) {
      double rsum = 0, nsum = 0;
      for (std::size_t u = 0; u < m; ++u) {
        if (relevant[u].empty()) continue;
        rsum += recall_oracle(topk[u], relevant[u], k);
        nsum += ndcg_oracle(topk[u], relevant[u], k);
      }
      const double rw = rsum / static_cast<double>(evaluated);
      const double nw = nsum / static_cast<double>(evaluated);
      CHECK(std::abs(rep.recall.at(k) - rw) <= 1e-12 * std::max(1.0, std::abs(rw)));
      CHECK(std::abs(rep.ndcg.at(k) - nw) <= 1e-12 * std::max(1.0, std::abs(nw)));
    }
  }
}

TEST_CASE("a single hit at rank 2 scores NDCG = 1/log2(3)") {
  const std::vector<std::vector<uint32_t>> topk = {{7, 3, 9}};
  const std::vector<std::vector<uint32_t>> relevant = {{3}};
  const MetricsReport rep = compute_metrics(topk, relevant, {3}, "test");
  CHECK(rep.ndcg.at(3) == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-14));
  CHECK(rep.recall.at(3) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("recall is monotone in K and reaches 1 once K covers the catalog") {
  Rng rng(303);
  const std::size_t n = 25;
  std::vector<uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
  const std::vector<std::vector<uint32_t>> topk = {perm};
  const std::vector<std::vector<uint32_t>> relevant = {{1, 5, 17}};
  std::vector<int> ks;
  for (int k = 1; k <= static_cast<int>(n); ++k) ks.push_back(k);
  const MetricsReport rep = compute_metrics(topk, relevant, ks, "val");
  double prev = 0;
  for (int k : ks) {
    CHECK(rep.recall.at(k) >= prev);
    prev = rep.recall.at(k);
  }
  CHECK(rep.recall.at(static_cast<int>(n)) == doctest::Approx(1.0));
  CHECK(rep.ndcg.at(static_cast<int>(n)) > 0);
}

TEST_CASE("users with nothing relevant are excluded from the means") {
  const std::vector<std::vector<uint32_t>> topk = {{0, 1}, {0, 1}};
  const std::vector<std::vector<uint32_t>> relevant = {{0}, {}};
  const MetricsReport rep = compute_metrics(topk, relevant, {2}, "val");
  CHECK(rep.users_evaluated == 1);
  CHECK(rep.recall.at(2) == doctest::Approx(1.0));  // not diluted by user 2
}

TEST_CASE("rankings are invariant under positive affine score maps") {
  Rng rng(404);
  const std::size_t m = 5, n = 20, d = 3;
  const Tensor users = random_matrix(m, d, rng);
  const Tensor items = random_matrix(n, d, rng);
  const std::vector<std::vector<uint32_t>> mask(m);
  const auto base = rank_all(users, items, mask, 10);

  // Scaling every user row by a positive constant rescales its scores.
  Tensor scaled = users;
  for (auto& x : scaled.v) x *= 3.75;
  CHECK(rank_all(scaled, items, mask, 10) == base);
}

TEST_CASE("metrics JSON lists splits, cutoffs, and both metric families") {
  MetricsReport rep;
  rep.split = "test";
  rep.ks = {10, 20};
  rep.recall[10] = 0.125;
  rep.recall[20] = 0.25;
  rep.ndcg[10] = 0.0625;
  rep.ndcg[20] = 0.09375;
  rep.users_evaluated = 42;
  const std::string text = rep.to_json();
  CHECK(text.back() == '\n');
  const auto j = nlohmann::json::parse(text);
  CHECK(j["split"] == "test");
  CHECK(j["ks"] == std::vector<int>({10, 20}));
  CHECK(j["recall"]["10"] == 0.125);
  CHECK(j["recall"]["20"] == 0.25);
  CHECK(j["ndcg"]["20"] == 0.09375);
  CHECK(j["users"] == 42);
  // key order is stable for byte-identical reruns
  CHECK(text.find("\"split\"") < text.find("\"ks\""));
  CHECK(text.find("\"ks\"") < text.find("\"recall\""));
  CHECK(text.find("\"recall\"") < text.find("\"ndcg\""));
}

TEST_CASE("evaluate_split accepts only holdout splits") {
  // Minimal dataset: 2 users, 3 items.
  RawInteractions raw;
  for (const char* u : {"u0", "u1"})
    for (const char* i : {"i0", "i1", "i2"}) raw.events.emplace_back(u, i);
  const Dataset ds = split(raw, SplitRatios{}, 3);
  FeatureMatrix visual, text;
  visual.modality = 'v';
  visual.rows = 3;
  visual.dim = 2;
  visual.data = {1.f, 0.f, 0.f, 1.f, 1.f, 1.f};
  text = visual;
  text.modality = 't';
  const ItemGraphs graphs = build_item_graphs(visual, text, 1, 1);
  const ModelInputs in = make_model_inputs(ds, visual, text, graphs);
  ModelConfig cfg;
  cfg.embedding_dim = 4;
  cfg.knn_k_visual = 1;
  cfg.knn_k_text = 1;
  ParamStore ps;
  Rng rng(1);
  init_model_params(ps, cfg, {2, 3, 2, 2}, rng);

  CHECK_THROWS_AS(evaluate_split(in, ps, cfg, ds, "train", {1}), ConfigError);
  const MetricsReport rep = evaluate_split(in, ps, cfg, ds, "test", {1, 2});
  CHECK(rep.split == "test");
  CHECK(rep.users_evaluated <= 2);
  CHECK(rep.recall.count(1) == 1);
  CHECK(rep.recall.count(2) == 1);
}

// ---- embedding-spread diagnostics --------------------------------------------

TEST_CASE("identical rows have mean pairwise cosine one") {
  Tensor t({4, 3}, {1, 2, 3, 1, 2, 3, 1, 2, 3, 1, 2, 3});
  const UniformityStats s = uniformity_stats(t);
  CHECK(s.mean_pairwise_cosine == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.rows_used == 4);
  CHECK(s.angular_entropy == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("standard basis rows have mean pairwise cosine zero") {
  const std::size_t d = 6;
  Tensor t = Tensor::zeros({d, d});
  for (std::size_t i = 0; i < d; ++i) t.v[i * d + i] = 2.5;
  const UniformityStats s = uniformity_stats(t);
  CHECK(s.mean_pairwise_cosine == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.rows_used == d);
}

TEST_CASE("zero rows are skipped and too-few rows rejected") {
  Tensor t({3, 2}, {0, 0, 1, 0, 0, 1});
  const UniformityStats s = uniformity_stats(t);
  CHECK(s.rows_used == 2);
  CHECK(s.mean_pairwise_cosine == doctest::Approx(0.0).epsilon(1e-12));

  Tensor lone({2, 2}, {0, 0, 1, 1});
  CHECK_THROWS_AS(uniformity_stats(lone), DataError);
}

TEST_CASE("evenly spread plane vectors maximize angular entropy") {
  const int n = 36;
  Tensor t = Tensor::zeros({static_cast<std::size_t>(n), 2});
  for (int i = 0; i < n; ++i) {
    const double ang = (static_cast<double>(i) + 0.31) / n * 2.0 * 3.14159265358979;
    t.v[2 * i] = std::cos(ang);
    t.v[2 * i + 1] = std::sin(ang);
  }
  const UniformityStats s = uniformity_stats(t);
  // The 36 unit rows sum to zero, so the distinct-pair mean is -1/(n-1).
  CHECK(s.mean_pairwise_cosine == doctest::Approx(-1.0 / 35.0).epsilon(1e-9));
  CHECK(s.angular_entropy > 3.5);  // near ln(36) ~ 3.58
  CHECK(s.bins == 36);

  const auto j = nlohmann::json::parse(s.to_json());
  CHECK(j["rows_used"] == n);
  CHECK(j["bins"] == 36);
}
