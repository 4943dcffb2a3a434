#include "smore/eval.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "smore/error.hpp"
#include "smore/kernels.hpp"

namespace smore {

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["split"] = split;
  j["ks"] = ks;
  nlohmann::ordered_json rec, nd;
  for (const int k : ks) {
    rec[std::to_string(k)] = recall.at(k);
    nd[std::to_string(k)] = ndcg.at(k);
  }
  j["recall"] = rec;
  j["ndcg"] = nd;
  j["users"] = users_evaluated;
  return j.dump(2) + "\n";
}

std::vector<std::vector<uint32_t>> rank_all(
    const Tensor& user_emb, const Tensor& item_emb,
    const std::vector<std::vector<uint32_t>>& train_mask, std::size_t k) {
  const std::size_t m = user_emb.rows(), n = item_emb.rows(), d = user_emb.cols();
  if (item_emb.cols() != d) throw ShapeError("rank_all embedding width mismatch");
  if (train_mask.size() != m) throw ShapeError("rank_all mask row count mismatch");

  std::vector<std::vector<uint32_t>> out(m);
  constexpr std::size_t kBlock = 256;
  std::vector<double> scores(std::min(kBlock, m) * n);
  for (std::size_t b0 = 0; b0 < m; b0 += kBlock) {
    const std::size_t rows = std::min(kBlock, m - b0);
    kernels::matmul_nt(user_emb.v.data() + b0 * d, item_emb.v.data(), scores.data(),
                       rows, d, n);
    const std::vector<std::vector<uint32_t>> mask(train_mask.begin() + b0,
                                                  train_mask.begin() + b0 + rows);
    auto part = kernels::topk_ranked(scores.data(), rows, n, mask, k);
    for (std::size_t r = 0; r < rows; ++r) out[b0 + r] = std::move(part[r]);
  }
  return out;
}

MetricsReport compute_metrics(const std::vector<std::vector<uint32_t>>& topk,
                              const std::vector<std::vector<uint32_t>>& relevant,
                              const std::vector<int>& ks,
                              const std::string& split_tag) {
  if (topk.size() != relevant.size())
    throw ShapeError("compute_metrics row count mismatch");
  if (ks.empty()) throw ConfigError("no cutoff values given");

  MetricsReport rep;
  rep.split = split_tag;
  rep.ks = ks;
  for (const int k : ks) {
    if (k < 1) throw ConfigError("cutoff values must be >= 1");
    rep.recall[k] = 0.0;
    rep.ndcg[k] = 0.0;
  }

  std::size_t evaluated = 0;
  for (std::size_t u = 0; u < topk.size(); ++u) {
    const auto& rel = relevant[u];
    if (rel.empty()) continue;  // user has nothing to predict in this split
    ++evaluated;
    for (const int k : ks) {
      const std::size_t kk = std::min<std::size_t>(k, topk[u].size());
      std::size_t hits = 0;
      double dcg = 0.0;
      for (std::size_t r = 0; r < kk; ++r) {
        if (std::binary_search(rel.begin(), rel.end(), topk[u][r])) {
          ++hits;
          dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
        }
      }
      double idcg = 0.0;
      const std::size_t ideal = std::min<std::size_t>(k, rel.size());
      for (std::size_t r = 0; r < ideal; ++r)
        idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
      rep.recall[k] += static_cast<double>(hits) / static_cast<double>(rel.size());
      rep.ndcg[k] += idcg > 0 ? dcg / idcg : 0.0;
    }
  }
  if (evaluated > 0)
    for (const int k : ks) {
      rep.recall[k] /= static_cast<double>(evaluated);
      rep.ndcg[k] /= static_cast<double>(evaluated);
    }
  rep.users_evaluated = evaluated;
  return rep;
}

MetricsReport evaluate_split(const ModelInputs& in, ParamStore& ps,
                             const ModelConfig& cfg, const Dataset& ds,
                             const std::string& split, const std::vector<int>& ks) {
  const std::vector<UserItem>* pairs = nullptr;
  if (split == "val") pairs = &ds.val;
  else if (split == "test") pairs = &ds.test;
  else throw ConfigError("split must be val or test, got '" + split + "'");

  std::vector<std::vector<uint32_t>> relevant(ds.num_users());
  for (const auto& [u, i] : *pairs) relevant[u].push_back(i);
  // Split lists are sorted by (user, item), so each per-user list is sorted.

  int max_k = 1;
  for (const int k : ks) max_k = std::max(max_k, k);
  const FinalEmbeddings emb = compute_final_embeddings(in, ps, cfg);
  const auto topk = rank_all(emb.users, emb.items, ds.user_train_items,
                             static_cast<std::size_t>(max_k));
  return compute_metrics(topk, relevant, ks, split);
}

}  // namespace smore
