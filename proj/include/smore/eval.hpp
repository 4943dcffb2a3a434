#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "smore/dataset.hpp"
#include "smore/model.hpp"
#include "smore/tensor.hpp"

namespace smore {

struct MetricsReport {
  std::string split;
  std::vector<int> ks;
  std::map<int, double> recall;
  std::map<int, double> ndcg;
  std::size_t users_evaluated = 0;

  std::string to_json() const;
};

// Scores every user against every item (inner product), excludes each user's
// training items, and returns the top-k item ids per user, ties broken by
// smaller item index. Runs in user blocks so the score matrix never fully
// materializes.
std::vector<std::vector<uint32_t>> rank_all(
    const Tensor& user_emb, const Tensor& item_emb,
    const std::vector<std::vector<uint32_t>>& train_mask, std::size_t k);

// Recall@K = |topK ∩ relevant| / |relevant|; NDCG@K with binary gains and
// the ideal ranking of min(K, |relevant|) hits. Users with empty relevant
// lists are excluded from the means. topk rows must hold >= max(ks) entries
// (or every unmasked item if fewer exist).
MetricsReport compute_metrics(const std::vector<std::vector<uint32_t>>& topk,
                              const std::vector<std::vector<uint32_t>>& relevant,
                              const std::vector<int>& ks, const std::string& split_tag);

// Full protocol: forward pass, block-wise ranking with train masking, metric
// means over the chosen split ("val" or "test").
MetricsReport evaluate_split(const ModelInputs& in, ParamStore& ps,
                             const ModelConfig& cfg, const Dataset& ds,
                             const std::string& split, const std::vector<int>& ks);

}  // namespace smore
