#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "smore/tensor.hpp"

namespace smore {

// Unique (user, item) implicit-feedback events, external ids verbatim,
// in first-seen file order.
struct RawInteractions {
  std::vector<std::pair<std::string, std::string>> events;
};

struct InteractionColumns {
  std::string user = "user_id";
  std::string item = "item_id";
};

// Reads TSV/CSV interactions. A header row is detected by the presence of
// the configured column names; without one, columns 0/1 are user/item.
// Passing non-default column names requires a header naming both columns.
// Duplicate (user, item) pairs collapse to a single event.
RawInteractions load_interactions(const std::string& path,
                                  const InteractionColumns& cols = {});

// Iteratively removes users and items with fewer than k events until the
// fixed point where every remaining user and item has degree >= k.
RawInteractions kcore_filter(const RawInteractions& raw, int k);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

using UserItem = std::pair<uint32_t, uint32_t>;

struct Dataset {
  std::vector<std::string> user_ids;  // index -> external id, sorted
  std::vector<std::string> item_ids;
  std::unordered_map<std::string, uint32_t> user_index;
  std::unordered_map<std::string, uint32_t> item_index;

  std::vector<UserItem> train, val, test;

  // Derived views of the train split, rebuilt on load.
  SparseMatrix train_csr;  // M x N, all values 1.0
  std::vector<std::vector<uint32_t>> user_train_items;  // sorted item ids
  std::vector<uint32_t> item_train_degree;

  std::size_t num_users() const { return user_ids.size(); }
  std::size_t num_items() const { return item_ids.size(); }

  // Stable fingerprint over ids and splits; keys graph caches and manifests.
  uint64_t content_hash() const;

  void save(const std::string& path) const;
  static Dataset load(const std::string& path);

  // Recomputes train_csr / user_train_items / item_train_degree from the
  // split lists and checks the evaluability invariant (every user trains).
  void rebuild_derived();
};

// Per-user uniform random split at the given ratios (deterministic under
// seed; a user's draw is independent of every other user's). Users with
// fewer than 3 events keep everything in train. With global_split=true the
// ratios apply to the shuffled event list as a whole instead, then any user
// left without a train event has one holdout event moved back.
Dataset split(const RawInteractions& raw, const SplitRatios& ratios,
              uint64_t seed, bool global_split = false);

}  // namespace smore
