#pragma once

#include <functional>
#include <string>
#include <vector>

#include "smore/dataset.hpp"
#include "smore/model.hpp"
#include "smore/rng.hpp"

namespace smore {

// Uniform positive draws from the training pairs with one rejection-sampled
// unobserved item each ("unobserved" = not in the user's training items, so
// holdout items are legitimate negatives). A user whose training set covers
// every item cannot be paired and raises an error.
TripletBatch sample_triplets(const Dataset& ds, std::size_t batch_size, Rng& rng);

struct EpochLog {
  int epoch = 0;
  // Loss terms as per-triplet means (optimization itself uses sums).
  double bpr = 0, contrastive = 0, reg = 0, total = 0;
  double val_recall20 = 0, val_ndcg20 = 0;
  double seconds = 0;

  std::string to_json() const;
};

struct FitResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;           // 1-based; -1 if nothing completed
  double best_val_recall20 = -1;
  bool aborted_non_finite = false;
};

// Training loop: ceil(|train| / batch_size) freshly sampled batches per
// epoch, one Adam step each, validation Recall@20 after every epoch, early
// stop after `patience` epochs without improvement. Parameters are left at
// the best-validation snapshot (also on non-finite abort). on_epoch, when
// set, fires after each epoch with the log entry.
FitResult fit(const Dataset& ds, const ModelInputs& in, ParamStore& ps,
              const ModelConfig& cfg,
              const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace smore
