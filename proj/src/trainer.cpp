#include "smore/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "smore/error.hpp"
#include "smore/eval.hpp"

namespace smore {

TripletBatch sample_triplets(const Dataset& ds, std::size_t batch_size, Rng& rng) {
  if (ds.train.empty()) throw DataError("cannot sample triplets: empty training split");
  const std::size_t n_items = ds.num_items();
  TripletBatch b;
  b.users.reserve(batch_size);
  b.pos_items.reserve(batch_size);
  b.neg_items.reserve(batch_size);
  for (std::size_t k = 0; k < batch_size; ++k) {
    const auto& [u, i] = ds.train[rng.uniform_index(ds.train.size())];
    const auto& observed = ds.user_train_items[u];
    if (observed.size() >= n_items)
      throw DataError("user " + ds.user_ids[u] +
                      " has interacted with every item; cannot sample a negative");
    uint32_t j;
    do {
      j = static_cast<uint32_t>(rng.uniform_index(n_items));
    } while (std::binary_search(observed.begin(), observed.end(), j));
    b.users.push_back(u);
    b.pos_items.push_back(i);
    b.neg_items.push_back(j);
  }
  return b;
}

std::string EpochLog::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["loss"] = total;
  j["bpr"] = bpr;
  j["contrastive"] = contrastive;
  j["reg"] = reg;
  j["val_recall20"] = val_recall20;
  j["val_ndcg20"] = val_ndcg20;
  j["seconds"] = seconds;
  return j.dump();
}

FitResult fit(const Dataset& ds, const ModelInputs& in, ParamStore& ps,
              const ModelConfig& cfg,
              const std::function<void(const EpochLog&)>& on_epoch) {
  FitResult result;
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t batches = (ds.train.size() + bs - 1) / bs;
  Rng sample_rng = Rng(cfg.seed).fork(1);  // independent of the init stream

  AdamState adam;
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.learning_rate;

  auto best_snap = ps.snapshot();
  int epochs_since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double sum_bpr = 0, sum_cl = 0, sum_reg = 0, sum_total = 0;
    std::size_t triplets = 0;

    for (std::size_t step = 0; step < batches; ++step) {
      const TripletBatch batch = sample_triplets(ds, bs, sample_rng);
      Tape tape;
      const ForwardIds f = model_forward(tape, in, ps, cfg);
      LossValues parts;
      const Tape::Id loss = model_loss(tape, in, f, ps, cfg, batch, &parts);
      if (!std::isfinite(parts.total)) {
        log_error("epoch " + std::to_string(epoch) +
                  ": non-finite loss; restoring best checkpoint");
        ps.restore(best_snap);
        result.aborted_non_finite = true;
        return result;
      }
      tape.backward(loss);
      try {
        adam_step(ps, adam, adam_cfg);
      } catch (const NumericError& e) {
        log_error("epoch " + std::to_string(epoch) + ": " + e.what() +
                  "; restoring best checkpoint");
        ps.restore(best_snap);
        result.aborted_non_finite = true;
        return result;
      }
      sum_bpr += parts.bpr;
      sum_cl += parts.contrastive;
      sum_reg += parts.reg;
      sum_total += parts.total;
      triplets += batch.users.size();
    }

    const MetricsReport val = evaluate_split(in, ps, cfg, ds, "val", {20});
    EpochLog entry;
    entry.epoch = epoch;
    const double denom = triplets > 0 ? static_cast<double>(triplets) : 1.0;
    entry.bpr = sum_bpr / denom;
    entry.contrastive = sum_cl / denom;
    entry.reg = sum_reg / denom;
    entry.total = sum_total / denom;
    entry.val_recall20 = val.recall.at(20);
    entry.val_ndcg20 = val.ndcg.at(20);
    entry.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);

    if (entry.val_recall20 > result.best_val_recall20) {
      result.best_val_recall20 = entry.val_recall20;
      result.best_epoch = epoch;
      best_snap = ps.snapshot();
      epochs_since_best = 0;
    } else if (++epochs_since_best >= cfg.patience) {
      log_info("early stop at epoch " + std::to_string(epoch) + " (best epoch " +
               std::to_string(result.best_epoch) + ")");
      break;
    }
  }

  ps.restore(best_snap);
  return result;
}

}  // namespace smore
