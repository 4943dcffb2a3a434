#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smore/dataset.hpp"
#include "smore/features.hpp"
#include "smore/graphs.hpp"
#include "smore/params.hpp"
#include "smore/tape.hpp"

namespace smore {

enum class AttentionMode { PerEntity, Global };

// Flat key=value configuration. Unknown keys are rejected; every key can be
// overridden by an environment variable SMORE_<KEY> (upper-cased).
struct ModelConfig {
  std::size_t embedding_dim = 64;  // shared latent dimension d
  int gcn_layers = 2;              // interaction-graph propagation depth
  int knn_k_visual = 10;           // item-graph neighbors, visual view
  int knn_k_text = 10;             // item-graph neighbors, text view
  double contrastive_weight = 0.01;
  double reg_weight = 1e-4;
  double temperature = 0.2;
  double learning_rate = 1e-3;
  int batch_size = 2048;
  int max_epochs = 1000;
  int patience = 20;
  uint64_t seed = 42;
  AttentionMode attention = AttentionMode::PerEntity;
  bool cl_full_denominator = false;  // contrast against every entity, not just the batch
  bool disable_fusion = false;       // ablation: zero the fused-feature branch
  bool freeze_filters = false;       // ablation: pin spectral filters at identity

  void set_key(const std::string& key, const std::string& value);
  void apply_env();
  void validate() const;
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text, const std::string& origin);
  static ModelConfig from_file(const std::string& path);
};

struct ModelDims {
  std::size_t users = 0, items = 0;
  std::size_t dim_visual = 0, dim_text = 0;
};

// Creates and initializes every trainable parameter in a fixed order:
// ID embeddings and weight matrices Xavier-uniform, biases zero, spectral
// filters near the identity response (1 + small uniform noise per bin).
void init_model_params(ParamStore& ps, const ModelConfig& cfg, const ModelDims& dims,
                       Rng& rng);

// Frozen forward-pass inputs. Feature matrices are referenced, graphs are
// owned; everything must outlive any tape built over it.
struct ModelInputs {
  const FeatureMatrix* visual = nullptr;
  const FeatureMatrix* text = nullptr;
  SparseMatrix g_visual, g_text, g_fused;        // normalized item graphs
  SparseMatrix g_visual_t, g_text_t, g_fused_t;  // their transposes
  SparseMatrix ui, iu;  // interaction blocks, mutual transposes
  std::size_t users = 0, items = 0;

  ModelDims dims() const {
    return {users, items, visual ? visual->dim : 0, text ? text->dim : 0};
  }
};

ModelInputs make_model_inputs(const Dataset& ds, const FeatureMatrix& visual,
                              const FeatureMatrix& text, const ItemGraphs& graphs);

// Node handles into the tape after a full forward pass. Users and items are
// kept as separate blocks; index i of an item block is dataset item i.
struct ForwardIds {
  Tape::Id user_behav = -1, item_behav = -1;  // propagated ID embeddings
  Tape::Id user_side = -1, item_side = -1;    // assembled side features
  Tape::Id user_final = -1, item_final = -1;  // behav + side, used for scoring
  Tape::Id fused_items = -1;                  // graph-enriched fused item features
  Tape::Id spec_visual = -1, spec_text = -1, spec_fused = -1;  // complex spectra
};

ForwardIds model_forward(Tape& t, const ModelInputs& in, ParamStore& ps,
                         const ModelConfig& cfg);

// Contrastive alignment of two views: batch rows of `behav` against `side`.
// Rows are L2-normalized, similarities scaled by 1/temperature; each row's
// positive is its own pairing, negatives are the other batch rows (or every
// row of `side` with full_denominator). Returns the summed loss node.
Tape::Id info_nce(Tape& t, Tape::Id behav, Tape::Id side,
                  const std::vector<std::size_t>& idx, double temperature,
                  bool full_denominator);

struct TripletBatch {
  std::vector<std::size_t> users, pos_items, neg_items;
};

struct LossValues {
  double bpr = 0, contrastive = 0, reg = 0, total = 0;
};

// Joint objective: summed pairwise ranking loss over the triplets, plus the
// weighted contrastive term (batch users and positive items), plus the L2
// penalty on the ID-embedding rows the batch touches.
Tape::Id model_loss(Tape& t, const ModelInputs& in, const ForwardIds& f,
                    ParamStore& ps, const ModelConfig& cfg, const TripletBatch& batch,
                    LossValues* parts = nullptr);

// Inference-time forward: runs a fresh tape and copies out the final blocks.
struct FinalEmbeddings {
  Tensor users;  // M x d
  Tensor items;  // N x d
  Tensor fused_items;  // N x d, for diagnostics
};
FinalEmbeddings compute_final_embeddings(const ModelInputs& in, ParamStore& ps,
                                         const ModelConfig& cfg);

void save_checkpoint(const std::string& path, const ParamStore& ps,
                     const ModelConfig& cfg, const ModelDims& dims);

struct Checkpoint {
  ModelConfig config;
  ModelDims dims;
  ParamStore params;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace smore
