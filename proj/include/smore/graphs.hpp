#pragma once

#include <cstdint>
#include <string>

#include "smore/dataset.hpp"
#include "smore/features.hpp"
#include "smore/tensor.hpp"

namespace smore {

// Directed row-wise top-K cosine similarity graph over item features:
// each row keeps its K largest off-diagonal similarities (ties broken by
// smaller item index). Zero-norm feature rows get empty neighbor lists and
// a warning. K >= N keeps all off-diagonal entries.
SparseMatrix build_knn_graph(const FeatureMatrix& fm, int k);

// Symmetric degree normalization with D = diag(row sums). Rows whose degree
// sum is <= 0 are zeroed (with a warning when they had entries); the same
// convention 0^{-1/2} == 0 applies to the column factors.
SparseMatrix sym_normalize(const SparseMatrix& g);

// Element-wise maximum over the union sparsity pattern with absent entries
// read as 0 (dense semantics); exact zeros are dropped from the result.
SparseMatrix max_fuse(const SparseMatrix& a, const SparseMatrix& b);

// Frozen item-item graphs, one per modality plus their fusion. Built once
// from raw features; training never touches them.
struct ItemGraphs {
  SparseMatrix visual;  // normalized
  SparseMatrix text;    // normalized
  SparseMatrix fused;   // element-wise max of the two
};

ItemGraphs build_item_graphs(const FeatureMatrix& visual, const FeatureMatrix& text,
                             int k_visual, int k_text);

// Cached variant: reuses cache_path when it matches (dataset hash, K_v, K_t),
// rebuilding and rewriting it otherwise or when force_rebuild is set.
ItemGraphs load_or_build_item_graphs(const Dataset& ds, const FeatureMatrix& visual,
                                     const FeatureMatrix& text, int k_visual,
                                     int k_text, const std::string& cache_path,
                                     bool force_rebuild);

// User-item interaction graph as two propagation blocks, both weighted
// 1/sqrt(|N_u| * |N_i|). Equivalent to one step with the symmetric-normalized
// square adjacency over the stacked (users, items) embedding.
struct BipartiteGraph {
  SparseMatrix user_item;  // M x N
  SparseMatrix item_user;  // N x M
};

BipartiteGraph build_bipartite(const Dataset& ds);

}  // namespace smore
