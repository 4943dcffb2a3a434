#pragma once

#include <cstddef>
#include <string>

#include "smore/tensor.hpp"

namespace smore {

// Scalar summaries of how evenly a set of embedding rows covers the sphere.
// Lower mean pairwise cosine and higher angular entropy both indicate a more
// uniform spread.
struct UniformityStats {
  double mean_pairwise_cosine = 0;  // over distinct row pairs, L2-normalized
  double angular_entropy = 0;       // nats; histogram of 2-D PCA angles
  std::size_t rows_used = 0;        // zero-norm rows are skipped
  int bins = 36;

  std::string to_json() const;
};

// `rows` is an (N x d) matrix, row-major. Needs at least two non-zero rows;
// the mean cosine uses the identity sum-of-pairs = |sum of unit rows|^2 - N.
UniformityStats uniformity_stats(const Tensor& rows);

}  // namespace smore
