#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "smore/dataset.hpp"

namespace smore {

// Frozen raw modality features, one row per dataset item in item-index
// order. Stored as float32: these are inputs, never trained.
struct FeatureMatrix {
  char modality = '?';  // 'v' (visual) or 't' (text)
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> data;  // rows x dim, row-major

  const float* row(std::size_t r) const { return data.data() + r * dim; }
};

// Loads features from either the binary matrix format (magic "MMFEAT01",
// u32 rows, u32 cols, u8 dtype 0 = float32, row-major little-endian payload,
// optional "<path>.ids" sidecar of external item ids) or delimited text
// ("item_id v1 ... vd" per line). Rows are reordered to the dataset's item
// indexing; rows for ids outside the dataset are dropped; a dataset item
// with no feature row, a non-finite row, or ragged dimensions is an error.
// A binary file without a sidecar must already be aligned: exactly one row
// per dataset item, in item-index order.
FeatureMatrix load_features(const std::string& path, char modality,
                            const Dataset& ds);

// Writes the binary format; when ids is non-null also writes "<path>.ids".
void save_features_binary(const std::string& path, const FeatureMatrix& fm,
                          const std::vector<std::string>* ids = nullptr);

}  // namespace smore
