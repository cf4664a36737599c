#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/matrix.hpp"

namespace fedsim {

using Label = uint32_t;

// Feature matrix (one sample per row) with integer class labels in
// [0, class_count).
struct Dataset {
  Matrix x;
  std::vector<Label> y;
  size_t class_count = 0;
  std::vector<std::string> feature_names;

  size_t rows() const { return x.rows(); }
  size_t features() const { return x.cols(); }
  bool empty() const { return x.rows() == 0; }

  // Throws Error on shape disagreement, out-of-range labels or non-finite
  // features. An empty dataset is valid here; callers that need rows check.
  void validate() const;

  // Rows at `indices`, in that order.
  Dataset subset(const std::vector<size_t>& indices) const;
};

struct ClientDataset {
  size_t client_id = 0;
  Dataset data;
};

}  // namespace fedsim
