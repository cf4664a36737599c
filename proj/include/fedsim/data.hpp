#pragma once

// Dataset ingestion (MHEALTH-format logs, synthetic blobs), z-scoring,
// stratified train/test split and IID client partitioning.

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/dataset.hpp"

namespace fedsim {

struct MhealthOptions {
  // Label 0 marks rows between activities. When kept it becomes the last
  // class instead of being dropped.
  bool keep_null_class = false;
};

struct IngestReport {
  size_t files = 0;
  size_t rows_read = 0;
  size_t null_rows_dropped = 0;
  std::vector<int64_t> source_labels;  // source label of each output class
};

// Whitespace-separated numeric columns, last column the integer activity
// label; one file per subject. Rows are concatenated in `paths` order.
Dataset load_mhealth(const std::vector<std::string>& paths,
                     const MhealthOptions& options = {},
                     IngestReport* report = nullptr);

// Sorted file names matching a shell glob. Throws kIo when nothing matches.
std::vector<std::string> expand_glob(const std::string& pattern);

// Writes `data` in the MHEALTH log layout with labels shifted to 1..C, so
// load_mhealth reads it back unchanged.
void save_mhealth_format(const Dataset& data, const std::string& path);

struct StandardizationParams {
  std::vector<double> mean;
  std::vector<double> std;  // population std, floored at kStdFloor
};

inline constexpr double kStdFloor = 1e-8;

StandardizationParams standardize_fit(const Dataset& train);
Dataset standardize_apply(const StandardizationParams& params, Dataset data);

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

// Stratified: each class contributes round(test_fraction * n_c) rows to the
// test side, clamped so both sides keep at least one row of the class.
TrainTestSplit split_train_test(const Dataset& data, double test_fraction,
                                uint64_t seed);

// Shuffles the rows and deals them into `clients` contiguous runs whose sizes
// differ by at most one. Each client's rows stay in dataset order.
std::vector<ClientDataset> partition_clients(const Dataset& train,
                                             size_t clients, uint64_t seed);

// Balanced Gaussian blobs with identity covariance. Class of row i is
// i % classes; class centers are pairwise at least `separation` apart.
Dataset make_synthetic(size_t rows, size_t features, size_t classes,
                       double separation, uint64_t seed);

// Class centers used by make_synthetic for the same arguments.
std::vector<std::vector<double>> synthetic_centers(size_t features,
                                                   size_t classes,
                                                   double separation,
                                                   uint64_t seed);

}  // namespace fedsim
