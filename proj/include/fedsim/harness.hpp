#pragma once

// Client-count study: for every client count and repetition, split the data,
// partition the training rows, run a federation and score it on the shared
// test set; a centralized baseline is trained per repetition for comparison.

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/federation.hpp"
#include "fedsim/metrics.hpp"

namespace fedsim {

inline constexpr std::string_view kHarnessVersion = "fedsim-1.0";

struct DataSource {
  enum class Kind { kMhealth, kSynthetic };
  Kind kind = Kind::kSynthetic;
  std::string pattern;  // file glob for kMhealth
  size_t rows = 6000;
  size_t features = 23;
  size_t classes = 12;
  double separation = 6.0;
  bool keep_null_class = false;
};

struct ExperimentGrid {
  std::vector<size_t> client_counts = {3, 5, 10, 15, 30};
  size_t repetitions = 10;
  FederationConfig base;
  DataSource source;
  double test_fraction = 0.2;
  // false: every repetition reuses the base seed (for determinism checks).
  bool vary_seed_per_rep = true;
  bool baseline = true;
  // Only centralized baseline runs; client_counts is ignored.
  bool baseline_only = false;
  bool save_models = false;
  size_t jobs = 1;
  std::string output_dir;

  void validate() const;
};

// Seed of repetition `rep`; every other seed of that repetition derives
// from it.
uint64_t repetition_seed(const ExperimentGrid& grid, size_t rep);
uint64_t split_seed(uint64_t run_seed);
uint64_t partition_seed(uint64_t run_seed, size_t clients);

struct RunRow {
  enum class Kind { kBaseline, kFederated };
  Kind kind = Kind::kFederated;
  size_t clients = 0;  // 1 for the baseline
  size_t repetition = 0;
  uint64_t run_seed = 0;
  bool ok = false;
  std::string error;
  size_t rounds_run = 0;
  bool converged = false;
  MetricsReport metrics;
  Model model;
  std::vector<RoundRecord> history;
};

struct MetricStats {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single run
};

struct SummaryRow {
  RunRow::Kind kind = RunRow::Kind::kFederated;
  size_t clients = 0;
  size_t runs = 0;
  size_t excluded_count = 0;
  MetricStats accuracy, macro_precision, macro_recall, macro_f1;
};

struct GridResult {
  std::vector<RunRow> runs;
  std::vector<SummaryRow> summary;  // baseline first, then client counts
  size_t failed_runs() const;
};

// Resolves and ingests the configured source. Throws on any failure.
Dataset load_source(const DataSource& source, uint64_t seed);

GridResult run_grid(const ExperimentGrid& grid);

// Centralized model on all of `train` with cfg's hyperparameters.
MetricsReport run_baseline(const FederationConfig& cfg, const Dataset& train,
                           const Dataset& test);

std::vector<SummaryRow> summarize_runs(const std::vector<RunRow>& runs,
                                       const std::vector<size_t>& counts,
                                       bool with_baseline);

// round, weight_delta, accuracy, macro_precision, macro_recall, macro_f1
std::string history_csv(const std::vector<RoundRecord>& history);
std::string raw_csv(const GridResult& result);
std::string summary_csv(const GridResult& result);
std::string trend_csv(const GridResult& result);
std::string manifest_json(const ExperimentGrid& grid);
ExperimentGrid grid_from_manifest(const std::string& json);

// Writes raw.csv, summary.csv, trend.csv, manifest.json and history/.
void emit_report(const GridResult& result, const ExperimentGrid& grid,
                 const std::string& dir);

}  // namespace fedsim
