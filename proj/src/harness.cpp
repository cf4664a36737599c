#include "fedsim/harness.hpp"

#include <omp.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedsim/error.hpp"
#include "fedsim/rng.hpp"
#include "json.hpp"

namespace fedsim {
namespace {

using json = nlohmann::ordered_json;

constexpr uint64_t kRepTag = 0x726570;        // "rep"
constexpr uint64_t kSplitTag = 0x73706c6974;  // "split"
constexpr uint64_t kPartTag = 0x70617274;     // "part"
constexpr uint64_t kDataTag = 0x64617461;     // "data"

constexpr std::string_view kSeedDerivation =
    "mix(z) = splitmix64 finalizer; derive(a, b, ...) folds h = mix(h ^ part) "
    "from h = 0x6a09e667f3bcc909; run_seed = derive(seed, 'rep', r) (or seed "
    "when vary_seed_per_rep is false); split = derive(run_seed, 'split'); "
    "partition = derive(run_seed, 'part', t); init = derive(run_seed, "
    "'init'); client training = derive(run_seed, 'train', round, client); "
    "pair keys = BLAKE2b(derive(run_seed, 'pairs'), i, j); synthetic data = "
    "derive(seed, 'data'). Tags are ASCII packed big-endian into integers.";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string_view kind_name(RunRow::Kind kind) {
  return kind == RunRow::Kind::kBaseline ? "baseline" : "federated";
}

MetricStats stats(const std::vector<double>& values) {
  MetricStats s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
}

struct Job {
  RunRow::Kind kind;
  size_t clients;
  size_t rep;
};

struct PreparedRep {
  uint64_t run_seed;
  Dataset train;
  Dataset test;
};

RunRow execute(const Job& job, const PreparedRep& prep,
               const ExperimentGrid& grid) {
  RunRow row;
  row.kind = job.kind;
  row.clients = job.clients;
  row.repetition = job.rep;
  row.run_seed = prep.run_seed;
  FederationConfig cfg = grid.base;
  cfg.seed = prep.run_seed;
  cfg.clients = job.clients;
  try {
    if (job.kind == RunRow::Kind::kBaseline) {
      row.model = train_centralized(prep.train, cfg);
      row.metrics = evaluate(row.model, prep.test);
      row.rounds_run = 1;
    } else {
      const auto clients = partition_clients(
          prep.train, job.clients, partition_seed(prep.run_seed, job.clients));
      FederationResult fed = run_federation(clients, prep.test, cfg);
      row.metrics = fed.history.back().metrics;
      row.rounds_run = fed.history.size();
      row.converged = fed.converged;
      row.model = std::move(fed.model);
      row.history = std::move(fed.history);
    }
    row.ok = true;
  } catch (const std::exception& e) {
    row.ok = false;
    row.error = e.what();
  }
  return row;
}

json source_json(const DataSource& s) {
  json j;
  j["kind"] = s.kind == DataSource::Kind::kMhealth ? "mhealth" : "synthetic";
  j["pattern"] = s.pattern;
  j["rows"] = s.rows;
  j["features"] = s.features;
  j["classes"] = s.classes;
  j["separation"] = s.separation;
  j["keep_null_class"] = s.keep_null_class;
  return j;
}

}  // namespace

void ExperimentGrid::validate() const {
  if (client_counts.empty() && !baseline_only) {
    throw Error(ErrorKind::kInvalidInput, "grid has no client counts");
  }
  for (size_t t : client_counts) {
    if (t < 1) throw Error(ErrorKind::kInvalidInput, "client count must be >= 1");
  }
  if (repetitions < 1) {
    throw Error(ErrorKind::kInvalidInput, "repetitions must be >= 1");
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorKind::kInvalidInput, "test fraction must be in (0, 1)");
  }
  FederationConfig probe = base;
  probe.clients = 1;
  probe.validate();
}

uint64_t repetition_seed(const ExperimentGrid& grid, size_t rep) {
  if (!grid.vary_seed_per_rep) return grid.base.seed;
  return derive_seed({grid.base.seed, kRepTag, rep});
}

uint64_t split_seed(uint64_t run_seed) {
  return derive_seed({run_seed, kSplitTag});
}

uint64_t partition_seed(uint64_t run_seed, size_t clients) {
  return derive_seed({run_seed, kPartTag, clients});
}

size_t GridResult::failed_runs() const {
  size_t n = 0;
  for (const RunRow& r : runs) n += r.ok ? 0 : 1;
  return n;
}

Dataset load_source(const DataSource& source, uint64_t seed) {
  if (source.kind == DataSource::Kind::kSynthetic) {
    return make_synthetic(source.rows, source.features, source.classes,
                          source.separation, derive_seed({seed, kDataTag}));
  }
  MhealthOptions options;
  options.keep_null_class = source.keep_null_class;
  return load_mhealth(expand_glob(source.pattern), options);
}

MetricsReport run_baseline(const FederationConfig& cfg, const Dataset& train,
                           const Dataset& test) {
  return evaluate(train_centralized(train, cfg), test);
}

GridResult run_grid(const ExperimentGrid& grid) {
  grid.validate();
  const Dataset data = load_source(grid.source, grid.base.seed);

  std::vector<PreparedRep> reps;
  reps.reserve(grid.repetitions);
  for (size_t r = 0; r < grid.repetitions; ++r) {
    const uint64_t run_seed = repetition_seed(grid, r);
    TrainTestSplit split =
        split_train_test(data, grid.test_fraction, split_seed(run_seed));
    // Scaling is fit on the whole training side before it is partitioned.
    const StandardizationParams params = standardize_fit(split.train);
    reps.push_back({run_seed, standardize_apply(params, std::move(split.train)),
                    standardize_apply(params, std::move(split.test))});
  }

  std::vector<Job> jobs;
  for (size_t r = 0; r < grid.repetitions; ++r) {
    if (grid.baseline || grid.baseline_only) {
      jobs.push_back({RunRow::Kind::kBaseline, 1, r});
    }
    if (grid.baseline_only) continue;
    for (size_t t : grid.client_counts) {
      jobs.push_back({RunRow::Kind::kFederated, t, r});
    }
  }

  GridResult result;
  result.runs.resize(jobs.size());
  const auto count = static_cast<std::ptrdiff_t>(jobs.size());
  const int threads = static_cast<int>(std::max<size_t>(grid.jobs, 1));
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    result.runs[i] = execute(jobs[i], reps[jobs[i].rep], grid);
  }
  result.summary = summarize_runs(
      result.runs,
      grid.baseline_only ? std::vector<size_t>{} : grid.client_counts,
      grid.baseline || grid.baseline_only);
  return result;
}

std::vector<SummaryRow> summarize_runs(const std::vector<RunRow>& runs,
                                       const std::vector<size_t>& counts,
                                       bool with_baseline) {
  auto summarize_group = [&](RunRow::Kind kind, size_t clients) {
    SummaryRow row;
    row.kind = kind;
    row.clients = clients;
    std::vector<double> acc, prec, rec, f1s;
    for (const RunRow& r : runs) {
      if (r.kind != kind || (kind == RunRow::Kind::kFederated &&
                             r.clients != clients)) {
        continue;
      }
      ++row.runs;
      if (!r.ok) {
        ++row.excluded_count;
        continue;
      }
      acc.push_back(r.metrics.accuracy);
      prec.push_back(r.metrics.macro_precision);
      rec.push_back(r.metrics.macro_recall);
      f1s.push_back(r.metrics.macro_f1);
    }
    row.accuracy = stats(acc);
    row.macro_precision = stats(prec);
    row.macro_recall = stats(rec);
    row.macro_f1 = stats(f1s);
    return row;
  };
  std::vector<SummaryRow> summary;
  if (with_baseline) summary.push_back(summarize_group(RunRow::Kind::kBaseline, 1));
  for (size_t t : counts) {
    summary.push_back(summarize_group(RunRow::Kind::kFederated, t));
  }
  return summary;
}

std::string history_csv(const std::vector<RoundRecord>& history) {
  std::string out =
      "round,weight_delta,accuracy,macro_precision,macro_recall,macro_f1\n";
  for (const RoundRecord& r : history) {
    out += std::to_string(r.round_index + 1) + "," + fmt(r.weight_delta) +
           "," + fmt(r.metrics.accuracy) + "," +
           fmt(r.metrics.macro_precision) + "," + fmt(r.metrics.macro_recall) +
           "," + fmt(r.metrics.macro_f1) + "\n";
  }
  return out;
}

std::string raw_csv(const GridResult& result) {
  std::string out =
      "kind,clients,repetition,run_seed,status,rounds_run,converged,"
      "accuracy,macro_precision,macro_recall,macro_f1,error\n";
  for (const RunRow& r : result.runs) {
    std::string error = r.error;
    for (char& c : error) {
      if (c == ',' || c == '\n' || c == '"') c = ' ';
    }
    out += std::string(kind_name(r.kind)) + "," + std::to_string(r.clients) +
           "," + std::to_string(r.repetition) + "," +
           std::to_string(r.run_seed) + "," + (r.ok ? "ok" : "failed") + "," +
           std::to_string(r.rounds_run) + "," + (r.converged ? "1" : "0") +
           "," + fmt(r.metrics.accuracy) + "," +
           fmt(r.metrics.macro_precision) + "," + fmt(r.metrics.macro_recall) +
           "," + fmt(r.metrics.macro_f1) + "," + error + "\n";
  }
  return out;
}

std::string summary_csv(const GridResult& result) {
  std::string out =
      "kind,clients,runs,excluded_count,accuracy_mean,accuracy_std,"
      "macro_precision_mean,macro_precision_std,macro_recall_mean,"
      "macro_recall_std,macro_f1_mean,macro_f1_std\n";
  for (const SummaryRow& s : result.summary) {
    out += std::string(kind_name(s.kind)) + "," + std::to_string(s.clients) +
           "," + std::to_string(s.runs) + "," +
           std::to_string(s.excluded_count) + "," + fmt(s.accuracy.mean) +
           "," + fmt(s.accuracy.std) + "," + fmt(s.macro_precision.mean) +
           "," + fmt(s.macro_precision.std) + "," + fmt(s.macro_recall.mean) +
           "," + fmt(s.macro_recall.std) + "," + fmt(s.macro_f1.mean) + "," +
           fmt(s.macro_f1.std) + "\n";
  }
  return out;
}

std::string trend_csv(const GridResult& result) {
  const SummaryRow* baseline = nullptr;
  for (const SummaryRow& s : result.summary) {
    if (s.kind == RunRow::Kind::kBaseline) baseline = &s;
  }
  std::string out =
      "clients,accuracy,macro_precision,macro_recall,macro_f1,"
      "baseline_accuracy\n";
  for (const SummaryRow& s : result.summary) {
    if (s.kind != RunRow::Kind::kFederated) continue;
    out += std::to_string(s.clients) + "," + fmt(s.accuracy.mean) + "," +
           fmt(s.macro_precision.mean) + "," + fmt(s.macro_recall.mean) + "," +
           fmt(s.macro_f1.mean) + "," +
           (baseline ? fmt(baseline->accuracy.mean) : std::string()) + "\n";
  }
  return out;
}

std::string manifest_json(const ExperimentGrid& grid) {
  const FederationConfig& b = grid.base;
  json j;
  j["version"] = kHarnessVersion;
  j["seed"] = b.seed;
  j["seed_derivation"] = kSeedDerivation;
  j["mask_prg"] = secagg::prg_name(secagg::PrgId::kChaCha20);
  j["source"] = source_json(grid.source);
  j["grid"] = {{"client_counts", grid.client_counts},
               {"repetitions", grid.repetitions},
               {"test_fraction", grid.test_fraction},
               {"vary_seed_per_rep", grid.vary_seed_per_rep},
               {"baseline", grid.baseline},
               {"baseline_only", grid.baseline_only},
               {"save_models", grid.save_models},
               {"jobs", grid.jobs}};
  j["federation"] = {{"rounds", b.rounds},
                     {"local_epochs", b.local_epochs},
                     {"batch_size", b.batch_size},
                     {"learning_rate", b.learning_rate},
                     {"rmsprop_rho", RmsPropParams{}.rho},
                     {"rmsprop_epsilon", RmsPropParams{}.epsilon},
                     {"convergence_tol", b.convergence_tol},
                     {"secure_agg", b.secure_agg},
                     {"weighted", b.weighted},
                     {"frac_bits", b.frac_bits},
                     {"hidden_layers", b.hidden_layers}};
  return j.dump(2) + "\n";
}

ExperimentGrid grid_from_manifest(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("manifest: ") + e.what());
  }
  try {
    if (j.at("version").get<std::string>() != kHarnessVersion) {
      throw Error(ErrorKind::kFormat, "manifest was written by " +
                                          j.at("version").get<std::string>());
    }
    ExperimentGrid grid;
    grid.base.seed = j.at("seed").get<uint64_t>();
    const json& s = j.at("source");
    grid.source.kind = s.at("kind").get<std::string>() == "mhealth"
                           ? DataSource::Kind::kMhealth
                           : DataSource::Kind::kSynthetic;
    grid.source.pattern = s.at("pattern").get<std::string>();
    grid.source.rows = s.at("rows").get<size_t>();
    grid.source.features = s.at("features").get<size_t>();
    grid.source.classes = s.at("classes").get<size_t>();
    grid.source.separation = s.at("separation").get<double>();
    grid.source.keep_null_class = s.at("keep_null_class").get<bool>();
    const json& g = j.at("grid");
    grid.client_counts = g.at("client_counts").get<std::vector<size_t>>();
    grid.repetitions = g.at("repetitions").get<size_t>();
    grid.test_fraction = g.at("test_fraction").get<double>();
    grid.vary_seed_per_rep = g.at("vary_seed_per_rep").get<bool>();
    grid.baseline = g.at("baseline").get<bool>();
    grid.baseline_only = g.at("baseline_only").get<bool>();
    grid.save_models = g.at("save_models").get<bool>();
    grid.jobs = g.at("jobs").get<size_t>();
    const json& f = j.at("federation");
    grid.base.rounds = f.at("rounds").get<size_t>();
    grid.base.local_epochs = f.at("local_epochs").get<size_t>();
    grid.base.batch_size = f.at("batch_size").get<size_t>();
    grid.base.learning_rate = f.at("learning_rate").get<double>();
    grid.base.convergence_tol = f.at("convergence_tol").get<double>();
    grid.base.secure_agg = f.at("secure_agg").get<bool>();
    grid.base.weighted = f.at("weighted").get<bool>();
    grid.base.frac_bits = f.at("frac_bits").get<uint32_t>();
    grid.base.hidden_layers = f.at("hidden_layers").get<std::vector<size_t>>();
    return grid;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("manifest: ") + e.what());
  }
}

void emit_report(const GridResult& result, const ExperimentGrid& grid,
                 const std::string& dir) {
  if (result.summary.empty() || result.runs.empty()) {
    throw Error(ErrorKind::kInvalidInput, "refusing to write an empty report");
  }
  namespace fs = std::filesystem;
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "history", ec);
  if (ec) {
    throw Error(ErrorKind::kIo,
                "cannot create " + (root / "history").string() + ": " +
                    ec.message());
  }
  write_file(root / "raw.csv", raw_csv(result));
  write_file(root / "summary.csv", summary_csv(result));
  write_file(root / "trend.csv", trend_csv(result));
  write_file(root / "manifest.json", manifest_json(grid));
  for (const RunRow& r : result.runs) {
    if (r.kind != RunRow::Kind::kFederated || !r.ok) continue;
    write_file(root / "history" /
                   ("t" + std::to_string(r.clients) + "_r" +
                    std::to_string(r.repetition) + ".csv"),
               history_csv(r.history));
  }
  if (grid.save_models) {
    fs::create_directories(root / "models", ec);
    if (ec) throw Error(ErrorKind::kIo, "cannot create models directory");
    for (const RunRow& r : result.runs) {
      if (!r.ok) continue;
      const std::string name = std::string(kind_name(r.kind)) + "_t" +
                               std::to_string(r.clients) + "_r" +
                               std::to_string(r.repetition) + ".fsm";
      save_model(r.model, (root / "models" / name).string());
    }
  }
}

}  // namespace fedsim
