// fedsim: federated client-count experiments from the command line.
//
//   fedsim run      --synthetic 6000,23,12,6 --clients 3,5,10 --out results/
//   fedsim baseline --data 'MHEALTHDATASET/*.log' --out baseline/
//   fedsim replay   --manifest results/manifest.json --out rerun/
//
// Exit status: 0 when every run succeeded, 2 when some runs failed (they are
// recorded as failed rows), 1 when the experiment could not start.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedsim/error.hpp"
#include "fedsim/harness.hpp"

namespace {

struct CliOptions {
  std::string data_glob;
  std::string synthetic;
  std::string clients = "3,5,10,15,30";
  std::string hidden = "64,32";
  std::string out;
  std::string manifest;
  size_t reps = 10;
  size_t jobs = 1;
  bool no_secure_agg = false;
  bool paper_scale = false;
  bool keep_null = false;
  bool same_seed_reps = false;
  bool no_baseline = false;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

std::vector<size_t> parse_sizes(const std::string& text, const char* what) {
  std::vector<size_t> values;
  for (const std::string& item : split_list(text)) {
    try {
      size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      values.push_back(static_cast<size_t>(v));
    } catch (const std::exception&) {
      throw fedsim::Error(fedsim::ErrorKind::kInvalidInput,
                          std::string(what) + ": '" + item +
                              "' is not a positive integer");
    }
  }
  return values;
}

fedsim::DataSource parse_source(const CliOptions& cli) {
  fedsim::DataSource source;
  if (!cli.data_glob.empty() == !cli.synthetic.empty()) {
    throw fedsim::Error(fedsim::ErrorKind::kInvalidInput,
                        "give exactly one of --data or --synthetic");
  }
  if (!cli.data_glob.empty()) {
    source.kind = fedsim::DataSource::Kind::kMhealth;
    source.pattern = cli.data_glob;
    source.keep_null_class = cli.keep_null;
    return source;
  }
  const auto parts = split_list(cli.synthetic);
  if (parts.size() != 4) {
    throw fedsim::Error(fedsim::ErrorKind::kInvalidInput,
                        "--synthetic expects m,n,classes,separation");
  }
  const auto sizes = parse_sizes(parts[0] + "," + parts[1] + "," + parts[2],
                                 "--synthetic");
  source.kind = fedsim::DataSource::Kind::kSynthetic;
  source.rows = sizes[0];
  source.features = sizes[1];
  source.classes = sizes[2];
  try {
    source.separation = std::stod(parts[3]);
  } catch (const std::exception&) {
    throw fedsim::Error(fedsim::ErrorKind::kInvalidInput,
                        "--synthetic separation '" + parts[3] +
                            "' is not a number");
  }
  return source;
}

void add_experiment_options(CLI::App& cmd, CliOptions& cli,
                            fedsim::ExperimentGrid& grid) {
  fedsim::FederationConfig& base = grid.base;
  cmd.add_option("--data", cli.data_glob, "Glob of MHEALTH subject logs");
  cmd.add_option("--synthetic", cli.synthetic,
                 "Gaussian blobs as m,n,classes,separation");
  cmd.add_flag("--keep-null", cli.keep_null,
               "Keep MHEALTH label-0 rows as an extra class");
  cmd.add_option("--reps", cli.reps, "Repetitions per client count")
      ->capture_default_str();
  cmd.add_option("--rounds", base.rounds, "Maximum federation rounds")
      ->capture_default_str();
  cmd.add_option("--epochs", base.local_epochs, "Local epochs per round")
      ->capture_default_str();
  cmd.add_option("--batch", base.batch_size, "Mini-batch size")
      ->capture_default_str();
  cmd.add_option("--lr", base.learning_rate, "RMSprop learning rate")
      ->capture_default_str();
  cmd.add_option("--tol", base.convergence_tol,
                 "Stop when no weight moves more than this")
      ->capture_default_str();
  cmd.add_option("--frac-bits", base.frac_bits,
                 "Fixed-point fraction bits for secure aggregation")
      ->capture_default_str();
  cmd.add_option("--hidden", cli.hidden, "Hidden layer widths")
      ->capture_default_str();
  cmd.add_option("--test-fraction", grid.test_fraction,
                 "Share of each class held out for testing")
      ->capture_default_str();
  cmd.add_option("--seed", base.seed, "Base seed")->capture_default_str();
  cmd.add_option("--jobs", cli.jobs, "Concurrent runs")->capture_default_str();
  cmd.add_option("--out", cli.out, "Output directory")->required();
  cmd.add_flag("--no-secure-agg", cli.no_secure_agg,
               "Merge plaintext client models");
  cmd.add_flag("--weighted", base.weighted,
               "Weight the merge by client dataset size");
  cmd.add_flag("--paper-scale", cli.paper_scale,
               "30 repetitions instead of --reps");
  cmd.add_flag("--same-seed-reps", cli.same_seed_reps,
               "Reuse the base seed for every repetition");
  cmd.add_flag("--save-models", grid.save_models,
               "Write every final model to OUT/models");
}

void finish_grid(const CliOptions& cli, fedsim::ExperimentGrid& grid) {
  grid.source = parse_source(cli);
  grid.repetitions = cli.paper_scale ? 30 : cli.reps;
  grid.jobs = cli.jobs;
  grid.base.secure_agg = !cli.no_secure_agg;
  grid.base.hidden_layers = parse_sizes(cli.hidden, "--hidden");
  grid.vary_seed_per_rep = !cli.same_seed_reps;
  grid.output_dir = cli.out;
}

void print_summary(const fedsim::GridResult& result) {
  for (const fedsim::SummaryRow& s : result.summary) {
    const bool base = s.kind == fedsim::RunRow::Kind::kBaseline;
    std::printf("%-9s t=%-3zu runs=%-3zu excluded=%zu  acc=%.4f±%.4f  "
                "f1=%.4f±%.4f\n",
                base ? "baseline" : "federated", s.clients, s.runs,
                s.excluded_count, s.accuracy.mean, s.accuracy.std,
                s.macro_f1.mean, s.macro_f1.std);
  }
}

int execute(const fedsim::ExperimentGrid& grid) {
  const fedsim::GridResult result = fedsim::run_grid(grid);
  fedsim::emit_report(result, grid, grid.output_dir);
  print_summary(result);
  const size_t failed = result.failed_runs();
  if (failed > 0) {
    std::fprintf(stderr, "%zu run(s) failed; see %s/raw.csv\n", failed,
                 grid.output_dir.c_str());
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with secure aggregation"};
  app.require_subcommand(1);

  CliOptions run_cli;
  fedsim::ExperimentGrid run_grid;
  CLI::App* run = app.add_subcommand("run", "Sweep client counts");
  add_experiment_options(*run, run_cli, run_grid);
  run->add_option("--clients", run_cli.clients, "Client counts to sweep")
      ->capture_default_str();
  run->add_flag("--no-baseline", run_cli.no_baseline,
                "Skip the centralized baseline");

  CliOptions base_cli;
  fedsim::ExperimentGrid base_grid;
  CLI::App* baseline =
      app.add_subcommand("baseline", "Centralized training only");
  add_experiment_options(*baseline, base_cli, base_grid);

  std::string manifest_path, replay_out;
  size_t replay_jobs = 0;
  CLI::App* replay =
      app.add_subcommand("replay", "Re-run an experiment from its manifest");
  replay->add_option("--manifest", manifest_path, "manifest.json to replay")
      ->required();
  replay->add_option("--out", replay_out, "Output directory")->required();
  replay->add_option("--jobs", replay_jobs, "Override concurrent runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      finish_grid(run_cli, run_grid);
      run_grid.client_counts = parse_sizes(run_cli.clients, "--clients");
      run_grid.baseline = !run_cli.no_baseline;
      return execute(run_grid);
    }
    if (*baseline) {
      finish_grid(base_cli, base_grid);
      base_grid.baseline_only = true;
      return execute(base_grid);
    }
    std::ifstream in(manifest_path);
    if (!in) {
      throw fedsim::Error(fedsim::ErrorKind::kIo, "cannot read " + manifest_path);
    }
    std::stringstream text;
    text << in.rdbuf();
    fedsim::ExperimentGrid grid = fedsim::grid_from_manifest(text.str());
    grid.output_dir = replay_out;
    if (replay_jobs > 0) grid.jobs = replay_jobs;
    return execute(grid);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fedsim: %s\n", e.what());
    return 1;
  }
}
