#pragma once

// Centralized model merging: broadcast a global model, let every client train
// it locally, replace the global model by the layer-wise mean of the client
// models, and repeat until the weights stop moving or the round cap is hit.

#include <cstdint>
#include <span>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/nn.hpp"
#include "fedsim/secagg.hpp"

namespace fedsim {

struct FederationConfig {
  size_t clients = 1;
  size_t rounds = 20;
  size_t local_epochs = 50;
  size_t batch_size = 32;
  double learning_rate = 0.01;
  double convergence_tol = 1e-4;
  uint64_t seed = 42;
  bool secure_agg = true;
  // Dataset-size-weighted mean instead of the plain mean.
  bool weighted = false;
  uint32_t frac_bits = secagg::kDefaultFracBits;
  std::vector<size_t> hidden_layers = {64, 32};

  void validate() const;
  TrainOptions train_options() const;
  // {features, hidden..., classes}
  std::vector<size_t> architecture(size_t features, size_t classes) const;
};

struct RoundRecord {
  size_t round_index = 0;
  Model global_model;
  MetricsReport metrics;
  double weight_delta = 0.0;  // max |w_new - w_prev|
};

struct FederationResult {
  Model model;
  std::vector<RoundRecord> history;
  bool converged = false;
};

// Seed for client `client_id`'s local training in round `round`.
uint64_t client_round_seed(uint64_t seed, size_t round, size_t client_id);

// The randomly initialized global model every federation starts from.
Model initial_model(const FederationConfig& cfg, size_t features,
                    size_t classes);

// Entry-wise arithmetic mean, accumulated in list order.
Model merge_models(std::span<const Model> models);
Model merge_models_weighted(std::span<const Model> models,
                            std::span<const double> weights);

// max |prev - next| <= tol
bool has_converged(const Model& prev, const Model& next, double tol);

// One broadcast/train/merge cycle. Clients train concurrently; under
// secure aggregation only their masked updates reach the merge.
// `round_index` is 0-based.
Model run_round(const Model& global, std::span<const ClientDataset> clients,
                const FederationConfig& cfg, size_t round_index);

FederationResult run_federation(std::span<const ClientDataset> clients,
                                const Dataset& test,
                                const FederationConfig& cfg);

// Same initial model and hyperparameters as a one-client, one-round
// federation, trained on all of `train`.
Model train_centralized(const Dataset& train, const FederationConfig& cfg);

}  // namespace fedsim
