#include "fedsim/federation.hpp"

#include <exception>
#include <string>

#include "fedsim/error.hpp"
#include "fedsim/kernels.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {
namespace {

constexpr uint64_t kInitTag = 0x696e6974;    // "init"
constexpr uint64_t kTrainTag = 0x747261696e;  // "train"
constexpr uint64_t kPairTag = 0x7061697273;   // "pairs"

void check_clients(std::span<const ClientDataset> clients) {
  if (clients.empty()) throw Error(ErrorKind::kInvalidInput, "no clients");
  for (size_t i = 0; i < clients.size(); ++i) {
    if (clients[i].client_id != i) {
      throw Error(ErrorKind::kInvalidInput,
                  "client ids must be 0..T-1 in order; position " +
                      std::to_string(i) + " holds " +
                      std::to_string(clients[i].client_id));
    }
  }
}

Error tag_client(size_t client_id, const std::exception_ptr& failure) {
  try {
    std::rethrow_exception(failure);
  } catch (const Error& e) {
    return Error(e.kind(), "client " + std::to_string(client_id) + ": " +
                               e.what());
  } catch (const std::exception& e) {
    return Error(ErrorKind::kNumerical,
                 "client " + std::to_string(client_id) + ": " + e.what());
  }
}

std::vector<double> client_weights(std::span<const ClientDataset> clients) {
  std::vector<double> weights;
  for (const ClientDataset& c : clients) {
    weights.push_back(static_cast<double>(c.data.rows()));
  }
  return weights;
}

}  // namespace

void FederationConfig::validate() const {
  if (clients < 1) throw Error(ErrorKind::kInvalidInput, "clients must be >= 1");
  if (rounds < 1) throw Error(ErrorKind::kInvalidInput, "rounds must be >= 1");
  if (local_epochs < 1 || batch_size < 1) {
    throw Error(ErrorKind::kInvalidInput, "epochs and batch must be >= 1");
  }
  if (!(learning_rate > 0.0)) {
    throw Error(ErrorKind::kInvalidInput, "learning rate must be > 0");
  }
  if (!(convergence_tol >= 0.0)) {
    throw Error(ErrorKind::kInvalidInput, "convergence tolerance must be >= 0");
  }
  for (size_t h : hidden_layers) {
    if (h == 0) {
      throw Error(ErrorKind::kInvalidArchitecture, "hidden width must be > 0");
    }
  }
}

TrainOptions FederationConfig::train_options() const {
  TrainOptions options;
  options.epochs = local_epochs;
  options.batch_size = batch_size;
  options.optimizer.learning_rate = learning_rate;
  return options;
}

std::vector<size_t> FederationConfig::architecture(size_t features,
                                                   size_t classes) const {
  std::vector<size_t> sizes{features};
  sizes.insert(sizes.end(), hidden_layers.begin(), hidden_layers.end());
  sizes.push_back(classes);
  return sizes;
}

uint64_t client_round_seed(uint64_t seed, size_t round, size_t client_id) {
  return derive_seed({seed, kTrainTag, round, client_id});
}

Model initial_model(const FederationConfig& cfg, size_t features,
                    size_t classes) {
  return init_model(cfg.architecture(features, classes),
                    derive_seed({cfg.seed, kInitTag}));
}

Model merge_models(std::span<const Model> models) {
  return merge_models_weighted(models, {});
}

Model merge_models_weighted(std::span<const Model> models,
                            std::span<const double> weights) {
  if (models.empty()) throw Error(ErrorKind::kInvalidInput, "nothing to merge");
  if (!weights.empty() && weights.size() != models.size()) {
    throw Error(ErrorKind::kInvalidInput, "one weight per model required");
  }
  for (size_t i = 1; i < models.size(); ++i) {
    if (!same_architecture(models[0], models[i])) {
      throw Error(ErrorKind::kMerge,
                  "model " + std::to_string(i) + " has a different architecture");
    }
  }
  std::vector<std::vector<double>> flats;
  flats.reserve(models.size());
  for (const Model& m : models) flats.push_back(m.flatten());
  std::vector<std::span<const double>> views(flats.begin(), flats.end());

  std::vector<double> mean(flats.front().size());
  kernels::weighted_mean(views, weights, mean);
  Model merged = models[0];
  merged.assign_flat(mean);
  return merged;
}

bool has_converged(const Model& prev, const Model& next, double tol) {
  return max_abs_difference(prev, next) <= tol;
}

Model run_round(const Model& global, std::span<const ClientDataset> clients,
                const FederationConfig& cfg, size_t round_index) {
  check_clients(clients);
  const size_t t = clients.size();
  const TrainOptions options = cfg.train_options();
  const auto weights = client_weights(clients);
  double total_rows = 0.0;
  for (double w : weights) total_rows += w;

  std::vector<std::exception_ptr> failures(t);
  std::vector<Model> trained;
  std::vector<secagg::MaskedUpdate> updates;
  secagg::PairwiseSeeds seeds;
  // The round number doubles as the mask nonce; it starts at 1.
  const uint64_t nonce = round_index + 1;
  if (cfg.secure_agg) {
    seeds = secagg::PairwiseSeeds::deal(t, derive_seed({cfg.seed, kPairTag}));
    updates.resize(t);
  } else {
    trained.resize(t);
  }

  const auto count = static_cast<std::ptrdiff_t>(t);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      const ClientDataset& client = clients[i];
      Model local = train_local(
          global, client.data, options,
          client_round_seed(cfg.seed, round_index, client.client_id));
      if (cfg.secure_agg) {
        const double scale = cfg.weighted ? weights[i] / total_rows : 1.0;
        updates[i] = secagg::client_submit(local, client.client_id, seeds,
                                           nonce, cfg.frac_bits, scale);
      } else {
        trained[i] = std::move(local);
      }
    } catch (...) {
      failures[i] = std::current_exception();
    }
  }
  for (size_t i = 0; i < t; ++i) {
    if (failures[i]) throw tag_client(clients[i].client_id, failures[i]);
  }

  if (cfg.secure_agg) {
    const secagg::FixedPointVector sum = secagg::aggregate_masked(updates, t);
    const double divisor = cfg.weighted ? 1.0 : static_cast<double>(t);
    return secagg::decode_sum(sum, divisor, global.arch_id());
  }
  if (cfg.weighted) return merge_models_weighted(trained, weights);
  return merge_models(trained);
}

FederationResult run_federation(std::span<const ClientDataset> clients,
                                 const Dataset& test,
                                 const FederationConfig& cfg) {
  cfg.validate();
  check_clients(clients);
  if (clients.size() != cfg.clients) {
    throw Error(ErrorKind::kInvalidInput,
                "config names " + std::to_string(cfg.clients) +
                    " clients, data has " + std::to_string(clients.size()));
  }
  const Dataset& first = clients.front().data;
  FederationResult result;
  result.model = initial_model(cfg, first.features(), first.class_count);

  for (size_t round = 0; round < cfg.rounds; ++round) {
    Model next = run_round(result.model, clients, cfg, round);
    RoundRecord record;
    record.round_index = round;
    record.weight_delta = max_abs_difference(result.model, next);
    record.metrics = evaluate(next, test);
    record.global_model = next;
    result.history.push_back(std::move(record));
    result.model = std::move(next);
    if (result.history.back().weight_delta <= cfg.convergence_tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

Model train_centralized(const Dataset& train, const FederationConfig& cfg) {
  cfg.validate();
  const Model start = initial_model(cfg, train.features(), train.class_count);
  return train_local(start, train, cfg.train_options(),
                     client_round_seed(cfg.seed, 0, 0));
}

}  // namespace fedsim
