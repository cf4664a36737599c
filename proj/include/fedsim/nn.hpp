#pragma once

// Dense feed-forward classifier: ReLU hidden layers, softmax output, mean
// categorical cross-entropy, RMSprop.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/matrix.hpp"

namespace fedsim {

enum class Activation : uint8_t { kReLU, kSoftmax };

struct DenseLayer {
  Matrix weights;             // outputs x inputs
  std::vector<double> bias;   // outputs
  Activation activation = Activation::kReLU;

  size_t inputs() const { return weights.cols(); }
  size_t outputs() const { return weights.rows(); }
  size_t parameter_count() const { return weights.size() + bias.size(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

class Model {
 public:
  Model() = default;
  explicit Model(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {}

  std::span<DenseLayer> layers() { return layers_; }
  std::span<const DenseLayer> layers() const { return layers_; }

  // Architecture fingerprint: input width followed by each layer's width.
  // Activations are fixed by position (ReLU..., Softmax), so the widths
  // identify the architecture completely.
  std::vector<size_t> arch_id() const;

  size_t input_width() const;
  size_t class_count() const;
  size_t parameter_count() const;

  // Canonical parameter order: for each layer, weights row-major, then bias.
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> values);

  // Same architecture, every parameter zero.
  Model zeros_like() const;

  // Checks dimension chaining, activation placement and finiteness.
  void validate() const;

  friend bool operator==(const Model&, const Model&) = default;

 private:
  std::vector<DenseLayer> layers_;
};

// Gradients have exactly the model's shape.
using Gradients = Model;

bool same_architecture(const Model& a, const Model& b);

// Largest |a_i - b_i| over all parameters. Throws kMerge on architecture
// mismatch.
double max_abs_difference(const Model& a, const Model& b);

struct RmsPropParams {
  double learning_rate = 0.01;
  double rho = 0.9;
  double epsilon = 1e-7;
};

struct OptimizerState {
  Model mean_square;  // running mean of squared gradients
  RmsPropParams params;

  static OptimizerState fresh(const Model& model, RmsPropParams params = {});
};

struct Batch {
  Matrix x;
  std::vector<Label> y;
};

// Glorot-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases.
// `layer_sizes` = {inputs, hidden..., classes}.
Model init_model(std::span<const size_t> layer_sizes, uint64_t seed);

// Row-wise class probabilities.
Matrix forward(const Model& model, const Matrix& x);

// Mean over rows of -log(max(p_true, 1e-12)).
double loss(const Matrix& probs, std::span<const Label> labels);

Gradients backward(const Model& model, const Batch& batch);

// One RMSprop update in place. Nothing is modified if any gradient is
// non-finite (kNumerical is thrown instead).
void rmsprop_step(Model& model, const Gradients& grads, OptimizerState& state);

struct TrainOptions {
  size_t epochs = 50;
  size_t batch_size = 32;
  RmsPropParams optimizer;
  // Called after every update with the 1-based step count and batch loss.
  std::function<void(size_t, double)> on_step;
};

// `epochs` passes of shuffled mini-batch RMSprop starting from `model`, with a
// fresh optimizer state. Deterministic in (model, data, options, seed).
Model train_local(const Model& model, const Dataset& data,
                  const TrainOptions& options, uint64_t seed);

size_t predict_class(std::span<const double> probs);

// Binary model record; byte-stable for equal weights.
//   "FSIMMODL" | u32 version | u32 layer_count | (layer_count + 1) x u32 sizes
//   | per layer: f64 weights (row-major), f64 bias
// All integers and doubles little-endian.
std::string serialize_model(const Model& model);
Model deserialize_model(std::string_view bytes);
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace fedsim
