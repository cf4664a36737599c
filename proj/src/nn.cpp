#include "fedsim/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <sstream>

#include "bytes.hpp"
#include "fedsim/error.hpp"
#include "fedsim/kernels.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {
namespace {

constexpr std::string_view kModelMagic = "FSIMMODL";
constexpr uint32_t kModelVersion = 1;
constexpr double kProbFloor = 1e-12;

void softmax_rows(Matrix& z) {
  for (size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    const double peak = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double& v : row) {
      v = std::exp(v - peak);
      total += v;
    }
    for (double& v : row) v /= total;
  }
}

void relu_inplace(Matrix& z) {
  for (double& v : z.values()) v = v > 0.0 ? v : 0.0;
}

// Inputs and post-activation outputs of every layer: activations[0] is the
// input batch, activations.back() the class probabilities.
struct Trace {
  std::vector<Matrix> activations;
};

Trace run_forward(const Model& model, const Matrix& x) {
  if (model.layers().empty()) {
    throw Error(ErrorKind::kInvalidArchitecture, "model has no layers");
  }
  if (x.cols() != model.input_width()) {
    throw Error(ErrorKind::kShape,
                "input has " + std::to_string(x.cols()) +
                    " columns, model expects " +
                    std::to_string(model.input_width()));
  }
  Trace trace;
  trace.activations.reserve(model.layers().size() + 1);
  trace.activations.push_back(x);
  for (const DenseLayer& layer : model.layers()) {
    Matrix z(x.rows(), layer.outputs());
    kernels::affine_forward(trace.activations.back(), layer.weights,
                            layer.bias, z);
    if (layer.activation == Activation::kSoftmax) {
      softmax_rows(z);
    } else {
      relu_inplace(z);
    }
    trace.activations.push_back(std::move(z));
  }
  return trace;
}

void check_labels(std::span<const Label> labels, size_t classes) {
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw Error(ErrorKind::kInvalidLabel,
                  "label " + std::to_string(labels[i]) + " at row " +
                      std::to_string(i) + " not below " +
                      std::to_string(classes));
    }
  }
}

void check_batch(const Model& model, const Batch& batch) {
  if (batch.x.rows() == 0) throw Error(ErrorKind::kShape, "empty batch");
  if (batch.y.size() != batch.x.rows()) {
    throw Error(ErrorKind::kShape, "batch has " +
                                       std::to_string(batch.x.rows()) +
                                       " rows but " +
                                       std::to_string(batch.y.size()) +
                                       " labels");
  }
  if (batch.x.cols() != model.input_width()) {
    throw Error(ErrorKind::kShape, "batch width does not match model input");
  }
  check_labels(batch.y, model.class_count());
}

struct GradientsAndLoss {
  Gradients grads;
  double loss;
};

GradientsAndLoss backward_impl(const Model& model, const Batch& batch) {
  check_batch(model, batch);
  Trace trace = run_forward(model, batch.x);
  const auto layers = model.layers();
  const size_t rows = batch.x.rows();

  const double batch_loss = loss(trace.activations.back(), batch.y);

  // Softmax + cross-entropy: dL/dz = (p - onehot) / rows.
  Matrix dz = std::move(trace.activations.back());
  const double inv_rows = 1.0 / static_cast<double>(rows);
  for (size_t r = 0; r < rows; ++r) {
    auto row = dz.row(r);
    row[batch.y[r]] -= 1.0;
    for (double& v : row) v *= inv_rows;
  }

  Gradients grads = model.zeros_like();
  auto grad_layers = grads.layers();
  for (size_t l = layers.size(); l-- > 0;) {
    const Matrix& input = trace.activations[l];
    kernels::weight_gradients(dz, input, grad_layers[l].weights,
                              grad_layers[l].bias);
    if (l == 0) break;
    Matrix da(rows, layers[l].inputs());
    kernels::input_gradients(dz, layers[l].weights, da);
    // ReLU derivative, taken as 0 at the kink.
    auto dav = da.values();
    const auto act = input.values();
    for (size_t i = 0; i < dav.size(); ++i) {
      if (act[i] <= 0.0) dav[i] = 0.0;
    }
    dz = std::move(da);
  }
  return {std::move(grads), batch_loss};
}

void check_finite(const Model& model, std::string_view what) {
  size_t index = 0;
  for (const DenseLayer& layer : model.layers()) {
    for (double v : layer.weights.values()) {
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::kNumerical,
                    std::string(what) + " parameter " +
                        std::to_string(index) + " is not finite");
      }
      ++index;
    }
    for (double v : layer.bias) {
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::kNumerical,
                    std::string(what) + " parameter " +
                        std::to_string(index) + " is not finite");
      }
      ++index;
    }
  }
}

}  // namespace

std::vector<size_t> Model::arch_id() const {
  std::vector<size_t> id;
  if (layers_.empty()) return id;
  id.push_back(layers_.front().inputs());
  for (const DenseLayer& layer : layers_) id.push_back(layer.outputs());
  return id;
}

size_t Model::input_width() const {
  return layers_.empty() ? 0 : layers_.front().inputs();
}

size_t Model::class_count() const {
  return layers_.empty() ? 0 : layers_.back().outputs();
}

size_t Model::parameter_count() const {
  size_t n = 0;
  for (const DenseLayer& layer : layers_) n += layer.parameter_count();
  return n;
}

std::vector<double> Model::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const DenseLayer& layer : layers_) {
    const auto w = layer.weights.values();
    flat.insert(flat.end(), w.begin(), w.end());
    flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
  }
  return flat;
}

void Model::assign_flat(std::span<const double> values) {
  if (values.size() != parameter_count()) {
    throw Error(ErrorKind::kShape,
                "flat vector has " + std::to_string(values.size()) +
                    " entries, model has " +
                    std::to_string(parameter_count()));
  }
  size_t pos = 0;
  for (DenseLayer& layer : layers_) {
    auto w = layer.weights.values();
    std::copy_n(values.begin() + pos, w.size(), w.begin());
    pos += w.size();
    std::copy_n(values.begin() + pos, layer.bias.size(), layer.bias.begin());
    pos += layer.bias.size();
  }
}

Model Model::zeros_like() const {
  std::vector<DenseLayer> layers;
  layers.reserve(layers_.size());
  for (const DenseLayer& layer : layers_) {
    layers.push_back({Matrix(layer.outputs(), layer.inputs()),
                      std::vector<double>(layer.outputs(), 0.0),
                      layer.activation});
  }
  return Model(std::move(layers));
}

void Model::validate() const {
  if (layers_.empty()) {
    throw Error(ErrorKind::kInvalidArchitecture, "model has no layers");
  }
  for (size_t i = 0; i < layers_.size(); ++i) {
    const DenseLayer& layer = layers_[i];
    if (layer.outputs() == 0 || layer.inputs() == 0 ||
        layer.bias.size() != layer.outputs()) {
      throw Error(ErrorKind::kInvalidArchitecture,
                  "layer " + std::to_string(i) + " has empty or ragged shape");
    }
    if (i + 1 < layers_.size() &&
        layer.outputs() != layers_[i + 1].inputs()) {
      throw Error(ErrorKind::kInvalidArchitecture,
                  "layer " + std::to_string(i) + " output width " +
                      std::to_string(layer.outputs()) +
                      " does not feed layer " + std::to_string(i + 1));
    }
    const Activation expected =
        i + 1 == layers_.size() ? Activation::kSoftmax : Activation::kReLU;
    if (layer.activation != expected) {
      throw Error(ErrorKind::kInvalidArchitecture,
                  "only the last layer may (and must) be softmax");
    }
  }
  check_finite(*this, "model");
}

bool same_architecture(const Model& a, const Model& b) {
  return a.arch_id() == b.arch_id();
}

double max_abs_difference(const Model& a, const Model& b) {
  if (!same_architecture(a, b)) {
    throw Error(ErrorKind::kMerge, "models have different architectures");
  }
  double worst = 0.0;
  const auto la = a.layers();
  const auto lb = b.layers();
  for (size_t l = 0; l < la.size(); ++l) {
    const auto wa = la[l].weights.values();
    const auto wb = lb[l].weights.values();
    for (size_t i = 0; i < wa.size(); ++i) {
      worst = std::max(worst, std::abs(wa[i] - wb[i]));
    }
    for (size_t i = 0; i < la[l].bias.size(); ++i) {
      worst = std::max(worst, std::abs(la[l].bias[i] - lb[l].bias[i]));
    }
  }
  return worst;
}

OptimizerState OptimizerState::fresh(const Model& model, RmsPropParams params) {
  return {model.zeros_like(), params};
}

Model init_model(std::span<const size_t> layer_sizes, uint64_t seed) {
  if (layer_sizes.size() < 2) {
    throw Error(ErrorKind::kInvalidArchitecture,
                "need at least input and output sizes");
  }
  for (size_t s : layer_sizes) {
    if (s == 0) {
      throw Error(ErrorKind::kInvalidArchitecture, "layer sizes must be > 0");
    }
  }
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    const size_t fan_in = layer_sizes[i];
    const size_t fan_out = layer_sizes[i + 1];
    const double bound =
        std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer{Matrix(fan_out, fan_in),
                     std::vector<double>(fan_out, 0.0),
                     i + 2 == layer_sizes.size() ? Activation::kSoftmax
                                                 : Activation::kReLU};
    for (double& w : layer.weights.values()) w = rng.uniform(-bound, bound);
    layers.push_back(std::move(layer));
  }
  return Model(std::move(layers));
}

Matrix forward(const Model& model, const Matrix& x) {
  return std::move(run_forward(model, x).activations.back());
}

double loss(const Matrix& probs, std::span<const Label> labels) {
  if (probs.rows() == 0 || probs.rows() != labels.size()) {
    throw Error(ErrorKind::kShape, "loss needs one label per probability row");
  }
  check_labels(labels, probs.cols());
  double total = 0.0;
  for (size_t r = 0; r < probs.rows(); ++r) {
    total -= std::log(std::max(probs(r, labels[r]), kProbFloor));
  }
  return total / static_cast<double>(probs.rows());
}

Gradients backward(const Model& model, const Batch& batch) {
  return backward_impl(model, batch).grads;
}

void rmsprop_step(Model& model, const Gradients& grads,
                  OptimizerState& state) {
  if (!same_architecture(model, grads) ||
      !same_architecture(model, state.mean_square)) {
    throw Error(ErrorKind::kShape, "rmsprop operands differ in shape");
  }
  check_finite(grads, "gradient");
  const auto [lr, rho, eps] = state.params;
  auto update = [&](std::span<double> w, std::span<const double> g,
                    std::span<double> v) {
    for (size_t i = 0; i < w.size(); ++i) {
      v[i] = rho * v[i] + (1.0 - rho) * g[i] * g[i];
      w[i] -= lr * g[i] / (std::sqrt(v[i]) + eps);
    }
  };
  auto ml = model.layers();
  const auto gl = grads.layers();
  auto vl = state.mean_square.layers();
  for (size_t l = 0; l < ml.size(); ++l) {
    update(ml[l].weights.values(), gl[l].weights.values(),
           vl[l].weights.values());
    update(ml[l].bias, gl[l].bias, vl[l].bias);
  }
}

Model train_local(const Model& model, const Dataset& data,
                  const TrainOptions& options, uint64_t seed) {
  if (data.empty()) throw Error(ErrorKind::kEmptyClient, "no training rows");
  if (options.epochs < 1 || options.batch_size < 1) {
    throw Error(ErrorKind::kInvalidInput, "epochs and batch size must be >= 1");
  }
  if (data.features() != model.input_width()) {
    throw Error(ErrorKind::kShape, "dataset width does not match model input");
  }
  check_labels(data.y, model.class_count());

  Model trained = model;
  OptimizerState state = OptimizerState::fresh(model, options.optimizer);
  Rng rng(seed);
  std::vector<size_t> order(data.rows());
  std::iota(order.begin(), order.end(), size_t{0});
  const size_t width = data.features();

  size_t step = 0;
  for (size_t epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(std::span<size_t>(order));
    for (size_t start = 0; start < order.size(); start += options.batch_size) {
      const size_t stop = std::min(order.size(), start + options.batch_size);
      Batch batch{Matrix(stop - start, width), {}};
      batch.y.reserve(stop - start);
      for (size_t i = start; i < stop; ++i) {
        const auto src = data.x.row(order[i]);
        std::copy(src.begin(), src.end(), batch.x.row(i - start).begin());
        batch.y.push_back(data.y[order[i]]);
      }
      auto [grads, batch_loss] = backward_impl(trained, batch);
      if (!std::isfinite(batch_loss)) {
        throw Error(ErrorKind::kNumerical,
                    "loss diverged at step " + std::to_string(step + 1));
      }
      rmsprop_step(trained, grads, state);
      ++step;
      if (options.on_step) options.on_step(step, batch_loss);
    }
  }
  check_finite(trained, "trained model");
  return trained;
}

size_t predict_class(std::span<const double> probs) {
  // max_element keeps the first maximum: ties go to the lowest class index.
  return static_cast<size_t>(
      std::distance(probs.begin(), std::max_element(probs.begin(), probs.end())));
}

std::string serialize_model(const Model& model) {
  std::string out(kModelMagic);
  bytes::put_le<uint32_t>(out, kModelVersion);
  const auto sizes = model.arch_id();
  bytes::put_le<uint32_t>(out, static_cast<uint32_t>(model.layers().size()));
  for (size_t s : sizes) bytes::put_le<uint32_t>(out, static_cast<uint32_t>(s));
  for (const DenseLayer& layer : model.layers()) {
    for (double w : layer.weights.values()) bytes::put_f64(out, w);
    for (double b : layer.bias) bytes::put_f64(out, b);
  }
  return out;
}

Model deserialize_model(std::string_view data) {
  bytes::Reader in(data);
  if (in.take(kModelMagic.size()) != kModelMagic) {
    throw Error(ErrorKind::kFormat, "not a model record");
  }
  const auto version = in.get_le<uint32_t>();
  if (version != kModelVersion) {
    throw Error(ErrorKind::kFormat,
                "unsupported model version " + std::to_string(version));
  }
  const auto layer_count = in.get_le<uint32_t>();
  if (layer_count == 0 || layer_count > in.remaining() / 4) {
    throw Error(ErrorKind::kFormat, "implausible layer count");
  }
  std::vector<size_t> sizes(layer_count + 1);
  for (size_t& s : sizes) s = in.get_le<uint32_t>();
  Model model = init_model(sizes, 0);
  for (DenseLayer& layer : model.layers()) {
    for (double& w : layer.weights.values()) w = in.get_f64();
    for (double& b : layer.bias) b = in.get_f64();
  }
  if (in.remaining() != 0) {
    throw Error(ErrorKind::kFormat, "trailing bytes after model record");
  }
  model.validate();
  return model;
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  const std::string data = serialize_model(model);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path);
  const std::string data((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  return deserialize_model(data);
}

}  // namespace fedsim
