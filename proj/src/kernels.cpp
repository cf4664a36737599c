#include "fedsim/kernels.hpp"

#include <omp.h>

#include <cmath>
#include <string>
#include <vector>

#include "fedsim/error.hpp"

namespace fedsim::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr size_t kParallelWork = size_t{1} << 16;

void check_affine(const Matrix& x, const Matrix& w, std::span<const double> bias,
                  const Matrix& out) {
  if (x.cols() != w.cols() || bias.size() != w.rows() ||
      out.rows() != x.rows() || out.cols() != w.rows()) {
    throw Error(ErrorKind::kShape,
                "affine: x " + std::to_string(x.rows()) + "x" +
                    std::to_string(x.cols()) + ", w " +
                    std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
  }
}

void check_weight_grads(const Matrix& dz, const Matrix& a, const Matrix& dw,
                        std::span<double> db) {
  if (dz.rows() != a.rows() || dw.rows() != dz.cols() ||
      dw.cols() != a.cols() || db.size() != dz.cols()) {
    throw Error(ErrorKind::kShape, "weight_gradients: operand shapes disagree");
  }
}

void check_input_grads(const Matrix& dz, const Matrix& w, const Matrix& da) {
  if (dz.cols() != w.rows() || da.rows() != dz.rows() ||
      da.cols() != w.cols()) {
    throw Error(ErrorKind::kShape, "input_gradients: operand shapes disagree");
  }
}

void check_mean(std::span<const std::span<const double>> inputs,
                std::span<const double> weights, std::span<double> out) {
  if (inputs.empty()) throw Error(ErrorKind::kInvalidInput, "mean of nothing");
  if (!weights.empty() && weights.size() != inputs.size()) {
    throw Error(ErrorKind::kShape, "one weight per input required");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorKind::kInvalidInput, "weights must be finite and >= 0");
    }
    total += w;
  }
  if (!weights.empty() && !(total > 0.0)) {
    throw Error(ErrorKind::kInvalidInput, "weights sum to zero");
  }
  for (const auto& in : inputs) {
    if (in.size() != out.size()) {
      throw Error(ErrorKind::kShape, "mean inputs differ in length");
    }
  }
}

void check_ring(std::span<uint64_t> dst, std::span<const uint64_t> src) {
  if (dst.size() != src.size()) {
    throw Error(ErrorKind::kShape, "ring vectors differ in length");
  }
}

// Step sizes of the running mean m += r_c (x_c - m): r_c = w_c / (w_0+..+w_c).
// Equal inputs therefore average to themselves exactly.
std::vector<double> mean_steps(std::span<const double> weights, size_t n) {
  std::vector<double> steps(n, 1.0);
  double seen = 0.0;
  for (size_t c = 0; c < n; ++c) {
    const double w = weights.empty() ? 1.0 : weights[c];
    seen += w;
    if (seen > 0.0) steps[c] = w / seen;
  }
  return steps;
}

}  // namespace

void affine_forward(const Matrix& x, const Matrix& w,
                    std::span<const double> bias, Matrix& out) {
  check_affine(x, w, bias, out);
  const size_t rows = x.rows(), in = w.cols(), outs = w.rows();

  // Transposed weights make the innermost loop run over contiguous outputs.
  std::vector<double> wt(in * outs);
  for (size_t o = 0; o < outs; ++o) {
    for (size_t k = 0; k < in; ++k) wt[k * outs + o] = w(o, k);
  }

  const bool parallel = rows * in * outs >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (size_t r = 0; r < rows; ++r) {
    double* dst = out.row(r).data();
    const double* src = x.row(r).data();
    for (size_t o = 0; o < outs; ++o) dst[o] = bias[o];
    for (size_t k = 0; k < in; ++k) {
      const double xk = src[k];
      const double* wk = wt.data() + k * outs;
      for (size_t o = 0; o < outs; ++o) dst[o] += xk * wk[o];
    }
  }
}

void weight_gradients(const Matrix& dz, const Matrix& a, Matrix& dw,
                      std::span<double> db) {
  check_weight_grads(dz, a, dw, db);
  const size_t rows = dz.rows(), outs = dz.cols(), in = a.cols();

  const bool parallel = rows * in * outs >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (size_t o = 0; o < outs; ++o) {
    double* g = dw.row(o).data();
    for (size_t k = 0; k < in; ++k) g[k] = 0.0;
    double bias_sum = 0.0;
    for (size_t r = 0; r < rows; ++r) {
      const double d = dz(r, o);
      const double* ar = a.row(r).data();
      for (size_t k = 0; k < in; ++k) g[k] += d * ar[k];
      bias_sum += d;
    }
    db[o] = bias_sum;
  }
}

void input_gradients(const Matrix& dz, const Matrix& w, Matrix& da) {
  check_input_grads(dz, w, da);
  const size_t rows = dz.rows(), outs = w.rows(), in = w.cols();

  const bool parallel = rows * in * outs >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (size_t r = 0; r < rows; ++r) {
    double* dst = da.row(r).data();
    for (size_t k = 0; k < in; ++k) dst[k] = 0.0;
    for (size_t o = 0; o < outs; ++o) {
      const double d = dz(r, o);
      const double* wo = w.row(o).data();
      for (size_t k = 0; k < in; ++k) dst[k] += d * wo[k];
    }
  }
}

void weighted_mean(std::span<const std::span<const double>> inputs,
                   std::span<const double> weights, std::span<double> out) {
  check_mean(inputs, weights, out);
  const size_t n = inputs.size();
  const auto steps = mean_steps(weights, n);
  const auto len = static_cast<std::ptrdiff_t>(out.size());

#pragma omp parallel for schedule(static) if (out.size() * n >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < len; ++i) {
    double m = inputs[0][i];
    for (size_t c = 1; c < n; ++c) m += steps[c] * (inputs[c][i] - m);
    out[i] = m;
  }
}

void ring_accumulate(std::span<uint64_t> dst, std::span<const uint64_t> src) {
  check_ring(dst, src);
  const auto len = static_cast<std::ptrdiff_t>(dst.size());
#pragma omp parallel for schedule(static) if (dst.size() >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < len; ++i) dst[i] += src[i];
}

void ring_subtract(std::span<uint64_t> dst, std::span<const uint64_t> src) {
  check_ring(dst, src);
  const auto len = static_cast<std::ptrdiff_t>(dst.size());
#pragma omp parallel for schedule(static) if (dst.size() >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < len; ++i) dst[i] -= src[i];
}

namespace serial {

void affine_forward(const Matrix& x, const Matrix& w,
                    std::span<const double> bias, Matrix& out) {
  check_affine(x, w, bias, out);
  for (size_t r = 0; r < x.rows(); ++r) {
    for (size_t o = 0; o < w.rows(); ++o) {
      double acc = bias[o];
      for (size_t k = 0; k < w.cols(); ++k) acc += x(r, k) * w(o, k);
      out(r, o) = acc;
    }
  }
}

void weight_gradients(const Matrix& dz, const Matrix& a, Matrix& dw,
                      std::span<double> db) {
  check_weight_grads(dz, a, dw, db);
  for (size_t o = 0; o < dz.cols(); ++o) {
    for (size_t k = 0; k < a.cols(); ++k) {
      double acc = 0.0;
      for (size_t r = 0; r < dz.rows(); ++r) acc += dz(r, o) * a(r, k);
      dw(o, k) = acc;
    }
    double acc = 0.0;
    for (size_t r = 0; r < dz.rows(); ++r) acc += dz(r, o);
    db[o] = acc;
  }
}

void input_gradients(const Matrix& dz, const Matrix& w, Matrix& da) {
  check_input_grads(dz, w, da);
  for (size_t r = 0; r < dz.rows(); ++r) {
    for (size_t k = 0; k < w.cols(); ++k) {
      double acc = 0.0;
      for (size_t o = 0; o < w.rows(); ++o) acc += dz(r, o) * w(o, k);
      da(r, k) = acc;
    }
  }
}

void weighted_mean(std::span<const std::span<const double>> inputs,
                   std::span<const double> weights, std::span<double> out) {
  check_mean(inputs, weights, out);
  const auto steps = mean_steps(weights, inputs.size());
  for (size_t i = 0; i < out.size(); ++i) {
    double m = inputs[0][i];
    for (size_t c = 1; c < inputs.size(); ++c) m += steps[c] * (inputs[c][i] - m);
    out[i] = m;
  }
}

void ring_accumulate(std::span<uint64_t> dst, std::span<const uint64_t> src) {
  check_ring(dst, src);
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void ring_subtract(std::span<uint64_t> dst, std::span<const uint64_t> src) {
  check_ring(dst, src);
  for (size_t i = 0; i < dst.size(); ++i) dst[i] -= src[i];
}

}  // namespace serial

}  // namespace fedsim::kernels
