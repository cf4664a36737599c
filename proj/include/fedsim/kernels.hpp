#pragma once

// Data-parallel inner loops shared by training, merging and aggregation.
//
// Each kernel exists twice: the OpenMP version in `fedsim::kernels`, used by
// the library, and a plain loop-nest version in `fedsim::kernels::serial`,
// kept as the reference for tests and the benchmark. Both accumulate every
// output element over the same index order, so results are bit-identical and
// independent of the thread count.

#include <cstdint>
#include <span>

#include "fedsim/matrix.hpp"

namespace fedsim::kernels {

// out[r][o] = bias[o] + sum_k x[r][k] * w[o][k]
void affine_forward(const Matrix& x, const Matrix& w,
                    std::span<const double> bias, Matrix& out);

// dw[o][k] = sum_r dz[r][o] * a[r][k];  db[o] = sum_r dz[r][o]
void weight_gradients(const Matrix& dz, const Matrix& a, Matrix& dw,
                      std::span<double> db);

// da[r][k] = sum_o dz[r][o] * w[o][k]
void input_gradients(const Matrix& dz, const Matrix& w, Matrix& da);

// out[i] = (sum_c weights[c] * inputs[c][i]) / sum_c weights[c], evaluated
// as a running mean in input order. An empty `weights` span means every
// weight is 1.
void weighted_mean(std::span<const std::span<const double>> inputs,
                   std::span<const double> weights, std::span<double> out);

// dst[i] += src[i] mod 2^64
void ring_accumulate(std::span<uint64_t> dst, std::span<const uint64_t> src);

// dst[i] -= src[i] mod 2^64
void ring_subtract(std::span<uint64_t> dst, std::span<const uint64_t> src);

namespace serial {

void affine_forward(const Matrix& x, const Matrix& w,
                    std::span<const double> bias, Matrix& out);
void weight_gradients(const Matrix& dz, const Matrix& a, Matrix& dw,
                      std::span<double> db);
void input_gradients(const Matrix& dz, const Matrix& w, Matrix& da);
void weighted_mean(std::span<const std::span<const double>> inputs,
                   std::span<const double> weights, std::span<double> out);
void ring_accumulate(std::span<uint64_t> dst, std::span<const uint64_t> src);
void ring_subtract(std::span<uint64_t> dst, std::span<const uint64_t> src);

}  // namespace serial

}  // namespace fedsim::kernels
