#include "fedsim/secagg.hpp"

#include <sodium.h>

#include <algorithm>
#include <cmath>

#include "bytes.hpp"
#include "fedsim/error.hpp"
#include "fedsim/kernels.hpp"
#include "fedsim/nn.hpp"

namespace fedsim::secagg {
namespace {

void ensure_sodium() {
  static const int status = sodium_init();
  if (status < 0) throw Error(ErrorKind::kProtocol, "libsodium unavailable");
}

constexpr size_t kWireHeaderBytes = 4 + 8 + 4 + 8 + 4 + 4;

void check_frac_bits(uint32_t frac_bits) {
  if (frac_bits >= 62) {
    throw Error(ErrorKind::kEncodingRange,
                "frac_bits " + std::to_string(frac_bits) + " leaves no range");
  }
}

}  // namespace

std::string_view prg_name(PrgId id) {
  switch (id) {
    case PrgId::kChaCha20: return "chacha20-64bit-nonce-le64";
  }
  return "unknown";
}

PairwiseSeeds PairwiseSeeds::deal(size_t clients, uint64_t master_seed) {
  ensure_sodium();
  PairwiseSeeds seeds(clients);
  for (size_t i = 0; i < clients; ++i) {
    for (size_t j = i + 1; j < clients; ++j) {
      std::string input;
      bytes::put_le<uint64_t>(input, master_seed);
      bytes::put_le<uint64_t>(input, i);
      bytes::put_le<uint64_t>(input, j);
      PairSeed seed;
      crypto_generichash(seed.data(), seed.size(),
                         reinterpret_cast<const unsigned char*>(input.data()),
                         input.size(), nullptr, 0);
      seeds.set(i, j, seed);
    }
  }
  return seeds;
}

void PairwiseSeeds::set(size_t i, size_t j, const PairSeed& seed) {
  if (i == j || i >= clients_ || j >= clients_) {
    throw Error(ErrorKind::kProtocol, "pair (" + std::to_string(i) + ", " +
                                          std::to_string(j) + ") is invalid");
  }
  seeds_[key(i, j)] = seed;
}

const PairSeed* PairwiseSeeds::find(size_t i, size_t j) const {
  const auto it = seeds_.find(key(i, j));
  return it == seeds_.end() ? nullptr : &it->second;
}

FixedPointVector encode_fixed(std::span<const double> values,
                              uint32_t frac_bits, size_t summands) {
  check_frac_bits(frac_bits);
  const double scale = std::ldexp(1.0, static_cast<int>(frac_bits));
  const double limit = std::ldexp(1.0, static_cast<int>(63 - frac_bits));
  const auto n = static_cast<double>(std::max<size_t>(summands, 1));
  FixedPointVector out{std::vector<uint64_t>(values.size()), frac_bits};
  for (size_t i = 0; i < values.size(); ++i) {
    const double w = values[i];
    if (!std::isfinite(w) || std::abs(w) * n >= limit) {
      throw Error(ErrorKind::kEncodingRange,
                  "parameter " + std::to_string(i) + " = " +
                      std::to_string(w) + " exceeds the fixed-point range");
    }
    out.values[i] = static_cast<uint64_t>(std::llround(w * scale));
  }
  return out;
}

FixedPointVector encode_fixed(const Model& model, uint32_t frac_bits,
                              size_t summands) {
  return encode_fixed(model.flatten(), frac_bits, summands);
}

std::vector<double> decode_sum_flat(const FixedPointVector& sum,
                                    double divisor) {
  check_frac_bits(sum.frac_bits);
  if (!(divisor > 0.0)) {
    throw Error(ErrorKind::kInvalidInput, "divisor must be positive");
  }
  const double unit = std::ldexp(1.0, -static_cast<int>(sum.frac_bits));
  std::vector<double> out(sum.length());
  for (size_t i = 0; i < out.size(); ++i) {
    const auto centered = static_cast<int64_t>(sum.values[i]);
    out[i] = static_cast<double>(centered) * unit / divisor;
  }
  return out;
}

Model decode_sum(const FixedPointVector& sum, double divisor,
                 std::span<const size_t> arch_id) {
  Model model = init_model(arch_id, 0);
  if (model.parameter_count() != sum.length()) {
    throw Error(ErrorKind::kShape,
                "sum has " + std::to_string(sum.length()) +
                    " entries, architecture needs " +
                    std::to_string(model.parameter_count()));
  }
  model.assign_flat(decode_sum_flat(sum, divisor));
  return model;
}

std::vector<uint64_t> prg_words(const PairSeed& seed, uint64_t round,
                                size_t length) {
  ensure_sodium();
  std::array<unsigned char, crypto_stream_chacha20_NONCEBYTES> nonce{};
  static_assert(crypto_stream_chacha20_NONCEBYTES == 8);
  for (size_t b = 0; b < nonce.size(); ++b) {
    nonce[b] = static_cast<unsigned char>(round >> (8 * b));
  }
  std::string stream(length * 8, '\0');
  crypto_stream_chacha20(reinterpret_cast<unsigned char*>(stream.data()),
                         stream.size(), nonce.data(), seed.data());
  bytes::Reader in(stream);
  std::vector<uint64_t> words(length);
  for (uint64_t& w : words) w = in.get_le<uint64_t>();
  return words;
}

std::vector<uint64_t> gen_masks(size_t client_id, const PairwiseSeeds& seeds,
                                uint64_t round, size_t length) {
  if (client_id >= seeds.clients()) {
    throw Error(ErrorKind::kProtocol,
                "client " + std::to_string(client_id) + " not in seed table");
  }
  std::vector<uint64_t> mask(length, 0);
  for (size_t peer = 0; peer < seeds.clients(); ++peer) {
    if (peer == client_id) continue;
    const PairSeed* seed = seeds.find(client_id, peer);
    if (seed == nullptr) {
      throw Error(ErrorKind::kProtocol,
                  "client " + std::to_string(client_id) +
                      " has no seed shared with " + std::to_string(peer));
    }
    const auto stream = prg_words(*seed, round, length);
    if (peer > client_id) {
      kernels::ring_accumulate(mask, stream);
    } else {
      kernels::ring_subtract(mask, stream);
    }
  }
  return mask;
}

MaskedUpdate mask_update(const FixedPointVector& encoded,
                         std::span<const uint64_t> mask, uint32_t client_id,
                         uint64_t round) {
  if (mask.size() != encoded.length()) {
    throw Error(ErrorKind::kShape,
                "mask length " + std::to_string(mask.size()) +
                    " != encoding length " + std::to_string(encoded.length()));
  }
  MaskedUpdate update{client_id, round, PrgId::kChaCha20, encoded};
  kernels::ring_accumulate(update.masked.values, mask);
  return update;
}

FixedPointVector aggregate_masked(std::span<const MaskedUpdate> updates,
                                  size_t clients) {
  if (clients == 0 || updates.size() != clients) {
    throw Error(ErrorKind::kProtocol,
                "expected " + std::to_string(clients) + " updates, got " +
                    std::to_string(updates.size()));
  }
  std::vector<const MaskedUpdate*> by_client(clients, nullptr);
  for (const MaskedUpdate& u : updates) {
    if (u.client_id >= clients) {
      throw Error(ErrorKind::kProtocol,
                  "unknown client " + std::to_string(u.client_id));
    }
    if (by_client[u.client_id] != nullptr) {
      throw Error(ErrorKind::kProtocol,
                  "duplicate update from client " + std::to_string(u.client_id));
    }
    by_client[u.client_id] = &u;
  }
  const MaskedUpdate& first = *by_client.front();
  for (const MaskedUpdate* u : by_client) {
    if (u->round != first.round || u->prg != first.prg ||
        u->masked.length() != first.masked.length() ||
        u->masked.frac_bits != first.masked.frac_bits) {
      throw Error(ErrorKind::kProtocol,
                  "client " + std::to_string(u->client_id) +
                      " disagrees on round, generator or encoding");
    }
  }
  FixedPointVector sum{std::vector<uint64_t>(first.masked.length(), 0),
                       first.masked.frac_bits};
  for (const MaskedUpdate* u : by_client) {
    kernels::ring_accumulate(sum.values, u->masked.values);
  }
  return sum;
}

MaskedUpdate client_submit(const Model& model, size_t client_id,
                           const PairwiseSeeds& seeds, uint64_t round,
                           uint32_t frac_bits, double scale) {
  std::vector<double> flat = model.flatten();
  if (scale != 1.0) {
    for (double& w : flat) w *= scale;
  }
  const FixedPointVector encoded =
      encode_fixed(flat, frac_bits, std::max<size_t>(seeds.clients(), 1));
  const auto mask = gen_masks(client_id, seeds, round, encoded.length());
  return mask_update(encoded, mask, static_cast<uint32_t>(client_id), round);
}

std::string encode_wire(const MaskedUpdate& update) {
  std::string out;
  out.reserve(kWireHeaderBytes + 8 * update.masked.length());
  bytes::put_le<uint32_t>(out, kWireVersion);
  bytes::put_le<uint64_t>(out, update.round);
  bytes::put_le<uint32_t>(out, update.client_id);
  bytes::put_le<uint64_t>(out, update.masked.length());
  bytes::put_le<uint32_t>(out, update.masked.frac_bits);
  bytes::put_le<uint32_t>(out, static_cast<uint32_t>(update.prg));
  for (uint64_t w : update.masked.values) bytes::put_le<uint64_t>(out, w);
  return out;
}

MaskedUpdate decode_wire(std::string_view data) {
  bytes::Reader in(data);
  const auto version = in.get_le<uint32_t>();
  if (version != kWireVersion) {
    throw Error(ErrorKind::kFormat,
                "unsupported masked-update version " + std::to_string(version));
  }
  MaskedUpdate update;
  update.round = in.get_le<uint64_t>();
  update.client_id = in.get_le<uint32_t>();
  const auto length = in.get_le<uint64_t>();
  update.masked.frac_bits = in.get_le<uint32_t>();
  const auto prg = in.get_le<uint32_t>();
  if (prg != static_cast<uint32_t>(PrgId::kChaCha20)) {
    throw Error(ErrorKind::kFormat, "unknown generator id " + std::to_string(prg));
  }
  update.prg = static_cast<PrgId>(prg);
  if (in.remaining() % 8 != 0 || in.remaining() / 8 != length) {
    throw Error(ErrorKind::kFormat,
                "payload holds " + std::to_string(in.remaining()) +
                    " bytes, header promises " + std::to_string(length) +
                    " words");
  }
  update.masked.values.resize(length);
  for (uint64_t& w : update.masked.values) w = in.get_le<uint64_t>();
  return update;
}

}  // namespace fedsim::secagg
