#pragma once

// Pairwise-mask secure aggregation over Z_{2^64}.
//
// Each client fixed-point encodes its model and adds
//   sum_{j > i} PRG(seed(i, j), round) - sum_{j < i} PRG(seed(i, j), round)
// so the masks cancel in the sum over all clients. The aggregator only ever
// handles masked vectors and learns the sum, never an individual model.
// Every client must report in a round; there is no dropout recovery.

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fedsim {
class Model;
}

namespace fedsim::secagg {

inline constexpr uint32_t kDefaultFracBits = 24;
inline constexpr uint32_t kWireVersion = 1;

// Identifies the mask generator in transcripts.
enum class PrgId : uint32_t {
  // ChaCha20 keystream (original 64-bit-nonce variant), key = pair seed,
  // nonce = round as 8 little-endian bytes, read as little-endian u64 words.
  kChaCha20 = 1,
};

std::string_view prg_name(PrgId id);

struct FixedPointVector {
  std::vector<uint64_t> values;
  uint32_t frac_bits = kDefaultFracBits;

  size_t length() const { return values.size(); }
  friend bool operator==(const FixedPointVector&,
                         const FixedPointVector&) = default;
};

using PairSeed = std::array<uint8_t, 32>;

// Shared seeds for every unordered client pair. seed(i, j) == seed(j, i).
class PairwiseSeeds {
 public:
  PairwiseSeeds() = default;
  explicit PairwiseSeeds(size_t clients) : clients_(clients) {}

  // Simulated out-of-band establishment: every pair key is derived from
  // `master_seed` with BLAKE2b, so a given master yields the same keys.
  static PairwiseSeeds deal(size_t clients, uint64_t master_seed);

  size_t clients() const { return clients_; }
  void set(size_t i, size_t j, const PairSeed& seed);
  const PairSeed* find(size_t i, size_t j) const;

 private:
  static std::pair<size_t, size_t> key(size_t i, size_t j) {
    return i < j ? std::make_pair(i, j) : std::make_pair(j, i);
  }

  size_t clients_ = 0;
  std::map<std::pair<size_t, size_t>, PairSeed> seeds_;
};

struct MaskedUpdate {
  uint32_t client_id = 0;
  uint64_t round = 0;
  PrgId prg = PrgId::kChaCha20;
  FixedPointVector masked;

  friend bool operator==(const MaskedUpdate&, const MaskedUpdate&) = default;
};

// round(w * 2^frac_bits) mod 2^64 per entry. Requires
// |w| * summands < 2^(63 - frac_bits) so that a sum of `summands` such
// encodings still decodes unambiguously; otherwise kEncodingRange naming the
// offending index.
FixedPointVector encode_fixed(std::span<const double> values,
                              uint32_t frac_bits = kDefaultFracBits,
                              size_t summands = 1);
FixedPointVector encode_fixed(const Model& model,
                              uint32_t frac_bits = kDefaultFracBits,
                              size_t summands = 1);

// Two's-complement reading of each element, divided by 2^frac_bits and by
// `divisor` (the client count for a plain mean).
std::vector<double> decode_sum_flat(const FixedPointVector& sum,
                                    double divisor);
Model decode_sum(const FixedPointVector& sum, double divisor,
                 std::span<const size_t> arch_id);

// Raw keystream words for one pair seed and round.
std::vector<uint64_t> prg_words(const PairSeed& seed, uint64_t round,
                                size_t length);

std::vector<uint64_t> gen_masks(size_t client_id, const PairwiseSeeds& seeds,
                                uint64_t round, size_t length);

MaskedUpdate mask_update(const FixedPointVector& encoded,
                         std::span<const uint64_t> mask, uint32_t client_id,
                         uint64_t round);

// Ring sum of exactly one update per client 0..clients-1, all from the same
// round with the same length and encoding. Anything else is kProtocol.
FixedPointVector aggregate_masked(std::span<const MaskedUpdate> updates,
                                  size_t clients);

// Client side of one round: encode `model` scaled by `scale`, then mask.
MaskedUpdate client_submit(const Model& model, size_t client_id,
                           const PairwiseSeeds& seeds, uint64_t round,
                           uint32_t frac_bits, double scale = 1.0);

// Wire record: u32 version | u64 round | u32 client_id | u64 length |
// u32 frac_bits | u32 prg_id | length x u64 words, all little-endian.
std::string encode_wire(const MaskedUpdate& update);
MaskedUpdate decode_wire(std::string_view bytes);

}  // namespace fedsim::secagg
