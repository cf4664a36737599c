#pragma once

// Little-endian byte packing for the binary record formats.

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>

#include "fedsim/error.hpp"

namespace fedsim::bytes {

template <typename U>
void put_le(std::string& out, U value) {
  for (size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

inline void put_f64(std::string& out, double value) {
  put_le(out, std::bit_cast<uint64_t>(value));
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <typename U>
  U get_le() {
    need(sizeof(U));
    U value = 0;
    for (size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i]))
               << (8 * i);
    }
    pos_ += sizeof(U);
    return value;
  }

  double get_f64() { return std::bit_cast<double>(get_le<uint64_t>()); }

  std::string_view take(size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(size_t n) const {
    if (data_.size() - pos_ < n) {
      throw Error(ErrorKind::kFormat, "record truncated at byte " +
                                          std::to_string(pos_));
    }
  }

  std::string_view data_;
  size_t pos_ = 0;
};

}  // namespace fedsim::bytes
