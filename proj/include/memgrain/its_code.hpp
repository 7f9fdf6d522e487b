#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace memgrain {

// D-bit sign code packed LSB-first: bit i lives in byte i/8 at position i%8.
class BinaryCode {
 public:
  BinaryCode() = default;
  // All-zero code of `dimension` bits; dimension must be a positive multiple of 8.
  explicit BinaryCode(std::size_t dimension);
  static BinaryCode from_bytes(std::vector<std::uint8_t> bytes);
  // Throws Error(kInvalidArgument) on odd length or non-hex input.
  static BinaryCode from_hex(std::string_view hex);

  std::size_t dimension() const { return bytes_.size() * 8; }
  std::size_t byte_size() const { return bytes_.size(); }
  std::span<const std::uint8_t> bytes() const { return bytes_; }
  const std::uint8_t* data() const { return bytes_.data(); }

  bool bit(std::size_t i) const { return (bytes_[i / 8] >> (i % 8)) & 1u; }
  void set_bit(std::size_t i, bool value);

  std::string hex() const;

  bool operator==(const BinaryCode&) const = default;

 private:
  std::vector<std::uint8_t> bytes_;
};

}  // namespace memgrain
