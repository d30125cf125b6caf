#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include "aal/mqtt/packet.hpp"

namespace aal::mqtt {

inline constexpr std::uint32_t kMaxRemainingLength = 268'435'455;
inline constexpr std::uint32_t kDefaultMaxPacketBytes = 262'144;

/// Thrown by the encoder when a packet violates a ControlPacket invariant.
class InvalidPacket : public std::invalid_argument {
 public:
  InvalidPacket(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Connection-fatal decode failure.
class MalformedPacket : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DecodeStatus { ok, need_more_data, malformed };

/// Throws std::out_of_range above kMaxRemainingLength.
Bytes encode_remaining_length(std::uint32_t n);

struct RemainingLength {
  DecodeStatus status = DecodeStatus::need_more_data;
  std::uint32_t value = 0;
  std::size_t size = 0;  // bytes occupied by the encoding
  std::string error;
};

/// Decodes from the start of `bytes`. Over-long encodings (a trailing zero
/// continuation byte) and more than four bytes are malformed.
RemainingLength decode_remaining_length(std::span<const std::uint8_t> bytes);

Bytes encode_packet(const ControlPacket& packet);
void encode_packet(const ControlPacket& packet, Bytes& out);

struct DecodeResult {
  DecodeStatus status = DecodeStatus::need_more_data;
  ControlPacket packet;
  std::size_t consumed = 0;
  std::string error;
};

/// Never throws on arbitrary input. `consumed` is zero unless status is ok.
DecodeResult decode_packet(std::span<const std::uint8_t> bytes,
                           std::uint32_t max_remaining_length = kDefaultMaxPacketBytes);

/// Incremental decoder over a chunked byte stream.
class StreamDecoder {
 public:
  explicit StreamDecoder(std::uint32_t max_remaining_length = kDefaultMaxPacketBytes)
      : max_remaining_length_(max_remaining_length) {}

  void feed(std::span<const std::uint8_t> chunk);
  /// Next complete packet, or nullopt when more data is needed.
  /// Throws MalformedPacket; the decoder is unusable afterwards.
  std::optional<ControlPacket> next();
  std::size_t buffered() const { return buffer_.size() - offset_; }
  void reset() {
    buffer_.clear();
    offset_ = 0;
  }

 private:
  std::uint32_t max_remaining_length_;
  Bytes buffer_;
  std::size_t offset_ = 0;
};

}  // namespace aal::mqtt
