#include "aal/mqtt/codec.hpp"

#include <algorithm>

#include "aal/common/base64.hpp"

namespace aal::mqtt {

std::string_view to_string(PacketType type) {
  switch (type) {
    case PacketType::connect: return "CONNECT";
    case PacketType::connack: return "CONNACK";
    case PacketType::publish: return "PUBLISH";
    case PacketType::puback: return "PUBACK";
    case PacketType::subscribe: return "SUBSCRIBE";
    case PacketType::suback: return "SUBACK";
    case PacketType::unsubscribe: return "UNSUBSCRIBE";
    case PacketType::unsuback: return "UNSUBACK";
    case PacketType::pingreq: return "PINGREQ";
    case PacketType::pingresp: return "PINGRESP";
    case PacketType::disconnect: return "DISCONNECT";
  }
  return "UNKNOWN";
}

PacketType packet_type(const ControlPacket& packet) {
  static constexpr PacketType kTypes[] = {
      PacketType::connect,     PacketType::connack,  PacketType::publish, PacketType::puback,
      PacketType::subscribe,   PacketType::suback,   PacketType::unsubscribe,
      PacketType::unsuback,    PacketType::pingreq,  PacketType::pingresp,
      PacketType::disconnect,
  };
  return kTypes[packet.index()];
}

namespace {

constexpr std::string_view kProtocolName = "MQTT";
constexpr std::uint8_t kProtocolLevel = 4;

bool has_wildcard(std::string_view topic) {
  return topic.find_first_of("+#") != std::string_view::npos;
}

void check_string(std::string_view s, const char* field) {
  if (s.size() > 65535) throw InvalidPacket(field, "longer than 65535 bytes");
  if (!is_valid_utf8(s)) throw InvalidPacket(field, "not valid UTF-8");
}

void check_packet_id(std::uint16_t id, const char* field) {
  if (id == 0) throw InvalidPacket(field, "packet identifier must be nonzero");
}

class Writer {
 public:
  explicit Writer(Bytes& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  void str(std::string_view s) {
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s);
  }
  void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

 private:
  Bytes& out_;
};

// Variable header + payload for each packet; returns the fixed-header first byte.
std::uint8_t encode_body(const ControlPacket& packet, Bytes& body) {
  Writer w(body);
  return std::visit(
      [&](const auto& p) -> std::uint8_t {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Connect>) {
          check_string(p.client_id, "client_id");
          w.str(kProtocolName);
          w.u8(kProtocolLevel);
          w.u8(p.clean_session ? 0x02 : 0x00);
          w.u16(p.keepalive_s);
          w.str(p.client_id);
          return 0x10;
        } else if constexpr (std::is_same_v<T, Connack>) {
          if (static_cast<std::uint8_t>(p.code) > 5) throw InvalidPacket("return_code", "out of range");
          if (p.session_present && p.code != ConnectReturn::accepted) {
            throw InvalidPacket("session_present", "must be 0 when the connection is refused");
          }
          w.u8(p.session_present ? 1 : 0);
          w.u8(static_cast<std::uint8_t>(p.code));
          return 0x20;
        } else if constexpr (std::is_same_v<T, Publish>) {
          check_string(p.topic, "topic");
          if (p.topic.empty()) throw InvalidPacket("topic", "must not be empty");
          if (has_wildcard(p.topic)) throw InvalidPacket("topic", "wildcards not allowed in a topic name");
          if (to_int(p.qos) > 1) throw InvalidPacket("qos", "only QoS 0 and 1 are supported");
          if (p.qos == QoS::at_most_once) {
            if (p.packet_id != 0) throw InvalidPacket("packet_id", "must be absent for QoS 0");
            if (p.dup) throw InvalidPacket("dup", "must be 0 for QoS 0");
          } else {
            check_packet_id(p.packet_id, "packet_id");
          }
          w.str(p.topic);
          if (p.qos != QoS::at_most_once) w.u16(p.packet_id);
          w.raw(p.payload);
          return static_cast<std::uint8_t>(0x30 | (p.dup ? 0x08 : 0) | (to_int(p.qos) << 1) |
                                           (p.retain ? 0x01 : 0));
        } else if constexpr (std::is_same_v<T, Puback>) {
          check_packet_id(p.packet_id, "packet_id");
          w.u16(p.packet_id);
          return 0x40;
        } else if constexpr (std::is_same_v<T, Subscribe>) {
          check_packet_id(p.packet_id, "packet_id");
          if (p.topics.empty()) throw InvalidPacket("topics", "at least one topic filter required");
          w.u16(p.packet_id);
          for (const auto& t : p.topics) {
            check_string(t.filter, "topic_filter");
            if (t.filter.empty()) throw InvalidPacket("topic_filter", "must not be empty");
            if (t.qos > 2) throw InvalidPacket("requested_qos", "must be 0, 1 or 2");
            w.str(t.filter);
            w.u8(t.qos);
          }
          return 0x82;
        } else if constexpr (std::is_same_v<T, Suback>) {
          check_packet_id(p.packet_id, "packet_id");
          if (p.return_codes.empty()) throw InvalidPacket("return_codes", "at least one code required");
          w.u16(p.packet_id);
          for (auto c : p.return_codes) {
            if (c > 2 && c != kSubackFailure) throw InvalidPacket("return_codes", "invalid code");
            w.u8(c);
          }
          return 0x90;
        } else if constexpr (std::is_same_v<T, Unsubscribe>) {
          check_packet_id(p.packet_id, "packet_id");
          if (p.filters.empty()) throw InvalidPacket("filters", "at least one topic filter required");
          w.u16(p.packet_id);
          for (const auto& f : p.filters) {
            check_string(f, "topic_filter");
            if (f.empty()) throw InvalidPacket("topic_filter", "must not be empty");
            w.str(f);
          }
          return 0xA2;
        } else if constexpr (std::is_same_v<T, Unsuback>) {
          check_packet_id(p.packet_id, "packet_id");
          w.u16(p.packet_id);
          return 0xB0;
        } else if constexpr (std::is_same_v<T, Pingreq>) {
          return 0xC0;
        } else if constexpr (std::is_same_v<T, Pingresp>) {
          return 0xD0;
        } else {
          static_assert(std::is_same_v<T, Disconnect>);
          return 0xE0;
        }
      },
      packet);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t remaining() const { return data_.size() - pos_; }

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    auto v = static_cast<std::uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::string str(const char* field) {
    auto len = u16();
    need(len);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), len);
    pos_ += len;
    if (!is_valid_utf8(s)) throw MalformedPacket(std::string(field) + " is not valid UTF-8");
    return s;
  }
  std::string rest() {
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), remaining());
    pos_ = data_.size();
    return s;
  }
  std::uint16_t packet_id() {
    auto id = u16();
    if (id == 0) throw MalformedPacket("packet identifier 0");
    return id;
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw MalformedPacket("truncated packet body");
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

void expect_flags(std::uint8_t flags, std::uint8_t expected, PacketType type) {
  if (flags != expected) {
    throw MalformedPacket("invalid fixed-header flags for " + std::string(to_string(type)));
  }
}

void expect_length(std::size_t actual, std::size_t expected, PacketType type) {
  if (actual != expected) {
    throw MalformedPacket("invalid remaining length for " + std::string(to_string(type)));
  }
}

ControlPacket decode_body(std::uint8_t first, std::span<const std::uint8_t> body) {
  const auto type_bits = static_cast<std::uint8_t>(first >> 4);
  const auto flags = static_cast<std::uint8_t>(first & 0x0F);
  Reader r(body);
  switch (type_bits) {
    case 1: {
      expect_flags(flags, 0, PacketType::connect);
      if (r.str("protocol_name") != kProtocolName) throw MalformedPacket("unsupported protocol name");
      if (r.u8() != kProtocolLevel) throw MalformedPacket("unsupported protocol level");
      auto cf = r.u8();
      if (cf & 0x01) throw MalformedPacket("reserved connect flag set");
      if (cf & 0x04) throw MalformedPacket("will messages are not supported");
      if (cf & 0x38) throw MalformedPacket("will qos/retain set without will flag");
      if (cf & 0xC0) throw MalformedPacket("username/password are not supported");
      Connect c;
      c.clean_session = (cf & 0x02) != 0;
      c.keepalive_s = r.u16();
      c.client_id = r.str("client_id");
      if (r.remaining() != 0) throw MalformedPacket("trailing bytes in CONNECT");
      return c;
    }
    case 2: {
      expect_flags(flags, 0, PacketType::connack);
      expect_length(body.size(), 2, PacketType::connack);
      auto ack = r.u8();
      if (ack & 0xFE) throw MalformedPacket("reserved CONNACK flags set");
      auto code = r.u8();
      if (code > 5) throw MalformedPacket("invalid CONNACK return code");
      if ((ack & 1) && code != 0) throw MalformedPacket("session present with refusal");
      return Connack{(ack & 1) != 0, static_cast<ConnectReturn>(code)};
    }
    case 3: {
      Publish p;
      p.dup = (flags & 0x08) != 0;
      auto qos = (flags >> 1) & 0x03;
      if (qos == 3) throw MalformedPacket("invalid QoS 3");
      if (qos == 2) throw MalformedPacket("QoS 2 is not supported");
      p.qos = static_cast<QoS>(qos);
      p.retain = (flags & 0x01) != 0;
      if (p.qos == QoS::at_most_once && p.dup) throw MalformedPacket("DUP set on QoS 0 PUBLISH");
      p.topic = r.str("topic");
      if (p.topic.empty()) throw MalformedPacket("empty topic name");
      if (has_wildcard(p.topic)) throw MalformedPacket("wildcard in PUBLISH topic name");
      if (p.qos != QoS::at_most_once) p.packet_id = r.packet_id();
      p.payload = r.rest();
      return p;
    }
    case 4: {
      expect_flags(flags, 0, PacketType::puback);
      expect_length(body.size(), 2, PacketType::puback);
      return Puback{r.packet_id()};
    }
    case 8: {
      expect_flags(flags, 0x02, PacketType::subscribe);
      Subscribe s;
      s.packet_id = r.packet_id();
      while (r.remaining() > 0) {
        TopicRequest t;
        t.filter = r.str("topic_filter");
        if (t.filter.empty()) throw MalformedPacket("empty topic filter");
        t.qos = r.u8();
        if (t.qos > 2) throw MalformedPacket("invalid requested QoS");
        s.topics.push_back(std::move(t));
      }
      if (s.topics.empty()) throw MalformedPacket("SUBSCRIBE without topic filters");
      return s;
    }
    case 9: {
      expect_flags(flags, 0, PacketType::suback);
      Suback s;
      s.packet_id = r.packet_id();
      while (r.remaining() > 0) {
        auto c = r.u8();
        if (c > 2 && c != kSubackFailure) throw MalformedPacket("invalid SUBACK return code");
        s.return_codes.push_back(c);
      }
      if (s.return_codes.empty()) throw MalformedPacket("SUBACK without return codes");
      return s;
    }
    case 10: {
      expect_flags(flags, 0x02, PacketType::unsubscribe);
      Unsubscribe u;
      u.packet_id = r.packet_id();
      while (r.remaining() > 0) {
        auto f = r.str("topic_filter");
        if (f.empty()) throw MalformedPacket("empty topic filter");
        u.filters.push_back(std::move(f));
      }
      if (u.filters.empty()) throw MalformedPacket("UNSUBSCRIBE without topic filters");
      return u;
    }
    case 11: {
      expect_flags(flags, 0, PacketType::unsuback);
      expect_length(body.size(), 2, PacketType::unsuback);
      return Unsuback{r.packet_id()};
    }
    case 12:
      expect_flags(flags, 0, PacketType::pingreq);
      expect_length(body.size(), 0, PacketType::pingreq);
      return Pingreq{};
    case 13:
      expect_flags(flags, 0, PacketType::pingresp);
      expect_length(body.size(), 0, PacketType::pingresp);
      return Pingresp{};
    case 14:
      expect_flags(flags, 0, PacketType::disconnect);
      expect_length(body.size(), 0, PacketType::disconnect);
      return Disconnect{};
    default:
      throw MalformedPacket("unsupported packet type " + std::to_string(type_bits));
  }
}

}  // namespace

Bytes encode_remaining_length(std::uint32_t n) {
  if (n > kMaxRemainingLength) throw std::out_of_range("remaining length exceeds 268435455");
  Bytes out;
  do {
    auto digit = static_cast<std::uint8_t>(n % 128);
    n /= 128;
    if (n > 0) digit |= 0x80;
    out.push_back(digit);
  } while (n > 0);
  return out;
}

RemainingLength decode_remaining_length(std::span<const std::uint8_t> bytes) {
  RemainingLength result;
  std::uint32_t value = 0;
  std::uint32_t multiplier = 1;
  for (std::size_t i = 0; i < 4; ++i) {
    if (i >= bytes.size()) return result;  // need more data
    auto b = bytes[i];
    value += (b & 0x7F) * multiplier;
    if ((b & 0x80) == 0) {
      if (i > 0 && b == 0) {
        result.status = DecodeStatus::malformed;
        result.error = "over-long remaining length encoding";
        return result;
      }
      result.status = DecodeStatus::ok;
      result.value = value;
      result.size = i + 1;
      return result;
    }
    multiplier *= 128;
  }
  result.status = DecodeStatus::malformed;
  result.error = "remaining length longer than four bytes";
  return result;
}

void encode_packet(const ControlPacket& packet, Bytes& out) {
  Bytes body;
  auto first = encode_body(packet, body);
  if (body.size() > kMaxRemainingLength) throw InvalidPacket("payload", "packet too large");
  out.push_back(first);
  auto rl = encode_remaining_length(static_cast<std::uint32_t>(body.size()));
  out.insert(out.end(), rl.begin(), rl.end());
  out.insert(out.end(), body.begin(), body.end());
}

Bytes encode_packet(const ControlPacket& packet) {
  Bytes out;
  encode_packet(packet, out);
  return out;
}

DecodeResult decode_packet(std::span<const std::uint8_t> bytes, std::uint32_t max_remaining_length) {
  DecodeResult result;
  if (bytes.empty()) return result;
  auto rl = decode_remaining_length(bytes.subspan(1));
  if (rl.status == DecodeStatus::need_more_data) return result;
  if (rl.status == DecodeStatus::malformed) {
    result.status = DecodeStatus::malformed;
    result.error = rl.error;
    return result;
  }
  if (rl.value > max_remaining_length) {
    result.status = DecodeStatus::malformed;
    result.error = "remaining length " + std::to_string(rl.value) + " exceeds limit " +
                   std::to_string(max_remaining_length);
    return result;
  }
  const std::size_t total = 1 + rl.size + rl.value;
  if (bytes.size() < total) return result;
  try {
    result.packet = decode_body(bytes[0], bytes.subspan(1 + rl.size, rl.value));
    result.status = DecodeStatus::ok;
    result.consumed = total;
  } catch (const MalformedPacket& e) {
    result.status = DecodeStatus::malformed;
    result.error = e.what();
  }
  return result;
}

void StreamDecoder::feed(std::span<const std::uint8_t> chunk) {
  if (offset_ > 0 && offset_ == buffer_.size()) {
    buffer_.clear();
    offset_ = 0;
  }
  buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
}

std::optional<ControlPacket> StreamDecoder::next() {
  auto view = std::span<const std::uint8_t>(buffer_).subspan(offset_);
  auto r = decode_packet(view, max_remaining_length_);
  switch (r.status) {
    case DecodeStatus::need_more_data:
      if (offset_ > 4096 && offset_ * 2 > buffer_.size()) {
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(offset_));
        offset_ = 0;
      }
      return std::nullopt;
    case DecodeStatus::malformed:
      throw MalformedPacket(r.error);
    case DecodeStatus::ok:
      offset_ += r.consumed;
      return std::move(r.packet);
  }
  return std::nullopt;
}

}  // namespace aal::mqtt
