#include <gtest/gtest.h>

#include <random>

#include "../support/packet_gen.hpp"
#include "aal/mqtt/codec.hpp"

using namespace aal::mqtt;

namespace {

Bytes bytes_of(std::initializer_list<int> v) {
  Bytes out;
  for (int b : v) out.push_back(static_cast<std::uint8_t>(b));
  return out;
}

// Base-128 decode written directly from the digit definition, independent of the codec.
std::uint64_t reference_varint(const Bytes& b) {
  std::uint64_t value = 0;
  std::uint64_t scale = 1;
  for (auto byte : b) {
    value += (byte & 0x7Fu) * scale;
    scale *= 128;
  }
  return value;
}

}  // namespace

TEST(RemainingLength, BoundaryEncodings) {
  EXPECT_EQ(encode_remaining_length(0), bytes_of({0x00}));
  EXPECT_EQ(encode_remaining_length(127), bytes_of({0x7F}));
  EXPECT_EQ(encode_remaining_length(128), bytes_of({0x80, 0x01}));
  EXPECT_EQ(encode_remaining_length(321), bytes_of({0xC1, 0x02}));
  EXPECT_EQ(encode_remaining_length(16383), bytes_of({0xFF, 0x7F}));
  EXPECT_EQ(encode_remaining_length(16384), bytes_of({0x80, 0x80, 0x01}));
  EXPECT_EQ(encode_remaining_length(268435455), bytes_of({0xFF, 0xFF, 0xFF, 0x7F}));
  EXPECT_EQ(reference_varint(bytes_of({0xC1, 0x02})), 321u);
}

TEST(RemainingLength, OutOfRangeThrows) {
  EXPECT_THROW(encode_remaining_length(268435456), std::out_of_range);
}

TEST(RemainingLength, RoundTripAgainstReferenceDecode) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<std::uint32_t> dist(0, kMaxRemainingLength);
  for (int i = 0; i < 5000; ++i) {
    auto n = i < 300 ? static_cast<std::uint32_t>(i * i) : dist(rng);
    auto enc = encode_remaining_length(n);
    EXPECT_EQ(reference_varint(enc), n);
    auto dec = decode_remaining_length(enc);
    ASSERT_EQ(dec.status, DecodeStatus::ok);
    EXPECT_EQ(dec.value, n);
    EXPECT_EQ(dec.size, enc.size());
  }
}

TEST(RemainingLength, RejectsOverlongAndFiveByteEncodings) {
  EXPECT_EQ(decode_remaining_length(bytes_of({0x80, 0x00})).status, DecodeStatus::malformed);
  EXPECT_EQ(decode_remaining_length(bytes_of({0xFF, 0x80, 0x00})).status, DecodeStatus::malformed);
  EXPECT_EQ(decode_remaining_length(bytes_of({0x80, 0x80, 0x80, 0x80, 0x01})).status,
            DecodeStatus::malformed);
  EXPECT_EQ(decode_remaining_length(bytes_of({0x80, 0x80})).status, DecodeStatus::need_more_data);
}

TEST(Encode, HeaderOnlyPacketsAreTwoBytes) {
  EXPECT_EQ(encode_packet(Pingreq{}), bytes_of({0xC0, 0x00}));
  EXPECT_EQ(encode_packet(Pingresp{}), bytes_of({0xD0, 0x00}));
  EXPECT_EQ(encode_packet(Disconnect{}), bytes_of({0xE0, 0x00}));
}

TEST(Encode, PublishQos0MatchesHandAssembledFrame) {
  Publish p;
  p.topic = "a/b";
  p.payload = "hi";
  auto wire = encode_packet(p);
  // topic length is 3, so remaining length is 2 + 3 + 2 = 7
  EXPECT_EQ(wire, bytes_of({0x30, 0x07, 0x00, 0x03, 'a', '/', 'b', 'h', 'i'}));

  // Independent reading of the same frame, field by field.
  ASSERT_EQ(wire[0] >> 4, 3);
  ASSERT_EQ(wire[0] & 0x0F, 0);
  ASSERT_EQ(wire[1], wire.size() - 2);
  std::size_t topic_len = (wire[2] << 8) | wire[3];
  EXPECT_EQ(std::string(wire.begin() + 4, wire.begin() + 4 + topic_len), "a/b");
  EXPECT_EQ(std::string(wire.begin() + 4 + topic_len, wire.end()), "hi");
}

TEST(Encode, ConnectLayout) {
  auto wire = encode_packet(Connect{"dev", false, 60});
  EXPECT_EQ(wire, bytes_of({0x10, 15, 0, 4, 'M', 'Q', 'T', 'T', 4, 0x00, 0, 60, 0, 3, 'd', 'e', 'v'}));
  auto clean = encode_packet(Connect{"dev", true, 60});
  EXPECT_EQ(clean[9], 0x02);
}

TEST(Encode, SubscribeAndAckLayouts) {
  EXPECT_EQ(encode_packet(Subscribe{10, {{"a/#", 1}}}),
            bytes_of({0x82, 8, 0, 10, 0, 3, 'a', '/', '#', 1}));
  EXPECT_EQ(encode_packet(Suback{10, {1, 0x80}}), bytes_of({0x90, 4, 0, 10, 1, 0x80}));
  EXPECT_EQ(encode_packet(Puback{0x1234}), bytes_of({0x40, 2, 0x12, 0x34}));
  EXPECT_EQ(encode_packet(Connack{true, ConnectReturn::accepted}), bytes_of({0x20, 2, 1, 0}));
  EXPECT_EQ(encode_packet(Unsuback{5}), bytes_of({0xB0, 2, 0, 5}));
}

TEST(Encode, RejectsInvariantViolationsNamingTheField) {
  auto field_of = [](const ControlPacket& p) {
    try {
      encode_packet(p);
    } catch (const InvalidPacket& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(field_of(Publish{"a/+", "", QoS::at_most_once, false, false, 0}), "topic");
  EXPECT_EQ(field_of(Publish{"a/#", "", QoS::at_most_once, false, false, 0}), "topic");
  EXPECT_EQ(field_of(Publish{"a", "", QoS::at_least_once, false, false, 0}), "packet_id");
  EXPECT_EQ(field_of(Publish{"a", "", QoS::at_most_once, false, false, 3}), "packet_id");
  EXPECT_EQ(field_of(Publish{"a\xC0\x80", "", QoS::at_most_once, false, false, 0}), "topic");
  EXPECT_EQ(field_of(Subscribe{1, {}}), "topics");
  EXPECT_EQ(field_of(Puback{0}), "packet_id");
  EXPECT_EQ(field_of(Connect{std::string(70000, 'x'), true, 0}), "client_id");
}

TEST(Decode, TrivialCases) {
  auto r = decode_packet(bytes_of({0xC0, 0x00}));
  ASSERT_EQ(r.status, DecodeStatus::ok);
  EXPECT_EQ(packet_type(r.packet), PacketType::pingreq);
  EXPECT_EQ(r.consumed, 2u);

  auto partial = decode_packet(bytes_of({0xC0}));
  EXPECT_EQ(partial.status, DecodeStatus::need_more_data);
  EXPECT_EQ(partial.consumed, 0u);
  EXPECT_EQ(decode_packet({}).status, DecodeStatus::need_more_data);
}

TEST(Decode, RejectsUnsupportedAndMalformed) {
  auto malformed = [](Bytes b) { return decode_packet(b).status == DecodeStatus::malformed; };
  // QoS 2 publish
  EXPECT_TRUE(malformed(bytes_of({0x34, 0x05, 0x00, 0x01, 'a', 0x00, 0x01})));
  // wildcard topic
  EXPECT_TRUE(malformed(bytes_of({0x30, 0x03, 0x00, 0x01, '#'})));
  // invalid UTF-8 topic (overlong NUL)
  EXPECT_TRUE(malformed(bytes_of({0x30, 0x04, 0x00, 0x02, 0xC0, 0x80})));
  // over-long remaining length
  EXPECT_TRUE(malformed(bytes_of({0xC0, 0x80, 0x00})));
  // PUBREC (QoS 2 flow)
  EXPECT_TRUE(malformed(bytes_of({0x50, 0x02, 0x00, 0x01})));
  // SUBSCRIBE with wrong flags
  EXPECT_TRUE(malformed(bytes_of({0x80, 0x06, 0x00, 0x01, 0x00, 0x01, 'a', 0x00})));
  // CONNECT with username flag
  EXPECT_TRUE(malformed(bytes_of({0x10, 13, 0, 4, 'M', 'Q', 'T', 'T', 4, 0x82, 0, 0, 0, 1, 'x'})));
  // CONNECT with will flag
  EXPECT_TRUE(malformed(bytes_of({0x10, 13, 0, 4, 'M', 'Q', 'T', 'T', 4, 0x06, 0, 0, 0, 1, 'x'})));
  // PINGREQ with a body
  EXPECT_TRUE(malformed(bytes_of({0xC0, 0x01, 0x00})));
  // packet id 0
  EXPECT_TRUE(malformed(bytes_of({0x40, 0x02, 0x00, 0x00})));
}

TEST(Decode, EnforcesMaxPacketSize) {
  Publish p{"t", std::string(300, 'x'), QoS::at_most_once, false, false, 0};
  auto wire = encode_packet(p);
  EXPECT_EQ(decode_packet(wire, 200).status, DecodeStatus::malformed);
  EXPECT_EQ(decode_packet(wire, 400).status, DecodeStatus::ok);
  // the limit applies as soon as the header is readable
  Bytes header(wire.begin(), wire.begin() + 3);
  EXPECT_EQ(decode_packet(header, 200).status, DecodeStatus::malformed);
}

TEST(Property, RoundTripGeneratedCorpus) {
  aal::testing::PacketGenerator gen(2024);
  for (int i = 0; i < 3000; ++i) {
    auto p = gen.next();
    auto wire = encode_packet(p);
    auto r = decode_packet(wire);
    ASSERT_EQ(r.status, DecodeStatus::ok) << r.error;
    EXPECT_EQ(r.consumed, wire.size());
    EXPECT_TRUE(r.packet == p) << to_string(packet_type(p));
    EXPECT_EQ(encode_packet(r.packet), wire);
  }
}

TEST(Property, StreamingAnyChunkingYieldsSamePackets) {
  aal::testing::PacketGenerator gen(99);
  for (int round = 0; round < 50; ++round) {
    std::vector<ControlPacket> packets;
    Bytes stream;
    for (int i = 0; i < 20; ++i) {
      packets.push_back(gen.next());
      encode_packet(packets.back(), stream);
    }
    StreamDecoder dec;
    std::vector<ControlPacket> got;
    std::size_t pos = 0;
    while (pos < stream.size()) {
      std::size_t n = std::min<std::size_t>(gen.uniform(1, 17), stream.size() - pos);
      dec.feed(std::span(stream).subspan(pos, n));
      pos += n;
      while (auto p = dec.next()) got.push_back(std::move(*p));
    }
    ASSERT_EQ(got.size(), packets.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_TRUE(got[i] == packets[i]);
    EXPECT_EQ(dec.buffered(), 0u);
  }
}

TEST(Property, DecodeIsTotalOverRandomBytes) {
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> len(0, 40), byte(0, 255);
  int ok = 0, more = 0, bad = 0;
  for (int i = 0; i < 20000; ++i) {
    Bytes b(len(rng));
    for (auto& x : b) x = static_cast<std::uint8_t>(byte(rng));
    auto r = decode_packet(b);
    switch (r.status) {
      case DecodeStatus::ok:
        ++ok;
        EXPECT_LE(r.consumed, b.size());
        EXPECT_EQ(encode_packet(r.packet), Bytes(b.begin(), b.begin() + r.consumed));
        break;
      case DecodeStatus::need_more_data: ++more; EXPECT_EQ(r.consumed, 0u); break;
      case DecodeStatus::malformed: ++bad; break;
    }
  }
  EXPECT_EQ(ok + more + bad, 20000);
}
