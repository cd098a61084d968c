// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#include <random>
#include <string>
#include <vector>

#include "bcps/codec.hpp"
#include "doctest.h"

using namespace bcps;

namespace {

std::mt19937_64 rng(0xC0DECu);

int64_t rand_in(int64_t lo, int64_t hi) {
  return lo + static_cast<int64_t>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

ParamKey rand_key() {
  return {static_cast<TableId>(rand_in(0, 3)), static_cast<RowId>(rand_in(0, 9999)),
          static_cast<ColId>(rand_in(0, 63))};
}

double rand_delta() {
  return (static_cast<double>(rng() % 2001) - 1000.0) / 256.0;
}

PushGroup rand_group() {
  PushGroup g;
  g.origin = {static_cast<ProcessId>(rand_in(0, 7)), static_cast<int32_t>(rand_in(0, 3))};
  g.seq_lo = rand_in(1, 1000);
  g.seq_hi = g.seq_lo + rand_in(0, 20);
  g.clock = rand_in(0, 500);
  size_t n = rng() % 4;
  for (size_t i = 0; i < n; ++i) g.records.push_back({rand_key(), rand_delta()});
  return g;
}

std::vector<AckEntry> rand_acks() {
  std::vector<AckEntry> acks;
  size_t n = rng() % 3;
  for (size_t i = 0; i < n; ++i)
    acks.push_back({{static_cast<ProcessId>(rand_in(0, 7)), static_cast<int32_t>(rand_in(0, 3))},
                    rand_in(0, 100000)});
  return acks;
}

PushPayload rand_payload() {
  PushPayload p;
  size_t n = rng() % 3;
  for (size_t i = 0; i < n; ++i) p.groups.push_back(rand_group());
  p.full_marks = rand_acks();
  p.global_min_clock = rand_in(0, 500);
  size_t m = rng() % 3;
  for (size_t i = 0; i < m; ++i)
    p.covered.push_back({static_cast<TableId>(rand_in(0, 3)),
                         static_cast<RowId>(rand_in(0, 9999)), rand_in(-1, 500)});
  return p;
}

Message rand_message() {
  Message m;
  m.sender = rng() % 2 ? NodeId::client(static_cast<int32_t>(rand_in(0, 7)))
                       : NodeId::server(static_cast<int32_t>(rand_in(0, 7)));
  m.dest = rng() % 2 ? NodeId::client(static_cast<int32_t>(rand_in(0, 7)))
                     : NodeId::server(static_cast<int32_t>(rand_in(0, 7)));
  switch (rng() % 6) {
    case 0: {
      ClientPushMsg b;
      size_t n = rng() % 4;
      for (size_t i = 0; i < n; ++i) b.groups.push_back(rand_group());
      b.acks = rand_acks();
      b.process_clock = rand_in(0, 500);
      m.body = std::move(b);
      break;
    }
    case 1: {
      ClientPullMsg b;
      b.table = static_cast<TableId>(rand_in(0, 3));
      b.row = static_cast<RowId>(rand_in(0, 9999));
      b.requester = {static_cast<ProcessId>(rand_in(0, 7)), static_cast<int32_t>(rand_in(0, 3))};
      b.clock = rand_in(0, 500);
      b.staleness = rand_in(0, 16);
      m.body = b;
      break;
    }
    case 2: {
      PullReplyMsg b;
      b.table = static_cast<TableId>(rand_in(0, 3));
      b.row = static_cast<RowId>(rand_in(0, 9999));
      b.status = static_cast<uint8_t>(rng() % 2);
      b.payload = rand_payload();
      m.body = std::move(b);
      break;
    }
    case 3: {
      ServerPushMsg b;
      b.payload = rand_payload();
      m.body = std::move(b);
      break;
    }
    case 4: {
      ClockMsg b;
      b.reporter = static_cast<int32_t>(rand_in(0, 7));
      b.value = rand_in(0, 100000);
      m.body = b;
      break;
    }
    default: {
      AckMsg b;
      b.entries = rand_acks();
      m.body = std::move(b);
      break;
    }
  }
  return m;
}

}  // namespace

TEST_CASE("each message kind survives an encode/decode round trip") {
  Message push{NodeId::client(0), NodeId::server(1),
               ClientPushMsg{{PushGroup{{0, 1}, 1, 3, 2, {{ParamKey{0, 7, 0}, -0.5}}}},
                             {AckEntry{{1, 0}, 42}},
                             5}};
  Message pull{NodeId::client(2), NodeId::server(0), ClientPullMsg{1, 9, {2, 1}, 4, 2}};
  Message reply{NodeId::server(0), NodeId::client(2),
                PullReplyMsg{1, 9, 0, PushPayload{{}, {}, 3, {{1, 9, 2}}}}};
  Message spush{NodeId::server(1), NodeId::client(0),
                ServerPushMsg{PushPayload{{PushGroup{{1, 0}, 4, 4, 1, {}}}, {}, 1, {}}}};
  Message clock{NodeId::client(1), NodeId::server(0), ClockMsg{1, 7}};
  Message ack{NodeId::server(0), NodeId::client(1), AckMsg{{AckEntry{{0, 0}, 12}}}};

  for (const Message& m : {push, pull, reply, spush, clock, ack}) {
    auto frame = encode(m);
    std::string err;
    auto back = decode(frame, &err);
    REQUIRE_MESSAGE(back.has_value(), err);
    CHECK(back->sender == m.sender);
    CHECK(back->dest == m.dest);
    CHECK(back->body.index() == m.body.index());
    CHECK(encode(*back) == frame);
  }
}

TEST_CASE("decoded pull reply carries payload fields through intact") {
  PullReplyMsg b{2, 31, 1, PushPayload{{PushGroup{{3, 1}, 10, 12, 6, {{ParamKey{2, 31, 4}, 1.25}}}},
                                       {AckEntry{{0, 1}, 99}},
                                       5,
                                       {{2, 31, 5}}}};
  auto frame = encode({NodeId::server(2), NodeId::client(3), b});
  auto back = decode(frame, nullptr);
  REQUIRE(back.has_value());
  const auto& r = std::get<PullReplyMsg>(back->body);
  CHECK(r.table == 2);
  CHECK(r.row == 31);
  CHECK(r.status == 1);
  REQUIRE(r.payload.groups.size() == 1);
  CHECK(r.payload.groups[0].origin == WorkerId{3, 1});
  CHECK(r.payload.groups[0].seq_lo == 10);
  CHECK(r.payload.groups[0].seq_hi == 12);
  CHECK(r.payload.groups[0].clock == 6);
  REQUIRE(r.payload.groups[0].records.size() == 1);
  CHECK(r.payload.groups[0].records[0].key == ParamKey{2, 31, 4});
  CHECK(r.payload.groups[0].records[0].delta == 1.25);
  REQUIRE(r.payload.full_marks.size() == 1);
  CHECK(r.payload.full_marks[0].mark == 99);
  CHECK(r.payload.global_min_clock == 5);
  REQUIRE(r.payload.covered.size() == 1);
  CHECK(r.payload.covered[0].through == 5);
}

TEST_CASE("random messages re-encode to identical bytes") {
  for (int i = 0; i < 2000; ++i) {
    Message m = rand_message();
    auto frame = encode(m);
    std::string err;
    auto back = decode(frame, &err);
    REQUIRE_MESSAGE(back.has_value(), err);
    REQUIRE(encode(*back) == frame);
  }
}

TEST_CASE("every truncation fails to decode") {
  Message m = rand_message();
  auto frame = encode(m);
  for (size_t n = 0; n < frame.size(); ++n) {
    auto cut = std::span<const uint8_t>(frame.data(), n);
    CHECK_FALSE(decode(cut, nullptr).has_value());
  }
}

TEST_CASE("every single byte corruption fails to decode") {
  for (int trial = 0; trial < 8; ++trial) {
    Message m = rand_message();
    auto frame = encode(m);
    for (size_t pos = 0; pos < frame.size(); ++pos) {
      for (uint8_t mask : {uint8_t{0x01}, uint8_t{0x80}, uint8_t{0xFF}}) {
        auto bad = frame;
        bad[pos] ^= mask;
        CHECK_FALSE(decode(bad, nullptr).has_value());
      }
    }
  }
}

TEST_CASE("garbage bytes never decode or throw") {
  for (int i = 0; i < 500; ++i) {
    std::vector<uint8_t> junk(rng() % 128);
    for (auto& b : junk) b = static_cast<uint8_t>(rng());
    std::string err;
    CHECK_FALSE(decode(junk, &err).has_value());
    CHECK_FALSE(err.empty());
  }
}
