// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <cstdint>
#include <functional>
#include <variant>
#include <vector>

#include "bcps/core.hpp"

namespace bcps {

// Addressing for both transports: client processes and server shards share one
// id scheme of (kind, index).
struct NodeId {
  enum class Kind : uint8_t { Client = 0, Server = 1 };
  Kind kind = Kind::Client;
  int32_t index = 0;

  auto operator<=>(const NodeId&) const = default;
  static NodeId client(int32_t i) { return {Kind::Client, i}; }
  static NodeId server(int32_t i) { return {Kind::Server, i}; }
};

struct WireRecord {
  ParamKey key;
  double delta = 0.0;
};

// One origin's slice of a push. [seq_lo, seq_hi] covers every update the origin
// issued in that range; `records` holds the coalesced deltas belonging to the
// receiving shard (possibly none). `clock` stamps the covered updates.
struct PushGroup {
  WorkerId origin;
  Seq seq_lo = 0;
  Seq seq_hi = 0;
  Clock clock = 0;
  std::vector<WireRecord> records;
};

// Cumulative high-water mark: "origin's updates through seq `mark` applied".
struct AckEntry {
  WorkerId origin;
  Seq mark = 0;
};

// Client process -> shard. Carries update groups plus piggybacked ack marks for
// this shard's stream and the sender's current process clock.
struct ClientPushMsg {
  std::vector<PushGroup> groups;
  std::vector<AckEntry> acks;
  Clock process_clock = 0;
};

// Client -> shard: demand freshness for one row.
struct ClientPullMsg {
  TableId table = 0;
  RowId row = 0;
  WorkerId requester;
  Clock clock = 0;
  Clock staleness = 0;
};

// A row whose replica is certified complete through `through` after applying
// the enclosing payload.
struct RowCoverage {
  TableId table = 0;
  RowId row = 0;
  Clock through = 0;
};

// Shard -> client payload shared by server pushes and pull replies: update
// groups, full-sync watermarks for the destination's own workers, the shard's
// view of the global minimum clock, and per-row coverage certificates.
struct PushPayload {
  std::vector<PushGroup> groups;
  std::vector<AckEntry> full_marks;
  Clock global_min_clock = 0;
  std::vector<RowCoverage> covered;
};

struct ServerPushMsg {
  PushPayload payload;
};

struct PullReplyMsg {
  TableId table = 0;
  RowId row = 0;
  uint8_t status = 0;  // 0 ok, 1 staleness unavailable (socket-mode timeout path)
  PushPayload payload;
};

// Client -> shard: process min clock report. Shard -> client: global min clock.
struct ClockMsg {
  int32_t reporter = 0;
  Clock value = 0;
};

// Standalone ack marks. Client -> shard: applied marks for this shard's stream.
// Shard -> client: full-sync watermarks for the destination's own workers.
struct AckMsg {
  std::vector<AckEntry> entries;
};

using MessageBody =
    std::variant<ClientPushMsg, ClientPullMsg, PullReplyMsg, ServerPushMsg, ClockMsg, AckMsg>;

struct Message {
  NodeId sender;
  NodeId dest;
  MessageBody body;
};

// Cores hand outbound messages to the transport through this hook; the
// simulator enqueues them on in-memory links, the socket layer encodes them.
using MessageSink = std::function<void(Message&&)>;

inline const char* message_kind_name(const Message& m) {
  switch (m.body.index()) {
    case 0: return "client_push";
    case 1: return "client_pull";
    case 2: return "pull_reply";
    case 3: return "server_push";
    case 4: return "clock";
    case 5: return "ack";
  }
  return "?";
}

}  // namespace bcps
