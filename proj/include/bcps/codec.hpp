// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <array>
#include <cstring>
#include <limits>
#include <optional>
#include <string>

#include "bcps/errors.hpp"
#include "bcps/message.hpp"

namespace bcps {

// Frame layout, identical for the simulator's byte-level checks and sockets:
//   u32 big-endian body length (bytes after this field)
//   u8  version (=1)
//   u8  variant tag (1..6)
//   variant fields in declared order
//   u32 little-endian CRC-32 over version..payload
// Integers are little-endian fixed width, reals are 8-byte IEEE-754 bit
// patterns, sequences are u32-length-prefixed.

inline constexpr uint8_t kWireVersion = 1;
inline constexpr size_t kMaxFrameBody = size_t{1} << 31;

namespace detail {

inline uint32_t crc32(const uint8_t* data, size_t n) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t c = 0xFFFFFFFFu;
  for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

class ByteWriter {
 public:
  std::vector<uint8_t> buf;

  void u8(uint8_t v) { buf.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void len(size_t n) {
    if (n > std::numeric_limits<uint32_t>::max()) throw ProtocolError("encode: sequence too long");
    u32(static_cast<uint32_t>(n));
  }
};

class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}

  bool ok() const { return ok_; }
  bool done() const { return pos_ == size_; }
  size_t remaining() const { return size_ - pos_; }

  uint8_t u8() {
    if (!need(1)) return 0;
    return data_[pos_++];
  }
  uint32_t u32() {
    if (!need(4)) return 0;
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  uint64_t u64() {
    if (!need(8)) return 0;
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  // Sequence length, validated against a per-element lower bound on size.
  size_t len(size_t min_elem_bytes) {
    uint32_t n = u32();
    if (ok_ && min_elem_bytes > 0 && n > remaining() / min_elem_bytes) ok_ = false;
    return ok_ ? n : 0;
  }
  void fail() { ok_ = false; }

 private:
  bool need(size_t n) {
    if (!ok_ || size_ - pos_ < n) {
      ok_ = false;
      return false;
    }
    return true;
  }

  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  bool ok_ = true;
};

inline void put_node(ByteWriter& w, const NodeId& n) {
  w.u8(static_cast<uint8_t>(n.kind));
  w.i32(n.index);
}

inline NodeId get_node(ByteReader& r) {
  NodeId n;
  uint8_t k = r.u8();
  if (k > 1) r.fail();
  n.kind = static_cast<NodeId::Kind>(k);
  n.index = r.i32();
  if (n.index < 0) r.fail();
  return n;
}

inline void put_worker(ByteWriter& w, const WorkerId& id) {
  w.i32(id.process);
  w.i32(id.thread);
}

inline WorkerId get_worker(ByteReader& r) {
  WorkerId id{r.i32(), r.i32()};
  if (id.process < 0 || id.thread < 0) r.fail();
  return id;
}

inline void put_key(ByteWriter& w, const ParamKey& k) {
  w.i32(k.table);
  w.i32(k.row);
  w.i32(k.col);
}

inline ParamKey get_key(ByteReader& r) {
  ParamKey k{r.i32(), r.i32(), r.i32()};
  if (!k.valid()) r.fail();
  return k;
}

inline void put_group(ByteWriter& w, const PushGroup& g) {
  put_worker(w, g.origin);
  w.i64(g.seq_lo);
  w.i64(g.seq_hi);
  w.i64(g.clock);
  w.len(g.records.size());
  for (const auto& rec : g.records) {
    put_key(w, rec.key);
    w.f64(rec.delta);
  }
}

inline PushGroup get_group(ByteReader& r) {
  PushGroup g;
  g.origin = get_worker(r);
  g.seq_lo = r.i64();
  g.seq_hi = r.i64();
  g.clock = r.i64();
  if (g.seq_lo < 1 || g.seq_hi < g.seq_lo) r.fail();
  size_t n = r.len(20);
  g.records.reserve(n);
  for (size_t i = 0; i < n && r.ok(); ++i) {
    WireRecord rec;
    rec.key = get_key(r);
    rec.delta = r.f64();
    g.records.push_back(rec);
  }
  return g;
}

inline void put_acks(ByteWriter& w, const std::vector<AckEntry>& acks) {
  w.len(acks.size());
  for (const auto& a : acks) {
    put_worker(w, a.origin);
    w.i64(a.mark);
  }
}

inline std::vector<AckEntry> get_acks(ByteReader& r) {
  std::vector<AckEntry> out;
  size_t n = r.len(16);
  out.reserve(n);
  for (size_t i = 0; i < n && r.ok(); ++i) {
    AckEntry a;
    a.origin = get_worker(r);
    a.mark = r.i64();
    if (a.mark < 0) r.fail();
    out.push_back(a);
  }
  return out;
}

inline void put_payload(ByteWriter& w, const PushPayload& p) {
  w.len(p.groups.size());
  for (const auto& g : p.groups) put_group(w, g);
  put_acks(w, p.full_marks);
  w.i64(p.global_min_clock);
  w.len(p.covered.size());
  for (const auto& c : p.covered) {
    w.i32(c.table);
    w.i32(c.row);
    w.i64(c.through);
  }
}

inline PushPayload get_payload(ByteReader& r) {
  PushPayload p;
  size_t n = r.len(32);
  p.groups.reserve(n);
  for (size_t i = 0; i < n && r.ok(); ++i) p.groups.push_back(get_group(r));
  p.full_marks = get_acks(r);
  p.global_min_clock = r.i64();
  size_t m = r.len(16);
  p.covered.reserve(m);
  for (size_t i = 0; i < m && r.ok(); ++i) {
    RowCoverage c{r.i32(), r.i32(), r.i64()};
    if (c.table < 0 || c.row < 0) r.fail();
    p.covered.push_back(c);
  }
  return p;
}

}  // namespace detail

inline std::vector<uint8_t> encode(const Message& msg) {
  detail::ByteWriter w;
  w.u8(kWireVersion);
  w.u8(static_cast<uint8_t>(msg.body.index() + 1));
  detail::put_node(w, msg.sender);
  detail::put_node(w, msg.dest);
  switch (msg.body.index()) {
    case 0: {
      const auto& m = std::get<ClientPushMsg>(msg.body);
      w.len(m.groups.size());
      for (const auto& g : m.groups) detail::put_group(w, g);
      detail::put_acks(w, m.acks);
      w.i64(m.process_clock);
      break;
    }
    case 1: {
      const auto& m = std::get<ClientPullMsg>(msg.body);
      w.i32(m.table);
      w.i32(m.row);
      detail::put_worker(w, m.requester);
      w.i64(m.clock);
      w.i64(m.staleness);
      break;
    }
    case 2: {
      const auto& m = std::get<PullReplyMsg>(msg.body);
      w.i32(m.table);
      w.i32(m.row);
      w.u8(m.status);
      detail::put_payload(w, m.payload);
      break;
    }
    case 3:
      detail::put_payload(w, std::get<ServerPushMsg>(msg.body).payload);
      break;
    case 4: {
      const auto& m = std::get<ClockMsg>(msg.body);
      w.i32(m.reporter);
      w.i64(m.value);
      break;
    }
    case 5:
      detail::put_acks(w, std::get<AckMsg>(msg.body).entries);
      break;
  }
  w.u32(detail::crc32(w.buf.data(), w.buf.size()));
  if (w.buf.size() > kMaxFrameBody) throw ProtocolError("encode: frame body exceeds 2^31 bytes");

  std::vector<uint8_t> frame;
  frame.reserve(w.buf.size() + 4);
  uint32_t body_len = static_cast<uint32_t>(w.buf.size());
  for (int i = 3; i >= 0; --i) frame.push_back(static_cast<uint8_t>(body_len >> (8 * i)));
  frame.insert(frame.end(), w.buf.begin(), w.buf.end());
  return frame;
}

// Decodes one complete frame. Truncated, corrupted, or malformed input yields
// an error string, never an exception or a partially filled message.
inline std::optional<Message> decode(std::span<const uint8_t> frame, std::string* error) {
  auto fail = [&](const char* why) -> std::optional<Message> {
    if (error) *error = why;
    return std::nullopt;
  };
  if (frame.size() < 4) return fail("frame shorter than length field");
  uint32_t body_len = 0;
  for (int i = 0; i < 4; ++i) body_len = (body_len << 8) | frame[i];
  if (frame.size() - 4 != body_len) return fail("frame length mismatch");
  if (body_len < 6) return fail("frame too short for header");

  const uint8_t* body = frame.data() + 4;
  uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i)
    stored_crc |= static_cast<uint32_t>(body[body_len - 4 + i]) << (8 * i);
  if (detail::crc32(body, body_len - 4) != stored_crc) return fail("frame checksum mismatch");

  detail::ByteReader r(body, body_len - 4);
  if (r.u8() != kWireVersion) return fail("unsupported wire version");
  uint8_t tag = r.u8();
  Message msg;
  msg.sender = detail::get_node(r);
  msg.dest = detail::get_node(r);
  switch (tag) {
    case 1: {
      ClientPushMsg m;
      size_t n = r.len(32);
      for (size_t i = 0; i < n && r.ok(); ++i) m.groups.push_back(detail::get_group(r));
      m.acks = detail::get_acks(r);
      m.process_clock = r.i64();
      msg.body = std::move(m);
      break;
    }
    case 2: {
      ClientPullMsg m;
      m.table = r.i32();
      m.row = r.i32();
      m.requester = detail::get_worker(r);
      m.clock = r.i64();
      m.staleness = r.i64();
      if (m.table < 0 || m.row < 0 || m.clock < 0 || m.staleness < 0) r.fail();
      msg.body = std::move(m);
      break;
    }
    case 3: {
      PullReplyMsg m;
      m.table = r.i32();
      m.row = r.i32();
      m.status = r.u8();
      if (m.table < 0 || m.row < 0 || m.status > 1) r.fail();
      m.payload = detail::get_payload(r);
      msg.body = std::move(m);
      break;
    }
    case 4: {
      ServerPushMsg m;
      m.payload = detail::get_payload(r);
      msg.body = std::move(m);
      break;
    }
    case 5: {
      ClockMsg m;
      m.reporter = r.i32();
      m.value = r.i64();
      if (m.reporter < 0 || m.value < 0) r.fail();
      msg.body = std::move(m);
      break;
    }
    case 6: {
      AckMsg m;
      m.entries = detail::get_acks(r);
      msg.body = std::move(m);
      break;
    }
    default:
      return fail("unknown variant tag");
  }
  if (!r.ok()) return fail("malformed variant fields");
  if (!r.done()) return fail("trailing bytes after variant fields");
  return msg;
}

}  // namespace bcps
