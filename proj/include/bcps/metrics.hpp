// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bcps/errors.hpp"

namespace bcps {

inline std::string fmt_double(double v) {
  char buf[40];
  snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_int(int64_t v) {
  char buf[24];
  snprintf(buf, sizeof buf, "%lld", static_cast<long long>(v));
  return buf;
}

// One metric family: a header row, then appended data rows, plain bytes so
// identical runs produce identical files.
class CsvFile {
 public:
  CsvFile(const std::string& path, const std::string& header) : out_(path, std::ios::trunc) {
    if (!out_) throw ConfigError("metrics: cannot write " + path);
    out_ << header << "\n";
  }

  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

// An ordered, escape-correct JSON emitter; just enough for the summary file.
class JsonWriter {
 public:
  JsonWriter& begin_object() { return open('{'); }
  JsonWriter& end_object() { return close('}'); }
  JsonWriter& begin_array() { return open('['); }
  JsonWriter& end_array() { return close(']'); }

  JsonWriter& key(const std::string& name) {
    comma();
    text(name);
    buf_ += ':';
    pending_value_ = true;
    return *this;
  }

  JsonWriter& value(const std::string& s) {
    comma();
    text(s);
    return *this;
  }
  JsonWriter& value(const char* s) { return value(std::string(s)); }
  JsonWriter& value(double v) {
    comma();
    buf_ += fmt_double(v);
    return *this;
  }
  JsonWriter& value(int64_t v) {
    comma();
    buf_ += fmt_int(v);
    return *this;
  }
  JsonWriter& value(uint64_t v) {
    comma();
    char b[24];
    snprintf(b, sizeof b, "%llu", static_cast<unsigned long long>(v));
    buf_ += b;
    return *this;
  }
  JsonWriter& value(bool v) {
    comma();
    buf_ += v ? "true" : "false";
    return *this;
  }

  const std::string& str() const { return buf_; }

 private:
  JsonWriter& open(char c) {
    comma();
    buf_ += c;
    first_.push_back(true);
    return *this;
  }

  JsonWriter& close(char c) {
    buf_ += c;
    first_.pop_back();
    return *this;
  }

  void comma() {
    if (pending_value_) {
      pending_value_ = false;
      return;
    }
    if (!first_.empty()) {
      if (!first_.back()) buf_ += ',';
      first_.back() = false;
    }
  }

  void text(const std::string& s) {
    buf_ += '"';
    for (char c : s) {
      switch (c) {
        case '"': buf_ += "\\\""; break;
        case '\\': buf_ += "\\\\"; break;
        case '\n': buf_ += "\\n"; break;
        case '\r': buf_ += "\\r"; break;
        case '\t': buf_ += "\\t"; break;
        default:
          if (static_cast<unsigned char>(c) < 0x20) {
            char b[8];
            snprintf(b, sizeof b, "\\u%04x", c);
            buf_ += b;
          } else {
            buf_ += c;
          }
      }
    }
    buf_ += '"';
  }

  std::string buf_;
  std::vector<bool> first_;
  bool pending_value_ = false;
};

// One asserted (or recorded) run condition for the summary.
struct BoundCheck {
  std::string name;
  bool ok = true;
  bool asserted = true;  // recorded-only entries never fail the run
  bool has_values = false;
  double observed = 0.0;
  double limit = 0.0;

  static BoundCheck flag(const std::string& name, bool ok) { return {name, ok, true, false}; }

  static BoundCheck within(const std::string& name, double observed, double limit) {
    return {name, observed <= limit, true, true, observed, limit};
  }

  static BoundCheck recorded(const std::string& name, double observed, double limit) {
    return {name, observed <= limit, false, true, observed, limit};
  }
};

inline bool all_bounds_hold(const std::vector<BoundCheck>& bounds) {
  for (const BoundCheck& b : bounds)
    if (b.asserted && !b.ok) return false;
  return true;
}

// The output directory for one run: one CSV per metric family plus the
// versioned JSON summary.
class MetricsDir {
 public:
  explicit MetricsDir(const std::string& dir) : dir_(dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("metrics: cannot create directory " + dir);
  }

  const std::string& dir() const { return dir_; }
  std::string path(const std::string& file) const { return dir_ + "/" + file; }

  CsvFile csv(const std::string& file, const std::string& header) const {
    return CsvFile(path(file), header);
  }

  void write_summary(const std::string& mode, const std::string& workload, uint64_t seed,
                     const std::vector<BoundCheck>& bounds,
                     const std::vector<std::pair<std::string, double>>& observations) const {
    JsonWriter w;
    w.begin_object();
    w.key("schema_version").value(static_cast<int64_t>(1));
    w.key("mode").value(mode);
    w.key("workload").value(workload);
    w.key("seed").value(seed);
    w.key("pass").value(all_bounds_hold(bounds));
    w.key("bounds").begin_array();
    for (const BoundCheck& b : bounds) {
      w.begin_object();
      w.key("name").value(b.name);
      w.key("ok").value(b.ok);
      w.key("asserted").value(b.asserted);
      if (b.has_values) {
        w.key("observed").value(b.observed);
        w.key("limit").value(b.limit);
      }
      w.end_object();
    }
    w.end_array();
    w.key("observations").begin_object();
    for (const auto& [name, v] : observations) w.key(name).value(v);
    w.end_object();
    w.end_object();

    std::ofstream out(path("summary.json"), std::ios::trunc);
    if (!out) throw ConfigError("metrics: cannot write " + path("summary.json"));
    out << w.str() << "\n";
  }

 private:
  std::string dir_;
};

}  // namespace bcps
