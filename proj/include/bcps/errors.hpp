// Copyright (c) bcps contributors.
// Licensed under the Apache 2.0 License.
#pragma once

#include <stdexcept>
#include <string>

namespace bcps {

// Caller broke an API precondition (bad key, seq gap on issue, clock regression...).
struct ContractViolation : std::logic_error {
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Bad experiment / table / topology configuration.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A peer sent something the protocol forbids (seq gap on a link, bad frame...).
struct ProtocolError : std::runtime_error {
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

// A single Inc exceeded the per-table magnitude cap u. Rejected, never blocked.
struct MagnitudeCapError : std::runtime_error {
  explicit MagnitudeCapError(const std::string& what) : std::runtime_error(what) {}
};

// Socket-mode read could not reach the required freshness before the timeout.
struct StalenessUnavailable : std::runtime_error {
  explicit StalenessUnavailable(const std::string& what) : std::runtime_error(what) {}
};

// Every peer connection ended cleanly (orderly close) while work remained.
struct PeerShutdown : std::runtime_error {
  explicit PeerShutdown(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bcps
