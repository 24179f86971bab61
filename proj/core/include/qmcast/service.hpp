#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qmcast {

using PeerId = std::uint32_t;
using InfraNodeId = std::uint32_t;
using TransformId = std::string;

// A symbolic chain of transforms applied to the origin stream, first to
// last. The empty chain is the raw stream itself.
struct ServiceSpec {
  std::vector<TransformId> chain;

  bool operator==(const ServiceSpec&) const = default;
  bool is_raw() const { return chain.empty(); }

  // True when this chain is a proper leading subsequence of other's chain
  // (the raw stream is a strict prefix of every non-raw spec).
  bool is_strict_prefix_of(const ServiceSpec& other) const;

  // Human-readable form: "O", "f(O)", "g(f(O))", ...
  std::string label() const;
};

struct QosRequirement {
  double max_delay_ms = 0.0;
  double min_bandwidth_mbps = 0.0;
  bool valid() const { return max_delay_ms > 0.0 && min_bandwidth_mbps > 0.0; }
};

struct ServiceRequest {
  ServiceSpec spec;
  QosRequirement qos;
};

// Root-to-node path summary kept in the global store for on-tree peers.
struct PathMetric {
  double delay_ms = 0.0;
  double bottleneck_mbps = 0.0;
  ServiceSpec produced;
};

// Path-metric delay advertised while a peer's root path is broken; large
// enough that the entry can never win a QoS comparison, finite so it still
// serializes.
inline constexpr double kDisruptedDelayMs = 1e12;

}  // namespace qmcast
