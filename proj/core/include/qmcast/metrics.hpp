#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qmcast/tree.hpp"
#include "qmcast/underlay.hpp"

namespace qmcast {

struct StressResult {
  double stress_avg = 0.0;  // mean over physical links carrying >= 1 edge
  int stress_max = 0;
  bool empty = true;  // no tree edges traverse any physical link
};

// Overlay edges per used physical link. Edge routes are recomputed against
// the current topology.
StressResult stress(const MulticastTree& tree, const PhysicalTopology& topo);

// Sum of tree-edge delays over the weight of the minimum spanning tree on
// the metric closure (shortest-path delays) of the attached peers' routers.
// nullopt when the tree has no edges or some pair is unreachable.
std::optional<double> stretch(const MulticastTree& tree, const PhysicalTopology& topo);

struct RecoveryRecord {
  std::uint64_t failure_seq = 0;  // event seq of the triggering failure
  PeerId peer = 0;
  bool success = false;
  double latency_ms = 0.0;
};

struct SpeedupResult {
  bool comparable = false;  // >= 1 failure event recovered in both modes
  double value = 0.0;       // baseline mean / adaptive mean
  double adaptive_mean_ms = 0.0;
  double baseline_mean_ms = 0.0;
  std::size_t paired = 0;             // failure events recovered in both modes
  std::size_t unpaired_adaptive = 0;  // events only the adaptive mode recovered
  std::size_t unpaired_baseline = 0;  // events only the baseline recovered
};

// Means are taken over the successful recovery latencies of failure events
// recovered in BOTH modes; events one mode could not recover are reported
// as unpaired and excluded from the ratio.
SpeedupResult speedup(const std::vector<RecoveryRecord>& adaptive,
                      const std::vector<RecoveryRecord>& baseline);

struct MetricsReport {
  std::string scenario_id;
  std::uint64_t seed = 0;
  std::size_t peers_final = 0;

  StressResult stress;
  std::optional<double> stretch;

  std::vector<RecoveryRecord> recoveries;
  std::optional<double> recovery_mean_ms;  // successful recoveries only
  std::optional<double> speedup;           // filled by compare mode

  std::uint64_t control_hops = 0;

  std::uint64_t joins = 0;
  std::uint64_t rejections_no_candidates = 0;
  std::uint64_t rejections_qos = 0;
  std::uint64_t rejections_capacity = 0;
  std::uint64_t switches = 0;
  std::uint64_t notifications = 0;
  std::uint64_t complaints = 0;

  std::uint64_t arrivals = 0;
  std::uint64_t attached = 0;
  std::uint64_t departed = 0;
  std::uint64_t rejected = 0;
  std::uint64_t pending = 0;

  std::uint64_t admission_violations = 0;  // must stay 0
  std::uint64_t unattached_leave_warnings = 0;

  std::uint64_t total_rejections() const {
    return rejections_no_candidates + rejections_qos + rejections_capacity;
  }
};

}  // namespace qmcast
