#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qmcast/adapt.hpp"
#include "qmcast/metrics.hpp"
#include "qmcast/tree.hpp"
#include "qmcast/underlay.hpp"

namespace qmcast {

enum class EventKind {
  peer_arrival,
  peer_departure,
  element_failure,
  poll_tick,
  complaint,
  notification_delivery,
  retry,
};

std::string to_string(EventKind kind);

struct FailureElement {
  // link endpoints when is_link, router id otherwise
  bool is_link = true;
  RouterId a = 0;
  RouterId b = 0;
};

// One weighted entry of the requested-service mix.
struct ServiceMixEntry {
  std::vector<TransformId> chain;
  double weight = 1.0;
};

struct ScenarioTopology {
  std::uint32_t routers = 100;
  TopologyParams params{.waxman_alpha = 0.1, .waxman_beta = 0.5};
};

struct ScenarioPeers {
  std::uint32_t count = 200;
  double arrival_rate_per_s = 1.0;
  double mean_session_s = 300.0;
  double max_delay_ms_min = 300.0;
  double max_delay_ms_max = 1500.0;
  std::vector<double> min_bandwidth_choices_mbps = {1.0, 5.0, 10.0};
  int capacity_min = 1;
  int capacity_max = 3;
  std::vector<ServiceMixEntry> service_mix = {
      {{}, 0.7}, {{"f"}, 0.2}, {{"f", "g"}, 0.1}};
  std::map<TransformId, double> host_transform_probs = {{"f", 0.3}, {"g", 0.2}};
  int host_slots_min = 1;
  int host_slots_max = 2;
};

struct ScenarioServer {
  RouterId router = 0;
  int capacity = 16;
};

struct ScenarioFailures {
  std::vector<std::pair<double, FailureElement>> script;  // (time_ms, element)
  std::uint32_t random_link_count = 20;
  double window_min_ms = 240000.0;
  double window_max_ms = 840000.0;
};

struct ScenarioPolicy {
  std::size_t candidate_count = 5;     // k
  double switch_delta = 0.1;           // predicate / switch hysteresis
  double tolerance = 0.1;              // QoS degradation band before complaint
  double parent_timeout_ms = 500.0;
  int split_threshold = 8;
  std::size_t milestones = 4;
  bool maintenance = true;
  double poll_interval_ms = 1000.0;
  double retry_backoff_ms = 5000.0;
  double noise_factor = 0.0;
  std::uint32_t infra_nodes = 4;
};

struct Scenario {
  std::string name = "default";
  ScenarioTopology topology;
  ScenarioPeers peers;
  ScenarioServer server;
  ScenarioFailures failures;
  ScenarioPolicy policy;
  double duration_ms = 1200000.0;
  std::uint64_t seed = 1;

  // Strict parse: unknown keys anywhere are errors. Throws
  // std::invalid_argument with the offending path.
  static Scenario from_json(const nlohmann::json& j);
  static Scenario from_file(const std::string& path);
  void validate() const;  // throws std::invalid_argument
};

struct EventRecord {
  double time_ms = 0.0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::peer_arrival;
  std::int64_t peer = -1;
  std::string detail;
};

enum class RunMode { adaptive, baseline_rejoin };

struct RunResult {
  MetricsReport report;
  std::vector<EventRecord> log;
  MulticastTree tree;
  PhysicalTopology topology;
  ZoneSpace space;  // final zone-space snapshot
};

// Executes the scenario to its duration. Identical (scenario, seed, mode)
// yields a bit-identical event log and report. validate_each_event runs the
// structural tree checks after every event (used by the acceptance suite).
RunResult run(const Scenario& scenario, std::uint64_t seed,
              RunMode mode = RunMode::adaptive, bool validate_each_event = false);

// Identical workload; failure repairs bypass adaptation and re-attach
// through the root server only.
RunResult run_baseline(const Scenario& scenario, std::uint64_t seed,
                       bool validate_each_event = false);

}  // namespace qmcast
