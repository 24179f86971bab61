#include <fstream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qmcast/sim.hpp"

namespace qmcast {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::invalid_argument("scenario: " + path + ": " + what);
}

// Unknown keys are errors: silent typos must not change a run.
void check_keys(const json& j, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) fail(path, "unknown key \"" + key + "\"");
}

template <typename T>
T get_or(const json& j, const std::string& path, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(path + "." + key, "wrong type");
  }
}

std::pair<double, double> get_range(const json& j, const std::string& path,
                                    const char* key, std::pair<double, double> fallback) {
  if (!j.contains(key)) return fallback;
  const json& r = j.at(key);
  if (!r.is_array() || r.size() != 2) fail(path + "." + key, "expected [lo, hi]");
  return {r.at(0).get<double>(), r.at(1).get<double>()};
}

void parse_topology(const json& j, ScenarioTopology& out) {
  check_keys(j, "topology",
             {"routers", "family", "delay_ms", "bandwidth_mbps", "waxman_alpha",
              "waxman_beta"});
  out.routers = get_or<std::uint32_t>(j, "topology", "routers", out.routers);
  if (j.contains("family"))
    out.params.family = topology_family_from_string(j.at("family").get<std::string>());
  auto delay = get_range(j, "topology", "delay_ms",
                         {out.params.delay_min_ms, out.params.delay_max_ms});
  out.params.delay_min_ms = delay.first;
  out.params.delay_max_ms = delay.second;
  out.params.bandwidth_choices_mbps = get_or<std::vector<double>>(
      j, "topology", "bandwidth_mbps", out.params.bandwidth_choices_mbps);
  out.params.waxman_alpha = get_or<double>(j, "topology", "waxman_alpha",
                                           out.params.waxman_alpha);
  out.params.waxman_beta = get_or<double>(j, "topology", "waxman_beta",
                                          out.params.waxman_beta);
}

void parse_peers(const json& j, ScenarioPeers& out) {
  check_keys(j, "peers",
             {"count", "arrival_rate_per_s", "mean_session_s", "max_delay_ms",
              "min_bandwidth_mbps", "capacity", "service_mix", "hosts"});
  out.count = get_or<std::uint32_t>(j, "peers", "count", out.count);
  out.arrival_rate_per_s =
      get_or<double>(j, "peers", "arrival_rate_per_s", out.arrival_rate_per_s);
  out.mean_session_s = get_or<double>(j, "peers", "mean_session_s", out.mean_session_s);
  auto delay = get_range(j, "peers", "max_delay_ms",
                         {out.max_delay_ms_min, out.max_delay_ms_max});
  out.max_delay_ms_min = delay.first;
  out.max_delay_ms_max = delay.second;
  out.min_bandwidth_choices_mbps = get_or<std::vector<double>>(
      j, "peers", "min_bandwidth_mbps", out.min_bandwidth_choices_mbps);
  auto cap = get_range(j, "peers", "capacity",
                       {double(out.capacity_min), double(out.capacity_max)});
  out.capacity_min = static_cast<int>(cap.first);
  out.capacity_max = static_cast<int>(cap.second);
  if (j.contains("service_mix")) {
    out.service_mix.clear();
    for (const auto& entry : j.at("service_mix")) {
      check_keys(entry, "peers.service_mix[]", {"chain", "weight"});
      ServiceMixEntry e;
      e.chain = entry.at("chain").get<std::vector<TransformId>>();
      e.weight = get_or<double>(entry, "peers.service_mix[]", "weight", 1.0);
      out.service_mix.push_back(std::move(e));
    }
  }
  if (j.contains("hosts")) {
    const json& h = j.at("hosts");
    check_keys(h, "peers.hosts", {"transform_probs", "slots"});
    if (h.contains("transform_probs")) {
      out.host_transform_probs.clear();
      for (const auto& [t, p] : h.at("transform_probs").items())
        out.host_transform_probs[t] = p.get<double>();
    }
    auto slots = get_range(h, "peers.hosts", "slots",
                           {double(out.host_slots_min), double(out.host_slots_max)});
    out.host_slots_min = static_cast<int>(slots.first);
    out.host_slots_max = static_cast<int>(slots.second);
  }
}

void parse_failures(const json& j, ScenarioFailures& out) {
  check_keys(j, "failures", {"script", "random_link_count", "window_ms"});
  if (j.contains("script")) {
    out.random_link_count = 0;
    for (const auto& entry : j.at("script")) {
      check_keys(entry, "failures.script[]", {"time_ms", "link", "router"});
      double t = entry.at("time_ms").get<double>();
      FailureElement el;
      if (entry.contains("link")) {
        const json& l = entry.at("link");
        if (!l.is_array() || l.size() != 2) fail("failures.script[].link", "expected [u, v]");
        el.is_link = true;
        el.a = l.at(0).get<RouterId>();
        el.b = l.at(1).get<RouterId>();
      } else if (entry.contains("router")) {
        el.is_link = false;
        el.a = entry.at("router").get<RouterId>();
      } else {
        fail("failures.script[]", "needs \"link\" or \"router\"");
      }
      out.script.push_back({t, el});
    }
  }
  out.random_link_count = get_or<std::uint32_t>(j, "failures", "random_link_count",
                                                out.random_link_count);
  auto window = get_range(j, "failures", "window_ms",
                          {out.window_min_ms, out.window_max_ms});
  out.window_min_ms = window.first;
  out.window_max_ms = window.second;
}

void parse_policy(const json& j, ScenarioPolicy& out) {
  check_keys(j, "policy",
             {"k", "delta", "tau", "timeout_ms", "split_threshold", "milestones",
              "maintenance", "poll_interval_ms", "retry_backoff_ms", "noise_factor",
              "infra_nodes"});
  out.candidate_count = get_or<std::size_t>(j, "policy", "k", out.candidate_count);
  out.switch_delta = get_or<double>(j, "policy", "delta", out.switch_delta);
  out.tolerance = get_or<double>(j, "policy", "tau", out.tolerance);
  out.parent_timeout_ms = get_or<double>(j, "policy", "timeout_ms", out.parent_timeout_ms);
  out.split_threshold = get_or<int>(j, "policy", "split_threshold", out.split_threshold);
  out.milestones = get_or<std::size_t>(j, "policy", "milestones", out.milestones);
  out.maintenance = get_or<bool>(j, "policy", "maintenance", out.maintenance);
  out.poll_interval_ms =
      get_or<double>(j, "policy", "poll_interval_ms", out.poll_interval_ms);
  out.retry_backoff_ms =
      get_or<double>(j, "policy", "retry_backoff_ms", out.retry_backoff_ms);
  out.noise_factor = get_or<double>(j, "policy", "noise_factor", out.noise_factor);
  out.infra_nodes = get_or<std::uint32_t>(j, "policy", "infra_nodes", out.infra_nodes);
}

}  // namespace

Scenario Scenario::from_json(const nlohmann::json& j) {
  check_keys(j, "(root)",
             {"name", "topology", "peers", "server", "failures", "policy",
              "duration_ms", "seed"});
  Scenario s;
  s.name = get_or<std::string>(j, "(root)", "name", s.name);
  if (j.contains("topology")) parse_topology(j.at("topology"), s.topology);
  if (j.contains("peers")) parse_peers(j.at("peers"), s.peers);
  if (j.contains("server")) {
    check_keys(j.at("server"), "server", {"router", "capacity"});
    s.server.router = get_or<RouterId>(j.at("server"), "server", "router", s.server.router);
    s.server.capacity = get_or<int>(j.at("server"), "server", "capacity", s.server.capacity);
  }
  if (j.contains("failures")) parse_failures(j.at("failures"), s.failures);
  if (j.contains("policy")) parse_policy(j.at("policy"), s.policy);
  s.duration_ms = get_or<double>(j, "(root)", "duration_ms", s.duration_ms);
  s.seed = get_or<std::uint64_t>(j, "(root)", "seed", s.seed);
  s.validate();
  return s;
}

Scenario Scenario::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("scenario: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("scenario: " + path + ": " + e.what());
  }
  return from_json(j);
}

void Scenario::validate() const {
  auto expect = [](bool cond, const char* what) {
    if (!cond) throw std::invalid_argument(std::string("scenario: ") + what);
  };
  expect(topology.routers >= 2, "topology.routers must be >= 2");
  expect(topology.params.delay_min_ms > 0.0 &&
             topology.params.delay_max_ms >= topology.params.delay_min_ms,
         "topology.delay_ms must be a positive [lo, hi]");
  expect(!topology.params.bandwidth_choices_mbps.empty(),
         "topology.bandwidth_mbps must be non-empty");
  for (double b : topology.params.bandwidth_choices_mbps)
    expect(b > 0.0, "topology.bandwidth_mbps entries must be positive");
  expect(peers.arrival_rate_per_s > 0.0, "peers.arrival_rate_per_s must be > 0");
  expect(peers.mean_session_s > 0.0, "peers.mean_session_s must be > 0");
  expect(peers.max_delay_ms_min > 0.0 &&
             peers.max_delay_ms_max >= peers.max_delay_ms_min,
         "peers.max_delay_ms must be a positive [lo, hi]");
  expect(!peers.min_bandwidth_choices_mbps.empty(),
         "peers.min_bandwidth_mbps must be non-empty");
  for (double b : peers.min_bandwidth_choices_mbps)
    expect(b > 0.0, "peers.min_bandwidth_mbps entries must be positive");
  expect(peers.capacity_min >= 0 && peers.capacity_max >= peers.capacity_min,
         "peers.capacity must be a sane [lo, hi]");
  expect(!peers.service_mix.empty(), "peers.service_mix must be non-empty");
  double weight_sum = 0.0;
  for (const auto& e : peers.service_mix) {
    expect(e.weight > 0.0, "peers.service_mix weights must be > 0");
    weight_sum += e.weight;
  }
  expect(weight_sum > 0.0, "peers.service_mix weights must sum > 0");
  for (const auto& [t, p] : peers.host_transform_probs)
    expect(p >= 0.0 && p <= 1.0, "peers.hosts.transform_probs must be in [0, 1]");
  expect(peers.host_slots_min >= 0 && peers.host_slots_max >= peers.host_slots_min,
         "peers.hosts.slots must be a sane [lo, hi]");
  expect(server.router < topology.routers, "server.router out of range");
  expect(server.capacity >= 1, "server.capacity must be >= 1");
  expect(failures.window_min_ms >= 0.0 &&
             failures.window_max_ms >= failures.window_min_ms,
         "failures.window_ms must be a sane [lo, hi]");
  for (const auto& [t, el] : failures.script)
    expect(t >= 0.0, "failures.script times must be >= 0");
  expect(policy.candidate_count >= 1, "policy.k must be >= 1");
  expect(policy.switch_delta > 0.0 && policy.switch_delta < 1.0,
         "policy.delta must be in (0, 1)");
  expect(policy.tolerance >= 0.0, "policy.tau must be >= 0");
  expect(policy.parent_timeout_ms > 0.0, "policy.timeout_ms must be > 0");
  expect(policy.split_threshold >= 1, "policy.split_threshold must be >= 1");
  expect(policy.milestones >= 1, "policy.milestones must be >= 1");
  expect(policy.milestones <= topology.routers,
         "policy.milestones cannot exceed topology.routers");
  expect(policy.poll_interval_ms > 0.0, "policy.poll_interval_ms must be > 0");
  expect(policy.retry_backoff_ms > 0.0, "policy.retry_backoff_ms must be > 0");
  expect(policy.noise_factor >= 0.0 && policy.noise_factor < 1.0,
         "policy.noise_factor must be in [0, 1)");
  expect(policy.infra_nodes >= 1, "policy.infra_nodes must be >= 1");
  expect(duration_ms > 0.0, "duration_ms must be > 0");
}

std::string to_string(EventKind kind) {
  switch (kind) {
    case EventKind::peer_arrival: return "peer-arrival";
    case EventKind::peer_departure: return "peer-departure";
    case EventKind::element_failure: return "element-failure";
    case EventKind::poll_tick: return "poll-tick";
    case EventKind::complaint: return "complaint";
    case EventKind::notification_delivery: return "notification-delivery";
    case EventKind::retry: return "retry";
  }
  return "?";
}

}  // namespace qmcast
