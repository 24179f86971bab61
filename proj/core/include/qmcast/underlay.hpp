#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace qmcast {

using RouterId = std::uint32_t;

// Sentinel for "no bandwidth constraint" (empty routes, the server's own path).
inline constexpr double kUnboundedBandwidthMbps = 1e15;

struct Link {
  RouterId u = 0;  // normalized u < v
  RouterId v = 0;
  double delay_ms = 0.0;
  double bandwidth_mbps = 0.0;
};

enum class TopologyFamily { waxman, transit_stub, line };

TopologyFamily topology_family_from_string(const std::string& name);
std::string to_string(TopologyFamily family);

struct TopologyParams {
  TopologyFamily family = TopologyFamily::waxman;
  double delay_min_ms = 1.0;
  double delay_max_ms = 50.0;
  std::vector<double> bandwidth_choices_mbps = {10.0, 100.0, 1000.0};
  // Waxman edge probability: alpha * exp(-d / (beta * L)), d = euclidean
  // distance between router positions, L = max pairwise distance.
  double waxman_alpha = 0.4;
  double waxman_beta = 0.6;
  int max_connectivity_retries = 50;
};

// A delay-shortest underlay route. Empty hops == src-equals-dst route.
struct RoutePath {
  std::vector<RouterId> hops;  // src..dst inclusive; empty for src == dst
  double total_delay_ms = 0.0;
  double bottleneck_mbps = kUnboundedBandwidthMbps;
};

// The physical network of routers and links. Immutable after generation
// except through the fail_* operations; all queries are read-only.
class PhysicalTopology {
 public:
  PhysicalTopology() = default;
  PhysicalTopology(std::uint32_t router_count, std::vector<Link> links);

  std::uint32_t router_count() const { return router_count_; }
  const std::vector<Link>& links() const { return links_; }

  bool has_router(RouterId r) const { return r < router_count_; }
  bool router_live(RouterId r) const;
  // A link is usable only when it and both endpoints are live.
  bool link_live(std::size_t link_index) const;
  std::optional<std::size_t> find_link(RouterId a, RouterId b) const;

  // Failure injection. Idempotent; throws std::invalid_argument on unknown
  // elements.
  void fail_link(RouterId a, RouterId b);
  void fail_router(RouterId r);

  const std::set<std::size_t>& failed_links() const { return failed_links_; }
  const std::set<RouterId>& failed_routers() const { return failed_routers_; }

  // Neighbors reachable over live links, ascending router id.
  std::vector<std::pair<RouterId, std::size_t>> live_neighbors(RouterId r) const;

  nlohmann::json to_json() const;
  static PhysicalTopology from_json(const nlohmann::json& j);

 private:
  std::uint32_t router_count_ = 0;
  std::vector<Link> links_;
  std::vector<std::vector<std::pair<RouterId, std::size_t>>> adjacency_;
  std::set<std::size_t> failed_links_;
  std::set<RouterId> failed_routers_;
};

// Multiplicative measurement noise; factor 0 leaves measurements exact and
// draws nothing from the stream.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, double factor) : rng_(seed), factor_(factor) {}
  double factor() const { return factor_; }
  double apply(double exact_ms);

 private:
  std::mt19937_64 rng_;
  double factor_;
};

// Deterministic generator: identical (router_count, params, seed) yields a
// bit-identical topology. Throws std::invalid_argument on router_count < 2
// and std::runtime_error when connectivity cannot be reached within the
// retry budget (the message names the seed).
PhysicalTopology generate_topology(std::uint32_t router_count,
                                   const TopologyParams& params,
                                   std::uint64_t seed);

// Minimum-total-delay path over live links; lexicographically smallest hop
// sequence among equal-delay paths. nullopt when src and dst are
// disconnected or either endpoint is dead.
std::optional<RoutePath> shortest_route(const PhysicalTopology& topo,
                                        RouterId src, RouterId dst);

// One-way shortest delay; nullopt when unreachable.
std::optional<double> one_way_delay_ms(const PhysicalTopology& topo,
                                       RouterId a, RouterId b);

// True while every hop of an established route is still live.
bool route_live(const PhysicalTopology& topo, const RoutePath& route);

// RTT = 2x one-way delay, optionally perturbed by the run's noise stream.
// nullopt ("unmeasurable") when unreachable, never a number.
std::optional<double> rtt_ms(const PhysicalTopology& topo, RouterId a,
                             RouterId b, NoiseStream* noise = nullptr);

// Largest exact RTT over live router pairs; sizes the DDHT key space.
double max_rtt_ms(const PhysicalTopology& topo);

}  // namespace qmcast
