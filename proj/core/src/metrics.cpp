#include "qmcast/metrics.hpp"

#include <algorithm>
#include <limits>

namespace qmcast {

StressResult stress(const MulticastTree& tree, const PhysicalTopology& topo) {
  std::map<std::size_t, int> per_link;
  for (const auto& [id, node] : tree.nodes()) {
    if (!node.parent) continue;
    auto route = shortest_route(topo, tree.node(*node.parent).router, node.router);
    if (!route) continue;  // disrupted edges carry no traffic
    for (std::size_t i = 0; i + 1 < route->hops.size(); ++i) {
      auto link = topo.find_link(route->hops[i], route->hops[i + 1]);
      if (link) ++per_link[*link];
    }
  }
  StressResult out;
  if (per_link.empty()) return out;
  out.empty = false;
  long total = 0;
  for (const auto& [link, count] : per_link) {
    total += count;
    out.stress_max = std::max(out.stress_max, count);
  }
  out.stress_avg = static_cast<double>(total) / static_cast<double>(per_link.size());
  return out;
}

std::optional<double> stretch(const MulticastTree& tree, const PhysicalTopology& topo) {
  if (tree.edge_count() == 0) return std::nullopt;

  double numerator = 0.0;
  std::vector<PeerId> members;
  for (const auto& [id, node] : tree.nodes()) {
    members.push_back(id);
    if (!node.parent) continue;
    auto route = shortest_route(topo, tree.node(*node.parent).router, node.router);
    if (!route) return std::nullopt;
    numerator += route->total_delay_ms;
  }

  // Metric-closure MST over the members' routers (Prim on the complete
  // graph with shortest-path delay weights). Distances are deduplicated by
  // router since peers may share one.
  std::map<RouterId, std::map<RouterId, double>> dist;
  for (PeerId m : members) {
    RouterId r = tree.node(m).router;
    if (dist.count(r)) continue;
    auto& row = dist[r];
    for (PeerId o : members) {
      RouterId ro = tree.node(o).router;
      if (row.count(ro)) continue;
      auto d = one_way_delay_ms(topo, r, ro);
      if (!d) return std::nullopt;
      row[ro] = *d;
    }
  }

  std::size_t n = members.size();
  std::vector<bool> in_mst(n, false);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  best[0] = 0.0;
  double mst_weight = 0.0;
  for (std::size_t round = 0; round < n; ++round) {
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i)
      if (!in_mst[i] && (pick == n || best[i] < best[pick])) pick = i;
    in_mst[pick] = true;
    mst_weight += best[pick];
    RouterId rp = tree.node(members[pick]).router;
    for (std::size_t i = 0; i < n; ++i) {
      if (in_mst[i]) continue;
      double w = dist[rp][tree.node(members[i]).router];
      if (w < best[i]) best[i] = w;
    }
  }
  if (mst_weight <= 0.0) {
    // All members co-located: both sums are zero only if the overlay also
    // pays no delay; define stretch as 1 in that degenerate case.
    return numerator <= 0.0 ? std::optional<double>(1.0) : std::nullopt;
  }
  return numerator / mst_weight;
}

SpeedupResult speedup(const std::vector<RecoveryRecord>& adaptive,
                      const std::vector<RecoveryRecord>& baseline) {
  SpeedupResult out;
  // A failure event counts as recovered in a mode when that mode recorded
  // at least one successful recovery for it; only events recovered in both
  // modes enter the means.
  std::map<std::uint64_t, std::vector<double>> adaptive_ok, baseline_ok;
  for (const auto& r : adaptive)
    if (r.success) adaptive_ok[r.failure_seq].push_back(r.latency_ms);
  for (const auto& r : baseline)
    if (r.success) baseline_ok[r.failure_seq].push_back(r.latency_ms);

  double sum_a = 0.0, sum_b = 0.0;
  std::size_t n_a = 0, n_b = 0;
  for (const auto& [event, lat_a] : adaptive_ok) {
    auto it = baseline_ok.find(event);
    if (it == baseline_ok.end()) {
      ++out.unpaired_adaptive;
      continue;
    }
    ++out.paired;
    for (double v : lat_a) sum_a += v;
    n_a += lat_a.size();
    for (double v : it->second) sum_b += v;
    n_b += it->second.size();
  }
  for (const auto& [event, lat_b] : baseline_ok)
    if (!adaptive_ok.count(event)) ++out.unpaired_baseline;

  if (out.paired == 0 || n_a == 0 || n_b == 0 || sum_a <= 0.0) return out;
  out.comparable = true;
  out.adaptive_mean_ms = sum_a / static_cast<double>(n_a);
  out.baseline_mean_ms = sum_b / static_cast<double>(n_b);
  out.value = out.baseline_mean_ms / out.adaptive_mean_ms;
  return out;
}

}  // namespace qmcast
