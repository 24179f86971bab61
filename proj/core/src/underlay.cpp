#include "qmcast/underlay.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace qmcast {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::pair<RouterId, RouterId> normalize(RouterId a, RouterId b) {
  return a < b ? std::pair{a, b} : std::pair{b, a};
}

}  // namespace

TopologyFamily topology_family_from_string(const std::string& name) {
  if (name == "waxman") return TopologyFamily::waxman;
  if (name == "transit_stub") return TopologyFamily::transit_stub;
  if (name == "line") return TopologyFamily::line;
  throw std::invalid_argument("unknown topology family: " + name);
}

std::string to_string(TopologyFamily family) {
  switch (family) {
    case TopologyFamily::waxman: return "waxman";
    case TopologyFamily::transit_stub: return "transit_stub";
    case TopologyFamily::line: return "line";
  }
  return "?";
}

PhysicalTopology::PhysicalTopology(std::uint32_t router_count,
                                   std::vector<Link> links)
    : router_count_(router_count), links_(std::move(links)) {
  adjacency_.resize(router_count_);
  for (std::size_t i = 0; i < links_.size(); ++i) {
    Link& l = links_[i];
    std::tie(l.u, l.v) = normalize(l.u, l.v);
    if (l.u == l.v) throw std::invalid_argument("self-loop link");
    if (l.v >= router_count_) throw std::invalid_argument("link endpoint out of range");
    if (l.delay_ms <= 0.0 || l.bandwidth_mbps <= 0.0)
      throw std::invalid_argument("link delay and bandwidth must be positive");
    adjacency_[l.u].push_back({l.v, i});
    adjacency_[l.v].push_back({l.u, i});
  }
  for (auto& adj : adjacency_) {
    std::sort(adj.begin(), adj.end());
    for (std::size_t i = 1; i < adj.size(); ++i)
      if (adj[i].first == adj[i - 1].first)
        throw std::invalid_argument("duplicate link between router pair");
  }
}

bool PhysicalTopology::router_live(RouterId r) const {
  return has_router(r) && !failed_routers_.count(r);
}

bool PhysicalTopology::link_live(std::size_t link_index) const {
  if (link_index >= links_.size()) return false;
  if (failed_links_.count(link_index)) return false;
  const Link& l = links_[link_index];
  return !failed_routers_.count(l.u) && !failed_routers_.count(l.v);
}

std::optional<std::size_t> PhysicalTopology::find_link(RouterId a, RouterId b) const {
  auto [u, v] = normalize(a, b);
  if (v >= router_count_) return std::nullopt;
  for (const auto& [nb, idx] : adjacency_[u])
    if (nb == v) return idx;
  return std::nullopt;
}

void PhysicalTopology::fail_link(RouterId a, RouterId b) {
  auto idx = find_link(a, b);
  if (!idx)
    throw std::invalid_argument("fail_link: no link " + std::to_string(a) + "-" +
                                std::to_string(b));
  failed_links_.insert(*idx);
}

void PhysicalTopology::fail_router(RouterId r) {
  if (!has_router(r))
    throw std::invalid_argument("fail_router: no router " + std::to_string(r));
  failed_routers_.insert(r);
}

std::vector<std::pair<RouterId, std::size_t>> PhysicalTopology::live_neighbors(
    RouterId r) const {
  std::vector<std::pair<RouterId, std::size_t>> out;
  if (!router_live(r)) return out;
  for (const auto& [nb, idx] : adjacency_[r])
    if (link_live(idx)) out.push_back({nb, idx});
  return out;
}

nlohmann::json PhysicalTopology::to_json() const {
  nlohmann::json j;
  j["routers"] = router_count_;
  auto links = nlohmann::json::array();
  for (const Link& l : links_)
    links.push_back({l.u, l.v, l.delay_ms, l.bandwidth_mbps});
  j["links"] = std::move(links);
  auto failed = nlohmann::json::array();
  for (std::size_t idx : failed_links_)
    failed.push_back({{"link", {links_[idx].u, links_[idx].v}}});
  for (RouterId r : failed_routers_) failed.push_back({{"router", r}});
  j["failed"] = std::move(failed);
  return j;
}

PhysicalTopology PhysicalTopology::from_json(const nlohmann::json& j) {
  std::vector<Link> links;
  for (const auto& l : j.at("links"))
    links.push_back({l.at(0).get<RouterId>(), l.at(1).get<RouterId>(),
                     l.at(2).get<double>(), l.at(3).get<double>()});
  PhysicalTopology topo(j.at("routers").get<std::uint32_t>(), std::move(links));
  for (const auto& f : j.at("failed")) {
    if (f.contains("link"))
      topo.fail_link(f["link"].at(0).get<RouterId>(), f["link"].at(1).get<RouterId>());
    else
      topo.fail_router(f.at("router").get<RouterId>());
  }
  return topo;
}

double NoiseStream::apply(double exact_ms) {
  if (factor_ == 0.0) return exact_ms;
  std::uniform_real_distribution<double> mult(1.0 - factor_, 1.0 + factor_);
  return exact_ms * mult(rng_);
}

namespace {

// Union-find connectivity check over live elements.
bool connected(const PhysicalTopology& topo) {
  std::uint32_t n = topo.router_count();
  if (n == 0) return false;
  std::vector<std::uint32_t> parent(n);
  for (std::uint32_t i = 0; i < n; ++i) parent[i] = i;
  std::function<std::uint32_t(std::uint32_t)> find = [&](std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < topo.links().size(); ++i)
    if (topo.link_live(i))
      parent[find(topo.links()[i].u)] = find(topo.links()[i].v);
  std::uint32_t root = find(0);
  for (std::uint32_t i = 1; i < n; ++i)
    if (find(i) != root) return false;
  return true;
}

double draw_delay(const TopologyParams& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(p.delay_min_ms, p.delay_max_ms);
  return d(rng);
}

double draw_bandwidth(const TopologyParams& p, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, p.bandwidth_choices_mbps.size() - 1);
  return p.bandwidth_choices_mbps[d(rng)];
}

std::vector<Link> build_waxman(std::uint32_t n, const TopologyParams& p,
                               std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coord(0.0, 1.0);
  std::vector<std::pair<double, double>> pos(n);
  for (auto& xy : pos) xy = {coord(rng), coord(rng)};
  double max_dist = 0.0;
  auto dist = [&](std::uint32_t a, std::uint32_t b) {
    double dx = pos[a].first - pos[b].first, dy = pos[a].second - pos[b].second;
    return std::sqrt(dx * dx + dy * dy);
  };
  for (std::uint32_t a = 0; a < n; ++a)
    for (std::uint32_t b = a + 1; b < n; ++b) max_dist = std::max(max_dist, dist(a, b));
  if (max_dist == 0.0) max_dist = 1.0;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<Link> links;
  for (std::uint32_t a = 0; a < n; ++a)
    for (std::uint32_t b = a + 1; b < n; ++b) {
      double prob = p.waxman_alpha * std::exp(-dist(a, b) / (p.waxman_beta * max_dist));
      if (u01(rng) < prob)
        links.push_back({a, b, draw_delay(p, rng), draw_bandwidth(p, rng)});
    }
  return links;
}

// Two levels: a connected transit backbone plus stub routers hanging off it.
std::vector<Link> build_transit_stub(std::uint32_t n, const TopologyParams& p,
                                     std::mt19937_64& rng) {
  std::uint32_t transit = std::max<std::uint32_t>(
      2, static_cast<std::uint32_t>(std::lround(std::sqrt(double(n)))));
  transit = std::min(transit, n);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<Link> links;
  std::set<std::pair<RouterId, RouterId>> used;
  auto add = [&](RouterId a, RouterId b) {
    auto key = normalize(a, b);
    if (a == b || used.count(key)) return;
    used.insert(key);
    links.push_back({a, b, draw_delay(p, rng), draw_bandwidth(p, rng)});
  };
  // backbone: random tree plus extra chords
  for (std::uint32_t i = 1; i < transit; ++i) {
    std::uniform_int_distribution<std::uint32_t> pick(0, i - 1);
    add(i, pick(rng));
  }
  for (std::uint32_t a = 0; a < transit; ++a)
    for (std::uint32_t b = a + 1; b < transit; ++b)
      if (u01(rng) < 0.3) add(a, b);
  // stubs: one uplink each, sometimes a second for multihoming
  for (std::uint32_t s = transit; s < n; ++s) {
    std::uniform_int_distribution<std::uint32_t> pick(0, transit - 1);
    RouterId first = pick(rng);
    add(s, first);
    if (transit > 1 && u01(rng) < 0.2) {
      RouterId second = pick(rng);
      if (second != first) add(s, second);
    }
  }
  return links;
}

std::vector<Link> build_line(std::uint32_t n, const TopologyParams& p,
                             std::mt19937_64& rng) {
  std::vector<Link> links;
  for (std::uint32_t i = 0; i + 1 < n; ++i)
    links.push_back({i, i + 1, draw_delay(p, rng), draw_bandwidth(p, rng)});
  return links;
}

}  // namespace

PhysicalTopology generate_topology(std::uint32_t router_count,
                                   const TopologyParams& params,
                                   std::uint64_t seed) {
  if (router_count < 2)
    throw std::invalid_argument("generate_topology: router_count must be >= 2");
  if (params.delay_min_ms <= 0.0 || params.delay_max_ms < params.delay_min_ms)
    throw std::invalid_argument("generate_topology: bad delay range");
  if (params.bandwidth_choices_mbps.empty())
    throw std::invalid_argument("generate_topology: no bandwidth choices");
  for (double b : params.bandwidth_choices_mbps)
    if (b <= 0.0) throw std::invalid_argument("generate_topology: bandwidth must be positive");

  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < params.max_connectivity_retries; ++attempt) {
    std::vector<Link> links;
    switch (params.family) {
      case TopologyFamily::waxman: links = build_waxman(router_count, params, rng); break;
      case TopologyFamily::transit_stub:
        links = build_transit_stub(router_count, params, rng);
        break;
      case TopologyFamily::line: links = build_line(router_count, params, rng); break;
    }
    PhysicalTopology topo(router_count, std::move(links));
    if (connected(topo)) return topo;
  }
  throw std::runtime_error("generate_topology: no connected topology after " +
                           std::to_string(params.max_connectivity_retries) +
                           " attempts (seed " + std::to_string(seed) + ")");
}

namespace {

// Dijkstra over live links, delay-weighted. Returns per-router distance.
std::vector<double> dijkstra(const PhysicalTopology& topo, RouterId from) {
  std::vector<double> dist(topo.router_count(), kInf);
  if (!topo.router_live(from)) return dist;
  dist[from] = 0.0;
  using Item = std::pair<double, RouterId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  heap.push({0.0, from});
  while (!heap.empty()) {
    auto [d, r] = heap.top();
    heap.pop();
    if (d > dist[r]) continue;
    for (const auto& [nb, idx] : topo.live_neighbors(r)) {
      double nd = d + topo.links()[idx].delay_ms;
      if (nd < dist[nb]) {
        dist[nb] = nd;
        heap.push({nd, nb});
      }
    }
  }
  return dist;
}

}  // namespace

std::optional<RoutePath> shortest_route(const PhysicalTopology& topo,
                                        RouterId src, RouterId dst) {
  if (!topo.router_live(src) || !topo.router_live(dst)) return std::nullopt;
  if (src == dst) return RoutePath{};
  std::vector<double> to_dst = dijkstra(topo, dst);
  if (to_dst[src] == kInf) return std::nullopt;

  // Walk from src toward dst, always taking the lowest-id neighbor that
  // stays on a shortest path; this yields the lexicographically smallest
  // hop sequence among equal-delay paths.
  RoutePath path;
  path.hops.push_back(src);
  RouterId cur = src;
  while (cur != dst) {
    RouterId next = cur;
    std::size_t next_link = 0;
    bool found = false;
    for (const auto& [nb, idx] : topo.live_neighbors(cur)) {
      if (topo.links()[idx].delay_ms + to_dst[nb] == to_dst[cur]) {
        next = nb;
        next_link = idx;
        found = true;
        break;  // neighbors ascend by id
      }
    }
    if (!found) return std::nullopt;  // numeric edge case; treat as unreachable
    path.total_delay_ms += topo.links()[next_link].delay_ms;
    path.bottleneck_mbps = std::min(path.bottleneck_mbps, topo.links()[next_link].bandwidth_mbps);
    path.hops.push_back(next);
    cur = next;
  }
  return path;
}

std::optional<double> one_way_delay_ms(const PhysicalTopology& topo, RouterId a,
                                       RouterId b) {
  auto route = shortest_route(topo, a, b);
  if (!route) return std::nullopt;
  return route->total_delay_ms;
}

bool route_live(const PhysicalTopology& topo, const RoutePath& route) {
  if (route.hops.empty()) return true;
  if (!topo.router_live(route.hops.front())) return false;
  for (std::size_t i = 0; i + 1 < route.hops.size(); ++i) {
    if (!topo.router_live(route.hops[i + 1])) return false;
    auto link = topo.find_link(route.hops[i], route.hops[i + 1]);
    if (!link || !topo.link_live(*link)) return false;
  }
  return true;
}

std::optional<double> rtt_ms(const PhysicalTopology& topo, RouterId a, RouterId b,
                             NoiseStream* noise) {
  auto one_way = one_way_delay_ms(topo, a, b);
  if (!one_way) return std::nullopt;
  double exact = 2.0 * *one_way;
  if (noise && noise->factor() != 0.0 && a != b) return noise->apply(exact);
  return exact;
}

double max_rtt_ms(const PhysicalTopology& topo) {
  double best = 0.0;
  for (RouterId r = 0; r < topo.router_count(); ++r) {
    if (!topo.router_live(r)) continue;
    std::vector<double> dist = dijkstra(topo, r);
    for (double d : dist)
      if (d != kInf) best = std::max(best, 2.0 * d);
  }
  return best;
}

}  // namespace qmcast
