#include "qmcast/tree.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace qmcast {

MulticastTree::MulticastTree(PeerId root, RouterId root_router) : root_(root) {
  Node n;
  n.router = root_router;
  nodes_[root] = std::move(n);
}

void MulticastTree::attach(PeerId child, PeerId parent, RouterId child_router,
                           std::vector<TransformId> applied, RoutePath edge_route) {
  if (attached(child)) throw std::logic_error("attach: peer already on tree");
  if (!attached(parent)) throw std::logic_error("attach: parent not on tree");
  Node n;
  n.parent = parent;
  n.router = child_router;
  n.applied = std::move(applied);
  n.produced = nodes_[parent].produced;
  for (const TransformId& t : n.applied) n.produced.chain.push_back(t);
  n.edge_route = std::move(edge_route);
  nodes_[child] = std::move(n);
  nodes_[parent].children.insert(child);
}

std::vector<PeerId> MulticastTree::detach_subtree(PeerId peer) {
  if (!attached(peer)) return {};
  if (peer == root_) throw std::logic_error("detach_subtree: cannot remove the root");
  std::vector<PeerId> removed = subtree(peer);
  if (auto p = nodes_[peer].parent) nodes_[*p].children.erase(peer);
  for (PeerId id : removed) nodes_.erase(id);
  return removed;
}

void MulticastTree::move_subtree(PeerId peer, PeerId new_parent,
                                 RoutePath new_edge_route) {
  if (!attached(peer) || !attached(new_parent))
    throw std::logic_error("move_subtree: both peers must be on tree");
  if (peer == root_) throw std::logic_error("move_subtree: cannot move the root");
  if (is_descendant(new_parent, peer))
    throw std::logic_error("move_subtree: new parent is a descendant");
  Node& n = nodes_[peer];
  ServiceSpec input = n.produced;
  input.chain.resize(input.chain.size() - n.applied.size());
  if (!(nodes_[new_parent].produced == input))
    throw std::logic_error("move_subtree: new parent produces a different spec (peer " +
                           std::to_string(peer) + " input " + input.label() +
                           ", parent " + std::to_string(new_parent) + " produces " +
                           nodes_[new_parent].produced.label() + ")");
  if (auto p = n.parent) nodes_[*p].children.erase(peer);
  n.parent = new_parent;
  n.edge_route = std::move(new_edge_route);
  nodes_[new_parent].children.insert(peer);
}

void MulticastTree::set_edge_route(PeerId peer, std::optional<RoutePath> route) {
  Node& n = nodes_.at(peer);
  if (!n.parent) throw std::logic_error("set_edge_route: root has no edge");
  n.edge_route = std::move(route);
}

bool MulticastTree::is_descendant(PeerId candidate, PeerId ancestor) const {
  if (!attached(candidate) || !attached(ancestor)) return false;
  std::optional<PeerId> cur = candidate;
  while (cur) {
    if (*cur == ancestor) return true;
    cur = nodes_.at(*cur).parent;
  }
  return false;
}

std::vector<PeerId> MulticastTree::subtree(PeerId peer) const {
  std::vector<PeerId> out;
  if (!attached(peer)) return out;
  std::vector<PeerId> stack{peer};
  while (!stack.empty()) {
    PeerId cur = stack.back();
    stack.pop_back();
    out.push_back(cur);
    for (PeerId c : nodes_.at(cur).children) stack.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<PeerId> MulticastTree::invalidate_broken_routes(
    const PhysicalTopology& topo) {
  std::vector<PeerId> broken;
  for (auto& [id, n] : nodes_) {
    if (!n.parent || !n.edge_route) continue;
    if (!route_live(topo, *n.edge_route)) {
      n.edge_route = std::nullopt;
      broken.push_back(id);
    }
  }
  return broken;
}

std::vector<PeerId> MulticastTree::refresh_routes(const PhysicalTopology& topo) {
  std::vector<PeerId> disrupted;
  for (auto& [id, n] : nodes_) {
    if (!n.parent) continue;
    auto route = shortest_route(topo, nodes_.at(*n.parent).router, n.router);
    if (!route) disrupted.push_back(id);
    n.edge_route = std::move(route);
  }
  return disrupted;
}

std::optional<std::pair<double, double>> MulticastTree::realized_path(
    PeerId peer) const {
  if (!attached(peer)) return std::nullopt;
  // Summed root-down so a child's delay equals its parent's delay plus the
  // last edge, bit-exactly; admission checks rely on that.
  std::vector<const Node*> edges;
  std::optional<PeerId> cur = peer;
  while (nodes_.at(*cur).parent) {
    const Node& n = nodes_.at(*cur);
    if (!n.edge_route) return std::nullopt;
    edges.push_back(&n);
    cur = n.parent;
  }
  double delay = 0.0;
  double bottleneck = kUnboundedBandwidthMbps;
  for (auto it = edges.rbegin(); it != edges.rend(); ++it) {
    delay += (*it)->edge_route->total_delay_ms;
    bottleneck = std::min(bottleneck, (*it)->edge_route->bottleneck_mbps);
  }
  return std::pair{delay, bottleneck};
}

void MulticastTree::validate() const {
  if (nodes_.empty()) return;
  if (!nodes_.count(root_)) throw std::logic_error("validate: missing root");
  if (nodes_.at(root_).parent) throw std::logic_error("validate: root has a parent");
  std::size_t reached = 0;
  std::vector<PeerId> stack{root_};
  std::set<PeerId> seen;
  while (!stack.empty()) {
    PeerId cur = stack.back();
    stack.pop_back();
    if (!seen.insert(cur).second) throw std::logic_error("validate: cycle");
    ++reached;
    const Node& n = nodes_.at(cur);
    ServiceSpec expect = n.parent ? nodes_.at(*n.parent).produced : ServiceSpec{};
    for (const TransformId& t : n.applied) expect.chain.push_back(t);
    if (!(expect == n.produced))
      throw std::logic_error("validate: produced spec composition broken");
    for (PeerId c : n.children) {
      if (!nodes_.count(c) || nodes_.at(c).parent != cur)
        throw std::logic_error("validate: parent/child link mismatch");
      stack.push_back(c);
    }
  }
  if (reached != nodes_.size())
    throw std::logic_error("validate: detached nodes present");
}

nlohmann::json MulticastTree::to_json() const {
  nlohmann::json j;
  j["root"] = root_;
  auto edges = nlohmann::json::array();
  for (const auto& [id, n] : nodes_) {
    if (!n.parent) continue;
    double delay = n.edge_route ? n.edge_route->total_delay_ms : -1.0;
    double bw = n.edge_route ? n.edge_route->bottleneck_mbps : -1.0;
    edges.push_back({*n.parent, id, delay, bw});
  }
  j["edges"] = std::move(edges);
  nlohmann::json specs = nlohmann::json::object();
  nlohmann::json routers = nlohmann::json::object();
  for (const auto& [id, n] : nodes_) {
    specs[std::to_string(id)] = n.produced.chain;
    routers[std::to_string(id)] = n.router;
  }
  j["specs"] = std::move(specs);
  j["routers"] = std::move(routers);
  return j;
}

MulticastTree MulticastTree::from_json(const nlohmann::json& j) {
  PeerId root = j.at("root").get<PeerId>();
  const auto& routers = j.at("routers");
  const auto& specs = j.at("specs");
  MulticastTree tree(root, routers.at(std::to_string(root)).get<RouterId>());

  std::map<PeerId, std::vector<PeerId>> children;
  std::map<PeerId, PeerId> parent_of;
  for (const auto& e : j.at("edges")) {
    PeerId p = e.at(0).get<PeerId>(), c = e.at(1).get<PeerId>();
    children[p].push_back(c);
    parent_of[c] = p;
  }
  auto spec_of = [&](PeerId id) {
    ServiceSpec s;
    s.chain = specs.at(std::to_string(id)).get<std::vector<TransformId>>();
    return s;
  };
  std::vector<PeerId> stack{root};
  while (!stack.empty()) {
    PeerId cur = stack.back();
    stack.pop_back();
    for (PeerId c : children[cur]) {
      ServiceSpec parent_spec = spec_of(cur), child_spec = spec_of(c);
      if (!(parent_spec == child_spec) && !parent_spec.is_strict_prefix_of(child_spec))
        throw std::invalid_argument("tree json: child spec does not extend parent spec");
      std::vector<TransformId> applied(child_spec.chain.begin() + parent_spec.chain.size(),
                                       child_spec.chain.end());
      // Edge annotations are refreshed from the topology after load.
      tree.attach(c, cur, routers.at(std::to_string(c)).get<RouterId>(),
                  std::move(applied), RoutePath{});
      stack.push_back(c);
    }
  }
  return tree;
}

std::string to_string(JoinOutcome::Status s) {
  switch (s) {
    case JoinOutcome::Status::attached: return "attached";
    case JoinOutcome::Status::rejected_no_candidates: return "no-candidates";
    case JoinOutcome::Status::rejected_qos_infeasible: return "qos-infeasible";
    case JoinOutcome::Status::rejected_capacity: return "capacity";
  }
  return "?";
}

std::vector<Notification> sync_subtree(PeerId peer, const MulticastTree& tree,
                                       ZoneSpace& space, const PeerRegistry& registry) {
  std::vector<Notification> out;
  for (PeerId id : tree.subtree(peer)) {
    auto notes = sync_entry(id, tree, space, registry);
    out.insert(out.end(), notes.begin(), notes.end());
  }
  return out;
}

std::vector<Notification> sync_entry(PeerId peer, const MulticastTree& tree,
                                     ZoneSpace& space, const PeerRegistry& registry) {
  const PeerNode& node = registry.at(peer);
  DdhtEntry entry;
  entry.peer_id = peer;
  entry.key = node.vector;
  entry.peers.capacity = node.capacity;
  entry.peers.hostable_transforms = node.hosted_components;
  entry.peers.component_slots_free = node.component_slots;
  if (tree.attached(peer)) {
    const auto& tn = tree.node(peer);
    entry.peers.load = static_cast<int>(tn.children.size());
    entry.peers.component_slots_free =
        node.component_slots - static_cast<int>(tn.applied.size());
    auto realized = tree.realized_path(peer);
    PathMetric pm;
    pm.produced = tn.produced;
    if (realized) {
      pm.delay_ms = realized->first;
      pm.bottleneck_mbps = realized->second;
    } else {
      pm.delay_ms = kDisruptedDelayMs;
      pm.bottleneck_mbps = 0.0;
    }
    entry.path = std::move(pm);
    entry.peers.services_provided = {tree.node(peer).produced};
  }
  EntryEvent event =
      space.find(peer) ? EntryEvent::updated : EntryEvent::inserted;
  space.insert_entry(entry);
  return space.evaluate_predicates(event, entry);
}

namespace {

// Measurement bookkeeping for one join attempt: every route actually probed
// contributes its RTT; probes run in parallel so the attempt's duration is
// the slowest probe plus the attach handshake.
class MeasurementLog {
 public:
  explicit MeasurementLog(const PhysicalTopology& topo) : topo_(topo) {}

  const std::optional<RoutePath>& route(RouterId a, RouterId b) {
    auto key = a < b ? std::pair{a, b} : std::pair{b, a};
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      it = cache_.emplace(key, shortest_route(topo_, key.first, key.second)).first;
      if (it->second && a != b)
        max_rtt_ = std::max(max_rtt_, 2.0 * it->second->total_delay_ms);
    }
    return it->second;
  }

  double max_rtt() const { return max_rtt_; }

 private:
  const PhysicalTopology& topo_;
  std::map<std::pair<RouterId, RouterId>, std::optional<RoutePath>> cache_;
  double max_rtt_ = 0.0;
};

struct PlannedAttach {
  PeerId parent = 0;
  // host id + transforms it applies, in chain order after the parent
  std::vector<std::pair<PeerId, std::vector<TransformId>>> hosts;
  double total_delay_ms = 0.0;
  double bottleneck_mbps = 0.0;
};

std::vector<PeerId> root_chain(const MulticastTree& tree, PeerId tail) {
  std::vector<PeerId> chain;
  std::optional<PeerId> cur = tail;
  while (cur) {
    chain.push_back(*cur);
    cur = tree.node(*cur).parent;
  }
  std::reverse(chain.begin(), chain.end());
  return chain;
}

JoinOutcome finish_rejection(JoinOutcome::Status status, MeasurementLog& log) {
  JoinOutcome out;
  out.status = status;
  out.duration_ms = log.max_rtt();
  return out;
}

// Places the peer under the chosen parent. In reattach mode the peer is
// already on the tree and keeps its subtree; otherwise it attaches fresh.
void place_peer(PeerId peer, PeerId parent, RouterId peer_router,
                const RoutePath& route, bool reattach, MulticastTree& tree,
                ZoneSpace& space, const PeerRegistry& registry,
                std::vector<Notification>& notes) {
  auto collect = [&notes](std::vector<Notification> n) {
    notes.insert(notes.end(), n.begin(), n.end());
  };
  if (reattach) {
    std::optional<PeerId> old_parent = tree.node(peer).parent;
    tree.move_subtree(peer, parent, route);
    if (old_parent && *old_parent != parent && space.find(*old_parent))
      collect(sync_entry(*old_parent, tree, space, registry));
    collect(sync_entry(parent, tree, space, registry));
    collect(sync_subtree(peer, tree, space, registry));
  } else {
    tree.attach(peer, parent, peer_router, {}, route);
    collect(sync_entry(parent, tree, space, registry));
    collect(sync_entry(peer, tree, space, registry));
  }
}

JoinOutcome join_from_candidates(const PeerNode& peer, MulticastTree& tree,
                                 ZoneSpace& space, const PhysicalTopology& topo,
                                 const PeerRegistry& registry,
                                 const std::vector<ZoneSpace::Candidate>& candidates,
                                 bool reattach) {
  if (!peer.request) throw std::logic_error("join: peer has no service request");
  const ServiceRequest& request = *peer.request;
  MeasurementLog log(topo);
  if (candidates.empty())
    return finish_rejection(JoinOutcome::Status::rejected_no_candidates, log);

  bool capacity_blocked = false;

  // H1: reuse an existing provider of exactly the requested spec.
  const ZoneSpace::Candidate* best_direct = nullptr;
  double best_direct_delay = 0.0;
  RoutePath best_direct_route;
  for (const auto& cand : candidates) {
    if (!cand.direct) continue;
    const auto& route = log.route(peer.router, registry.at(cand.entry.peer_id).router);
    if (!route) continue;
    double total = cand.entry.path->delay_ms + route->total_delay_ms;
    double bw = std::min(cand.entry.path->bottleneck_mbps, route->bottleneck_mbps);
    bool qos_ok = total <= request.qos.max_delay_ms && bw >= request.qos.min_bandwidth_mbps;
    if (!qos_ok) continue;
    if (!cand.entry.spare_capacity()) {
      capacity_blocked = true;
      continue;
    }
    if (!best_direct || total < best_direct_delay ||
        (total == best_direct_delay && cand.entry.peer_id < best_direct->entry.peer_id)) {
      best_direct = &cand;
      best_direct_delay = total;
      best_direct_route = *route;
    }
  }
  if (best_direct) {
    PeerId parent = best_direct->entry.peer_id;
    JoinOutcome out;
    out.status = JoinOutcome::Status::attached;
    out.parent = parent;
    out.path.produced = request.spec;
    out.path.cumulative_delay_ms = best_direct_delay;
    out.path.bottleneck_mbps =
        std::min(best_direct->entry.path->bottleneck_mbps, best_direct_route.bottleneck_mbps);
    place_peer(peer.id, parent, peer.router, best_direct_route, reattach, tree,
               space, registry, out.notifications);
    out.path.chain = root_chain(tree, peer.id);
    out.duration_ms = log.max_rtt();
    auto handshake = log.route(peer.router, registry.at(parent).router);
    if (handshake) out.duration_ms += 2.0 * (*handshake).total_delay_ms;
    return out;
  }

  // H2: extend a prefix provider with off-tree component hosts, each placed
  // as near as possible to the joining peer (H3).
  std::vector<const ZoneSpace::Candidate*> prefixes;
  std::vector<const ZoneSpace::Candidate*> hosts;
  for (const auto& cand : candidates) {
    if (cand.direct) continue;
    if (cand.entry.on_tree()) {
      if (cand.entry.path->produced.is_strict_prefix_of(request.spec)) {
        if (cand.entry.spare_capacity()) prefixes.push_back(&cand);
        else capacity_blocked = true;
      }
    } else if (cand.entry.peers.component_slots_free > 0 &&
               cand.entry.spare_capacity()) {
      hosts.push_back(&cand);
    }
  }

  const PlannedAttach* best_plan = nullptr;
  PlannedAttach plan_storage;
  for (const auto* c : prefixes) {
    const ServiceSpec& have = c->entry.path->produced;
    std::vector<TransformId> missing(request.spec.chain.begin() + have.chain.size(),
                                     request.spec.chain.end());
    // Per-transform nearest capable host with a free slot.
    std::map<PeerId, int> slots_left;
    for (const auto* h : hosts)
      slots_left[h->entry.peer_id] = h->entry.peers.component_slots_free;
    std::vector<std::pair<PeerId, std::vector<TransformId>>> assigned;
    bool feasible = true;
    for (const TransformId& t : missing) {
      const ZoneSpace::Candidate* chosen = nullptr;
      double chosen_rtt = 0.0;
      for (const auto* h : hosts) {
        if (slots_left[h->entry.peer_id] <= 0) continue;
        const auto& caps = h->entry.peers.hostable_transforms;
        if (std::find(caps.begin(), caps.end(), t) == caps.end()) continue;
        const auto& route = log.route(peer.router, registry.at(h->entry.peer_id).router);
        if (!route) continue;
        double r = 2.0 * route->total_delay_ms;
        if (!chosen || r < chosen_rtt ||
            (r == chosen_rtt && h->entry.peer_id < chosen->entry.peer_id)) {
          chosen = h;
          chosen_rtt = r;
        }
      }
      if (!chosen) {
        feasible = false;
        break;
      }
      --slots_left[chosen->entry.peer_id];
      if (!assigned.empty() && assigned.back().first == chosen->entry.peer_id)
        assigned.back().second.push_back(t);  // same host, consecutive transforms
      else
        assigned.push_back({chosen->entry.peer_id, {t}});
    }
    if (!feasible) continue;

    // Measure the constructed chain c -> h1 -> ... -> hm -> peer.
    double total = c->entry.path->delay_ms;
    double bw = c->entry.path->bottleneck_mbps;
    RouterId prev_router = registry.at(c->entry.peer_id).router;
    bool routable = true;
    for (const auto& [hid, transforms] : assigned) {
      const auto& leg = log.route(prev_router, registry.at(hid).router);
      if (!leg) { routable = false; break; }
      total += leg->total_delay_ms;
      bw = std::min(bw, leg->bottleneck_mbps);
      prev_router = registry.at(hid).router;
    }
    if (routable) {
      const auto& last = log.route(prev_router, peer.router);
      if (!last) routable = false;
      else {
        total += last->total_delay_ms;
        bw = std::min(bw, last->bottleneck_mbps);
      }
    }
    if (!routable) continue;
    if (total > request.qos.max_delay_ms || bw < request.qos.min_bandwidth_mbps) continue;

    if (!best_plan || total < best_plan->total_delay_ms ||
        (total == best_plan->total_delay_ms && c->entry.peer_id < best_plan->parent)) {
      plan_storage = PlannedAttach{c->entry.peer_id, assigned, total, bw};
      best_plan = &plan_storage;
    }
  }

  if (!best_plan) {
    return finish_rejection(capacity_blocked
                                ? JoinOutcome::Status::rejected_capacity
                                : JoinOutcome::Status::rejected_qos_infeasible,
                            log);
  }

  // Apply the plan: hosts attach in chain order, then the peer.
  JoinOutcome out;
  out.status = JoinOutcome::Status::attached;
  PeerId prev = best_plan->parent;
  for (const auto& [hid, transforms] : best_plan->hosts) {
    const auto& leg = log.route(tree.node(prev).router, registry.at(hid).router);
    tree.attach(hid, prev, registry.at(hid).router, transforms, *leg);
    out.recruited_hosts.push_back(hid);
    prev = hid;
  }
  RoutePath last = *log.route(tree.node(prev).router, peer.router);
  auto collect = [&out](std::vector<Notification> n) {
    out.notifications.insert(out.notifications.end(), n.begin(), n.end());
  };
  collect(sync_entry(best_plan->parent, tree, space, registry));
  for (PeerId hid : out.recruited_hosts) collect(sync_entry(hid, tree, space, registry));
  place_peer(peer.id, prev, peer.router, last, reattach, tree, space, registry,
             out.notifications);
  out.parent = prev;
  out.path.chain = root_chain(tree, peer.id);
  out.path.produced = request.spec;
  out.path.cumulative_delay_ms = best_plan->total_delay_ms;
  out.path.bottleneck_mbps = best_plan->bottleneck_mbps;

  out.duration_ms = log.max_rtt();
  auto handshake = log.route(peer.router, registry.at(out.parent).router);
  if (handshake) out.duration_ms += 2.0 * (*handshake).total_delay_ms;
  return out;
}

}  // namespace

JoinOutcome join_peer(const PeerNode& peer, MulticastTree& tree, ZoneSpace& space,
                      const PhysicalTopology& topo, const PeerRegistry& registry,
                      std::size_t k, const std::set<PeerId>& exclude) {
  if (tree.attached(peer.id)) throw std::logic_error("join: peer already attached");
  std::set<PeerId> ex = exclude;
  ex.insert(peer.id);
  auto candidates = space.lookup_candidates(peer.vector, *peer.request, k, ex);
  return join_from_candidates(peer, tree, space, topo, registry, candidates, false);
}

JoinOutcome rejoin_peer(const PeerNode& peer, MulticastTree& tree, ZoneSpace& space,
                        const PhysicalTopology& topo, const PeerRegistry& registry,
                        std::size_t k, const std::set<PeerId>& exclude) {
  std::set<PeerId> ex = exclude;
  ex.insert(peer.id);
  bool reattach = tree.attached(peer.id);
  if (reattach)
    for (PeerId id : tree.subtree(peer.id)) ex.insert(id);
  auto candidates = space.lookup_candidates(peer.vector, *peer.request, k, ex);
  return join_from_candidates(peer, tree, space, topo, registry, candidates, reattach);
}

JoinOutcome join_peer_root_only(const PeerNode& peer, MulticastTree& tree,
                                ZoneSpace& space, const PhysicalTopology& topo,
                                const PeerRegistry& registry) {
  std::vector<ZoneSpace::Candidate> candidates;
  const DdhtEntry* root_entry = space.find(tree.root());
  if (root_entry) {
    CandidateClass cls = classify_candidate(*root_entry, *peer.request);
    // Capacity-blocked root must still be considered so the rejection is
    // attributed to capacity rather than to a missing candidate.
    bool full_direct = root_entry->on_tree() &&
                       root_entry->path->produced == peer.request->spec &&
                       !root_entry->spare_capacity();
    if (cls != CandidateClass::none || full_direct) {
      candidates.push_back({*root_entry, cls == CandidateClass::direct || full_direct,
                            milestone_distance(peer.vector, root_entry->key)});
    }
  }
  return join_from_candidates(peer, tree, space, topo, registry, candidates,
                              tree.attached(peer.id));
}

LeaveResult leave_peer(PeerId peer, MulticastTree& tree, ZoneSpace& space,
                       const PeerRegistry& registry) {
  LeaveResult result;
  if (!tree.attached(peer) || peer == tree.root()) return result;
  result.was_attached = true;

  std::vector<PeerId> sub = tree.subtree(peer);
  std::map<PeerId, bool> is_subscriber;
  for (PeerId id : sub) is_subscriber[id] = tree.node(id).applied.empty();
  std::optional<PeerId> parent = tree.node(peer).parent;

  tree.detach_subtree(peer);

  space.unregister_predicate(peer);
  space.remove_entry(peer);
  for (PeerId id : sub) {
    if (id == peer) continue;
    space.unregister_predicate(id);
    auto notes = sync_entry(id, tree, space, registry);  // now off-tree
    result.notifications.insert(result.notifications.end(), notes.begin(), notes.end());
    if (is_subscriber[id]) result.orphaned_subscribers.push_back(id);
    else result.released_hosts.push_back(id);
  }
  if (parent) {
    auto notes = sync_entry(*parent, tree, space, registry);
    result.notifications.insert(result.notifications.end(), notes.begin(), notes.end());
  }
  return result;
}

}  // namespace qmcast
