#include "qmcast/adapt.hpp"

#include <algorithm>
#include <stdexcept>

namespace qmcast {

namespace {

bool within_tolerance(const std::optional<std::pair<double, double>>& realized,
                      const QosRequirement& qos, double tolerance) {
  if (!realized) return false;
  return realized->first <= (1.0 + tolerance) * qos.max_delay_ms &&
         realized->second >= (1.0 - tolerance) * qos.min_bandwidth_mbps;
}

}  // namespace

std::optional<Complaint> monitor(const PeerNode& peer, const MulticastTree& tree,
                                 const RepairPolicy& policy, double now_ms) {
  if (!peer.request || !tree.attached(peer.id) || peer.id == tree.root())
    return std::nullopt;
  auto realized = tree.realized_path(peer.id);
  if (within_tolerance(realized, peer.request->qos, policy.tolerance))
    return std::nullopt;
  Complaint c;
  c.complainant = peer.id;
  c.vector = peer.vector;
  c.request = *peer.request;
  c.observed = realized;
  c.timestamp_ms = now_ms;
  return c;
}

std::string to_string(RepairResult::Outcome o) {
  switch (o) {
    case RepairResult::Outcome::parent_repaired: return "parent-repaired";
    case RepairResult::Outcome::switched: return "switched";
    case RepairResult::Outcome::rejoined: return "rejoined";
    case RepairResult::Outcome::orphan_rejected: return "orphan-rejected";
  }
  return "?";
}

RepairResult handle_complaint(const Complaint& complaint, MulticastTree& tree,
                              ZoneSpace& space, const PhysicalTopology& topo,
                              const PeerRegistry& registry,
                              const RepairPolicy& policy) {
  RepairResult result;
  const PeerNode& peer = registry.at(complaint.complainant);

  std::optional<PeerId> old_parent;
  double pre_join_ms = 0.0;  // complaint exchange or timeout before a rejoin
  std::set<PeerId> exclude;

  if (tree.attached(peer.id)) {
    old_parent = tree.node(peer.id).parent;
    const PeerNode& parent_node = registry.at(*old_parent);
    bool parent_responsive = topo.router_live(parent_node.router) &&
                             tree.realized_path(*old_parent).has_value();
    auto complaint_rtt = rtt_ms(topo, peer.router, parent_node.router);

    if (parent_responsive && complaint_rtt) {
      // Parent-local repair: the parent re-derives the child's route and
      // answers within one extra round trip. It only helps when the
      // violation was transient, i.e. a fresh route restores the QoS band.
      double exchange = 2.0 * *complaint_rtt;
      auto new_route = shortest_route(topo, parent_node.router, peer.router);
      if (new_route) {
        tree.set_edge_route(peer.id, *new_route);
        auto realized = tree.realized_path(peer.id);
        if (within_tolerance(realized, complaint.request.qos, policy.tolerance)) {
          result.outcome = RepairResult::Outcome::parent_repaired;
          result.new_parent = *old_parent;
          result.duration_ms = exchange;
          result.notifications = sync_subtree(peer.id, tree, space, registry);
          return result;
        }
      }
      // Parent answered but could not fix it; rejoin after the exchange.
      pre_join_ms = exchange;
    } else {
      // Unresponsive parent: wait out the timeout, then rejoin without it.
      pre_join_ms = policy.parent_response_timeout_ms;
      exclude.insert(*old_parent);
    }
  }

  JoinOutcome rejoin = rejoin_peer(peer, tree, space, topo, registry,
                                   policy.candidate_count, exclude);
  result.duration_ms = pre_join_ms + rejoin.duration_ms;
  result.notifications = std::move(rejoin.notifications);
  result.rejoin_status = rejoin.status;
  if (rejoin.ok()) {
    result.new_parent = rejoin.parent;
    result.outcome = (old_parent && rejoin.parent == *old_parent)
                         ? RepairResult::Outcome::rejoined
                         : RepairResult::Outcome::switched;
  } else {
    result.outcome = RepairResult::Outcome::orphan_rejected;
  }
  return result;
}

SwitchResult on_notification(const Notification& note, MulticastTree& tree,
                             ZoneSpace& space, const PhysicalTopology& topo,
                             const PeerRegistry& registry,
                             const RepairPolicy& policy) {
  SwitchResult result;
  auto reg_it = registry.find(note.subscriber);
  if (reg_it == registry.end() || !reg_it->second.request) return result;
  const PeerNode& sub = reg_it->second;
  if (!tree.attached(sub.id)) return result;

  const DdhtEntry* cand = space.find(note.candidate);
  if (!cand || !cand->on_tree() || !cand->spare_capacity()) return result;
  if (!(cand->path->produced == sub.request->spec)) return result;
  if (!tree.attached(cand->peer_id)) return result;
  if (cand->peer_id == sub.id || tree.is_descendant(cand->peer_id, sub.id))
    return result;  // cycle guard
  if (tree.node(sub.id).parent == cand->peer_id) return result;

  auto current = tree.realized_path(sub.id);
  if (!current) return result;  // disrupted paths go through complaints

  // Verify the screening estimate with a real measurement.
  auto route = shortest_route(topo, sub.router, registry.at(cand->peer_id).router);
  if (!route) return result;
  double candidate_total = cand->path->delay_ms + route->total_delay_ms;
  if (!(candidate_total < (1.0 - policy.switch_hysteresis) * current->first))
    return result;
  double candidate_bw = std::min(cand->path->bottleneck_mbps, route->bottleneck_mbps);
  if (candidate_bw < sub.request->qos.min_bandwidth_mbps) return result;

  std::optional<PeerId> old_parent = tree.node(sub.id).parent;
  tree.move_subtree(sub.id, cand->peer_id, *route);

  auto collect = [&result](std::vector<Notification> n) {
    result.notifications.insert(result.notifications.end(), n.begin(), n.end());
  };
  if (old_parent && space.find(*old_parent))
    collect(sync_entry(*old_parent, tree, space, registry));
  collect(sync_entry(cand->peer_id, tree, space, registry));
  collect(sync_subtree(sub.id, tree, space, registry));

  // Re-arm the predicate against the improved delay.
  auto realized = tree.realized_path(sub.id);
  if (realized && space.find_registration(sub.id)) {
    PredicateRegistration reg;
    reg.subscriber = sub.id;
    reg.improvement_delta = policy.switch_hysteresis;
    reg.requested = sub.request->spec;
    reg.key = sub.vector;
    reg.reference_delay_ms = realized->first;
    space.register_predicate(std::move(reg));
  }

  result.switched = true;
  result.new_parent = cand->peer_id;
  return result;
}

}  // namespace qmcast
