#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qmcast/coords.hpp"
#include "qmcast/ddht.hpp"
#include "qmcast/service.hpp"
#include "qmcast/underlay.hpp"

namespace qmcast {

// A participant: where it sits, what it wants, what it can forward or host.
struct PeerNode {
  PeerId id = 0;
  RouterId router = 0;
  std::optional<ServiceRequest> request;  // the server and pure hosts have none
  int capacity = 0;
  std::vector<TransformId> hosted_components;
  int component_slots = 0;
  MilestoneVector vector;
};

using PeerRegistry = std::map<PeerId, PeerNode>;

// Root-to-tail chain of peers with the spec produced at the tail.
struct ServicePath {
  std::vector<PeerId> chain;
  ServiceSpec produced;
  double cumulative_delay_ms = 0.0;
  double bottleneck_mbps = kUnboundedBandwidthMbps;
};

// The rooted overlay tree. Structure mutations go through attach /
// detach_subtree / move_subtree; per-edge underlay route annotations are
// refreshed via refresh_routes after any underlay change.
class MulticastTree {
 public:
  struct Node {
    std::optional<PeerId> parent;
    std::set<PeerId> children;
    RouterId router = 0;
    std::vector<TransformId> applied;  // transforms this node adds
    ServiceSpec produced;              // parent's produced + applied
    std::optional<RoutePath> edge_route;  // from parent; nullopt = disrupted
  };

  MulticastTree() = default;
  MulticastTree(PeerId root, RouterId root_router);

  PeerId root() const { return root_; }
  bool attached(PeerId p) const { return nodes_.count(p) > 0; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return nodes_.empty() ? 0 : nodes_.size() - 1; }
  const std::map<PeerId, Node>& nodes() const { return nodes_; }
  const Node& node(PeerId p) const { return nodes_.at(p); }

  void attach(PeerId child, PeerId parent, RouterId child_router,
              std::vector<TransformId> applied, RoutePath edge_route);

  // Removes the peer and its whole subtree; returns every removed id in
  // ascending order (the peer itself included).
  std::vector<PeerId> detach_subtree(PeerId peer);

  // Reparents a node, keeping its subtree. The caller guards against
  // cycles (new_parent must not be a descendant of peer).
  void move_subtree(PeerId peer, PeerId new_parent, RoutePath new_edge_route);

  // Replaces one edge annotation (parent-local repair).
  void set_edge_route(PeerId peer, std::optional<RoutePath> route);

  bool is_descendant(PeerId candidate, PeerId ancestor) const;
  std::vector<PeerId> subtree(PeerId peer) const;  // ascending, peer included

  // Edges stay pinned to the route established when they were built; a
  // failure on that route disrupts the edge until a repair re-derives it.
  // Returns the child peers of newly broken edges, ascending.
  std::vector<PeerId> invalidate_broken_routes(const PhysicalTopology& topo);

  // Recomputes every edge annotation from scratch (used after from_json to
  // rebuild annotations for metric recomputation).
  std::vector<PeerId> refresh_routes(const PhysicalTopology& topo);

  // Cumulative (delay, bottleneck) from the root using current edge
  // annotations; nullopt when any edge on the path is disrupted.
  std::optional<std::pair<double, double>> realized_path(PeerId peer) const;

  // Structural sanity: single root, acyclic parent links, produced-spec
  // composition consistent. Throws std::logic_error on violation.
  void validate() const;

  nlohmann::json to_json() const;
  static MulticastTree from_json(const nlohmann::json& j);

 private:
  void recompose_produced(PeerId from);

  PeerId root_ = 0;
  std::map<PeerId, Node> nodes_;
};

struct JoinOutcome {
  enum class Status {
    attached,
    rejected_no_candidates,
    rejected_qos_infeasible,
    rejected_capacity,
  };
  Status status = Status::rejected_no_candidates;
  PeerId parent = 0;                  // valid when attached
  ServicePath path;                   // root..peer when attached
  std::vector<PeerId> recruited_hosts;
  double duration_ms = 0.0;           // measurement + handshake round trips
  std::vector<Notification> notifications;  // from the DDHT updates

  bool ok() const { return status == Status::attached; }
};

std::string to_string(JoinOutcome::Status s);

// The three-step QoS-constrained join. Reuse of an existing provider is
// strictly preferred; otherwise a prefix provider is extended with off-tree
// component hosts placed nearest the joining peer. On success the tree and
// the global store (parent load, host state, the peer's path metric) are
// updated and any triggered notifications are returned.
JoinOutcome join_peer(const PeerNode& peer, MulticastTree& tree, ZoneSpace& space,
                      const PhysicalTopology& topo, const PeerRegistry& registry,
                      std::size_t k, const std::set<PeerId>& exclude = {});

// Rejoin for a complainant that may still be attached: the same candidate
// search and heuristics, but an attached peer keeps its subtree and is
// reparented; its own subtree is excluded from the search to preserve
// acyclicity.
JoinOutcome rejoin_peer(const PeerNode& peer, MulticastTree& tree, ZoneSpace& space,
                        const PhysicalTopology& topo, const PeerRegistry& registry,
                        std::size_t k, const std::set<PeerId>& exclude = {});

// Restricted variants used by the non-adaptive comparator: the only
// candidate considered is the root server itself.
JoinOutcome join_peer_root_only(const PeerNode& peer, MulticastTree& tree,
                                ZoneSpace& space, const PhysicalTopology& topo,
                                const PeerRegistry& registry);

// Helper shared by repairs: syncs the peer and every descendant (their path
// metrics move together).
std::vector<Notification> sync_subtree(PeerId peer, const MulticastTree& tree,
                                       ZoneSpace& space, const PeerRegistry& registry);

struct LeaveResult {
  bool was_attached = false;
  std::vector<PeerId> orphaned_subscribers;  // ascending; need rejoin
  std::vector<PeerId> released_hosts;        // ascending; back off-tree
  std::vector<Notification> notifications;
};

// Detaches the peer's subtree, drops its store entry, and flips every
// orphaned descendant's entry off-tree.
LeaveResult leave_peer(PeerId peer, MulticastTree& tree, ZoneSpace& space,
                       const PeerRegistry& registry);

// Refreshes the peer's store entry from the live tree + registry state.
// Emits the resulting notifications.
std::vector<Notification> sync_entry(PeerId peer, const MulticastTree& tree,
                                     ZoneSpace& space, const PeerRegistry& registry);

}  // namespace qmcast
