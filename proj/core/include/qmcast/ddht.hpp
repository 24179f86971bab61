#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qmcast/coords.hpp"
#include "qmcast/service.hpp"

namespace qmcast {

struct PeersMetric {
  int capacity = 0;  // max tree children
  int load = 0;      // current tree children
  std::vector<ServiceSpec> services_provided;
  std::vector<TransformId> hostable_transforms;
  int component_slots_free = 0;
};

// One record per peer, keyed by its milestone vector.
struct DdhtEntry {
  PeerId peer_id = 0;
  MilestoneVector key;
  PeersMetric peers;
  std::optional<PathMetric> path;  // present iff the peer is on the tree

  bool on_tree() const { return path.has_value(); }
  bool spare_capacity() const { return peers.load < peers.capacity; }
};

// "Notify me when a closer parent appears": candidate entries whose
// estimated total delay undercuts the subscriber's reference delay by more
// than the improvement fraction trigger a notification.
struct PredicateRegistration {
  PeerId subscriber = 0;
  double improvement_delta = 0.1;  // must be > 0
  ServiceSpec requested;
  MilestoneVector key;             // subscriber's vector
  double reference_delay_ms = 0.0; // subscriber's path delay at registration
};

struct Notification {
  PeerId subscriber = 0;
  PeerId candidate = 0;
};

enum class EntryEvent { inserted, updated, removed };

// Axis-aligned half-open hyperrectangle [lo, hi) per axis.
struct Zone {
  std::vector<std::pair<double, double>> bounds;
  InfraNodeId owner = 0;
  std::map<PeerId, DdhtEntry> entries;
  std::map<PeerId, PredicateRegistration> registrations;

  bool contains(const MilestoneVector& key) const;
  double volume() const;
  std::vector<double> center() const;
  // Squared distance from the box to a point (0 when inside).
  double box_distance_sq(const MilestoneVector& key) const;
};

struct DdhtStats {
  std::uint64_t control_hops = 0;
  std::uint64_t clamped_keys = 0;
  std::uint64_t splits = 0;
};

// CAN-style partition of the milestone space across infrastructure nodes.
// Zones only ever split (never merge), one split at most per insert, at the
// midpoint of the longest axis with ties to the lowest axis index.
class ZoneSpace {
 public:
  ZoneSpace(std::size_t dimension, double outer_bound,
            std::vector<InfraNodeId> infra_pool, int split_threshold = 8);

  std::size_t dimension() const { return dimension_; }
  double outer_bound() const { return outer_bound_; }
  int split_threshold() const { return split_threshold_; }
  const std::vector<Zone>& zones() const { return zones_; }
  const DdhtStats& stats() const { return stats_; }

  // Upsert by peer id; the key is clamped into the outer box on ingestion.
  void insert_entry(DdhtEntry entry);
  // Removing an absent id is a no-op. Registrations of the peer go with it.
  void remove_entry(PeerId peer);

  const DdhtEntry* find(PeerId peer) const;
  std::size_t entry_count() const { return peer_zone_.size(); }

  // Throws std::invalid_argument unless the subscriber is stored with a
  // path metric (on tree). Replaces any prior registration.
  void register_predicate(PredicateRegistration reg);
  void unregister_predicate(PeerId subscriber);
  const PredicateRegistration* find_registration(PeerId subscriber) const;
  std::size_t registration_count() const;

  // Emits one notification per registration the event entry satisfies.
  std::vector<Notification> evaluate_predicates(EntryEvent event,
                                                const DdhtEntry& entry) const;

  // Greedy CAN routing from zone 0 toward the key, stepping to the neighbor
  // zone whose center is nearest; returns the containing zone index and
  // accounts the hops taken.
  std::size_t route_to_zone(const MilestoneVector& key);

  // Direct point location (no hop accounting); the routing oracle.
  std::size_t point_locate(const MilestoneVector& key) const;

  struct Candidate {
    DdhtEntry entry;
    bool direct = false;  // provides the requested spec on-tree
    double distance = 0.0;
  };

  // Up to k entries able to serve the request, direct providers first, then
  // constructive ones, nearest-first with peer id as the final tie-break.
  // The search walks zones outward from the requester's zone and stops once
  // no unvisited zone can hold a better candidate.
  std::vector<Candidate> lookup_candidates(const MilestoneVector& from,
                                           const ServiceRequest& request,
                                           std::size_t k,
                                           const std::set<PeerId>& exclude = {});

  // Zone indices sharing an (M-1)-dimensional face with zone z, ascending.
  std::vector<std::size_t> neighbors(std::size_t z) const;

  nlohmann::json to_json() const;

 private:
  MilestoneVector clamp_key(MilestoneVector key);
  void maybe_split(std::size_t zone_index);

  std::size_t dimension_;
  double outer_bound_;
  int split_threshold_;
  std::vector<InfraNodeId> infra_pool_;
  std::size_t next_owner_ = 1;  // round-robin cursor; zone 0 took pool[0]
  std::vector<Zone> zones_;
  std::map<PeerId, std::size_t> peer_zone_;
  DdhtStats stats_;
};

// Classification shared by lookup_candidates and its brute-force oracle:
// direct = on-tree provider of exactly the requested spec with a free child
// slot; constructive = on-tree provider of a strict prefix with a free
// child slot, or a component host with a free slot for some transform in
// the requested chain.
enum class CandidateClass { none, direct, constructive };
CandidateClass classify_candidate(const DdhtEntry& entry,
                                  const ServiceRequest& request);

}  // namespace qmcast
