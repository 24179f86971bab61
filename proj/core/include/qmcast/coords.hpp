#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "qmcast/underlay.hpp"

namespace qmcast {

// Ordered landmark routers; vector dimensions are positional and fixed for
// the whole run.
struct MilestoneSet {
  std::vector<RouterId> routers;
  std::size_t size() const { return routers.size(); }
};

// Per-peer RTTs to the milestones, in milestone order.
struct MilestoneVector {
  std::vector<double> components;
  std::size_t size() const { return components.size(); }
  bool operator==(const MilestoneVector&) const = default;
};

// Farthest-point greedy selection: a seeded random router picks the first
// milestone as its farthest peer, then each next milestone maximizes the
// minimum RTT to those already chosen (ties break to the lowest router id).
// Throws std::invalid_argument when count is 0 or exceeds the router count.
MilestoneSet select_milestones(const PhysicalTopology& topo, std::size_t count,
                               std::uint64_t seed);

// Component i = rtt(peer, milestones[i]). nullopt ("unmeasurable") when any
// milestone is unreachable from the peer.
std::optional<MilestoneVector> milestone_vector(const PhysicalTopology& topo,
                                                RouterId peer_router,
                                                const MilestoneSet& milestones,
                                                NoiseStream* noise = nullptr);

// Euclidean distance; throws std::invalid_argument on dimension mismatch.
double milestone_distance(const MilestoneVector& a, const MilestoneVector& b);

}  // namespace qmcast
