#pragma once

#include <optional>
#include <vector>

#include "qmcast/ddht.hpp"
#include "qmcast/tree.hpp"

namespace qmcast {

// Knobs for both adaptation mechanisms. Tolerance widens the QoS band
// before a complaint fires; the hysteresis delta is the minimum fractional
// delay improvement required to switch parents.
struct RepairPolicy {
  double tolerance = 0.1;
  double parent_response_timeout_ms = 500.0;
  double switch_hysteresis = 0.1;
  double poll_interval_ms = 1000.0;
  double retry_backoff_ms = 5000.0;
  std::size_t candidate_count = 5;
};

struct Complaint {
  PeerId complainant = 0;
  MilestoneVector vector;
  ServiceRequest request;
  std::optional<std::pair<double, double>> observed;  // nullopt = disrupted
  double timestamp_ms = 0.0;
};

// Compares the realized path against the requirement with the policy
// tolerance: complaint iff delay > (1+tol)*max, bandwidth < (1-tol)*min, or
// the path is disrupted. Peers without a requirement never complain.
std::optional<Complaint> monitor(const PeerNode& peer, const MulticastTree& tree,
                                 const RepairPolicy& policy, double now_ms);

struct RepairResult {
  enum class Outcome { parent_repaired, switched, rejoined, orphan_rejected };
  Outcome outcome = Outcome::orphan_rejected;
  PeerId new_parent = 0;
  double duration_ms = 0.0;  // complaint round trips + timeout + rejoin time
  JoinOutcome::Status rejoin_status = JoinOutcome::Status::attached;
  std::vector<Notification> notifications;

  bool recovered() const { return outcome != Outcome::orphan_rejected; }
};

std::string to_string(RepairResult::Outcome o);

// Ordered repair attempts: (1) the parent re-derives the child's route and
// succeeds when the recomputed route restores QoS within tolerance; (2)
// otherwise the complainant rejoins from scratch, excluding a dead parent,
// paying the response timeout first when the parent never answered.
RepairResult handle_complaint(const Complaint& complaint, MulticastTree& tree,
                              ZoneSpace& space, const PhysicalTopology& topo,
                              const PeerRegistry& registry,
                              const RepairPolicy& policy);

struct SwitchResult {
  bool switched = false;
  PeerId new_parent = 0;
  std::vector<Notification> notifications;
};

// Local decision on a DDHT notification: verify the candidate with a real
// measurement and switch only for a strict > delta fractional delay
// improvement, with capacity, bandwidth feasibility, and cycle guards.
SwitchResult on_notification(const Notification& note, MulticastTree& tree,
                             ZoneSpace& space, const PhysicalTopology& topo,
                             const PeerRegistry& registry,
                             const RepairPolicy& policy);

}  // namespace qmcast
