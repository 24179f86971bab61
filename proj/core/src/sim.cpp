#include "qmcast/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <queue>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qmcast/log.hpp"

namespace qmcast {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Event {
  double time_ms = 0.0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::peer_arrival;
  PeerId peer = 0;
  FailureElement element;
  Notification note;
  std::uint64_t trigger_seq = 0;   // complaint: the failure event's seq
  double trigger_time_ms = 0.0;    // complaint: the failure event's time
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time_ms != b.time_ms) return a.time_ms > b.time_ms;
    return a.seq > b.seq;
  }
};

enum class PeerState { pending, attached, departed, rejected };

struct PeerSim {
  bool arrived = false;
  bool left = false;      // physically gone (departed or on a dead router)
  PeerState state = PeerState::pending;
  bool retried = false;   // one retry per join episode
  bool root_only_episode = false;  // baseline failure-repair episode
  double arrival_ms = 0.0;
  double departure_ms = 0.0;
};

class Engine {
 public:
  Engine(const Scenario& sc, std::uint64_t seed, RunMode mode, bool validate_each)
      : sc_(sc),
        seed_(seed),
        mode_(mode),
        validate_each_(validate_each),
        noise_(splitmix64(seed ^ 0x6e6f6973ULL), sc.policy.noise_factor),
        topo_(generate_topology(sc.topology.routers, sc.topology.params,
                                splitmix64(seed ^ 0x746f706fULL))),
        milestones_(select_milestones(topo_, sc.policy.milestones,
                                      splitmix64(seed ^ 0x6d696c65ULL))),
        space_(make_space()),
        tree_(kServerId, sc.server.router) {}

  RunResult execute();

 private:
  static constexpr PeerId kServerId = 0;
  static constexpr std::uint64_t kMaxEvents = 2'000'000;

  ZoneSpace make_space() {
    std::vector<InfraNodeId> pool;
    for (InfraNodeId i = 0; i < sc_.policy.infra_nodes; ++i) pool.push_back(i);
    double bound = 2.0 * max_rtt_ms(topo_);
    if (bound <= 0.0) bound = 1.0;
    return ZoneSpace(milestones_.size(), bound, std::move(pool),
                     sc_.policy.split_threshold);
  }

  RepairPolicy repair_policy() const {
    RepairPolicy p;
    p.tolerance = sc_.policy.tolerance;
    p.parent_response_timeout_ms = sc_.policy.parent_timeout_ms;
    p.switch_hysteresis = sc_.policy.switch_delta;
    p.poll_interval_ms = sc_.policy.poll_interval_ms;
    p.retry_backoff_ms = sc_.policy.retry_backoff_ms;
    p.candidate_count = sc_.policy.candidate_count;
    return p;
  }

  void schedule(Event ev) {
    ev.seq = next_seq_++;
    queue_.push(std::move(ev));
  }

  void log_event(const Event& ev, std::string detail) {
    log_.push_back({ev.time_ms, ev.seq, ev.kind,
                    ev.kind == EventKind::element_failure ? -1
                                                          : std::int64_t(ev.peer),
                    std::move(detail)});
  }

  void setup_world();
  void draw_workload(std::mt19937_64& rng);
  void draw_failures();

  void on_arrival(const Event& ev);
  void on_departure(const Event& ev);
  void on_failure(const Event& ev);
  void on_poll_tick(const Event& ev);
  void on_complaint(const Event& ev);
  void on_notification_event(const Event& ev);
  void on_retry(const Event& ev);

  std::string attempt_join(PeerId id, double now);
  void handle_join_failure(PeerId id, JoinOutcome::Status status, double now);
  void count_rejection(JoinOutcome::Status status);
  void register_maintenance(PeerId id);
  void schedule_notifications(const std::vector<Notification>& notes, double now);
  void orphan_and_schedule(const std::vector<PeerId>& orphans, double now,
                           bool consumed_first_attempt, bool root_only);
  void prune_empty_hosts();
  void teardown_subtree(PeerId peer, double now);
  void force_departures_on_router(RouterId r, double now);
  // Closes every open violation the last repair resolved; latency runs from
  // the triggering failure to the repair's completion (now + extra).
  void restoration_scan(double now, double extra_ms);
  void validate_state() const;

  const Scenario& sc_;
  std::uint64_t seed_;
  RunMode mode_;
  bool validate_each_;

  NoiseStream noise_;
  PhysicalTopology topo_;
  MilestoneSet milestones_;
  ZoneSpace space_;
  MulticastTree tree_;
  PeerRegistry registry_;
  std::map<PeerId, PeerSim> peers_;

  std::priority_queue<Event, std::vector<Event>, EventAfter> queue_;
  std::uint64_t next_seq_ = 0;
  std::vector<EventRecord> log_;
  MetricsReport report_;

  // peer -> earliest unprocessed failure that broke its QoS
  std::map<PeerId, std::pair<std::uint64_t, double>> pending_complaints_;
  // peer -> earliest failure whose violation has not yet been resolved;
  // recovery latency runs from that failure to the restoring repair
  std::map<PeerId, std::pair<std::uint64_t, double>> affected_open_;
  std::set<double> scheduled_ticks_;
  double current_time_ = 0.0;
  double last_join_duration_ms_ = 0.0;
};

void Engine::setup_world() {
  // The server is peer 0; its entry seeds the store so the first arrival
  // finds a direct provider of the raw stream.
  PeerNode server;
  server.id = kServerId;
  server.router = sc_.server.router;
  server.capacity = sc_.server.capacity;
  server.component_slots = 0;
  auto vec = milestone_vector(topo_, server.router, milestones_);
  if (!vec) throw std::runtime_error("sim: server cannot measure milestones");
  server.vector = *vec;
  registry_[kServerId] = std::move(server);
  sync_entry(kServerId, tree_, space_, registry_);
}

void Engine::draw_workload(std::mt19937_64& rng) {
  std::exponential_distribution<double> interarrival(sc_.peers.arrival_rate_per_s / 1000.0);
  std::exponential_distribution<double> session(1.0 / (sc_.peers.mean_session_s * 1000.0));
  std::uniform_int_distribution<RouterId> router(0, sc_.topology.routers - 1);
  std::uniform_real_distribution<double> max_delay(sc_.peers.max_delay_ms_min,
                                                   sc_.peers.max_delay_ms_max);
  std::uniform_int_distribution<std::size_t> bw_choice(
      0, sc_.peers.min_bandwidth_choices_mbps.size() - 1);
  std::uniform_int_distribution<int> capacity(sc_.peers.capacity_min,
                                              sc_.peers.capacity_max);
  std::uniform_int_distribution<int> slots(sc_.peers.host_slots_min,
                                           sc_.peers.host_slots_max);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  std::vector<double> weights;
  for (const auto& e : sc_.peers.service_mix) weights.push_back(e.weight);
  std::discrete_distribution<std::size_t> mix(weights.begin(), weights.end());

  double t = 0.0;
  for (PeerId id = 1; id <= sc_.peers.count; ++id) {
    t += interarrival(rng);
    PeerNode node;
    node.id = id;
    node.router = router(rng);
    ServiceRequest req;
    req.spec.chain = sc_.peers.service_mix[mix(rng)].chain;
    req.qos.max_delay_ms = max_delay(rng);
    req.qos.min_bandwidth_mbps = sc_.peers.min_bandwidth_choices_mbps[bw_choice(rng)];
    node.request = req;
    node.capacity = capacity(rng);
    for (const auto& [transform, prob] : sc_.peers.host_transform_probs)
      if (u01(rng) < prob) node.hosted_components.push_back(transform);
    node.component_slots = slots(rng);
    double session_ms = session(rng);
    registry_[id] = std::move(node);
    PeerSim ps;
    ps.arrival_ms = t;
    ps.departure_ms = t + session_ms;
    peers_[id] = ps;
  }
  for (const auto& [id, ps] : peers_)
    schedule({ps.arrival_ms, 0, EventKind::peer_arrival, id});
  for (const auto& [id, ps] : peers_)
    schedule({ps.departure_ms, 0, EventKind::peer_departure, id});
}

void Engine::draw_failures() {
  std::vector<std::pair<double, FailureElement>> script = sc_.failures.script;
  if (script.empty() && sc_.failures.random_link_count > 0) {
    std::mt19937_64 rng(splitmix64(seed_ ^ 0xfa113dULL));
    std::vector<std::size_t> indices(topo_.links().size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    std::uint32_t count = std::min<std::uint32_t>(sc_.failures.random_link_count,
                                                  indices.size());
    // partial Fisher-Yates for distinct links
    for (std::uint32_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, indices.size() - 1);
      std::swap(indices[i], indices[pick(rng)]);
    }
    std::uniform_real_distribution<double> when(sc_.failures.window_min_ms,
                                                sc_.failures.window_max_ms);
    for (std::uint32_t i = 0; i < count; ++i) {
      const Link& l = topo_.links()[indices[i]];
      script.push_back({when(rng), {true, l.u, l.v}});
    }
    std::stable_sort(script.begin(), script.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  for (const auto& [t, el] : script) {
    if (el.is_link) {
      if (!topo_.find_link(el.a, el.b))
        throw std::invalid_argument("scenario: scripted failure names unknown link " +
                                    std::to_string(el.a) + "-" + std::to_string(el.b));
    } else if (!topo_.has_router(el.a)) {
      throw std::invalid_argument("scenario: scripted failure names unknown router " +
                                  std::to_string(el.a));
    }
    Event ev;
    ev.time_ms = t;
    ev.kind = EventKind::element_failure;
    ev.element = el;
    schedule(std::move(ev));
  }
}

void Engine::count_rejection(JoinOutcome::Status status) {
  switch (status) {
    case JoinOutcome::Status::rejected_no_candidates:
      ++report_.rejections_no_candidates;
      break;
    case JoinOutcome::Status::rejected_qos_infeasible:
      ++report_.rejections_qos;
      break;
    case JoinOutcome::Status::rejected_capacity:
      ++report_.rejections_capacity;
      break;
    case JoinOutcome::Status::attached:
      break;
  }
}

void Engine::register_maintenance(PeerId id) {
  if (!sc_.policy.maintenance || mode_ == RunMode::baseline_rejoin) return;
  const PeerNode& node = registry_.at(id);
  if (!node.request || !tree_.attached(id)) return;
  auto realized = tree_.realized_path(id);
  if (!realized) return;
  PredicateRegistration reg;
  reg.subscriber = id;
  reg.improvement_delta = sc_.policy.switch_delta;
  reg.requested = node.request->spec;
  reg.key = node.vector;
  reg.reference_delay_ms = realized->first;
  space_.register_predicate(std::move(reg));
}

void Engine::schedule_notifications(const std::vector<Notification>& notes,
                                    double now) {
  for (const Notification& n : notes) {
    Event ev;
    ev.time_ms = now;
    ev.kind = EventKind::notification_delivery;
    ev.peer = n.subscriber;
    ev.note = n;
    schedule(std::move(ev));
  }
}

std::string Engine::attempt_join(PeerId id, double now) {
  PeerSim& ps = peers_.at(id);
  PeerNode& node = registry_.at(id);

  if (node.vector.components.empty()) {
    auto vec = milestone_vector(topo_, node.router, milestones_, &noise_);
    if (!vec) {
      handle_join_failure(id, JoinOutcome::Status::rejected_no_candidates, now);
      return "outcome=unmeasurable";
    }
    node.vector = *vec;
    schedule_notifications(sync_entry(id, tree_, space_, registry_), now);
  }

  JoinOutcome outcome;
  if (mode_ == RunMode::baseline_rejoin && ps.root_only_episode)
    outcome = join_peer_root_only(node, tree_, space_, topo_, registry_);
  else
    outcome = join_peer(node, tree_, space_, topo_, registry_,
                        sc_.policy.candidate_count);
  last_join_duration_ms_ = outcome.duration_ms;

  if (outcome.ok()) {
    ps.state = PeerState::attached;
    ++report_.joins;
    auto realized = tree_.realized_path(id);
    if (!realized || realized->first > node.request->qos.max_delay_ms ||
        realized->second < node.request->qos.min_bandwidth_mbps)
      ++report_.admission_violations;
    register_maintenance(id);
    schedule_notifications(outcome.notifications, now);
    std::string detail = "outcome=attached;parent=" + std::to_string(outcome.parent) +
                         ";delay=" + fmt6(outcome.path.cumulative_delay_ms);
    if (!outcome.recruited_hosts.empty()) {
      detail += ";hosts=";
      for (std::size_t i = 0; i < outcome.recruited_hosts.size(); ++i)
        detail += (i ? "+" : "") + std::to_string(outcome.recruited_hosts[i]);
    }
    return detail;
  }
  handle_join_failure(id, outcome.status, now);
  return "outcome=" + to_string(outcome.status);
}

void Engine::handle_join_failure(PeerId id, JoinOutcome::Status status, double now) {
  PeerSim& ps = peers_.at(id);
  count_rejection(status);
  if (!ps.retried) {
    ps.retried = true;
    ps.state = PeerState::pending;
    schedule({now + sc_.policy.retry_backoff_ms, 0, EventKind::retry, id});
  } else {
    ps.state = PeerState::rejected;
  }
}

void Engine::orphan_and_schedule(const std::vector<PeerId>& orphans, double now,
                                 bool consumed_first_attempt, bool root_only) {
  for (PeerId id : orphans) {
    auto it = peers_.find(id);
    if (it == peers_.end()) continue;  // never the server
    PeerSim& ps = it->second;
    if (ps.left) continue;
    ps.state = PeerState::pending;
    ps.retried = consumed_first_attempt;
    ps.root_only_episode = root_only;
    schedule({now, 0, EventKind::retry, id});
  }
}

void Engine::prune_empty_hosts() {
  // Relay hosts whose children all moved away return off-tree and release
  // their slots. Chains unwind bottom-up.
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& [id, node] : tree_.nodes()) {
      if (id == kServerId || node.applied.empty() || !node.children.empty())
        continue;
      std::optional<PeerId> parent = node.parent;
      tree_.detach_subtree(id);
      space_.unregister_predicate(id);
      std::vector<Notification> notes = sync_entry(id, tree_, space_, registry_);
      if (parent && space_.find(*parent)) {
        auto more = sync_entry(*parent, tree_, space_, registry_);
        notes.insert(notes.end(), more.begin(), more.end());
      }
      schedule_notifications(notes, current_time_);
      // A pruned host with its own subscription still pending gets another
      // shot at joining as a plain subscriber.
      auto ps = peers_.find(id);
      if (ps != peers_.end() && !ps->second.left &&
          ps->second.state == PeerState::pending)
        schedule({current_time_, 0, EventKind::retry, id});
      changed = true;
      break;  // container mutated; rescan
    }
  }
}

// A disrupted peer that could not rejoin tears its subtree down: the peer
// itself retries after the backoff, its orphaned descendants rejoin
// immediately as fresh episodes.
void Engine::teardown_subtree(PeerId peer, double now) {
  std::vector<PeerId> sub = tree_.subtree(peer);
  std::map<PeerId, bool> is_subscriber;
  for (PeerId id : sub) is_subscriber[id] = tree_.node(id).applied.empty();
  std::optional<PeerId> parent = tree_.node(peer).parent;
  tree_.detach_subtree(peer);

  std::vector<Notification> notes;
  std::vector<PeerId> orphans;
  for (PeerId id : sub) {
    space_.unregister_predicate(id);
    auto more = sync_entry(id, tree_, space_, registry_);
    notes.insert(notes.end(), more.begin(), more.end());
    if (id != peer && is_subscriber[id]) orphans.push_back(id);
  }
  if (parent && space_.find(*parent)) {
    auto more = sync_entry(*parent, tree_, space_, registry_);
    notes.insert(notes.end(), more.begin(), more.end());
  }
  schedule_notifications(notes, now);
  orphan_and_schedule(orphans, now, false, false);
}

void Engine::force_departures_on_router(RouterId r, double now) {
  for (auto& [id, ps] : peers_) {
    if (ps.left || !ps.arrived) continue;
    if (registry_.at(id).router != r) continue;
    ps.left = true;
    pending_complaints_.erase(id);
    affected_open_.erase(id);
    if (tree_.attached(id)) {
      LeaveResult res = leave_peer(id, tree_, space_, registry_);
      schedule_notifications(res.notifications, now);
      orphan_and_schedule(res.orphaned_subscribers, now, false, false);
    } else {
      space_.unregister_predicate(id);
      space_.remove_entry(id);
    }
    if (ps.state != PeerState::rejected) ps.state = PeerState::departed;
  }
}

void Engine::restoration_scan(double now, double extra_ms) {
  for (auto it = affected_open_.begin(); it != affected_open_.end();) {
    PeerId id = it->first;
    const PeerSim& ps = peers_.at(id);
    if (ps.left) {
      it = affected_open_.erase(it);
      continue;
    }
    if (!tree_.attached(id)) {
      ++it;  // may still recover through a later rejoin
      continue;
    }
    RepairPolicy policy = repair_policy();
    if (monitor(registry_.at(id), tree_, policy, now)) {
      ++it;  // still violating
      continue;
    }
    double latency = (now - it->second.second) + extra_ms;
    report_.recoveries.push_back({it->second.first, id, true, latency});
    pending_complaints_.erase(id);
    it = affected_open_.erase(it);
  }
}

void Engine::on_arrival(const Event& ev) {
  PeerSim& ps = peers_.at(ev.peer);
  ps.arrived = true;
  ++report_.arrivals;
  PeerNode& node = registry_.at(ev.peer);
  std::string detail = "router=" + std::to_string(node.router) +
                       ";spec=" + node.request->spec.label();

  auto vec = milestone_vector(topo_, node.router, milestones_, &noise_);
  if (vec) {
    node.vector = *vec;
    schedule_notifications(sync_entry(ev.peer, tree_, space_, registry_), ev.time_ms);
    detail += ";" + attempt_join(ev.peer, ev.time_ms);
  } else {
    handle_join_failure(ev.peer, JoinOutcome::Status::rejected_no_candidates,
                        ev.time_ms);
    detail += ";outcome=unmeasurable";
  }
  log_event(ev, detail);
}

void Engine::on_departure(const Event& ev) {
  PeerSim& ps = peers_.at(ev.peer);
  if (ps.left) {
    log_event(ev, "outcome=already-gone");
    return;
  }
  ps.left = true;
  pending_complaints_.erase(ev.peer);
  affected_open_.erase(ev.peer);
  std::string detail;
  // A peer may sit in the tree as a recruited relay host even while its own
  // subscription is still pending or rejected; leaving tears that down too.
  if (tree_.attached(ev.peer)) {
    LeaveResult res = leave_peer(ev.peer, tree_, space_, registry_);
    schedule_notifications(res.notifications, ev.time_ms);
    orphan_and_schedule(res.orphaned_subscribers, ev.time_ms, false, false);
    detail = "outcome=left;orphans=" + std::to_string(res.orphaned_subscribers.size()) +
             ";released_hosts=" + std::to_string(res.released_hosts.size());
  } else {
    space_.unregister_predicate(ev.peer);
    space_.remove_entry(ev.peer);
    detail = ps.state == PeerState::attached ? "outcome=left"
                                             : "outcome=left-before-attach";
  }
  if (ps.state == PeerState::rejected) {
    ++report_.unattached_leave_warnings;  // never served; stays rejected
  } else {
    ps.state = PeerState::departed;
  }
  prune_empty_hosts();
  log_event(ev, detail);
}

void Engine::on_failure(const Event& ev) {
  const FailureElement& el = ev.element;
  std::string detail;
  if (el.is_link) {
    topo_.fail_link(el.a, el.b);
    detail = "link=" + std::to_string(el.a) + "-" + std::to_string(el.b);
  } else {
    if (el.a == sc_.server.router)
      throw std::runtime_error("sim: scripted failure kills the server router");
    topo_.fail_router(el.a);
    detail = "router=" + std::to_string(el.a);
    force_departures_on_router(el.a, ev.time_ms);
  }

  // Established edges stay pinned to their routes; this failure breaks the
  // edges whose route it severed, leaving everything below them disrupted
  // until a repair re-derives routes or the peers rejoin.
  std::vector<PeerId> broken = tree_.invalidate_broken_routes(topo_);
  std::set<PeerId> dirty;
  for (PeerId b : broken)
    if (tree_.attached(b))
      for (PeerId id : tree_.subtree(b)) dirty.insert(id);
  std::vector<Notification> notes;
  for (PeerId id : dirty) {
    if (!tree_.attached(id)) continue;
    auto more = sync_entry(id, tree_, space_, registry_);
    notes.insert(notes.end(), more.begin(), more.end());
  }
  schedule_notifications(notes, ev.time_ms);

  std::size_t affected = 0;
  RepairPolicy policy = repair_policy();
  for (const auto& [id, node] : registry_) {
    if (id == kServerId || !tree_.attached(id)) continue;
    auto violation = monitor(node, tree_, policy, ev.time_ms);
    if (!violation) continue;
    ++affected;
    if (!pending_complaints_.count(id)) pending_complaints_[id] = {ev.seq, ev.time_ms};
    if (!affected_open_.count(id)) affected_open_[id] = {ev.seq, ev.time_ms};
  }
  detail += ";affected=" + std::to_string(affected);

  if (!pending_complaints_.empty()) {
    double interval = sc_.policy.poll_interval_ms;
    double tick = std::ceil(ev.time_ms / interval) * interval;
    if (tick < ev.time_ms) tick = ev.time_ms;
    if (!scheduled_ticks_.count(tick)) {
      scheduled_ticks_.insert(tick);
      schedule({tick, 0, EventKind::poll_tick, 0});
    }
  }
  log_event(ev, detail);
}

void Engine::on_poll_tick(const Event& ev) {
  std::size_t raised = 0;
  for (const auto& [id, trigger] : pending_complaints_) {
    Event c;
    c.time_ms = ev.time_ms;
    c.kind = EventKind::complaint;
    c.peer = id;
    c.trigger_seq = trigger.first;
    c.trigger_time_ms = trigger.second;
    schedule(std::move(c));
    ++raised;
  }
  pending_complaints_.clear();
  log_event(ev, "complaints=" + std::to_string(raised));
}

void Engine::on_complaint(const Event& ev) {
  PeerSim& ps = peers_.at(ev.peer);
  if (ps.left || !tree_.attached(ev.peer)) {
    log_event(ev, "outcome=moot");
    return;
  }
  const PeerNode& node = registry_.at(ev.peer);
  RepairPolicy policy = repair_policy();
  auto violation = monitor(node, tree_, policy, ev.time_ms);
  if (!violation) {
    // Resolved collaterally by an earlier repair in this batch.
    if (affected_open_.count(ev.peer)) restoration_scan(ev.time_ms, 0.0);
    log_event(ev, "outcome=healed");
    return;
  }
  ++report_.complaints;
  double lag = ev.time_ms - ev.trigger_time_ms;

  bool disrupted_before = !tree_.realized_path(ev.peer).has_value();
  std::string detail;
  bool recovered = false;
  double duration = 0.0;

  if (mode_ == RunMode::baseline_rejoin) {
    JoinOutcome outcome = join_peer_root_only(node, tree_, space_, topo_, registry_);
    recovered = outcome.ok();
    duration = outcome.duration_ms;
    schedule_notifications(outcome.notifications, ev.time_ms);
    detail = "repair=root-rejoin;outcome=" + to_string(outcome.status);
    if (!recovered) {
      count_rejection(outcome.status);
      if (disrupted_before) {
        // No service at all: tear down and retry through the backoff.
        teardown_subtree(ev.peer, ev.time_ms);
        ps.state = PeerState::pending;
        ps.retried = true;
        ps.root_only_episode = true;
        schedule({ev.time_ms + sc_.policy.retry_backoff_ms, 0, EventKind::retry,
                  ev.peer});
      }
    }
  } else {
    RepairResult result =
        handle_complaint(*violation, tree_, space_, topo_, registry_, policy);
    recovered = result.recovered();
    duration = result.duration_ms;
    schedule_notifications(result.notifications, ev.time_ms);
    detail = "repair=" + to_string(result.outcome);
    if (recovered) {
      register_maintenance(ev.peer);
    } else {
      count_rejection(result.rejoin_status);
      if (disrupted_before) {
        teardown_subtree(ev.peer, ev.time_ms);
        ps.state = PeerState::pending;
        ps.retried = true;
        ps.root_only_episode = false;
        schedule({ev.time_ms + sc_.policy.retry_backoff_ms, 0, EventKind::retry,
                  ev.peer});
      }
    }
  }

  if (recovered) {
    // The repair also restores every descendant that was waiting on it.
    restoration_scan(ev.time_ms, duration);
  } else {
    report_.recoveries.push_back({ev.trigger_seq, ev.peer, false, lag + duration});
  }
  detail += ";latency=" + fmt6(lag + duration);
  prune_empty_hosts();
  log_event(ev, detail);
}

void Engine::on_notification_event(const Event& ev) {
  PeerSim* ps = peers_.count(ev.peer) ? &peers_.at(ev.peer) : nullptr;
  if (!ps || ps->left || ps->state != PeerState::attached) {
    log_event(ev, "outcome=stale");
    return;
  }
  ++report_.notifications;
  RepairPolicy policy = repair_policy();
  SwitchResult result =
      on_notification(ev.note, tree_, space_, topo_, registry_, policy);
  if (result.switched) {
    ++report_.switches;
    schedule_notifications(result.notifications, ev.time_ms);
    restoration_scan(ev.time_ms, 0.0);
    prune_empty_hosts();
    log_event(ev, "outcome=switched;parent=" + std::to_string(result.new_parent) +
                      ";candidate=" + std::to_string(ev.note.candidate));
  } else {
    log_event(ev, "outcome=ignored;candidate=" + std::to_string(ev.note.candidate));
  }
}

void Engine::on_retry(const Event& ev) {
  PeerSim& ps = peers_.at(ev.peer);
  if (ps.left || ps.state != PeerState::pending || tree_.attached(ev.peer)) {
    log_event(ev, "outcome=moot");
    return;
  }
  std::string detail = attempt_join(ev.peer, ev.time_ms);
  if (ps.state == PeerState::attached)
    restoration_scan(ev.time_ms, last_join_duration_ms_);
  prune_empty_hosts();
  log_event(ev, detail);
}

void Engine::validate_state() const {
  tree_.validate();
  for (const auto& [id, node] : tree_.nodes()) {
    const PeerNode& reg = registry_.at(id);
    int cap = id == kServerId ? sc_.server.capacity : reg.capacity;
    if (static_cast<int>(node.children.size()) > cap)
      throw std::logic_error("capacity exceeded at peer " + std::to_string(id));
    if (id != kServerId &&
        static_cast<int>(node.applied.size()) > reg.component_slots)
      throw std::logic_error("component slots exceeded at peer " + std::to_string(id));
    const DdhtEntry* entry = space_.find(id);
    if (!entry || !entry->on_tree())
      throw std::logic_error("store entry missing/off-tree for attached peer " +
                             std::to_string(id));
    if (!(entry->path->produced == node.produced))
      throw std::logic_error("store entry spec diverged for peer " + std::to_string(id));
    if (entry->peers.load != static_cast<int>(node.children.size()))
      throw std::logic_error("store entry load diverged for peer " + std::to_string(id));
  }
}

RunResult Engine::execute() {
  setup_world();
  std::mt19937_64 workload_rng(splitmix64(seed_ ^ 0x776f726bULL));
  draw_workload(workload_rng);
  draw_failures();

  std::uint64_t executed = 0;
  double now = 0.0;
  while (!queue_.empty()) {
    Event ev = queue_.top();
    if (ev.time_ms > sc_.duration_ms) break;
    queue_.pop();
    now = std::max(now, ev.time_ms);
    if (++executed > kMaxEvents)
      throw std::runtime_error("sim: event budget exceeded (runaway cascade?)");
    current_time_ = ev.time_ms;
    switch (ev.kind) {
      case EventKind::peer_arrival: on_arrival(ev); break;
      case EventKind::peer_departure: on_departure(ev); break;
      case EventKind::element_failure: on_failure(ev); break;
      case EventKind::poll_tick: on_poll_tick(ev); break;
      case EventKind::complaint: on_complaint(ev); break;
      case EventKind::notification_delivery: on_notification_event(ev); break;
      case EventKind::retry: on_retry(ev); break;
    }
    if (validate_each_) validate_state();
  }

  // Terminal accounting: every arrived peer lands in exactly one bucket.
  for (const auto& [id, ps] : peers_) {
    if (!ps.arrived) continue;
    switch (ps.state) {
      case PeerState::attached: ++report_.attached; break;
      case PeerState::departed: ++report_.departed; break;
      case PeerState::rejected: ++report_.rejected; break;
      case PeerState::pending: ++report_.pending; break;
    }
  }
  report_.scenario_id = sc_.name;
  report_.seed = seed_;
  report_.peers_final = tree_.node_count() - 1;
  report_.stress = stress(tree_, topo_);
  report_.stretch = stretch(tree_, topo_);
  report_.control_hops = space_.stats().control_hops;
  double total = 0.0;
  std::size_t ok = 0;
  for (const auto& r : report_.recoveries)
    if (r.success) {
      total += r.latency_ms;
      ++ok;
    }
  if (ok > 0) report_.recovery_mean_ms = total / double(ok);

  return RunResult{std::move(report_), std::move(log_), std::move(tree_),
                   std::move(topo_), std::move(space_)};
}

}  // namespace

RunResult run(const Scenario& scenario, std::uint64_t seed, RunMode mode,
              bool validate_each_event) {
  scenario.validate();
  Engine engine(scenario, seed, mode, validate_each_event);
  return engine.execute();
}

RunResult run_baseline(const Scenario& scenario, std::uint64_t seed,
                       bool validate_each_event) {
  return run(scenario, seed, RunMode::baseline_rejoin, validate_each_event);
}

}  // namespace qmcast
