#include "qmcast/ddht.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace qmcast {

bool Zone::contains(const MilestoneVector& key) const {
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    double x = key.components[i];
    if (x < bounds[i].first || x >= bounds[i].second) return false;
  }
  return true;
}

double Zone::volume() const {
  double v = 1.0;
  for (const auto& [lo, hi] : bounds) v *= (hi - lo);
  return v;
}

std::vector<double> Zone::center() const {
  std::vector<double> c;
  c.reserve(bounds.size());
  for (const auto& [lo, hi] : bounds) c.push_back(lo + (hi - lo) / 2.0);
  return c;
}

double Zone::box_distance_sq(const MilestoneVector& key) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    double x = key.components[i];
    double d = 0.0;
    if (x < bounds[i].first) d = bounds[i].first - x;
    else if (x > bounds[i].second) d = x - bounds[i].second;
    sum += d * d;
  }
  return sum;
}

ZoneSpace::ZoneSpace(std::size_t dimension, double outer_bound,
                     std::vector<InfraNodeId> infra_pool, int split_threshold)
    : dimension_(dimension),
      outer_bound_(outer_bound),
      split_threshold_(split_threshold),
      infra_pool_(std::move(infra_pool)) {
  if (dimension_ == 0) throw std::invalid_argument("ZoneSpace: dimension must be >= 1");
  if (outer_bound_ <= 0.0) throw std::invalid_argument("ZoneSpace: outer bound must be > 0");
  if (infra_pool_.empty()) throw std::invalid_argument("ZoneSpace: empty infra pool");
  if (split_threshold_ < 1) throw std::invalid_argument("ZoneSpace: bad split threshold");
  Zone z;
  z.bounds.assign(dimension_, {0.0, outer_bound_});
  z.owner = infra_pool_[0];
  zones_.push_back(std::move(z));
}

MilestoneVector ZoneSpace::clamp_key(MilestoneVector key) {
  if (key.size() != dimension_)
    throw std::invalid_argument("ZoneSpace: key dimension mismatch");
  bool clamped = false;
  for (double& x : key.components) {
    if (x < 0.0) {
      x = 0.0;
      clamped = true;
    } else if (x >= outer_bound_) {
      x = std::nextafter(outer_bound_, 0.0);
      clamped = true;
    }
  }
  if (clamped) ++stats_.clamped_keys;
  return key;
}

std::size_t ZoneSpace::point_locate(const MilestoneVector& key) const {
  for (std::size_t i = 0; i < zones_.size(); ++i)
    if (zones_[i].contains(key)) return i;
  throw std::logic_error("ZoneSpace: point escaped the tiling");
}

std::vector<std::size_t> ZoneSpace::neighbors(std::size_t z) const {
  // Zones touch when they share a positive-measure (M-1)-face: abutting on
  // exactly one axis and overlapping with positive measure on every other.
  std::vector<std::size_t> out;
  const Zone& a = zones_[z];
  for (std::size_t j = 0; j < zones_.size(); ++j) {
    if (j == z) continue;
    const Zone& b = zones_[j];
    int touching_axis = -1;
    bool ok = true;
    for (std::size_t ax = 0; ax < dimension_ && ok; ++ax) {
      const auto& [alo, ahi] = a.bounds[ax];
      const auto& [blo, bhi] = b.bounds[ax];
      if (alo < bhi && blo < ahi) continue;  // positive overlap
      if (ahi == blo || bhi == alo) {
        if (touching_axis >= 0) ok = false;  // corner contact only
        touching_axis = static_cast<int>(ax);
      } else {
        ok = false;
      }
    }
    if (ok && touching_axis >= 0) out.push_back(j);
  }
  return out;
}

std::size_t ZoneSpace::route_to_zone(const MilestoneVector& key) {
  std::size_t cur = 0;
  std::set<std::size_t> visited{cur};
  while (!zones_[cur].contains(key)) {
    std::size_t best = cur;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t nb : neighbors(cur)) {
      if (visited.count(nb)) continue;
      std::vector<double> c = zones_[nb].center();
      double d = 0.0;
      for (std::size_t i = 0; i < dimension_; ++i) {
        double diff = c[i] - key.components[i];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = nb;
      }
    }
    if (best == cur) {
      // Greedy dead end (possible on irregular tilings): land directly.
      ++stats_.control_hops;
      return point_locate(key);
    }
    cur = best;
    visited.insert(cur);
    ++stats_.control_hops;
  }
  return cur;
}

void ZoneSpace::insert_entry(DdhtEntry entry) {
  entry.key = clamp_key(std::move(entry.key));
  PeerId id = entry.peer_id;

  auto prior = peer_zone_.find(id);
  if (prior != peer_zone_.end()) {
    zones_[prior->second].entries.erase(id);
    peer_zone_.erase(prior);
  }

  std::size_t target = route_to_zone(entry.key);
  zones_[target].entries[id] = std::move(entry);
  peer_zone_[id] = target;
  maybe_split(target);
}

void ZoneSpace::remove_entry(PeerId peer) {
  auto it = peer_zone_.find(peer);
  if (it == peer_zone_.end()) return;
  Zone& z = zones_[it->second];
  route_to_zone(z.entries.at(peer).key);  // control-message accounting
  z.entries.erase(peer);
  z.registrations.erase(peer);
  peer_zone_.erase(it);
}

const DdhtEntry* ZoneSpace::find(PeerId peer) const {
  auto it = peer_zone_.find(peer);
  if (it == peer_zone_.end()) return nullptr;
  const auto& entries = zones_[it->second].entries;
  auto e = entries.find(peer);
  return e == entries.end() ? nullptr : &e->second;
}

void ZoneSpace::maybe_split(std::size_t zone_index) {
  Zone& z = zones_[zone_index];
  if (static_cast<int>(z.entries.size()) <= split_threshold_) return;

  // Longest axis, ties to the lowest index.
  std::size_t axis = 0;
  double best_extent = -1.0;
  for (std::size_t i = 0; i < dimension_; ++i) {
    double extent = z.bounds[i].second - z.bounds[i].first;
    if (extent > best_extent) {
      best_extent = extent;
      axis = i;
    }
  }
  double mid = z.bounds[axis].first + (z.bounds[axis].second - z.bounds[axis].first) / 2.0;
  if (mid <= z.bounds[axis].first || mid >= z.bounds[axis].second) return;  // too thin

  Zone upper;
  upper.bounds = z.bounds;
  upper.bounds[axis].first = mid;
  upper.owner = infra_pool_[next_owner_++ % infra_pool_.size()];
  z.bounds[axis].second = mid;

  std::size_t upper_index = zones_.size();
  for (auto it = z.entries.begin(); it != z.entries.end();) {
    if (!z.contains(it->second.key)) {
      peer_zone_[it->first] = upper_index;
      upper.entries.insert(std::move(*it));
      it = z.entries.erase(it);
    } else {
      ++it;
    }
  }
  for (auto it = z.registrations.begin(); it != z.registrations.end();) {
    if (!z.contains(it->second.key)) {
      upper.registrations.insert(std::move(*it));
      it = z.registrations.erase(it);
    } else {
      ++it;
    }
  }
  zones_.push_back(std::move(upper));
  ++stats_.splits;
}

void ZoneSpace::register_predicate(PredicateRegistration reg) {
  const DdhtEntry* entry = find(reg.subscriber);
  if (!entry || !entry->on_tree())
    throw std::invalid_argument("register_predicate: subscriber is not on the tree");
  if (reg.improvement_delta <= 0.0)
    throw std::invalid_argument("register_predicate: delta must be > 0");
  reg.key = clamp_key(std::move(reg.key));
  unregister_predicate(reg.subscriber);
  std::size_t target = route_to_zone(reg.key);
  zones_[target].registrations[reg.subscriber] = std::move(reg);
}

void ZoneSpace::unregister_predicate(PeerId subscriber) {
  for (Zone& z : zones_) z.registrations.erase(subscriber);
}

const PredicateRegistration* ZoneSpace::find_registration(PeerId subscriber) const {
  for (const Zone& z : zones_) {
    auto it = z.registrations.find(subscriber);
    if (it != z.registrations.end()) return &it->second;
  }
  return nullptr;
}

std::size_t ZoneSpace::registration_count() const {
  std::size_t n = 0;
  for (const Zone& z : zones_) n += z.registrations.size();
  return n;
}

std::vector<Notification> ZoneSpace::evaluate_predicates(
    EntryEvent event, const DdhtEntry& entry) const {
  std::vector<Notification> out;
  if (event == EntryEvent::removed) return out;
  if (!entry.on_tree() || !entry.spare_capacity()) return out;

  // Ascending subscriber id across all zones for a deterministic order.
  std::map<PeerId, const PredicateRegistration*> regs;
  for (const Zone& z : zones_)
    for (const auto& [id, reg] : z.registrations) regs[id] = &reg;

  for (const auto& [id, reg] : regs) {
    if (id == entry.peer_id) continue;
    if (!(entry.path->produced == reg->requested)) continue;
    // Screening estimate only: half the key distance stands in for the
    // last-hop delay; the subscriber verifies with a real measurement
    // before actually switching.
    double estimated = entry.path->delay_ms +
                       0.5 * milestone_distance(reg->key, entry.key);
    if (estimated < (1.0 - reg->improvement_delta) * reg->reference_delay_ms)
      out.push_back({id, entry.peer_id});
  }
  return out;
}

CandidateClass classify_candidate(const DdhtEntry& entry,
                                  const ServiceRequest& request) {
  if (entry.on_tree() && entry.spare_capacity() &&
      entry.path->produced == request.spec)
    return CandidateClass::direct;
  if (entry.on_tree() && entry.spare_capacity() &&
      entry.path->produced.is_strict_prefix_of(request.spec))
    return CandidateClass::constructive;
  if (entry.peers.component_slots_free > 0) {
    for (const TransformId& t : request.spec.chain)
      if (std::find(entry.peers.hostable_transforms.begin(),
                    entry.peers.hostable_transforms.end(),
                    t) != entry.peers.hostable_transforms.end())
        return CandidateClass::constructive;
  }
  return CandidateClass::none;
}

std::vector<ZoneSpace::Candidate> ZoneSpace::lookup_candidates(
    const MilestoneVector& from, const ServiceRequest& request, std::size_t k,
    const std::set<PeerId>& exclude) {
  if (k == 0) throw std::invalid_argument("lookup_candidates: k must be >= 1");
  MilestoneVector query = clamp_key(from);

  struct Ranked {
    bool constructive;
    double distance;
    PeerId id;
    DdhtEntry entry;
    bool operator<(const Ranked& o) const {
      if (constructive != o.constructive) return !constructive;
      if (distance != o.distance) return distance < o.distance;
      return id < o.id;
    }
  };
  std::vector<Ranked> found;

  // Visit zones outward from the requester's zone by box distance. Once k
  // direct providers are in hand, zones strictly farther than the k-th
  // direct hit cannot improve the result and the expansion stops.
  std::vector<std::size_t> order(zones_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> box_d(zones_.size());
  for (std::size_t i = 0; i < zones_.size(); ++i)
    box_d[i] = std::sqrt(zones_[i].box_distance_sq(query));
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (box_d[a] != box_d[b]) return box_d[a] < box_d[b];
    return a < b;
  });

  route_to_zone(query);  // hops to reach the home zone
  std::size_t zones_visited = 0;
  for (std::size_t zi : order) {
    std::vector<double> direct_dists;
    for (const Ranked& r : found)
      if (!r.constructive) direct_dists.push_back(r.distance);
    if (direct_dists.size() >= k) {
      std::nth_element(direct_dists.begin(), direct_dists.begin() + (k - 1),
                       direct_dists.end());
      if (box_d[zi] > direct_dists[k - 1]) break;
    }
    ++zones_visited;
    for (const auto& [id, entry] : zones_[zi].entries) {
      if (exclude.count(id)) continue;
      CandidateClass cls = classify_candidate(entry, request);
      if (cls == CandidateClass::none) continue;
      found.push_back({cls == CandidateClass::constructive,
                       milestone_distance(query, entry.key), id, entry});
    }
  }
  if (zones_visited > 0) stats_.control_hops += zones_visited - 1;

  std::sort(found.begin(), found.end());
  std::vector<Candidate> out;
  for (std::size_t i = 0; i < found.size() && i < k; ++i)
    out.push_back({std::move(found[i].entry), !found[i].constructive,
                   found[i].distance});
  return out;
}

namespace {

nlohmann::json spec_to_json(const ServiceSpec& s) {
  return nlohmann::json(s.chain);
}

nlohmann::json entry_to_json(const DdhtEntry& e) {
  nlohmann::json j;
  j["peer"] = e.peer_id;
  j["vector"] = e.key.components;
  j["capacity"] = e.peers.capacity;
  j["load"] = e.peers.load;
  auto provides = nlohmann::json::array();
  for (const ServiceSpec& s : e.peers.services_provided) provides.push_back(spec_to_json(s));
  j["provides"] = std::move(provides);
  j["hosts"] = e.peers.hostable_transforms;
  j["slots_free"] = e.peers.component_slots_free;
  if (e.path) {
    j["path"] = {{"delay_ms", e.path->delay_ms},
                 {"bottleneck_mbps", e.path->bottleneck_mbps},
                 {"produced", spec_to_json(e.path->produced)}};
  } else {
    j["path"] = nullptr;
  }
  return j;
}

}  // namespace

nlohmann::json ZoneSpace::to_json() const {
  nlohmann::json j;
  j["dimension"] = dimension_;
  auto zones = nlohmann::json::array();
  for (const Zone& z : zones_) {
    nlohmann::json zj;
    auto bounds = nlohmann::json::array();
    for (const auto& [lo, hi] : z.bounds) bounds.push_back({lo, hi});
    zj["bounds"] = std::move(bounds);
    zj["owner"] = z.owner;
    auto entries = nlohmann::json::array();
    for (const auto& [id, e] : z.entries) entries.push_back(entry_to_json(e));
    zj["entries"] = std::move(entries);
    zones.push_back(std::move(zj));
  }
  j["zones"] = std::move(zones);
  return j;
}

}  // namespace qmcast
