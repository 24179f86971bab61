#include "qmcast/coords.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace qmcast {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Exact RTTs from one router to all live routers; kInf where unreachable.
std::vector<double> rtt_row(const PhysicalTopology& topo, RouterId from) {
  std::vector<double> row(topo.router_count(), kInf);
  for (RouterId r = 0; r < topo.router_count(); ++r) {
    if (!topo.router_live(r)) continue;
    auto v = rtt_ms(topo, from, r);
    if (v) row[r] = *v;
  }
  return row;
}

}  // namespace

MilestoneSet select_milestones(const PhysicalTopology& topo, std::size_t count,
                               std::uint64_t seed) {
  if (count == 0) throw std::invalid_argument("select_milestones: count must be >= 1");
  if (count > topo.router_count())
    throw std::invalid_argument("select_milestones: count exceeds router count");

  std::mt19937_64 rng(seed);
  std::vector<RouterId> live;
  for (RouterId r = 0; r < topo.router_count(); ++r)
    if (topo.router_live(r)) live.push_back(r);
  if (count > live.size())
    throw std::invalid_argument("select_milestones: count exceeds live router count");

  std::uniform_int_distribution<std::size_t> pick(0, live.size() - 1);
  RouterId anchor = live[pick(rng)];

  // The random anchor is only a vantage point: the first milestone is the
  // router farthest from it, which keeps the selected set independent of
  // where the anchor happened to land.
  MilestoneSet out;
  std::vector<double> min_rtt = rtt_row(topo, anchor);
  while (out.routers.size() < count) {
    RouterId best = live[0];
    double best_d = -1.0;
    for (RouterId r : live) {
      double d = min_rtt[r];
      if (d == kInf) continue;
      if (d > best_d) {
        best_d = d;
        best = r;
      }
    }
    if (best_d < 0.0)
      throw std::runtime_error("select_milestones: topology is disconnected");
    out.routers.push_back(best);
    std::vector<double> row = rtt_row(topo, best);
    for (RouterId r : live) min_rtt[r] = std::min(min_rtt[r], row[r]);
  }
  return out;
}

std::optional<MilestoneVector> milestone_vector(const PhysicalTopology& topo,
                                                RouterId peer_router,
                                                const MilestoneSet& milestones,
                                                NoiseStream* noise) {
  MilestoneVector vec;
  vec.components.reserve(milestones.size());
  for (RouterId m : milestones.routers) {
    auto v = rtt_ms(topo, peer_router, m, noise);
    if (!v) return std::nullopt;
    vec.components.push_back(*v);
  }
  return vec;
}

double milestone_distance(const MilestoneVector& a, const MilestoneVector& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("milestone_distance: dimension mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a.components[i] - b.components[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

}  // namespace qmcast
