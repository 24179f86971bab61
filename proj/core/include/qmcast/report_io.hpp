#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qmcast/metrics.hpp"
#include "qmcast/sim.hpp"

namespace qmcast {

// Floats in every CSV print with 6 significant digits.
std::string fmt6g(double v);

// scenario_id,seed,peers_final,stress_avg,stress_max,stretch,
// recovery_mean_ms,speedup_or_blank,control_hops,joins,rejections,switches
std::string report_csv(const MetricsReport& report);

// time_ms,seq,kind,peer,detail
std::string events_csv(const std::vector<EventRecord>& log);

struct SweepRow {
  std::uint32_t peers = 0;
  std::size_t seeds = 0;
  double stretch_mean = 0.0, stretch_stddev = 0.0;
  double stress_mean = 0.0, stress_stddev = 0.0;
  std::optional<double> speedup_mean;
  double speedup_stddev = 0.0;
  double control_hops_mean = 0.0, control_hops_stddev = 0.0;
};

std::string sweep_csv(const std::vector<SweepRow>& rows);

struct CompareRow {
  std::uint64_t seed = 0;
  SpeedupResult result;
};

std::string speedup_csv(const std::vector<CompareRow>& rows);

// Sample mean and stddev (n-1 denominator; 0 when n < 2).
std::pair<double, double> mean_stddev(const std::vector<double>& values);

void write_file(const std::string& path, const std::string& content);

// report.csv, events.csv, tree.json, topology.json under dir (created if
// missing).
void write_run_outputs(const RunResult& result, const std::string& dir);

}  // namespace qmcast
