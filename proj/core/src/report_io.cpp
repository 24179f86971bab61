#include "qmcast/report_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace qmcast {

std::string fmt6g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string report_csv(const MetricsReport& r) {
  std::string out =
      "scenario_id,seed,peers_final,stress_avg,stress_max,stretch,"
      "recovery_mean_ms,speedup_or_blank,control_hops,joins,rejections,switches\n";
  out += r.scenario_id;
  out += ',' + std::to_string(r.seed);
  out += ',' + std::to_string(r.peers_final);
  out += ',' + fmt6g(r.stress.stress_avg);
  out += ',' + std::to_string(r.stress.stress_max);
  out += ',';
  if (r.stretch) out += fmt6g(*r.stretch);
  out += ',';
  if (r.recovery_mean_ms) out += fmt6g(*r.recovery_mean_ms);
  out += ',';
  if (r.speedup) out += fmt6g(*r.speedup);
  out += ',' + std::to_string(r.control_hops);
  out += ',' + std::to_string(r.joins);
  out += ',' + std::to_string(r.total_rejections());
  out += ',' + std::to_string(r.switches);
  out += '\n';
  return out;
}

std::string events_csv(const std::vector<EventRecord>& log) {
  std::string out = "time_ms,seq,kind,peer,detail\n";
  for (const EventRecord& e : log) {
    out += fmt6g(e.time_ms);
    out += ',' + std::to_string(e.seq);
    out += ',' + to_string(e.kind);
    out += ',' + std::to_string(e.peer);
    out += ',' + e.detail;
    out += '\n';
  }
  return out;
}

std::pair<double, double> mean_stddev(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double v : values) sum += v;
  double mean = sum / double(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / double(values.size() - 1))};
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out =
      "peers,seeds,stretch_mean,stretch_stddev,stress_mean,stress_stddev,"
      "speedup_mean,speedup_stddev,control_hops_mean,control_hops_stddev\n";
  for (const SweepRow& r : rows) {
    out += std::to_string(r.peers);
    out += ',' + std::to_string(r.seeds);
    out += ',' + fmt6g(r.stretch_mean);
    out += ',' + fmt6g(r.stretch_stddev);
    out += ',' + fmt6g(r.stress_mean);
    out += ',' + fmt6g(r.stress_stddev);
    out += ',';
    if (r.speedup_mean) out += fmt6g(*r.speedup_mean);
    out += ',' + fmt6g(r.speedup_stddev);
    out += ',' + fmt6g(r.control_hops_mean);
    out += ',' + fmt6g(r.control_hops_stddev);
    out += '\n';
  }
  return out;
}

std::string speedup_csv(const std::vector<CompareRow>& rows) {
  std::string out =
      "seed,adaptive_mean_ms,baseline_mean_ms,speedup,paired,"
      "unpaired_adaptive,unpaired_baseline\n";
  for (const CompareRow& r : rows) {
    out += std::to_string(r.seed);
    out += ',';
    if (r.result.comparable) out += fmt6g(r.result.adaptive_mean_ms);
    out += ',';
    if (r.result.comparable) out += fmt6g(r.result.baseline_mean_ms);
    out += ',';
    if (r.result.comparable) out += fmt6g(r.result.value);
    out += ',' + std::to_string(r.result.paired);
    out += ',' + std::to_string(r.result.unpaired_adaptive);
    out += ',' + std::to_string(r.result.unpaired_baseline);
    out += '\n';
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_run_outputs(const RunResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir + "/report.csv", report_csv(result.report));
  write_file(dir + "/events.csv", events_csv(result.log));
  write_file(dir + "/tree.json", result.tree.to_json().dump(2) + "\n");
  write_file(dir + "/topology.json", result.topology.to_json().dump(2) + "\n");
}

}  // namespace qmcast
