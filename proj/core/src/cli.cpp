#include "qmcast/cli.hpp"

#include <cstdio>
#include <exception>
#include <filesystem>

#include "qmcast/log.hpp"
#include "qmcast/report_io.hpp"
#include "qmcast/sim.hpp"

namespace qmcast {

namespace {

int fail_with(const std::exception& e) {
  std::fprintf(stderr, "qmcast: %s\n", e.what());
  return 1;
}

}  // namespace

int run_command(const std::string& scenario_path, std::optional<std::uint64_t> seed,
                const std::string& out_dir) {
  try {
    Scenario scenario = Scenario::from_file(scenario_path);
    std::uint64_t effective = seed.value_or(scenario.seed);
    log_info("run: scenario=" + scenario.name + " seed=" + std::to_string(effective));
    RunResult result = run(scenario, effective);
    write_run_outputs(result, out_dir);
    log_info("run: wrote outputs under " + out_dir);
    return 0;
  } catch (const std::exception& e) {
    return fail_with(e);
  }
}

int sweep_command(const std::string& scenario_path,
                  const std::vector<std::uint32_t>& peer_counts, std::size_t seeds,
                  const std::string& out_dir) {
  try {
    if (peer_counts.empty())
      throw std::invalid_argument("sweep: --peers list must be non-empty");
    if (seeds == 0) throw std::invalid_argument("sweep: --seeds must be >= 1");
    Scenario scenario = Scenario::from_file(scenario_path);

    std::vector<SweepRow> rows;
    for (std::uint32_t count : peer_counts) {
      Scenario point = scenario;
      point.peers.count = count;
      point.validate();
      std::vector<double> stretches, stresses, speedups, hops;
      for (std::size_t i = 0; i < seeds; ++i) {
        std::uint64_t seed = scenario.seed + i;
        RunResult adaptive = run(point, seed);
        RunResult baseline = run_baseline(point, seed);
        if (adaptive.report.stretch) stretches.push_back(*adaptive.report.stretch);
        if (!adaptive.report.stress.empty)
          stresses.push_back(adaptive.report.stress.stress_avg);
        hops.push_back(double(adaptive.report.control_hops));
        SpeedupResult sp = speedup(adaptive.report.recoveries, baseline.report.recoveries);
        if (sp.comparable) speedups.push_back(sp.value);
        log_info("sweep: peers=" + std::to_string(count) +
                 " seed=" + std::to_string(seed) + " done");
      }
      SweepRow row;
      row.peers = count;
      row.seeds = seeds;
      std::tie(row.stretch_mean, row.stretch_stddev) = mean_stddev(stretches);
      std::tie(row.stress_mean, row.stress_stddev) = mean_stddev(stresses);
      if (!speedups.empty()) {
        auto [m, s] = mean_stddev(speedups);
        row.speedup_mean = m;
        row.speedup_stddev = s;
      }
      std::tie(row.control_hops_mean, row.control_hops_stddev) = mean_stddev(hops);
      rows.push_back(row);
    }
    std::filesystem::create_directories(out_dir);
    write_file(out_dir + "/sweep.csv", sweep_csv(rows));
    return 0;
  } catch (const std::exception& e) {
    return fail_with(e);
  }
}

int compare_command(const std::string& scenario_path, std::size_t seeds,
                    const std::string& out_dir) {
  try {
    if (seeds == 0) throw std::invalid_argument("compare: --seeds must be >= 1");
    Scenario scenario = Scenario::from_file(scenario_path);
    std::vector<CompareRow> rows;
    std::vector<double> values;
    for (std::size_t i = 0; i < seeds; ++i) {
      std::uint64_t seed = scenario.seed + i;
      RunResult adaptive = run(scenario, seed);
      RunResult baseline = run_baseline(scenario, seed);
      CompareRow row;
      row.seed = seed;
      row.result = speedup(adaptive.report.recoveries, baseline.report.recoveries);
      if (row.result.comparable) values.push_back(row.result.value);
      rows.push_back(row);
      log_info("compare: seed=" + std::to_string(seed) + " done");
    }
    std::filesystem::create_directories(out_dir);
    write_file(out_dir + "/speedup.csv", speedup_csv(rows));
    auto [mean, stddev] = mean_stddev(values);
    std::printf("speedup mean=%s stddev=%s comparable_seeds=%zu/%zu\n",
                fmt6g(mean).c_str(), fmt6g(stddev).c_str(), values.size(), seeds);
    return 0;
  } catch (const std::exception& e) {
    return fail_with(e);
  }
}

int validate_command(const std::string& scenario_path) {
  try {
    Scenario scenario = Scenario::from_file(scenario_path);
    std::printf("valid: %s\n", scenario.name.c_str());
    return 0;
  } catch (const std::exception& e) {
    return fail_with(e);
  }
}

}  // namespace qmcast
