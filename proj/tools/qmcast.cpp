#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qmcast/cli.hpp"

namespace {

std::vector<std::uint32_t> parse_peer_list(const std::string& csv) {
  std::vector<std::uint32_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(static_cast<std::uint32_t>(std::stoul(item)));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QoS-aware overlay multicast simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir = "out";
  std::uint64_t seed_value = 0;
  bool seed_given = false;
  std::string peers_csv = "50,100,200";
  std::size_t seeds = 10;

  auto* run = app.add_subcommand("run", "execute one scenario run");
  run->add_option("--scenario", scenario_path, "scenario JSON file")->required();
  run->add_option("--seed", seed_value, "seed override")->each([&](const std::string&) {
    seed_given = true;
  });
  run->add_option("--out", out_dir, "output directory");

  auto* sweep = app.add_subcommand("sweep", "vary peer count, aggregate per point");
  sweep->add_option("--scenario", scenario_path, "scenario JSON file")->required();
  sweep->add_option("--peers", peers_csv, "comma-separated peer counts");
  sweep->add_option("--seeds", seeds, "seeds per point");
  sweep->add_option("--out", out_dir, "output directory");

  auto* compare = app.add_subcommand("compare", "adaptive vs attach-to-root recovery");
  compare->add_option("--scenario", scenario_path, "scenario JSON file")->required();
  compare->add_option("--seeds", seeds, "number of seeds");
  compare->add_option("--out", out_dir, "output directory");

  auto* validate = app.add_subcommand("validate", "schema-check a scenario file");
  validate->add_option("--scenario", scenario_path, "scenario JSON file")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed())
    return qmcast::run_command(scenario_path,
                               seed_given ? std::optional<std::uint64_t>(seed_value)
                                          : std::nullopt,
                               out_dir);
  if (sweep->parsed()) {
    std::vector<std::uint32_t> counts;
    try {
      counts = parse_peer_list(peers_csv);
    } catch (const std::exception&) {
      std::fprintf(stderr, "qmcast: bad --peers list \"%s\"\n", peers_csv.c_str());
      return 1;
    }
    return qmcast::sweep_command(scenario_path, counts, seeds, out_dir);
  }
  if (compare->parsed()) return qmcast::compare_command(scenario_path, seeds, out_dir);
  return qmcast::validate_command(scenario_path);
}
