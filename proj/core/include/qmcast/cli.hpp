#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qmcast {

// Subcommand bodies behind the qmcast binary; each returns a process exit
// code and prints a one-line diagnostic to stderr on failure.
int run_command(const std::string& scenario_path, std::optional<std::uint64_t> seed,
                const std::string& out_dir);
int sweep_command(const std::string& scenario_path,
                  const std::vector<std::uint32_t>& peer_counts, std::size_t seeds,
                  const std::string& out_dir);
int compare_command(const std::string& scenario_path, std::size_t seeds,
                    const std::string& out_dir);
int validate_command(const std::string& scenario_path);

}  // namespace qmcast
