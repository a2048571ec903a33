#pragma once

#include <exception>
#include <iosfwd>
#include <span>
#include <vector>

#include "varigrad/run_config.hpp"

namespace varigrad {

// Command implementations behind the `varigrad` executable. Each writes config.txt plus its
// own outputs into config.out and logs progress to `log`.

/// Per-epoch metrics.csv plus the trained model in checkpoint.txt; summary.json holds final errors.
void cmd_train(const RunConfig& config, std::ostream& log);
/// variance.csv, one row per (layer, mode). Needs `checkpoint` or `fresh_train`.
void cmd_variance(const RunConfig& config, std::ostream& log);
/// kl_table.csv with the three KL evaluation modes side by side.
void cmd_kl_table(const RunConfig& config, std::ostream& log);
/// bench.json, one entry per (K, mode).
void cmd_bench(const RunConfig& config, std::ostream& log);
/// gradcheck.csv, worst finite-difference error per parameter block.
void cmd_gradcheck(const RunConfig& config, std::ostream& log);

/// The alpha values cmd_kl_table evaluates: kl_alphas if given, otherwise kl_grid_points
/// log-spaced values from kl_alpha_min to 1 inclusive. Throws DomainError outside (0, 1].
std::vector<double> kl_alpha_grid(const RunConfig& config);
void write_kl_table_csv(std::ostream& out, std::span<const double> alphas);

/// Layer indices named by a var_layers string such as "first,last", "all" or "0,2".
std::vector<std::size_t> resolve_layers(std::string_view selection, std::size_t layer_count);

/// 2 for configuration and domain errors, 3 for numeric failures, 4 for I/O and format
/// errors, 1 for anything unexpected.
int exit_code_for(const std::exception& error);

/// Full command-line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace varigrad
