#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace invprob::cli {

/// Configuration problems, all of them, one message per field.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> issues);
    const std::vector<std::string>& issues() const { return issues_; }

private:
    std::vector<std::string> issues_;
};

/// A failure while solving or running an experiment.
class RunError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using RawConfig = std::map<std::string, std::string>;

enum class Command { generate, solve, sweep, resolution };
enum class SolverKind { svd, tsvd, csvd, stdmem, mem, expmem, scmem };

struct RunConfig {
    Command command = Command::generate;

    double beta = 10.0;
    std::size_t ntau = 25;
    double grid_lower = -5.0;
    double grid_upper = 5.0;
    std::size_t grid_points = 201;
    std::string object = "two_gaussian";
    double delta0 = 1.0;
    double noise = 0.0;
    std::uint64_t seed = 0;
    std::optional<std::pair<double, double>> support;
    bool normalization = true;
    bool sum_rule = true;
    double theta_scale = 1e4;

    SolverKind solver = SolverKind::tsvd;
    double rank_tol = 1e-10;
    std::optional<double> cutoff;
    std::string csvd_cost = "norm";
    double alpha = 1.0;
    double xi = 0.1;
    std::optional<double> eps;
    int max_iters = 500;
    int max_outer_iters = 30;
    double floor_rel = 1e-12;
    std::string model = "gaussian";
    std::vector<double> model_params;
    SolverKind inner = SolverKind::stdmem;

    std::vector<double> cutoffs;
    std::vector<double> alphas;
    std::size_t sweep_seeds = 1;

    std::vector<double> betas;
    std::vector<double> deltas;
    double resolution_noise = 0.01;
    std::optional<std::pair<double, double>> resolution_support;
    double prominence = 0.2;

    /// Not part of the run identity.
    std::size_t workers = 0;
    std::string output_root;
    std::string output_root_source;
    bool force = false;
};

/// Reads a flat key=value file; '#' starts a comment line.
RawConfig read_config_file(const std::filesystem::path& path);
RawConfig parse_config_text(const std::string& text);

/**
 * Merges file values and flag values (flags win), fills every default and
 * validates.  Throws ConfigError listing every problem found.
 */
RunConfig resolve_config(const std::optional<std::string>& command, const RawConfig& file, const RawConfig& flags);

/// Every configuration key the resolver accepts.
std::vector<std::string> config_keys();

/// Canonical key=value listing of the resolved configuration.
std::vector<std::pair<std::string, std::string>> resolved_entries(const RunConfig& config);

/// 16 hex digit FNV-1a hash of the canonical entries.
std::string config_hash(const RunConfig& config);

std::string render_manifest(const RunConfig& config);

/// Executes the command, returns the run directory.
std::filesystem::path run(const RunConfig& config, std::ostream& log);

/// Full command-line entry point; returns the process exit status.
int main_entry(int argc, char** argv);

inline constexpr int kExitConfig = 2;
inline constexpr int kExitSolver = 3;

}  // namespace invprob::cli
