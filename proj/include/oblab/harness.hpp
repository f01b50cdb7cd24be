#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oblab/problem.hpp"
#include "oblab/skeleton.hpp"

namespace oblab {

using json = nlohmann::ordered_json;

inline constexpr const char* version_string = "0.3.0";

enum class ExperimentKind {
    penalization_study,
    skeleton_solve,
    condition_i,
    condition_ii,
    bsde_check,
    star_check,
    rate_minimize,
    mc_compare,
};

const std::vector<std::string>& experiment_names();
std::string to_string(ExperimentKind kind);
/// Throws ConfigError for unknown names.
ExperimentKind kind_from_string(const std::string& name);

struct ExperimentConfig {
    std::string name = "experiment";
    std::string description;
    ExperimentKind kind = ExperimentKind::skeleton_solve;
    std::string family = "heat_obstacle";
    std::map<std::string, double> family_params;
    std::size_t n_nodes = 401;
    double x_min = -4.0;
    double x_max = 4.0;
    std::size_t n_steps = 400;
    double horizon = 1.0;
    std::optional<std::size_t> n_modes;
    std::optional<double> mode_decay;
    SkeletonOptions solver;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    std::string output_dir;
    /// Experiment-specific settings; every key has a default.
    json params = json::object();

    ProblemParams problem_params() const;
    TimeMesh mesh() const;
    bool operator==(const ExperimentConfig&) const = default;
};

json to_json(const ExperimentConfig& config);
/// Throws ConfigError naming the offending field.
ExperimentConfig config_from_json(const json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Range checks beyond parsing; throws ConfigError naming the field.
void validate_config(const ExperimentConfig& config);

/// 64-bit FNV-1a of the canonical (compact) JSON form.
std::uint64_t config_hash(const ExperimentConfig& config);

struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    /// Overrides both the config's output_dir and OBLAB_OUT_ROOT.
    std::optional<std::filesystem::path> out_dir;
};

struct RunResult {
    bool passed = false;
    json report;
    std::filesystem::path out_dir;
    std::vector<std::string> files;  // relative to out_dir, manifest last
};

/// Directory the run writes to: options.out_dir, else config.output_dir, else
/// $OBLAB_OUT_ROOT/<name>, else out/<name>.
std::filesystem::path resolve_out_dir(const ExperimentConfig& config, const RunOptions& options = {});

/// Runs the experiment and writes report.json, CSV files and manifest.json.
/// Everything except the manifest is a pure function of the config.
RunResult run(const ExperimentConfig& config, const RunOptions& options = {});

/// Artifacts written by one experiment, before they hit the disk.
struct ExperimentOutput {
    json results = json::object();
    json checks = json::object();  // name -> bool
    std::vector<std::pair<std::string, std::string>> csv;  // file name, contents
};

ExperimentOutput run_experiment(const ExperimentConfig& config);

struct BaselineComparison {
    bool passed = true;
    std::vector<std::string> mismatches;
};

/// Baseline layout: {"experiment": kind, "fields": {"/json/pointer": {"value": v, "tol": t}}}.
/// Numbers pass when |report - value| <= tol; booleans and strings must match.
/// Throws ConfigError when the experiment kinds differ.
BaselineComparison compare_baseline(const json& report, const json& baseline);

/// Baseline covering every scalar leaf under /results plus /passed, with
/// tol = max(abs_tol, rel_tol * |value|) for numbers.
json make_baseline(const json& report, double rel_tol = 1e-9, double abs_tol = 1e-12);

/// Scalar leaves of a JSON document keyed by JSON pointer, in document order.
std::vector<std::pair<std::string, json>> flatten(const json& j);

}  // namespace oblab
