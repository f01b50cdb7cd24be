#include "oblab/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include "oblab/error.hpp"
#include "oblab/kernels.hpp"

namespace oblab {

namespace {

const std::vector<std::string> kind_names = {"penalization_study", "skeleton_solve", "condition_i", "condition_ii",
                                             "bsde_check",         "star_check",     "rate_minimize", "mc_compare"};

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) {
            const std::string path = where.empty() ? it.key() : where + "." + it.key();
            throw ConfigError("unknown config field '" + path + "'");
        }
    }
}

const json& section(const json& j, const char* key) {
    static const json empty = json::object();
    auto it = j.find(key);
    if (it == j.end()) return empty;
    if (!it->is_object()) throw ConfigError(std::string(key) + " must be an object");
    return *it;
}

double number(const json& obj, const char* key, const std::string& path, double fallback) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (!it->is_number()) throw ConfigError(path + " must be a number");
    return it->get<double>();
}

std::uint64_t count(const json& obj, const char* key, const std::string& path, std::uint64_t fallback) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (it->is_number_unsigned()) return it->get<std::uint64_t>();
    if (it->is_number_float()) {
        const double v = it->get<double>();
        if (v >= 0.0 && v == std::floor(v) && v < 1.8e19) return static_cast<std::uint64_t>(v);
    }
    throw ConfigError(path + " must be a non-negative integer");
}

std::string text(const json& obj, const char* key, const std::string& path, const std::string& fallback) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (!it->is_string()) throw ConfigError(path + " must be a string");
    return it->get<std::string>();
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << contents;
    if (!out) throw ConfigError("write failed for " + path.string());
}

void flatten_into(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            std::string key = it.key();
            // JSON pointer escaping
            std::string esc;
            for (char c : key) {
                if (c == '~') esc += "~0";
                else if (c == '/') esc += "~1";
                else esc += c;
            }
            flatten_into(*it, prefix + "/" + esc, out);
        }
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) flatten_into(j[i], prefix + "/" + std::to_string(i), out);
    } else {
        out.emplace_back(prefix, j);
    }
}

}  // namespace

const std::vector<std::string>& experiment_names() { return kind_names; }

std::string to_string(ExperimentKind kind) { return kind_names.at(static_cast<std::size_t>(kind)); }

ExperimentKind kind_from_string(const std::string& name) {
    for (std::size_t i = 0; i < kind_names.size(); ++i) {
        if (kind_names[i] == name) return static_cast<ExperimentKind>(i);
    }
    throw ConfigError("unknown experiment kind '" + name + "'");
}

ProblemParams ExperimentConfig::problem_params() const {
    ProblemParams p;
    p.family = family;
    p.x_min = x_min;
    p.x_max = x_max;
    p.n_nodes = n_nodes;
    p.horizon = horizon;
    p.n_modes = n_modes;
    p.mode_decay = mode_decay;
    p.values = family_params;
    return p;
}

TimeMesh ExperimentConfig::mesh() const { return TimeMesh::uniform(horizon, n_steps); }

json to_json(const ExperimentConfig& c) {
    json j;
    j["name"] = c.name;
    if (!c.description.empty()) j["description"] = c.description;
    j["experiment"] = to_string(c.kind);
    json params = json::object();
    for (const auto& [k, v] : c.family_params) params[k] = v;
    j["problem"] = {{"family", c.family}, {"params", params}};
    j["grid"] = {{"n_nodes", c.n_nodes}, {"x_min", c.x_min}, {"x_max", c.x_max}};
    j["mesh"] = {{"n_steps", c.n_steps}, {"horizon", c.horizon}};
    json noise = json::object();
    if (c.n_modes) noise["n_modes"] = *c.n_modes;
    if (c.mode_decay) noise["mode_decay"] = *c.mode_decay;
    j["noise"] = noise;
    j["solver"] = {{"n0", c.solver.n0}, {"n_max", c.solver.n_max}, {"tol", c.solver.tol}};
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    if (!c.output_dir.empty()) j["output_dir"] = c.output_dir;
    j["params"] = c.params;
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    reject_unknown(j, "",
                   {"name", "experiment", "problem", "grid", "mesh", "noise", "solver", "seed", "workers", "output_dir",
                    "params", "description"});
    ExperimentConfig c;
    c.name = text(j, "name", "name", c.name);
    c.description = text(j, "description", "description", "");
    if (!j.contains("experiment")) throw ConfigError("experiment is required");
    c.kind = kind_from_string(text(j, "experiment", "experiment", ""));

    const json& prob = section(j, "problem");
    reject_unknown(prob, "problem", {"family", "params"});
    c.family = text(prob, "family", "problem.family", c.family);
    const json& fp = section(prob, "params");
    for (auto it = fp.begin(); it != fp.end(); ++it) {
        c.family_params[it.key()] = number(fp, it.key().c_str(), "problem.params." + it.key(), 0.0);
    }

    const json& grid = section(j, "grid");
    reject_unknown(grid, "grid", {"n_nodes", "x_min", "x_max"});
    c.n_nodes = count(grid, "n_nodes", "grid.n_nodes", c.n_nodes);
    c.x_min = number(grid, "x_min", "grid.x_min", c.x_min);
    c.x_max = number(grid, "x_max", "grid.x_max", c.x_max);

    const json& mesh = section(j, "mesh");
    reject_unknown(mesh, "mesh", {"n_steps", "horizon"});
    c.n_steps = count(mesh, "n_steps", "mesh.n_steps", c.n_steps);
    c.horizon = number(mesh, "horizon", "mesh.horizon", c.horizon);

    const json& noise = section(j, "noise");
    reject_unknown(noise, "noise", {"n_modes", "mode_decay"});
    if (noise.contains("n_modes")) c.n_modes = count(noise, "n_modes", "noise.n_modes", 0);
    if (noise.contains("mode_decay")) c.mode_decay = number(noise, "mode_decay", "noise.mode_decay", 0.0);

    const json& solver = section(j, "solver");
    reject_unknown(solver, "solver", {"n0", "n_max", "tol"});
    c.solver.n0 = number(solver, "n0", "solver.n0", c.solver.n0);
    c.solver.n_max = number(solver, "n_max", "solver.n_max", c.solver.n_max);
    c.solver.tol = number(solver, "tol", "solver.tol", c.solver.tol);

    c.seed = count(j, "seed", "seed", c.seed);
    c.workers = count(j, "workers", "workers", c.workers);
    c.output_dir = text(j, "output_dir", "output_dir", "");
    if (j.contains("params")) {
        if (!j["params"].is_object()) throw ConfigError("params must be an object");
        c.params = j["params"];
    }
    validate_config(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

void validate_config(const ExperimentConfig& c) {
    if (c.n_steps < 1) throw ConfigError("mesh.n_steps must be >= 1");
    if (!(c.horizon > 0.0) || !std::isfinite(c.horizon)) throw ConfigError("mesh.horizon must be > 0");
    if (c.n_nodes < 3) throw ConfigError("grid.n_nodes must be >= 3");
    if (!(c.x_min < c.x_max)) throw ConfigError("grid.x_min must be < grid.x_max");
    if (c.n_modes && *c.n_modes < 1) throw ConfigError("noise.n_modes must be >= 1");
    if (c.mode_decay && !(*c.mode_decay > 0.0 && *c.mode_decay < 1.0)) {
        throw ConfigError("noise.mode_decay must lie in (0, 1)");
    }
    if (!(c.solver.n0 > 0.0)) throw ConfigError("solver.n0 must be > 0");
    if (!(c.solver.n_max >= c.solver.n0)) throw ConfigError("solver.n_max must be >= solver.n0");
    if (!(c.solver.tol > 0.0)) throw ConfigError("solver.tol must be > 0");
    if (c.workers < 1) throw ConfigError("workers must be >= 1");
    const auto names = family_names();
    if (std::find(names.begin(), names.end(), c.family) == names.end()) {
        throw ConfigError("problem.family '" + c.family + "' is not a known family");
    }
}

std::uint64_t config_hash(const ExperimentConfig& config) {
    const std::string s = to_json(config).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::filesystem::path resolve_out_dir(const ExperimentConfig& config, const RunOptions& options) {
    if (options.out_dir) return *options.out_dir;
    if (!config.output_dir.empty()) return config.output_dir;
    if (const char* root = std::getenv("OBLAB_OUT_ROOT"); root != nullptr && *root != '\0') {
        return std::filesystem::path(root) / config.name;
    }
    return std::filesystem::path("out") / config.name;
}

RunResult run(const ExperimentConfig& config_in, const RunOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    ExperimentConfig config = config_in;
    if (options.seed) config.seed = *options.seed;
    if (options.workers) config.workers = *options.workers;
    validate_config(config);

    RunResult res;
    res.out_dir = resolve_out_dir(config, options);
    std::filesystem::create_directories(res.out_dir);

    ExperimentOutput out = run_experiment(config);
    bool passed = true;
    for (auto it = out.checks.begin(); it != out.checks.end(); ++it) passed = passed && it->get<bool>();

    const std::uint64_t hash = config_hash(config);
    json report;
    report["experiment"] = to_string(config.kind);
    report["name"] = config.name;
    report["family"] = config.family;
    report["config_hash"] = hex64(hash);
    report["seed"] = config.seed;
    report["passed"] = passed;
    report["checks"] = out.checks;
    report["results"] = out.results;

    write_file(res.out_dir / "config.json", to_json(config).dump(2) + "\n");
    res.files.push_back("config.json");
    write_file(res.out_dir / "report.json", report.dump(2) + "\n");
    res.files.push_back("report.json");
    for (const auto& [name, contents] : out.csv) {
        write_file(res.out_dir / name, contents);
        res.files.push_back(name);
    }

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json manifest;
    manifest["experiment"] = to_string(config.kind);
    manifest["config_hash"] = hex64(hash);
    manifest["version"] = version_string;
    manifest["simd_backend"] = std::string(kernels::backend_name(kernels::active_backend()));
    manifest["workers"] = config.workers;
    manifest["wall_time_s"] = wall;
    manifest["timestamp"] = utc_timestamp();
    manifest["files"] = res.files;
    write_file(res.out_dir / "manifest.json", manifest.dump(2) + "\n");
    res.files.push_back("manifest.json");

    res.passed = passed;
    res.report = std::move(report);
    return res;
}

std::vector<std::pair<std::string, json>> flatten(const json& j) {
    std::vector<std::pair<std::string, json>> out;
    flatten_into(j, "", out);
    return out;
}

BaselineComparison compare_baseline(const json& report, const json& baseline) {
    if (!baseline.is_object() || !baseline.contains("fields") || !baseline["fields"].is_object()) {
        throw ConfigError("baseline must be an object with a 'fields' object");
    }
    const std::string want = baseline.value("experiment", std::string());
    const std::string got = report.value("experiment", std::string());
    if (want != got) throw ConfigError("baseline is for experiment '" + want + "', report is '" + got + "'");

    BaselineComparison cmp;
    const json& fields = baseline["fields"];
    for (auto it = fields.begin(); it != fields.end(); ++it) {
        const std::string& ptr = it.key();
        const json& spec = *it;
        if (!spec.is_object() || !spec.contains("value")) throw ConfigError("baseline field " + ptr + " has no value");
        const json::json_pointer jp(ptr);
        if (!report.contains(jp)) {
            cmp.mismatches.push_back(ptr + ": missing from report");
            continue;
        }
        const json& got_v = report.at(jp);
        const json& want_v = spec["value"];
        std::ostringstream os;
        if (want_v.is_number() && got_v.is_number()) {
            const double a = got_v.get<double>();
            const double b = want_v.get<double>();
            const double tol = spec.value("tol", 0.0);
            if (!(std::abs(a - b) <= tol)) {
                os << std::setprecision(17) << ptr << ": " << a << " differs from baseline " << b << " by "
                   << std::abs(a - b) << " > tol " << tol;
                cmp.mismatches.push_back(os.str());
            }
        } else if (got_v != want_v) {
            cmp.mismatches.push_back(ptr + ": " + got_v.dump() + " != baseline " + want_v.dump());
        }
    }
    cmp.passed = cmp.mismatches.empty();
    return cmp;
}

json make_baseline(const json& report, double rel_tol, double abs_tol) {
    json b;
    b["experiment"] = report.value("experiment", std::string());
    json fields = json::object();
    if (report.contains("passed")) fields["/passed"] = {{"value", report["passed"]}};
    if (report.contains("results")) {
        for (const auto& [ptr, v] : flatten(report["results"])) {
            if (v.is_number()) {
                const double x = v.get<double>();
                fields["/results" + ptr] = {{"value", v}, {"tol", std::max(abs_tol, rel_tol * std::abs(x))}};
            } else {
                fields["/results" + ptr] = {{"value", v}};
            }
        }
    }
    b["fields"] = fields;
    return b;
}

}  // namespace oblab
