#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "oblab/error.hpp"
#include "oblab/harness.hpp"

using namespace oblab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string error_of(const json& j) {
    try {
        config_from_json(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

json small_config() {
    return json::parse(R"({
        "name": "tiny",
        "experiment": "skeleton_solve",
        "problem": {"family": "heat_obstacle", "params": {"dip": 2.0}},
        "grid": {"n_nodes": 81, "x_min": -4, "x_max": 4},
        "mesh": {"n_steps": 40, "horizon": 1.0},
        "solver": {"n0": 1000, "n_max": 1e7, "tol": 1e-3},
        "seed": 3,
        "params": {"write_trajectory": true}
    })");
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("oblab_unit_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("bundled configs load and round trip") {
    std::size_t seen = 0;
    std::set<std::string> kinds;
    for (const auto& entry : fs::directory_iterator(fs::path(OBLAB_SOURCE_DIR) / "configs")) {
        if (entry.path().extension() != ".json") continue;
        CAPTURE(entry.path().string());
        const ExperimentConfig c = load_config(entry.path());
        const ExperimentConfig back = config_from_json(json::parse(to_json(c).dump()));
        CHECK(back == c);
        CHECK(config_hash(back) == config_hash(c));
        kinds.insert(to_string(c.kind));
        ++seen;
    }
    CHECK(seen >= 8);
    CHECK(kinds.size() == experiment_names().size());
}

TEST_CASE("round trip preserves every field") {
    ExperimentConfig c;
    c.name = "rt";
    c.description = "round trip";
    c.kind = ExperimentKind::mc_compare;
    c.family = "quasilinear_full";
    c.family_params = {{"obstacle_amplitude", 0.25}, {"terminal_amplitude", 0.125}};
    c.n_nodes = 123;
    c.x_min = -3.5;
    c.x_max = 2.75;
    c.n_steps = 77;
    c.horizon = 0.5;
    c.n_modes = 6;
    c.mode_decay = 0.3;
    c.solver = {500.0, 1e6, 2e-3};
    c.seed = 0xfeedfacecafebeefULL;
    c.workers = 3;
    c.output_dir = "somewhere";
    c.params = {{"epsilons", {0.4, 0.2}}, {"importance", false}};
    const auto back = config_from_json(to_json(c));
    CHECK(back == c);
    CHECK(to_json(back).dump() == to_json(c).dump());
}

TEST_CASE("config validation names the offending field") {
    json j = small_config();
    j["mesh"]["n_steps"] = 0;
    CHECK(error_of(j).find("mesh.n_steps") != std::string::npos);

    j = small_config();
    j["grid"]["n_nodes"] = -5;
    CHECK(error_of(j).find("grid.n_nodes") != std::string::npos);

    j = small_config();
    j["grid"]["spacing"] = 0.1;
    CHECK(error_of(j).find("grid.spacing") != std::string::npos);

    j = small_config();
    j["experiment"] = "make_coffee";
    CHECK(error_of(j).find("make_coffee") != std::string::npos);
    CHECK_THROWS_AS(kind_from_string("make_coffee"), ConfigError);

    j = small_config();
    j["problem"]["family"] = "nope";
    CHECK(error_of(j).find("problem.family") != std::string::npos);

    j = small_config();
    j["noise"] = {{"mode_decay", 1.5}};
    CHECK(error_of(j).find("noise.mode_decay") != std::string::npos);

    j = small_config();
    j["params"]["bogus"] = 1;
    const auto c = config_from_json(j);
    try {
        run_experiment(c);
        FAIL("unknown experiment parameter accepted");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("params.bogus") != std::string::npos);
    }

    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("output directory resolution") {
    ExperimentConfig c;
    c.name = "abc";
    ::unsetenv("OBLAB_OUT_ROOT");
    CHECK(resolve_out_dir(c) == fs::path("out") / "abc");
    ::setenv("OBLAB_OUT_ROOT", "/tmp/root", 1);
    CHECK(resolve_out_dir(c) == fs::path("/tmp/root") / "abc");
    c.output_dir = "/tmp/explicit";
    CHECK(resolve_out_dir(c) == fs::path("/tmp/explicit"));
    RunOptions o;
    o.out_dir = "/tmp/flag";
    CHECK(resolve_out_dir(c, o) == fs::path("/tmp/flag"));
    ::unsetenv("OBLAB_OUT_ROOT");
}

TEST_CASE("repeat runs are byte-identical apart from the manifest") {
    const ExperimentConfig c = config_from_json(small_config());
    RunOptions a, b;
    a.out_dir = scratch("repeat_a");
    b.out_dir = scratch("repeat_b");
    const auto ra = run(c, a);
    const auto rb = run(c, b);
    CHECK(ra.report["passed"] == ra.passed);
    REQUIRE(ra.files == rb.files);
    CHECK(ra.files.back() == "manifest.json");
    CHECK(std::find(ra.files.begin(), ra.files.end(), "skeleton.csv") != ra.files.end());
    for (const auto& f : ra.files) {
        if (f == "manifest.json") continue;
        CAPTURE(f);
        CHECK(slurp(*a.out_dir / f) == slurp(*b.out_dir / f));
    }
    const json man = json::parse(slurp(*a.out_dir / "manifest.json"));
    for (const char* key : {"config_hash", "version", "wall_time_s", "timestamp", "files", "simd_backend"}) {
        CHECK(man.contains(key));
    }
    CHECK(man["config_hash"] == ra.report["config_hash"]);

    // A different seed changes the hash but not this deterministic experiment's results.
    RunOptions s = a;
    s.seed = 99;
    s.out_dir = scratch("repeat_seed");
    const auto rs = run(c, s);
    CHECK(rs.report["config_hash"] != ra.report["config_hash"]);
    CHECK(rs.report["results"] == ra.report["results"]);
    fs::remove_all(*a.out_dir);
    fs::remove_all(*b.out_dir);
    fs::remove_all(*s.out_dir);
}

TEST_CASE("baseline comparison") {
    const json report = json::parse(R"({
        "experiment": "penalization_study",
        "passed": true,
        "results": {"exponent": 0.5, "gaps": [0.1, 0.01], "label": "x", "nested": {"a/b": 2.0}}
    })");
    const json base = make_baseline(report, 1e-6, 1e-12);
    CHECK(base["fields"].contains("/results/gaps/1"));
    CHECK(base["fields"].contains("/results/nested/a~1b"));
    CHECK(compare_baseline(report, base).passed);

    const double tol = base["fields"]["/results/exponent"]["tol"].get<double>();
    CHECK(tol == doctest::Approx(0.5e-6));

    json far = report;
    far["results"]["exponent"] = 0.5 + 10.0 * tol;
    const auto bad = compare_baseline(far, base);
    CHECK_FALSE(bad.passed);
    REQUIRE(bad.mismatches.size() == 1);
    CHECK(bad.mismatches[0].find("/results/exponent") != std::string::npos);

    json near = report;
    near["results"]["exponent"] = 0.5 + 0.5 * tol;
    CHECK(compare_baseline(near, base).passed);

    json flipped = report;
    flipped["passed"] = false;
    CHECK_FALSE(compare_baseline(flipped, base).passed);

    json missing = report;
    missing["results"].erase("label");
    const auto m = compare_baseline(missing, base);
    CHECK_FALSE(m.passed);
    CHECK(m.mismatches[0].find("missing") != std::string::npos);

    json other = report;
    other["experiment"] = "star_check";
    CHECK_THROWS_AS(compare_baseline(other, base), ConfigError);
    CHECK_THROWS_AS(compare_baseline(report, json::object()), ConfigError);
}

TEST_CASE("flatten uses JSON pointers") {
    const auto f = flatten(json::parse(R"({"a": [1, {"b": 2}], "c~d": 3})"));
    REQUIRE(f.size() == 3);
    CHECK(f[0].first == "/a/0");
    CHECK(f[1].first == "/a/1/b");
    CHECK(f[2].first == "/c~0d");
}

TEST_CASE("experiment names") {
    const auto& names = experiment_names();
    REQUIRE(names.size() == 8);
    for (const auto& n : names) CHECK(to_string(kind_from_string(n)) == n);
}
