// Command-line front end: run experiments, compare reports to baselines.
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "oblab/error.hpp"
#include "oblab/harness.hpp"
#include "oblab/parallel.hpp"

namespace {

oblab::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw oblab::ConfigError("cannot open " + path);
    try {
        return oblab::json::parse(in);
    } catch (const oblab::json::parse_error& e) {
        throw oblab::ConfigError(path + " is not valid JSON: " + e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Penalized obstacle-problem lab"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::size_t workers = 0;
    std::string out_dir;
    auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
    run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    auto* seed_opt = run->add_option("--seed", seed, "Override the config seed");
    auto* workers_opt = run->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    auto* out_opt = run->add_option("--out-dir", out_dir, "Output directory (default $OBLAB_OUT_ROOT/<name>)");

    std::string report_path, baseline_path;
    auto* compare = app.add_subcommand("compare", "Compare a report against a baseline");
    compare->add_option("report", report_path)->required()->check(CLI::ExistingFile);
    compare->add_option("baseline", baseline_path)->required()->check(CLI::ExistingFile);

    std::string mb_report, mb_out;
    double rel_tol = 1e-9, abs_tol = 1e-12;
    auto* make_baseline = app.add_subcommand("make-baseline", "Write a baseline from a report");
    make_baseline->add_option("report", mb_report)->required()->check(CLI::ExistingFile);
    make_baseline->add_option("output", mb_out)->required();
    make_baseline->add_option("--rel-tol", rel_tol, "Relative tolerance per numeric field");
    make_baseline->add_option("--abs-tol", abs_tol, "Absolute tolerance floor");

    auto* list = app.add_subcommand("list-experiments", "List experiment kinds");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            const auto cfg = oblab::load_config(config_path);
            oblab::RunOptions opts;
            if (*seed_opt) opts.seed = seed;
            if (*workers_opt) {
                opts.workers = workers;
                oblab::set_default_workers(workers);
            }
            if (*out_opt) opts.out_dir = out_dir;
            const auto res = oblab::run(cfg, opts);
            for (auto it = res.report["checks"].begin(); it != res.report["checks"].end(); ++it) {
                std::cout << (it->get<bool>() ? "pass  " : "FAIL  ") << it.key() << "\n";
            }
            std::cout << (res.passed ? "PASSED " : "FAILED ") << cfg.name << " -> " << res.out_dir.string() << "\n";
            return res.passed ? 0 : 1;
        }
        if (*compare) {
            const auto cmp = oblab::compare_baseline(read_json(report_path), read_json(baseline_path));
            for (const auto& m : cmp.mismatches) std::cout << "mismatch " << m << "\n";
            std::cout << (cmp.passed ? "baseline match\n" : "baseline mismatch\n");
            return cmp.passed ? 0 : 1;
        }
        if (*make_baseline) {
            const auto b = oblab::make_baseline(read_json(mb_report), rel_tol, abs_tol);
            std::ofstream out(mb_out);
            if (!out) throw oblab::ConfigError("cannot write " + mb_out);
            out << b.dump(2) << "\n";
            return 0;
        }
        if (*list) {
            for (const auto& n : oblab::experiment_names()) std::cout << n << "\n";
            return 0;
        }
    } catch (const oblab::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
