#pragma once
// Command-line front end: generate | run | compare | ablate | report.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or arguments,
// 3 budget violation. Failures print one JSON line on stderr:
//   {"error":"config","field":"trainer.epochs","message":"..."}

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "onebit/config.hpp"
#include "onebit/experiment.hpp"

namespace onebit::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kInvalidConfig = 2, kBudgetViolation = 3 };

namespace detail {

inline void error_line(std::ostream& err, const std::string& code, const std::string& field, const std::string& message) {
    nlohmann::json j{{"error", code}, {"field", field}, {"message", message}};
    err << j.dump() << '\n';
}

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string seeds;
    std::string out;
    std::string arm;
};

inline RunConfig resolve(const Common& c) {
    RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
    if (!c.seeds.empty()) cfg.seeds = parse_seed_range(c.seeds, "--seeds");
    if (c.seed) cfg.seeds = {*c.seed};
    if (!c.arm.empty()) cfg.arm = parse_arm(c.arm, "--arm");
    validate(cfg);
    return cfg;
}

inline int class_count(const RunConfig& cfg) {
    if (cfg.train_file.empty()) return cfg.dataset.classes;
    return read_dataset_csv(cfg.train_file).class_count();
}

inline void write_aggregate(const std::filesystem::path& dir, const std::vector<RunSummary>& rows,
                            const ComparisonReport& rep, const std::string& stem, std::ostream& out) {
    std::filesystem::create_directories(dir);
    std::ostringstream runs, table;
    write_summary_csv(runs, rows);
    write_text(dir / "runs.csv", runs.str());
    write_report_csv(table, rep);
    write_text(dir / (stem + ".csv"), table.str());
    write_text(dir / (stem + ".json"), to_json(rep).dump(2) + "\n");
    print_report(out, rep);
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"One-bit supervision simulator"};
    app.require_subcommand(1);
    detail::Common common;

    auto add_common = [&](CLI::App* sub, bool multi_seed) {
        sub->add_option("--config", common.config_path, "experiment config file");
        sub->add_option("--seed", common.seed, "single root seed");
        if (multi_seed) sub->add_option("--seeds", common.seeds, "seed range N..M");
        sub->add_option("--out", common.out, "output directory")->required();
    };

    auto* gen = app.add_subcommand("generate", "write a synthetic dataset (train.csv, test.csv)");
    add_common(gen, false);

    auto* run_cmd = app.add_subcommand("run", "run one pipeline");
    add_common(run_cmd, false);
    run_cmd->add_option("--arm", common.arm, "baseline | onebit | onebit-nls");

    auto* cmp = app.add_subcommand("compare", "bit-matched baseline vs one-bit arms over seeds");
    add_common(cmp, true);

    std::string preset;
    auto* abl = app.add_subcommand("ablate", "ablation presets: stages | quota | nfull | selection");
    abl->add_option("preset", preset, "ablation preset")->required();
    add_common(abl, true);
    abl->add_option("--arm", common.arm, "onebit | onebit-nls");

    std::string report_in;
    auto* rpt = app.add_subcommand("report", "aggregate per-run summary.csv files under a directory");
    rpt->add_option("--in", report_in, "directory holding run outputs")->required();
    rpt->add_option("--out", common.out, "where to write report.csv/report.json (default: --in)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        detail::error_line(err, "usage", "", e.what());
        return kInvalidConfig;
    }

    try {
        const std::filesystem::path out_dir = common.out;
        if (*gen) {
            RunConfig cfg = detail::resolve(common);
            if (!cfg.train_file.empty()) throw ConfigError("dataset.train_file", "generate builds blobs; drop the file keys");
            const auto seed = cfg.seeds.front();
            const BlobSet blobs = generate_for_seed(cfg, seed);
            std::filesystem::create_directories(out_dir);
            std::ostringstream train, test;
            write_dataset_csv(train, blobs.train);
            write_dataset_csv(test, blobs.test);
            write_text(out_dir / "train.csv", train.str());
            write_text(out_dir / "test.csv", test.str());
            nlohmann::json m{{"seed", seed},
                             {"dataset_seed", dataset_seed_for(cfg, seed)},
                             {"train_hash", git_blob_hash(train.str())},
                             {"test_hash", git_blob_hash(test.str())},
                             {"config", to_json(cfg)["dataset"]}};
            write_text(out_dir / "manifest.json", m.dump(2) + "\n");
            out << "wrote " << blobs.train.size() << " train / " << blobs.test.size() << " test samples to "
                << out_dir.string() << '\n';
        } else if (*run_cmd) {
            RunConfig cfg = detail::resolve(common);
            if (cfg.seeds.size() != 1) throw ConfigError("--seed", "run takes exactly one seed");
            const auto seed = cfg.seeds.front();
            const LoadedData data = load_data(cfg, seed);
            const ArmPlan arm = plan_arm(cfg, cfg.arm, data.train.class_count());
            const RunOutcome r = run_arm(arm, cfg, data, seed);
            write_run_outputs(r, cfg, out_dir);
            out << arm.label << " seed " << seed << " bits " << r.summary.bits << " accuracy";
            for (std::size_t i = 0; i < r.summary.trajectory.size(); ++i) {
                out << (i ? " -> " : " ") << r.summary.trajectory[i];
            }
            out << '\n';
        } else if (*cmp) {
            RunConfig cfg = detail::resolve(common);
            const auto arms = comparison_arms(cfg, detail::class_count(cfg));
            check_bit_matched(arms);
            const auto rows = run_arms(cfg, arms, cfg.seeds, out_dir, &out);
            detail::write_aggregate(out_dir, rows, aggregate(rows), "comparison", out);
        } else if (*abl) {
            const auto p = parse_preset(preset);
            RunConfig cfg = detail::resolve(common);
            const auto arms = ablation_arms(cfg, p, detail::class_count(cfg));
            const auto rows = run_arms(cfg, arms, cfg.seeds, out_dir, &out);
            detail::write_aggregate(out_dir, rows, aggregate(rows), "ablation", out);
        } else if (*rpt) {
            std::vector<RunSummary> rows;
            std::vector<std::filesystem::path> files;
            for (const auto& e : std::filesystem::recursive_directory_iterator(report_in)) {
                if (e.is_regular_file() && e.path().filename() == "summary.csv") files.push_back(e.path());
            }
            if (files.empty()) throw ConfigError("--in", "no summary.csv found under " + report_in);
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                std::ifstream is(f);
                auto part = read_summary_csv(is);
                rows.insert(rows.end(), part.begin(), part.end());
            }
            const std::filesystem::path dest = common.out.empty() ? std::filesystem::path(report_in) : out_dir;
            detail::write_aggregate(dest, rows, aggregate(rows), "report", out);
        }
    } catch (const ConfigError& e) {
        detail::error_line(err, "config", e.field(), e.what());
        return kInvalidConfig;
    } catch (const BudgetViolation& e) {
        detail::error_line(err, "budget", "supervision", e.what());
        return kBudgetViolation;
    } catch (const BudgetExhausted& e) {
        detail::error_line(err, "budget", "supervision", e.what());
        return kBudgetViolation;
    } catch (const std::exception& e) {
        detail::error_line(err, "runtime", "", e.what());
        return kFailure;
    }
    return kOk;
}

/// Convenience overload for tests.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<const char*> argv{"onebit"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace onebit::cli
