#pragma once
// Experiment orchestration: bit-matched arms, single runs with their output files,
// multi-seed aggregation and ablation presets.

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "onebit/config.hpp"
#include "onebit/dataset.hpp"
#include "onebit/oracle.hpp"
#include "onebit/scheduler.hpp"
#include "onebit/trainer.hpp"

namespace onebit {

/// The planned bits of a run exceed the declared budget, or compared arms are not bit-matched.
class BudgetViolation : public Error {
public:
    using Error::Error;
};

/// Relative tolerance on bit totals between compared arms (rounding of the query schedule).
inline constexpr double kArmBitTolerance = 0.015;

// ---------------------------------------------------------------------------
// Arms

struct ArmPlan {
    std::string label;
    Arm arm = Arm::OneBitNls;
    std::size_t n_full = 0;
    StagePlan plan;
    bool negative_suppression = true;
    double planned_bits = 0.0;

    std::size_t queries() const { return plan.total_quota(); }
};

inline ArmPlan plan_arm(const RunConfig& cfg, Arm arm, int classes) {
    ArmPlan a;
    a.label = to_string(arm);
    a.arm = arm;
    a.negative_suppression = arm != Arm::OneBit;
    a.plan.strategy = cfg.plan.strategy;
    a.plan.cold_start = cfg.plan.cold_start;
    if (arm == Arm::Baseline) {
        a.n_full = cfg.supervision.n_full_baseline;
        if (!cfg.plan.stage_epochs.empty()) a.plan.stage_epochs = {cfg.plan.stage_epochs.front()};
    } else {
        a.n_full = cfg.supervision.n_full;
        a.plan.stage_epochs = cfg.plan.stage_epochs;
        if (cfg.plan.stages > 0) {
            const std::size_t q = cfg.supervision.queries
                                      ? *cfg.supervision.queries
                                      : equivalent_schedules(cfg.supervision.n_full_baseline, classes, cfg.supervision.n_full);
            a.plan.quotas = split_quota(static_cast<long long>(q), cfg.plan.stages, cfg.plan.split);
        }
    }
    a.planned_bits = plan_budget(a.n_full, a.queries(), classes);
    if (cfg.supervision.total_bits &&
        a.planned_bits > *cfg.supervision.total_bits + kBitSlack * std::max(1.0, *cfg.supervision.total_bits)) {
        std::ostringstream msg;
        msg << "arm " << a.label << " plans " << a.planned_bits << " bits, budget is " << *cfg.supervision.total_bits;
        throw BudgetViolation(msg.str());
    }
    return a;
}

/// Throws BudgetViolation unless every arm is within kArmBitTolerance of the largest.
inline void check_bit_matched(const std::vector<ArmPlan>& arms) {
    double hi = 0.0;
    for (const auto& a : arms) hi = std::max(hi, a.planned_bits);
    for (const auto& a : arms) {
        if (hi > 0.0 && (hi - a.planned_bits) / hi > kArmBitTolerance) {
            std::ostringstream msg;
            msg << "arm " << a.label << " plans " << a.planned_bits << " bits vs " << hi
                << " for the largest arm (tolerance " << kArmBitTolerance * 100 << "%)";
            throw BudgetViolation(msg.str());
        }
    }
}

// ---------------------------------------------------------------------------
// Data

/// Git blob hash ("blob <len>\0" + content) as lowercase hex SHA-1.
inline std::string git_blob_hash(const std::string& content) {
    const std::string header = "blob " + std::to_string(content.size()) + '\0';
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
    EVP_DigestUpdate(ctx, header.data(), header.size());
    EVP_DigestUpdate(ctx, content.data(), content.size());
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    return os.str();
}

struct LoadedData {
    Dataset train;
    Dataset test;
    std::string train_hash;  // of the raw (unstandardized) training archive
};

inline std::uint64_t dataset_seed_for(const RunConfig& cfg, std::uint64_t seed) {
    return cfg.dataset_seed ? *cfg.dataset_seed : derive_seed(seed, "dataset");
}

/// Raw blobs for a seed, before standardization.
inline BlobSet generate_for_seed(const RunConfig& cfg, std::uint64_t seed) {
    return generate_blobs(cfg.dataset, dataset_seed_for(cfg, seed));
}

inline LoadedData load_data(const RunConfig& cfg, std::uint64_t seed) {
    LoadedData d;
    std::ostringstream csv;
    if (!cfg.train_file.empty()) {
        std::ifstream is(cfg.train_file, std::ios::binary);
        if (!is) throw ConfigError("dataset.train_file", "cannot open " + cfg.train_file);
        csv << is.rdbuf();
        std::istringstream parse(csv.str());
        d.train = read_dataset_csv(parse);
        d.test = read_dataset_csv(cfg.test_file, d.train.class_count());
        if (d.test.dim() != d.train.dim()) throw ConfigError("dataset.test_file", "feature width differs from train file");
    } else {
        auto blobs = generate_for_seed(cfg, seed);
        write_dataset_csv(csv, blobs.train);
        d.train = std::move(blobs.train);
        d.test = std::move(blobs.test);
    }
    d.train_hash = git_blob_hash(csv.str());
    standardize_features(d.train, d.test);
    return d;
}

// ---------------------------------------------------------------------------
// Runs

struct RunSummary {
    std::string arm;
    std::uint64_t seed = 0;
    std::size_t n_full = 0;
    std::size_t queries = 0;
    std::size_t stages = 0;
    double bits = 0.0;
    std::vector<double> trajectory;             // accuracy after each training stage, initial first
    std::vector<std::size_t> correct_by_stage;  // correct guesses per stage, initial (0) first

    double init_acc() const { return trajectory.empty() ? 0.0 : trajectory.front(); }
    double final_acc() const { return trajectory.empty() ? 0.0 : trajectory.back(); }
    std::size_t correct() const {
        std::size_t s = 0;
        for (auto c : correct_by_stage) s += c;
        return s;
    }

    bool operator==(const RunSummary&) const = default;
};

struct RunOutcome {
    ArmPlan arm;
    std::uint64_t seed = 0;
    PipelineResult result;
    RunSummary summary;
    std::string dataset_hash;
};

inline RunSummary summarize(const ArmPlan& arm, std::uint64_t seed, const PipelineResult& r) {
    RunSummary s;
    s.arm = arm.label;
    s.seed = seed;
    s.n_full = arm.n_full;
    s.queries = arm.queries();
    s.stages = arm.plan.stage_count();
    s.bits = r.budget.spent();
    for (const auto& rep : r.reports) {
        s.trajectory.push_back(rep.accuracy);
        s.correct_by_stage.push_back(rep.correct);
    }
    return s;
}

inline RunOutcome run_arm(const ArmPlan& arm, const RunConfig& cfg, const LoadedData& data, std::uint64_t seed) {
    TrainerConfig tc = cfg.trainer;
    tc.negative_suppression = arm.negative_suppression;
    OracleOptions oracle{cfg.supervision.oracle_error_rate, derive_seed(seed, "oracle")};
    RunOutcome out{arm, seed, run_pipeline(data.train, data.test, arm.n_full, arm.plan, tc, seed, oracle), {},
                   data.train_hash};
    out.summary = summarize(arm, seed, out.result);
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const StageReport& r) {
    return {{"stage", r.stage},
            {"queried", r.queried},
            {"correct", r.correct},
            {"supervised", r.supervised},
            {"guessed_right", r.guessed_right},
            {"guessed_wrong", r.guessed_wrong},
            {"unlabeled", r.unlabeled},
            {"accuracy", r.accuracy},
            {"bits_spent", r.bits_spent}};
}

inline nlohmann::json to_json(const std::vector<StageReport>& reports) {
    auto a = nlohmann::json::array();
    for (const auto& r : reports) a.push_back(to_json(r));
    return a;
}

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["dataset"] = {{"classes", c.dataset.classes},
                    {"dim", c.dataset.dim},
                    {"train_per_class", c.dataset.train_per_class},
                    {"test_per_class", c.dataset.test_per_class},
                    {"class_separation", c.dataset.class_separation},
                    {"noise_scale", c.dataset.noise_scale},
                    {"train_file", c.train_file},
                    {"test_file", c.test_file}};
    j["supervision"] = {{"n_full", c.supervision.n_full},
                        {"n_full_baseline", c.supervision.n_full_baseline},
                        {"queries", c.supervision.queries ? nlohmann::json(*c.supervision.queries) : nlohmann::json("auto")},
                        {"total_bits", c.supervision.total_bits ? nlohmann::json(*c.supervision.total_bits) : nlohmann::json()},
                        {"oracle_error_rate", c.supervision.oracle_error_rate}};
    j["plan"] = {{"stages", c.plan.stages},
                 {"split", to_string(c.plan.split)},
                 {"strategy", to_string(c.plan.strategy)},
                 {"cold_start", c.plan.cold_start},
                 {"stage_epochs", c.plan.stage_epochs}};
    const auto& t = c.trainer;
    j["trainer"] = {{"hidden", t.hidden_layers},
                    {"consistency_weight", t.consistency_weight},
                    {"rampup_fraction", t.rampup_fraction},
                    {"epochs", t.epochs},
                    {"batch_size", t.batch_size},
                    {"labeled_fraction", t.labeled_fraction},
                    {"learning_rate", t.learning_rate},
                    {"momentum", t.momentum},
                    {"ema_decay", t.ema_decay},
                    {"input_noise", t.input_noise},
                    {"mask_student_negative", t.mask_student_negative}};
    return j;
}

namespace detail {

template <typename T>
std::string join(const std::vector<T>& v, char sep = ';') {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << sep;
        os << v[i];
    }
    return os.str();
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

}  // namespace detail

inline constexpr const char* kSummaryHeader =
    "arm,seed,n_full,queries,stages,bits,init_acc,final_acc,correct,wrong,trajectory,correct_by_stage";

inline void write_summary_csv(std::ostream& os, const std::vector<RunSummary>& rows) {
    os << kSummaryHeader << '\n';
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& r : rows) {
        os << r.arm << ',' << r.seed << ',' << r.n_full << ',' << r.queries << ',' << r.stages << ',' << r.bits << ','
           << r.init_acc() << ',' << r.final_acc() << ',' << r.correct() << ',' << (r.queries - r.correct()) << ','
           << detail::join(r.trajectory) << ',' << detail::join(r.correct_by_stage) << '\n';
    }
}

inline std::vector<RunSummary> read_summary_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kSummaryHeader) throw Error("not a summary.csv file");
    std::vector<RunSummary> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split(line, ',');
        if (cells.size() != 12) throw Error("summary row has " + std::to_string(cells.size()) + " cells");
        RunSummary r;
        r.arm = cells[0];
        r.seed = std::stoull(cells[1]);
        r.n_full = std::stoull(cells[2]);
        r.queries = std::stoull(cells[3]);
        r.stages = std::stoull(cells[4]);
        r.bits = std::stod(cells[5]);
        for (const auto& v : detail::split(cells[10], ';')) r.trajectory.push_back(std::stod(v));
        for (const auto& v : detail::split(cells[11], ';')) r.correct_by_stage.push_back(std::stoull(v));
        out.push_back(std::move(r));
    }
    return out;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error("cannot write " + p.string());
    os << text;
}

/// stage_reports.json, history.csv, summary.csv, ledger.jsonl, manifest.json, teacher.ckpt
inline void write_run_outputs(const RunOutcome& run, const RunConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_text(dir / "stage_reports.json", to_json(run.result.reports).dump(2) + "\n");

    std::ostringstream hist;
    write_history_csv(hist, run.result.model.history);
    write_text(dir / "history.csv", hist.str());

    std::ostringstream summary;
    write_summary_csv(summary, {run.summary});
    write_text(dir / "summary.csv", summary.str());

    std::ostringstream ledger;
    write_ledger_jsonl(ledger, run.result.ledger);
    write_text(dir / "ledger.jsonl", ledger.str());

    std::ostringstream ckpt;
    write_checkpoint(ckpt, run.result.model.teacher);
    write_text(dir / "teacher.ckpt", ckpt.str());

    nlohmann::json manifest;
    manifest["arm"] = run.arm.label;
    manifest["seed"] = run.seed;
    manifest["seed_streams"] = {{"dataset", dataset_seed_for(cfg, run.seed)},
                                {"split", derive_seed(run.seed, "split")},
                                {"init", derive_seed(run.seed, "init")},
                                {"oracle", derive_seed(run.seed, "oracle")}};
    manifest["n_full"] = run.arm.n_full;
    manifest["quotas"] = run.arm.plan.quotas;
    manifest["negative_suppression"] = run.arm.negative_suppression;
    manifest["planned_bits"] = run.arm.planned_bits;
    manifest["dataset_hash"] = run.dataset_hash;
    manifest["config"] = to_json(cfg);
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Aggregation

struct ArmStats {
    std::string arm;
    std::size_t runs = 0;
    double median = 0.0;
    double min = 0.0;
    double max = 0.0;
    double bits = 0.0;
    std::size_t n_full = 0;
    std::size_t queries = 0;
    std::vector<double> median_trajectory;
    std::vector<std::size_t> correct_sum_by_stage;
    std::vector<double> correct_mean_by_stage;
};

struct ComparisonReport {
    std::vector<ArmStats> arms;  // in order of first appearance
    double max_bit_gap = 0.0;    // relative gap between the largest and smallest arm budget

    const ArmStats& at(const std::string& arm) const {
        for (const auto& a : arms) {
            if (a.arm == arm) return a;
        }
        throw Error("no arm named " + arm);
    }
};

inline double median(std::vector<double> v) {
    if (v.empty()) throw Error("median of nothing");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline ComparisonReport aggregate(const std::vector<RunSummary>& runs) {
    if (runs.empty()) throw Error("nothing to aggregate");
    std::vector<std::string> order;
    std::map<std::string, std::vector<const RunSummary*>> by_arm;
    for (const auto& r : runs) {
        if (!by_arm.count(r.arm)) order.push_back(r.arm);
        by_arm[r.arm].push_back(&r);
    }
    ComparisonReport rep;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& name : order) {
        const auto& rs = by_arm[name];
        const RunSummary& first = *rs.front();
        for (const auto* r : rs) {
            if (r->stages != first.stages || r->n_full != first.n_full || r->queries != first.queries ||
                r->trajectory.size() != first.trajectory.size() ||
                std::abs(r->bits - first.bits) > kBitSlack * std::max(1.0, first.bits)) {
                throw Error("arm " + name + " differs across seeds");
            }
        }
        ArmStats a;
        a.arm = name;
        a.runs = rs.size();
        a.bits = first.bits;
        a.n_full = first.n_full;
        a.queries = first.queries;
        std::vector<double> finals;
        for (const auto* r : rs) finals.push_back(r->final_acc());
        a.median = median(finals);
        a.min = *std::min_element(finals.begin(), finals.end());
        a.max = *std::max_element(finals.begin(), finals.end());
        for (std::size_t s = 0; s < first.trajectory.size(); ++s) {
            std::vector<double> col;
            std::size_t sum = 0;
            for (const auto* r : rs) {
                col.push_back(r->trajectory[s]);
                sum += r->correct_by_stage.at(s);
            }
            a.median_trajectory.push_back(median(col));
            a.correct_sum_by_stage.push_back(sum);
            a.correct_mean_by_stage.push_back(static_cast<double>(sum) / static_cast<double>(rs.size()));
        }
        lo = std::min(lo, a.bits);
        hi = std::max(hi, a.bits);
        rep.arms.push_back(std::move(a));
    }
    rep.max_bit_gap = hi > 0.0 ? (hi - lo) / hi : 0.0;
    return rep;
}

inline nlohmann::json to_json(const ComparisonReport& rep) {
    nlohmann::json j;
    j["max_bit_gap"] = rep.max_bit_gap;
    j["arms"] = nlohmann::json::array();
    for (const auto& a : rep.arms) {
        j["arms"].push_back({{"arm", a.arm},
                             {"runs", a.runs},
                             {"median", a.median},
                             {"min", a.min},
                             {"max", a.max},
                             {"bits", a.bits},
                             {"n_full", a.n_full},
                             {"queries", a.queries},
                             {"median_trajectory", a.median_trajectory},
                             {"correct_sum_by_stage", a.correct_sum_by_stage},
                             {"correct_mean_by_stage", a.correct_mean_by_stage}});
    }
    return j;
}

/// Per-arm table row: arm,runs,n_full,queries,bits,median,min,max,trajectory,mean_correct_by_stage
inline void write_report_csv(std::ostream& os, const ComparisonReport& rep) {
    os << "arm,runs,n_full,queries,bits,median,min,max,trajectory,mean_correct_by_stage\n";
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& a : rep.arms) {
        os << a.arm << ',' << a.runs << ',' << a.n_full << ',' << a.queries << ',' << a.bits << ',' << a.median << ','
           << a.min << ',' << a.max << ',' << detail::join(a.median_trajectory) << ','
           << detail::join(a.correct_mean_by_stage) << '\n';
    }
}

/// Human-readable table; trajectories in the "init -> stage1 -> stage2" arrow form.
inline void print_report(std::ostream& os, const ComparisonReport& rep) {
    struct Row {
        std::string arm, runs, bits, median, range, traj, corr;
    };
    std::vector<Row> rows;
    std::size_t arm_w = 3, traj_w = 21;
    for (const auto& a : rep.arms) {
        std::ostringstream range, traj, corr, bits, med;
        range << std::fixed << std::setprecision(2) << '[' << a.min * 100 << ", " << a.max * 100 << ']';
        traj << std::fixed << std::setprecision(2);
        for (std::size_t i = 0; i < a.median_trajectory.size(); ++i) traj << (i ? " -> " : "") << a.median_trajectory[i] * 100;
        corr << std::fixed << std::setprecision(1);
        for (std::size_t i = 1; i < a.correct_mean_by_stage.size(); ++i) corr << (i > 1 ? " / " : "") << a.correct_mean_by_stage[i];
        bits << std::fixed << std::setprecision(1) << a.bits;
        med << std::fixed << std::setprecision(2) << a.median * 100;
        rows.push_back({a.arm, std::to_string(a.runs), bits.str(), med.str(), range.str(), traj.str(), corr.str()});
        arm_w = std::max(arm_w, a.arm.size());
        traj_w = std::max(traj_w, rows.back().traj.size());
    }
    auto line = [&](const Row& r) {
        os << std::left << std::setw(static_cast<int>(arm_w + 2)) << r.arm << std::setw(6) << r.runs << std::setw(11)
           << r.bits << std::setw(9) << r.median << std::setw(17) << r.range << std::setw(static_cast<int>(traj_w + 2))
           << r.traj << r.corr << '\n';
    };
    line({"arm", "runs", "bits", "median", "[min, max]", "trajectory (median %)", "correct guesses (mean/stage)"});
    for (const auto& r : rows) line(r);
    os << "max bit gap between arms: " << std::fixed << std::setprecision(3) << rep.max_bit_gap * 100 << "%\n";
}

// ---------------------------------------------------------------------------
// Multi-arm drivers

enum class AblationPreset { Stages, Quota, NFull, Selection };

inline AblationPreset parse_preset(const std::string& s) {
    if (s == "stages") return AblationPreset::Stages;
    if (s == "quota") return AblationPreset::Quota;
    if (s == "nfull") return AblationPreset::NFull;
    if (s == "selection") return AblationPreset::Selection;
    throw ConfigError("preset", "unknown ablation '" + s + "' (stages|quota|nfull|selection)");
}

inline std::vector<ArmPlan> comparison_arms(const RunConfig& cfg, int classes) {
    return {plan_arm(cfg, Arm::Baseline, classes), plan_arm(cfg, Arm::OneBit, classes),
            plan_arm(cfg, Arm::OneBitNls, classes)};
}

/// Variants of the configured one-bit arm (cfg.arm), one per preset value.
inline std::vector<ArmPlan> ablation_arms(const RunConfig& cfg, AblationPreset preset, int classes) {
    std::vector<ArmPlan> out;
    const Arm arm = cfg.arm == Arm::Baseline ? Arm::OneBitNls : cfg.arm;
    auto variant = [&](RunConfig c, std::string label) {
        ArmPlan a = plan_arm(c, arm, classes);
        a.label = std::move(label);
        out.push_back(std::move(a));
    };
    switch (preset) {
        case AblationPreset::Stages:
            for (auto t : cfg.ablate.stages) {
                RunConfig c = cfg;
                c.plan.stages = t;
                c.plan.stage_epochs.clear();
                variant(c, "stages=" + std::to_string(t));
            }
            break;
        case AblationPreset::Quota:
            for (auto s : cfg.ablate.splits) {
                RunConfig c = cfg;
                c.plan.split = s;
                variant(c, "split=" + to_string(s));
            }
            break;
        case AblationPreset::NFull:
            for (auto n : cfg.ablate.n_full) {
                RunConfig c = cfg;
                if (n > c.supervision.n_full_baseline) throw ConfigError("ablate.n_full", "exceeds n_full_baseline");
                c.supervision.n_full = n;
                c.supervision.queries.reset();
                variant(c, "n_full=" + std::to_string(n));
            }
            break;
        case AblationPreset::Selection:
            for (auto s : cfg.ablate.strategies) {
                RunConfig c = cfg;
                c.plan.strategy = s;
                variant(c, "strategy=" + to_string(s));
            }
            break;
    }
    return out;
}

/// Runs every arm for every seed, writing <out>/<arm>/seed_<n>/ per run.
inline std::vector<RunSummary> run_arms(const RunConfig& cfg, const std::vector<ArmPlan>& arms,
                                        const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out,
                                        std::ostream* log = nullptr) {
    std::vector<RunSummary> rows;
    for (auto seed : seeds) {
        const LoadedData data = load_data(cfg, seed);
        for (const auto& arm : arms) {
            auto run = run_arm(arm, cfg, data, seed);
            if (!out.empty()) write_run_outputs(run, cfg, out / arm.label / ("seed_" + std::to_string(seed)));
            if (log) {
                *log << arm.label << " seed " << seed << ": final accuracy " << std::fixed << std::setprecision(4)
                     << run.summary.final_acc() << ", correct guesses " << run.summary.correct() << '/'
                     << run.summary.queries << '\n';
            }
            rows.push_back(std::move(run.summary));
        }
    }
    return rows;
}

}  // namespace onebit
