// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "onebit/onebit.hpp"
#include "support/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace onebit;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
};

std::string fmt(double v, int digits = 6) {
    std::ostringstream os;
    os << std::setprecision(digits) << v;
    return os.str();
}

bool within_rel(double value, double target, double rel) { return std::abs(value - target) <= rel * std::abs(target); }

RunConfig shipped(const std::string& name) { return load_config((fs::path(ONEBIT_CONFIG_DIR) / name).string()); }

// 1 ------------------------------------------------------------------------

Verdict bit_accounting() {
    Verdict v;
    const double l100 = bits_for_full_label(100), l1000 = bits_for_full_label(1000);
    const double a = plan_budget(10000, 0, 100), b = plan_budget(3000, 47000, 100), c = plan_budget(30000, 977000, 1000);
    v.pass = std::abs(l100 - 6.6439) <= 5e-5 && std::abs(l1000 - 9.9658) <= 5e-5 && within_rel(a, 66.4e3, 1e-3) &&
             within_rel(b, 66.9e3, 1e-3) && within_rel(c, 1276e3, 1e-3);
    v.detail = "log2(100)=" + fmt(l100, 8) + " log2(1000)=" + fmt(l1000, 8) + " budgets " + fmt(a, 8) + ", " +
               fmt(b, 8) + ", " + fmt(c, 8);
    return v;
}

// 2 ------------------------------------------------------------------------

Verdict gradient_oracle() {
    constexpr int kCases = 200;
    double worst = 0.0, worst_gap = 0.0;
    std::size_t params = 0;
    for (int s = 0; s < kCases; ++s) {
        auto c = onebit::testing::make_case(derive_seed(2024, "gradcheck", {static_cast<std::uint64_t>(s)}));
        const auto r = onebit::testing::check_gradients(c);
        worst = std::max(worst, r.max_rel_error);
        worst_gap = std::max(worst_gap, r.loss_gap);
        params += r.parameters;
    }
    Verdict v;
    v.pass = worst < 1e-4 && worst_gap < 1e-9;
    v.detail = std::to_string(kCases) + " networks, " + std::to_string(params) + " parameters, max rel error " +
               fmt(worst, 3) + " (< 1e-4), max loss gap vs reference " + fmt(worst_gap, 3);
    return v;
}

// 3 ------------------------------------------------------------------------

Verdict nls_invariants() {
    constexpr int kVectors = 10000;
    Rng rng(derive_seed(7, "nls"));
    double worst_suppressed = 0.0, worst_sum = 0.0, worst_ratio = 0.0;
    for (int n = 0; n < kVectors; ++n) {
        const std::size_t classes = 2 + rng.below(99);
        const double scale = rng.uniform(0.1, 10.0);
        Vector z(classes);
        for (double& x : z) x = scale * rng.normal();
        const int neg = static_cast<int>(rng.below(classes));
        const auto before = softmax(z);
        const auto after = softmax(suppress_logit(z, neg));
        worst_suppressed = std::max(worst_suppressed, after[static_cast<std::size_t>(neg)]);
        double sum = 0.0;
        for (double p : after) sum += p;
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
        for (std::size_t i = 0; i < classes; ++i) {
            for (std::size_t j = 0; j < classes; ++j) {
                if (i == j || static_cast<int>(i) == neg || static_cast<int>(j) == neg) continue;
                const double r0 = before[i] / before[j], r1 = after[i] / after[j];
                worst_ratio = std::max(worst_ratio, std::abs(r1 - r0) / std::abs(r0));
            }
        }
    }
    Verdict v;
    v.pass = worst_suppressed < 1e-9 && worst_sum <= 1e-9 && worst_ratio <= 1e-9;
    v.detail = std::to_string(kVectors) + " vectors: max suppressed prob " + fmt(worst_suppressed, 3) +
               ", max |sum-1| " + fmt(worst_sum, 3) + ", max ratio drift " + fmt(worst_ratio, 3);
    return v;
}

// 4 ------------------------------------------------------------------------

struct ProtocolStats {
    std::size_t pipelines = 0, mutations = 0, queries = 0;
    std::string failure;
};

void require(bool ok, const std::string& what, ProtocolStats& st) {
    if (!ok && st.failure.empty()) st.failure = what;
}

// Disjointness and coverage recounted from scratch.
bool covers_exactly(const Partition& p) {
    std::vector<int> hits(p.size(), 0);
    for (auto m : {Membership::Supervised, Membership::GuessedRight, Membership::GuessedWrong, Membership::Unlabeled}) {
        for (SampleId id : p.ids(m)) {
            if (id >= p.size() || p.membership(id) != m) return false;
            ++hits[id];
        }
    }
    return std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
}

void one_protocol_case(std::uint64_t seed, ProtocolStats& st) {
    Rng rng(derive_seed(seed, "protocol-case"));
    BlobSpec spec;
    spec.classes = 2 + rng.below(9);
    spec.dim = 5 + rng.below(6);
    spec.train_per_class = 5 + rng.below(2000 / spec.classes - 4);
    spec.test_per_class = 5;
    spec.class_separation = rng.uniform(1.0, 4.0);
    spec.noise_scale = rng.uniform(0.5, 2.0);
    auto blobs = generate_blobs(spec, seed);
    standardize_features(blobs.train, blobs.test);
    const auto& train = blobs.train;
    const std::size_t n = train.size();
    const int classes = train.class_count();

    const std::size_t n_full = spec.classes + rng.below(n / 4);
    const std::size_t stages = rng.below(4);
    StagePlan plan;
    if (stages > 0) {
        const auto total = static_cast<long long>(rng.below(n - n_full + 1));
        plan.quotas = split_quota(total, stages, static_cast<QuotaSplit>(rng.below(3)));
    }
    plan.strategy = static_cast<SelectionStrategy>(rng.below(3));
    plan.cold_start = rng.below(4) == 0;
    TrainerConfig cfg;
    cfg.hidden_layers = {8};
    cfg.epochs = 1;
    cfg.batch_size = 64;
    cfg.negative_suppression = rng.below(2) == 0;

    const auto res = run_pipeline(train, blobs.test, n_full, plan, cfg, seed);
    ++st.pipelines;

    // budget exactness
    const double expected = static_cast<double>(n_full) * std::log2(static_cast<double>(classes)) +
                            static_cast<double>(plan.total_quota());
    require(std::abs(res.budget.spent() - expected) <= 1e-9 * std::max(1.0, expected),
            "budget spent " + fmt(res.budget.spent(), 17) + " != " + fmt(expected, 17), st);
    require(res.ledger.size() == plan.total_quota(), "ledger size differs from total quota", st);

    // every mutation, replayed from the initial split in ledger order
    Partition p = initial_split(train, n_full, derive_seed(seed, "split"));
    require(covers_exactly(p), "initial partition not a cover", st);
    for (const auto& rec : res.ledger.records()) {
        p.apply_guess_result(rec.id, rec.guess, rec.answer);
        ++st.mutations;
        require(covers_exactly(p), "partition not disjoint/covering after a mutation", st);
        try {
            check_partition(p, train);
        } catch (const ProtocolError& e) {
            require(false, e.what(), st);
        }
    }
    require(p == res.partition, "replayed partition differs from the pipeline's", st);
    require(replay_ledger(train, res.ledger), "ledger replay disagrees with the oracle", st);
    st.queries += res.ledger.size();

    // once-only: every queried id raises on a second query and nothing changes
    Partition part = res.partition;
    QueryLedger ledger = res.ledger;
    BitBudget budget(res.budget.spent() + 10.0);
    budget.charge(res.budget.spent());
    for (const auto& rec : res.ledger.records()) {
        bool raised = false;
        try {
            answer_query(train, part, ledger, budget, rec.id, rec.guess, 99);
        } catch (const OnceOnlyViolation&) {
            raised = true;
        }
        require(raised, "re-query of sample " + std::to_string(rec.id) + " did not raise", st);
    }
    require(part == res.partition && ledger == res.ledger && budget.remaining() > 10.0 - 1e-6,
            "failed re-query mutated state", st);
}

Verdict protocol_invariants() {
    ProtocolStats st;
    for (std::uint64_t s = 0; s < 40 && st.failure.empty(); ++s) one_protocol_case(derive_seed(99, "protocol", {s}), st);
    Verdict v;
    v.pass = st.failure.empty();
    v.detail = std::to_string(st.pipelines) + " pipelines, " + std::to_string(st.queries) + " queries, " +
               std::to_string(st.mutations) + " mutations checked" + (st.failure.empty() ? "" : ": " + st.failure);
    return v;
}

// 5 and 6 ------------------------------------------------------------------

std::vector<double> finals_of(const std::vector<RunSummary>& rows, const std::string& arm) {
    std::vector<double> out;
    for (const auto& r : rows) {
        if (r.arm == arm) out.push_back(r.final_acc());
    }
    return out;
}

std::vector<double> correct_of(const std::vector<RunSummary>& rows, const std::string& arm) {
    std::vector<double> out;
    for (const auto& r : rows) {
        if (r.arm == arm) out.push_back(static_cast<double>(r.correct()));
    }
    return out;
}

double sample_stddev(const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

Verdict nls_gain(std::vector<RunSummary>& rows_out) {
    const RunConfig cfg = shipped("compare.ini");
    const auto arms = comparison_arms(cfg, static_cast<int>(cfg.dataset.classes));
    check_bit_matched(arms);
    rows_out = run_arms(cfg, arms, cfg.seeds, {});
    const double base = median(finals_of(rows_out, "baseline"));
    const double plain = median(finals_of(rows_out, "onebit"));
    const double nls = median(finals_of(rows_out, "onebit-nls"));
    Verdict v;
    v.pass = cfg.seeds.size() >= 5 && base >= 0.60 && base <= 0.80 && nls > plain && nls >= base;
    v.detail = std::to_string(cfg.seeds.size()) + " seeds, bits " + fmt(arms[0].planned_bits, 5) + " vs " +
               fmt(arms[1].planned_bits, 5) + ": median accuracy baseline " + fmt(base * 100, 4) + "%, one-bit " +
               fmt(plain * 100, 4) + "%, one-bit+NLS " + fmt(nls * 100, 4) + "%";
    return v;
}

Verdict stage_ablation(const std::vector<RunSummary>& comparison_rows) {
    RunConfig cfg = shipped("compare.ini");
    cfg.ablate.stages = {1};
    cfg.ablate.splits = {QuotaSplit::FrontLoaded, QuotaSplit::BackLoaded};
    auto arms = ablation_arms(cfg, AblationPreset::Stages, static_cast<int>(cfg.dataset.classes));
    const auto splits = ablation_arms(cfg, AblationPreset::Quota, static_cast<int>(cfg.dataset.classes));
    arms.insert(arms.end(), splits.begin(), splits.end());
    const auto rows = run_arms(cfg, arms, cfg.seeds, {});

    // the two-stage balanced plan is the comparison's one-bit+NLS arm
    const double one_stage = median(correct_of(rows, "stages=1"));
    const double two_stage = median(correct_of(comparison_rows, "onebit-nls"));
    const auto balanced_finals = finals_of(comparison_rows, "onebit-nls");
    const double balanced = median(balanced_finals);
    const double noise = sample_stddev(balanced_finals);
    const double front = median(finals_of(rows, "split=front_loaded"));
    const double back = median(finals_of(rows, "split=back_loaded"));

    Verdict v;
    v.pass = two_stage >= one_stage && front - balanced <= noise && back - balanced <= noise;
    v.detail = "median correct guesses two-stage " + fmt(two_stage) + " vs one-stage " + fmt(one_stage) +
               "; final accuracy balanced " + fmt(balanced * 100, 4) + "%, 75/25 " + fmt(front * 100, 4) +
               "%, 25/75 " + fmt(back * 100, 4) + "%, seed noise (std) " + fmt(noise * 100, 3) + " pts";
    return v;
}

// 7 ------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

Verdict determinism() {
    const fs::path root = fs::temp_directory_path() / "onebit_acceptance_determinism";
    fs::remove_all(root);
    Verdict v;
    std::size_t compared = 0;
    for (const char* config : {"smoke.ini", "compare.ini"}) {
        std::vector<fs::path> outs;
        for (int rep = 0; rep < 2; ++rep) {
            const fs::path out = root / (std::string(config) + "_" + std::to_string(rep));
            const std::string cmd = std::string("\"") + ONEBIT_CLI_PATH + "\" run --config \"" +
                                    (fs::path(ONEBIT_CONFIG_DIR) / config).string() + "\" --seed 3 --out \"" +
                                    out.string() + "\" > /dev/null";
            if (std::system(cmd.c_str()) != 0) {
                v.pass = false;
                v.detail = "CLI run failed for " + std::string(config);
                return v;
            }
            outs.push_back(out);
        }
        for (const char* file : {"stage_reports.json", "summary.csv"}) {
            const auto a = slurp(outs[0] / file), b = slurp(outs[1] / file);
            if (a.empty() || a != b) {
                v.pass = false;
                v.detail = std::string(file) + " differs between runs of " + config;
                return v;
            }
            ++compared;
        }
    }
    fs::remove_all(root);
    v.detail = std::to_string(compared) + " file pairs byte-identical across repeated CLI runs";
    return v;
}

// 8 ------------------------------------------------------------------------

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

bool same_history(const std::vector<EpochStats>& a, const std::vector<EpochStats>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].epoch != b[i].epoch || !same_bits(a[i].ce, b[i].ce) || !same_bits(a[i].consistency, b[i].consistency) ||
            !same_bits(a[i].total, b[i].total) || !same_bits(a[i].eval_accuracy, b[i].eval_accuracy)) {
            return false;
        }
    }
    return true;
}

Verdict degenerate_plan() {
    const RunConfig cfg = shipped("baseline.ini");
    Verdict v;
    std::size_t checked = 0;
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        const auto data = load_data(cfg, seed);
        const auto pipeline = run_pipeline(data.train, data.test, cfg.supervision.n_full_baseline, StagePlan{},
                                           cfg.trainer, seed);
        const auto baseline =
            train_mean_teacher_baseline(data.train, data.test, cfg.supervision.n_full_baseline, cfg.trainer, seed);
        const bool same = pipeline.model.student == baseline.student && pipeline.model.teacher == baseline.teacher &&
                          same_history(pipeline.model.history, baseline.history) &&
                          same_bits(pipeline.reports.at(0).accuracy, evaluate(baseline, data.test));
        if (!same) {
            v.pass = false;
            v.detail = "seed " + std::to_string(seed) + ": T=0 pipeline differs from the baseline trainer";
            return v;
        }
        ++checked;
    }
    v.detail = std::to_string(checked) + " seeds: weights, epoch history and accuracy bit-identical";
    return v;
}

}  // namespace

int main() {
    std::vector<RunSummary> comparison_rows;
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"bit accounting", bit_accounting},
        {"gradient oracle", gradient_oracle},
        {"NLS invariants", nls_invariants},
        {"protocol invariants", protocol_invariants},
        {"NLS gain (directional)", [&] { return nls_gain(comparison_rows); }},
        {"stage ablation (directional)", [&] { return stage_ablation(comparison_rows); }},
        {"determinism", determinism},
        {"degenerate plan equivalence", degenerate_plan},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += !v.pass;
        std::cout << "criterion " << i + 1 << " " << criteria[i].first << ": " << (v.pass ? "PASS" : "FAIL") << " ("
                  << v.detail << "; " << std::fixed << std::setprecision(1) << secs << "s)" << std::endl;
        std::cout.unsetf(std::ios::fixed);
    }
    return failures == 0 ? 0 : 1;
}
