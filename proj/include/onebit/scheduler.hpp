#pragma once
// Multi-stage one-bit schedule: an initial semi-supervised stage on the full-label split,
// then T stages of (select query set -> guess with the current teacher -> oracle answers
// -> partition update -> retrain).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "onebit/dataset.hpp"
#include "onebit/errors.hpp"
#include "onebit/oracle.hpp"
#include "onebit/rng.hpp"
#include "onebit/trainer.hpp"

namespace onebit {

enum class SelectionStrategy { UniformRandom, Easiest, Hardest };

enum class QuotaSplit { Balanced, FrontLoaded, BackLoaded };

/// Which samples may be guessed. Only the unlabeled pool is supported: a wrongly guessed
/// sample keeps its negative label and is never asked about again.
enum class QueryPool { Unlabeled, UnlabeledAndNegative };

struct StagePlan {
    std::vector<std::size_t> quotas;  // one entry per one-bit stage; empty = plain semi-supervised baseline
    SelectionStrategy strategy = SelectionStrategy::UniformRandom;
    QueryPool pool = QueryPool::Unlabeled;
    bool cold_start = false;  // retrain each stage from the initial weights instead of continuing
    /// Optional epoch counts per training stage; index 0 is the initial stage.
    std::vector<std::size_t> stage_epochs;

    std::size_t stage_count() const noexcept { return quotas.size(); }
    std::size_t total_quota() const noexcept { return std::accumulate(quotas.begin(), quotas.end(), std::size_t{0}); }
};

struct StageReport {
    int stage = 0;
    std::size_t queried = 0;
    std::size_t correct = 0;
    std::size_t supervised = 0;
    std::size_t guessed_right = 0;
    std::size_t guessed_wrong = 0;
    std::size_t unlabeled = 0;
    double accuracy = 0.0;
    double bits_spent = 0.0;

    bool operator==(const StageReport&) const = default;
};

/// Balanced: near-equal parts, remainder to the earliest stages. Front/back loaded: 75% of
/// the quota in the first/last stage, the rest spread evenly over the others.
inline std::vector<std::size_t> split_quota(long long total, std::size_t stages, QuotaSplit mode = QuotaSplit::Balanced) {
    if (total < 0) throw ConfigError("plan.queries", "quota must be nonnegative");
    if (stages == 0) throw ConfigError("plan.stages", "cannot split a quota over zero stages");
    const auto t = static_cast<std::size_t>(total);
    auto balanced = [](std::size_t amount, std::size_t parts) {
        std::vector<std::size_t> q(parts, amount / parts);
        for (std::size_t i = 0; i < amount % parts; ++i) ++q[i];
        return q;
    };
    if (mode == QuotaSplit::Balanced || stages == 1) return balanced(t, stages);
    const std::size_t heavy = t * 3 / 4;
    auto rest = balanced(t - heavy, stages - 1);
    if (mode == QuotaSplit::FrontLoaded) {
        rest.insert(rest.begin(), heavy);
    } else {
        rest.push_back(heavy);
    }
    return rest;
}

/// Picks `quota` ids from `pool` given one confidence score per pool entry.
/// Easiest: highest score first; Hardest: lowest first; ties go to the smaller id.
inline std::vector<SampleId> rank_by_confidence(std::span<const SampleId> pool, std::span<const double> scores,
                                                std::size_t quota, SelectionStrategy strategy) {
    if (pool.size() != scores.size()) throw DimensionError("one score per pool entry required");
    if (quota > pool.size()) throw InsufficientPool("quota exceeds the query pool");
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const bool easiest = strategy == SelectionStrategy::Easiest;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return easiest ? scores[a] > scores[b] : scores[a] < scores[b];
        return pool[a] < pool[b];
    });
    std::vector<SampleId> out;
    out.reserve(quota);
    for (std::size_t i = 0; i < quota; ++i) out.push_back(pool[order[i]]);
    return out;
}

/// Query candidates drawn from U. Uniform selection ranks each id by a seeded hash of the id,
/// so the draw does not depend on how the pool is ordered.
inline std::vector<SampleId> select_query_set(const TrainedModel& model, const Dataset& train, const Partition& partition,
                                              std::size_t quota, SelectionStrategy strategy, std::uint64_t seed) {
    const auto pool = partition.ids(Membership::Unlabeled);
    if (quota > pool.size()) {
        throw InsufficientPool("quota " + std::to_string(quota) + " exceeds the " + std::to_string(pool.size()) +
                               " unlabeled samples");
    }
    if (strategy == SelectionStrategy::UniformRandom) {
        std::vector<std::pair<std::uint64_t, SampleId>> keyed;
        keyed.reserve(pool.size());
        for (SampleId id : pool) keyed.emplace_back(derive_seed(seed, "select", {id}), id);
        std::sort(keyed.begin(), keyed.end());
        std::vector<SampleId> out;
        out.reserve(quota);
        for (std::size_t i = 0; i < quota; ++i) out.push_back(keyed[i].second);
        return out;
    }
    std::vector<double> scores;
    scores.reserve(pool.size());
    for (SampleId id : pool) scores.push_back(predict(model, train.features(id), true).max_prob);
    return rank_by_confidence(pool, scores, quota, strategy);
}

/// Everything a pipeline mutates between stages.
struct PipelineState {
    Partition partition;
    QueryLedger ledger;
    BitBudget budget;
    TrainedModel model;
};

struct StageContext {
    const Dataset& train;
    const Dataset& test;
    TrainerConfig trainer;           // seeded for this stage
    std::uint64_t selection_seed = 0;
    OracleOptions oracle;
    std::optional<TrainedModel> cold_start;  // retrain from these weights when set
    TrainHooks hooks;
};

inline StageReport make_report(int stage, const PipelineState& s, double accuracy) {
    StageReport r;
    r.stage = stage;
    r.supervised = s.partition.count(Membership::Supervised);
    r.guessed_right = s.partition.count(Membership::GuessedRight);
    r.guessed_wrong = s.partition.count(Membership::GuessedWrong);
    r.unlabeled = s.partition.count(Membership::Unlabeled);
    r.accuracy = accuracy;
    r.bits_spent = s.budget.spent();
    return r;
}

/// One one-bit stage. The guesses all come from the model as it was before the stage and are
/// submitted in ascending id order.
inline StageReport run_stage(PipelineState& state, const StageContext& ctx, int stage, std::size_t quota,
                             SelectionStrategy strategy) {
    if (!state.budget.can_afford(static_cast<double>(quota))) {
        throw BudgetExhausted("stage " + std::to_string(stage) + " needs " + std::to_string(quota) + " bits, " +
                              std::to_string(state.budget.remaining()) + " remain");
    }
    auto ids = select_query_set(state.model, ctx.train, state.partition, quota, strategy, ctx.selection_seed);
    std::sort(ids.begin(), ids.end());

    std::vector<int> guesses;
    guesses.reserve(ids.size());
    for (SampleId id : ids) guesses.push_back(predict(state.model, ctx.train.features(id), true).cls);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const Answer a = answer_query(ctx.train, state.partition, state.ledger, state.budget, ids[i], guesses[i], stage,
                                      ctx.oracle);
        state.partition.apply_guess_result(ids[i], guesses[i], a);
        if (a == Answer::Yes) ++correct;
    }

    TrainedModel start = ctx.cold_start ? *ctx.cold_start : std::move(state.model);
    if (ctx.cold_start) start.history = std::move(state.model.history);
    state.model = train_stage(std::move(start), ctx.train, state.partition, ctx.trainer, &ctx.test, ctx.hooks);

    StageReport r = make_report(stage, state, evaluate(state.model, ctx.test));
    r.queried = ids.size();
    r.correct = correct;
    return r;
}

struct PipelineResult {
    std::vector<StageReport> reports;  // reports[0] is the initial semi-supervised stage
    TrainedModel model;
    Partition partition;
    QueryLedger ledger;
    BitBudget budget;
};

namespace detail {

inline TrainerConfig stage_config(const TrainerConfig& base, const StagePlan& plan, std::size_t stage,
                                  std::uint64_t root_seed) {
    TrainerConfig cfg = base;
    cfg.seed = derive_seed(root_seed, "training", {stage});
    if (stage < plan.stage_epochs.size()) cfg.epochs = plan.stage_epochs[stage];
    return cfg;
}

inline TrainedModel initial_model(const Dataset& train, const TrainerConfig& cfg, std::uint64_t root_seed) {
    return init_model(train.dim(), train.class_count(), cfg.hidden_layers, derive_seed(root_seed, "init"));
}

}  // namespace detail

/// Plain Mean-Teacher on a class-balanced split of n_full labels, seeded exactly like the
/// initial stage of run_pipeline.
inline TrainedModel train_mean_teacher_baseline(const Dataset& train, const Dataset& test, std::size_t n_full,
                                                const TrainerConfig& cfg, std::uint64_t root_seed,
                                                std::size_t epochs_override = 0) {
    const Partition partition = initial_split(train, n_full, derive_seed(root_seed, "split"));
    TrainerConfig stage_cfg = cfg;
    stage_cfg.seed = derive_seed(root_seed, "training", {0});
    if (epochs_override > 0) stage_cfg.epochs = epochs_override;
    return train_stage(detail::initial_model(train, cfg, root_seed), train, partition, stage_cfg, &test);
}

/// Rejects plans that cannot run before any training happens.
inline void validate_plan(const Dataset& train, std::size_t n_full, const StagePlan& plan) {
    if (plan.pool != QueryPool::Unlabeled) {
        throw ConfigError("plan.pool", "re-querying negatively labeled samples is not supported");
    }
    if (n_full > train.size()) throw ConfigError("supervision.n_full", "exceeds the training set size");
    if (plan.total_quota() > train.size() - n_full) {
        throw ConfigError("plan.queries", "total quota " + std::to_string(plan.total_quota()) + " exceeds the " +
                                              std::to_string(train.size() - n_full) + " samples without full labels");
    }
    if (!plan.stage_epochs.empty() && plan.stage_epochs.size() != plan.stage_count() + 1) {
        throw ConfigError("plan.stage_epochs", "needs one entry per training stage including the initial one");
    }
}

inline PipelineResult run_pipeline(const Dataset& train, const Dataset& test, std::size_t n_full, const StagePlan& plan,
                                   const TrainerConfig& cfg, std::uint64_t root_seed, const OracleOptions& oracle = {},
                                   const TrainHooks& hooks = {}) {
    cfg.validate();
    validate_plan(train, n_full, plan);
    const int classes = train.class_count();

    PipelineState state{initial_split(train, n_full, derive_seed(root_seed, "split")), QueryLedger(train.size()),
                        BitBudget(plan_budget(n_full, plan.total_quota(), classes)), {}};
    for (std::size_t i = 0; i < n_full; ++i) charge_full_label(state.budget, classes);

    const TrainedModel fresh = detail::initial_model(train, cfg, root_seed);
    state.model = train_stage(fresh, train, state.partition, detail::stage_config(cfg, plan, 0, root_seed), &test, hooks);

    PipelineResult result;
    result.reports.push_back(make_report(0, state, evaluate(state.model, test)));

    for (std::size_t t = 1; t <= plan.stage_count(); ++t) {
        StageContext ctx{train, test, detail::stage_config(cfg, plan, t, root_seed),
                         derive_seed(root_seed, "selection", {t}), oracle, std::nullopt, hooks};
        if (plan.cold_start) ctx.cold_start = fresh;
        result.reports.push_back(run_stage(state, ctx, static_cast<int>(t), plan.quotas[t - 1], plan.strategy));
    }

    if (std::abs(state.budget.spent() - state.budget.total()) > kBitSlack * std::max(1.0, state.budget.total())) {
        throw ProtocolError("pipeline finished with unspent or overspent bits");
    }
    result.model = std::move(state.model);
    result.partition = std::move(state.partition);
    result.ledger = std::move(state.ledger);
    result.budget = state.budget;
    return result;
}

}  // namespace onebit
