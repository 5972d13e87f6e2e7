#pragma once
// Simulated yes/no annotator, supervision-bit accounting and the once-only query ledger.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "onebit/dataset.hpp"
#include "onebit/errors.hpp"
#include "onebit/rng.hpp"

namespace onebit {

/// Slack when comparing a charge against the remaining budget; log2(C) is irrational for most C.
inline constexpr double kBitSlack = 1e-9;

inline double bits_for_full_label(int classes) {
    if (classes < 2) throw Error("class count must be at least 2");
    return std::log2(static_cast<double>(classes));
}

/// n_full * log2(C) + n_queries
inline double plan_budget(std::size_t n_full, std::size_t n_queries, int classes) {
    return static_cast<double>(n_full) * bits_for_full_label(classes) + static_cast<double>(n_queries);
}

/// Largest query count affordable after trading (baseline - onebit) full labels for queries.
inline std::size_t equivalent_schedules(std::size_t n_full_baseline, int classes, std::size_t n_full_onebit) {
    if (n_full_onebit > n_full_baseline) throw Error("one-bit arm cannot hold more full labels than the baseline");
    const double q = static_cast<double>(n_full_baseline - n_full_onebit) * bits_for_full_label(classes);
    // nudge up so exact products like 2 * log2(4) are not floored to one less
    return static_cast<std::size_t>(std::floor(q + kBitSlack));
}

class BitBudget {
public:
    explicit BitBudget(double total_bits = 0.0) : total_(total_bits) {
        if (!(total_bits >= 0.0)) throw Error("total bits must be nonnegative");
    }

    double total() const noexcept { return total_; }
    double spent() const noexcept { return spent_; }
    double remaining() const noexcept { return total_ - spent_; }
    /// Slack scales with the total so long runs of log2(C) charges do not trip on rounding.
    bool can_afford(double bits) const noexcept {
        return spent_ + bits <= total_ + kBitSlack * std::max(1.0, total_);
    }

    void charge(double bits) {
        if (!can_afford(bits)) {
            throw BudgetExhausted("charge of " + std::to_string(bits) + " bits exceeds remaining " +
                                  std::to_string(remaining()));
        }
        spent_ += bits;
    }

private:
    double total_ = 0.0;
    double spent_ = 0.0;
};

inline void charge_full_label(BitBudget& budget, int classes) { budget.charge(bits_for_full_label(classes)); }

struct QueryRecord {
    SampleId id = 0;
    int stage = 0;
    int guess = 0;
    Answer answer = Answer::No;

    bool operator==(const QueryRecord&) const = default;
};

/// Append-only; at most one record per sample.
class QueryLedger {
public:
    QueryLedger() = default;
    explicit QueryLedger(std::size_t sample_count) : queried_(sample_count, false) {}

    bool contains(SampleId id) const { return id < queried_.size() && queried_[id]; }
    std::size_t size() const noexcept { return records_.size(); }
    const std::vector<QueryRecord>& records() const noexcept { return records_; }

    void append(const QueryRecord& r) {
        if (contains(r.id)) throw OnceOnlyViolation("sample " + std::to_string(r.id) + " was already queried");
        if (r.id >= queried_.size()) queried_.resize(r.id + 1, false);
        queried_[r.id] = true;
        records_.push_back(r);
    }

    bool operator==(const QueryLedger&) const = default;

private:
    std::vector<QueryRecord> records_;
    std::vector<bool> queried_;
};

/// Annotator noise. Not part of the baseline protocol: with error_rate > 0 each answer is
/// flipped independently, decided by a hash of (seed, id) so replays stay reproducible.
struct OracleOptions {
    double error_rate = 0.0;
    std::uint64_t error_seed = 0;
};

namespace detail {

inline Answer truthful_answer(const Dataset& ds, SampleId id, int guess, const OracleOptions& opt) {
    const bool correct = ds.hidden_truth().at(id) == guess;
    bool yes = correct;
    if (opt.error_rate > 0.0) {
        const double u = static_cast<double>(derive_seed(opt.error_seed, "oracle-flip", {id}) >> 11) * 0x1.0p-53;
        if (u < opt.error_rate) yes = !yes;
    }
    return yes ? Answer::Yes : Answer::No;
}

}  // namespace detail

/// Answers "does sample `id` belong to `guessed_class`?", records it and charges one bit.
/// All checks run before any mutation, so a thrown error leaves ledger and budget untouched.
inline Answer answer_query(const Dataset& ds, const Partition& partition, QueryLedger& ledger, BitBudget& budget,
                           SampleId id, int guessed_class, int stage, const OracleOptions& options = {}) {
    if (id >= ds.size()) throw IndexError("sample id " + std::to_string(id) + " out of range");
    if (guessed_class < 0 || guessed_class >= ds.class_count()) throw IndexError("guessed class out of range");
    if (ledger.contains(id)) throw OnceOnlyViolation("sample " + std::to_string(id) + " was already queried");
    if (partition.membership(id) == Membership::Supervised) {
        throw ProtocolError("sample " + std::to_string(id) + " already has a full label");
    }
    if (!budget.can_afford(1.0)) throw BudgetExhausted("no bit left for a query");

    const Answer a = detail::truthful_answer(ds, id, guessed_class, options);
    ledger.append({id, stage, guessed_class, a});
    budget.charge(1.0);
    return a;
}

/// True when re-asking every recorded question reproduces the recorded answer.
inline bool replay_ledger(const Dataset& ds, const QueryLedger& ledger, const OracleOptions& options = {}) {
    for (const auto& r : ledger.records()) {
        if (detail::truthful_answer(ds, r.id, r.guess, options) != r.answer) return false;
    }
    return true;
}

/// One JSON object per line: {"id":..,"stage":..,"guess":..,"answer":"yes"|"no"}
inline void write_ledger_jsonl(std::ostream& os, const QueryLedger& ledger) {
    for (const auto& r : ledger.records()) {
        os << "{\"id\":" << r.id << ",\"stage\":" << r.stage << ",\"guess\":" << r.guess << ",\"answer\":\""
           << (r.answer == Answer::Yes ? "yes" : "no") << "\"}\n";
    }
}

inline void write_ledger_jsonl(const std::string& path, const QueryLedger& ledger) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open " + path + " for writing");
    write_ledger_jsonl(os, ledger);
}

}  // namespace onebit
