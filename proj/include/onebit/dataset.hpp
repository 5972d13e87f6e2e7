#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "onebit/errors.hpp"
#include "onebit/numerics.hpp"
#include "onebit/rng.hpp"

namespace onebit {

using SampleId = std::size_t;

/// Feature vectors with ids 0..N-1 and their hidden ground-truth classes.
class Dataset {
public:
    Dataset() = default;

    Dataset(std::size_t dim, int classes, std::vector<double> features, std::vector<int> truth)
        : dim_(dim), classes_(classes), features_(std::move(features)), truth_(std::move(truth)) {
        if (classes_ < 2) throw DimensionError("a dataset needs at least two classes");
        if (dim_ == 0) throw DimensionError("feature dimension must be positive");
        if (features_.size() != dim_ * truth_.size()) throw DimensionError("feature matrix does not match sample count");
        for (int y : truth_) {
            if (y < 0 || y >= classes_) throw IndexError("class label out of range");
        }
    }

    std::size_t size() const noexcept { return truth_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    int class_count() const noexcept { return classes_; }

    std::span<const double> features(SampleId id) const {
        if (id >= size()) throw IndexError("sample id " + std::to_string(id) + " out of range");
        return {features_.data() + id * dim_, dim_};
    }

    const std::vector<double>& feature_data() const noexcept { return features_; }
    std::vector<double>& mutable_feature_data() noexcept { return features_; }

    /// Ground truth. Reserved for the oracle and for final evaluation.
    const std::vector<int>& hidden_truth() const noexcept { return truth_; }

    bool operator==(const Dataset&) const = default;

private:
    std::size_t dim_ = 0;
    int classes_ = 0;
    std::vector<double> features_;
    std::vector<int> truth_;
};

struct BlobSpec {
    int classes = 10;
    std::size_t train_per_class = 500;
    std::size_t test_per_class = 100;
    std::size_t dim = 20;
    /// Minimum pairwise distance between class centers; centers lie on a sphere of this radius.
    double class_separation = 4.0;
    double noise_scale = 1.0;
    std::size_t attempts_per_center = 1000;
};

struct BlobSet {
    Dataset train;
    Dataset test;
    Matrix centers;  // classes x dim
};

namespace detail {

inline Dataset sample_blobs(const Matrix& centers, std::size_t per_class, double noise, std::uint64_t seed) {
    const auto classes = static_cast<int>(centers.rows);
    const std::size_t dim = centers.cols;
    Rng rng(seed);
    std::vector<double> feats;
    std::vector<int> truth;
    feats.reserve(per_class * centers.rows * dim);
    truth.reserve(per_class * centers.rows);
    // interleaved: sample n has class n % C
    for (std::size_t i = 0; i < per_class; ++i) {
        for (int c = 0; c < classes; ++c) {
            const auto center = centers.row(static_cast<std::size_t>(c));
            for (std::size_t d = 0; d < dim; ++d) feats.push_back(center[d] + noise * rng.normal());
            truth.push_back(c);
        }
    }
    return Dataset(dim, classes, std::move(feats), std::move(truth));
}

}  // namespace detail

/// Gaussian blobs around class centers drawn on a sphere. The test split uses a disjoint seed stream.
inline BlobSet generate_blobs(const BlobSpec& spec, std::uint64_t seed) {
    if (spec.classes < 2) throw GenerationError("need at least 2 classes");
    if (spec.train_per_class < 1) throw GenerationError("need at least 1 sample per class");
    if (spec.dim < 2) throw GenerationError("need at least 2 feature dimensions");
    if (!(spec.noise_scale >= 0.0) || !(spec.class_separation >= 0.0)) {
        throw GenerationError("noise scale and class separation must be nonnegative");
    }

    const auto classes = static_cast<std::size_t>(spec.classes);
    Matrix centers(classes, spec.dim);
    Rng rng(derive_seed(seed, "centers"));
    const double radius = spec.class_separation;
    for (std::size_t c = 0; c < classes; ++c) {
        bool placed = false;
        for (std::size_t attempt = 0; attempt < spec.attempts_per_center && !placed; ++attempt) {
            Vector v(spec.dim);
            double norm = 0.0;
            for (double& x : v) {
                x = rng.normal();
                norm += x * x;
            }
            norm = std::sqrt(norm);
            if (norm == 0.0) continue;
            for (double& x : v) x *= radius / norm;
            placed = true;
            for (std::size_t o = 0; o < c && placed; ++o) {
                double d2 = 0.0;
                for (std::size_t d = 0; d < spec.dim; ++d) {
                    const double diff = v[d] - centers(o, d);
                    d2 += diff * diff;
                }
                placed = std::sqrt(d2) >= spec.class_separation;
            }
            if (placed) std::copy(v.begin(), v.end(), centers.data.begin() + static_cast<std::ptrdiff_t>(c * spec.dim));
        }
        if (!placed) {
            throw GenerationError("could not place class center " + std::to_string(c) + " at separation " +
                                  std::to_string(spec.class_separation) + " in " + std::to_string(spec.dim) +
                                  " dimensions");
        }
    }

    BlobSet out;
    out.train = detail::sample_blobs(centers, spec.train_per_class, spec.noise_scale, derive_seed(seed, "train"));
    if (spec.test_per_class > 0) {
        out.test = detail::sample_blobs(centers, spec.test_per_class, spec.noise_scale, derive_seed(seed, "test"));
    }
    out.centers = std::move(centers);
    return out;
}

struct FeatureStats {
    Vector mean;
    Vector stddev;
};

/// Standardizes both splits with per-dimension statistics of the training split.
inline FeatureStats standardize_features(Dataset& train, Dataset& test) {
    const std::size_t dim = train.dim();
    const std::size_t n = train.size();
    if (n == 0) throw DimensionError("cannot standardize an empty training set");
    if (test.size() > 0 && test.dim() != dim) throw DimensionError("train/test dimension mismatch");
    FeatureStats st{Vector(dim, 0.0), Vector(dim, 0.0)};
    const auto& f = train.feature_data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < dim; ++d) st.mean[d] += f[i * dim + d];
    }
    for (double& m : st.mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < dim; ++d) {
            const double diff = f[i * dim + d] - st.mean[d];
            st.stddev[d] += diff * diff;
        }
    }
    for (double& s : st.stddev) {
        s = std::sqrt(s / static_cast<double>(n));
        if (s == 0.0) s = 1.0;
    }
    auto apply = [&](Dataset& ds) {
        auto& data = ds.mutable_feature_data();
        for (std::size_t i = 0; i < ds.size(); ++i) {
            for (std::size_t d = 0; d < dim; ++d) data[i * dim + d] = (data[i * dim + d] - st.mean[d]) / st.stddev[d];
        }
    };
    apply(train);
    apply(test);
    return st;
}

// ---------------------------------------------------------------------------
// Label state and the S / O+ / O- / U partition

enum class LabelKind { Hidden, Full, Negative };

struct LabelState {
    LabelKind kind = LabelKind::Hidden;
    int cls = -1;

    static LabelState hidden() { return {}; }
    static LabelState full(int c) { return {LabelKind::Full, c}; }
    static LabelState negative(int c) { return {LabelKind::Negative, c}; }

    bool operator==(const LabelState&) const = default;
};

enum class Membership : std::size_t {
    Supervised = 0,  // S: full label from the initial split
    GuessedRight,    // O+: full label obtained by a correct guess
    GuessedWrong,    // O-: negative label from a wrong guess
    Unlabeled,       // U: hidden, still queryable
};

enum class Answer { No, Yes };

class Partition {
public:
    Partition() = default;

    explicit Partition(std::size_t n) : states_(n), sets_(n, Membership::Unlabeled) { counts_[index(Membership::Unlabeled)] = n; }

    std::size_t size() const noexcept { return states_.size(); }

    Membership membership(SampleId id) const { return sets_.at(id); }
    const LabelState& label(SampleId id) const { return states_.at(id); }

    std::size_t count(Membership m) const noexcept { return counts_[index(m)]; }

    /// Ids in the given set, ascending.
    std::vector<SampleId> ids(Membership m) const {
        std::vector<SampleId> out;
        out.reserve(count(m));
        for (SampleId i = 0; i < sets_.size(); ++i) {
            if (sets_[i] == m) out.push_back(i);
        }
        return out;
    }

    /// S and O+ together, ascending.
    std::vector<SampleId> full_label_ids() const {
        std::vector<SampleId> out;
        for (SampleId i = 0; i < sets_.size(); ++i) {
            if (sets_[i] == Membership::Supervised || sets_[i] == Membership::GuessedRight) out.push_back(i);
        }
        return out;
    }

    /// O- and U together, ascending.
    std::vector<SampleId> no_full_label_ids() const {
        std::vector<SampleId> out;
        for (SampleId i = 0; i < sets_.size(); ++i) {
            if (sets_[i] == Membership::GuessedWrong || sets_[i] == Membership::Unlabeled) out.push_back(i);
        }
        return out;
    }

    /// Moves an unlabeled id into S with its true class. Only used while building the initial split.
    void assign_supervised(SampleId id, int cls) {
        require_unlabeled(id);
        move(id, Membership::Supervised, LabelState::full(cls));
    }

    /// yes -> O+ with Full(guess); no -> O- with Negative(guess).
    void apply_guess_result(SampleId id, int guessed_class, Answer answer) {
        require_unlabeled(id);
        if (answer == Answer::Yes) {
            move(id, Membership::GuessedRight, LabelState::full(guessed_class));
        } else {
            move(id, Membership::GuessedWrong, LabelState::negative(guessed_class));
        }
    }

    bool operator==(const Partition&) const = default;

private:
    static constexpr std::size_t index(Membership m) noexcept { return static_cast<std::size_t>(m); }

    void require_unlabeled(SampleId id) const {
        if (id >= size()) throw IndexError("sample id " + std::to_string(id) + " out of range");
        if (sets_[id] != Membership::Unlabeled) {
            throw ProtocolError("sample " + std::to_string(id) + " is not in the unlabeled pool");
        }
    }

    void move(SampleId id, Membership to, LabelState state) {
        --counts_[index(sets_[id])];
        ++counts_[index(to)];
        sets_[id] = to;
        states_[id] = state;
    }

    std::vector<LabelState> states_;
    std::vector<Membership> sets_;
    std::array<std::size_t, 4> counts_{};
};

/// Throws ProtocolError when the partition disagrees with its own bookkeeping or with the truth.
inline void check_partition(const Partition& p, const Dataset& ds) {
    if (p.size() != ds.size()) throw ProtocolError("partition size differs from dataset size");
    std::array<std::size_t, 4> seen{};
    const auto& truth = ds.hidden_truth();
    for (SampleId i = 0; i < p.size(); ++i) {
        const auto m = p.membership(i);
        const auto& st = p.label(i);
        ++seen[static_cast<std::size_t>(m)];
        const bool ok = [&] {
            switch (m) {
                case Membership::Supervised:
                case Membership::GuessedRight: return st.kind == LabelKind::Full && st.cls == truth[i];
                case Membership::GuessedWrong: return st.kind == LabelKind::Negative && st.cls != truth[i];
                case Membership::Unlabeled: return st.kind == LabelKind::Hidden;
            }
            return false;
        }();
        if (!ok) throw ProtocolError("label state of sample " + std::to_string(i) + " contradicts its set");
    }
    for (std::size_t k = 0; k < 4; ++k) {
        if (seen[k] != p.count(static_cast<Membership>(k))) throw ProtocolError("set counts are stale");
    }
}

/// Class-balanced draw of n_full ids into S: floor(n_full / C) per class, remainder spread
/// over distinct random classes. Each sample's rank comes from a seeded hash of its id, so the
/// result does not depend on iteration order.
inline Partition initial_split(const Dataset& ds, std::size_t n_full, std::uint64_t seed) {
    const std::size_t n = ds.size();
    if (n_full > n) {
        throw ProtocolError("n_full " + std::to_string(n_full) + " exceeds dataset size " + std::to_string(n));
    }
    Partition p(n);
    const auto classes = static_cast<std::size_t>(ds.class_count());
    const auto& truth = ds.hidden_truth();

    std::vector<std::vector<std::pair<std::uint64_t, SampleId>>> by_class(classes);
    for (SampleId i = 0; i < n; ++i) {
        by_class[static_cast<std::size_t>(truth[i])].emplace_back(derive_seed(seed, "split-rank", {i}), i);
    }
    for (auto& v : by_class) std::sort(v.begin(), v.end());

    std::vector<std::size_t> taken(classes, 0);
    std::size_t assigned = 0;
    const std::size_t per_class = n_full / classes;
    for (std::size_t c = 0; c < classes; ++c) {
        const std::size_t k = std::min(per_class, by_class[c].size());
        for (std::size_t j = 0; j < k; ++j) p.assign_supervised(by_class[c][j].second, static_cast<int>(c));
        taken[c] = k;
        assigned += k;
    }
    // remainder: one extra from each of several random classes, cycling while samples remain
    Rng rng(derive_seed(seed, "split-remainder"));
    while (assigned < n_full) {
        std::vector<std::size_t> order(classes);
        for (std::size_t c = 0; c < classes; ++c) order[c] = c;
        rng.shuffle(order);
        for (std::size_t c : order) {
            if (assigned == n_full) break;
            if (taken[c] < by_class[c].size()) {
                p.assign_supervised(by_class[c][taken[c]].second, static_cast<int>(c));
                ++taken[c];
                ++assigned;
            }
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// CSV archive: header "id,y,x_0,...,x_{d-1}", one row per sample.

inline void write_dataset_csv(std::ostream& os, const Dataset& ds) {
    os << "id,y";
    for (std::size_t d = 0; d < ds.dim(); ++d) os << ",x_" << d;
    os << '\n';
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (SampleId i = 0; i < ds.size(); ++i) {
        os << i << ',' << ds.hidden_truth()[i];
        for (double v : ds.features(i)) os << ',' << v;
        os << '\n';
    }
}

inline void write_dataset_csv(const std::string& path, const Dataset& ds) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open " + path + " for writing");
    write_dataset_csv(os, ds);
}

/// Reads a dataset archive. The class count is max(y) + 1 unless given.
inline Dataset read_dataset_csv(std::istream& is, int classes = 0) {
    std::string line;
    if (!std::getline(is, line)) throw Error("dataset file is empty");
    std::size_t columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    if (columns < 3 || line.rfind("id,y,", 0) != 0) throw Error("dataset header must start with id,y,x_0");
    const std::size_t dim = columns - 2;
    std::vector<double> feats;
    std::vector<int> truth;
    int max_label = -1;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != columns) throw Error("dataset row " + std::to_string(truth.size()) + " has wrong width");
        if (std::stoull(cells[0]) != truth.size()) throw Error("dataset ids must be 0..N-1 in order");
        const int y = std::stoi(cells[1]);
        max_label = std::max(max_label, y);
        truth.push_back(y);
        for (std::size_t d = 0; d < dim; ++d) feats.push_back(std::stod(cells[2 + d]));
    }
    return Dataset(dim, classes > 0 ? classes : max_label + 1, std::move(feats), std::move(truth));
}

inline Dataset read_dataset_csv(const std::string& path, int classes = 0) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path);
    return read_dataset_csv(is, classes);
}

}  // namespace onebit
