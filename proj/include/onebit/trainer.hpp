#pragma once
// Mean-Teacher training with negative label suppression (NLS).
//
// Each batch mixes full-label samples (S and O+) with samples lacking a full label
// (O- and U). Every sample gets a consistency term between the noisy teacher and student
// softmax outputs; full-label samples add cross-entropy. For an O- sample the teacher
// logit of its negative class is suppressed before the softmax, so the target assigns
// that class exactly zero probability.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <istream>
#include <ostream>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "onebit/dataset.hpp"
#include "onebit/errors.hpp"
#include "onebit/numerics.hpp"
#include "onebit/rng.hpp"

namespace onebit {

struct TrainerConfig {
    std::vector<std::size_t> hidden_layers{64};
    double consistency_weight = 10.0;  // lambda after ramp-up
    double rampup_fraction = 0.2;      // share of the stage's epochs over which lambda ramps from 0
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    double labeled_fraction = 0.25;  // minimum share of full-label samples per batch when available
    double learning_rate = 0.05;     // cosine-decayed to 0 over the stage
    double momentum = 0.9;
    double ema_decay = 0.99;
    double input_noise = kInputNoiseSigma;
    bool negative_suppression = true;
    bool mask_student_negative = false;
    bool allow_label_free = false;
    std::uint64_t seed = 0;

    std::size_t rampup_epochs() const {
        return static_cast<std::size_t>(std::llround(rampup_fraction * static_cast<double>(epochs)));
    }

    void validate() const {
        if (!(consistency_weight >= 0.0)) throw ConfigError("trainer.consistency_weight", "must be >= 0");
        if (!(ema_decay > 0.0 && ema_decay <= 1.0)) throw ConfigError("trainer.ema_decay", "must lie in (0, 1]");
        if (batch_size < 2) throw ConfigError("trainer.batch_size", "must be >= 2");
        if (!(rampup_fraction >= 0.0 && rampup_fraction <= 1.0)) {
            throw ConfigError("trainer.rampup_fraction", "must lie in [0, 1]");
        }
        if (!(labeled_fraction >= 0.0 && labeled_fraction <= 1.0)) {
            throw ConfigError("trainer.labeled_fraction", "must lie in [0, 1]");
        }
        if (!(learning_rate >= 0.0)) throw ConfigError("trainer.learning_rate", "must be >= 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("trainer.momentum", "must lie in [0, 1)");
        if (!(input_noise >= 0.0)) throw ConfigError("trainer.input_noise", "must be >= 0");
        for (std::size_t h : hidden_layers) {
            if (h == 0) throw ConfigError("trainer.hidden", "layer widths must be positive");
        }
    }
};

struct EpochStats {
    std::size_t epoch = 0;
    double ce = 0.0;
    double consistency = 0.0;
    double total = 0.0;
    double eval_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainedModel {
    MlpParams student;
    MlpParams teacher;
    std::vector<EpochStats> history;
};

/// Fresh student with Glorot init; the teacher starts as an exact copy.
inline TrainedModel init_model(std::size_t input_dim, int classes, const std::vector<std::size_t>& hidden,
                               std::uint64_t seed) {
    std::vector<std::size_t> widths{input_dim};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(static_cast<std::size_t>(classes));
    TrainedModel m;
    m.student = init_mlp(widths, seed);
    m.teacher = m.student;
    return m;
}

/// Loss roles for a batch: S/O+ supervised, O- suppressed consistency (plain consistency
/// when NLS is off), U plain consistency.
inline std::vector<LossSpec> batch_loss_spec(const Partition& partition, std::span<const SampleId> ids,
                                             bool negative_suppression = true) {
    std::vector<LossSpec> out;
    out.reserve(ids.size());
    for (SampleId id : ids) {
        const auto& st = partition.label(id);
        switch (st.kind) {
            case LabelKind::Full: out.push_back({LossRole::Supervised, st.cls}); break;
            case LabelKind::Negative:
                out.push_back(negative_suppression ? LossSpec{LossRole::SuppressedConsistency, st.cls}
                                                   : LossSpec{LossRole::Consistency, -1});
                break;
            case LabelKind::Hidden: out.push_back({LossRole::Consistency, -1}); break;
        }
    }
    return out;
}

/// Teacher probabilities used as the consistency target for one sample.
inline Vector consistency_target(Vector teacher_logits, const LossSpec& spec) {
    if (spec.role == LossRole::SuppressedConsistency) teacher_logits = suppress_logit(std::move(teacher_logits), spec.class_index);
    return softmax(teacher_logits);
}

struct Prediction {
    int cls = 0;
    double max_prob = 0.0;
    Vector probs;
};

/// Noise-free prediction; ties go to the lower class index.
inline Prediction predict(const TrainedModel& model, std::span<const double> x, bool use_teacher = true) {
    Prediction p;
    p.probs = softmax(forward(use_teacher ? model.teacher : model.student, x));
    for (std::size_t k = 1; k < p.probs.size(); ++k) {
        if (p.probs[k] > p.probs[static_cast<std::size_t>(p.cls)]) p.cls = static_cast<int>(k);
    }
    p.max_prob = p.probs[static_cast<std::size_t>(p.cls)];
    return p;
}

inline std::vector<Prediction> predict_all(const TrainedModel& model, const Dataset& ds, bool use_teacher = true) {
    std::vector<Prediction> out;
    out.reserve(ds.size());
    for (SampleId i = 0; i < ds.size(); ++i) out.push_back(predict(model, ds.features(i), use_teacher));
    return out;
}

/// Top-1 accuracy of the teacher network.
inline double evaluate(const TrainedModel& model, const Dataset& test) {
    if (test.size() == 0) throw Error("cannot evaluate on an empty set");
    std::size_t hits = 0;
    for (SampleId i = 0; i < test.size(); ++i) {
        if (predict(model, test.features(i), true).cls == test.hidden_truth()[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(test.size());
}

/// Observation points for tests and diagnostics.
struct TrainHooks {
    std::function<void(std::span<const SampleId>, std::span<const BatchItem>)> on_batch;
    /// Called after every optimizer + EMA step.
    std::function<void(std::size_t step, const MlpParams& student, const MlpParams& teacher)> on_step;
};

namespace detail {

/// Endless reshuffled stream over a fixed id pool.
class IdStream {
public:
    IdStream(std::vector<SampleId> pool, std::uint64_t seed) : pool_(std::move(pool)), rng_(seed) {}

    bool empty() const noexcept { return pool_.empty(); }
    std::size_t size() const noexcept { return pool_.size(); }

    SampleId next() {
        if (pos_ == pool_.size() || pos_ == 0) {
            rng_.shuffle(pool_);
            pos_ = 0;
        }
        return pool_[pos_++];
    }

private:
    std::vector<SampleId> pool_;
    Rng rng_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// One stage of Mean-Teacher + NLS training, continuing from `model`.
inline TrainedModel train_stage(TrainedModel model, const Dataset& train, const Partition& partition,
                                const TrainerConfig& cfg, const Dataset* eval_set = nullptr,
                                const TrainHooks& hooks = {}) {
    cfg.validate();
    if (cfg.epochs == 0) return model;
    if (partition.size() != train.size()) throw DimensionError("partition does not match the training set");
    if (model.student.input_dim() != train.dim()) throw DimensionError("model input width does not match features");
    if (model.student.class_count() != static_cast<std::size_t>(train.class_count())) {
        throw DimensionError("model output width does not match class count");
    }

    auto labeled = partition.full_label_ids();
    auto unlabeled = partition.no_full_label_ids();
    if (labeled.empty() && !cfg.allow_label_free) {
        throw ProtocolError("training needs at least one full-label sample (or allow_label_free)");
    }

    const std::size_t n = train.size();
    const std::size_t bsz = std::min(cfg.batch_size, n);
    const std::size_t batches = (n + bsz - 1) / bsz;
    std::size_t n_lab = 0;
    if (unlabeled.empty()) {
        n_lab = std::min(labeled.size(), bsz);
    } else if (!labeled.empty()) {
        const auto by_fraction = static_cast<std::size_t>(std::ceil(cfg.labeled_fraction * static_cast<double>(bsz)));
        const std::size_t by_coverage = (labeled.size() + batches - 1) / batches;
        n_lab = std::min({labeled.size(), bsz, std::max(by_fraction, by_coverage)});
    }
    const std::size_t n_unl = unlabeled.empty() ? 0 : std::min(bsz - n_lab, unlabeled.size());

    detail::IdStream lab_stream(std::move(labeled), derive_seed(cfg.seed, "labeled-order"));
    detail::IdStream unl_stream(std::move(unlabeled), derive_seed(cfg.seed, "unlabeled-order"));

    const std::size_t total_steps = cfg.epochs * batches;
    const std::size_t ramp = cfg.rampup_epochs();
    const std::size_t epoch_offset = model.history.empty() ? 0 : model.history.back().epoch + 1;
    auto velocity = zeros_like<MomentumState>(model.student);

    std::vector<SampleId> ids;
    std::vector<BatchItem> items;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lambda =
            ramp == 0 ? cfg.consistency_weight
                      : cfg.consistency_weight * std::min(1.0, static_cast<double>(epoch) / static_cast<double>(ramp));
        EpochStats stats;
        stats.epoch = epoch_offset + epoch;

        for (std::size_t b = 0; b < batches; ++b, ++step) {
            ids.clear();
            for (std::size_t i = 0; i < n_lab; ++i) ids.push_back(lab_stream.next());
            for (std::size_t i = 0; i < n_unl; ++i) ids.push_back(unl_stream.next());
            const auto specs = batch_loss_spec(partition, ids, cfg.negative_suppression);

            items.clear();
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const auto x = train.features(ids[i]);
                Vector t_logits = forward(model.teacher, x, derive_seed(cfg.seed, "noise", {step, ids[i], 0}),
                                          cfg.input_noise);
                BatchItem item;
                item.x = x;
                item.spec = specs[i];
                item.teacher_probs = consistency_target(std::move(t_logits), specs[i]);
                item.noise_seed = derive_seed(cfg.seed, "noise", {step, ids[i], 1});
                item.mask_student_negative = cfg.mask_student_negative;
                items.push_back(std::move(item));
            }
            if (hooks.on_batch) hooks.on_batch(ids, items);

            auto result = backward(model.student, items, lambda, cfg.input_noise);
            if (!std::isfinite(result.loss.total)) {
                std::ostringstream msg;
                msg << "training diverged at epoch " << stats.epoch << " step " << step << ": ce=" << result.loss.ce
                    << " consistency=" << result.loss.consistency << " lambda=" << lambda;
                throw TrainingDiverged(msg.str());
            }
            const double lr = cfg.learning_rate * 0.5 *
                              (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                              static_cast<double>(total_steps)));
            sgd_step(model.student, result.gradients, lr, velocity, cfg.momentum);
            ema_update(model.teacher, model.student, cfg.ema_decay);
            if (hooks.on_step) hooks.on_step(step, model.student, model.teacher);

            stats.ce += result.loss.ce;
            stats.consistency += result.loss.consistency;
            stats.total += result.loss.total;
        }
        stats.ce /= static_cast<double>(batches);
        stats.consistency /= static_cast<double>(batches);
        stats.total /= static_cast<double>(batches);
        if (eval_set != nullptr && eval_set->size() > 0) stats.eval_accuracy = evaluate(model, *eval_set);
        model.history.push_back(stats);
    }
    return model;
}

/// history.csv: epoch,ce_loss,cons_loss,total,eval_acc
inline void write_history_csv(std::ostream& os, const std::vector<EpochStats>& history) {
    os << "epoch,ce_loss,cons_loss,total,eval_acc\n";
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& e : history) {
        os << e.epoch << ',' << e.ce << ',' << e.consistency << ',' << e.total << ',' << e.eval_accuracy << '\n';
    }
}

/// Flat text checkpoint: a shape header line per layer, then weights and biases.
inline void write_checkpoint(std::ostream& os, const MlpParams& params) {
    os << "mlp " << params.layers.size() << '\n';
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& l : params.layers) {
        os << "layer " << l.weight.rows << ' ' << l.weight.cols << '\n';
        for (double w : l.weight.data) os << w << '\n';
        for (double b : l.bias) os << b << '\n';
    }
}

inline MlpParams read_checkpoint(std::istream& is) {
    std::string tag;
    std::size_t count = 0;
    if (!(is >> tag >> count) || tag != "mlp") throw Error("not a checkpoint");
    MlpParams p;
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t rows = 0, cols = 0;
        if (!(is >> tag >> rows >> cols) || tag != "layer") throw Error("bad checkpoint layer header");
        DenseLayer l{Matrix(rows, cols), Vector(rows)};
        for (double& w : l.weight.data) is >> w;
        for (double& b : l.bias) is >> b;
        if (!is) throw Error("truncated checkpoint");
        p.layers.push_back(std::move(l));
    }
    for (std::size_t i = 1; i < p.layers.size(); ++i) {
        if (p.layers[i].weight.cols != p.layers[i - 1].weight.rows) throw DimensionError("checkpoint layers do not chain");
    }
    return p;
}

}  // namespace onebit
