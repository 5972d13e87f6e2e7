#pragma once
// Dense numerics for a small rectified-linear MLP: forward/backward passes,
// softmax, the teacher-student batch loss, SGD with momentum and EMA updates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "onebit/errors.hpp"
#include "onebit/rng.hpp"

namespace onebit {

/// Logit written over a suppressed class. Underflows to an exact 0 after max-subtracted softmax.
inline constexpr double kNegLarge = -1e9;
/// Probability floor inside cross-entropy.
inline constexpr double kProbFloor = 1e-12;
/// Default standard deviation of the additive Gaussian input noise (standardized units).
inline constexpr double kInputNoiseSigma = 0.1;

using Vector = std::vector<double>;

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

struct DenseLayer {
    Matrix weight;  // out x in
    Vector bias;    // out

    bool operator==(const DenseLayer&) const = default;
};

/// A stack of dense layers. Hidden layers use ReLU, the last layer is linear (logits).
/// The tag keeps parameters, gradients and optimizer state from mixing by accident.
template <typename Tag>
struct LayerStack {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols; }
    std::size_t class_count() const { return layers.empty() ? 0 : layers.back().weight.rows; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.weight.data.size() + l.bias.size();
        return n;
    }

    bool operator==(const LayerStack&) const = default;
};

using MlpParams = LayerStack<struct ParamsTag>;
using GradientSet = LayerStack<struct GradientTag>;
using MomentumState = LayerStack<struct MomentumTag>;

/// Zero-filled stack with the same shape as `like`.
template <typename To, typename From>
To zeros_like(const From& like) {
    To out;
    out.layers.reserve(like.layers.size());
    for (const auto& l : like.layers) {
        out.layers.push_back({Matrix(l.weight.rows, l.weight.cols), Vector(l.bias.size(), 0.0)});
    }
    return out;
}

template <typename A, typename B>
void check_congruent(const A& a, const B& b) {
    if (a.layers.size() != b.layers.size()) throw DimensionError("layer count mismatch");
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        const auto& la = a.layers[i];
        const auto& lb = b.layers[i];
        if (la.weight.rows != lb.weight.rows || la.weight.cols != lb.weight.cols ||
            la.bias.size() != lb.bias.size()) {
            throw DimensionError("layer " + std::to_string(i) + " shape mismatch");
        }
    }
}

/// Calls f(a_value&, b_value) over every parameter pair in a fixed order.
template <typename A, typename B, typename F>
void zip_values(A& a, const B& b, F&& f) {
    check_congruent(a, b);
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        auto& wa = a.layers[i].weight.data;
        const auto& wb = b.layers[i].weight.data;
        for (std::size_t k = 0; k < wa.size(); ++k) f(wa[k], wb[k]);
        auto& ba = a.layers[i].bias;
        const auto& bb = b.layers[i].bias;
        for (std::size_t k = 0; k < ba.size(); ++k) f(ba[k], bb[k]);
    }
}

/// Zero parameters for widths = {input, hidden..., classes}.
inline MlpParams zero_mlp(std::span<const std::size_t> widths) {
    if (widths.size() < 2) throw DimensionError("an MLP needs at least input and output widths");
    MlpParams p;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        if (widths[i] == 0 || widths[i + 1] == 0) throw DimensionError("zero layer width");
        p.layers.push_back({Matrix(widths[i + 1], widths[i]), Vector(widths[i + 1], 0.0)});
    }
    return p;
}

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
inline MlpParams init_mlp(std::span<const std::size_t> widths, std::uint64_t seed) {
    MlpParams p = zero_mlp(widths);
    Rng rng(seed);
    for (auto& l : p.layers) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.weight.rows + l.weight.cols));
        for (double& w : l.weight.data) w = rng.uniform(-limit, limit);
    }
    return p;
}

inline Vector softmax(std::span<const double> logits) {
    if (logits.empty()) throw DimensionError("softmax of an empty vector");
    const double m = *std::max_element(logits.begin(), logits.end());
    Vector out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

inline double cross_entropy(std::span<const double> probs, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
        throw IndexError("label " + std::to_string(label) + " out of range");
    }
    return -std::log(std::max(probs[static_cast<std::size_t>(label)], kProbFloor));
}

/// Mean over classes of the squared difference of two probability vectors.
inline double consistency_mse(std::span<const double> p_teacher, std::span<const double> p_student) {
    if (p_teacher.size() != p_student.size()) throw DimensionError("consistency length mismatch");
    if (p_teacher.empty()) throw DimensionError("consistency of empty vectors");
    double s = 0.0;
    for (std::size_t i = 0; i < p_teacher.size(); ++i) {
        const double d = p_teacher[i] - p_student[i];
        s += d * d;
    }
    return s / static_cast<double>(p_teacher.size());
}

inline Vector suppress_logit(Vector logits, int negative_class) {
    if (negative_class < 0 || static_cast<std::size_t>(negative_class) >= logits.size()) {
        throw IndexError("negative class " + std::to_string(negative_class) + " out of range");
    }
    logits[static_cast<std::size_t>(negative_class)] = kNegLarge;
    return logits;
}

namespace detail {

/// activations[0] is the (possibly noisy) input, activations.back() the logits.
struct ForwardTrace {
    std::vector<Vector> activations;
};

inline ForwardTrace forward_trace(const MlpParams& params, std::span<const double> x,
                                  std::optional<std::uint64_t> noise_seed, double noise_sigma) {
    if (params.layers.empty()) throw DimensionError("empty network");
    if (x.size() != params.input_dim()) {
        throw DimensionError("input has " + std::to_string(x.size()) + " features, network expects " +
                             std::to_string(params.input_dim()));
    }
    ForwardTrace t;
    t.activations.reserve(params.layers.size() + 1);
    Vector in(x.begin(), x.end());
    if (noise_seed) {
        Rng rng(*noise_seed);
        for (double& v : in) v += noise_sigma * rng.normal();
    }
    t.activations.push_back(std::move(in));
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        const auto& layer = params.layers[li];
        if (layer.weight.cols != t.activations.back().size()) throw DimensionError("layer widths do not chain");
        const Vector& a = t.activations.back();
        Vector z(layer.weight.rows);
        for (std::size_t r = 0; r < layer.weight.rows; ++r) {
            double s = layer.bias[r];
            const auto w = layer.weight.row(r);
            for (std::size_t c = 0; c < w.size(); ++c) s += w[c] * a[c];
            z[r] = s;
        }
        if (li + 1 < params.layers.size()) {
            for (double& v : z) v = v > 0.0 ? v : 0.0;
        }
        t.activations.push_back(std::move(z));
    }
    return t;
}

}  // namespace detail

/// Logits of the network. With a noise seed, N(0, noise_sigma^2) noise is added to the input first.
inline Vector forward(const MlpParams& params, std::span<const double> x,
                      std::optional<std::uint64_t> noise_seed = std::nullopt,
                      double noise_sigma = kInputNoiseSigma) {
    return std::move(detail::forward_trace(params, x, noise_seed, noise_sigma).activations.back());
}

enum class LossRole {
    Supervised,             // cross-entropy on class_index, plus consistency
    SuppressedConsistency,  // consistency only; class_index is the negative class
    Consistency,            // consistency only
};

struct LossSpec {
    LossRole role = LossRole::Consistency;
    int class_index = -1;

    bool operator==(const LossSpec&) const = default;
};

struct BatchItem {
    std::span<const double> x;
    LossSpec spec;
    /// Teacher probabilities used as the consistency target. Empty disables the term.
    Vector teacher_probs;
    std::optional<std::uint64_t> noise_seed;
    /// Also suppress the student's negative-class logit before comparing.
    bool mask_student_negative = false;
};

struct LossBreakdown {
    double ce = 0.0;           // mean cross-entropy over the batch (unlabeled samples contribute 0)
    double consistency = 0.0;  // mean consistency over the batch
    double total = 0.0;        // ce + lambda * consistency
};

struct BackwardResult {
    GradientSet gradients;
    LossBreakdown loss;
};

/// Batch loss  (1/B) sum_i [CE_i] + lambda (1/B) sum_i MSE(teacher_i, student_i)
/// and its exact gradient w.r.t. the student parameters. Targets are constants.
inline BackwardResult backward(const MlpParams& params, std::span<const BatchItem> batch, double lambda,
                               double noise_sigma = kInputNoiseSigma) {
    if (batch.empty()) throw DimensionError("backward on an empty batch");
    const std::size_t classes = params.class_count();
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    BackwardResult out{zeros_like<GradientSet>(params), {}};
    Vector delta(classes);

    for (const auto& item : batch) {
        auto trace = detail::forward_trace(params, item.x, item.noise_seed, noise_sigma);
        Vector z = trace.activations.back();

        const bool masked = item.mask_student_negative && item.spec.role == LossRole::SuppressedConsistency;
        if (masked) z = suppress_logit(std::move(z), item.spec.class_index);
        const Vector s = softmax(z);
        std::fill(delta.begin(), delta.end(), 0.0);

        if (item.spec.role == LossRole::Supervised) {
            const double ce = cross_entropy(s, item.spec.class_index);
            out.loss.ce += ce * inv_b;
            const auto label = static_cast<std::size_t>(item.spec.class_index);
            if (s[label] > kProbFloor) {
                for (std::size_t k = 0; k < classes; ++k) delta[k] += s[k];
                delta[label] -= 1.0;
            }
        } else if (item.spec.role == LossRole::SuppressedConsistency &&
                   (item.spec.class_index < 0 || static_cast<std::size_t>(item.spec.class_index) >= classes)) {
            throw IndexError("negative class out of range");
        }

        if (!item.teacher_probs.empty()) {
            const double mse = consistency_mse(item.teacher_probs, s);
            out.loss.consistency += mse * inv_b;
            // d mse / d s_k = 2 (s_k - t_k) / C, then through the softmax Jacobian
            Vector g(classes);
            double dot = 0.0;
            for (std::size_t k = 0; k < classes; ++k) {
                g[k] = 2.0 * (s[k] - item.teacher_probs[k]) / static_cast<double>(classes);
                dot += s[k] * g[k];
            }
            for (std::size_t k = 0; k < classes; ++k) delta[k] += lambda * s[k] * (g[k] - dot);
        }
        if (masked) delta[static_cast<std::size_t>(item.spec.class_index)] = 0.0;
        for (double& d : delta) d *= inv_b;

        Vector upstream = delta;
        for (std::size_t li = params.layers.size(); li-- > 0;) {
            const auto& layer = params.layers[li];
            auto& grad = out.gradients.layers[li];
            const Vector& a = trace.activations[li];
            for (std::size_t r = 0; r < layer.weight.rows; ++r) {
                const double d = upstream[r];
                grad.bias[r] += d;
                if (d == 0.0) continue;
                double* gw = grad.weight.data.data() + r * layer.weight.cols;
                for (std::size_t c = 0; c < layer.weight.cols; ++c) gw[c] += d * a[c];
            }
            if (li == 0) break;
            Vector below(layer.weight.cols, 0.0);
            for (std::size_t r = 0; r < layer.weight.rows; ++r) {
                const double d = upstream[r];
                if (d == 0.0) continue;
                const auto w = layer.weight.row(r);
                for (std::size_t c = 0; c < w.size(); ++c) below[c] += w[c] * d;
            }
            for (std::size_t c = 0; c < below.size(); ++c) {
                if (!(a[c] > 0.0)) below[c] = 0.0;
            }
            upstream = std::move(below);
        }
    }
    out.loss.total = out.loss.ce + lambda * out.loss.consistency;
    return out;
}

/// v <- mu v + g;  theta <- theta - lr v
inline void sgd_step(MlpParams& params, const GradientSet& grads, double lr, MomentumState& velocity,
                     double momentum) {
    check_congruent(params, grads);
    zip_values(velocity, grads, [momentum](double& v, double g) { v = momentum * v + g; });
    zip_values(params, velocity, [lr](double& p, double v) { p -= lr * v; });
}

/// teacher <- alpha teacher + (1 - alpha) student
inline void ema_update(MlpParams& teacher, const MlpParams& student, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("EMA decay must lie in [0, 1]");
    zip_values(teacher, student, [alpha](double& t, double s) { t = alpha * t + (1.0 - alpha) * s; });
}

}  // namespace onebit
