#pragma once
// Test-only straight-line reimplementation of the MLP loss, used as an oracle for the
// library's forward/backward path. Deliberately shares no code with onebit/numerics.hpp.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace onebit::testing {

struct RefLayer {
    std::size_t out = 0, in = 0;
    std::vector<double> w;  // out*in, row-major
    std::vector<double> b;
};

inline std::vector<double> ref_logits(const std::vector<RefLayer>& net, std::vector<double> a) {
    for (std::size_t l = 0; l < net.size(); ++l) {
        const auto& L = net[l];
        std::vector<double> z(L.out);
        for (std::size_t r = 0; r < L.out; ++r) {
            double s = L.b[r];
            for (std::size_t c = 0; c < L.in; ++c) s += L.w[r * L.in + c] * a[c];
            z[r] = (l + 1 < net.size()) ? std::max(0.0, s) : s;
        }
        a = z;
    }
    return a;
}

inline std::vector<double> ref_softmax(const std::vector<double>& z) {
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    std::vector<double> e(z.size());
    double s = 0;
    for (std::size_t i = 0; i < z.size(); ++i) s += (e[i] = std::exp(z[i] - m));
    for (double& v : e) v /= s;
    return e;
}

/// One sample of the batch loss. label < 0 means no cross-entropy; target empty means no consistency.
struct RefSample {
    std::vector<double> x;  // already includes any input noise
    int label = -1;
    int masked_class = -1;  // student logit replaced by -1e9 before softmax
    std::vector<double> target;
};

inline double ref_batch_loss(const std::vector<RefLayer>& net, const std::vector<RefSample>& batch, double lambda) {
    double ce = 0, cons = 0;
    for (const auto& s : batch) {
        auto z = ref_logits(net, s.x);
        if (s.masked_class >= 0) z[static_cast<std::size_t>(s.masked_class)] = -1e9;
        const auto p = ref_softmax(z);
        if (s.label >= 0) ce += -std::log(std::max(p[static_cast<std::size_t>(s.label)], 1e-12));
        if (!s.target.empty()) {
            double m = 0;
            for (std::size_t k = 0; k < p.size(); ++k) m += (p[k] - s.target[k]) * (p[k] - s.target[k]);
            cons += m / static_cast<double>(p.size());
        }
    }
    const double n = static_cast<double>(batch.size());
    return ce / n + lambda * cons / n;
}

}  // namespace onebit::testing
