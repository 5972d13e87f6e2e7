// Runs one bit-matched pair of pipelines on small blobs and prints per-stage reports.

#include <iomanip>
#include <iostream>

#include "onebit/onebit.hpp"

int main() {
    using namespace onebit;

    BlobSpec spec;
    spec.classes = 5;
    spec.dim = 10;
    spec.train_per_class = 200;
    spec.test_per_class = 50;
    spec.noise_scale = 1.5;
    auto data = generate_blobs(spec, 1);
    standardize_features(data.train, data.test);

    TrainerConfig cfg;
    cfg.hidden_layers = {32};
    cfg.epochs = 15;

    const int classes = static_cast<int>(spec.classes);
    const std::size_t baseline_labels = 100, onebit_labels = 40;
    const std::size_t queries = equivalent_schedules(baseline_labels, classes, onebit_labels);

    StagePlan plan;
    plan.quotas = split_quota(static_cast<long long>(queries), 2);

    const auto base = run_pipeline(data.train, data.test, baseline_labels, StagePlan{}, cfg, 7);
    const auto onebit = run_pipeline(data.train, data.test, onebit_labels, plan, cfg, 7);

    std::cout << std::fixed << std::setprecision(3);
    std::cout << "baseline: " << baseline_labels << " labels, " << base.budget.spent() << " bits, accuracy "
              << base.reports.back().accuracy << '\n';
    std::cout << "one-bit:  " << onebit_labels << " labels + " << queries << " queries, " << onebit.budget.spent()
              << " bits\n";
    for (const auto& r : onebit.reports) {
        std::cout << "  stage " << r.stage << ": asked " << r.queried << ", right " << r.correct << ", accuracy "
                  << r.accuracy << '\n';
    }
}
