#pragma once
// Experiment configuration: INI-style "[section] key = value" files.
//
//   [dataset]      classes, dim, train_per_class, test_per_class, class_separation,
//                  noise_scale, train_file, test_file
//   [supervision]  n_full, n_full_baseline, queries (integer or "auto"), total_bits,
//                  oracle_error_rate
//   [plan]         stages, split (balanced|front_loaded|back_loaded),
//                  strategy (uniform|easiest|hardest), cold_start, stage_epochs
//   [trainer]      hidden, consistency_weight, rampup_fraction, epochs, batch_size,
//                  labeled_fraction, learning_rate, momentum, ema_decay, input_noise,
//                  mask_student_negative
//   [run]          seeds ("N" or "N..M"), arm, dataset_seed
//   [ablate]       stages, splits, n_full, strategies   (comma-separated lists)

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "onebit/dataset.hpp"
#include "onebit/errors.hpp"
#include "onebit/oracle.hpp"
#include "onebit/scheduler.hpp"
#include "onebit/trainer.hpp"

namespace onebit {

enum class Arm { Baseline, OneBit, OneBitNls };

inline std::string to_string(Arm a) {
    switch (a) {
        case Arm::Baseline: return "baseline";
        case Arm::OneBit: return "onebit";
        case Arm::OneBitNls: return "onebit-nls";
    }
    return "?";
}

inline std::string to_string(SelectionStrategy s) {
    switch (s) {
        case SelectionStrategy::UniformRandom: return "uniform";
        case SelectionStrategy::Easiest: return "easiest";
        case SelectionStrategy::Hardest: return "hardest";
    }
    return "?";
}

inline std::string to_string(QuotaSplit s) {
    switch (s) {
        case QuotaSplit::Balanced: return "balanced";
        case QuotaSplit::FrontLoaded: return "front_loaded";
        case QuotaSplit::BackLoaded: return "back_loaded";
    }
    return "?";
}

inline Arm parse_arm(const std::string& s, const std::string& field = "run.arm") {
    if (s == "baseline") return Arm::Baseline;
    if (s == "onebit") return Arm::OneBit;
    if (s == "onebit-nls") return Arm::OneBitNls;
    throw ConfigError(field, "unknown arm '" + s + "' (baseline|onebit|onebit-nls)");
}

inline SelectionStrategy parse_strategy(const std::string& s, const std::string& field = "plan.strategy") {
    if (s == "uniform") return SelectionStrategy::UniformRandom;
    if (s == "easiest") return SelectionStrategy::Easiest;
    if (s == "hardest") return SelectionStrategy::Hardest;
    throw ConfigError(field, "unknown strategy '" + s + "' (uniform|easiest|hardest)");
}

inline QuotaSplit parse_split(const std::string& s, const std::string& field = "plan.split") {
    if (s == "balanced") return QuotaSplit::Balanced;
    if (s == "front_loaded") return QuotaSplit::FrontLoaded;
    if (s == "back_loaded") return QuotaSplit::BackLoaded;
    throw ConfigError(field, "unknown split '" + s + "' (balanced|front_loaded|back_loaded)");
}

/// "7" -> {7}; "0..4" -> {0,1,2,3,4}
inline std::vector<std::uint64_t> parse_seed_range(const std::string& s, const std::string& field = "run.seeds") {
    try {
        const auto dots = s.find("..");
        std::size_t used = 0;
        if (dots == std::string::npos) {
            const auto v = std::stoull(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return {v};
        }
        const auto lo = std::stoull(s.substr(0, dots), &used);
        if (used != dots) throw std::invalid_argument(s);
        const std::string rest = s.substr(dots + 2);
        const auto hi = std::stoull(rest, &used);
        if (used != rest.size()) throw std::invalid_argument(s);
        if (hi < lo) throw ConfigError(field, "empty seed range '" + s + "'");
        std::vector<std::uint64_t> out;
        for (auto v = lo; v <= hi; ++v) out.push_back(v);
        return out;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError(field, "expected N or N..M, got '" + s + "'");
    }
}

struct SupervisionConfig {
    std::size_t n_full = 90;            // full labels in the one-bit arms
    std::size_t n_full_baseline = 300;  // full labels in the bit-matched baseline arm
    std::optional<std::size_t> queries; // unset: derived by equivalent_schedules
    std::optional<double> total_bits;   // declared budget ceiling, if any
    double oracle_error_rate = 0.0;
};

struct PlanConfig {
    std::size_t stages = 2;
    QuotaSplit split = QuotaSplit::Balanced;
    SelectionStrategy strategy = SelectionStrategy::UniformRandom;
    bool cold_start = false;
    std::vector<std::size_t> stage_epochs;
};

struct AblationConfig {
    std::vector<std::size_t> stages{1, 2, 3};
    std::vector<QuotaSplit> splits{QuotaSplit::FrontLoaded, QuotaSplit::Balanced, QuotaSplit::BackLoaded};
    std::vector<std::size_t> n_full{30, 60, 90, 150, 300};
    std::vector<SelectionStrategy> strategies{SelectionStrategy::UniformRandom, SelectionStrategy::Easiest,
                                              SelectionStrategy::Hardest};
};

struct RunConfig {
    BlobSpec dataset;
    std::string train_file;
    std::string test_file;
    SupervisionConfig supervision;
    PlanConfig plan;
    TrainerConfig trainer;
    std::vector<std::uint64_t> seeds{0};
    std::optional<std::uint64_t> dataset_seed;  // freezes the dataset stream across seeds
    Arm arm = Arm::OneBitNls;
    AblationConfig ablate;
};

namespace detail {

class FieldReader {
public:
    explicit FieldReader(const boost::property_tree::ptree& tree) : tree_(tree) {}

    std::optional<std::string> raw(const std::string& key) {
        seen_.insert(key);
        auto v = tree_.get_optional<std::string>(boost::property_tree::ptree::path_type(key, '.'));
        if (!v) return std::nullopt;
        const std::string& s = *v;
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        auto v = raw(key);
        if (!v) return;
        out = parse<T>(key, *v);
    }

    template <typename T>
    void read_list(const std::string& key, std::vector<T>& out) {
        auto v = raw(key);
        if (!v) return;
        out.clear();
        std::stringstream ss(*v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto b = item.find_first_not_of(" \t");
            const auto e = item.find_last_not_of(" \t");
            if (b == std::string::npos) continue;
            out.push_back(parse<T>(key, item.substr(b, e - b + 1)));
        }
    }

    /// Rejects keys nobody asked for, which catches typos in config files.
    void reject_unknown() const {
        for (const auto& [section, body] : tree_) {
            if (body.empty()) throw ConfigError(section, "keys must live inside a [section]");
            for (const auto& [key, value] : body) {
                (void)value;
                const std::string full = section + "." + key;
                if (!seen_.count(full)) throw ConfigError(full, "unknown key");
            }
        }
    }

    template <typename T>
    static T parse(const std::string& key, const std::string& s) {
        try {
            std::size_t used = 0;
            if constexpr (std::is_same_v<T, std::string>) {
                return s;
            } else if constexpr (std::is_same_v<T, bool>) {
                if (s == "true" || s == "1" || s == "yes") return true;
                if (s == "false" || s == "0" || s == "no") return false;
                throw std::invalid_argument(s);
            } else if constexpr (std::is_same_v<T, double>) {
                const double v = std::stod(s, &used);
                if (used != s.size()) throw std::invalid_argument(s);
                return v;
            } else if constexpr (std::is_same_v<T, int>) {
                const int v = std::stoi(s, &used);
                if (used != s.size()) throw std::invalid_argument(s);
                return v;
            } else if constexpr (std::is_same_v<T, QuotaSplit>) {
                return parse_split(s, key);
            } else if constexpr (std::is_same_v<T, SelectionStrategy>) {
                return parse_strategy(s, key);
            } else {
                static_assert(std::is_unsigned_v<T>);
                if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
                const auto v = std::stoull(s, &used);
                if (used != s.size()) throw std::invalid_argument(s);
                return static_cast<T>(v);
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError(key, "cannot parse value '" + s + "'");
        }
    }

private:
    const boost::property_tree::ptree& tree_;
    std::set<std::string> seen_;
};

}  // namespace detail

/// Range checks that do not need the dataset.
inline void validate(const RunConfig& c) {
    if (c.dataset.classes < 2) throw ConfigError("dataset.classes", "must be >= 2");
    if (c.dataset.dim < 2) throw ConfigError("dataset.dim", "must be >= 2");
    if (c.dataset.train_per_class < 1) throw ConfigError("dataset.train_per_class", "must be >= 1");
    if (c.train_file.empty() && c.dataset.test_per_class < 1) {
        throw ConfigError("dataset.test_per_class", "must be >= 1");
    }
    if (!(c.dataset.noise_scale >= 0.0)) throw ConfigError("dataset.noise_scale", "must be >= 0");
    if (!(c.dataset.class_separation >= 0.0)) throw ConfigError("dataset.class_separation", "must be >= 0");
    if (c.train_file.empty() != c.test_file.empty()) {
        throw ConfigError("dataset.test_file", "train_file and test_file must be given together");
    }
    if (c.supervision.n_full > c.supervision.n_full_baseline) {
        throw ConfigError("supervision.n_full", "one-bit arm cannot hold more full labels than n_full_baseline");
    }
    if (!(c.supervision.oracle_error_rate >= 0.0 && c.supervision.oracle_error_rate <= 1.0)) {
        throw ConfigError("supervision.oracle_error_rate", "must lie in [0, 1]");
    }
    if (c.supervision.total_bits && !(*c.supervision.total_bits >= 0.0)) {
        throw ConfigError("supervision.total_bits", "must be >= 0");
    }
    if (!c.plan.stage_epochs.empty() && c.plan.stage_epochs.size() != c.plan.stages + 1) {
        throw ConfigError("plan.stage_epochs", "needs stages + 1 entries (initial stage first)");
    }
    if (c.seeds.empty()) throw ConfigError("run.seeds", "at least one seed required");
    c.trainer.validate();
}

inline RunConfig parse_config(std::istream& is) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("", std::string("malformed config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    RunConfig c;
    detail::FieldReader r(tree);

    r.read("dataset.classes", c.dataset.classes);
    r.read("dataset.dim", c.dataset.dim);
    r.read("dataset.train_per_class", c.dataset.train_per_class);
    r.read("dataset.test_per_class", c.dataset.test_per_class);
    r.read("dataset.class_separation", c.dataset.class_separation);
    r.read("dataset.noise_scale", c.dataset.noise_scale);
    r.read("dataset.train_file", c.train_file);
    r.read("dataset.test_file", c.test_file);

    r.read("supervision.n_full", c.supervision.n_full);
    r.read("supervision.n_full_baseline", c.supervision.n_full_baseline);
    if (auto q = r.raw("supervision.queries"); q && *q != "auto") {
        c.supervision.queries = detail::FieldReader::parse<std::size_t>("supervision.queries", *q);
    }
    if (auto b = r.raw("supervision.total_bits")) {
        c.supervision.total_bits = detail::FieldReader::parse<double>("supervision.total_bits", *b);
    }
    r.read("supervision.oracle_error_rate", c.supervision.oracle_error_rate);

    r.read("plan.stages", c.plan.stages);
    r.read("plan.split", c.plan.split);
    r.read("plan.strategy", c.plan.strategy);
    r.read("plan.cold_start", c.plan.cold_start);
    r.read_list("plan.stage_epochs", c.plan.stage_epochs);

    r.read_list("trainer.hidden", c.trainer.hidden_layers);
    r.read("trainer.consistency_weight", c.trainer.consistency_weight);
    r.read("trainer.rampup_fraction", c.trainer.rampup_fraction);
    r.read("trainer.epochs", c.trainer.epochs);
    r.read("trainer.batch_size", c.trainer.batch_size);
    r.read("trainer.labeled_fraction", c.trainer.labeled_fraction);
    r.read("trainer.learning_rate", c.trainer.learning_rate);
    r.read("trainer.momentum", c.trainer.momentum);
    r.read("trainer.ema_decay", c.trainer.ema_decay);
    r.read("trainer.input_noise", c.trainer.input_noise);
    r.read("trainer.mask_student_negative", c.trainer.mask_student_negative);

    if (auto s = r.raw("run.seeds")) c.seeds = parse_seed_range(*s);
    if (auto a = r.raw("run.arm")) c.arm = parse_arm(*a);
    if (auto d = r.raw("run.dataset_seed")) c.dataset_seed = detail::FieldReader::parse<std::uint64_t>("run.dataset_seed", *d);

    r.read_list("ablate.stages", c.ablate.stages);
    r.read_list("ablate.splits", c.ablate.splits);
    r.read_list("ablate.n_full", c.ablate.n_full);
    r.read_list("ablate.strategies", c.ablate.strategies);

    r.reject_unknown();
    validate(c);
    return c;
}

inline RunConfig parse_config_text(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("--config", "cannot open " + path);
    return parse_config(is);
}

}  // namespace onebit
