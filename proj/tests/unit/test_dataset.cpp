#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "onebit/dataset.hpp"

namespace onebit {
namespace {

BlobSpec small_spec() {
    BlobSpec s;
    s.classes = 4;
    s.train_per_class = 25;
    s.test_per_class = 5;
    s.dim = 6;
    s.class_separation = 3.0;
    s.noise_scale = 0.5;
    return s;
}

TEST(GenerateBlobs, SmallestDataset) {
    BlobSpec s = small_spec();
    s.classes = 2;
    s.train_per_class = 1;
    const auto b = generate_blobs(s, 1);
    ASSERT_EQ(b.train.size(), 2u);
    EXPECT_EQ(b.train.hidden_truth(), (std::vector<int>{0, 1}));
}

TEST(GenerateBlobs, DeterministicPerSeed) {
    const auto a = generate_blobs(small_spec(), 42);
    const auto b = generate_blobs(small_spec(), 42);
    const auto c = generate_blobs(small_spec(), 43);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    EXPECT_NE(a.train.feature_data(), c.train.feature_data());
    // test split comes from its own stream
    EXPECT_NE(std::vector<double>(a.train.feature_data().begin(), a.train.feature_data().begin() + 6),
              std::vector<double>(a.test.feature_data().begin(), a.test.feature_data().begin() + 6));
}

TEST(GenerateBlobs, CentersRespectSeparation) {
    const auto b = generate_blobs(small_spec(), 5);
    for (std::size_t i = 0; i < b.centers.rows; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            double d2 = 0;
            for (std::size_t d = 0; d < b.centers.cols; ++d) d2 += std::pow(b.centers(i, d) - b.centers(j, d), 2);
            EXPECT_GE(std::sqrt(d2), 3.0);
        }
    }
}

TEST(GenerateBlobs, NoiseFreeSamplesSitOnCentersAndNearestCenterIsPerfect) {
    BlobSpec s = small_spec();
    s.noise_scale = 0.0;
    const auto b = generate_blobs(s, 9);
    std::size_t hits = 0;
    for (SampleId i = 0; i < b.train.size(); ++i) {
        const auto x = b.train.features(i);
        const int y = b.train.hidden_truth()[i];
        for (std::size_t d = 0; d < s.dim; ++d) EXPECT_EQ(x[d], b.centers(static_cast<std::size_t>(y), d));
        // nearest-center oracle
        int best = 0;
        double best_d = 1e300;
        for (std::size_t c = 0; c < b.centers.rows; ++c) {
            double d2 = 0;
            for (std::size_t d = 0; d < s.dim; ++d) d2 += std::pow(x[d] - b.centers(c, d), 2);
            if (d2 < best_d) best_d = d2, best = static_cast<int>(c);
        }
        hits += best == y;
    }
    EXPECT_EQ(hits, b.train.size());
}

TEST(GenerateBlobs, ImpossibleGeometryFails) {
    BlobSpec s = small_spec();
    s.classes = 10;
    s.dim = 2;  // at most 6 points on a circle can be a radius apart
    s.attempts_per_center = 200;
    EXPECT_THROW(generate_blobs(s, 1), GenerationError);
    s.classes = 1;
    EXPECT_THROW(generate_blobs(s, 1), GenerationError);
}

TEST(StandardizeFeatures, TrainStatsAreZeroMeanUnitVariance) {
    auto b = generate_blobs(small_spec(), 3);
    standardize_features(b.train, b.test);
    const auto& f = b.train.feature_data();
    for (std::size_t d = 0; d < b.train.dim(); ++d) {
        double m = 0, v = 0;
        for (SampleId i = 0; i < b.train.size(); ++i) m += f[i * b.train.dim() + d];
        m /= static_cast<double>(b.train.size());
        for (SampleId i = 0; i < b.train.size(); ++i) v += std::pow(f[i * b.train.dim() + d] - m, 2);
        EXPECT_NEAR(m, 0.0, 1e-12);
        EXPECT_NEAR(v / static_cast<double>(b.train.size()), 1.0, 1e-12);
    }
}

TEST(InitialSplit, Extremes) {
    const auto b = generate_blobs(small_spec(), 1);
    const auto all = initial_split(b.train, b.train.size(), 0);
    EXPECT_EQ(all.count(Membership::Supervised), b.train.size());
    const auto none = initial_split(b.train, 0, 0);
    EXPECT_EQ(none.count(Membership::Unlabeled), b.train.size());
    EXPECT_EQ(none.count(Membership::GuessedRight) + none.count(Membership::GuessedWrong), 0u);
    EXPECT_THROW(initial_split(b.train, b.train.size() + 1, 0), ProtocolError);
}

TEST(InitialSplit, ClassBalanced) {
    BlobSpec s = small_spec();
    s.classes = 10;
    s.dim = 12;
    s.train_per_class = 20;
    s.class_separation = 2.0;
    const auto b = generate_blobs(s, 1);
    const auto p = initial_split(b.train, 30, 7);
    std::vector<int> per_class(10, 0);
    for (SampleId id : p.ids(Membership::Supervised)) {
        EXPECT_EQ(p.label(id), LabelState::full(b.train.hidden_truth()[id]));
        ++per_class[static_cast<std::size_t>(b.train.hidden_truth()[id])];
    }
    EXPECT_EQ(per_class, std::vector<int>(10, 3));

    // remainder goes to distinct classes
    const auto q = initial_split(b.train, 34, 7);
    std::fill(per_class.begin(), per_class.end(), 0);
    for (SampleId id : q.ids(Membership::Supervised)) ++per_class[static_cast<std::size_t>(b.train.hidden_truth()[id])];
    EXPECT_EQ(std::count(per_class.begin(), per_class.end(), 4), 4);
    EXPECT_EQ(std::count(per_class.begin(), per_class.end(), 3), 6);
    check_partition(q, b.train);
}

TEST(InitialSplit, SameSeedSameSplit) {
    const auto b = generate_blobs(small_spec(), 1);
    EXPECT_EQ(initial_split(b.train, 13, 5), initial_split(b.train, 13, 5));
    EXPECT_NE(initial_split(b.train, 13, 5), initial_split(b.train, 13, 6));
}

TEST(Partition, GuessResults) {
    const auto b = generate_blobs(small_spec(), 1);
    Partition p = initial_split(b.train, 4, 1);
    const auto pool = p.ids(Membership::Unlabeled);
    const SampleId right = pool[0], wrong = pool[1];
    const int truth_r = b.train.hidden_truth()[right];
    const int other = (b.train.hidden_truth()[wrong] + 1) % 4;

    p.apply_guess_result(right, truth_r, Answer::Yes);
    EXPECT_EQ(p.membership(right), Membership::GuessedRight);
    EXPECT_EQ(p.label(right), LabelState::full(truth_r));

    p.apply_guess_result(wrong, other, Answer::No);
    EXPECT_EQ(p.membership(wrong), Membership::GuessedWrong);
    EXPECT_EQ(p.label(wrong), LabelState::negative(other));

    EXPECT_THROW(p.apply_guess_result(wrong, other, Answer::No), ProtocolError);
    EXPECT_THROW(p.apply_guess_result(p.ids(Membership::Supervised)[0], 0, Answer::Yes), ProtocolError);
    EXPECT_EQ(p.count(Membership::Supervised) + p.count(Membership::GuessedRight) + p.count(Membership::GuessedWrong) +
                  p.count(Membership::Unlabeled),
              b.train.size());
    check_partition(p, b.train);
}

TEST(Partition, CheckRejectsLies) {
    const auto b = generate_blobs(small_spec(), 1);
    Partition p(b.train.size());
    const int truth = b.train.hidden_truth()[0];
    p.apply_guess_result(0, truth, Answer::No);  // a "negative" label equal to the truth
    EXPECT_THROW(check_partition(p, b.train), ProtocolError);
}

TEST(DatasetCsv, RoundTripIsExact) {
    const auto b = generate_blobs(small_spec(), 77);
    std::stringstream ss;
    write_dataset_csv(ss, b.train);
    const std::string text = ss.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), "id,y,x_0,x_1,x_2,x_3,x_4,x_5");
    const auto back = read_dataset_csv(ss, 4);
    EXPECT_EQ(back, b.train);
}

TEST(DatasetCsv, RejectsMalformed) {
    std::stringstream bad_header("a,b,c\n");
    EXPECT_THROW(read_dataset_csv(bad_header), Error);
    std::stringstream bad_ids("id,y,x_0\n1,0,0.5\n");
    EXPECT_THROW(read_dataset_csv(bad_ids), Error);
    std::stringstream short_row("id,y,x_0,x_1\n0,0,0.5\n");
    EXPECT_THROW(read_dataset_csv(short_row), Error);
}

}  // namespace
}  // namespace onebit
