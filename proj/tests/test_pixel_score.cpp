#include "oracle.hpp"

#include "qaparse/pixel_score.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace qaparse;

namespace {

Plane<float> plane(int h, int w, std::initializer_list<float> values)
{
    Plane<float> p(h, w);
    std::copy(values.begin(), values.end(), p.data());
    return p;
}

ProbabilityTensor random_tensor(std::mt19937_64& rng, int C, int H, int W)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ProbabilityTensor::Values v(C, Eigen::Index(H) * W);
    for (Eigen::Index n = 0; n < v.cols(); ++n) {
        double sum = 0.0;
        // a sharp winner on most pixels keeps the maxima spread over [1/C, 1]
        const int winner = int(u(rng) * C);
        for (int c = 0; c < C; ++c) sum += (v(c, n) = float(u(rng) + (c == winner ? 4 * u(rng) : 0.0)));
        for (int c = 0; c < C; ++c) v(c, n) = float(v(c, n) / sum);
    }
    return ProbabilityTensor(C, H, W, std::move(v));
}

std::vector<double> flatten(const ProbabilityTensor& t)
{
    std::vector<double> out;
    for (int c = 0; c < t.categories(); ++c)
        for (Eigen::Index n = 0; n < t.values().cols(); ++n) out.push_back(t.values()(c, n));
    return out;
}

} // namespace

TEST(InstancePixelScore, Examples)
{
    const PixelScoreConfig cfg;
    EXPECT_DOUBLE_EQ(instance_pixel_score(ProbabilityMap(Plane<float>::Ones(3, 3)), cfg), 1.0);
    EXPECT_DOUBLE_EQ(instance_pixel_score(ProbabilityMap(plane(2, 2, {0.9f, 0.9f, 0.1f, 0.1f})), cfg),
                     double(0.9f));
    EXPECT_EQ(instance_pixel_score(ProbabilityMap(plane(2, 2, {0.1f, 0.1f, 0.1f, 0.1f})), cfg), 0.0);
}

TEST(InstancePixelScore, MatchesOracleOnRandomMaps)
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const auto t = random_tensor(rng, 4, 16, 16);
        const auto expected = oracle::pixel_scores(flatten(t), 4, 16, 16, 0.2);
        EXPECT_NEAR(instance_pixel_score(derive_maps(t).second, PixelScoreConfig{0.2}), expected.instance, 1e-12);
    }
}

TEST(InstancePixelScore, ThresholdIsInclusive)
{
    const auto map = ProbabilityMap(plane(1, 2, {0.5f, 0.25f}));
    EXPECT_DOUBLE_EQ(instance_pixel_score(map, PixelScoreConfig{0.25}), (0.5 + 0.25) / 2);
}

TEST(InstancePixelScore, NonDecreasingInThreshold)
{
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        const auto probs = derive_maps(random_tensor(rng, 3, 10, 9)).second;
        double previous = 0.0;
        for (double T = 0.0; T < 0.95; T += 0.05) {
            if (!(probs.values().cast<double>() >= T).any()) break;
            const double s = instance_pixel_score(probs, PixelScoreConfig{T});
            EXPECT_GE(s, previous);
            EXPECT_GE(s, T);
            previous = s;
        }
    }
}

TEST(InstancePixelScore, PermutationInvariant)
{
    std::mt19937_64 rng(13);
    const auto probs = derive_maps(random_tensor(rng, 3, 8, 8)).second;
    std::vector<float> values(probs.values().data(), probs.values().data() + 64);
    std::shuffle(values.begin(), values.end(), rng);
    Plane<float> shuffled(4, 16);
    std::copy(values.begin(), values.end(), shuffled.data());
    EXPECT_NEAR(instance_pixel_score(probs, PixelScoreConfig{}),
                instance_pixel_score(ProbabilityMap(shuffled), PixelScoreConfig{}), 1e-12);
}

TEST(CategoryPixelScores, SingleUniformCategory)
{
    const LabelMap labels(LabelPlane::Constant(3, 3, 2));
    const ProbabilityMap probs(Plane<float>::Constant(3, 3, 0.8f));
    const auto s = category_pixel_scores(labels, probs, 3, PixelScoreConfig{});
    EXPECT_EQ(s.present_categories(), std::vector<int>{2});
    EXPECT_DOUBLE_EQ(*s.score(2), double(0.8f));
    EXPECT_FALSE(s.score(1).has_value());
}

TEST(CategoryPixelScores, CategoryWithNothingAboveThreshold)
{
    LabelPlane l(1, 4);
    l << 1, 1, 2, 2;
    const auto s = category_pixel_scores(LabelMap(l), ProbabilityMap(plane(1, 4, {0.9f, 0.5f, 0.3f, 0.1f})), 3,
                                         PixelScoreConfig{0.4});
    EXPECT_EQ(s.present_categories(), (std::vector<int>{1, 2}));
    EXPECT_NEAR(*s.score(1), 0.7, 1e-7);
    EXPECT_EQ(*s.score(2), 0.0);
}

TEST(CategoryPixelScores, MatchesOracleOnRandomInstances)
{
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 50; ++trial) {
        const auto t = random_tensor(rng, 5, 8, 8);
        for (double T : {0.0, 0.2, 0.5}) {
            const auto expected = oracle::pixel_scores(flatten(t), 5, 8, 8, T);
            const auto [labels, probs] = derive_maps(t);
            const auto got = category_pixel_scores(labels, probs, 5, PixelScoreConfig{T});
            for (int c = 1; c < 5; ++c) {
                ASSERT_EQ(got.score(c).has_value(), expected.category[c].has_value());
                if (got.score(c)) EXPECT_EQ(*got.score(c), *expected.category[c]);
            }
        }
    }
}

TEST(CategoryPixelScores, BoundsAndBackground)
{
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 30; ++trial) {
        const auto [labels, probs] = derive_maps(random_tensor(rng, 4, 7, 7));
        const double T = 0.3;
        const auto s = category_pixel_scores(labels, probs, 4, PixelScoreConfig{T});
        EXPECT_FALSE(s.present(0));
        for (int c : s.present_categories()) {
            const double v = *s.score(c);
            EXPECT_LE(v, 1.0);
            if (v > 0.0) EXPECT_GE(v, T);
        }
    }
}

TEST(CategoryPixelScores, PaddedLayout)
{
    LabelPlane l(1, 2);
    l << 0, 2;
    const auto s = category_pixel_scores(LabelMap(l), ProbabilityMap(plane(1, 2, {0.9f, 0.6f})), 4,
                                         PixelScoreConfig{});
    const Eigen::ArrayXd ones = s.padded();
    ASSERT_EQ(ones.size(), 3);
    EXPECT_EQ(ones(0), 1.0);
    EXPECT_DOUBLE_EQ(ones(1), double(0.6f));
    EXPECT_EQ(ones(2), 1.0);
    EXPECT_EQ(s.padded(0.0)(0), 0.0);
}

TEST(CategoryPixelScores, InstanceScoreIsWeightedMixOfCategoryScores)
{
    // instance score = pixel-count weighted mean of per-label scores, background included
    std::mt19937_64 rng(16);
    const auto t = random_tensor(rng, 4, 12, 12);
    const auto [labels, probs] = derive_maps(t);
    const double T = 0.3;
    double weighted = 0.0;
    long total = 0;
    for (int c = 0; c < 4; ++c) {
        const auto hits = ((labels.values() == std::uint8_t(c)) && (probs.values().cast<double>() >= T));
        weighted += hits.select(probs.values().cast<double>(), 0.0).sum();
        total += hits.count();
    }
    EXPECT_NEAR(instance_pixel_score(probs, PixelScoreConfig{T}), weighted / double(total), 1e-12);
}

TEST(CategoryPixelScores, RejectsBadInput)
{
    const LabelMap labels(LabelPlane::Constant(2, 2, 3));
    const ProbabilityMap probs(Plane<float>::Constant(2, 2, 0.5f));
    EXPECT_THROW(category_pixel_scores(labels, probs, 3, PixelScoreConfig{}), ValidationError);
    EXPECT_THROW(category_pixel_scores(labels, ProbabilityMap(Plane<float>::Constant(2, 3, 0.5f)), 4,
                                       PixelScoreConfig{}),
                 ValidationError);
}

TEST(PixelScoreConfig, Validation)
{
    EXPECT_NO_THROW(PixelScoreConfig{0.0}.validate());
    EXPECT_THROW(PixelScoreConfig{1.0}.validate(), ValidationError);
    EXPECT_THROW(PixelScoreConfig{-0.1}.validate(), ValidationError);
    EXPECT_EQ(PixelScoreConfig{}.threshold, 0.2);
}

TEST(HighConfidenceMask, InstanceAndCategory)
{
    LabelPlane l(1, 3);
    l << 1, 2, 1;
    const auto probs = plane(1, 3, {0.9f, 0.8f, 0.1f});
    const auto all = high_confidence_mask(probs, 0.5);
    EXPECT_EQ(all.bits.count(), 2);
    const auto one = high_confidence_mask(l, probs, 1, 0.5);
    EXPECT_TRUE(one.bits(0, 0));
    EXPECT_FALSE(one.bits(0, 1));
    EXPECT_FALSE(one.bits(0, 2));
}
