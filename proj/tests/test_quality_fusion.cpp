#include "micro_corpus.hpp"

#include "qaparse/quality_fusion.hpp"
#include "qaparse/synthetic.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace qaparse;

namespace {

// Second, independent evaluation of the weighted geometric mean.
double pow_fuse(double b, double i, double p, double wa, double wb, double wg)
{
    return std::pow(std::pow(b, wa) * std::pow(i, wb) * std::pow(p, wg), 1.0 / (wa + wb + wg));
}

CategoryPixelScores parts_of(std::initializer_list<std::pair<int, double>> scores, int C)
{
    Eigen::ArrayXd s = Eigen::ArrayXd::Zero(C);
    std::vector<bool> present(C, false);
    for (auto [c, v] : scores) {
        s(c) = v;
        present[c] = true;
    }
    return CategoryPixelScores(s, present);
}

} // namespace

TEST(Fuse, Examples)
{
    EXPECT_DOUBLE_EQ(fuse(0.8, 0.8, 0.8, QualityWeights(1, 1, 1)), 0.8);
    EXPECT_EQ(fuse(0.9, 0.7, 0.5, QualityWeights(1, 0, 0)), 0.9);
    EXPECT_NEAR(fuse(0.9, 1.0, 0.8, QualityWeights(1.0, 0.5, 3.0)), pow_fuse(0.9, 1.0, 0.8, 1.0, 0.5, 3.0), 1e-15);
    EXPECT_NEAR(fuse(0.9, 1.0, 0.8, QualityWeights(1.0, 0.5, 3.0)), std::pow(0.9 * 0.512, 1 / 4.5), 1e-15);
    EXPECT_NEAR(fuse(0.9, 0.7, 0.5, QualityWeights(2, 2, 2)), fuse(0.9, 0.7, 0.5, QualityWeights(1, 1, 1)), 1e-12);
}

TEST(Fuse, ZeroWeightFactorsAreIgnored)
{
    EXPECT_EQ(fuse(0.6, 0.0, 0.3, QualityWeights(1, 0, 1)), fuse(0.6, 0.5, 0.3, QualityWeights(1, 0, 1)));
    EXPECT_EQ(fuse(0.6, 0.0, 0.3, QualityWeights(1, 1, 1)), 0.0);
}

TEST(Fuse, RejectsInvalidScores)
{
    EXPECT_THROW(fuse(1.2, 0.5, 0.5, QualityWeights()), ValidationError);
    EXPECT_THROW(fuse(0.5, -0.1, 0.5, QualityWeights()), ValidationError);
    EXPECT_THROW(fuse(0.5, 0.5, std::nan(""), QualityWeights()), ValidationError);
}

TEST(Fuse, MatchesDirectEvaluationAndStaysBetweenInputs)
{
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 2000; ++k) {
        const double s[3] = {u(rng), u(rng), u(rng)};
        const double w[3] = {0.1 + 3 * u(rng), 0.1 + 3 * u(rng), 0.1 + 3 * u(rng)};
        const double q = fuse(s[0], s[1], s[2], QualityWeights(w[0], w[1], w[2]));
        EXPECT_NEAR(q, pow_fuse(s[0], s[1], s[2], w[0], w[1], w[2]), 1e-12);
        EXPECT_GE(q, std::min({s[0], s[1], s[2]}));
        EXPECT_LE(q, std::max({s[0], s[1], s[2]}));
    }
}

TEST(Fuse, FloatOverloadAndArrays)
{
    EXPECT_NEAR(fuse(0.9f, 0.8f, 0.7f, QualityWeights()), float(std::cbrt(0.9 * 0.8 * 0.7)), 1e-6f);
    Eigen::ArrayXd b(3), i(3), p(3);
    b << 0.9, 0.5, 1.0;
    i << 0.8, 0.5, 1.0;
    p << 0.7, 0.5, 0.0;
    const Eigen::ArrayXd q = fuse(b, i, p, QualityWeights());
    EXPECT_NEAR(q(0), std::cbrt(0.504), 1e-15);
    EXPECT_EQ(q(1), 0.5);
    EXPECT_EQ(q(2), 0.0);
    EXPECT_THROW(fuse(b, i, Eigen::ArrayXd(2), QualityWeights()), ValidationError);
}

TEST(ScoreInstance, Examples)
{
    const auto perfect = score_instance(1.0, 1.0, parts_of({{1, 1.0}, {3, 1.0}}, 4), 1.0, QualityWeights());
    EXPECT_EQ(perfect.instance_score, 1.0);
    EXPECT_EQ(perfect.part_scores, (std::map<int, double>{{1, 1.0}, {3, 1.0}}));

    const auto q = score_instance(0.9, 0.8, parts_of({{2, 0.6}}, 3), 0.7, QualityWeights());
    EXPECT_NEAR(q.instance_score, std::pow(0.504, 1.0 / 3.0), 1e-15);
    EXPECT_NEAR(q.part_scores.at(2), std::cbrt(0.9 * 0.8 * 0.6), 1e-15);
    EXPECT_EQ(q.part_scores.size(), 1u);

    const auto raw = score_instance(0.9, 0.8, parts_of({{1, 0.25}, {2, 0.6}}, 3), 0.7, QualityWeights(0, 0, 1));
    EXPECT_EQ(raw.part_scores.at(1), 0.25);
    EXPECT_EQ(raw.part_scores.at(2), 0.6);
}

TEST(ScoreInstance, MissingIouScore)
{
    const auto parts = parts_of({{1, 0.5}}, 2);
    EXPECT_THROW(score_instance(0.9, std::nullopt, parts, 0.7, QualityWeights()), ValidationError);
    const auto q = score_instance(0.9, std::nullopt, parts, 0.7, QualityWeights(1, 0, 1));
    EXPECT_NEAR(q.instance_score, std::sqrt(0.9 * 0.7), 1e-15);
}

TEST(ScoreInstance, BoxOnlyRankingEqualsBoxScoreRanking)
{
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> box(200), fused(200);
    for (std::size_t k = 0; k < box.size(); ++k) {
        box[k] = std::round(u(rng) * 20) / 20;  // ties on purpose
        fused[k] = score_instance(box[k], u(rng), parts_of({{1, u(rng)}}, 2), u(rng), QualityWeights(1, 0, 0))
                       .instance_score;
    }
    std::vector<std::size_t> a(box.size()), b(box.size());
    std::iota(a.begin(), a.end(), 0);
    std::iota(b.begin(), b.end(), 0);
    std::stable_sort(a.begin(), a.end(), [&](auto x, auto y) { return box[x] > box[y]; });
    std::stable_sort(b.begin(), b.end(), [&](auto x, auto y) { return fused[x] > fused[y]; });
    EXPECT_EQ(a, b);
}

TEST(WeightGrid, DefaultAndAblation)
{
    const auto grid = default_weight_grid();
    EXPECT_EQ(grid.size(), 124u);
    EXPECT_TRUE(std::find(grid.begin(), grid.end(), QualityWeights(1, 0.5, 3)) != grid.end());
    const auto ablation = ablation_weight_grid();
    EXPECT_EQ(ablation.size(), 8u);
    EXPECT_EQ(ablation.front(), QualityWeights(1, 0, 0));
    EXPECT_EQ(ablation.back(), QualityWeights(1, 0.5, 3));
    EXPECT_EQ(parse_weight_grid("ablation"), ablation);
    EXPECT_EQ(parse_weight_grid("1,0,0;0,0,1"), (std::vector<QualityWeights>{{1, 0, 0}, {0, 0, 1}}));
    EXPECT_THROW(parse_weight_grid(""), ValidationError);
    EXPECT_THROW(parse_weight_grid("1,0"), ValidationError);
    EXPECT_EQ(parse_objective("ap_r_50"), SweepObjective::ApR50);
    EXPECT_THROW(parse_objective("map"), ValidationError);
}

namespace {

ScoredCorpus small_scored_corpus(std::uint64_t seed)
{
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.num_images = 30;
    cfg.corruption.boundary_noise_px = 2;
    cfg.corruption.part_swap_prob = 0.15;
    cfg.corruption.erosion_max_px = 2;
    cfg.score_noise = {0.15, 0.1};
    return to_scored_corpus(generate(cfg), PixelScoreConfig{});
}

} // namespace

TEST(SweepWeights, SingleCandidateReproducesDirectEvaluation)
{
    const auto corpus = small_scored_corpus(31);
    const std::vector<QualityWeights> grid = {{1, 0, 0}};
    const auto rows = sweep_weights(corpus, grid, SweepObjective::ApR, MatchThresholds::decile());
    ASSERT_EQ(rows.size(), 1u);
    const auto report =
        evaluate(corpus.images, fuse_corpus(corpus, grid[0]), corpus.num_categories, MatchThresholds::decile());
    EXPECT_EQ(rows[0].ap_p, report.ap_p.mean);
    EXPECT_EQ(rows[0].ap_p50, report.ap_p.at50);
    EXPECT_EQ(rows[0].ap_r, report.ap_r.mean);
    EXPECT_EQ(rows[0].ap_r50, report.ap_r.at50);
}

TEST(SweepWeights, DuplicatesAgreeAndOrderIsDeterministic)
{
    const auto corpus = small_scored_corpus(32);
    const std::vector<QualityWeights> grid = {{1, 1, 1}, {1, 0, 0}, {1, 1, 1}, {0, 0, 1}};
    const auto rows = sweep_weights(corpus, grid, SweepObjective::ApR, MatchThresholds::decile(), 3);
    ASSERT_EQ(rows.size(), 4u);
    for (std::size_t k = 1; k < rows.size(); ++k) {
        EXPECT_GE(rows[k - 1].ap_r, rows[k].ap_r);
        if (rows[k - 1].ap_r == rows[k].ap_r) EXPECT_LE(rows[k - 1].weights, rows[k].weights);
    }
    std::vector<double> dup;
    for (const auto& r : rows)
        if (r.weights == QualityWeights(1, 1, 1)) dup.push_back(r.ap_p);
    ASSERT_EQ(dup.size(), 2u);
    EXPECT_EQ(dup[0], dup[1]);

    const auto again = sweep_weights(corpus, grid, SweepObjective::ApR, MatchThresholds::decile(), 1);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        EXPECT_EQ(rows[k].weights, again[k].weights);
        EXPECT_EQ(rows[k].ap_r, again[k].ap_r);
    }
}

TEST(SweepWeights, PixelScoreLeadsTheAblationOnRegions)
{
    const auto corpus = small_scored_corpus(33);
    const auto rows = sweep_weights(corpus, ablation_weight_grid(), SweepObjective::ApR, MatchThresholds::decile());
    // the best candidate uses the pixel score
    EXPECT_GT(rows.front().weights.gamma(), 0.0);
    double box_only = -1.0, box_pixel = -1.0;
    for (const auto& r : rows) {
        if (r.weights == QualityWeights(1, 0, 0)) box_only = r.ap_r;
        if (r.weights == QualityWeights(1, 0, 1)) box_pixel = r.ap_r;
    }
    EXPECT_GT(box_pixel, box_only);
}

TEST(SweepWeights, Errors)
{
    const auto corpus = small_scored_corpus(34);
    EXPECT_THROW(sweep_weights(corpus, std::vector<QualityWeights>{}, SweepObjective::ApR, MatchThresholds::decile()),
                 ValidationError);
    ScoredCorpus empty;
    empty.num_categories = 3;
    const std::vector<QualityWeights> grid = {{1, 1, 1}};
    EXPECT_THROW(sweep_weights(empty, grid, SweepObjective::ApR, MatchThresholds::decile()), ValidationError);
}

TEST(FuseCorpus, PartScoresCoverPresentCategories)
{
    const auto corpus = small_scored_corpus(35);
    const auto scores = fuse_corpus(corpus, QualityWeights(1, 0.5, 3));
    ASSERT_EQ(scores.size(), corpus.images.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        ASSERT_EQ(scores[i].size(), corpus.images[i].preds.size());
        for (std::size_t p = 0; p < scores[i].size(); ++p) {
            const auto present = corpus.raw[i][p].parts.present_categories();
            EXPECT_EQ(scores[i][p].part_scores.size(), present.size());
        }
    }
}
