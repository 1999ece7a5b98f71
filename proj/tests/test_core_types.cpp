#include "qaparse/core_types.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <thread>

using namespace qaparse;

namespace {

ProbabilityTensor column(std::initializer_list<float> values)
{
    ProbabilityTensor::Values v(Eigen::Index(values.size()), 1);
    Eigen::Index c = 0;
    for (float x : values) v(c++, 0) = x;
    return ProbabilityTensor(int(values.size()), 1, 1, std::move(v));
}

ProbabilityTensor random_tensor(std::mt19937_64& rng, int C, int H, int W)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ProbabilityTensor::Values v(C, Eigen::Index(H) * W);
    for (Eigen::Index n = 0; n < v.cols(); ++n) {
        double sum = 0.0;
        for (int c = 0; c < C; ++c) sum += (v(c, n) = float(u(rng)));
        for (int c = 0; c < C; ++c) v(c, n) = float(v(c, n) / sum);
    }
    return ProbabilityTensor(C, H, W, std::move(v));
}

} // namespace

TEST(DeriveMaps, PicksLargestCategory)
{
    const auto [labels, probs] = derive_maps(column({0.1f, 0.7f, 0.2f}));
    EXPECT_EQ(labels.values()(0, 0), 1);
    EXPECT_FLOAT_EQ(probs.values()(0, 0), 0.7f);
}

TEST(DeriveMaps, TieGoesToLowestCategory)
{
    const auto [labels, probs] = derive_maps(column({0.5f, 0.5f}));
    EXPECT_EQ(labels.values()(0, 0), 0);
    EXPECT_FLOAT_EQ(probs.values()(0, 0), 0.5f);
}

TEST(DeriveMaps, MatchesPixelLoop)
{
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const auto t = random_tensor(rng, 3, 4, 4);
        const auto [labels, probs] = derive_maps(t);
        ASSERT_EQ(labels.height(), 4);
        ASSERT_EQ(labels.width(), 4);
        for (int y = 0; y < 4; ++y) {
            for (int x = 0; x < 4; ++x) {
                int best = 0;
                for (int c = 1; c < 3; ++c)
                    if (t.at(c, y, x) > t.at(best, y, x)) best = c;
                EXPECT_EQ(labels.values()(y, x), best);
                EXPECT_EQ(probs.values()(y, x), t.at(best, y, x));
            }
        }
    }
}

TEST(DeriveMaps, MaxOfSimplexIsAtLeastOneOverC)
{
    std::mt19937_64 rng(2);
    for (int C : {2, 5, 20}) {
        const auto probs = derive_maps(random_tensor(rng, C, 6, 7)).second;
        EXPECT_GE(probs.values().minCoeff(), 1.0f / C - 1e-6f);
        EXPECT_LE(probs.values().maxCoeff(), 1.0f);
    }
}

TEST(DeriveMaps, IsDeterministic)
{
    std::mt19937_64 rng(3);
    const auto t = random_tensor(rng, 4, 9, 5);
    const auto a = derive_maps(t);
    const auto b = derive_maps(t);
    EXPECT_TRUE((a.first.values() == b.first.values()).all());
    EXPECT_TRUE((a.second.values() == b.second.values()).all());
}

TEST(ProbabilityTensor, RejectsInvalidInput)
{
    EXPECT_THROW(column({1.0f}), ValidationError);               // C < 2
    EXPECT_THROW(column({0.5f, 0.6f}), ValidationError);         // sum 1.1
    EXPECT_THROW(column({-0.1f, 1.1f}), ValidationError);        // outside [0,1]
    EXPECT_THROW(column({std::nanf(""), 1.0f}), ValidationError);
    EXPECT_NO_THROW(column({0.49996f, 0.5f}));                   // within 1e-4
    EXPECT_THROW(ProbabilityTensor(2, 2, 2, ProbabilityTensor::Values::Constant(2, 3, 0.5f)), ValidationError);
    EXPECT_THROW(ProbabilityTensor(2, 0, 2, ProbabilityTensor::Values(2, 0)), ValidationError);
}

TEST(ProbabilityTensor, PlaneAndCrop)
{
    std::mt19937_64 rng(4);
    const auto t = random_tensor(rng, 3, 5, 6);
    const auto crop = t.crop(1, 2, 3, 2);
    ASSERT_EQ(crop.height(), 3);
    ASSERT_EQ(crop.width(), 2);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 2; ++x) EXPECT_EQ(crop.at(c, y, x), t.at(c, y + 1, x + 2));
    EXPECT_EQ(t.plane(2)(4, 5), t.at(2, 4, 5));
}

TEST(ProbabilityMap, RejectsOutOfRange)
{
    EXPECT_THROW(ProbabilityMap(Plane<float>::Constant(2, 2, 1.5f)), ValidationError);
    EXPECT_THROW(ProbabilityMap(Plane<float>(0, 0)), ValidationError);
}

TEST(Box, IntersectionAndIou)
{
    const Box a{0, 0, 4, 4};
    const Box b{2, 2, 4, 4};
    EXPECT_EQ(intersect(a, b), (Box{2, 2, 2, 2}));
    EXPECT_DOUBLE_EQ(box_iou(a, b), 4.0 / 28.0);
    EXPECT_EQ(intersect(a, Box{10, 10, 1, 1}).area(), 0);
    EXPECT_DOUBLE_EQ(box_iou(a, a), 1.0);
}

TEST(QualityWeights, DefaultsAndValidation)
{
    const QualityWeights w;
    EXPECT_EQ(w, QualityWeights(1, 1, 1));
    EXPECT_THROW(QualityWeights(0, 0, 0), ValidationError);
    EXPECT_THROW(QualityWeights(-1, 1, 1), ValidationError);
    EXPECT_THROW(QualityWeights(std::nan(""), 1, 1), ValidationError);
    EXPECT_EQ(QualityWeights::parse("1,0.5,3"), QualityWeights(1, 0.5, 3));
    EXPECT_THROW(QualityWeights::parse("1,2"), ValidationError);
    EXPECT_THROW(QualityWeights::parse("1,x,2"), ValidationError);
    EXPECT_THROW(QualityWeights::parse("1,2,3,4"), ValidationError);
}

TEST(InstanceRecord, DerivesMapsLazilyAndSharesCache)
{
    std::mt19937_64 rng(5);
    const auto t = random_tensor(rng, 3, 4, 5);
    const InstanceRecord rec("a", "img", Box{1, 1, 5, 4}, 0.9, 0.8, t);
    const InstanceRecord copy = rec;
    const auto& maps = rec.maps();
    EXPECT_EQ(&maps, &copy.maps());
    EXPECT_TRUE((maps.labels.values() == derive_maps(t).first.values()).all());
}

TEST(InstanceRecord, MapsAreSafeToDeriveConcurrently)
{
    std::mt19937_64 rng(6);
    const InstanceRecord rec("a", "img", Box{0, 0, 30, 30}, 0.9, 0.8, random_tensor(rng, 4, 30, 30));
    std::vector<const InstanceRecord::Maps*> seen(8);
    {
        std::vector<std::jthread> threads;
        for (int k = 0; k < 8; ++k) threads.emplace_back([&, k] { seen[k] = &rec.maps(); });
    }
    for (auto* p : seen) EXPECT_EQ(p, seen.front());
}

TEST(InstanceRecord, ValidatesFields)
{
    std::mt19937_64 rng(7);
    const auto t = random_tensor(rng, 2, 3, 3);
    EXPECT_THROW(InstanceRecord("a", "i", Box{0, 0, 3, 3}, 1.5, 0.5, t), ValidationError);
    EXPECT_THROW(InstanceRecord("a", "i", Box{0, 0, 3, 3}, 0.5, -0.1, t), ValidationError);
    EXPECT_THROW(InstanceRecord("a", "i", Box{0, 0, 4, 3}, 0.5, 0.5, t), ValidationError);
    EXPECT_THROW(InstanceRecord("a", "i", Box{0, 0, 0, 3}, 0.5, 0.5, t), ValidationError);
    EXPECT_NO_THROW(InstanceRecord("a", "i", Box{0, 0, 3, 3}, 0.5, std::nullopt, t));
}

TEST(InstanceRecord, ClippingCropsThePayload)
{
    std::mt19937_64 rng(8);
    const auto t = random_tensor(rng, 3, 4, 6);
    const InstanceRecord rec("a", "img", Box{-2, 3, 6, 4}, 0.9, 0.8, t);
    const InstanceRecord clipped = rec.clipped(5, 3);
    EXPECT_EQ(clipped.box(), (Box{0, 3, 3, 2}));
    ASSERT_NE(clipped.tensor(), nullptr);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 3; ++x) EXPECT_EQ(clipped.tensor()->at(c, y, x), t.at(c, y, x + 2));
    EXPECT_THROW(rec.clipped(3, 3), ValidationError);  // entirely below the image
}

TEST(InstanceRecord, ClippingCropsMapPayload)
{
    LabelPlane labels(2, 3);
    labels << 1, 2, 3, 4, 5, 6;
    const InstanceRecord rec("a", "img", Box{1, 0, 3, 2}, 0.9, 0.8, LabelMap(labels),
                             ProbabilityMap(Plane<float>::Constant(2, 3, 0.9f)));
    const auto clipped = rec.clipped(2, 3);
    EXPECT_EQ(clipped.box(), (Box{1, 0, 2, 2}));
    EXPECT_EQ(clipped.maps().labels.values()(1, 1), 5);
}

TEST(GroundTruthInstance, TightBoxFromImageLabels)
{
    LabelPlane image = LabelPlane::Zero(6, 7);
    image(1, 2) = 3;
    image(4, 5) = 1;
    const auto gt = GroundTruthInstance::from_image_labels("g", "img", image);
    EXPECT_EQ(gt.box(), (Box{2, 1, 4, 4}));
    EXPECT_EQ(gt.labels().values()(0, 0), 3);
    EXPECT_EQ(gt.labels().values()(3, 3), 1);
    EXPECT_THROW(GroundTruthInstance::from_image_labels("g", "img", LabelPlane::Zero(3, 3)), ValidationError);
}

TEST(ImageCanvas, SemanticMustBeBackgroundWhereUnowned)
{
    LabelPlane sem = LabelPlane::Zero(2, 2);
    IndexPlane idx = IndexPlane::Constant(2, 2, -1);
    sem(0, 0) = 1;
    EXPECT_THROW(ImageCanvas("img", sem, idx), ValidationError);
    idx(0, 0) = 0;
    EXPECT_NO_THROW(ImageCanvas("img", sem, idx));
    EXPECT_THROW(ImageCanvas("img", sem, IndexPlane::Constant(3, 2, 0)), ValidationError);
}
