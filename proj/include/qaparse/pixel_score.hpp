#pragma once

#include "qaparse/core_types.hpp"

#include <optional>
#include <vector>

namespace qaparse {

struct PixelScoreConfig {
    double threshold = 0.2;

    /// Throws ValidationError unless 0 <= threshold < 1.
    void validate() const;
};

/// Boolean mask of pixels whose confidence reaches the threshold.
struct HighConfidenceMask {
    MaskPlane bits;
    double threshold = 0.0;
};

template <typename Derived>
HighConfidenceMask high_confidence_mask(const Eigen::ArrayBase<Derived>& probs, double threshold)
{
    return {(probs.derived().template cast<double>() >= threshold), threshold};
}

/// Mask restricted to the pixels predicted as `category`.
template <typename Derived>
HighConfidenceMask high_confidence_mask(const LabelPlane& labels, const Eigen::ArrayBase<Derived>& probs,
                                        int category, double threshold)
{
    return {(labels == std::uint8_t(category)) && (probs.derived().template cast<double>() >= threshold),
            threshold};
}

/// Mean confidence over the high-confidence mask; 0 when the mask is empty.
template <typename Derived>
double instance_pixel_score(const Eigen::ArrayBase<Derived>& probs, const PixelScoreConfig& config)
{
    const auto p = probs.derived().template cast<double>();
    const auto hcm = (p >= config.threshold);
    const Eigen::Index count = hcm.count();
    if (count == 0) return 0.0;
    return hcm.select(p, 0.0).sum() / double(count);
}

template <typename Scalar>
double instance_pixel_score(const ProbabilityMapT<Scalar>& probs, const PixelScoreConfig& config)
{
    return instance_pixel_score(probs.values(), config);
}

/// Per-category pixel scores of one instance.
///
/// Indexed by category; background (0) is never scored. Categories without
/// any predicted pixel are not `present` and have no score. `padded()` gives
/// the dense layout where such categories are filled with a constant (1.0
/// reproduces a ones-initialized score vector).
class CategoryPixelScores {
public:
    CategoryPixelScores(Eigen::ArrayXd scores, std::vector<bool> present);

    int num_categories() const { return int(scores_.size()); }
    bool present(int category) const;
    std::optional<double> score(int category) const;
    std::vector<int> present_categories() const;

    /// Scores for categories 1..C-1 at positions 0..C-2.
    Eigen::ArrayXd padded(double absent_value = 1.0) const;

private:
    Eigen::ArrayXd scores_;      // size C, absent and background entries are 0
    std::vector<bool> present_;  // size C, present_[0] is always false
};

/// Category pixel scores from an argmax label map and its confidence map.
template <typename Derived>
CategoryPixelScores category_pixel_scores(const LabelPlane& labels, const Eigen::ArrayBase<Derived>& probs,
                                          int num_categories, const PixelScoreConfig& config)
{
    if (num_categories < 2 || num_categories > kMaxCategories)
        throw ValidationError("category pixel scores: category count must be in [2, 256]");
    if (labels.rows() != probs.rows() || labels.cols() != probs.cols())
        throw ValidationError("category pixel scores: label map and probability map sizes differ");

    std::vector<double> sum(num_categories, 0.0);
    std::vector<long> hits(num_categories, 0);
    std::vector<bool> present(num_categories, false);
    const auto& p = probs.derived();
    for (Eigen::Index y = 0; y < labels.rows(); ++y) {
        for (Eigen::Index x = 0; x < labels.cols(); ++x) {
            const int c = labels(y, x);
            if (c >= num_categories)
                throw ValidationError("category pixel scores: label " + std::to_string(c) +
                                      " exceeds category count");
            present[c] = true;
            const double v = static_cast<double>(p(y, x));
            if (v >= config.threshold) {
                sum[c] += v;
                ++hits[c];
            }
        }
    }
    present[0] = false;
    Eigen::ArrayXd scores = Eigen::ArrayXd::Zero(num_categories);
    for (int c = 1; c < num_categories; ++c) {
        if (hits[c] > 0) scores(c) = sum[c] / double(hits[c]);
    }
    return CategoryPixelScores(std::move(scores), std::move(present));
}

template <typename Scalar>
CategoryPixelScores category_pixel_scores(const LabelMap& labels, const ProbabilityMapT<Scalar>& probs,
                                          int num_categories, const PixelScoreConfig& config)
{
    return category_pixel_scores(labels.values(), probs.values(), num_categories, config);
}

} // namespace qaparse
