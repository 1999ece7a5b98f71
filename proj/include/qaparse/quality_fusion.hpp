#pragma once

#include "qaparse/core_types.hpp"
#include "qaparse/metrics.hpp"
#include "qaparse/pixel_score.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <vector>

namespace qaparse {

/// Weighted geometric mean of box, IoU and pixel scores:
///
///     S_q = (S_b^alpha * S_i^beta * S_p^gamma)^(1 / (alpha + beta + gamma))
///
/// Factors with weight 0 are left out entirely, so (1,0,0) returns s_b
/// unchanged. Any positively weighted factor equal to 0 makes the result 0.
/// The result is clamped to the range of the positively weighted inputs.
template <std::floating_point Scalar>
Scalar fuse(Scalar s_b, Scalar s_i, Scalar s_p, const QualityWeights& weights)
{
    checked_unit(double(s_b), "box score");
    checked_unit(double(s_i), "IoU score");
    checked_unit(double(s_p), "pixel score");

    const Scalar values[3] = {s_b, s_i, s_p};
    const double exponents[3] = {weights.alpha(), weights.beta(), weights.gamma()};
    const double total = weights.sum();

    Scalar lo = Scalar(1);
    Scalar hi = Scalar(0);
    int active = 0;
    double log_sum = 0.0;
    for (int k = 0; k < 3; ++k) {
        if (exponents[k] == 0.0) continue;
        ++active;
        lo = std::min(lo, values[k]);
        hi = std::max(hi, values[k]);
        if (values[k] == Scalar(0)) return Scalar(0);
        log_sum += (exponents[k] / total) * std::log(double(values[k]));
    }
    if (lo == hi) return lo;
    return std::clamp(Scalar(std::exp(log_sum)), lo, hi);
}

/// Elementwise fusion of three equally sized score arrays.
template <typename DerivedB, typename DerivedI, typename DerivedP>
Eigen::ArrayXd fuse(const Eigen::ArrayBase<DerivedB>& s_b, const Eigen::ArrayBase<DerivedI>& s_i,
                    const Eigen::ArrayBase<DerivedP>& s_p, const QualityWeights& weights)
{
    if (s_b.size() != s_i.size() || s_b.size() != s_p.size())
        throw ValidationError("fuse: score arrays differ in length");
    Eigen::ArrayXd out(s_b.size());
    for (Eigen::Index k = 0; k < out.size(); ++k)
        out(k) = fuse(double(s_b.derived()(k)), double(s_i.derived()(k)), double(s_p.derived()(k)), weights);
    return out;
}

/// Instance score and per-part scores of one prediction. Parts reuse the
/// instance's box and IoU scores; only the pixel score varies per part.
/// A missing IoU score is an error unless beta is 0.
QualityScore score_instance(double box_score, std::optional<double> iou_score, const CategoryPixelScores& parts,
                            double instance_pixel_score, const QualityWeights& weights);

QualityScore score_instance(const InstanceRecord& record, const CategoryPixelScores& parts,
                            double instance_pixel_score, const QualityWeights& weights);

/// Raw, unfused quality inputs of one prediction.
struct RawScores {
    double box_score = 0.0;
    std::optional<double> iou_score;
    double instance_pixel = 0.0;
    CategoryPixelScores parts;
};

/// Predictions with ground truth and raw scores: the input of a weight sweep.
struct ScoredCorpus {
    int num_categories = 0;
    std::vector<EvalImage> images;
    std::vector<std::vector<RawScores>> raw;  // aligned with images[i].preds
};

CorpusScores fuse_corpus(const ScoredCorpus& corpus, const QualityWeights& weights);

enum class SweepObjective { ApP, ApP50, ApR, ApR50 };

SweepObjective parse_objective(const std::string& name);

struct SweepRow {
    QualityWeights weights;
    double ap_p = 0.0;
    double ap_p50 = 0.0;
    double ap_r = 0.0;
    double ap_r50 = 0.0;

    double objective(SweepObjective which) const;
};

/// alpha, beta, gamma in {0, 0.5, 1, 2, 3}, without the all-zero triple.
std::vector<QualityWeights> default_weight_grid();

/// The eight weight triples of the reference ablation: single scores, pairs,
/// equal weights and (1, 0.5, 3).
std::vector<QualityWeights> ablation_weight_grid();

/// Parses "a,b,c;a,b,c;..." or the preset names "default" / "ablation".
std::vector<QualityWeights> parse_weight_grid(const std::string& text);

/// Re-fuses every prediction with each candidate, evaluates AP^p and AP^r and
/// returns the candidates sorted by the objective (descending), ties broken
/// by ascending (alpha, beta, gamma).
std::vector<SweepRow> sweep_weights(const ScoredCorpus& corpus, std::span<const QualityWeights> grid,
                                    SweepObjective objective, const MatchThresholds& thresholds, int jobs = 1);

} // namespace qaparse
