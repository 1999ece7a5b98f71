#include "qaparse/quality_fusion.hpp"

#include "qaparse/parallel.hpp"

#include <sstream>
#include <tuple>

namespace qaparse {

QualityScore score_instance(double box_score, std::optional<double> iou_score, const CategoryPixelScores& parts,
                            double instance_pixel_score, const QualityWeights& weights)
{
    if (!iou_score && weights.beta() > 0.0)
        throw ValidationError("IoU score missing but the IoU weight is positive");
    // With beta == 0 the IoU factor is dropped, so any placeholder works.
    const double s_i = iou_score.value_or(1.0);

    QualityScore out;
    out.instance_score = fuse(box_score, s_i, instance_pixel_score, weights);
    for (int c : parts.present_categories()) out.part_scores[c] = fuse(box_score, s_i, *parts.score(c), weights);
    return out;
}

QualityScore score_instance(const InstanceRecord& record, const CategoryPixelScores& parts,
                            double instance_pixel_score, const QualityWeights& weights)
{
    try {
        return score_instance(record.box_score(), record.iou_score(), parts, instance_pixel_score, weights);
    } catch (const ValidationError& e) {
        throw ValidationError("instance " + record.instance_id() + ": " + e.what());
    }
}

CorpusScores fuse_corpus(const ScoredCorpus& corpus, const QualityWeights& weights)
{
    CorpusScores out(corpus.raw.size());
    for (std::size_t i = 0; i < corpus.raw.size(); ++i) {
        out[i].reserve(corpus.raw[i].size());
        for (const auto& r : corpus.raw[i])
            out[i].push_back(score_instance(r.box_score, r.iou_score, r.parts, r.instance_pixel, weights));
    }
    return out;
}

SweepObjective parse_objective(const std::string& name)
{
    if (name == "ap_p") return SweepObjective::ApP;
    if (name == "ap_p_50") return SweepObjective::ApP50;
    if (name == "ap_r") return SweepObjective::ApR;
    if (name == "ap_r_50") return SweepObjective::ApR50;
    throw ValidationError("unknown sweep objective '" + name + "' (expected ap_p, ap_p_50, ap_r or ap_r_50)");
}

double SweepRow::objective(SweepObjective which) const
{
    switch (which) {
    case SweepObjective::ApP: return ap_p;
    case SweepObjective::ApP50: return ap_p50;
    case SweepObjective::ApR: return ap_r;
    case SweepObjective::ApR50: return ap_r50;
    }
    return ap_r;
}

std::vector<QualityWeights> default_weight_grid()
{
    static constexpr double kLevels[] = {0.0, 0.5, 1.0, 2.0, 3.0};
    std::vector<QualityWeights> grid;
    for (double a : kLevels)
        for (double b : kLevels)
            for (double g : kLevels)
                if (a + b + g > 0.0) grid.emplace_back(a, b, g);
    return grid;
}

std::vector<QualityWeights> ablation_weight_grid()
{
    return {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}, {1, 0.5, 3}};
}

std::vector<QualityWeights> parse_weight_grid(const std::string& text)
{
    if (text == "default") return default_weight_grid();
    if (text == "ablation") return ablation_weight_grid();
    std::vector<QualityWeights> grid;
    std::stringstream in(text);
    std::string token;
    while (std::getline(in, token, ';')) {
        if (!token.empty()) grid.push_back(QualityWeights::parse(token));
    }
    if (grid.empty()) throw ValidationError("weight grid is empty");
    return grid;
}

std::vector<SweepRow> sweep_weights(const ScoredCorpus& corpus, std::span<const QualityWeights> grid,
                                    SweepObjective objective, const MatchThresholds& thresholds, int jobs)
{
    if (grid.empty()) throw ValidationError("weight grid is empty");
    std::size_t predictions = 0;
    for (const auto& r : corpus.raw) predictions += r.size();
    if (corpus.images.empty() || predictions == 0) throw ValidationError("sweep corpus is empty");

    const auto overlaps = compute_all_overlaps(corpus.images, corpus.num_categories, jobs);
    std::vector<SweepRow> rows(grid.size());
    parallel_for(grid.size(), jobs, [&](std::size_t k) {
        const CorpusScores scores = fuse_corpus(corpus, grid[k]);
        const auto part = ap_p(overlaps, scores, thresholds);
        const auto region = ap_r(overlaps, scores, thresholds);
        rows[k] = SweepRow{grid[k], part.mean, part.at50, region.mean, region.at50};
    });
    std::stable_sort(rows.begin(), rows.end(), [objective](const SweepRow& a, const SweepRow& b) {
        const double x = a.objective(objective);
        const double y = b.objective(objective);
        if (x != y) return x > y;
        return std::make_tuple(a.weights.alpha(), a.weights.beta(), a.weights.gamma()) <
               std::make_tuple(b.weights.alpha(), b.weights.beta(), b.weights.gamma());
    });
    return rows;
}

} // namespace qaparse
