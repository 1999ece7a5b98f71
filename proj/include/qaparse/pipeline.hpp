#pragma once

#include "qaparse/dataset_io.hpp"
#include "qaparse/metrics.hpp"
#include "qaparse/pixel_score.hpp"
#include "qaparse/quality_fusion.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace qaparse {

/// Pixel scores of one prediction (no fusion yet).
RawScores compute_raw_scores(const InstanceRecord& record, int num_categories, const PixelScoreConfig& config);

struct ScoredInstance {
    std::string image_id;
    std::string instance_id;
    QualityScore score;
};

/// Scores every instance of a manifest, ordered by (image_id, instance_id).
std::vector<ScoredInstance> score_manifest(const Manifest& manifest, const PixelScoreConfig& config,
                                           const QualityWeights& weights, int jobs = 1);

/// Contents of a scores file.
struct ScoresFile {
    std::string manifest;  // prediction manifest, relative to the scores file
    double threshold = 0.2;
    QualityWeights weights;
    std::vector<ScoredInstance> instances;
    std::filesystem::path base_dir;
};

void write_scores_file(const std::filesystem::path& path, const ScoresFile& scores);
ScoresFile read_scores_file(const std::filesystem::path& path);

/// Pairs the predictions of `pred` with the ground truth of `gt`. Every image
/// of `gt` must carry ground truth and every predicted image must exist in
/// `gt`. Images follow `gt` order, predictions follow `pred` order.
std::vector<EvalImage> load_eval_corpus(const Manifest& pred, const Manifest& gt, int jobs = 1);

/// Aligns a scores file with a corpus; every prediction needs a score.
CorpusScores align_scores(std::span<const EvalImage> images, const std::vector<ScoredInstance>& scored);

/// Corpus plus raw scores for weight sweeps (prediction and GT in one manifest
/// or split across two).
ScoredCorpus load_scored_corpus(const Manifest& pred, const Manifest& gt, const PixelScoreConfig& config,
                                int jobs = 1);

} // namespace qaparse
