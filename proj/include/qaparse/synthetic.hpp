#pragma once

#include "qaparse/core_types.hpp"
#include "qaparse/dataset_io.hpp"
#include "qaparse/metrics.hpp"
#include "qaparse/pixel_score.hpp"
#include "qaparse/quality_fusion.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace qaparse {

/// How predictions deviate from ground truth. Every per-instance quantity is
/// drawn independently per instance, so a corpus mixes good and bad outputs.
struct CorruptionConfig {
    int boundary_noise_px = 0;       // max jitter radius; per instance U{0..max}
    double part_swap_prob = 0.0;     // per part: relabel as another part
    int erosion_min_px = 0;          // silhouette erosion, per instance U{min..max}
    int erosion_max_px = 0;
    double confidence_sharpness = 4.0;  // kappa >= 1, higher = peak confidence closer to 1
    double confidence_floor = 0.15;     // confidence on label boundaries
    double boundary_decay_px = 1.5;     // confidence recovery length away from boundaries
};

struct ScoreNoise {
    double box_sigma = 0.0;
    double iou_sigma = 0.0;
};

struct SynthConfig {
    std::uint64_t seed = 0;
    int num_images = 20;
    int humans_min = 1;
    int humans_max = 3;
    int categories = 8;  // background + parts
    int height = 128;
    int width = 96;
    double human_scale_min = 0.35;  // person height as a fraction of canvas height
    double human_scale_max = 0.9;
    double box_margin = 0.05;  // mean detector box padding per side, fraction of box size
    double box_jitter = 0.05;  // detector box side noise, fraction of box size
    bool gt_boxes = false;     // predicted boxes = GT boxes, box_score = 1
    CorruptionConfig corruption;
    ScoreNoise score_noise;

    void validate() const;
};

/// True quality of one prediction, measured against its source GT human.
struct TruthRecord {
    std::string instance_id;
    std::string image_id;
    std::string gt_instance_id;
    double box_iou = 0.0;
    double miou = 0.0;                 // mean part IoU over parts in GT or prediction
    std::map<int, double> part_iou;    // those same parts
};

struct SynthImage {
    std::string image_id;
    int height = 0;
    int width = 0;
    ImageCanvas gt;
    std::vector<InstanceRecord> predictions;
};

struct SynthCorpus {
    std::vector<std::string> categories;
    std::vector<SynthImage> images;
    std::vector<TruthRecord> truth;  // one per prediction, in image then prediction order
};

/// Per-image sub-seed: splitmix64 of (seed + golden * (index + 1)).
std::uint64_t image_seed(std::uint64_t seed, std::size_t image_index);

/// Deterministic for a given config regardless of `jobs`.
SynthCorpus generate(const SynthConfig& config, int jobs = 1);

enum class PayloadForm { Tensor, Maps };

/// Writes manifest.json, truth.json, gt/ and pred/ under `dir`.
Manifest write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir, PayloadForm form,
                      int jobs = 1);

void write_truth(const std::filesystem::path& path, std::span<const TruthRecord> truth);
std::vector<TruthRecord> read_truth(const std::filesystem::path& path);

std::vector<EvalImage> to_eval_corpus(const SynthCorpus& corpus);
ScoredCorpus to_scored_corpus(const SynthCorpus& corpus, const PixelScoreConfig& config, int jobs = 1);

/// Spearman rank correlation (average ranks on ties). Throws with fewer than
/// 3 samples; returns 0 when either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

struct CorrelationRow {
    std::string score;   // e.g. "box_score", "pixel@0.20", "fused"
    std::string target;  // "miou" or "part_iou"
    double rho = 0.0;
    std::size_t samples = 0;
};

/// Rank correlation of each candidate score with the true quality: box,
/// IoU, instance pixel score at each threshold and the fused score against
/// instance mIoU; category pixel scores at each threshold against part IoU.
std::vector<CorrelationRow> correlation_report(std::span<const InstanceRecord> predictions, int num_categories,
                                               std::span<const TruthRecord> truth,
                                               std::span<const double> thresholds, const QualityWeights& weights,
                                               const PixelScoreConfig& fused_config, int jobs = 1);

} // namespace qaparse
