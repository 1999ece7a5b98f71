#pragma once

#include "qaparse/core_types.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qaparse {

/// Strictly increasing match thresholds in (0,1).
class MatchThresholds {
public:
    explicit MatchThresholds(std::vector<double> values);

    /// 0.1, 0.2, ..., 0.9
    static MatchThresholds decile();
    /// 0.50, 0.55, ..., 0.95
    static MatchThresholds coco();
    /// "0.1,0.2", or the preset names "decile" / "coco".
    static MatchThresholds parse(const std::string& text);

    const std::vector<double>& values() const { return values_; }
    std::size_t size() const { return values_.size(); }

private:
    std::vector<double> values_;
};

/// One predicted human in image coordinates.
struct PredictedInstance {
    std::string instance_id;
    Box box;
    LabelMap labels;  // box-sized
};

/// Everything the metrics need to know about one image.
struct EvalImage {
    std::string image_id;
    int height = 0;
    int width = 0;
    std::vector<PredictedInstance> preds;
    std::vector<GroundTruthInstance> gts;
    ImageCanvas gt_canvas;
};

/// Final scores, one vector per image aligned with EvalImage::preds.
using CorpusScores = std::vector<std::vector<QualityScore>>;

/// Score-independent overlap statistics of one image.
///
/// Part IoUs are computed between a prediction's own label map and a GT
/// human's label map, both placed in image coordinates.
struct ImageOverlaps {
    std::vector<std::string> pred_ids;
    std::vector<std::string> gt_ids;
    /// pred x gt mean part IoU over categories present in either.
    Eigen::MatrixXd similarity;
    /// part_iou[c] is pred x gt IoU of category c; entry 0 is unused.
    std::vector<Eigen::MatrixXd> part_iou;
    /// pred x C and gt x C: category has at least one pixel.
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> pred_present;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> gt_present;
};

ImageOverlaps compute_overlaps(const EvalImage& image, int num_categories);

struct ApResult {
    std::vector<double> per_threshold;  // aligned with MatchThresholds
    double mean = 0.0;
    double at50 = 0.0;
};

struct PartApResult : ApResult {
    double pcp50 = 0.0;
};

struct SemanticScores {
    double pix_acc = 0.0;
    double mean_acc = 0.0;
    double miou = 0.0;
    /// Per class; nullopt for classes absent from both GT and prediction.
    std::vector<std::optional<double>> per_class_iou;
};

struct EvalReport {
    SemanticScores semantic;
    PartApResult ap_p;
    ApResult ap_r;
    std::vector<double> thresholds;
    std::size_t images = 0;
    std::size_t pred_instances = 0;
    std::size_t gt_instances = 0;
    std::vector<std::string> warnings;
};

/// All-points interpolated average precision of a ranked TP/FP list.
double average_precision(std::span<const char> is_tp, std::size_t num_gt);

/// Pastes predictions into image space; overlapping foreground goes to the
/// higher-scored instance (ties: smaller instance_id).
ImageCanvas paste_instances(const std::string& image_id, int height, int width,
                            std::span<const PredictedInstance> preds, std::span<const double> instance_scores);

SemanticScores semantic_scores(std::span<const ImageCanvas> pred, std::span<const ImageCanvas> gt,
                               int num_categories);

/// Part-based AP and PCP_50. Empty GT gives zeros and appends a warning.
PartApResult ap_p(std::span<const ImageOverlaps> overlaps, const CorpusScores& scores,
                  const MatchThresholds& thresholds, std::vector<std::string>* warnings = nullptr);

/// Region-based AP over part categories.
ApResult ap_r(std::span<const ImageOverlaps> overlaps, const CorpusScores& scores,
              const MatchThresholds& thresholds, std::vector<std::string>* warnings = nullptr);

/// Full report: pastes predictions, computes the semantic scores and both APs.
EvalReport evaluate(std::span<const EvalImage> images, const CorpusScores& scores, int num_categories,
                    const MatchThresholds& thresholds, int jobs = 1);

std::vector<ImageOverlaps> compute_all_overlaps(std::span<const EvalImage> images, int num_categories,
                                                int jobs = 1);

} // namespace qaparse
