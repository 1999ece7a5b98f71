#include "qaparse/metrics.hpp"

#include "qaparse/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace qaparse {

MatchThresholds::MatchThresholds(std::vector<double> values) : values_(std::move(values))
{
    if (values_.empty()) throw ValidationError("match thresholds: empty list");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!(values_[i] > 0.0 && values_[i] < 1.0))
            throw ValidationError("match thresholds must lie in (0,1)");
        if (i > 0 && !(values_[i] > values_[i - 1]))
            throw ValidationError("match thresholds must be strictly increasing");
    }
}

MatchThresholds MatchThresholds::decile()
{
    std::vector<double> v;
    for (int k = 1; k <= 9; ++k) v.push_back(k / 10.0);
    return MatchThresholds(std::move(v));
}

MatchThresholds MatchThresholds::coco()
{
    std::vector<double> v;
    for (int k = 10; k <= 19; ++k) v.push_back(k / 20.0);
    return MatchThresholds(std::move(v));
}

MatchThresholds MatchThresholds::parse(const std::string& text)
{
    if (text == "decile") return decile();
    if (text == "coco") return coco();
    std::vector<double> v;
    std::stringstream in(text);
    std::string token;
    while (std::getline(in, token, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(token, &used));
            if (used != token.size()) throw std::invalid_argument(token);
        } catch (const std::exception&) {
            throw ValidationError("cannot parse match threshold '" + token + "'");
        }
    }
    return MatchThresholds(std::move(v));
}

ImageOverlaps compute_overlaps(const EvalImage& image, int num_categories)
{
    const auto num_pred = Eigen::Index(image.preds.size());
    const auto num_gt = Eigen::Index(image.gts.size());
    const int C = num_categories;

    ImageOverlaps out;
    out.similarity = Eigen::MatrixXd::Zero(num_pred, num_gt);
    out.part_iou.assign(C, Eigen::MatrixXd::Zero(num_pred, num_gt));
    out.pred_present.setConstant(num_pred, C, false);
    out.gt_present.setConstant(num_gt, C, false);

    Eigen::Array<long, Eigen::Dynamic, Eigen::Dynamic> pred_count = decltype(pred_count)::Zero(num_pred, C);
    Eigen::Array<long, Eigen::Dynamic, Eigen::Dynamic> gt_count = decltype(gt_count)::Zero(num_gt, C);

    auto count_labels = [C](const LabelPlane& labels, auto row) {
        for (Eigen::Index i = 0; i < labels.size(); ++i) {
            const int c = labels.data()[i];
            if (c >= C) throw ValidationError(fmt::format("label {} exceeds category count {}", c, C));
            ++row(c);
        }
    };
    for (Eigen::Index p = 0; p < num_pred; ++p) {
        out.pred_ids.push_back(image.preds[p].instance_id);
        count_labels(image.preds[p].labels.values(), pred_count.row(p));
    }
    for (Eigen::Index g = 0; g < num_gt; ++g) {
        out.gt_ids.push_back(image.gts[g].instance_id());
        count_labels(image.gts[g].labels().values(), gt_count.row(g));
    }
    out.pred_present = pred_count > 0;
    out.gt_present = gt_count > 0;
    out.pred_present.col(0).setConstant(false);
    out.gt_present.col(0).setConstant(false);

    std::vector<long> inter(C);
    for (Eigen::Index p = 0; p < num_pred; ++p) {
        const auto& pred = image.preds[p];
        for (Eigen::Index g = 0; g < num_gt; ++g) {
            const auto& gt = image.gts[g];
            std::fill(inter.begin(), inter.end(), 0);
            const Box common = intersect(pred.box, gt.box());
            const auto& pl = pred.labels.values();
            const auto& gl = gt.labels().values();
            for (int y = common.y; y < common.bottom(); ++y) {
                for (int x = common.x; x < common.right(); ++x) {
                    const int a = pl(y - pred.box.y, x - pred.box.x);
                    if (a != 0 && a == gl(y - gt.box().y, x - gt.box().x)) ++inter[a];
                }
            }
            double sum = 0.0;
            int used = 0;
            for (int c = 1; c < C; ++c) {
                if (!out.pred_present(p, c) && !out.gt_present(g, c)) continue;
                const long uni = pred_count(p, c) + gt_count(g, c) - inter[c];
                const double iou = double(inter[c]) / double(uni);
                out.part_iou[c](p, g) = iou;
                sum += iou;
                ++used;
            }
            out.similarity(p, g) = used > 0 ? sum / used : 0.0;
        }
    }
    return out;
}

std::vector<ImageOverlaps> compute_all_overlaps(std::span<const EvalImage> images, int num_categories, int jobs)
{
    std::vector<ImageOverlaps> out(images.size());
    parallel_for(images.size(), jobs, [&](std::size_t i) { out[i] = compute_overlaps(images[i], num_categories); });
    return out;
}

double average_precision(std::span<const char> is_tp, std::size_t num_gt)
{
    if (num_gt == 0 || is_tp.empty()) return 0.0;
    const std::size_t n = is_tp.size();
    std::vector<double> precision(n);
    std::vector<double> recall(n);
    std::size_t tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (is_tp[i]) ++tp;
        precision[i] = double(tp) / double(i + 1);
        recall[i] = double(tp) / double(num_gt);
    }
    for (std::size_t i = n - 1; i-- > 0;) precision[i] = std::max(precision[i], precision[i + 1]);
    double ap = 0.0;
    double previous = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ap += (recall[i] - previous) * precision[i];
        previous = recall[i];
    }
    return ap;
}

namespace {

struct Ranked {
    double score;
    const std::string* id;
    std::size_t image;
    Eigen::Index pred;
};

void rank(std::vector<Ranked>& list)
{
    std::sort(list.begin(), list.end(), [](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score > b.score;
        if (*a.id != *b.id) return *a.id < *b.id;
        if (a.image != b.image) return a.image < b.image;
        return a.pred < b.pred;
    });
}

double checked_score(double score, const std::string& id)
{
    if (!(score >= 0.0 && score <= 1.0))
        throw ValidationError("prediction " + id + ": score missing or outside [0,1]");
    return score;
}

void check_alignment(std::span<const ImageOverlaps> overlaps, const CorpusScores& scores)
{
    if (overlaps.size() != scores.size())
        throw ValidationError("scores do not cover every image");
    for (std::size_t i = 0; i < overlaps.size(); ++i) {
        if (overlaps[i].pred_ids.size() != scores[i].size())
            throw ValidationError("scores do not cover every prediction");
    }
}

// Greedy score-ordered matching. For each ranked prediction the best unmatched
// eligible GT (lowest index on ties) is taken if its overlap reaches the
// threshold. Returns the TP flags in rank order; `owner` receives, per image
// and GT, the matched prediction index or -1.
template <typename Overlap, typename Eligible>
std::vector<char> greedy_match(const std::vector<Ranked>& ranked, std::span<const ImageOverlaps> overlaps,
                               double threshold, Overlap overlap, Eligible eligible,
                               std::vector<std::vector<Eigen::Index>>* owner = nullptr)
{
    std::vector<std::vector<char>> matched(overlaps.size());
    for (std::size_t i = 0; i < overlaps.size(); ++i) matched[i].assign(overlaps[i].gt_ids.size(), 0);
    if (owner) {
        owner->assign(overlaps.size(), {});
        for (std::size_t i = 0; i < overlaps.size(); ++i) (*owner)[i].assign(overlaps[i].gt_ids.size(), -1);
    }
    std::vector<char> is_tp(ranked.size(), 0);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        const auto& item = ranked[r];
        const auto& ov = overlaps[item.image];
        Eigen::Index best = -1;
        double best_value = -1.0;
        for (Eigen::Index g = 0; g < Eigen::Index(ov.gt_ids.size()); ++g) {
            if (matched[item.image][g] || !eligible(ov, g)) continue;
            const double v = overlap(ov, item.pred, g);
            if (v > best_value) {
                best_value = v;
                best = g;
            }
        }
        if (best >= 0 && best_value >= threshold) {
            matched[item.image][best] = 1;
            is_tp[r] = 1;
            if (owner) (*owner)[item.image][best] = item.pred;
        }
    }
    return is_tp;
}

double mean_of(const std::vector<double>& v)
{
    if (v.empty()) return 0.0;
    double sum = 0.0;
    for (double x : v) sum += x;
    return sum / double(v.size());
}

} // namespace

PartApResult ap_p(std::span<const ImageOverlaps> overlaps, const CorpusScores& scores,
                  const MatchThresholds& thresholds, std::vector<std::string>* warnings)
{
    check_alignment(overlaps, scores);
    PartApResult result;
    result.per_threshold.assign(thresholds.size(), 0.0);

    std::vector<Ranked> ranked;
    std::size_t num_gt = 0;
    for (std::size_t i = 0; i < overlaps.size(); ++i) {
        num_gt += overlaps[i].gt_ids.size();
        for (Eigen::Index p = 0; p < Eigen::Index(overlaps[i].pred_ids.size()); ++p) {
            const auto& id = overlaps[i].pred_ids[p];
            ranked.push_back({checked_score(scores[i][p].instance_score, id), &id, i, p});
        }
    }
    if (num_gt == 0) {
        if (warnings) warnings->push_back("AP^p: no ground-truth humans, reporting 0");
        return result;
    }
    rank(ranked);

    const auto similarity = [](const ImageOverlaps& ov, Eigen::Index p, Eigen::Index g) {
        return ov.similarity(p, g);
    };
    const auto any_gt = [](const ImageOverlaps&, Eigen::Index) { return true; };

    for (std::size_t t = 0; t < thresholds.size(); ++t) {
        const auto tp = greedy_match(ranked, overlaps, thresholds.values()[t], similarity, any_gt);
        result.per_threshold[t] = average_precision(tp, num_gt);
    }
    result.mean = mean_of(result.per_threshold);

    std::vector<std::vector<Eigen::Index>> owner;
    const auto tp50 = greedy_match(ranked, overlaps, 0.5, similarity, any_gt, &owner);
    result.at50 = average_precision(tp50, num_gt);

    double pcp_sum = 0.0;
    for (std::size_t i = 0; i < overlaps.size(); ++i) {
        const auto& ov = overlaps[i];
        for (Eigen::Index g = 0; g < Eigen::Index(ov.gt_ids.size()); ++g) {
            const Eigen::Index p = owner[i][g];
            if (p < 0) continue;
            int parts = 0;
            int good = 0;
            for (std::size_t c = 1; c < ov.part_iou.size(); ++c) {
                if (!ov.gt_present(g, Eigen::Index(c))) continue;
                ++parts;
                if (ov.part_iou[c](p, g) > 0.5) ++good;
            }
            if (parts > 0) pcp_sum += double(good) / double(parts);
        }
    }
    result.pcp50 = pcp_sum / double(num_gt);
    return result;
}

ApResult ap_r(std::span<const ImageOverlaps> overlaps, const CorpusScores& scores, const MatchThresholds& thresholds,
              std::vector<std::string>* warnings)
{
    check_alignment(overlaps, scores);
    ApResult result;
    result.per_threshold.assign(thresholds.size(), 0.0);
    const std::size_t C = overlaps.empty() ? 0 : overlaps.front().part_iou.size();

    std::vector<std::vector<double>> per_category(thresholds.size());
    std::vector<double> per_category50;
    for (std::size_t c = 1; c < C; ++c) {
        const auto ci = Eigen::Index(c);
        std::size_t num_gt = 0;
        std::vector<Ranked> ranked;
        for (std::size_t i = 0; i < overlaps.size(); ++i) {
            const auto& ov = overlaps[i];
            num_gt += std::size_t(ov.gt_present.col(ci).count());
            for (Eigen::Index p = 0; p < Eigen::Index(ov.pred_ids.size()); ++p) {
                if (!ov.pred_present(p, ci)) continue;
                const auto& parts = scores[i][p].part_scores;
                const auto it = parts.find(int(c));
                if (it == parts.end())
                    throw ValidationError(
                        fmt::format("prediction {}: part score missing for category {}", ov.pred_ids[p], c));
                ranked.push_back({checked_score(it->second, ov.pred_ids[p]), &ov.pred_ids[p], i, p});
            }
        }
        if (num_gt == 0) continue;
        rank(ranked);

        const auto region_iou = [ci](const ImageOverlaps& ov, Eigen::Index p, Eigen::Index g) {
            return ov.part_iou[ci](p, g);
        };
        const auto has_region = [ci](const ImageOverlaps& ov, Eigen::Index g) { return ov.gt_present(g, ci); };
        for (std::size_t t = 0; t < thresholds.size(); ++t) {
            const auto tp = greedy_match(ranked, overlaps, thresholds.values()[t], region_iou, has_region);
            per_category[t].push_back(average_precision(tp, num_gt));
        }
        per_category50.push_back(average_precision(greedy_match(ranked, overlaps, 0.5, region_iou, has_region), num_gt));
    }
    if (per_category50.empty()) {
        if (warnings) warnings->push_back("AP^r: no ground-truth part regions, reporting 0");
        return result;
    }
    for (std::size_t t = 0; t < thresholds.size(); ++t) result.per_threshold[t] = mean_of(per_category[t]);
    result.mean = mean_of(result.per_threshold);
    result.at50 = mean_of(per_category50);
    return result;
}

ImageCanvas paste_instances(const std::string& image_id, int height, int width,
                            std::span<const PredictedInstance> preds, std::span<const double> instance_scores)
{
    if (preds.size() != instance_scores.size())
        throw ValidationError("paste_instances: one score per instance required");
    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (instance_scores[a] != instance_scores[b]) return instance_scores[a] > instance_scores[b];
        if (preds[a].instance_id != preds[b].instance_id) return preds[a].instance_id < preds[b].instance_id;
        return a < b;
    });

    LabelPlane semantic = LabelPlane::Zero(height, width);
    IndexPlane owner = IndexPlane::Constant(height, width, -1);
    for (std::size_t k : order) {
        const auto& pred = preds[k];
        if (pred.labels.height() != pred.box.h || pred.labels.width() != pred.box.w)
            throw ValidationError("instance " + pred.instance_id + ": label map does not match its box");
        if (pred.box.x < 0 || pred.box.y < 0 || pred.box.right() > width || pred.box.bottom() > height)
            throw ValidationError("instance " + pred.instance_id + ": box exceeds the image");
        const auto& labels = pred.labels.values();
        for (int y = 0; y < pred.box.h; ++y) {
            for (int x = 0; x < pred.box.w; ++x) {
                const std::uint8_t c = labels(y, x);
                if (c == 0 || owner(pred.box.y + y, pred.box.x + x) >= 0) continue;
                owner(pred.box.y + y, pred.box.x + x) = std::int32_t(k);
                semantic(pred.box.y + y, pred.box.x + x) = c;
            }
        }
    }
    return ImageCanvas(image_id, std::move(semantic), std::move(owner));
}

namespace {

using Confusion = Eigen::Array<long, Eigen::Dynamic, Eigen::Dynamic>;  // gt x pred

void accumulate_confusion(const ImageCanvas& pred, const ImageCanvas& gt, int C, Confusion& confusion)
{
    if (pred.image_id() != gt.image_id())
        throw ValidationError("semantic scores: image " + pred.image_id() + " paired with " + gt.image_id());
    if (pred.height() != gt.height() || pred.width() != gt.width())
        throw ValidationError("semantic scores: image " + gt.image_id() + " size mismatch");
    const auto& ps = pred.semantic();
    const auto& gs = gt.semantic();
    for (Eigen::Index i = 0; i < ps.size(); ++i) {
        const int a = gs.data()[i];
        const int b = ps.data()[i];
        if (a >= C || b >= C)
            throw ValidationError(fmt::format("semantic scores: label exceeds category count {}", C));
        ++confusion(a, b);
    }
}

SemanticScores summarize(const Confusion& confusion)
{
    const auto C = confusion.rows();
    SemanticScores out;
    out.per_class_iou.assign(std::size_t(C), std::nullopt);
    const long total = confusion.sum();
    if (total == 0) return out;
    long diagonal = 0;
    double recall_sum = 0.0;
    int recall_classes = 0;
    double iou_sum = 0.0;
    int iou_classes = 0;
    for (Eigen::Index c = 0; c < C; ++c) {
        const long tp = confusion(c, c);
        const long gt = confusion.row(c).sum();
        const long pr = confusion.col(c).sum();
        diagonal += tp;
        if (gt > 0) {
            recall_sum += double(tp) / double(gt);
            ++recall_classes;
        }
        if (gt + pr > 0) {
            const double iou = double(tp) / double(gt + pr - tp);
            out.per_class_iou[std::size_t(c)] = iou;
            iou_sum += iou;
            ++iou_classes;
        }
    }
    out.pix_acc = double(diagonal) / double(total);
    out.mean_acc = recall_classes ? recall_sum / recall_classes : 0.0;
    out.miou = iou_classes ? iou_sum / iou_classes : 0.0;
    return out;
}

} // namespace

SemanticScores semantic_scores(std::span<const ImageCanvas> pred, std::span<const ImageCanvas> gt, int num_categories)
{
    if (pred.size() != gt.size()) throw ValidationError("semantic scores: image sets differ");
    Confusion confusion = Confusion::Zero(num_categories, num_categories);
    for (std::size_t i = 0; i < pred.size(); ++i) accumulate_confusion(pred[i], gt[i], num_categories, confusion);
    return summarize(confusion);
}

EvalReport evaluate(std::span<const EvalImage> images, const CorpusScores& scores, int num_categories,
                    const MatchThresholds& thresholds, int jobs)
{
    if (scores.size() != images.size()) throw ValidationError("scores do not cover every image");
    EvalReport report;
    report.thresholds = thresholds.values();
    report.images = images.size();

    std::vector<ImageOverlaps> overlaps(images.size());
    std::vector<Confusion> confusions(images.size());
    parallel_for(images.size(), jobs, [&](std::size_t i) {
        const auto& image = images[i];
        if (scores[i].size() != image.preds.size())
            throw ValidationError("image " + image.image_id + ": scores do not cover every prediction");
        std::vector<double> inst(image.preds.size());
        for (std::size_t p = 0; p < inst.size(); ++p)
            inst[p] = checked_score(scores[i][p].instance_score, image.preds[p].instance_id);
        const ImageCanvas pasted = paste_instances(image.image_id, image.height, image.width, image.preds, inst);
        confusions[i] = Confusion::Zero(num_categories, num_categories);
        accumulate_confusion(pasted, image.gt_canvas, num_categories, confusions[i]);
        overlaps[i] = compute_overlaps(image, num_categories);
    });

    Confusion confusion = Confusion::Zero(num_categories, num_categories);
    for (const auto& c : confusions) confusion += c;
    report.semantic = summarize(confusion);
    for (const auto& image : images) {
        report.pred_instances += image.preds.size();
        report.gt_instances += image.gts.size();
    }
    report.ap_p = ap_p(overlaps, scores, thresholds, &report.warnings);
    report.ap_r = ap_r(overlaps, scores, thresholds, &report.warnings);
    return report;
}

} // namespace qaparse
