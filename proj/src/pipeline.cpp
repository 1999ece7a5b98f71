#include "qaparse/pipeline.hpp"

#include "qaparse/parallel.hpp"

#include <json.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_map>

namespace qaparse {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

RawScores compute_raw_scores(const InstanceRecord& record, int num_categories, const PixelScoreConfig& config)
{
    const auto& maps = record.maps();
    return RawScores{record.box_score(), record.iou_score(), instance_pixel_score(maps.probs, config),
                     category_pixel_scores(maps.labels, maps.probs, num_categories, config)};
}

namespace {

// Instance indices of a manifest sorted by (image_id, instance_id).
std::vector<std::size_t> canonical_order(const Manifest& manifest)
{
    std::vector<std::size_t> order(manifest.instances.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = manifest.instances[a];
        const auto& y = manifest.instances[b];
        return std::tie(x.image_id, x.instance_id) < std::tie(y.image_id, y.instance_id);
    });
    return order;
}

} // namespace

std::vector<ScoredInstance> score_manifest(const Manifest& manifest, const PixelScoreConfig& config,
                                           const QualityWeights& weights, int jobs)
{
    config.validate();
    const auto order = canonical_order(manifest);
    std::vector<ScoredInstance> out(order.size());
    parallel_for(order.size(), jobs, [&](std::size_t k) {
        const auto& entry = manifest.instances[order[k]];
        const InstanceRecord record = load_instance(manifest, entry);
        const RawScores raw = compute_raw_scores(record, manifest.num_categories(), config);
        out[k] = ScoredInstance{entry.image_id, entry.instance_id,
                                score_instance(record, raw.parts, raw.instance_pixel, weights)};
    });
    return out;
}

void write_scores_file(const fs::path& path, const ScoresFile& scores)
{
    ordered_json doc;
    doc["version"] = 1;
    doc["manifest"] = scores.manifest;
    doc["threshold"] = scores.threshold;
    doc["weights"] = {scores.weights.alpha(), scores.weights.beta(), scores.weights.gamma()};
    doc["instances"] = ordered_json::array();
    for (const auto& s : scores.instances) {
        ordered_json parts = ordered_json::object();
        for (const auto& [c, v] : s.score.part_scores) parts[std::to_string(c)] = v;
        doc["instances"].push_back(ordered_json{{"image_id", s.image_id},
                                                {"instance_id", s.instance_id},
                                                {"instance_score", s.score.instance_score},
                                                {"part_scores", std::move(parts)}});
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("writing " + path.string() + " failed");
}

ScoresFile read_scores_file(const fs::path& path)
{
    if (!fs::is_regular_file(path)) throw IoError("scores file not found: " + path.string());
    ordered_json doc;
    try {
        std::ifstream in(path);
        doc = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    ScoresFile out;
    out.base_dir = path.parent_path();
    try {
        if (doc.at("version").get<int>() != 1) throw FormatError(path.string() + ": unsupported version");
        out.manifest = doc.at("manifest").get<std::string>();
        out.threshold = doc.at("threshold").get<double>();
        const auto w = doc.at("weights").get<std::vector<double>>();
        if (w.size() != 3) throw FormatError(path.string() + ": weights must have three entries");
        out.weights = QualityWeights(w[0], w[1], w[2]);
        for (const auto& node : doc.at("instances")) {
            ScoredInstance s;
            s.image_id = node.at("image_id").get<std::string>();
            s.instance_id = node.at("instance_id").get<std::string>();
            s.score.instance_score = checked_unit(node.at("instance_score").get<double>(), s.instance_id);
            for (const auto& [key, value] : node.at("part_scores").items())
                s.score.part_scores[std::stoi(key)] = checked_unit(value.get<double>(), s.instance_id);
            out.instances.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    } catch (const std::invalid_argument&) {
        throw FormatError(path.string() + ": part score keys must be category indices");
    }
    return out;
}

namespace {

struct ImageSlots {
    std::vector<std::size_t> images;                // gt manifest image order
    std::vector<std::vector<std::size_t>> members;  // pred instance indices per image
};

ImageSlots group_predictions(const Manifest& pred, const Manifest& gt)
{
    if (pred.categories != gt.categories)
        throw ValidationError("prediction and ground-truth manifests declare different categories");
    std::unordered_map<std::string, std::size_t> slot;
    ImageSlots out;
    for (std::size_t i = 0; i < gt.images.size(); ++i) {
        if (!gt.images[i].gt_path)
            throw ValidationError("image " + gt.images[i].image_id + ": no ground truth in manifest");
        slot.emplace(gt.images[i].image_id, i);
        out.images.push_back(i);
    }
    out.members.resize(gt.images.size());
    for (std::size_t k = 0; k < pred.instances.size(); ++k) {
        const auto& e = pred.instances[k];
        const auto it = slot.find(e.image_id);
        if (it == slot.end())
            throw ValidationError("prediction " + e.instance_id + " refers to image '" + e.image_id +
                                  "' without ground truth");
        const auto& pi = pred.image(e.image_id);
        const auto& gi = gt.images[it->second];
        if (pi.height != gi.height || pi.width != gi.width)
            throw ValidationError("image " + e.image_id + ": size differs between manifests");
        out.members[it->second].push_back(k);
    }
    return out;
}

EvalImage make_eval_image(const Manifest& gt, const ImageEntry& entry)
{
    ImageCanvas canvas = load_gt_canvas(gt, entry);
    auto humans = gt_instances_from_canvas(canvas);
    return EvalImage{entry.image_id, entry.height, entry.width, {}, std::move(humans), std::move(canvas)};
}

} // namespace

std::vector<EvalImage> load_eval_corpus(const Manifest& pred, const Manifest& gt, int jobs)
{
    const ImageSlots slots = group_predictions(pred, gt);
    std::vector<std::optional<EvalImage>> images(gt.images.size());
    parallel_for(gt.images.size(), jobs, [&](std::size_t i) {
        EvalImage image = make_eval_image(gt, gt.images[i]);
        for (std::size_t k : slots.members[i]) {
            const InstanceRecord record = load_instance(pred, pred.instances[k]);
            image.preds.push_back(PredictedInstance{record.instance_id(), record.box(), record.maps().labels});
        }
        images[i] = std::move(image);
    });
    std::vector<EvalImage> out;
    out.reserve(images.size());
    for (auto& img : images) out.push_back(std::move(*img));
    return out;
}

CorpusScores align_scores(std::span<const EvalImage> images, const std::vector<ScoredInstance>& scored)
{
    std::unordered_map<std::string, const ScoredInstance*> by_id;
    for (const auto& s : scored) {
        if (!by_id.emplace(s.instance_id, &s).second)
            throw ValidationError("scores file lists instance " + s.instance_id + " twice");
    }
    CorpusScores out(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        for (const auto& p : images[i].preds) {
            const auto it = by_id.find(p.instance_id);
            if (it == by_id.end()) throw ValidationError("no score for prediction " + p.instance_id);
            if (it->second->image_id != images[i].image_id)
                throw ValidationError("score for " + p.instance_id + " names a different image");
            out[i].push_back(it->second->score);
        }
    }
    return out;
}

ScoredCorpus load_scored_corpus(const Manifest& pred, const Manifest& gt, const PixelScoreConfig& config, int jobs)
{
    config.validate();
    const ImageSlots slots = group_predictions(pred, gt);
    ScoredCorpus corpus;
    corpus.num_categories = gt.num_categories();
    std::vector<std::optional<EvalImage>> images(gt.images.size());
    corpus.raw.resize(gt.images.size());
    parallel_for(gt.images.size(), jobs, [&](std::size_t i) {
        EvalImage image = make_eval_image(gt, gt.images[i]);
        for (std::size_t k : slots.members[i]) {
            const InstanceRecord record = load_instance(pred, pred.instances[k]);
            corpus.raw[i].push_back(compute_raw_scores(record, corpus.num_categories, config));
            image.preds.push_back(PredictedInstance{record.instance_id(), record.box(), record.maps().labels});
        }
        images[i] = std::move(image);
    });
    for (auto& img : images) corpus.images.push_back(std::move(*img));
    return corpus;
}

} // namespace qaparse
