#include "qaparse/core_types.hpp"

#include <algorithm>
#include <charconv>
#include <vector>

namespace qaparse {

Box intersect(const Box& a, const Box& b)
{
    const int x0 = std::max(a.x, b.x);
    const int y0 = std::max(a.y, b.y);
    const int x1 = std::min(a.right(), b.right());
    const int y1 = std::min(a.bottom(), b.bottom());
    return Box{x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
}

double box_iou(const Box& a, const Box& b)
{
    const long inter = intersect(a, b).area();
    const long uni = a.area() + b.area() - inter;
    return uni > 0 ? double(inter) / double(uni) : 0.0;
}

double checked_unit(double value, std::string_view what)
{
    if (!(value >= 0.0 && value <= 1.0))
        throw ValidationError(std::string(what) + " must lie in [0,1], got " + std::to_string(value));
    return value;
}

QualityWeights::QualityWeights(double alpha, double beta, double gamma)
    : alpha_(alpha), beta_(beta), gamma_(gamma)
{
    for (double v : {alpha, beta, gamma}) {
        if (!std::isfinite(v) || v < 0.0)
            throw ValidationError("quality weights must be finite and non-negative");
    }
    if (!(alpha + beta + gamma > 0.0))
        throw ValidationError("quality weights must not all be zero");
}

QualityWeights QualityWeights::parse(std::string_view text)
{
    std::vector<double> parts;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        const std::string_view token =
            text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        double value = 0.0;
        const auto* first = token.data();
        const auto* last = token.data() + token.size();
        while (first < last && *first == ' ') ++first;
        while (last > first && last[-1] == ' ') --last;
        const auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc() || ptr != last || first == last)
            throw ValidationError("cannot parse quality weights '" + std::string(text) + "'");
        parts.push_back(value);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    if (parts.size() != 3)
        throw ValidationError("quality weights need exactly three values, got '" + std::string(text) + "'");
    return QualityWeights(parts[0], parts[1], parts[2]);
}

InstanceRecord::InstanceRecord(std::string instance_id, std::string image_id, Box box, double box_score,
                               std::optional<double> iou_score, ProbabilityTensor tensor)
    : InstanceRecord(std::move(instance_id), std::move(image_id), box, box_score, iou_score,
                     std::make_shared<const std::variant<ProbabilityTensor, Maps>>(std::move(tensor)))
{
}

InstanceRecord::InstanceRecord(std::string instance_id, std::string image_id, Box box, double box_score,
                               std::optional<double> iou_score, LabelMap labels, ProbabilityMap probs)
    : InstanceRecord(std::move(instance_id), std::move(image_id), box, box_score, iou_score,
                     std::make_shared<const std::variant<ProbabilityTensor, Maps>>(
                         Maps{std::move(labels), std::move(probs)}))
{
}

InstanceRecord::InstanceRecord(std::string instance_id, std::string image_id, Box box, double box_score,
                               std::optional<double> iou_score,
                               std::shared_ptr<const std::variant<ProbabilityTensor, Maps>> payload)
    : instance_id_(std::move(instance_id)),
      image_id_(std::move(image_id)),
      box_(box),
      box_score_(box_score),
      iou_score_(iou_score),
      payload_(std::move(payload)),
      cache_(std::make_shared<Cache>())
{
    validate();
}

void InstanceRecord::validate() const
{
    if (box_.w <= 0 || box_.h <= 0)
        throw ValidationError("instance " + instance_id_ + ": box width and height must be positive");
    checked_unit(box_score_, "instance " + instance_id_ + " box_score");
    if (iou_score_) checked_unit(*iou_score_, "instance " + instance_id_ + " iou_score");

    int h = 0;
    int w = 0;
    if (const auto* t = std::get_if<ProbabilityTensor>(payload_.get())) {
        h = t->height();
        w = t->width();
    } else {
        const auto& m = std::get<Maps>(*payload_);
        h = m.labels.height();
        w = m.labels.width();
        if (m.probs.height() != h || m.probs.width() != w)
            throw ValidationError("instance " + instance_id_ + ": label map and probability map sizes differ");
    }
    if (h != box_.h || w != box_.w)
        throw ValidationError("instance " + instance_id_ + ": payload is " + std::to_string(w) + "x" +
                              std::to_string(h) + " but box is " + std::to_string(box_.w) + "x" +
                              std::to_string(box_.h));
}

const InstanceRecord::Maps& InstanceRecord::maps() const
{
    if (const auto* m = std::get_if<Maps>(payload_.get())) return *m;
    std::call_once(cache_->once, [this] {
        auto [labels, probs] = derive_maps(std::get<ProbabilityTensor>(*payload_));
        cache_->maps.emplace(Maps{std::move(labels), std::move(probs)});
    });
    return *cache_->maps;
}

InstanceRecord InstanceRecord::clipped(int image_height, int image_width) const
{
    const Box visible = intersect(box_, Box{0, 0, image_width, image_height});
    if (visible.w <= 0 || visible.h <= 0)
        throw ValidationError("instance " + instance_id_ + ": box lies outside the image");
    if (visible == box_) return *this;

    const int y0 = visible.y - box_.y;
    const int x0 = visible.x - box_.x;
    if (const auto* t = tensor()) {
        return InstanceRecord(instance_id_, image_id_, visible, box_score_, iou_score_,
                              t->crop(y0, x0, visible.h, visible.w));
    }
    const auto& m = std::get<Maps>(*payload_);
    LabelPlane labels = m.labels.values().block(y0, x0, visible.h, visible.w);
    Plane<float> probs = m.probs.values().block(y0, x0, visible.h, visible.w);
    return InstanceRecord(instance_id_, image_id_, visible, box_score_, iou_score_, LabelMap(std::move(labels)),
                          ProbabilityMap(std::move(probs)));
}

GroundTruthInstance::GroundTruthInstance(std::string instance_id, std::string image_id, Box box, LabelMap labels)
    : instance_id_(std::move(instance_id)), image_id_(std::move(image_id)), box_(box), labels_(std::move(labels))
{
    if (labels_.height() != box_.h || labels_.width() != box_.w)
        throw ValidationError("ground truth " + instance_id_ + ": label map does not match its box");
    if ((labels_.values() != 0).count() == 0)
        throw ValidationError("ground truth " + instance_id_ + ": no foreground pixel");
}

GroundTruthInstance GroundTruthInstance::from_image_labels(std::string instance_id, std::string image_id,
                                                           const LabelPlane& image_labels)
{
    const MaskPlane fg = (image_labels != 0);
    const Eigen::Array<bool, Eigen::Dynamic, 1> rows = fg.rowwise().any();
    const Eigen::Array<bool, 1, Eigen::Dynamic> cols = fg.colwise().any();
    int y0 = -1, y1 = -1, x0 = -1, x1 = -1;
    for (Eigen::Index y = 0; y < rows.size(); ++y) {
        if (rows(y)) {
            if (y0 < 0) y0 = int(y);
            y1 = int(y);
        }
    }
    for (Eigen::Index x = 0; x < cols.size(); ++x) {
        if (cols(x)) {
            if (x0 < 0) x0 = int(x);
            x1 = int(x);
        }
    }
    if (y0 < 0)
        throw ValidationError("ground truth " + instance_id + ": no foreground pixel");
    const Box box{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
    LabelPlane crop = image_labels.block(box.y, box.x, box.h, box.w);
    return GroundTruthInstance(std::move(instance_id), std::move(image_id), box, LabelMap(std::move(crop)));
}

ImageCanvas::ImageCanvas(std::string image_id, LabelPlane semantic, IndexPlane instance_index)
    : image_id_(std::move(image_id)), semantic_(std::move(semantic)), instance_index_(std::move(instance_index))
{
    if (semantic_.rows() != instance_index_.rows() || semantic_.cols() != instance_index_.cols())
        throw ValidationError("canvas " + image_id_ + ": semantic and instance rasters differ in size");
    if (((instance_index_ < 0) && (semantic_ != 0)).any())
        throw ValidationError("canvas " + image_id_ + ": labeled pixel without an owning instance");
}

} // namespace qaparse
