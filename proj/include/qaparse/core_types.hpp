#pragma once

#include "qaparse/error.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace qaparse {

/// Dense H x W raster, row-major so that it matches the on-disk pixel order.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Category indices. 8-bit because label rasters are stored as 8-bit images.
using LabelPlane = Plane<std::uint8_t>;
using MaskPlane = Plane<bool>;
using IndexPlane = Plane<std::int32_t>;

inline constexpr int kMaxCategories = 256;

/// Per-instance C x H x W class-probability volume.
///
/// Stored as a C x (H*W) row-major array, i.e. category-major then row-major,
/// which is exactly the layout of the PQT1 file payload. Every pixel column
/// must be a point of the probability simplex (sum within kSumTolerance of 1).
template <typename Scalar>
class ProbabilityTensorT {
public:
    using Values = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    static constexpr double kSumTolerance = 1e-4;

    ProbabilityTensorT(int categories, int height, int width, Values values)
        : categories_(categories), height_(height), width_(width), values_(std::move(values))
    {
        if (categories < 2 || categories > kMaxCategories)
            throw ValidationError("probability tensor: category count must be in [2, 256], got " +
                                  std::to_string(categories));
        if (height < 1 || width < 1)
            throw ValidationError("probability tensor: height and width must be >= 1");
        const Eigen::Index pixels = Eigen::Index(height) * width;
        if (values_.rows() != categories || values_.cols() != pixels)
            throw ValidationError("probability tensor: payload shape does not match C x H x W");
        for (Eigen::Index n = 0; n < pixels; ++n) {
            double sum = 0.0;
            for (int c = 0; c < categories; ++c) {
                const double v = static_cast<double>(values_(c, n));
                if (!std::isfinite(v) || v < 0.0 || v > 1.0)
                    throw ValidationError("probability tensor: value outside [0,1] at pixel " +
                                          std::to_string(n));
                sum += v;
            }
            if (std::abs(sum - 1.0) > kSumTolerance)
                throw ValidationError("probability tensor: pixel " + std::to_string(n) +
                                      " sums to " + std::to_string(sum) + ", expected 1");
        }
    }

    int categories() const { return categories_; }
    int height() const { return height_; }
    int width() const { return width_; }
    const Values& values() const { return values_; }

    /// View of one category plane as an H x W array.
    Eigen::Map<const Plane<Scalar>> plane(int category) const
    {
        return Eigen::Map<const Plane<Scalar>>(values_.data() + Eigen::Index(category) * height_ * width_,
                                               height_, width_);
    }

    Scalar at(int category, int y, int x) const { return values_(category, Eigen::Index(y) * width_ + x); }

    /// Sub-window copy. The window must lie inside the tensor.
    ProbabilityTensorT crop(int y0, int x0, int h, int w) const
    {
        Values out(categories_, Eigen::Index(h) * w);
        for (int c = 0; c < categories_; ++c) {
            Eigen::Map<Plane<Scalar>>(out.data() + Eigen::Index(c) * h * w, h, w) = plane(c).block(y0, x0, h, w);
        }
        return ProbabilityTensorT(categories_, h, w, std::move(out));
    }

private:
    int categories_;
    int height_;
    int width_;
    Values values_;
};

/// Per-pixel maximum class probability of one instance.
template <typename Scalar>
class ProbabilityMapT {
public:
    explicit ProbabilityMapT(Plane<Scalar> values) : values_(std::move(values))
    {
        if (values_.rows() < 1 || values_.cols() < 1)
            throw ValidationError("probability map: empty raster");
        for (Eigen::Index i = 0; i < values_.size(); ++i) {
            const double v = static_cast<double>(values_.data()[i]);
            if (!std::isfinite(v) || v < 0.0 || v > 1.0)
                throw ValidationError("probability map: value outside [0,1] at pixel " + std::to_string(i));
        }
    }

    int height() const { return int(values_.rows()); }
    int width() const { return int(values_.cols()); }
    const Plane<Scalar>& values() const { return values_; }

private:
    Plane<Scalar> values_;
};

/// Per-pixel argmax category of one instance (0 = background).
class LabelMap {
public:
    explicit LabelMap(LabelPlane values) : values_(std::move(values))
    {
        if (values_.rows() < 1 || values_.cols() < 1)
            throw ValidationError("label map: empty raster");
    }

    int height() const { return int(values_.rows()); }
    int width() const { return int(values_.cols()); }
    const LabelPlane& values() const { return values_; }
    int max_label() const { return values_.size() ? int(values_.maxCoeff()) : 0; }

private:
    LabelPlane values_;
};

using ProbabilityTensor = ProbabilityTensorT<float>;
using ProbabilityMap = ProbabilityMapT<float>;

/// Argmax category (ties go to the lowest index) and max value per pixel.
template <typename Scalar>
std::pair<LabelMap, ProbabilityMapT<Scalar>> derive_maps(const ProbabilityTensorT<Scalar>& tensor)
{
    const int h = tensor.height();
    const int w = tensor.width();
    Plane<Scalar> best = tensor.plane(0);
    LabelPlane label = LabelPlane::Zero(h, w);
    for (int c = 1; c < tensor.categories(); ++c) {
        const auto candidate = tensor.plane(c);
        const auto wins = candidate > best;
        label = wins.select(LabelPlane::Constant(h, w, std::uint8_t(c)), label);
        best = wins.select(candidate, best);
    }
    return {LabelMap(std::move(label)), ProbabilityMapT<Scalar>(std::move(best))};
}

/// Axis-aligned pixel box: columns [x, x+w), rows [y, y+h).
struct Box {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    int right() const { return x + w; }
    int bottom() const { return y + h; }
    long area() const { return long(w) * h; }

    bool operator==(const Box&) const = default;
};

/// Intersection of two boxes; empty intersections come back with w or h == 0.
Box intersect(const Box& a, const Box& b);
double box_iou(const Box& a, const Box& b);

/// Exponents of the weighted geometric-mean fusion (box, IoU, pixel).
class QualityWeights {
public:
    QualityWeights() = default;
    QualityWeights(double alpha, double beta, double gamma);

    /// Parses "a,b,c".
    static QualityWeights parse(std::string_view text);

    double alpha() const { return alpha_; }
    double beta() const { return beta_; }
    double gamma() const { return gamma_; }
    double sum() const { return alpha_ + beta_ + gamma_; }

    auto operator<=>(const QualityWeights&) const = default;

private:
    double alpha_ = 1.0;
    double beta_ = 1.0;
    double gamma_ = 1.0;
};

/// Fused quality of one instance and each of its predicted parts.
struct QualityScore {
    double instance_score = 0.0;
    std::map<int, double> part_scores;  // present categories only
};

/// One detected human: detector box and scores plus its parsing payload.
///
/// The payload is either the full probability tensor or the pre-argmaxed
/// (label map, probability map) pair. For tensors the pair is derived on
/// first access and cached; copies share the cache.
class InstanceRecord {
public:
    struct Maps {
        LabelMap labels;
        ProbabilityMap probs;
    };

    InstanceRecord(std::string instance_id, std::string image_id, Box box, double box_score,
                   std::optional<double> iou_score, ProbabilityTensor tensor);
    InstanceRecord(std::string instance_id, std::string image_id, Box box, double box_score,
                   std::optional<double> iou_score, LabelMap labels, ProbabilityMap probs);

    const std::string& instance_id() const { return instance_id_; }
    const std::string& image_id() const { return image_id_; }
    const Box& box() const { return box_; }
    double box_score() const { return box_score_; }
    const std::optional<double>& iou_score() const { return iou_score_; }

    bool has_tensor() const { return std::holds_alternative<ProbabilityTensor>(*payload_); }
    const ProbabilityTensor* tensor() const { return std::get_if<ProbabilityTensor>(payload_.get()); }
    const Maps& maps() const;

    /// Clips the box to an image and crops the payload to match. Throws if no
    /// pixel of the box falls inside the image.
    InstanceRecord clipped(int image_height, int image_width) const;

private:
    struct Cache {
        std::once_flag once;
        std::optional<Maps> maps;
    };

    InstanceRecord(std::string instance_id, std::string image_id, Box box, double box_score,
                   std::optional<double> iou_score,
                   std::shared_ptr<const std::variant<ProbabilityTensor, Maps>> payload);
    void validate() const;

    std::string instance_id_;
    std::string image_id_;
    Box box_;
    double box_score_;
    std::optional<double> iou_score_;
    std::shared_ptr<const std::variant<ProbabilityTensor, Maps>> payload_;
    std::shared_ptr<Cache> cache_;
};

/// Ground-truth human, stored as a label map cropped to its tight box.
class GroundTruthInstance {
public:
    /// `labels` covers the crop `box`; 0 marks pixels not belonging to this person.
    GroundTruthInstance(std::string instance_id, std::string image_id, Box box, LabelMap labels);

    /// Crops a full-image label map to its tight foreground box.
    static GroundTruthInstance from_image_labels(std::string instance_id, std::string image_id,
                                                 const LabelPlane& image_labels);

    const std::string& instance_id() const { return instance_id_; }
    const std::string& image_id() const { return image_id_; }
    const Box& box() const { return box_; }
    const LabelMap& labels() const { return labels_; }

private:
    std::string instance_id_;
    std::string image_id_;
    Box box_;
    LabelMap labels_;
};

/// Image-space semantic map plus per-pixel owning instance (-1 = none).
class ImageCanvas {
public:
    ImageCanvas() = default;
    ImageCanvas(std::string image_id, LabelPlane semantic, IndexPlane instance_index);

    const std::string& image_id() const { return image_id_; }
    int height() const { return int(semantic_.rows()); }
    int width() const { return int(semantic_.cols()); }
    const LabelPlane& semantic() const { return semantic_; }
    const IndexPlane& instance_index() const { return instance_index_; }

private:
    std::string image_id_;
    LabelPlane semantic_;
    IndexPlane instance_index_;
};

/// Validates that a score lies in [0, 1] and is not NaN.
double checked_unit(double value, std::string_view what);

} // namespace qaparse
