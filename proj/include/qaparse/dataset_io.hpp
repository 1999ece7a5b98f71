#pragma once

#include "qaparse/core_types.hpp"
#include "qaparse/metrics.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace qaparse {

// Binary payloads. All integers and floats are little-endian.
//
//   PQT1 tensor:  "PQT1" u32 C u32 H u32 W, then C*H*W f32 (category-major, row-major)
//   PQM1 map:     "PQM1" u32 H u32 W, then H*W f32 (row-major)
//   label map:    8-bit grayscale PNG, pixel value = category index

void write_tensor(const std::filesystem::path& path, const ProbabilityTensor& tensor);
ProbabilityTensor read_tensor(const std::filesystem::path& path);

void write_prob_map(const std::filesystem::path& path, const ProbabilityMap& map);
ProbabilityMap read_prob_map(const std::filesystem::path& path);

void write_label_png(const std::filesystem::path& path, const LabelPlane& labels);
LabelPlane read_label_png(const std::filesystem::path& path);

struct ImageEntry {
    std::string image_id;
    int height = 0;
    int width = 0;
    std::optional<std::string> gt_path;           // semantic label PNG
    std::optional<std::string> gt_instance_path;  // human index PNG, 0 = none

    bool operator==(const ImageEntry&) const = default;
};

struct InstanceEntry {
    std::string instance_id;
    std::string image_id;
    Box box;
    double box_score = 0.0;
    std::optional<double> iou_score;
    std::optional<std::string> probmap_path;   // PQM1
    std::optional<std::string> labelmap_path;  // PNG
    std::optional<std::string> probvals_path;  // PQT1

    bool operator==(const InstanceEntry&) const = default;
};

/// Corpus index. Paths are stored as written in the file and resolved
/// against `base_dir` (the manifest's directory), which is not part of
/// equality.
struct Manifest {
    static constexpr int kVersion = 1;

    int version = kVersion;
    std::vector<std::string> categories;
    std::vector<ImageEntry> images;
    std::vector<InstanceEntry> instances;
    std::filesystem::path base_dir;

    int num_categories() const { return int(categories.size()); }
    std::filesystem::path resolve(const std::string& relative) const { return base_dir / relative; }
    const ImageEntry& image(const std::string& image_id) const;

    bool operator==(const Manifest& other) const
    {
        return version == other.version && categories == other.categories && images == other.images &&
               instances == other.instances;
    }
};

/// Parses and validates a manifest: schema, unique ids, known image ids,
/// exactly one payload form per instance, and existence of every file it
/// references. Payloads themselves are read on demand.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Reads an instance payload and clips it to its image.
InstanceRecord load_instance(const Manifest& manifest, const InstanceEntry& entry);

/// Image-space GT canvas from the semantic and human-index PNGs.
ImageCanvas load_gt_canvas(const Manifest& manifest, const ImageEntry& entry);

/// Splits a GT canvas into humans. Human k (canvas index k) is named
/// "<image_id>#<k+1>".
std::vector<GroundTruthInstance> gt_instances_from_canvas(const ImageCanvas& canvas);

std::string gt_instance_id(const std::string& image_id, int index);

} // namespace qaparse
