#include "qaparse/dataset_io.hpp"

#include <json.hpp>
#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace qaparse {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr char kTensorMagic[4] = {'P', 'Q', 'T', '1'};
constexpr char kMapMagic[4] = {'P', 'Q', 'M', '1'};

void put_u32(std::string& out, std::uint32_t v)
{
    for (int k = 0; k < 4; ++k) out.push_back(char((v >> (8 * k)) & 0xffu));
}

void put_f32(std::string& out, float f)
{
    put_u32(out, std::bit_cast<std::uint32_t>(f));
}

std::uint32_t get_u32(const std::string& in, std::size_t offset)
{
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= std::uint32_t(static_cast<unsigned char>(in[offset + k])) << (8 * k);
    return v;
}

std::string slurp(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const fs::path& path, const std::string& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IoError("writing " + path.string() + " failed");
}

// Reads `count` floats starting at `offset`, rejecting non-finite values.
template <typename Dest>
void get_floats(const std::string& bytes, std::size_t offset, std::size_t count, Dest* dest, const fs::path& path)
{
    for (std::size_t i = 0; i < count; ++i) {
        const float f = std::bit_cast<float>(get_u32(bytes, offset + 4 * i));
        if (!std::isfinite(f)) throw FormatError(fmt::format("{}: non-finite value at element {}", path.string(), i));
        dest[i] = f;
    }
}

void check_header(const std::string& bytes, const char (&magic)[4], std::size_t header, const fs::path& path)
{
    if (bytes.size() < 4 || std::memcmp(bytes.data(), magic, 4) != 0)
        throw FormatError(fmt::format("{}: bad magic, expected \"{}\"", path.string(), std::string(magic, 4)));
    if (bytes.size() < header) throw FormatError(path.string() + ": truncated header");
}

} // namespace

void write_tensor(const fs::path& path, const ProbabilityTensor& tensor)
{
    std::string bytes(kTensorMagic, 4);
    bytes.reserve(16 + 4 * std::size_t(tensor.values().size()));
    put_u32(bytes, std::uint32_t(tensor.categories()));
    put_u32(bytes, std::uint32_t(tensor.height()));
    put_u32(bytes, std::uint32_t(tensor.width()));
    const float* data = tensor.values().data();
    for (Eigen::Index i = 0; i < tensor.values().size(); ++i) put_f32(bytes, data[i]);
    spit(path, bytes);
}

ProbabilityTensor read_tensor(const fs::path& path)
{
    const std::string bytes = slurp(path);
    check_header(bytes, kTensorMagic, 16, path);
    const std::uint64_t C = get_u32(bytes, 4);
    const std::uint64_t H = get_u32(bytes, 8);
    const std::uint64_t W = get_u32(bytes, 12);
    if (C < 2 || C > std::uint64_t(kMaxCategories) || H == 0 || W == 0 || H > (1u << 16) || W > (1u << 16))
        throw FormatError(fmt::format("{}: implausible tensor shape {}x{}x{}", path.string(), C, H, W));
    const std::uint64_t count = C * H * W;
    if (bytes.size() != 16 + 4 * count)
        throw FormatError(fmt::format("{}: expected {} payload bytes, found {}", path.string(), 4 * count,
                                      bytes.size() - 16));
    ProbabilityTensor::Values values(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(H * W));
    get_floats(bytes, 16, count, values.data(), path);
    try {
        return ProbabilityTensor(int(C), int(H), int(W), std::move(values));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void write_prob_map(const fs::path& path, const ProbabilityMap& map)
{
    std::string bytes(kMapMagic, 4);
    put_u32(bytes, std::uint32_t(map.height()));
    put_u32(bytes, std::uint32_t(map.width()));
    const float* data = map.values().data();
    for (Eigen::Index i = 0; i < map.values().size(); ++i) put_f32(bytes, data[i]);
    spit(path, bytes);
}

ProbabilityMap read_prob_map(const fs::path& path)
{
    const std::string bytes = slurp(path);
    check_header(bytes, kMapMagic, 12, path);
    const std::uint64_t H = get_u32(bytes, 4);
    const std::uint64_t W = get_u32(bytes, 8);
    if (H == 0 || W == 0 || H > (1u << 16) || W > (1u << 16))
        throw FormatError(fmt::format("{}: implausible map shape {}x{}", path.string(), H, W));
    if (bytes.size() != 12 + 4 * H * W)
        throw FormatError(fmt::format("{}: expected {} payload bytes, found {}", path.string(), 4 * H * W,
                                      bytes.size() - 12));
    Plane<float> values(static_cast<Eigen::Index>(H), static_cast<Eigen::Index>(W));
    get_floats(bytes, 12, H * W, values.data(), path);
    try {
        return ProbabilityMap(std::move(values));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

const ImageEntry& Manifest::image(const std::string& image_id) const
{
    for (const auto& img : images) {
        if (img.image_id == image_id) return img;
    }
    throw ValidationError("unknown image id '" + image_id + "'");
}

namespace {

[[noreturn]] void schema_error(const fs::path& path, const std::string& field, const std::string& what)
{
    throw ValidationError(fmt::format("{}: field '{}': {}", path.string(), field, what));
}

template <typename T>
T required(const ordered_json& node, const char* key, const fs::path& path, const std::string& where)
{
    const std::string field = where + "." + key;
    if (!node.is_object() || !node.contains(key)) schema_error(path, field, "missing");
    try {
        return node.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        schema_error(path, field, "wrong type");
    }
}

template <typename T>
std::optional<T> optional_field(const ordered_json& node, const char* key, const fs::path& path,
                                const std::string& where)
{
    if (!node.contains(key) || node.at(key).is_null()) return std::nullopt;
    return required<T>(node, key, path, where);
}

void check_file(const Manifest& m, const std::optional<std::string>& rel, const fs::path& path,
                const std::string& field)
{
    if (rel && !fs::is_regular_file(m.resolve(*rel)))
        schema_error(path, field, "referenced file not found: " + m.resolve(*rel).string());
}

} // namespace

Manifest load_manifest(const fs::path& path)
{
    if (!fs::is_regular_file(path)) throw IoError("manifest not found: " + path.string());
    ordered_json doc;
    try {
        std::ifstream in(path);
        doc = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }

    Manifest m;
    m.base_dir = path.parent_path();
    m.version = required<int>(doc, "version", path, "$");
    if (m.version != Manifest::kVersion)
        schema_error(path, "$.version", fmt::format("unsupported version {}", m.version));
    m.categories = required<std::vector<std::string>>(doc, "categories", path, "$");
    if (m.categories.size() < 2 || m.categories.size() > std::size_t(kMaxCategories))
        schema_error(path, "$.categories", "need between 2 and 256 categories");

    const auto images = required<ordered_json>(doc, "images", path, "$");
    if (!images.is_array()) schema_error(path, "$.images", "must be an array");
    std::set<std::string> image_ids;
    for (std::size_t k = 0; k < images.size(); ++k) {
        const std::string where = fmt::format("$.images[{}]", k);
        ImageEntry e;
        e.image_id = required<std::string>(images[k], "image_id", path, where);
        e.height = required<int>(images[k], "height", path, where);
        e.width = required<int>(images[k], "width", path, where);
        e.gt_path = optional_field<std::string>(images[k], "gt_path", path, where);
        e.gt_instance_path = optional_field<std::string>(images[k], "gt_instance_path", path, where);
        if (e.height < 1 || e.width < 1) schema_error(path, where, "height and width must be positive");
        if (e.gt_path.has_value() != e.gt_instance_path.has_value())
            schema_error(path, where, "gt_path and gt_instance_path must be given together");
        if (!image_ids.insert(e.image_id).second) schema_error(path, where + ".image_id", "duplicate id");
        m.images.push_back(std::move(e));
    }

    const auto instances = doc.contains("instances") ? doc.at("instances") : ordered_json::array();
    if (!instances.is_array()) schema_error(path, "$.instances", "must be an array");
    std::set<std::string> instance_ids;
    for (std::size_t k = 0; k < instances.size(); ++k) {
        const std::string where = fmt::format("$.instances[{}]", k);
        const auto& node = instances[k];
        InstanceEntry e;
        e.instance_id = required<std::string>(node, "instance_id", path, where);
        e.image_id = required<std::string>(node, "image_id", path, where);
        const auto box = required<std::vector<int>>(node, "box", path, where);
        if (box.size() != 4) schema_error(path, where + ".box", "expected [x, y, w, h]");
        e.box = Box{box[0], box[1], box[2], box[3]};
        if (e.box.w <= 0 || e.box.h <= 0) schema_error(path, where + ".box", "width and height must be positive");
        e.box_score = required<double>(node, "box_score", path, where);
        e.iou_score = optional_field<double>(node, "iou_score", path, where);
        if (!(e.box_score >= 0.0 && e.box_score <= 1.0))
            schema_error(path, where + ".box_score", "must lie in [0,1]");
        if (e.iou_score && !(*e.iou_score >= 0.0 && *e.iou_score <= 1.0))
            schema_error(path, where + ".iou_score", "must lie in [0,1]");
        e.probmap_path = optional_field<std::string>(node, "probmap_path", path, where);
        e.labelmap_path = optional_field<std::string>(node, "labelmap_path", path, where);
        e.probvals_path = optional_field<std::string>(node, "probvals_path", path, where);
        const bool tensor_form = e.probvals_path.has_value();
        const bool pair_form = e.probmap_path.has_value() && e.labelmap_path.has_value();
        const bool partial_pair = e.probmap_path.has_value() != e.labelmap_path.has_value();
        if (tensor_form == pair_form || partial_pair)
            schema_error(path, where,
                         "exactly one of probvals_path or (labelmap_path + probmap_path) is required");
        if (!image_ids.count(e.image_id)) schema_error(path, where + ".image_id", "unknown image '" + e.image_id + "'");
        if (!instance_ids.insert(e.instance_id).second) schema_error(path, where + ".instance_id", "duplicate id");
        m.instances.push_back(std::move(e));
    }

    for (std::size_t k = 0; k < m.images.size(); ++k) {
        check_file(m, m.images[k].gt_path, path, fmt::format("$.images[{}].gt_path", k));
        check_file(m, m.images[k].gt_instance_path, path, fmt::format("$.images[{}].gt_instance_path", k));
    }
    for (std::size_t k = 0; k < m.instances.size(); ++k) {
        const auto& e = m.instances[k];
        check_file(m, e.probmap_path, path, fmt::format("$.instances[{}].probmap_path", k));
        check_file(m, e.labelmap_path, path, fmt::format("$.instances[{}].labelmap_path", k));
        check_file(m, e.probvals_path, path, fmt::format("$.instances[{}].probvals_path", k));
    }
    return m;
}

void save_manifest(const Manifest& m, const fs::path& path)
{
    ordered_json doc;
    doc["version"] = m.version;
    doc["categories"] = m.categories;
    doc["images"] = ordered_json::array();
    for (const auto& e : m.images) {
        ordered_json node;
        node["image_id"] = e.image_id;
        node["height"] = e.height;
        node["width"] = e.width;
        if (e.gt_path) node["gt_path"] = *e.gt_path;
        if (e.gt_instance_path) node["gt_instance_path"] = *e.gt_instance_path;
        doc["images"].push_back(std::move(node));
    }
    doc["instances"] = ordered_json::array();
    for (const auto& e : m.instances) {
        ordered_json node;
        node["instance_id"] = e.instance_id;
        node["image_id"] = e.image_id;
        node["box"] = {e.box.x, e.box.y, e.box.w, e.box.h};
        node["box_score"] = e.box_score;
        if (e.iou_score) node["iou_score"] = *e.iou_score;
        if (e.probmap_path) node["probmap_path"] = *e.probmap_path;
        if (e.labelmap_path) node["labelmap_path"] = *e.labelmap_path;
        if (e.probvals_path) node["probvals_path"] = *e.probvals_path;
        doc["instances"].push_back(std::move(node));
    }
    spit(path, doc.dump(2) + "\n");
}

InstanceRecord load_instance(const Manifest& m, const InstanceEntry& e)
{
    const ImageEntry& image = m.image(e.image_id);
    if (e.probvals_path) {
        InstanceRecord record(e.instance_id, e.image_id, e.box, e.box_score, e.iou_score,
                              read_tensor(m.resolve(*e.probvals_path)));
        if (record.tensor()->categories() != m.num_categories())
            throw ValidationError(fmt::format("instance {}: tensor has {} categories, manifest declares {}",
                                              e.instance_id, record.tensor()->categories(), m.num_categories()));
        return record.clipped(image.height, image.width);
    }
    LabelMap labels(read_label_png(m.resolve(*e.labelmap_path)));
    if (labels.max_label() >= m.num_categories())
        throw ValidationError(fmt::format("instance {}: label {} exceeds category count {}", e.instance_id,
                                          labels.max_label(), m.num_categories()));
    InstanceRecord record(e.instance_id, e.image_id, e.box, e.box_score, e.iou_score, std::move(labels),
                          read_prob_map(m.resolve(*e.probmap_path)));
    return record.clipped(image.height, image.width);
}

ImageCanvas load_gt_canvas(const Manifest& m, const ImageEntry& e)
{
    if (!e.gt_path || !e.gt_instance_path)
        throw ValidationError("image " + e.image_id + ": no ground truth in manifest");
    LabelPlane semantic = read_label_png(m.resolve(*e.gt_path));
    const LabelPlane humans = read_label_png(m.resolve(*e.gt_instance_path));
    if (semantic.rows() != e.height || semantic.cols() != e.width || humans.rows() != e.height ||
        humans.cols() != e.width)
        throw ValidationError("image " + e.image_id + ": ground-truth raster size differs from manifest");
    if (semantic.size() && int(semantic.maxCoeff()) >= m.num_categories())
        throw ValidationError("image " + e.image_id + ": ground-truth label exceeds category count");
    IndexPlane index = humans.cast<std::int32_t>() - 1;
    return ImageCanvas(e.image_id, std::move(semantic), std::move(index));
}

std::string gt_instance_id(const std::string& image_id, int index)
{
    return fmt::format("{}#{}", image_id, index + 1);
}

std::vector<GroundTruthInstance> gt_instances_from_canvas(const ImageCanvas& canvas)
{
    const auto& index = canvas.instance_index();
    const int count = index.size() ? int(index.maxCoeff()) + 1 : 0;
    std::vector<GroundTruthInstance> out;
    for (int k = 0; k < count; ++k) {
        const auto mine = (index == k);
        if (!(mine && (canvas.semantic() != 0)).any()) continue;
        const LabelPlane labels = mine.select(canvas.semantic(), LabelPlane::Zero(canvas.height(), canvas.width()));
        out.push_back(GroundTruthInstance::from_image_labels(gt_instance_id(canvas.image_id(), k), canvas.image_id(),
                                                             labels));
    }
    return out;
}

} // namespace qaparse
