#include "qaparse/synthetic.hpp"

#include "qaparse/parallel.hpp"
#include "qaparse/pipeline.hpp"

#include <json.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>

namespace qaparse {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

void SynthConfig::validate() const
{
    auto fail = [](const std::string& what) { throw ValidationError("synthetic config: " + what); };
    if (num_images < 1) fail("num_images must be >= 1");
    if (humans_min < 1 || humans_max < humans_min) fail("humans range must satisfy 1 <= min <= max");
    if (humans_max > 255) fail("at most 255 humans per image");
    if (categories < 2 || categories > kMaxCategories) fail("categories must be in [2, 256]");
    if (height < 8 || width < 8) fail("canvas must be at least 8x8");
    if (!(human_scale_min > 0.0 && human_scale_min <= human_scale_max && human_scale_max <= 1.0))
        fail("human scale range must satisfy 0 < min <= max <= 1");
    if (!(box_margin >= 0.0 && box_margin <= 0.5)) fail("box_margin must lie in [0, 0.5]");
    if (!(box_jitter >= 0.0 && box_jitter <= 0.5)) fail("box_jitter must lie in [0, 0.5]");
    const auto& c = corruption;
    if (c.boundary_noise_px < 0) fail("boundary_noise_px must be >= 0");
    if (!(c.part_swap_prob >= 0.0 && c.part_swap_prob <= 1.0)) fail("part_swap_prob must lie in [0,1]");
    if (c.erosion_min_px < 0 || c.erosion_max_px < c.erosion_min_px) fail("erosion range must satisfy 0 <= min <= max");
    if (!(c.confidence_sharpness >= 1.0)) fail("confidence_sharpness must be >= 1");
    if (!(c.confidence_floor >= 0.0 && c.confidence_floor < 1.0)) fail("confidence_floor must lie in [0,1)");
    if (!(c.boundary_decay_px > 0.0)) fail("boundary_decay_px must be > 0");
    if (!(score_noise.box_sigma >= 0.0 && score_noise.iou_sigma >= 0.0)) fail("score noise must be >= 0");
}

std::uint64_t image_seed(std::uint64_t seed, std::size_t image_index)
{
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (std::uint64_t(image_index) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo = 0.0, double hi = 1.0)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi)
{
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

double normal(Rng& rng, double sigma)
{
    return sigma > 0.0 ? std::normal_distribution<double>(0.0, sigma)(rng) : 0.0;
}

// Body primitive in box-normalized coordinates (u right, v down).
struct Primitive {
    bool ellipse;
    double cu, cv, ru, rv;
};

// Head, upper torso, lower torso, arms, legs.
constexpr Primitive kBody[] = {
    {true, 0.50, 0.11, 0.17, 0.11},  {false, 0.50, 0.31, 0.22, 0.10}, {false, 0.50, 0.48, 0.22, 0.07},
    {false, 0.17, 0.38, 0.09, 0.17}, {false, 0.83, 0.38, 0.09, 0.17}, {false, 0.385, 0.77, 0.095, 0.22},
    {false, 0.615, 0.77, 0.095, 0.22},
};

struct Human {
    Box box;
    std::vector<Primitive> parts;
};

Human random_human(Rng& rng, const SynthConfig& cfg)
{
    Human h;
    const int hh = std::max(8, int(std::lround(uniform(rng, cfg.human_scale_min, cfg.human_scale_max) * cfg.height)));
    const int ww = std::clamp(int(std::lround(0.5 * hh * uniform(rng, 0.8, 1.2))), 4, cfg.width);
    h.box = Box{uniform_int(rng, 0, cfg.width - ww), uniform_int(rng, 0, cfg.height - std::min(hh, cfg.height)), ww,
                std::min(hh, cfg.height)};
    for (const auto& p : kBody) {
        h.parts.push_back(Primitive{p.ellipse, p.cu + uniform(rng, -0.02, 0.02), p.cv + uniform(rng, -0.02, 0.02),
                                    p.ru * uniform(rng, 0.85, 1.15), p.rv * uniform(rng, 0.85, 1.15)});
    }
    return h;
}

// Part label of a pixel center inside a human box; 0 when outside the body.
int body_label(const Human& h, int y, int x, int categories)
{
    const double u = (x + 0.5 - h.box.x) / h.box.w;
    const double v = (y + 0.5 - h.box.y) / h.box.h;
    int label = 0;
    for (std::size_t k = 0; k < h.parts.size(); ++k) {
        const auto& p = h.parts[k];
        const double du = (u - p.cu) / p.ru;
        const double dv = (v - p.cv) / p.rv;
        const bool inside = p.ellipse ? du * du + dv * dv <= 1.0 : std::abs(du) <= 1.0 && std::abs(dv) <= 1.0;
        if (inside) label = 1 + int(k % std::size_t(categories - 1));
    }
    return label;
}

// Chessboard distance to the nearest seed pixel, capped.
IndexPlane chessboard_distance(const MaskPlane& seeds, int cap)
{
    const Eigen::Index H = seeds.rows();
    const Eigen::Index W = seeds.cols();
    IndexPlane d = seeds.select(IndexPlane::Zero(H, W), IndexPlane::Constant(H, W, cap));
    for (Eigen::Index y = 0; y < H; ++y) {
        for (Eigen::Index x = 0; x < W; ++x) {
            int v = d(y, x);
            if (y > 0) {
                v = std::min(v, d(y - 1, x) + 1);
                if (x > 0) v = std::min(v, d(y - 1, x - 1) + 1);
                if (x + 1 < W) v = std::min(v, d(y - 1, x + 1) + 1);
            }
            if (x > 0) v = std::min(v, d(y, x - 1) + 1);
            d(y, x) = v;
        }
    }
    for (Eigen::Index y = H; y-- > 0;) {
        for (Eigen::Index x = W; x-- > 0;) {
            int v = d(y, x);
            if (y + 1 < H) {
                v = std::min(v, d(y + 1, x) + 1);
                if (x > 0) v = std::min(v, d(y + 1, x - 1) + 1);
                if (x + 1 < W) v = std::min(v, d(y + 1, x + 1) + 1);
            }
            if (x + 1 < W) v = std::min(v, d(y, x + 1) + 1);
            d(y, x) = v;
        }
    }
    return d;
}

// Pixels with a 4-neighbour of a different label.
MaskPlane label_boundaries(const LabelPlane& labels)
{
    const Eigen::Index H = labels.rows();
    const Eigen::Index W = labels.cols();
    MaskPlane out = MaskPlane::Constant(H, W, false);
    for (Eigen::Index y = 0; y < H; ++y) {
        for (Eigen::Index x = 0; x < W; ++x) {
            const auto c = labels(y, x);
            out(y, x) = (y > 0 && labels(y - 1, x) != c) || (y + 1 < H && labels(y + 1, x) != c) ||
                        (x > 0 && labels(y, x - 1) != c) || (x + 1 < W && labels(y, x + 1) != c);
        }
    }
    return out;
}

struct Layout {
    LabelPlane semantic;
    IndexPlane owner;
};

Layout place_humans(Rng& rng, const SynthConfig& cfg, int count)
{
    constexpr int kAttempts = 200;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
        Layout layout{LabelPlane::Zero(cfg.height, cfg.width), IndexPlane::Constant(cfg.height, cfg.width, -1)};
        std::vector<long> drawn(std::size_t(count), 0);
        for (int k = 0; k < count; ++k) {
            const Human h = random_human(rng, cfg);
            for (int y = h.box.y; y < h.box.bottom(); ++y) {
                for (int x = h.box.x; x < h.box.right(); ++x) {
                    const int c = body_label(h, y, x, cfg.categories);
                    if (c == 0) continue;
                    layout.semantic(y, x) = std::uint8_t(c);
                    layout.owner(y, x) = k;
                    ++drawn[std::size_t(k)];
                }
            }
        }
        bool ok = true;
        for (int k = 0; k < count && ok; ++k) {
            const long visible = (layout.owner == k).count();
            ok = drawn[std::size_t(k)] > 0 && visible >= 16 && visible * 2 >= drawn[std::size_t(k)];
        }
        if (ok) return layout;
    }
    throw ValidationError(fmt::format("synthetic: cannot place {} humans on a {}x{} canvas", count, cfg.width,
                                      cfg.height));
}

Box detector_box(Rng& rng, const SynthConfig& cfg, const Box& gt)
{
    if (cfg.gt_boxes) return gt;
    auto side = [&](int extent) {
        return int(std::lround(extent * (cfg.box_margin + normal(rng, cfg.box_jitter))));
    };
    int x0 = gt.x - side(gt.w);
    int y0 = gt.y - side(gt.h);
    int x1 = gt.right() + side(gt.w);
    int y1 = gt.bottom() + side(gt.h);
    x0 = std::clamp(x0, 0, cfg.width - 1);
    y0 = std::clamp(y0, 0, cfg.height - 1);
    x1 = std::clamp(x1, x0 + 1, cfg.width);
    y1 = std::clamp(y1, y0 + 1, cfg.height);
    // keep at least part of the person inside the box
    if (intersect(Box{x0, y0, x1 - x0, y1 - y0}, gt).area() == 0) return gt;
    return Box{x0, y0, x1 - x0, y1 - y0};
}

struct Corrupted {
    LabelPlane labels;
    MaskPlane confused;
};

Corrupted corrupt(Rng& rng, const SynthConfig& cfg, const LabelPlane& truth)
{
    const auto& cc = cfg.corruption;
    const int parts = cfg.categories - 1;
    const Eigen::Index H = truth.rows();
    const Eigen::Index W = truth.cols();
    Corrupted out{truth, MaskPlane::Constant(H, W, false)};

    // part swaps
    std::vector<int> remap(std::size_t(cfg.categories));
    std::iota(remap.begin(), remap.end(), 0);
    for (int c = 1; c <= parts; ++c) {
        if (parts >= 2 && uniform(rng) < cc.part_swap_prob) {
            int other = uniform_int(rng, 1, parts - 1);
            if (other >= c) ++other;
            remap[std::size_t(c)] = other;
        }
    }
    for (Eigen::Index i = 0; i < out.labels.size(); ++i) {
        const auto c = out.labels.data()[i];
        out.labels.data()[i] = std::uint8_t(remap[c]);
        if (remap[c] != c) out.confused.data()[i] = true;
    }

    // silhouette erosion; outside the box counts as background
    const int erosion = uniform_int(rng, cc.erosion_min_px, cc.erosion_max_px);
    if (erosion > 0) {
        const IndexPlane d = chessboard_distance(out.labels == 0, 1 << 20);
        for (Eigen::Index y = 0; y < H; ++y) {
            for (Eigen::Index x = 0; x < W; ++x) {
                if (out.labels(y, x) == 0) continue;
                const Eigen::Index border = std::min({y + 1, x + 1, H - y, W - x});
                if (std::min<Eigen::Index>(d(y, x), border) <= erosion) {
                    out.labels(y, x) = 0;
                    out.confused(y, x) = true;
                }
            }
        }
    }

    // boundary jitter: each pixel copies a random neighbour with probability 1/2
    const int radius = uniform_int(rng, 0, cc.boundary_noise_px);
    if (radius > 0) {
        const LabelPlane source = out.labels;
        for (Eigen::Index y = 0; y < H; ++y) {
            for (Eigen::Index x = 0; x < W; ++x) {
                if (uniform(rng) >= 0.5) continue;
                const Eigen::Index sy = std::clamp<Eigen::Index>(y + uniform_int(rng, -radius, radius), 0, H - 1);
                const Eigen::Index sx = std::clamp<Eigen::Index>(x + uniform_int(rng, -radius, radius), 0, W - 1);
                if (source(sy, sx) != source(y, x)) {
                    out.labels(y, x) = source(sy, sx);
                    out.confused(y, x) = true;
                }
            }
        }
    }
    return out;
}

// Builds a normalized tensor whose argmax is `labels`. Confidence is high in
// region interiors and decays towards the true part boundaries and the
// corrupted pixels, whether or not the prediction there is right; corrupted
// pixels themselves get mid-range confidence. The runner-up class is the true label on corrupted
// pixels and a neighbouring label on boundaries.
ProbabilityTensor build_tensor(Rng& rng, const SynthConfig& cfg, const Corrupted& pred, const LabelPlane& truth)
{
    const auto& cc = cfg.corruption;
    const int C = cfg.categories;
    const Eigen::Index H = pred.labels.rows();
    const Eigen::Index W = pred.labels.cols();
    const MaskPlane seeds = label_boundaries(truth) || pred.confused;
    const IndexPlane dist = chessboard_distance(seeds, 64);

    const double low = std::max(cc.confidence_floor, 1.0 / C + 0.02);
    const double peak = std::max(low, 1.0 - 0.3 * std::pow(uniform(rng), cc.confidence_sharpness));
    constexpr double kGap = 0.002;

    ProbabilityTensor::Values values = ProbabilityTensor::Values::Zero(C, H * W);
    for (Eigen::Index y = 0; y < H; ++y) {
        for (Eigen::Index x = 0; x < W; ++x) {
            const Eigen::Index n = y * W + x;
            const int label = pred.labels(y, x);
            double conf;
            int runner;
            if (pred.confused(y, x)) {
                conf = low + (peak - low) * uniform(rng, 0.15, 0.5);
                runner = truth(y, x);
            } else {
                const double recover = 1.0 - std::exp(-double(dist(y, x)) / cc.boundary_decay_px);
                conf = low + (peak - low) * recover * (1.0 - 0.04 * uniform(rng));
                runner = -1;
                if (seeds(y, x)) {
                    for (auto [dy, dx] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
                        const Eigen::Index yy = y + dy;
                        const Eigen::Index xx = x + dx;
                        if (yy >= 0 && yy < H && xx >= 0 && xx < W && pred.labels(yy, xx) != label) {
                            runner = pred.labels(yy, xx);
                            break;
                        }
                    }
                }
            }
            if (runner < 0 || runner == label) {
                runner = uniform_int(rng, 0, C - 2);
                if (runner >= label) ++runner;
            }

            const double rest = 1.0 - conf;
            values(label, n) = float(conf);
            if (C == 2) {
                values(runner, n) = float(rest);
                continue;
            }
            double second = std::min(rest * uniform(rng, 0.5, 0.95), conf - kGap);
            double each = (rest - second) / (C - 2);
            if (each >= conf - kGap) {
                second = rest / (C - 1);
                each = second;
            }
            for (int c = 0; c < C; ++c) {
                if (c != label) values(c, n) = float(c == runner ? second : each);
            }
        }
    }
    return ProbabilityTensor(C, int(H), int(W), std::move(values));
}

SynthImage generate_image(const SynthConfig& cfg, std::size_t index, std::vector<TruthRecord>& truth)
{
    Rng rng(image_seed(cfg.seed, index));
    const std::string image_id = fmt::format("img{:05d}", index);
    const int count = uniform_int(rng, cfg.humans_min, cfg.humans_max);
    Layout layout = place_humans(rng, cfg, count);
    ImageCanvas canvas(image_id, layout.semantic, layout.owner);
    const auto humans = gt_instances_from_canvas(canvas);

    SynthImage image{image_id, cfg.height, cfg.width, std::move(canvas), {}};
    for (std::size_t k = 0; k < humans.size(); ++k) {
        const auto& gt = humans[k];
        const Box box = detector_box(rng, cfg, gt.box());
        const LabelPlane own = (layout.owner.block(box.y, box.x, box.h, box.w) == int(k))
                                   .select(layout.semantic.block(box.y, box.x, box.h, box.w),
                                           LabelPlane::Zero(box.h, box.w));
        const Corrupted pred = corrupt(rng, cfg, own);
        ProbabilityTensor tensor = build_tensor(rng, cfg, pred, own);
        const std::string instance_id = fmt::format("{}_p{}", image_id, k);

        EvalImage probe{image_id, cfg.height, cfg.width, {}, {gt}, {}};
        probe.preds.push_back(PredictedInstance{instance_id, box, LabelMap(pred.labels)});
        const ImageOverlaps ov = compute_overlaps(probe, cfg.categories);

        TruthRecord t;
        t.instance_id = instance_id;
        t.image_id = image_id;
        t.gt_instance_id = gt.instance_id();
        t.box_iou = qaparse::box_iou(box, gt.box());
        t.miou = ov.similarity(0, 0);
        for (int c = 1; c < cfg.categories; ++c) {
            if (ov.pred_present(0, c) || ov.gt_present(0, c)) t.part_iou[c] = ov.part_iou[std::size_t(c)](0, 0);
        }
        const double box_score =
            cfg.gt_boxes ? 1.0 : std::clamp(t.box_iou + normal(rng, cfg.score_noise.box_sigma), 0.0, 1.0);
        const double iou_score = std::clamp(t.miou + normal(rng, cfg.score_noise.iou_sigma), 0.0, 1.0);
        image.predictions.emplace_back(instance_id, image_id, box, box_score, iou_score, std::move(tensor));
        truth.push_back(std::move(t));
    }
    return image;
}

} // namespace

SynthCorpus generate(const SynthConfig& config, int jobs)
{
    config.validate();
    SynthCorpus corpus;
    corpus.categories.push_back("background");
    for (int c = 1; c < config.categories; ++c) corpus.categories.push_back(fmt::format("part{}", c));

    std::vector<std::optional<SynthImage>> images(std::size_t(config.num_images));
    std::vector<std::vector<TruthRecord>> truth(std::size_t(config.num_images));
    parallel_for(images.size(), jobs, [&](std::size_t i) { images[i] = generate_image(config, i, truth[i]); });
    for (std::size_t i = 0; i < images.size(); ++i) {
        corpus.images.push_back(std::move(*images[i]));
        for (auto& t : truth[i]) corpus.truth.push_back(std::move(t));
    }
    return corpus;
}

void write_truth(const fs::path& path, std::span<const TruthRecord> truth)
{
    ordered_json doc;
    doc["version"] = 1;
    doc["instances"] = ordered_json::array();
    for (const auto& t : truth) {
        ordered_json parts = ordered_json::object();
        for (const auto& [c, v] : t.part_iou) parts[std::to_string(c)] = v;
        doc["instances"].push_back(ordered_json{{"instance_id", t.instance_id},
                                                {"image_id", t.image_id},
                                                {"gt_instance_id", t.gt_instance_id},
                                                {"box_iou", t.box_iou},
                                                {"miou", t.miou},
                                                {"part_iou", std::move(parts)}});
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << doc.dump(2) << '\n';
}

std::vector<TruthRecord> read_truth(const fs::path& path)
{
    if (!fs::is_regular_file(path)) throw IoError("truth file not found: " + path.string());
    std::vector<TruthRecord> out;
    try {
        std::ifstream in(path);
        const auto doc = ordered_json::parse(in);
        for (const auto& node : doc.at("instances")) {
            TruthRecord t;
            t.instance_id = node.at("instance_id").get<std::string>();
            t.image_id = node.at("image_id").get<std::string>();
            t.gt_instance_id = node.at("gt_instance_id").get<std::string>();
            t.box_iou = node.at("box_iou").get<double>();
            t.miou = node.at("miou").get<double>();
            for (const auto& [key, value] : node.at("part_iou").items()) t.part_iou[std::stoi(key)] = value.get<double>();
            out.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return out;
}

Manifest write_corpus(const SynthCorpus& corpus, const fs::path& dir, PayloadForm form, int jobs)
{
    fs::create_directories(dir / "gt");
    fs::create_directories(dir / "pred");
    Manifest m;
    m.categories = corpus.categories;
    m.base_dir = dir;
    for (const auto& image : corpus.images) {
        m.images.push_back(ImageEntry{image.image_id, image.height, image.width, "gt/" + image.image_id + "_sem.png",
                                      "gt/" + image.image_id + "_inst.png"});
        for (const auto& p : image.predictions) {
            InstanceEntry e{p.instance_id(), p.image_id(), p.box(), p.box_score(), p.iou_score(), {}, {}, {}};
            if (form == PayloadForm::Tensor) {
                e.probvals_path = "pred/" + p.instance_id() + ".pqt";
            } else {
                e.labelmap_path = "pred/" + p.instance_id() + "_labels.png";
                e.probmap_path = "pred/" + p.instance_id() + "_probs.pqm";
            }
            m.instances.push_back(std::move(e));
        }
    }

    parallel_for(corpus.images.size(), jobs, [&](std::size_t i) {
        const auto& image = corpus.images[i];
        write_label_png(dir / "gt" / (image.image_id + "_sem.png"), image.gt.semantic());
        write_label_png(dir / "gt" / (image.image_id + "_inst.png"), (image.gt.instance_index() + 1).cast<std::uint8_t>());
        for (const auto& p : image.predictions) {
            if (form == PayloadForm::Tensor) {
                write_tensor(dir / "pred" / (p.instance_id() + ".pqt"), *p.tensor());
            } else {
                write_label_png(dir / "pred" / (p.instance_id() + "_labels.png"), p.maps().labels.values());
                write_prob_map(dir / "pred" / (p.instance_id() + "_probs.pqm"), p.maps().probs);
            }
        }
    });
    save_manifest(m, dir / "manifest.json");
    write_truth(dir / "truth.json", corpus.truth);
    return m;
}

std::vector<EvalImage> to_eval_corpus(const SynthCorpus& corpus)
{
    std::vector<EvalImage> out;
    for (const auto& image : corpus.images) {
        EvalImage e{image.image_id, image.height, image.width, {}, gt_instances_from_canvas(image.gt), image.gt};
        for (const auto& p : image.predictions)
            e.preds.push_back(PredictedInstance{p.instance_id(), p.box(), p.maps().labels});
        out.push_back(std::move(e));
    }
    return out;
}

ScoredCorpus to_scored_corpus(const SynthCorpus& corpus, const PixelScoreConfig& config, int jobs)
{
    config.validate();
    ScoredCorpus out;
    out.num_categories = int(corpus.categories.size());
    out.images = to_eval_corpus(corpus);
    out.raw.resize(corpus.images.size());
    parallel_for(corpus.images.size(), jobs, [&](std::size_t i) {
        for (const auto& p : corpus.images[i].predictions)
            out.raw[i].push_back(compute_raw_scores(p, out.num_categories, config));
    });
    return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v)
{
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * double(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size()) throw ValidationError("spearman: sample sizes differ");
    if (x.size() < 3) throw ValidationError("spearman: need at least 3 samples");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = double(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

std::vector<CorrelationRow> correlation_report(std::span<const InstanceRecord> predictions, int num_categories,
                                               std::span<const TruthRecord> truth,
                                               std::span<const double> thresholds, const QualityWeights& weights,
                                               const PixelScoreConfig& fused_config, int jobs)
{
    std::unordered_map<std::string, const TruthRecord*> by_id;
    for (const auto& t : truth) by_id.emplace(t.instance_id, &t);
    for (const auto& p : predictions) {
        if (!by_id.count(p.instance_id())) throw ValidationError("no truth record for " + p.instance_id());
    }

    const std::size_t n = predictions.size();
    const std::size_t nt = thresholds.size();
    std::vector<double> box(n), iou(n), fused(n), miou(n);
    std::vector<std::vector<double>> pixel(nt, std::vector<double>(n));
    // per prediction, per threshold: (category score, part IoU) pairs
    std::vector<std::vector<std::vector<std::pair<double, double>>>> parts(n, std::vector<std::vector<std::pair<double, double>>>(nt));
    parallel_for(n, jobs, [&](std::size_t i) {
        const auto& p = predictions[i];
        const auto& t = *by_id.at(p.instance_id());
        const auto& maps = p.maps();
        box[i] = p.box_score();
        iou[i] = p.iou_score().value_or(0.0);
        miou[i] = t.miou;
        for (std::size_t k = 0; k < nt; ++k) {
            const PixelScoreConfig cfg{thresholds[k]};
            pixel[k][i] = instance_pixel_score(maps.probs, cfg);
            const auto cps = category_pixel_scores(maps.labels, maps.probs, num_categories, cfg);
            for (int c : cps.present_categories()) {
                const auto it = t.part_iou.find(c);
                parts[i][k].emplace_back(*cps.score(c), it == t.part_iou.end() ? 0.0 : it->second);
            }
        }
        const auto cps = category_pixel_scores(maps.labels, maps.probs, num_categories, fused_config);
        fused[i] = score_instance(p, cps, instance_pixel_score(maps.probs, fused_config), weights).instance_score;
    });

    std::vector<CorrelationRow> rows;
    rows.push_back({"box_score", "miou", spearman(box, miou), n});
    rows.push_back({"iou_score", "miou", spearman(iou, miou), n});
    for (std::size_t k = 0; k < nt; ++k)
        rows.push_back({fmt::format("pixel@{:.2f}", thresholds[k]), "miou", spearman(pixel[k], miou), n});
    rows.push_back({"fused", "miou", spearman(fused, miou), n});
    for (std::size_t k = 0; k < nt; ++k) {
        std::vector<double> s, q;
        for (std::size_t i = 0; i < n; ++i) {
            for (const auto& [score, part] : parts[i][k]) {
                s.push_back(score);
                q.push_back(part);
            }
        }
        rows.push_back({fmt::format("category_pixel@{:.2f}", thresholds[k]), "part_iou", spearman(s, q), s.size()});
    }
    return rows;
}

} // namespace qaparse
