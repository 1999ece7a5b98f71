// qaparse: quality estimation and evaluation for multi-human parsing outputs.
//
//   qaparse score          --manifest M --threshold T --weights a,b,c --out scores.json
//   qaparse evaluate       --pred scores.json --gt M --out report.json
//   qaparse sweep-weights  --manifest M --grid default --out sweep.tsv
//   qaparse synth          --out DIR --seed S ...
//   qaparse correlate      --manifest M --truth truth.json --out corr.tsv
//
// Exit codes: 0 success, 1 data error, 2 usage error.

#include "qaparse/parallel.hpp"
#include "qaparse/pipeline.hpp"
#include "qaparse/report.hpp"
#include "qaparse/synthetic.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

namespace fs = std::filesystem;
using namespace qaparse;

namespace {

constexpr int kDataError = 1;
constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename Fn>
auto as_usage(Fn&& fn) -> decltype(fn())
{
    try {
        return fn();
    } catch (const ValidationError& e) {
        throw UsageError(e.what());
    }
}

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("writing " + path.string() + " failed");
}

std::vector<double> parse_list(const std::string& text)
{
    std::vector<double> out;
    std::stringstream in(text);
    std::string token;
    while (std::getline(in, token, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(token, &used));
            if (used != token.size()) throw std::invalid_argument(token);
        } catch (const std::exception&) {
            throw ValidationError("cannot parse number '" + token + "'");
        }
    }
    if (out.empty()) throw ValidationError("empty number list");
    return out;
}

std::pair<int, int> parse_range(const std::string& text)
{
    const auto v = parse_list(text);
    if (v.size() == 1) return {int(v[0]), int(v[0])};
    if (v.size() != 2) throw ValidationError("expected 'min,max', got '" + text + "'");
    return {int(v[0]), int(v[1])};
}

struct Common {
    int jobs = 1;
};

struct ScoreArgs {
    std::string manifest;
    double threshold = 0.2;
    std::string weights = "1,1,1";
    std::string out;
};

int run_score(const ScoreArgs& a, const Common& common)
{
    const auto weights = as_usage([&] { return QualityWeights::parse(a.weights); });
    const PixelScoreConfig config{a.threshold};
    as_usage([&] { config.validate(); });

    const Manifest manifest = load_manifest(a.manifest);
    ScoresFile file;
    const fs::path out_dir = fs::absolute(fs::path(a.out)).parent_path();
    file.manifest = fs::relative(fs::absolute(a.manifest), out_dir).generic_string();
    file.threshold = a.threshold;
    file.weights = weights;
    file.instances = score_manifest(manifest, config, weights, common.jobs);
    if (!out_dir.empty()) fs::create_directories(out_dir);
    write_scores_file(a.out, file);
    std::cerr << fmt::format("scored {} instances -> {}\n", file.instances.size(), a.out);
    return 0;
}

struct EvaluateArgs {
    std::string pred;
    std::string gt;
    std::string thresholds = "decile";
    std::string out;
    std::string text;
};

int run_evaluate(const EvaluateArgs& a, const Common& common)
{
    const auto thresholds = as_usage([&] { return MatchThresholds::parse(a.thresholds); });
    const ScoresFile scores = read_scores_file(a.pred);
    const Manifest pred = load_manifest(scores.base_dir / scores.manifest);
    const Manifest gt = load_manifest(a.gt);
    const auto images = load_eval_corpus(pred, gt, common.jobs);
    const auto aligned = align_scores(images, scores.instances);
    const EvalReport report = evaluate(images, aligned, gt.num_categories(), thresholds, common.jobs);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';

    const std::string text = report_to_text(report, gt.categories);
    if (!a.out.empty()) write_text(a.out, report_to_json(report, gt.categories));
    if (!a.text.empty()) write_text(a.text, text);
    std::cout << text;
    return 0;
}

struct SweepArgs {
    std::string manifest;
    std::string gt;
    double threshold = 0.2;
    std::string grid = "default";
    std::string objective = "ap_r";
    std::string thresholds = "decile";
    std::string out;
};

int run_sweep(const SweepArgs& a, const Common& common)
{
    const auto grid = as_usage([&] { return parse_weight_grid(a.grid); });
    const auto objective = as_usage([&] { return parse_objective(a.objective); });
    const auto thresholds = as_usage([&] { return MatchThresholds::parse(a.thresholds); });
    const PixelScoreConfig config{a.threshold};
    as_usage([&] { config.validate(); });

    const Manifest pred = load_manifest(a.manifest);
    const Manifest gt = a.gt.empty() ? pred : load_manifest(a.gt);
    const ScoredCorpus corpus = load_scored_corpus(pred, gt, config, common.jobs);
    const auto rows = sweep_weights(corpus, grid, objective, thresholds, common.jobs);
    const std::string table = sweep_to_tsv(rows);
    if (!a.out.empty()) write_text(a.out, table);
    std::cout << table;
    return 0;
}

struct SynthArgs {
    std::string out;
    std::uint64_t seed = 0;
    int images = 20;
    std::string humans = "1,3";
    int categories = 8;
    std::string size = "128x96";
    std::string scale = "0.35,0.9";
    double box_margin = 0.05;
    double box_jitter = 0.05;
    bool gt_boxes = false;
    int boundary_noise = 0;
    double swap_prob = 0.0;
    std::string erosion = "0,0";
    double sharpness = 4.0;
    double floor = 0.15;
    double decay = 1.5;
    double box_sigma = 0.0;
    double iou_sigma = 0.0;
    std::string payload = "tensor";
};

int run_synth(const SynthArgs& a, const Common& common)
{
    SynthConfig cfg;
    PayloadForm form = PayloadForm::Tensor;
    as_usage([&] {
        cfg.seed = a.seed;
        cfg.num_images = a.images;
        std::tie(cfg.humans_min, cfg.humans_max) = parse_range(a.humans);
        cfg.categories = a.categories;
        const auto x = a.size.find('x');
        if (x == std::string::npos) throw ValidationError("size must look like HEIGHTxWIDTH");
        try {
            cfg.height = std::stoi(a.size.substr(0, x));
            cfg.width = std::stoi(a.size.substr(x + 1));
        } catch (const std::exception&) {
            throw ValidationError("size must look like HEIGHTxWIDTH");
        }
        const auto scale = parse_list(a.scale);
        if (scale.size() != 2) throw ValidationError("scale must be 'min,max'");
        cfg.human_scale_min = scale[0];
        cfg.human_scale_max = scale[1];
        cfg.box_margin = a.box_margin;
        cfg.box_jitter = a.box_jitter;
        cfg.gt_boxes = a.gt_boxes;
        cfg.corruption.boundary_noise_px = a.boundary_noise;
        cfg.corruption.part_swap_prob = a.swap_prob;
        std::tie(cfg.corruption.erosion_min_px, cfg.corruption.erosion_max_px) = parse_range(a.erosion);
        cfg.corruption.confidence_sharpness = a.sharpness;
        cfg.corruption.confidence_floor = a.floor;
        cfg.corruption.boundary_decay_px = a.decay;
        cfg.score_noise = {a.box_sigma, a.iou_sigma};
        if (a.payload == "maps")
            form = PayloadForm::Maps;
        else if (a.payload != "tensor")
            throw ValidationError("payload must be 'tensor' or 'maps'");
        cfg.validate();
        return 0;
    });
    const SynthCorpus corpus = generate(cfg, common.jobs);
    const Manifest m = write_corpus(corpus, a.out, form, common.jobs);
    std::cerr << fmt::format("wrote {} images, {} instances -> {}\n", m.images.size(), m.instances.size(),
                             (fs::path(a.out) / "manifest.json").string());
    return 0;
}

struct CorrelateArgs {
    std::string manifest;
    std::string truth;
    std::string thresholds = "0,0.2,0.4,0.6,0.8";
    std::string weights = "1,1,1";
    double threshold = 0.2;
    std::string out;
};

int run_correlate(const CorrelateArgs& a, const Common& common)
{
    const auto thresholds = as_usage([&] { return parse_list(a.thresholds); });
    const auto weights = as_usage([&] { return QualityWeights::parse(a.weights); });
    const PixelScoreConfig fused{a.threshold};
    as_usage([&] {
        fused.validate();
        for (double t : thresholds) PixelScoreConfig{t}.validate();
    });
    const Manifest m = load_manifest(a.manifest);
    const auto truth = read_truth(a.truth);
    std::vector<std::optional<InstanceRecord>> loaded(m.instances.size());
    parallel_for(m.instances.size(), common.jobs, [&](std::size_t k) { loaded[k] = load_instance(m, m.instances[k]); });
    std::vector<InstanceRecord> records;
    for (auto& r : loaded) records.push_back(std::move(*r));
    const auto rows = correlation_report(records, m.num_categories(), truth, thresholds, weights, fused, common.jobs);
    std::string table = "score\ttarget\tspearman\tsamples\n";
    for (const auto& r : rows) table += fmt::format("{}\t{}\t{:.6f}\t{}\n", r.score, r.target, r.rho, r.samples);
    if (!a.out.empty()) write_text(a.out, table);
    std::cout << table;
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Quality estimation and evaluation for multi-human parsing outputs"};
    app.require_subcommand(1);
    app.fallthrough();
    Common common;
    app.add_option("-j,--jobs", common.jobs, "Worker threads")->check(CLI::PositiveNumber);

    std::function<int()> action;

    ScoreArgs score;
    auto* sc = app.add_subcommand("score", "Compute fused quality scores for every instance of a manifest");
    sc->add_option("--manifest", score.manifest, "Prediction manifest")->required()->envname("QAPARSE_MANIFEST");
    sc->add_option("--threshold", score.threshold, "Pixel-score confidence threshold")->capture_default_str();
    sc->add_option("--weights", score.weights, "Fusion weights alpha,beta,gamma")->capture_default_str();
    sc->add_option("--out", score.out, "Scores file to write")->required();
    sc->callback([&] { action = [&] { return run_score(score, common); }; });

    EvaluateArgs eval;
    auto* ev = app.add_subcommand("evaluate", "Evaluate scored predictions against ground truth");
    ev->add_option("--pred", eval.pred, "Scores file from 'score'")->required();
    ev->add_option("--gt", eval.gt, "Ground-truth manifest")->required()->envname("QAPARSE_GT_MANIFEST");
    ev->add_option("--thresholds", eval.thresholds, "Match thresholds: decile, coco or a list")->capture_default_str();
    ev->add_option("--out", eval.out, "JSON report to write");
    ev->add_option("--text", eval.text, "Plain-text report to write");
    ev->callback([&] { action = [&] { return run_evaluate(eval, common); }; });

    SweepArgs sweep;
    auto* sw = app.add_subcommand("sweep-weights", "Grid-search fusion weights");
    sw->add_option("--manifest", sweep.manifest, "Prediction manifest")->required()->envname("QAPARSE_MANIFEST");
    sw->add_option("--gt", sweep.gt, "Ground-truth manifest (defaults to --manifest)");
    sw->add_option("--threshold", sweep.threshold, "Pixel-score confidence threshold")->capture_default_str();
    sw->add_option("--grid", sweep.grid, "default, ablation or 'a,b,c;a,b,c;...'")->capture_default_str();
    sw->add_option("--objective", sweep.objective, "ap_p, ap_p_50, ap_r or ap_r_50")->capture_default_str();
    sw->add_option("--thresholds", sweep.thresholds, "Match thresholds")->capture_default_str();
    sw->add_option("--out", sweep.out, "TSV table to write");
    sw->callback([&] { action = [&] { return run_sweep(sweep, common); }; });

    SynthArgs synth;
    auto* sy = app.add_subcommand("synth", "Generate a synthetic corpus with ground truth and a truth sidecar");
    sy->add_option("--out", synth.out, "Output directory")->required();
    sy->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
    sy->add_option("--images", synth.images, "Number of images")->capture_default_str();
    sy->add_option("--humans", synth.humans, "Humans per image 'min,max'")->capture_default_str();
    sy->add_option("--categories", synth.categories, "Categories including background")->capture_default_str();
    sy->add_option("--size", synth.size, "Canvas HEIGHTxWIDTH")->capture_default_str();
    sy->add_option("--scale", synth.scale, "Person height range as fraction of canvas")->capture_default_str();
    sy->add_option("--box-margin", synth.box_margin, "Mean detector box padding")->capture_default_str();
    sy->add_option("--box-jitter", synth.box_jitter, "Detector box noise")->capture_default_str();
    sy->add_flag("--gt-boxes", synth.gt_boxes, "Use GT boxes with box score 1");
    sy->add_option("--boundary-noise", synth.boundary_noise, "Max boundary jitter radius (px)")->capture_default_str();
    sy->add_option("--swap-prob", synth.swap_prob, "Per-part relabel probability")->capture_default_str();
    sy->add_option("--erosion", synth.erosion, "Erosion range 'min,max' (px)")->capture_default_str();
    sy->add_option("--sharpness", synth.sharpness, "Peak confidence sharpness")->capture_default_str();
    sy->add_option("--floor", synth.floor, "Boundary confidence floor")->capture_default_str();
    sy->add_option("--decay", synth.decay, "Boundary confidence decay length (px)")->capture_default_str();
    sy->add_option("--box-sigma", synth.box_sigma, "Box score noise")->capture_default_str();
    sy->add_option("--iou-sigma", synth.iou_sigma, "IoU score noise")->capture_default_str();
    sy->add_option("--payload", synth.payload, "tensor or maps")->capture_default_str();
    sy->callback([&] { action = [&] { return run_synth(synth, common); }; });

    CorrelateArgs corr;
    auto* co = app.add_subcommand("correlate", "Rank-correlate candidate scores with true quality");
    co->add_option("--manifest", corr.manifest, "Prediction manifest")->required()->envname("QAPARSE_MANIFEST");
    co->add_option("--truth", corr.truth, "Truth sidecar from 'synth'")->required();
    co->add_option("--thresholds", corr.thresholds, "Pixel-score thresholds to compare")->capture_default_str();
    co->add_option("--weights", corr.weights, "Fusion weights for the fused row")->capture_default_str();
    co->add_option("--threshold", corr.threshold, "Pixel-score threshold for the fused row")->capture_default_str();
    co->add_option("--out", corr.out, "TSV table to write");
    co->callback([&] { action = [&] { return run_correlate(corr, common); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }

    try {
        return action();
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDataError;
    }
}
