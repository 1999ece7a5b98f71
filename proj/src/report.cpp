#include "qaparse/report.hpp"

#include <json.hpp>
#include <fmt/format.h>

namespace qaparse {

using nlohmann::ordered_json;

namespace {

std::string threshold_key(double t)
{
    return fmt::format("{:.2f}", t);
}

std::string category_name(const std::vector<std::string>& categories, std::size_t c)
{
    return c < categories.size() ? categories[c] : std::to_string(c);
}

} // namespace

std::string report_to_json(const EvalReport& report, const std::vector<std::string>& categories)
{
    ordered_json doc;
    doc["version"] = 1;
    doc["counts"] = {{"images", report.images},
                     {"pred_instances", report.pred_instances},
                     {"gt_instances", report.gt_instances}};
    doc["pix_acc"] = report.semantic.pix_acc;
    doc["mean_acc"] = report.semantic.mean_acc;
    doc["miou"] = report.semantic.miou;
    ordered_json per_class = ordered_json::object();
    for (std::size_t c = 0; c < report.semantic.per_class_iou.size(); ++c) {
        const auto& v = report.semantic.per_class_iou[c];
        per_class[category_name(categories, c)] = v ? ordered_json(*v) : ordered_json(nullptr);
    }
    doc["per_class_iou"] = std::move(per_class);
    doc["thresholds"] = report.thresholds;

    auto ap_block = [&](const ApResult& ap) {
        ordered_json by = ordered_json::object();
        for (std::size_t t = 0; t < report.thresholds.size(); ++t)
            by[threshold_key(report.thresholds[t])] = ap.per_threshold[t];
        return ordered_json{{"mean", ap.mean}, {"50", ap.at50}, {"by_threshold", std::move(by)}};
    };
    doc["ap_p"] = ap_block(report.ap_p);
    doc["pcp_50"] = report.ap_p.pcp50;
    doc["ap_r"] = ap_block(report.ap_r);
    doc["warnings"] = report.warnings;
    return doc.dump(2) + "\n";
}

std::string report_to_text(const EvalReport& report, const std::vector<std::string>& categories)
{
    std::string out;
    auto line = [&out](const std::string& key, double value) { out += fmt::format("{}: {:.6f}\n", key, value); };
    out += fmt::format("images: {}\npred_instances: {}\ngt_instances: {}\n", report.images, report.pred_instances,
                       report.gt_instances);
    line("pix_acc", report.semantic.pix_acc);
    line("mean_acc", report.semantic.mean_acc);
    line("miou", report.semantic.miou);
    for (std::size_t c = 0; c < report.semantic.per_class_iou.size(); ++c) {
        const auto& v = report.semantic.per_class_iou[c];
        if (v)
            line("iou/" + category_name(categories, c), *v);
        else
            out += fmt::format("iou/{}: n/a\n", category_name(categories, c));
    }
    line("ap_p", report.ap_p.mean);
    line("ap_p_50", report.ap_p.at50);
    for (std::size_t t = 0; t < report.thresholds.size(); ++t)
        line("ap_p@" + threshold_key(report.thresholds[t]), report.ap_p.per_threshold[t]);
    line("pcp_50", report.ap_p.pcp50);
    line("ap_r", report.ap_r.mean);
    line("ap_r_50", report.ap_r.at50);
    for (std::size_t t = 0; t < report.thresholds.size(); ++t)
        line("ap_r@" + threshold_key(report.thresholds[t]), report.ap_r.per_threshold[t]);
    return out;
}

std::string sweep_to_tsv(const std::vector<SweepRow>& rows)
{
    std::string out = "alpha\tbeta\tgamma\tap_p\tap_p_50\tap_r\tap_r_50\n";
    for (const auto& r : rows) {
        out += fmt::format("{:g}\t{:g}\t{:g}\t{:.6f}\t{:.6f}\t{:.6f}\t{:.6f}\n", r.weights.alpha(), r.weights.beta(),
                           r.weights.gamma(), r.ap_p, r.ap_p50, r.ap_r, r.ap_r50);
    }
    return out;
}

} // namespace qaparse
