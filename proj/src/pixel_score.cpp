#include "qaparse/pixel_score.hpp"

namespace qaparse {

void PixelScoreConfig::validate() const
{
    if (!(threshold >= 0.0 && threshold < 1.0))
        throw ValidationError("pixel score threshold must lie in [0,1), got " + std::to_string(threshold));
}

CategoryPixelScores::CategoryPixelScores(Eigen::ArrayXd scores, std::vector<bool> present)
    : scores_(std::move(scores)), present_(std::move(present))
{
    if (Eigen::Index(present_.size()) != scores_.size() || scores_.size() < 2)
        throw ValidationError("category pixel scores: inconsistent category count");
    present_[0] = false;
    for (Eigen::Index c = 1; c < scores_.size(); ++c) {
        if (!present_[c]) scores_(c) = 0.0;
    }
    scores_(0) = 0.0;
}

bool CategoryPixelScores::present(int category) const
{
    return category > 0 && category < num_categories() && present_[category];
}

std::optional<double> CategoryPixelScores::score(int category) const
{
    if (!present(category)) return std::nullopt;
    return scores_(category);
}

std::vector<int> CategoryPixelScores::present_categories() const
{
    std::vector<int> out;
    for (int c = 1; c < num_categories(); ++c) {
        if (present_[c]) out.push_back(c);
    }
    return out;
}

Eigen::ArrayXd CategoryPixelScores::padded(double absent_value) const
{
    Eigen::ArrayXd out(num_categories() - 1);
    for (int c = 1; c < num_categories(); ++c) out(c - 1) = present_[c] ? scores_(c) : absent_value;
    return out;
}

} // namespace qaparse
