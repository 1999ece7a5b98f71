#pragma once

#include "qaparse/metrics.hpp"
#include "qaparse/quality_fusion.hpp"

#include <string>
#include <vector>

namespace qaparse {

/// Canonical JSON form of an evaluation report (key names are stable).
std::string report_to_json(const EvalReport& report, const std::vector<std::string>& categories);

/// "key: value" lines, one metric per line, six decimals.
std::string report_to_text(const EvalReport& report, const std::vector<std::string>& categories);

/// Tab-separated sweep table with a header row.
std::string sweep_to_tsv(const std::vector<SweepRow>& rows);

} // namespace qaparse
