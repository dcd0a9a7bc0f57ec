#pragma once

#include <string>

#include "insider/evaluate.hpp"

namespace insider {

// Markdown run report: achieved aggregate metrics next to the published
// reference columns loaded from the constants file (never hard-coded here).
std::string render_markdown_report(const ExperimentResult& result,
                                   const ExperimentConfig& config,
                                   const std::string& reference_json_text);

}  // namespace insider
