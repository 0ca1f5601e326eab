#pragma once

// Externally produced per-token probability traces, so detection and
// saliency run against any model's outputs without the built-in one.
// Traces carry realized-token probabilities only.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dualcut/core.hpp"
#include "dualcut/detect.hpp"
#include "dualcut/saliency.hpp"

namespace dualcut {

struct TraceRecord {
    std::string id;
    std::vector<std::string> tokens;
    ProbabilityTriple probs;
    std::string provenance;  // free-text model identifier

    void validate() const;  // throws naming the record id
};

// Line-delimited JSON with fields id, tokens, p_plain, p_neg, p_pos,
// provenance. Errors carry the offending record id.
std::vector<TraceRecord> load_trace(const std::filesystem::path& path);
void save_trace(const std::filesystem::path& path, const std::vector<TraceRecord>& records);

std::string trace_to_json_line(const TraceRecord&);
TraceRecord trace_from_json_line(const std::string& line);

// Pure composition of detection and map building per record; no model.
std::vector<std::pair<DetectionResult, SaliencyMap>> analyze_trace(
    const std::vector<TraceRecord>& records, const Hyperparams& h, DetectMethod method);

}  // namespace dualcut
