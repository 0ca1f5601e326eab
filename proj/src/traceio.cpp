#include "dualcut/traceio.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dualcut {

using nlohmann::json;

void TraceRecord::validate() const {
    try {
        if (id.empty()) throw std::invalid_argument("id must be non-empty");
        probs.validate();
        if (tokens.size() != probs.n())
            throw std::invalid_argument("token count does not match probability length");
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("trace record \"" + id + "\": " + e.what());
    }
}

std::string trace_to_json_line(const TraceRecord& r) {
    r.validate();
    json j;
    j["id"] = r.id;
    j["tokens"] = r.tokens;
    j["p_plain"] = r.probs.p_plain;
    j["p_neg"] = r.probs.p_neg;
    j["p_pos"] = r.probs.p_pos;
    j["provenance"] = r.provenance;
    return j.dump();
}

TraceRecord trace_from_json_line(const std::string& line) {
    json j = json::parse(line);
    for (const char* key : {"id", "tokens", "p_plain", "p_neg", "p_pos", "provenance"})
        if (!j.contains(key))
            throw std::invalid_argument(std::string("missing field \"") + key + "\"");

    TraceRecord r;
    r.id = j["id"].get<std::string>();
    r.tokens = j["tokens"].get<std::vector<std::string>>();
    r.probs.p_plain = j["p_plain"].get<std::vector<double>>();
    r.probs.p_neg = j["p_neg"].get<std::vector<double>>();
    r.probs.p_pos = j["p_pos"].get<std::vector<double>>();
    r.provenance = j["provenance"].get<std::string>();
    r.validate();
    return r;
}

std::vector<TraceRecord> load_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace file: " + path.string());

    std::vector<TraceRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            records.push_back(trace_from_json_line(line));
        } catch (const std::exception& e) {
            std::ostringstream msg;
            msg << path.string() << ":" << line_no << ": " << e.what();
            throw std::runtime_error(msg.str());
        }
    }
    return records;
}

void save_trace(const std::filesystem::path& path, const std::vector<TraceRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open trace file for writing: " + path.string());
    for (const auto& r : records) out << trace_to_json_line(r) << '\n';
    if (!out) throw std::runtime_error("failed writing trace file: " + path.string());
}

std::vector<std::pair<DetectionResult, SaliencyMap>> analyze_trace(
    const std::vector<TraceRecord>& records, const Hyperparams& h, DetectMethod method) {
    std::vector<std::pair<DetectionResult, SaliencyMap>> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        r.validate();
        DetectionResult d =
            method == DetectMethod::CUT ? cut_detect(r.probs, h) : dualcut_detect(r.probs, h);
        SaliencyMap m = build_map_from_tokens(r.tokens, r.probs, d);
        m.meta["record_id"] = r.id;
        m.meta["provenance"] = r.provenance;
        out.emplace_back(std::move(d), std::move(m));
    }
    return out;
}

}  // namespace dualcut
