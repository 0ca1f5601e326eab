#include "dualcut/core.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dualcut {

using nlohmann::json;

const char* category_name(Category c) {
    switch (c) {
        case Category::AlignP: return "align-p";
        case Category::AlignN: return "align-n";
        case Category::Misalign: return "misalign";
    }
    throw std::logic_error("invalid category value");
}

Category category_from_name(const std::string& s) {
    if (s == "align-p") return Category::AlignP;
    if (s == "align-n") return Category::AlignN;
    if (s == "misalign") return Category::Misalign;
    throw std::invalid_argument("unknown category \"" + s + "\"");
}

void AlignmentTriplet::validate() const {
    if (id.empty()) throw std::invalid_argument("id must be non-empty");
    if (instruction.empty()) throw std::invalid_argument("instruction must be non-empty");
    if (response.empty()) throw std::invalid_argument("response must be non-empty");
    if (!judgment_pos && !judgment_neg)
        throw std::invalid_argument("at least one of judgment_pos/judgment_neg must be present");
    if (judgment_pos && judgment_pos->empty())
        throw std::invalid_argument("judgment_pos must be non-empty when present");
    if (judgment_neg && judgment_neg->empty())
        throw std::invalid_argument("judgment_neg must be non-empty when present");
}

Hyperparams validate_hyperparams(const Hyperparams& h) {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) throw std::invalid_argument(std::string(name) + " must be > 0");
    };
    positive(h.lambda_cut, "lambda_cut");
    positive(h.lambda1, "lambda1");
    positive(h.lambda2, "lambda2");
    positive(h.lambda3, "lambda3");
    positive(h.lambda4, "lambda4");
    positive(h.alpha, "alpha");
    positive(h.beta, "beta");
    positive(h.gamma, "gamma");
    if (!(h.sigma1 >= 0.0 && h.sigma1 < 1.0)) throw std::invalid_argument("sigma1 out of [0,1)");
    if (!(h.sigma2 >= 0.0 && h.sigma2 < 1.0)) throw std::invalid_argument("sigma2 out of [0,1)");
    if (!(h.clamp_eps > 0.0 && h.clamp_eps <= 1e-3))
        throw std::invalid_argument("clamp_eps out of (0, 1e-3]");
    return h;
}

void ProbabilityTriple::validate() const {
    const std::size_t len = p_plain.size();
    if (len == 0) throw std::invalid_argument("probability vectors must be non-empty");
    if (p_neg.size() != len || p_pos.size() != len)
        throw std::invalid_argument("probability vectors must have identical length");
    auto in_open_unit = [](const std::vector<double>& v, const char* name) {
        for (double p : v)
            if (!(p > 0.0 && p < 1.0))
                throw std::invalid_argument(std::string(name) + " entry outside (0,1)");
    };
    in_open_unit(p_plain, "p_plain");
    in_open_unit(p_neg, "p_neg");
    in_open_unit(p_pos, "p_pos");
}

std::string triplet_to_json_line(const AlignmentTriplet& t) {
    json j;
    j["id"] = t.id;
    j["instruction"] = t.instruction;
    j["response"] = t.response;
    if (t.judgment_pos) j["judgment_pos"] = *t.judgment_pos;
    if (t.judgment_neg) j["judgment_neg"] = *t.judgment_neg;
    j["category"] = category_name(t.category);
    return j.dump();
}

AlignmentTriplet triplet_from_json_line(const std::string& line) {
    json j = json::parse(line);
    if (!j.is_object()) throw std::invalid_argument("record is not an object");

    static const std::vector<std::string> known = {
        "id", "instruction", "response", "judgment_pos", "judgment_neg", "category"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw std::invalid_argument("unknown field \"" + key + "\"");
    }

    auto require_string = [&](const char* key) -> std::string {
        if (!j.contains(key)) throw std::invalid_argument(std::string("missing field \"") + key + "\"");
        if (!j[key].is_string()) throw std::invalid_argument(std::string("field \"") + key + "\" must be a string");
        return j[key].get<std::string>();
    };

    AlignmentTriplet t;
    t.id = require_string("id");
    t.instruction = require_string("instruction");
    t.response = require_string("response");
    if (j.contains("judgment_pos")) t.judgment_pos = require_string("judgment_pos");
    if (j.contains("judgment_neg")) t.judgment_neg = require_string("judgment_neg");
    t.category = category_from_name(require_string("category"));
    t.validate();
    return t;
}

std::vector<AlignmentTriplet> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path.string());

    std::vector<AlignmentTriplet> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            records.push_back(triplet_from_json_line(line));
        } catch (const json::parse_error& e) {
            std::ostringstream msg;
            msg << path.string() << ":" << line_no << ": malformed record: " << e.what();
            throw std::runtime_error(msg.str());
        } catch (const std::invalid_argument& e) {
            std::ostringstream msg;
            msg << path.string() << ":" << line_no << ": " << e.what() << " at line " << line_no;
            throw std::runtime_error(msg.str());
        }
    }
    return records;
}

void save_dataset(const std::filesystem::path& path, const std::vector<AlignmentTriplet>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open dataset file for writing: " + path.string());
    for (const auto& r : records) {
        r.validate();
        out << triplet_to_json_line(r) << '\n';
    }
    if (!out) throw std::runtime_error("failed writing dataset file: " + path.string());
}

}  // namespace dualcut
