#include "dualcut/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace dualcut {

using nlohmann::json;

const char* membership_name(Membership m) {
    switch (m) {
        case Membership::Positive: return "pos";
        case Membership::Negative: return "neg";
        case Membership::Neutral: return "neu";
    }
    throw std::logic_error("invalid membership value");
}

Membership membership_from_name(const std::string& s) {
    if (s == "pos") return Membership::Positive;
    if (s == "neg") return Membership::Negative;
    if (s == "neu") return Membership::Neutral;
    throw std::invalid_argument("unknown membership \"" + s + "\"");
}

void SaliencyMap::validate() const {
    const std::size_t n = tokens.size();
    if (membership.size() != n || scale.size() != n || p_plain.size() != n || p_pos.size() != n ||
        p_neg.size() != n)
        throw std::invalid_argument("saliency map per-token lists must have equal length");
    for (std::size_t t = 0; t < n; ++t)
        if (membership[t] == Membership::Neutral && scale[t] != 1.0)
            throw std::invalid_argument("neutral token scale must be exactly 1.0");
}

namespace {

SaliencyMap assemble(std::vector<std::string> tokens, const ProbabilityTriple& p,
                     const DetectionResult& d) {
    if (tokens.size() != p.n() || d.n != p.n())
        throw std::invalid_argument("token, probability, and detection lengths disagree");

    SaliencyMap m;
    m.tokens = std::move(tokens);
    const std::size_t n = m.tokens.size();
    m.membership.assign(n, Membership::Neutral);
    m.scale.assign(n, 1.0);
    m.p_plain = p.p_plain;
    m.p_pos = p.p_pos;
    m.p_neg = p.p_neg;
    for (std::size_t t : d.u_neg) {
        m.membership[t] = Membership::Negative;
        m.scale[t] = d.scale_neg.at(t);
    }
    for (std::size_t t : d.u_pos) {
        m.membership[t] = Membership::Positive;
        m.scale[t] = d.scale_pos.at(t);
    }
    m.meta["method"] = detect_method_name(d.method);
    m.validate();
    return m;
}

}  // namespace

SaliencyMap build_map(const AlignmentTriplet& t, const ProbabilityTriple& p,
                      const DetectionResult& d, const Vocab& v) {
    std::vector<std::string> tokens;
    for (TokenId id : v.encode(t.response)) tokens.push_back(v.unit_of(id));
    auto m = assemble(std::move(tokens), p, d);
    m.meta["record_id"] = t.id;
    m.meta["category"] = category_name(t.category);
    return m;
}

SaliencyMap build_map_from_tokens(const std::vector<std::string>& tokens,
                                  const ProbabilityTriple& p, const DetectionResult& d) {
    return assemble(tokens, p, d);
}

int ansi_bucket(double ratio) {
    const int b = static_cast<int>(std::floor(ratio * 5.0));
    return std::clamp(b, 0, 4);
}

std::string render_ansi(const SaliencyMap& map, const Hyperparams& h) {
    map.validate();
    // five background intensities per polarity (256-color cube)
    static const int kRed[5] = {52, 88, 124, 160, 196};
    static const int kGreen[5] = {22, 28, 34, 40, 46};

    std::string out;
    for (std::size_t t = 0; t < map.size(); ++t) {
        if (t > 0) out.push_back(' ');
        switch (map.membership[t]) {
            case Membership::Negative: {
                const int code = kRed[ansi_bucket(map.scale[t] / h.alpha)];
                out += "\x1b[48;5;" + std::to_string(code) + "m" + map.tokens[t] + "\x1b[0m";
                break;
            }
            case Membership::Positive: {
                const int code = kGreen[ansi_bucket((map.scale[t] - 1.0) / h.beta)];
                out += "\x1b[48;5;" + std::to_string(code) + "m" + map.tokens[t] + "\x1b[0m";
                break;
            }
            case Membership::Neutral:
                out += map.tokens[t];
                break;
        }
    }
    out += "\nlegend: \x1b[48;5;124m red = flagged erroneous \x1b[0m "
           "\x1b[48;5;34m green = flagged satisfactory \x1b[0m plain = neutral\n";
    return out;
}

namespace {

std::string escape_html(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string fixed6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string shortest(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void render_map_body(const SaliencyMap& map, std::string& out) {
    out += "<div class=\"map\">\n";
    if (auto it = map.meta.find("record_id"); it != map.meta.end())
        out += "<p class=\"hdr\">record " + escape_html(it->second) + "</p>\n";
    out += "<p class=\"toks\">";
    for (std::size_t t = 0; t < map.size(); ++t) {
        if (t > 0) out.push_back(' ');
        std::string style;
        std::string cls = "tok";
        if (map.membership[t] == Membership::Negative) {
            cls += " neg";
            style = "background:rgba(200,32,32," + fixed6(std::clamp(map.scale[t], 0.0, 1.0)) + ")";
        } else if (map.membership[t] == Membership::Positive) {
            cls += " pos";
            style = "background:rgba(32,160,32," + fixed6(std::clamp(map.scale[t] - 1.0, 0.0, 1.0)) + ")";
        } else {
            cls += " neu";
        }
        out += "<span class=\"" + cls + "\"";
        if (!style.empty()) out += " style=\"" + style + "\"";
        out += " data-scale=\"" + shortest(map.scale[t]) + "\"";
        out += " title=\"p_plain=" + fixed6(map.p_plain[t]) + " p_pos=" + fixed6(map.p_pos[t]) +
               " p_neg=" + fixed6(map.p_neg[t]) + " scale=" + shortest(map.scale[t]) + "\">";
        out += escape_html(map.tokens[t]);
        out += "</span>";
    }
    out += "</p>\n</div>\n";
}

}  // namespace

std::string render_html(const std::vector<SaliencyMap>& maps) {
    for (const auto& m : maps) m.validate();
    std::string out;
    out += "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n";
    out += "<title>token saliency</title>\n";
    out += "<style>\n"
           "body { font-family: monospace; margin: 2em; }\n"
           ".toks { line-height: 2; }\n"
           ".tok { padding: 2px 3px; border-radius: 3px; }\n"
           ".hdr { color: #666; }\n"
           "</style>\n</head>\n<body>\n";
    for (const auto& m : maps) render_map_body(m, out);
    out += "</body>\n</html>\n";
    return out;
}

std::string render_html(const SaliencyMap& map) {
    return render_html(std::vector<SaliencyMap>{map});
}

std::string to_data(const SaliencyMap& map) {
    map.validate();
    json j;
    j["tokens"] = map.tokens;
    json mem = json::array();
    for (auto m : map.membership) mem.push_back(membership_name(m));
    j["membership"] = mem;
    j["scale"] = map.scale;
    j["p_plain"] = map.p_plain;
    j["p_pos"] = map.p_pos;
    j["p_neg"] = map.p_neg;
    j["meta"] = map.meta;
    return j.dump();
}

SaliencyMap from_data(const std::string& text) {
    json j = json::parse(text);
    for (const char* key : {"tokens", "membership", "scale", "p_plain", "p_pos", "p_neg", "meta"})
        if (!j.contains(key))
            throw std::invalid_argument(std::string("missing field \"") + key + "\"");

    SaliencyMap m;
    m.tokens = j["tokens"].get<std::vector<std::string>>();
    for (const auto& s : j["membership"])
        m.membership.push_back(membership_from_name(s.get<std::string>()));
    m.scale = j["scale"].get<std::vector<double>>();
    m.p_plain = j["p_plain"].get<std::vector<double>>();
    m.p_pos = j["p_pos"].get<std::vector<double>>();
    m.p_neg = j["p_neg"].get<std::vector<double>>();
    m.meta = j["meta"].get<std::map<std::string, std::string>>();
    m.validate();
    return m;
}

}  // namespace dualcut
