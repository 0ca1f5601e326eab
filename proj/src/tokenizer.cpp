#include "dualcut/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>

namespace dualcut {

namespace {
const std::vector<std::string> kReservedNames = {
    "<PAD>", "<BOS>", "<EOS>", "<INS>", "<JUD>", "<RES>", "<UNK>"};
}

std::vector<std::string> split_units(const std::string& text) {
    std::vector<std::string> units;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) units.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) units.push_back(std::move(cur));
    return units;
}

Vocab::Vocab() : units_(kReservedNames) { rebuild_index(); }

void Vocab::rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < units_.size(); ++i)
        index_.emplace(units_[i], static_cast<TokenId>(i));
    if (index_.size() != units_.size())
        throw std::invalid_argument("vocabulary contains duplicate units");
}

Vocab Vocab::build(const std::vector<std::string>& corpus, std::size_t max_size) {
    if (max_size < kNumReserved + 1)
        throw std::invalid_argument("max_size must be >= 8");

    // std::map keeps units sorted, which settles frequency ties lexicographically.
    std::map<std::string, std::uint64_t> counts;
    for (const auto& text : corpus)
        for (auto& u : split_units(text)) ++counts[u];

    std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocab v;
    for (const auto& [unit, _] : ranked) {
        if (v.units_.size() >= max_size) break;
        if (std::find(kReservedNames.begin(), kReservedNames.end(), unit) != kReservedNames.end())
            continue;  // corpus text may not shadow reserved names
        v.units_.push_back(unit);
    }
    v.rebuild_index();
    return v;
}

std::vector<TokenId> Vocab::encode(const std::string& text) const {
    std::vector<TokenId> ids;
    for (const auto& u : split_units(text)) {
        auto it = index_.find(u);
        ids.push_back(it == index_.end() ? kUnk : it->second);
    }
    return ids;
}

std::string Vocab::decode(const std::vector<TokenId>& ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i > 0) out.push_back(' ');
        out += unit_of(ids[i]);
    }
    return out;
}

TokenId Vocab::id_of(const std::string& unit) const {
    auto it = index_.find(unit);
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::unit_of(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= units_.size())
        throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                                std::to_string(units_.size()));
    return units_[static_cast<std::size_t>(id)];
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open vocab file for writing: " + path.string());
    for (const auto& u : units_) out << u << '\n';
    if (!out) throw std::runtime_error("failed writing vocab file: " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open vocab file: " + path.string());

    Vocab v;
    v.units_.clear();
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) throw std::runtime_error("empty unit in vocab file: " + path.string());
        v.units_.push_back(line);
    }
    if (v.units_.size() < kNumReserved)
        throw std::runtime_error("vocab file too small: " + path.string());
    for (std::size_t i = 0; i < kNumReserved; ++i)
        if (v.units_[i] != kReservedNames[i])
            throw std::runtime_error("vocab file missing reserved token at index " + std::to_string(i));
    v.rebuild_index();
    return v;
}

std::uint64_t Vocab::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto feed = [&h](char c) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    };
    for (const auto& u : units_) {
        for (char c : u) feed(c);
        feed('\n');
    }
    return h;
}

}  // namespace dualcut
