#pragma once

// Deterministic whitespace word-level tokenizer. Seven reserved tokens sit
// at fixed indices 0-6; the rest of the vocabulary is the most frequent
// corpus units, ties broken lexicographically.

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "dualcut/core.hpp"

namespace dualcut {

enum ReservedToken : TokenId {
    kPad = 0,
    kBos = 1,
    kEos = 2,
    kIns = 3,
    kJud = 4,
    kRes = 5,
    kUnk = 6,
};

inline constexpr std::size_t kNumReserved = 7;

class Vocab {
public:
    // Reserved-only vocabulary.
    Vocab();

    // 7 reserved tokens + most frequent whitespace units of the corpus,
    // lexicographic tie-break, truncated to max_size. max_size >= 8.
    static Vocab build(const std::vector<std::string>& corpus, std::size_t max_size);

    std::size_t size() const { return units_.size(); }
    const std::vector<std::string>& units() const { return units_; }

    // Unknown units map to <UNK>; whitespace runs are single separators.
    std::vector<TokenId> encode(const std::string& text) const;

    // Units joined by single spaces; reserved tokens render as their names.
    // Throws on out-of-range ids.
    std::string decode(const std::vector<TokenId>& ids) const;

    TokenId id_of(const std::string& unit) const;  // <UNK> if absent
    const std::string& unit_of(TokenId id) const;  // throws if out of range

    // One unit per line, line index == token id.
    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

    // FNV-1a 64 over the serialized unit list; identifies a vocab in logs.
    std::uint64_t fingerprint() const;

    bool operator==(const Vocab& other) const { return units_ == other.units_; }

private:
    std::vector<std::string> units_;
    std::unordered_map<std::string, TokenId> index_;

    void rebuild_index();
};

std::vector<std::string> split_units(const std::string& text);

}  // namespace dualcut
