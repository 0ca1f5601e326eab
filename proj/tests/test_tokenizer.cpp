#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "dualcut/rand.hpp"
#include "dualcut/tokenizer.hpp"

using namespace dualcut;

TEST_CASE("build orders by frequency with lexicographic ties") {
    // counts by hand: "b" twice, "a" and "c" once; tie broken a < c
    const std::vector<std::string> corpus = {"a b", "b c"};
    auto v = Vocab::build(corpus, 10);
    REQUIRE(v.size() == 10);
    CHECK(v.units()[0] == "<PAD>");
    CHECK(v.units()[6] == "<UNK>");
    CHECK(v.units()[7] == "b");
    CHECK(v.units()[8] == "a");
    CHECK(v.units()[9] == "c");
}

TEST_CASE("empty corpus keeps only the reserved tokens") {
    auto v = Vocab::build({}, 64);
    CHECK(v.size() == kNumReserved);
}

TEST_CASE("building twice is identical") {
    const std::vector<std::string> corpus = {"x y z", "y z", "z"};
    auto a = Vocab::build(corpus, 12);
    auto b = Vocab::build(corpus, 12);
    CHECK(a == b);
    CHECK(a.fingerprint() == b.fingerprint());
}

TEST_CASE("max_size below 8 is rejected; truncation applies above") {
    CHECK_THROWS_AS((void)Vocab::build({"a"}, 7), std::invalid_argument);
    auto v = Vocab::build({"a b c d e"}, 9);
    CHECK(v.size() == 9);  // reserved + two most frequent
}

TEST_CASE("encode maps unknown units to <UNK> and empty text to nothing") {
    auto v = Vocab::build({"a b", "b c"}, 10);
    CHECK(v.encode("a b") == std::vector<TokenId>{8, 7});
    CHECK(v.encode("z") == std::vector<TokenId>{kUnk});
    CHECK(v.encode("").empty());
    CHECK(v.encode("  a   b  ") == std::vector<TokenId>{8, 7});
}

TEST_CASE("decode round-trips in-vocab text and renders reserved names") {
    auto v = Vocab::build({"a b", "b c"}, 10);
    CHECK(v.decode(v.encode("a b c")) == "a b c");
    CHECK(v.decode({}) == "");
    CHECK(v.decode({kIns}) == "<INS>");
    CHECK_THROWS_AS((void)v.decode({static_cast<TokenId>(v.size())}), std::out_of_range);
}

TEST_CASE("round-trip property on random in-vocab strings") {
    auto v = Vocab::build({"red green blue cyan magenta yellow black white"}, 32);
    std::mt19937_64 rng(11);
    const auto& units = v.units();
    for (int trial = 0; trial < 200; ++trial) {
        std::string text;
        const int len = 1 + static_cast<int>(uniform_below(rng, 8));
        for (int i = 0; i < len; ++i) {
            if (i) text.push_back(' ');
            text += units[kNumReserved + uniform_below(rng, units.size() - kNumReserved)];
        }
        CHECK(v.decode(v.encode(text)) == text);
    }
}

TEST_CASE("vocab file round-trips byte-identically") {
    auto v = Vocab::build({"a b", "b c"}, 10);
    auto path = std::filesystem::temp_directory_path() / "vocab_test.txt";
    v.save(path);
    auto loaded = Vocab::load(path);
    CHECK(loaded == v);

    v.save(path);  // second save
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(bytes == "<PAD>\n<BOS>\n<EOS>\n<INS>\n<JUD>\n<RES>\n<UNK>\nb\na\nc\n");
    std::filesystem::remove(path);
}
