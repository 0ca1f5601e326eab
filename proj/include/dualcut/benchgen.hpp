#pragma once

// Synthetic alignment benchmark with ground-truth bad-token positions.
// Instructions are random sequences of content units; the correct response
// is a fixed transform of the instruction; corrupted responses replace
// corrupt_k positions with wrong units. Judgments come from small template
// pools that never name positions, so detection has to localize errors from
// the distributional shift alone.

#include <cstdint>
#include <string>
#include <vector>

#include "dualcut/condition.hpp"
#include "dualcut/core.hpp"
#include "dualcut/detect.hpp"
#include "dualcut/tinylm.hpp"
#include "dualcut/tokenizer.hpp"

namespace dualcut {

enum class BenchTransform { Echo, CyclicShift1 };

const char* bench_transform_name(BenchTransform t);
BenchTransform bench_transform_from_name(const std::string&);

struct BenchConfig {
    int vocab_units = 50;   // content vocabulary "u0".."u49"
    int seq_len = 12;       // instruction length
    int corrupt_k = 3;      // bad positions per corrupted response
    int n_pretrain = 4000;
    int n_eval = 200;
    std::uint64_t seed = 42;
    BenchTransform transform = BenchTransform::Echo;

    void validate() const;
};

struct LabeledTriplet {
    AlignmentTriplet triplet;
    std::vector<std::size_t> bad_positions;  // sorted; empty for clean records
};

struct Benchmark {
    std::vector<AlignmentTriplet> pretrain;  // 50/50 clean/corrupted, judged accordingly
    std::vector<LabeledTriplet> eval;        // corrupted records with ground-truth labels
    std::vector<std::string> corpus;         // texts covering every unit the vocab needs
};

// Pure function of cfg: same seed, same benchmark, byte for byte.
Benchmark gen_benchmark(const BenchConfig& cfg);

// Judgment template pools (all phrasings share one token length; index 0 is
// the canonical text used for synthesized judgments).
const std::vector<std::string>& positive_judgment_pool();
const std::vector<std::string>& negative_judgment_pool();

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct DetectionQuality {
    Prf neg;  // u_neg against labeled bad positions
    Prf pos;  // u_pos against the complementary good positions
};

// Micro-averaged over all positions of all records.
DetectionQuality eval_detection(const std::vector<DetectionResult>& results,
                                const std::vector<LabeledTriplet>& labels);

struct ShiftReport {
    double delta_logp_bad = 0.0;   // mean log p_plain(after) - log p_plain(before), bad positions
    double delta_logp_good = 0.0;  // same over good positions
};

// Both models must share config and run over the same vocab.
ShiftReport eval_shift(const Model& before, const Model& after,
                       const std::vector<LabeledTriplet>& eval_set, ContextTemplate tpl,
                       const Vocab& v);

// Labels file: one JSON object mapping record id -> bad position list.
std::string labels_to_json(const std::vector<LabeledTriplet>& labels);
std::vector<std::size_t> labels_for_id(const std::string& labels_json, const std::string& id);

}  // namespace dualcut
