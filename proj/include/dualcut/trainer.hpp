#pragma once

// Alignment-round training loop: snapshot the model, compute probability
// triples and detections from the snapshot, then optimize the live model
// against them for a fixed number of epochs. Detection sets and scales stay
// frozen within a round. Also hosts the plain-MLE pretraining loop.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dualcut/condition.hpp"
#include "dualcut/core.hpp"
#include "dualcut/detect.hpp"
#include "dualcut/tinylm.hpp"
#include "dualcut/tokenizer.hpp"

namespace dualcut {

enum class TrainMethod { MLE, CUT, DualCUT };

const char* train_method_name(TrainMethod m);
TrainMethod train_method_from_name(const std::string&);

struct TrainConfig {
    TrainMethod method = TrainMethod::DualCUT;
    int rounds = 3;
    int epochs_per_round = 1;
    int batch_size = 16;
    double learning_rate = 1e-3;
    std::uint64_t seed = 42;
    bool deterministic = true;
    int jobs = 1;  // >1 parallelizes the snapshot evaluation phase

    void validate() const;
};

struct RoundMetrics {
    int round = 0;
    double mean_loss = 0.0;
    double mean_p_plain_u_pos = 0.0;  // 0 when the set is empty dataset-wide
    double mean_p_plain_u_neg = 0.0;
    std::size_t count_u_pos = 0;
    std::size_t count_u_neg = 0;
    double wall_secs = 0.0;  // in-memory only, excluded from the log line

    // Log line with the reproducible fields only, so identical runs produce
    // byte-identical metrics files.
    std::string to_json_line() const;
};

struct AlignmentResult {
    Model model;
    std::vector<RoundMetrics> metrics;
};

// Called after each round's snapshot evaluation with the frozen probability
// triples and detections that round trains against (record order matches
// the dataset). Used for per-round saliency dumps.
using RoundObserver = std::function<void(int round, const std::vector<ProbabilityTriple>&,
                                         const std::vector<DetectionResult>&)>;

// Runs cfg.rounds alignment rounds over data. Per round: snapshot, evaluate
// probability triples + detections from the snapshot, then train the live
// model for epochs_per_round epochs in seeded-shuffled batches. Throws on an
// empty dataset and aborts on a non-finite loss, naming round and batch.
AlignmentResult run_alignment(Model m, const std::vector<AlignmentTriplet>& data,
                              const TrainConfig& cfg, const Hyperparams& h, ContextTemplate tpl,
                              const Vocab& v, const RoundObserver& observer = {});

// Metrics without any parameter update (round field is 0). Pure.
RoundMetrics evaluate(const Model& m, const std::vector<AlignmentTriplet>& data,
                      ContextTemplate tpl, const Vocab& v, const Hyperparams& h,
                      TrainMethod method);

struct PretrainConfig {
    int epochs = 4;
    int batch_size = 16;
    double learning_rate = 1e-3;
    std::uint64_t seed = 42;

    void validate() const;
};

struct EpochMetrics {
    int epoch = 0;
    double mean_loss = 0.0;

    std::string to_json_line() const;
};

struct PretrainResult {
    Model model;
    std::vector<EpochMetrics> metrics;
};

// Plain likelihood training over the response tokens of every record, one
// item per assembled context: the judged context for each judgment the
// record carries plus the plain context. Grounds all three conditionals
// the detection criteria compare.
PretrainResult pretrain(Model m, const std::vector<AlignmentTriplet>& data,
                        const PretrainConfig& cfg, ContextTemplate tpl, const Vocab& v);

}  // namespace dualcut
