#include "dualcut/trainer.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dualcut/loss.hpp"
#include "dualcut/rand.hpp"
#include "json.hpp"

namespace dualcut {

using nlohmann::json;

const char* train_method_name(TrainMethod m) {
    switch (m) {
        case TrainMethod::MLE: return "mle";
        case TrainMethod::CUT: return "cut";
        case TrainMethod::DualCUT: return "dualcut";
    }
    throw std::logic_error("invalid train method value");
}

TrainMethod train_method_from_name(const std::string& s) {
    if (s == "mle") return TrainMethod::MLE;
    if (s == "cut") return TrainMethod::CUT;
    if (s == "dualcut") return TrainMethod::DualCUT;
    throw std::invalid_argument("unknown training method \"" + s + "\"");
}

void TrainConfig::validate() const {
    if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
    if (epochs_per_round < 1) throw std::invalid_argument("epochs_per_round must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
}

void PretrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
}

std::string RoundMetrics::to_json_line() const {
    json j;
    j["type"] = "round";
    j["round"] = round;
    j["mean_loss"] = mean_loss;
    j["mean_p_plain_u_pos"] = mean_p_plain_u_pos;
    j["mean_p_plain_u_neg"] = mean_p_plain_u_neg;
    j["count_u_pos"] = count_u_pos;
    j["count_u_neg"] = count_u_neg;
    return j.dump();
}

std::string EpochMetrics::to_json_line() const {
    json j;
    j["type"] = "epoch";
    j["epoch"] = epoch;
    j["mean_loss"] = mean_loss;
    return j.dump();
}

namespace {

// Encoded contexts of one record, assembled once per run.
struct EncodedTriplet {
    std::vector<TokenId> response;
    std::vector<TokenId> plain_ctx;
    std::vector<TokenId> neg_ctx;
    std::vector<TokenId> pos_ctx;
    Category category = Category::AlignP;
};

EncodedTriplet encode_triplet(const AlignmentTriplet& t, ContextTemplate tpl, const Vocab& v,
                              int context_len) {
    t.validate();
    EncodedTriplet e;
    e.category = t.category;
    const auto instruction = v.encode(t.instruction);
    e.response = v.encode(t.response);
    if (e.response.empty())
        throw std::invalid_argument("record " + t.id + ": response encodes to zero tokens");
    const auto judgments = resolve_judgments(t, v);
    const int n = static_cast<int>(e.response.size());
    e.plain_ctx = assemble_context(instruction, std::nullopt, tpl, context_len, n);
    e.neg_ctx = assemble_context(instruction, judgments.neg, tpl, context_len, n);
    e.pos_ctx = assemble_context(instruction, judgments.pos, tpl, context_len, n);
    return e;
}

ProbabilityTriple snapshot_probs(const Model& m, const EncodedTriplet& e) {
    ProbabilityTriple p;
    p.p_plain = m.forward_probs(e.plain_ctx, e.response);
    p.p_neg = m.forward_probs(e.neg_ctx, e.response);
    p.p_pos = m.forward_probs(e.pos_ctx, e.response);
    return p;
}

// Round-start evaluation; jobs > 1 fills the slots from worker threads,
// which is still reproducible because every slot is independent.
void evaluate_snapshot(const Model& snap, const std::vector<EncodedTriplet>& enc,
                       const Hyperparams& h, TrainMethod method, int jobs,
                       std::vector<ProbabilityTriple>& trips, std::vector<DetectionResult>& dets) {
    const std::size_t n = enc.size();
    trips.assign(n, ProbabilityTriple{});
    dets.assign(n, DetectionResult{});

    auto work = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            trips[i] = snapshot_probs(snap, enc[i]);
            if (method == TrainMethod::CUT)
                dets[i] = cut_detect(trips[i], h);
            else if (method == TrainMethod::DualCUT)
                dets[i] = dualcut_detect(trips[i], h);
        }
    };

    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    if (workers <= 1) {
        work(0, n);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo < hi) pool.emplace_back(work, lo, hi);
    }
    for (auto& t : pool) t.join();
}

void fill_detection_stats(const std::vector<ProbabilityTriple>& trips,
                          const std::vector<DetectionResult>& dets, RoundMetrics& rm) {
    double sum_pos = 0.0, sum_neg = 0.0;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        for (std::size_t t : dets[i].u_pos) sum_pos += trips[i].p_plain[t];
        for (std::size_t t : dets[i].u_neg) sum_neg += trips[i].p_plain[t];
        rm.count_u_pos += dets[i].u_pos.size();
        rm.count_u_neg += dets[i].u_neg.size();
    }
    rm.mean_p_plain_u_pos = rm.count_u_pos ? sum_pos / static_cast<double>(rm.count_u_pos) : 0.0;
    rm.mean_p_plain_u_neg = rm.count_u_neg ? sum_neg / static_cast<double>(rm.count_u_neg) : 0.0;
}

// Loss of one example under the live model, with detections and the
// weighting probabilities frozen from the snapshot. Accumulates scaled
// gradients for every context the loss touches.
double example_loss_and_grad(const Model& live, const EncodedTriplet& e,
                             const ProbabilityTriple& snap_trip, const DetectionResult& det,
                             TrainMethod method, const Hyperparams& h, double grad_scale,
                             GradStore& accum) {
    const auto plain_pass = live.forward_pass(e.plain_ctx, e.response);
    const auto p_plain_live = plain_pass.probs();
    std::optional<ForwardPass> judged_pass;

    LossOutput out;
    switch (method) {
        case TrainMethod::MLE: {
            out = mle_loss(p_plain_live);
            break;
        }
        case TrainMethod::CUT: {
            ProbabilityTriple mixed;
            mixed.p_plain = p_plain_live;
            mixed.p_neg = snap_trip.p_neg;
            mixed.p_pos = snap_trip.p_pos;
            LossOutput l1 = cut_l1(mixed, det, h);
            if (e.category == Category::Misalign) {
                // mismatched-feedback records only supply the contrast
                // context; the supervised term is undefined for them
                out = l1;
            } else if (e.category == Category::AlignP) {
                out = cut_total(l1, cut_l2(p_plain_live, p_plain_live, Category::AlignP));
            } else {
                judged_pass.emplace(live.forward_pass(e.neg_ctx, e.response));
                out = cut_total(l1, cut_l2(p_plain_live, judged_pass->probs(), Category::AlignN));
            }
            break;
        }
        case TrainMethod::DualCUT: {
            ProbabilityTriple mixed;
            mixed.p_plain = p_plain_live;
            mixed.p_neg = snap_trip.p_neg;
            mixed.p_pos = snap_trip.p_pos;
            out = dualcut_loss(mixed, det, h);
            break;
        }
    }

    if (grad_scale != 0.0) {
        plain_pass.backward_accumulate(out.dL_dp_plain, grad_scale, accum);
        if (out.dL_dp_judged) {
            if (!judged_pass) judged_pass.emplace(live.forward_pass(e.neg_ctx, e.response));
            judged_pass->backward_accumulate(*out.dL_dp_judged, grad_scale, accum);
        }
    }
    return out.value;
}

}  // namespace

AlignmentResult run_alignment(Model m, const std::vector<AlignmentTriplet>& data,
                              const TrainConfig& cfg, const Hyperparams& h, ContextTemplate tpl,
                              const Vocab& v, const RoundObserver& observer) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("dataset is empty");

    std::vector<EncodedTriplet> enc;
    enc.reserve(data.size());
    for (const auto& t : data) enc.push_back(encode_triplet(t, tpl, v, m.config().context_len));

    auto opt = OptimizerState::init(m, cfg.learning_rate);
    GradStore accum(m.parameters().size(), 0.0);

    AlignmentResult result{std::move(m), {}};
    Model& live = result.model;

    for (int round = 0; round < cfg.rounds; ++round) {
        const auto t0 = std::chrono::steady_clock::now();
        RoundMetrics rm;
        rm.round = round;

        const Model snap = live.snapshot();
        std::vector<ProbabilityTriple> trips;
        std::vector<DetectionResult> dets;
        const int jobs = cfg.deterministic ? 1 : cfg.jobs;
        evaluate_snapshot(snap, enc, h, cfg.method, jobs, trips, dets);
        if (cfg.method != TrainMethod::MLE) fill_detection_stats(trips, dets, rm);
        if (observer) observer(round, trips, dets);

        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (int epoch = 0; epoch < cfg.epochs_per_round; ++epoch) {
            std::vector<std::size_t> order(enc.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(round),
                                                    static_cast<std::uint64_t>(epoch)));
            deterministic_shuffle(order, shuffle_rng);

            for (std::size_t start = 0; start < order.size();
                 start += static_cast<std::size_t>(cfg.batch_size)) {
                const std::size_t end =
                    std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
                const double inv_b = 1.0 / static_cast<double>(end - start);
                std::fill(accum.begin(), accum.end(), 0.0);

                double batch_loss = 0.0;
                for (std::size_t k = start; k < end; ++k) {
                    const std::size_t i = order[k];
                    batch_loss += example_loss_and_grad(live, enc[i], trips[i], dets[i],
                                                        cfg.method, h, inv_b, accum);
                }
                if (!std::isfinite(batch_loss)) {
                    std::ostringstream msg;
                    msg << "non-finite loss at round " << round << " epoch " << epoch << " batch "
                        << (start / static_cast<std::size_t>(cfg.batch_size));
                    throw std::runtime_error(msg.str());
                }
                live.apply_update(accum, opt);
                loss_sum += batch_loss;
                loss_count += end - start;
            }
        }

        rm.mean_loss = loss_sum / static_cast<double>(loss_count);
        rm.wall_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.metrics.push_back(rm);
    }
    return result;
}

RoundMetrics evaluate(const Model& m, const std::vector<AlignmentTriplet>& data,
                      ContextTemplate tpl, const Vocab& v, const Hyperparams& h,
                      TrainMethod method) {
    if (data.empty()) throw std::invalid_argument("dataset is empty");
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<EncodedTriplet> enc;
    enc.reserve(data.size());
    for (const auto& t : data) enc.push_back(encode_triplet(t, tpl, v, m.config().context_len));

    std::vector<ProbabilityTriple> trips;
    std::vector<DetectionResult> dets;
    evaluate_snapshot(m, enc, h, method, 1, trips, dets);

    RoundMetrics rm;
    if (method != TrainMethod::MLE) fill_detection_stats(trips, dets, rm);

    double loss_sum = 0.0;
    GradStore scratch(m.parameters().size(), 0.0);
    for (std::size_t i = 0; i < enc.size(); ++i) {
        // zero gradient scale: metric evaluation must not move anything
        loss_sum += example_loss_and_grad(m, enc[i], trips[i], dets[i], method, h, 0.0, scratch);
    }
    rm.mean_loss = loss_sum / static_cast<double>(enc.size());
    rm.wall_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rm;
}

PretrainResult pretrain(Model m, const std::vector<AlignmentTriplet>& data,
                        const PretrainConfig& cfg, ContextTemplate tpl, const Vocab& v) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("dataset is empty");

    // one item per assembled context: judged context per carried judgment,
    // plus the plain context
    struct Item {
        std::vector<TokenId> ctx;
        std::vector<TokenId> response;
    };
    std::vector<Item> items;
    for (const auto& t : data) {
        t.validate();
        const auto instruction = v.encode(t.instruction);
        const auto response = v.encode(t.response);
        if (response.empty())
            throw std::invalid_argument("record " + t.id + ": response encodes to zero tokens");
        const int n = static_cast<int>(response.size());
        const int cl = m.config().context_len;
        if (t.judgment_pos)
            items.push_back({assemble_context(instruction, v.encode(*t.judgment_pos), tpl, cl, n),
                             response});
        if (t.judgment_neg)
            items.push_back({assemble_context(instruction, v.encode(*t.judgment_neg), tpl, cl, n),
                             response});
        items.push_back({assemble_context(instruction, std::nullopt, tpl, cl, n), response});
    }

    auto opt = OptimizerState::init(m, cfg.learning_rate);
    GradStore accum(m.parameters().size(), 0.0);
    PretrainResult result{std::move(m), {}};
    Model& live = result.model;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(items.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0xBA5Eull, static_cast<std::uint64_t>(epoch)));
        deterministic_shuffle(order, shuffle_rng);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const double inv_b = 1.0 / static_cast<double>(end - start);
            std::fill(accum.begin(), accum.end(), 0.0);

            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const Item& it = items[order[k]];
                const auto pass = live.forward_pass(it.ctx, it.response);
                const auto out = mle_loss(pass.probs());
                pass.backward_accumulate(out.dL_dp_plain, inv_b, accum);
                batch_loss += out.value;
            }
            if (!std::isfinite(batch_loss)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << " batch "
                    << (start / static_cast<std::size_t>(cfg.batch_size));
                throw std::runtime_error(msg.str());
            }
            live.apply_update(accum, opt);
            loss_sum += batch_loss;
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.mean_loss = loss_sum / static_cast<double>(items.size());
        result.metrics.push_back(em);
    }
    return result;
}

}  // namespace dualcut
