#include "dualcut/benchgen.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dualcut/rand.hpp"
#include "json.hpp"

namespace dualcut {

using nlohmann::json;

const char* bench_transform_name(BenchTransform t) {
    switch (t) {
        case BenchTransform::Echo: return "echo";
        case BenchTransform::CyclicShift1: return "cyclic-shift1";
    }
    throw std::logic_error("invalid bench transform value");
}

BenchTransform bench_transform_from_name(const std::string& s) {
    if (s == "echo") return BenchTransform::Echo;
    if (s == "cyclic-shift1") return BenchTransform::CyclicShift1;
    throw std::invalid_argument("unknown transform \"" + s + "\"");
}

void BenchConfig::validate() const {
    if (vocab_units < 2) throw std::invalid_argument("vocab_units must be >= 2");
    if (seq_len < 1) throw std::invalid_argument("seq_len must be >= 1");
    if (corrupt_k < 1) throw std::invalid_argument("corrupt_k must be >= 1");
    if (corrupt_k >= seq_len) throw std::invalid_argument("corrupt_k must be < seq_len");
    if (n_pretrain < 1) throw std::invalid_argument("n_pretrain must be >= 1");
    if (n_eval < 1) throw std::invalid_argument("n_eval must be >= 1");
}

const std::vector<std::string>& positive_judgment_pool() {
    static const std::vector<std::string> pool = {
        kCanonicalPositiveJudgment,
        "This output looks correct.",
        "That answer seems right.",
        "Overall quite well done.",
    };
    return pool;
}

const std::vector<std::string>& negative_judgment_pool() {
    static const std::vector<std::string> pool = {
        kCanonicalNegativeJudgment,
        "This output contains mistakes.",
        "That answer looks wrong.",
        "Several tokens are incorrect.",
    };
    return pool;
}

namespace {

std::string unit_name(int i) { return "u" + std::to_string(i); }

std::vector<int> random_instruction(std::mt19937_64& rng, const BenchConfig& cfg) {
    std::vector<int> seq(static_cast<std::size_t>(cfg.seq_len));
    for (auto& u : seq) u = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(cfg.vocab_units)));
    return seq;
}

std::vector<int> apply_transform(const std::vector<int>& instruction, BenchTransform t) {
    if (t == BenchTransform::Echo) return instruction;
    std::vector<int> out(instruction.size());
    for (std::size_t i = 0; i < instruction.size(); ++i)
        out[i] = instruction[(i + 1) % instruction.size()];
    return out;
}

std::string units_to_text(const std::vector<int>& units) {
    std::string text;
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (i) text.push_back(' ');
        text += unit_name(units[i]);
    }
    return text;
}

// corrupt_k distinct positions, each replaced by a unit different from the
// correct one
std::vector<std::size_t> corrupt(std::vector<int>& response, std::mt19937_64& rng,
                                 const BenchConfig& cfg) {
    std::vector<std::size_t> all(response.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    deterministic_shuffle(all, rng);
    std::vector<std::size_t> bad(all.begin(), all.begin() + cfg.corrupt_k);
    std::sort(bad.begin(), bad.end());
    for (std::size_t posn : bad) {
        const int correct = response[posn];
        int wrong = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(cfg.vocab_units - 1)));
        if (wrong >= correct) ++wrong;
        response[posn] = wrong;
    }
    return bad;
}

std::string format_id(const char* prefix, int i) {
    std::ostringstream out;
    out << prefix << "-";
    out.width(5);
    out.fill('0');
    out << i;
    return out.str();
}

}  // namespace

Benchmark gen_benchmark(const BenchConfig& cfg) {
    cfg.validate();
    Benchmark b;

    // independent streams so changing one count never reshuffles the other set
    std::mt19937_64 pre_rng(derive_seed(cfg.seed, 0x77E7ull));
    std::mt19937_64 eval_rng(derive_seed(cfg.seed, 0xE7A1ull));

    std::set<std::vector<int>> pretrain_instructions;

    for (int i = 0; i < cfg.n_pretrain; ++i) {
        const auto instruction = random_instruction(pre_rng, cfg);
        pretrain_instructions.insert(instruction);
        auto response = apply_transform(instruction, cfg.transform);

        AlignmentTriplet t;
        t.id = format_id("pretrain", i);
        t.instruction = units_to_text(instruction);
        const bool corrupted = (i % 2) == 1;  // exact 50/50 mix
        if (corrupted) {
            (void)corrupt(response, pre_rng, cfg);
            t.category = Category::AlignN;
            const auto& pool = negative_judgment_pool();
            t.judgment_neg = pool[uniform_below(pre_rng, pool.size())];
        } else {
            t.category = Category::AlignP;
            const auto& pool = positive_judgment_pool();
            t.judgment_pos = pool[uniform_below(pre_rng, pool.size())];
        }
        t.response = units_to_text(response);
        b.pretrain.push_back(std::move(t));
    }

    for (int i = 0; i < cfg.n_eval; ++i) {
        // rejection keeps the instruction sets disjoint
        std::vector<int> instruction = random_instruction(eval_rng, cfg);
        while (pretrain_instructions.count(instruction))
            instruction = random_instruction(eval_rng, cfg);

        auto response = apply_transform(instruction, cfg.transform);
        LabeledTriplet lt;
        lt.bad_positions = corrupt(response, eval_rng, cfg);
        lt.triplet.id = format_id("eval", i);
        lt.triplet.instruction = units_to_text(instruction);
        lt.triplet.response = units_to_text(response);
        lt.triplet.category = Category::AlignN;
        const auto& pool = negative_judgment_pool();
        lt.triplet.judgment_neg = pool[uniform_below(eval_rng, pool.size())];
        b.eval.push_back(std::move(lt));
    }

    // vocabulary coverage: every content unit plus every judgment phrasing
    std::string all_units;
    for (int i = 0; i < cfg.vocab_units; ++i) {
        if (i) all_units.push_back(' ');
        all_units += unit_name(i);
    }
    b.corpus.push_back(all_units);
    for (const auto& s : positive_judgment_pool()) b.corpus.push_back(s);
    for (const auto& s : negative_judgment_pool()) b.corpus.push_back(s);
    return b;
}

DetectionQuality eval_detection(const std::vector<DetectionResult>& results,
                                const std::vector<LabeledTriplet>& labels) {
    if (results.size() != labels.size())
        throw std::invalid_argument("results and labels must have equal length");

    std::size_t tp_neg = 0, fp_neg = 0, fn_neg = 0;
    std::size_t tp_pos = 0, fp_pos = 0, fn_pos = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& d = results[i];
        const auto& bad = labels[i].bad_positions;
        const std::size_t n = d.n;
        for (std::size_t t = 0; t < n; ++t) {
            const bool is_bad = std::binary_search(bad.begin(), bad.end(), t);
            const bool flagged_neg = d.in_u_neg(t);
            const bool flagged_pos = d.in_u_pos(t);
            if (flagged_neg && is_bad) ++tp_neg;
            if (flagged_neg && !is_bad) ++fp_neg;
            if (!flagged_neg && is_bad) ++fn_neg;
            if (flagged_pos && !is_bad) ++tp_pos;
            if (flagged_pos && is_bad) ++fp_pos;
            if (!flagged_pos && !is_bad) ++fn_pos;
        }
    }

    auto prf = [](std::size_t tp, std::size_t fp, std::size_t fn) {
        Prf out;
        out.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        out.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        out.f1 = (out.precision + out.recall > 0.0)
                     ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                     : 0.0;
        return out;
    };

    DetectionQuality q;
    q.neg = prf(tp_neg, fp_neg, fn_neg);
    q.pos = prf(tp_pos, fp_pos, fn_pos);
    return q;
}

ShiftReport eval_shift(const Model& before, const Model& after,
                       const std::vector<LabeledTriplet>& eval_set, ContextTemplate tpl,
                       const Vocab& v) {
    const auto& ca = before.config();
    const auto& cb = after.config();
    if (ca.vocab_size != cb.vocab_size || ca.d_model != cb.d_model ||
        ca.n_layers != cb.n_layers || ca.n_heads != cb.n_heads ||
        ca.context_len != cb.context_len)
        throw std::invalid_argument("model configs do not match");
    if (eval_set.empty()) throw std::invalid_argument("eval set is empty");

    double sum_bad = 0.0, sum_good = 0.0;
    std::size_t n_bad = 0, n_good = 0;
    for (const auto& lt : eval_set) {
        const auto instruction = v.encode(lt.triplet.instruction);
        const auto response = v.encode(lt.triplet.response);
        const auto ctx = assemble_context(instruction, std::nullopt, tpl, ca.context_len,
                                          static_cast<int>(response.size()));
        const auto pb = before.forward_probs(ctx, response);
        const auto pa = after.forward_probs(ctx, response);
        for (std::size_t t = 0; t < response.size(); ++t) {
            const double delta = std::log(pa[t]) - std::log(pb[t]);
            if (std::binary_search(lt.bad_positions.begin(), lt.bad_positions.end(), t)) {
                sum_bad += delta;
                ++n_bad;
            } else {
                sum_good += delta;
                ++n_good;
            }
        }
    }

    ShiftReport r;
    r.delta_logp_bad = n_bad ? sum_bad / static_cast<double>(n_bad) : 0.0;
    r.delta_logp_good = n_good ? sum_good / static_cast<double>(n_good) : 0.0;
    return r;
}

std::string labels_to_json(const std::vector<LabeledTriplet>& labels) {
    json j = json::object();
    for (const auto& lt : labels) j[lt.triplet.id] = lt.bad_positions;
    return j.dump();
}

std::vector<std::size_t> labels_for_id(const std::string& labels_json, const std::string& id) {
    json j = json::parse(labels_json);
    if (!j.contains(id)) throw std::invalid_argument("no labels for record \"" + id + "\"");
    return j[id].get<std::vector<std::size_t>>();
}

}  // namespace dualcut
