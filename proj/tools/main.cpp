// dualcut — token-level alignment toolkit CLI.
//
// Subcommands: bench-gen, pretrain, align, detect, saliency, eval,
// gradcheck. Config precedence: built-in defaults < config file (--config,
// or $DUALCUT_CONFIG) < explicit flags. Every command writes a run manifest
// next to its outputs on success and on failure.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dualcut/benchgen.hpp"
#include "dualcut/condition.hpp"
#include "dualcut/core.hpp"
#include "dualcut/detect.hpp"
#include "dualcut/gradcheck.hpp"
#include "dualcut/loss.hpp"
#include "dualcut/saliency.hpp"
#include "dualcut/tinylm.hpp"
#include "dualcut/tokenizer.hpp"
#include "dualcut/traceio.hpp"
#include "dualcut/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dualcut;

namespace {

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
    out << content;
    if (!out) throw std::runtime_error("failed writing file: " + path.string());
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// All tunables one config file can carry, flat keys. CLI flags bind to the
// same fields, so values set on the command line win.
struct Settings {
    Hyperparams h;
    // model
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int context_len = 128;
    int max_vocab = 512;
    std::uint64_t model_seed = 42;
    // training
    std::string method = "dualcut";
    int rounds = 3;
    int epochs_per_round = 1;
    int batch_size = 16;
    double learning_rate = 1e-3;
    std::uint64_t seed = 42;
    bool deterministic = true;
    int jobs = 1;
    int pretrain_epochs = 4;
    // benchmark
    int vocab_units = 50;
    int seq_len = 12;
    int corrupt_k = 3;
    int n_pretrain = 4000;
    int n_eval = 200;
    std::string transform = "echo";
    // context layout
    std::string tpl = "judgment-after-instruction";
    int saliency_samples = 2;
};

void apply_config_file(Settings& s, const fs::path& path) {
    json j = json::parse(read_file(path));
    if (!j.is_object()) throw std::runtime_error("config file must hold a flat object");
    for (const auto& [key, val] : j.items()) {
        if (key == "lambda_cut") s.h.lambda_cut = val.get<double>();
        else if (key == "lambda1") s.h.lambda1 = val.get<double>();
        else if (key == "lambda2") s.h.lambda2 = val.get<double>();
        else if (key == "lambda3") s.h.lambda3 = val.get<double>();
        else if (key == "lambda4") s.h.lambda4 = val.get<double>();
        else if (key == "sigma1") s.h.sigma1 = val.get<double>();
        else if (key == "sigma2") s.h.sigma2 = val.get<double>();
        else if (key == "alpha") s.h.alpha = val.get<double>();
        else if (key == "beta") s.h.beta = val.get<double>();
        else if (key == "gamma") s.h.gamma = val.get<double>();
        else if (key == "clamp_eps") s.h.clamp_eps = val.get<double>();
        else if (key == "d_model") s.d_model = val.get<int>();
        else if (key == "n_layers") s.n_layers = val.get<int>();
        else if (key == "n_heads") s.n_heads = val.get<int>();
        else if (key == "context_len") s.context_len = val.get<int>();
        else if (key == "max_vocab") s.max_vocab = val.get<int>();
        else if (key == "model_seed") s.model_seed = val.get<std::uint64_t>();
        else if (key == "method") s.method = val.get<std::string>();
        else if (key == "rounds") s.rounds = val.get<int>();
        else if (key == "epochs_per_round") s.epochs_per_round = val.get<int>();
        else if (key == "batch_size") s.batch_size = val.get<int>();
        else if (key == "learning_rate") s.learning_rate = val.get<double>();
        else if (key == "seed") s.seed = val.get<std::uint64_t>();
        else if (key == "deterministic") s.deterministic = val.get<bool>();
        else if (key == "jobs") s.jobs = val.get<int>();
        else if (key == "pretrain_epochs") s.pretrain_epochs = val.get<int>();
        else if (key == "vocab_units") s.vocab_units = val.get<int>();
        else if (key == "seq_len") s.seq_len = val.get<int>();
        else if (key == "corrupt_k") s.corrupt_k = val.get<int>();
        else if (key == "n_pretrain") s.n_pretrain = val.get<int>();
        else if (key == "n_eval") s.n_eval = val.get<int>();
        else if (key == "transform") s.transform = val.get<std::string>();
        else if (key == "template") s.tpl = val.get<std::string>();
        else if (key == "saliency_samples") s.saliency_samples = val.get<int>();
        else throw std::runtime_error("unknown config key \"" + key + "\"");
    }
}

json hyperparams_json(const Hyperparams& h) {
    json j;
    j["lambda_cut"] = h.lambda_cut;
    j["lambda1"] = h.lambda1;
    j["lambda2"] = h.lambda2;
    j["lambda3"] = h.lambda3;
    j["lambda4"] = h.lambda4;
    j["sigma1"] = h.sigma1;
    j["sigma2"] = h.sigma2;
    j["alpha"] = h.alpha;
    j["beta"] = h.beta;
    j["gamma"] = h.gamma;
    j["clamp_eps"] = h.clamp_eps;
    return j;
}

json model_config_json(const ModelConfig& c) {
    json j;
    j["vocab_size"] = c.vocab_size;
    j["d_model"] = c.d_model;
    j["n_layers"] = c.n_layers;
    j["n_heads"] = c.n_heads;
    j["context_len"] = c.context_len;
    j["seed"] = c.seed;
    return j;
}

json settings_json(const Settings& s) {
    json j = hyperparams_json(s.h);
    j["d_model"] = s.d_model;
    j["n_layers"] = s.n_layers;
    j["n_heads"] = s.n_heads;
    j["context_len"] = s.context_len;
    j["max_vocab"] = s.max_vocab;
    j["model_seed"] = s.model_seed;
    j["method"] = s.method;
    j["rounds"] = s.rounds;
    j["epochs_per_round"] = s.epochs_per_round;
    j["batch_size"] = s.batch_size;
    j["learning_rate"] = s.learning_rate;
    j["seed"] = s.seed;
    j["deterministic"] = s.deterministic;
    j["jobs"] = s.jobs;
    j["pretrain_epochs"] = s.pretrain_epochs;
    j["vocab_units"] = s.vocab_units;
    j["seq_len"] = s.seq_len;
    j["corrupt_k"] = s.corrupt_k;
    j["n_pretrain"] = s.n_pretrain;
    j["n_eval"] = s.n_eval;
    j["transform"] = s.transform;
    j["template"] = s.tpl;
    j["saliency_samples"] = s.saliency_samples;
    return j;
}

// Runs one command body under a manifest: resolved config in, inputs and
// outputs recorded by the body, status + timestamps always written.
int with_manifest(const std::string& command, const fs::path& manifest_path, const Settings& s,
                  const std::function<void(json& manifest)>& body) {
    json manifest;
    manifest["command"] = command;
    manifest["toolkit_version"] = kToolkitVersion;
    manifest["started_at"] = iso_now();
    manifest["config"] = settings_json(s);
    manifest["inputs"] = json::array();
    manifest["outputs"] = json::array();

    int exit_code = 0;
    try {
        body(manifest);
        manifest["status"] = "ok";
    } catch (const std::exception& e) {
        manifest["status"] = "error";
        manifest["error"] = e.what();
        std::cerr << "error: " << e.what() << "\n";
        exit_code = 1;
    }
    manifest["finished_at"] = iso_now();
    try {
        write_file(manifest_path, manifest.dump(2) + "\n");
    } catch (const std::exception& e) {
        std::cerr << "warning: could not write manifest: " << e.what() << "\n";
    }
    return exit_code;
}

void add_hyperparam_flags(CLI::App* cmd, Settings& s) {
    cmd->add_option("--lambda-cut", s.h.lambda_cut, "margin for single-contrast detection");
    cmd->add_option("--lambda1", s.h.lambda1, "negative set: judged-neg vs judged-pos margin");
    cmd->add_option("--lambda2", s.h.lambda2, "negative set: judged-neg vs plain margin");
    cmd->add_option("--lambda3", s.h.lambda3, "positive set: judged-pos vs judged-neg margin");
    cmd->add_option("--lambda4", s.h.lambda4, "positive set: judged-pos vs plain margin");
    cmd->add_option("--sigma1", s.h.sigma1, "negative set low-probability cutoff");
    cmd->add_option("--sigma2", s.h.sigma2, "positive set low-probability cutoff");
    cmd->add_option("--alpha", s.h.alpha, "negative scale amplitude");
    cmd->add_option("--beta", s.h.beta, "positive scale amplitude");
    cmd->add_option("--gamma", s.h.gamma, "single-contrast weight exponent");
    cmd->add_option("--clamp-eps", s.h.clamp_eps, "floor for log(1-p) arguments");
}

void add_model_flags(CLI::App* cmd, Settings& s) {
    cmd->add_option("--d-model", s.d_model, "model width");
    cmd->add_option("--n-layers", s.n_layers, "transformer layers");
    cmd->add_option("--n-heads", s.n_heads, "attention heads");
    cmd->add_option("--context-len", s.context_len, "maximum sequence length");
    cmd->add_option("--model-seed", s.model_seed, "parameter initialization seed");
}

struct LoadedData {
    std::vector<AlignmentTriplet> records;
    Vocab vocab;
};

LoadedData load_data(const fs::path& data_path, const fs::path& vocab_path) {
    return {load_dataset(data_path), Vocab::load(vocab_path)};
}

std::string run_header_line(const char* command, const Settings& s, const Vocab& v,
                            const std::optional<ModelConfig>& mc) {
    json j;
    j["type"] = "header";
    j["command"] = command;
    j["toolkit_version"] = kToolkitVersion;
    j["config"] = settings_json(s);
    j["vocab_fingerprint"] = hex64(v.fingerprint());
    if (mc) j["model_config"] = model_config_json(*mc);
    return j.dump();
}

// detection + saliency maps for records under a model
struct AnalyzedRecord {
    std::string id;
    DetectionResult det;
    SaliencyMap map;
};

std::vector<AnalyzedRecord> analyze_records(const Model& m, const std::vector<AlignmentTriplet>& data,
                                            ContextTemplate tpl, const Vocab& v,
                                            const Hyperparams& h, DetectMethod method) {
    std::vector<AnalyzedRecord> out;
    out.reserve(data.size());
    for (const auto& t : data) {
        auto p = response_probs(m, t, tpl, v);
        DetectionResult d = method == DetectMethod::CUT ? cut_detect(p, h) : dualcut_detect(p, h);
        auto judged = resolve_judgments(t, v);
        auto map = build_map(t, p, d, v);
        map.meta["template"] = context_template_name(tpl);
        map.meta["judgment_pos_synthetic"] = judged.pos_synthetic ? "true" : "false";
        map.meta["judgment_neg_synthetic"] = judged.neg_synthetic ? "true" : "false";
        out.push_back({t.id, std::move(d), std::move(map)});
    }
    return out;
}

std::vector<AnalyzedRecord> analyze_trace_records(const std::vector<TraceRecord>& records,
                                                  const Hyperparams& h, DetectMethod method) {
    std::vector<AnalyzedRecord> out;
    auto pairs = analyze_trace(records, h, method);
    for (std::size_t i = 0; i < pairs.size(); ++i)
        out.push_back({records[i].id, std::move(pairs[i].first), std::move(pairs[i].second)});
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dualcut: token-level alignment toolkit"};
    app.require_subcommand(1);

    Settings s;
    std::string config_path;
    if (const char* env = std::getenv("DUALCUT_CONFIG")) config_path = env;
    app.add_option("--config", config_path, "config file (flat JSON); overrides $DUALCUT_CONFIG")
        ->expected(1);

    // ---- bench-gen ----
    auto* cmd_bench = app.add_subcommand("bench-gen", "generate the synthetic benchmark");
    std::string bench_out_dir;
    cmd_bench->add_option("--out-dir", bench_out_dir, "output directory")->required();
    cmd_bench->add_option("--seed", s.seed, "generation seed");
    cmd_bench->add_option("--vocab-units", s.vocab_units, "content vocabulary size");
    cmd_bench->add_option("--seq-len", s.seq_len, "instruction length");
    cmd_bench->add_option("--corrupt-k", s.corrupt_k, "bad positions per corrupted response");
    cmd_bench->add_option("--n-pretrain", s.n_pretrain, "pretraining record count");
    cmd_bench->add_option("--n-eval", s.n_eval, "evaluation record count");
    cmd_bench->add_option("--transform", s.transform, "echo | cyclic-shift1");
    cmd_bench->add_option("--max-vocab", s.max_vocab, "tokenizer vocabulary cap");

    // ---- pretrain ----
    auto* cmd_pre = app.add_subcommand("pretrain", "likelihood-train the built-in model");
    std::string pre_data, pre_vocab, pre_model_out, pre_metrics_out;
    cmd_pre->add_option("--data", pre_data, "dataset file")->required();
    cmd_pre->add_option("--vocab", pre_vocab, "vocab file")->required();
    cmd_pre->add_option("--model-out", pre_model_out, "checkpoint path to write")->required();
    cmd_pre->add_option("--metrics-out", pre_metrics_out, "metrics log path (default: beside model)");
    cmd_pre->add_option("--epochs", s.pretrain_epochs, "training epochs");
    cmd_pre->add_option("--batch-size", s.batch_size, "batch size");
    cmd_pre->add_option("--learning-rate", s.learning_rate, "Adam learning rate");
    cmd_pre->add_option("--seed", s.seed, "shuffle seed");
    cmd_pre->add_option("--template", s.tpl, "context template");
    add_model_flags(cmd_pre, s);

    // ---- align ----
    auto* cmd_align = app.add_subcommand("align", "run alignment rounds");
    std::string al_model, al_vocab, al_data, al_out_dir;
    cmd_align->add_option("--model", al_model, "checkpoint to start from")->required();
    cmd_align->add_option("--vocab", al_vocab, "vocab file")->required();
    cmd_align->add_option("--data", al_data, "dataset file")->required();
    cmd_align->add_option("--out", al_out_dir, "output directory")->required();
    cmd_align->add_option("--method", s.method, "mle | cut | dualcut");
    cmd_align->add_option("--rounds", s.rounds, "alignment rounds");
    cmd_align->add_option("--epochs-per-round", s.epochs_per_round, "epochs per round");
    cmd_align->add_option("--batch-size", s.batch_size, "batch size");
    cmd_align->add_option("--learning-rate", s.learning_rate, "Adam learning rate");
    cmd_align->add_option("--seed", s.seed, "shuffle seed");
    cmd_align->add_option("--template", s.tpl, "context template");
    cmd_align->add_option("--saliency-samples", s.saliency_samples,
                          "records per round to dump saliency for");
    cmd_align->add_option("--jobs", s.jobs, "workers for snapshot evaluation");
    cmd_align->add_flag("--no-deterministic", [&s](std::int64_t) { s.deterministic = false; },
                        "allow parallel snapshot evaluation");
    add_hyperparam_flags(cmd_align, s);

    // ---- detect ----
    auto* cmd_detect = app.add_subcommand("detect", "emit detection results");
    std::string dt_model, dt_vocab, dt_data, dt_trace, dt_out, dt_method = "dualcut";
    cmd_detect->add_option("--model", dt_model, "checkpoint (with --data)");
    cmd_detect->add_option("--vocab", dt_vocab, "vocab file (with --data)");
    cmd_detect->add_option("--data", dt_data, "dataset file");
    cmd_detect->add_option("--trace", dt_trace, "probability trace file (bypasses the model)");
    cmd_detect->add_option("--out", dt_out, "output path (default: stdout)");
    cmd_detect->add_option("--method", dt_method, "cut | dualcut");
    cmd_detect->add_option("--template", s.tpl, "context template");
    add_hyperparam_flags(cmd_detect, s);

    // ---- saliency ----
    auto* cmd_sal = app.add_subcommand("saliency", "render token saliency maps");
    std::string sl_model, sl_vocab, sl_data, sl_trace, sl_out, sl_method = "dualcut",
                sl_format = "ansi";
    cmd_sal->add_option("--model", sl_model, "checkpoint (with --data)");
    cmd_sal->add_option("--vocab", sl_vocab, "vocab file (with --data)");
    cmd_sal->add_option("--data", sl_data, "dataset file");
    cmd_sal->add_option("--trace", sl_trace, "probability trace file (bypasses the model)");
    cmd_sal->add_option("--out", sl_out, "output path (default: stdout)");
    cmd_sal->add_option("--method", sl_method, "cut | dualcut");
    cmd_sal->add_option("--format", sl_format, "ansi | html | data");
    cmd_sal->add_option("--template", s.tpl, "context template");
    add_hyperparam_flags(cmd_sal, s);

    // ---- eval ----
    auto* cmd_eval = app.add_subcommand("eval", "benchmark detection quality and shift");
    std::string ev_before, ev_after, ev_bench_dir;
    cmd_eval->add_option("--before", ev_before, "checkpoint before alignment")->required();
    cmd_eval->add_option("--after", ev_after, "checkpoint after alignment")->required();
    cmd_eval->add_option("--bench-dir", ev_bench_dir, "directory from bench-gen")->required();
    cmd_eval->add_option("--template", s.tpl, "context template");
    add_hyperparam_flags(cmd_eval, s);

    // ---- gradcheck ----
    auto* cmd_grad = app.add_subcommand("gradcheck", "finite-difference self-check of all losses");
    std::uint64_t grad_seed = 123;
    cmd_grad->add_option("--seed", grad_seed, "scenario seed");

    // config file applies between defaults and flags: parse once to learn
    // the config path, fold the file in, then re-parse so explicitly passed
    // flags keep the last word
    try {
        app.parse(argc, argv);
        if (!config_path.empty()) {
            apply_config_file(s, config_path);
            app.clear();
            app.parse(argc, argv);
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    auto manifest_beside = [](const std::string& out, const char* cmd) {
        const std::string name = std::string(cmd) + "_manifest.json";
        if (out.empty()) return fs::path(name);
        const fs::path parent = fs::path(out).parent_path();
        return parent.empty() ? fs::path(name) : parent / name;
    };

    if (cmd_bench->parsed()) {
        const fs::path out_dir = bench_out_dir;
        return with_manifest("bench-gen", out_dir / "bench-gen_manifest.json", s, [&](json& man) {
            BenchConfig cfg;
            cfg.vocab_units = s.vocab_units;
            cfg.seq_len = s.seq_len;
            cfg.corrupt_k = s.corrupt_k;
            cfg.n_pretrain = s.n_pretrain;
            cfg.n_eval = s.n_eval;
            cfg.seed = s.seed;
            cfg.transform = bench_transform_from_name(s.transform);

            auto bench = gen_benchmark(cfg);
            fs::create_directories(out_dir);
            save_dataset(out_dir / "pretrain.jsonl", bench.pretrain);
            std::vector<AlignmentTriplet> eval_records;
            for (const auto& lt : bench.eval) eval_records.push_back(lt.triplet);
            save_dataset(out_dir / "eval.jsonl", eval_records);
            write_file(out_dir / "labels.json", labels_to_json(bench.eval) + "\n");
            auto vocab = Vocab::build(bench.corpus, static_cast<std::size_t>(s.max_vocab));
            vocab.save(out_dir / "vocab.txt");

            for (const char* name : {"pretrain.jsonl", "eval.jsonl", "labels.json", "vocab.txt"}) {
                man["outputs"].push_back((out_dir / name).string());
                std::cout << (out_dir / name).string() << "\n";
            }
        });
    }

    if (cmd_pre->parsed()) {
        const fs::path model_out = pre_model_out;
        const fs::path metrics_out =
            pre_metrics_out.empty() ? model_out.parent_path() / "pretrain_metrics.jsonl"
                                    : fs::path(pre_metrics_out);
        const fs::path manifest = model_out.parent_path() / "pretrain_manifest.json";
        return with_manifest("pretrain", manifest, s, [&](json& man) {
            man["inputs"] = {pre_data, pre_vocab};
            auto [records, vocab] = load_data(pre_data, pre_vocab);

            ModelConfig mc;
            mc.vocab_size = static_cast<int>(vocab.size());
            mc.d_model = s.d_model;
            mc.n_layers = s.n_layers;
            mc.n_heads = s.n_heads;
            mc.context_len = s.context_len;
            mc.seed = s.model_seed;

            PretrainConfig pc;
            pc.epochs = s.pretrain_epochs;
            pc.batch_size = s.batch_size;
            pc.learning_rate = s.learning_rate;
            pc.seed = s.seed;

            const auto tpl = context_template_from_name(s.tpl);
            auto result = pretrain(Model::init(mc), records, pc, tpl, vocab);

            result.model.save_checkpoint(model_out);
            std::string log = run_header_line("pretrain", s, vocab, mc) + "\n";
            for (const auto& em : result.metrics) log += em.to_json_line() + "\n";
            write_file(metrics_out, log);

            man["outputs"] = {model_out.string(), metrics_out.string()};
            std::cout << "checkpoint: " << model_out.string() << "\n";
            std::cout << "metrics:    " << metrics_out.string() << "\n";
            std::printf("final epoch mean loss: %.6f\n", result.metrics.back().mean_loss);
        });
    }

    if (cmd_align->parsed()) {
        const fs::path out_dir = al_out_dir;
        return with_manifest("align", out_dir / "align_manifest.json", s, [&](json& man) {
            man["inputs"] = {al_model, al_vocab, al_data};
            auto model = Model::load_checkpoint(al_model);
            auto vocab = Vocab::load(al_vocab);
            auto records = load_dataset(al_data);
            const auto tpl = context_template_from_name(s.tpl);
            validate_hyperparams(s.h);

            TrainConfig tc;
            tc.method = train_method_from_name(s.method);
            tc.rounds = s.rounds;
            tc.epochs_per_round = s.epochs_per_round;
            tc.batch_size = s.batch_size;
            tc.learning_rate = s.learning_rate;
            tc.seed = s.seed;
            tc.deterministic = s.deterministic;
            tc.jobs = s.jobs;

            fs::create_directories(out_dir);

            // per-round saliency for the first smaller-of(n, samples) records,
            // built from the same snapshot detections the round trains on
            RoundObserver observer;
            if (tc.method != TrainMethod::MLE && s.saliency_samples > 0) {
                observer = [&](int round, const std::vector<ProbabilityTriple>& trips,
                               const std::vector<DetectionResult>& dets) {
                    const std::size_t count =
                        std::min(records.size(), static_cast<std::size_t>(s.saliency_samples));
                    for (std::size_t i = 0; i < count; ++i) {
                        auto map = build_map(records[i], trips[i], dets[i], vocab);
                        map.meta["template"] = context_template_name(tpl);
                        map.meta["round"] = std::to_string(round);
                        const fs::path p = out_dir / "saliency" /
                                           ("round_" + std::to_string(round) + "_" + records[i].id +
                                            ".saliency.json");
                        write_file(p, to_data(map) + "\n");
                    }
                };
            }

            auto result = run_alignment(std::move(model), records, tc, s.h, tpl, vocab, observer);

            const fs::path ckpt = out_dir / "model_aligned.ckpt";
            result.model.save_checkpoint(ckpt);
            std::string log =
                run_header_line("align", s, vocab, result.model.config()) + "\n";
            for (const auto& rm : result.metrics) log += rm.to_json_line() + "\n";
            write_file(out_dir / "metrics.jsonl", log);

            man["outputs"] = {ckpt.string(), (out_dir / "metrics.jsonl").string()};
            for (const auto& rm : result.metrics)
                std::printf("round %d: mean_loss=%.6f |U+|=%zu |U-|=%zu (%.1fs)\n", rm.round,
                            rm.mean_loss, rm.count_u_pos, rm.count_u_neg, rm.wall_secs);
        });
    }

    if (cmd_detect->parsed()) {
        return with_manifest("detect", manifest_beside(dt_out, "detect"), s, [&](json& man) {
            const auto method = detect_method_from_name(dt_method);
            validate_hyperparams(s.h);
            std::vector<AnalyzedRecord> analyzed;
            if (!dt_trace.empty()) {
                man["inputs"].push_back(dt_trace);
                analyzed = analyze_trace_records(load_trace(dt_trace), s.h, method);
            } else {
                if (dt_model.empty() || dt_vocab.empty() || dt_data.empty())
                    throw std::runtime_error("detect needs --trace, or --model --vocab --data");
                man["inputs"] = {dt_model, dt_vocab, dt_data};
                auto model = Model::load_checkpoint(dt_model);
                auto [records, vocab] = load_data(dt_data, dt_vocab);
                analyzed = analyze_records(model, records, context_template_from_name(s.tpl), vocab,
                                           s.h, method);
            }
            std::string out;
            for (const auto& a : analyzed) out += a.det.to_json() + "\n";
            if (dt_out.empty()) {
                std::cout << out;
            } else {
                write_file(dt_out, out);
                man["outputs"].push_back(dt_out);
                std::cout << dt_out << "\n";
            }
        });
    }

    if (cmd_sal->parsed()) {
        return with_manifest("saliency", manifest_beside(sl_out, "saliency"), s, [&](json& man) {
            const auto method = detect_method_from_name(sl_method);
            validate_hyperparams(s.h);
            std::vector<AnalyzedRecord> analyzed;
            if (!sl_trace.empty()) {
                man["inputs"].push_back(sl_trace);
                analyzed = analyze_trace_records(load_trace(sl_trace), s.h, method);
            } else {
                if (sl_model.empty() || sl_vocab.empty() || sl_data.empty())
                    throw std::runtime_error("saliency needs --trace, or --model --vocab --data");
                man["inputs"] = {sl_model, sl_vocab, sl_data};
                auto model = Model::load_checkpoint(sl_model);
                auto [records, vocab] = load_data(sl_data, sl_vocab);
                analyzed = analyze_records(model, records, context_template_from_name(s.tpl), vocab,
                                           s.h, method);
            }

            std::string out;
            if (sl_format == "ansi") {
                for (const auto& a : analyzed) {
                    out += "== " + a.id + "\n";
                    out += render_ansi(a.map, s.h);
                }
            } else if (sl_format == "html") {
                std::vector<SaliencyMap> maps;
                for (const auto& a : analyzed) maps.push_back(a.map);
                out = render_html(maps);
            } else if (sl_format == "data") {
                for (const auto& a : analyzed) out += to_data(a.map) + "\n";
            } else {
                throw std::runtime_error("unknown format \"" + sl_format + "\"");
            }

            if (sl_out.empty()) {
                std::cout << out;
            } else {
                write_file(sl_out, out);
                man["outputs"].push_back(sl_out);
                std::cout << sl_out << "\n";
            }
        });
    }

    if (cmd_eval->parsed()) {
        return with_manifest("eval", "eval_manifest.json", s, [&](json& man) {
            man["inputs"] = {ev_before, ev_after, ev_bench_dir};
            const fs::path dir = ev_bench_dir;
            auto before = Model::load_checkpoint(ev_before);
            auto after = Model::load_checkpoint(ev_after);
            auto vocab = Vocab::load(dir / "vocab.txt");
            auto eval_records = load_dataset(dir / "eval.jsonl");
            const std::string labels_json = read_file(dir / "labels.json");
            const auto tpl = context_template_from_name(s.tpl);
            validate_hyperparams(s.h);

            std::vector<LabeledTriplet> labeled;
            for (const auto& r : eval_records)
                labeled.push_back({r, labels_for_id(labels_json, r.id)});

            std::printf("detection quality (before model):\n");
            std::printf("%-8s %-14s %10s %10s %10s\n", "method", "set", "precision", "recall", "f1");
            for (auto method : {DetectMethod::CUT, DetectMethod::DualCUT}) {
                std::vector<DetectionResult> dets;
                for (const auto& lt : labeled) {
                    auto p = response_probs(before, lt.triplet, tpl, vocab);
                    dets.push_back(method == DetectMethod::CUT ? cut_detect(p, s.h)
                                                               : dualcut_detect(p, s.h));
                }
                auto q = eval_detection(dets, labeled);
                std::printf("%-8s %-14s %10.4f %10.4f %10.4f\n", detect_method_name(method),
                            "u_neg vs bad", q.neg.precision, q.neg.recall, q.neg.f1);
                std::printf("%-8s %-14s %10.4f %10.4f %10.4f\n", detect_method_name(method),
                            "u_pos vs good", q.pos.precision, q.pos.recall, q.pos.f1);
            }

            auto shift = eval_shift(before, after, labeled, tpl, vocab);
            std::printf("log-probability shift (after vs before):\n");
            std::printf("  delta_logp_bad  %+.6f\n", shift.delta_logp_bad);
            std::printf("  delta_logp_good %+.6f\n", shift.delta_logp_good);
        });
    }

    if (cmd_grad->parsed()) {
        return with_manifest("gradcheck", "gradcheck_manifest.json", s, [&](json& man) {
            auto reports = run_gradcheck(grad_seed);
            bool all_ok = true;
            std::printf("%-10s %14s %10s\n", "loss", "max_rel_err", "params");
            for (const auto& r : reports) {
                std::printf("%-10s %14.3e %10zu\n", r.loss.c_str(), r.max_rel_err, r.n_params);
                if (r.max_rel_err > kGradCheckTolerance) all_ok = false;
            }
            json rows = json::array();
            for (const auto& r : reports) {
                json row;
                row["loss"] = r.loss;
                row["max_rel_err"] = r.max_rel_err;
                rows.push_back(row);
            }
            man["reports"] = rows;
            if (!all_ok)
                throw std::runtime_error("gradient check exceeded tolerance " +
                                         std::to_string(kGradCheckTolerance));
            std::printf("all losses within %.0e\n", kGradCheckTolerance);
        });
    }

    return 0;
}
