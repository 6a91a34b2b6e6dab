#include "qg/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include <CLI11.hpp>

#include "qg/corpus.hpp"
#include "qg/evaluator.hpp"
#include "qg/generator.hpp"
#include "qg/metrics.hpp"
#include "qg/training.hpp"
#include "qg/vocab.hpp"

#ifndef QG_VERSION
#define QG_VERSION "0.1.0"
#endif

namespace qg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

class ManifestWriter {
public:
    ManifestWriter(std::string command, std::string path)
        : command_(std::move(command)), path_(std::move(path)),
          start_(std::chrono::steady_clock::now()) {}

    json inputs = json::object();
    json outputs = json::object();
    uint64_t seed = 0;
    std::string config_path;

    void write() const {
        auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_);
        json j = {{"command", command_},
                  {"version", std::string("qg-") + QG_VERSION},
                  {"seed", seed},
                  {"config", config_path},
                  {"inputs", inputs},
                  {"outputs", outputs},
                  {"duration_seconds", elapsed.count()},
                  {"timestamp_utc", utc_now()}};
        atomic_write_file(path_, j.dump(2) + "\n");
    }

private:
    std::string command_;
    std::string path_;
    std::chrono::steady_clock::time_point start_;
};

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw InputError("missing file: " + path);
}

// Evaluator pretraining knobs (key=value file, all optional).
struct PretrainConfig {
    int d_model = 64;
    int n_heads = 4;
    int n_layers = 2;
    int d_ff = 128;
    int max_len = 80;
    double rtd_rate = 0.15;
    int epochs = 20;
    double lr = 1e-3;
    uint64_t seed = 1;
    double holdout_fraction = 0.1;
    bool skip_rtd = false;  // degraded baseline: freeze the random init

    static PretrainConfig parse(const std::string& text) {
        PretrainConfig cfg;
        std::istringstream ss(text);
        std::string line;
        int lineno = 0;
        while (std::getline(ss, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            size_t eq = t.find('=');
            if (eq == std::string::npos) {
                throw InputError("pretrain config line " + std::to_string(lineno) +
                                 ": expected key=value");
            }
            std::string key = trim(t.substr(0, eq));
            std::string value = trim(t.substr(eq + 1));
            if (key == "d_model") cfg.d_model = std::stoi(value);
            else if (key == "n_heads") cfg.n_heads = std::stoi(value);
            else if (key == "n_layers") cfg.n_layers = std::stoi(value);
            else if (key == "d_ff") cfg.d_ff = std::stoi(value);
            else if (key == "max_len") cfg.max_len = std::stoi(value);
            else if (key == "rtd_rate") cfg.rtd_rate = std::stod(value);
            else if (key == "epochs") cfg.epochs = std::stoi(value);
            else if (key == "lr") cfg.lr = std::stod(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "holdout_fraction") cfg.holdout_fraction = std::stod(value);
            else if (key == "skip_rtd") cfg.skip_rtd = (value == "true" || value == "1");
            else throw InputError("pretrain config: unknown key '" + key + "'");
        }
        return cfg;
    }
};

std::vector<TokenSeq> build_rtd_corpus(const std::vector<QaTriple>& triples, const Vocab& vocab,
                                       int max_len, int max_tgt_len) {
    std::vector<TokenSeq> corpus;
    for (const auto& t : triples) {
        std::vector<int> ctx = vocab.encode(t.context);
        std::vector<int> ans = vocab.encode(t.answer);
        std::vector<int> q = vocab.encode(t.question);
        if (!ans.empty() && static_cast<int>(ans.size()) + 3 <= max_len) {
            corpus.push_back(assemble_input(ctx, ans, max_len));
        }
        if (!q.empty()) corpus.push_back(assemble_target(q, max_tgt_len));
    }
    if (corpus.empty()) throw InputError("no usable sequences for RTD pretraining");
    return corpus;
}

int cmd_ingest(const std::string& squad_path, int synthetic_n, const std::string& out_dir,
               uint64_t seed, double dev_fraction) {
    if ((squad_path.empty() && synthetic_n <= 0) || (!squad_path.empty() && synthetic_n > 0)) {
        throw UsageError("ingest: provide exactly one of --squad or --synthetic");
    }
    fs::create_directories(out_dir);
    ManifestWriter manifest("ingest", out_dir + "/manifest.json");
    manifest.seed = seed;

    LoadWarnings warnings;
    std::vector<QaTriple> triples;
    if (!squad_path.empty()) {
        require_file(squad_path);
        triples = load_squad(squad_path, &warnings);
        manifest.inputs["squad"] = squad_path;
    } else {
        triples = generate_synthetic(synthetic_n, seed);
        manifest.inputs["synthetic"] = synthetic_n;
    }
    if (triples.empty()) throw InputError("ingest: no triples loaded");

    // Test cut of 10% before the train/dev split (synthetic data has no
    // predefined test file; applied uniformly to both sources).
    Rng rng(seed);
    uint64_t shuffle_seed = rng.next_u64();
    uint64_t split_seed = rng.next_u64();
    std::vector<size_t> order(triples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(shuffle_seed);
    shuffle_rng.shuffle(order);
    size_t test_n = static_cast<size_t>(0.10 * static_cast<double>(triples.size()));
    if (test_n == 0 && triples.size() >= 3) test_n = 1;
    std::vector<QaTriple> test, rest;
    for (size_t i = 0; i < order.size(); ++i) {
        (i < test_n ? test : rest).push_back(triples[order[i]]);
    }
    auto [train_set, dev_set] = split_train_dev(rest, dev_fraction, split_seed);

    save_squad(train_set, out_dir + "/train.json", "train");
    save_squad(dev_set, out_dir + "/dev.json", "dev");
    save_squad(test, out_dir + "/test.json", "test");
    Vocab vocab = Vocab::build(train_set, /*min_freq=*/1, /*max_size=*/30000);
    vocab.save(out_dir + "/vocab.tsv");

    manifest.outputs = {{"train", out_dir + "/train.json"},
                        {"dev", out_dir + "/dev.json"},
                        {"test", out_dir + "/test.json"},
                        {"vocab", out_dir + "/vocab.tsv"},
                        {"counts",
                         {{"train", train_set.size()},
                          {"dev", dev_set.size()},
                          {"test", test.size()},
                          {"skipped_no_answers", warnings.skipped_no_answers},
                          {"cleared_answer_offsets", warnings.cleared_answer_offsets}}}};
    manifest.write();
    std::cout << "ingest: train=" << train_set.size() << " dev=" << dev_set.size()
              << " test=" << test.size() << " vocab=" << vocab.size() << "\n";
    return 0;
}

int cmd_pretrain_evaluator(const std::string& data_dir, const std::string& config_path,
                           const std::string& out_ckpt) {
    std::string vocab_path = data_dir + "/vocab.tsv";
    if (!fs::exists(vocab_path)) throw InputError("missing vocab: " + vocab_path);
    require_file(data_dir + "/train.json");

    PretrainConfig pc;
    if (!config_path.empty()) {
        require_file(config_path);
        pc = PretrainConfig::parse(read_text_file(config_path));
    }
    Vocab vocab = Vocab::load(vocab_path);
    std::vector<QaTriple> train_set = load_squad(data_dir + "/train.json");

    ManifestWriter manifest("pretrain-evaluator", out_ckpt + ".manifest.json");
    manifest.seed = pc.seed;
    manifest.config_path = config_path;
    manifest.inputs = {{"data", data_dir}};

    EvaluatorConfig ec;
    ec.d_model = pc.d_model;
    ec.n_heads = pc.n_heads;
    ec.n_layers = pc.n_layers;
    ec.d_ff = pc.d_ff;
    ec.max_len = pc.max_len;
    ec.vocab_size = vocab.size();
    ec.seed = pc.seed;
    EvaluatorModel model = EvaluatorModel::init(ec);

    std::vector<RtdEpochStats> history;
    if (!pc.skip_rtd) {
        std::vector<TokenSeq> corpus =
            build_rtd_corpus(train_set, vocab, pc.max_len, std::min(pc.max_len, 24));
        history = model.pretrain_rtd(corpus, pc.rtd_rate, pc.epochs, pc.lr, pc.seed,
                                     pc.holdout_fraction);
    }
    model.freeze();
    if (out_ckpt.find('/') != std::string::npos) {
        fs::create_directories(fs::path(out_ckpt).parent_path());
    }
    model.save(out_ckpt, vocab);

    std::ostringstream hist;
    for (const auto& st : history) {
        json j = {{"epoch", st.epoch},
                  {"train_loss", st.train_loss},
                  {"holdout_loss", st.holdout_loss},
                  {"holdout_accuracy", st.holdout_accuracy},
                  {"holdout_replaced_accuracy", st.holdout_replaced_accuracy}};
        hist << j.dump() << "\n";
    }
    atomic_write_file(out_ckpt + ".history.jsonl", hist.str());

    manifest.outputs = {{"checkpoint", out_ckpt},
                        {"history", out_ckpt + ".history.jsonl"},
                        {"frozen", true},
                        {"param_hash", model.frozen_hash()}};
    manifest.write();
    std::cout << "pretrain-evaluator: frozen hash " << model.frozen_hash();
    if (!history.empty()) {
        std::cout << ", final holdout loss " << history.back().holdout_loss;
    }
    std::cout << "\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& evaluator_ckpt,
              const std::string& config_path, const std::string& reward_mode_flag,
              const std::string& out_dir) {
    require_file(data_dir + "/vocab.tsv");
    require_file(data_dir + "/train.json");
    require_file(data_dir + "/dev.json");
    require_file(evaluator_ckpt);

    TrainConfig cfg;
    if (!config_path.empty()) {
        require_file(config_path);
        cfg = TrainConfig::load(config_path);
    }
    if (!reward_mode_flag.empty()) cfg.reward_mode = reward_mode_from_string(reward_mode_flag);
    cfg.validate();

    Vocab vocab = Vocab::load(data_dir + "/vocab.tsv");
    auto [evaluator, eval_vocab] = EvaluatorModel::load(evaluator_ckpt);
    if (eval_vocab.word_list() != vocab.word_list()) {
        throw InputError("evaluator checkpoint vocab does not match " + data_dir + "/vocab.tsv");
    }
    if (!evaluator.frozen()) {
        throw ContractError("train: evaluator checkpoint is not frozen");
    }

    std::vector<QaTriple> train_raw = load_squad(data_dir + "/train.json");
    std::vector<QaTriple> dev_raw = load_squad(data_dir + "/dev.json");
    int skipped_train = 0, skipped_dev = 0;
    std::vector<TrainItem> train_items =
        prepare_items(train_raw, vocab, cfg.max_src_len, cfg.max_tgt_len, &skipped_train);
    std::vector<TrainItem> dev_items =
        prepare_items(dev_raw, vocab, cfg.max_src_len, cfg.max_tgt_len, &skipped_dev);

    GeneratorConfig gc;
    gc.vocab_size = vocab.size();
    gc.max_src_len = cfg.max_src_len;
    gc.max_tgt_len = cfg.max_tgt_len;
    gc.seed = cfg.seed;
    GeneratorModel model = GeneratorModel::init(gc);

    fs::create_directories(out_dir);
    ManifestWriter manifest("train", out_dir + "/manifest.json");
    manifest.seed = cfg.seed;
    manifest.config_path = config_path;
    manifest.inputs = {{"data", data_dir}, {"evaluator", evaluator_ckpt}};

    atomic_write_file(out_dir + "/config.txt", cfg.to_key_values());
    TrainResult result = train(model, &evaluator, train_items, dev_items, cfg, vocab, out_dir);

    manifest.outputs = {{"best", out_dir + "/best.qgf"},
                        {"final", out_dir + "/final.qgf"},
                        {"history", out_dir + "/history.jsonl"},
                        {"best_epoch", result.best_epoch},
                        {"best_dev_loss", result.best_dev_loss},
                        {"skipped_train_items", skipped_train},
                        {"skipped_dev_items", skipped_dev}};
    manifest.write();
    std::cout << "train: " << result.history.size() << " epochs, best epoch "
              << result.best_epoch << " (dev loss " << result.best_dev_loss << ")\n";
    return 0;
}

int cmd_generate(const std::string& model_ckpt, const std::string& context,
                 const std::string& answer) {
    if (trim(answer).empty()) throw UsageError("generate: --answer must be non-empty");
    require_file(model_ckpt);
    auto [model, vocab] = GeneratorModel::load(model_ckpt);
    std::vector<int> ctx = vocab.encode(context);
    std::vector<int> ans = vocab.encode(answer);
    if (ans.empty()) throw UsageError("generate: answer has no tokens");
    TokenSeq src = assemble_input(ctx, ans, model.config().max_src_len);
    std::vector<int> out = model.greedy_decode(src, model.config().max_tgt_len - 2);
    std::cout << vocab.decode(out) << "\n";
    return 0;
}

int cmd_evaluate(const std::string& model_ckpt, const std::string& evaluator_ckpt,
                 const std::string& data_dir, const std::string& out_path) {
    require_file(model_ckpt);
    require_file(evaluator_ckpt);
    require_file(data_dir + "/test.json");

    auto [model, vocab] = GeneratorModel::load(model_ckpt);
    auto [evaluator, eval_vocab] = EvaluatorModel::load(evaluator_ckpt);
    if (eval_vocab.word_list() != vocab.word_list()) {
        throw InputError("evaluator and generator checkpoints use different vocabularies");
    }
    std::vector<QaTriple> test_set = load_squad(data_dir + "/test.json");

    ManifestWriter manifest("evaluate", out_path + ".manifest.json");
    manifest.inputs = {{"model", model_ckpt}, {"evaluator", evaluator_ckpt}, {"data", data_dir}};

    TrainConfig cfg;
    cfg.max_src_len = model.config().max_src_len;
    cfg.max_tgt_len = model.config().max_tgt_len;

    std::vector<PredictionRecord> predictions;
    EvalReport report = evaluate(model, evaluator, test_set, vocab, cfg, &predictions);
    if (out_path.find('/') != std::string::npos) {
        fs::create_directories(fs::path(out_path).parent_path());
    }
    atomic_write_file(out_path, report.to_json());
    atomic_write_file(out_path + ".predictions.jsonl", prediction_jsonl(predictions));

    manifest.outputs = {{"report", out_path},
                        {"predictions", out_path + ".predictions.jsonl"},
                        {"n", report.n},
                        {"corpus_bleu", report.corpus_bleu}};
    manifest.write();
    std::cout << "evaluate: n=" << report.n << " corpus_bleu=" << report.corpus_bleu
              << " mean_reward=" << report.mean_reward << "\n";
    return 0;
}

int cmd_diff(const std::string& path_a, const std::string& path_b) {
    require_file(path_a);
    require_file(path_b);
    EvalReport a = EvalReport::from_json(read_text_file(path_a));
    EvalReport b = EvalReport::from_json(read_text_file(path_b));
    auto name = [](const std::string& p) { return fs::path(p).filename().string(); };
    std::printf("%-32s %10s %12s %12s %12s\n", "Model", "BLEU", "MatchScore", "MeanCosine",
                "MeanReward");
    std::printf("%-32s %10.2f %12.4f %12.4f %12.4f\n", name(path_a).c_str(), a.corpus_bleu,
                a.mean_match_score, a.mean_cosine, a.mean_reward);
    std::printf("%-32s %10.2f %12.4f %12.4f %12.4f\n", name(path_b).c_str(), b.corpus_bleu,
                b.mean_match_score, b.mean_cosine, b.mean_reward);
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"question generation with a generator-evaluator reward loop"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "load or synthesize a corpus and split it");
    std::string squad_path, out_dir;
    int synthetic_n = 0;
    uint64_t seed = 7;
    double dev_fraction = 0.06;
    ingest->add_option("--squad", squad_path, "SQuAD v1.1 JSON file");
    ingest->add_option("--synthetic", synthetic_n, "number of synthetic triples");
    ingest->add_option("--out", out_dir, "output directory")->required();
    ingest->add_option("--seed", seed, "random seed");
    ingest->add_option("--dev-fraction", dev_fraction, "dev fraction of the non-test data");

    // pretrain-evaluator
    auto* pre = app.add_subcommand("pretrain-evaluator", "RTD-pretrain and freeze the evaluator");
    std::string pre_data, pre_config, pre_out;
    pre->add_option("--data", pre_data, "ingest output directory")->required();
    pre->add_option("--config", pre_config, "key=value pretrain config");
    pre->add_option("--out", pre_out, "checkpoint path")->required();

    // train
    auto* tr = app.add_subcommand("train", "train the generator");
    std::string tr_data, tr_eval, tr_config, tr_mode, tr_out;
    tr->add_option("--data", tr_data, "ingest output directory")->required();
    tr->add_option("--evaluator", tr_eval, "frozen evaluator checkpoint")->required();
    tr->add_option("--config", tr_config, "key=value train config");
    tr->add_option("--reward-mode", tr_mode, "none|bleu|bleu+semantic");
    tr->add_option("--out", tr_out, "output directory")->required();

    // generate
    auto* gen = app.add_subcommand("generate", "greedy-decode one question");
    std::string gen_model, gen_context, gen_answer;
    gen->add_option("--model", gen_model, "generator checkpoint")->required();
    gen->add_option("--context", gen_context, "context text");
    gen->add_option("--answer", gen_answer, "answer text")->required();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "score a model on the test split");
    std::string ev_model, ev_eval, ev_data, ev_out;
    ev->add_option("--model", ev_model, "generator checkpoint")->required();
    ev->add_option("--evaluator", ev_eval, "frozen evaluator checkpoint")->required();
    ev->add_option("--data", ev_data, "ingest output directory")->required();
    ev->add_option("--out", ev_out, "report path")->required();

    // diff
    auto* df = app.add_subcommand("diff", "compare two evaluation reports");
    std::string df_a, df_b;
    df->add_option("report_a", df_a, "first report")->required();
    df->add_option("report_b", df_b, "second report")->required();

    try {
        app.parse(argc, argv);
        if (ingest->parsed()) {
            return cmd_ingest(squad_path, synthetic_n, out_dir, seed, dev_fraction);
        }
        if (pre->parsed()) return cmd_pretrain_evaluator(pre_data, pre_config, pre_out);
        if (tr->parsed()) return cmd_train(tr_data, tr_eval, tr_config, tr_mode, tr_out);
        if (gen->parsed()) return cmd_generate(gen_model, gen_context, gen_answer);
        if (ev->parsed()) return cmd_evaluate(ev_model, ev_eval, ev_data, ev_out);
        if (df->parsed()) return cmd_diff(df_a, df_b);
        throw UsageError("no subcommand given");
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 3;
    } catch (const ContractError& e) {
        std::cerr << "contract violation: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace qg
