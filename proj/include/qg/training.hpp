#pragma once

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qg/corpus.hpp"
#include "qg/evaluator.hpp"
#include "qg/generator.hpp"
#include "qg/metrics.hpp"

namespace qg {

enum class RewardMode { None, Bleu, BleuPlusSemantic };
RewardMode reward_mode_from_string(const std::string& s);
const char* to_string(RewardMode m);

struct TrainConfig {
    double alpha = 0.197;
    double gamma = 0.09;
    double lr = 1.17e-5;
    int batch_size = 32;
    int accum_steps = 4;  // effective batch processed as accum_steps micro-batches
    int epochs = 10;
    uint64_t seed = 0;
    int max_src_len = 64;
    int max_tgt_len = 16;
    RewardMode reward_mode = RewardMode::BleuPlusSemantic;
    int max_steps = 0;  // optimizer-step cap; 0 means no cap

    // Test hook: fixes every example's reward to this constant.
    std::optional<double> forced_reward;
    // Set by the parser when lr appears in the file; an explicit lr may leave
    // the search range [1e-6, 1e-4], a defaulted one may not.
    bool lr_explicit = false;

    void validate() const;
    static TrainConfig parse(const std::string& text);  // flat key=value lines
    static TrainConfig load(const std::string& path);
    std::string to_key_values() const;
};

struct LossBreakdown {
    double l_base = 0.0;   // batch mean
    double l_rl = 0.0;     // batch mean
    double l_total = 0.0;  // batch mean
    std::vector<RewardBreakdown> rewards;  // per example
};

// The paper's loss pieces.
double loss_base(double sum_log_prob);
double loss_rl(double sum_log_prob, double r);
double loss_total(double l_base_v, double l_rl_v, double gamma);

struct TrainItem {
    TokenSeq src;
    TokenSeq tgt;
};

// Encodes triples into model-ready pairs. Items whose answer cannot fit the
// source budget are skipped and counted.
std::vector<TrainItem> prepare_items(const std::vector<QaTriple>& triples, const Vocab& vocab,
                                     int max_src_len, int max_tgt_len, int* skipped = nullptr);

std::vector<int> strip_specials(const std::vector<int>& ids);

// Reward for one example under the configured mode. Mode none and mode bleu
// use alpha = 1 so the normalization degenerates to r = r1 (0 for none).
RewardBreakdown compute_reward(const std::vector<int>& candidate,
                               const std::vector<int>& reference,
                               const EvaluatorModel* evaluator, const TrainConfig& cfg);

// Forward + reward + gradient accumulation for one micro-batch. Gradients of
// gamma*L_base + (1-gamma)*L_rl (reward treated as a constant) are *summed*
// into the model's ParamStore; the caller divides by the effective batch size.
LossBreakdown train_step(GeneratorModel& model, const EvaluatorModel* evaluator,
                         const std::vector<TrainItem>& micro_batch, const TrainConfig& cfg,
                         Rng* dropout_rng = nullptr);

struct EpochRecord {
    int epoch = 0;
    int steps = 0;  // cumulative optimizer steps
    double train_loss = 0.0;
    double train_l_base = 0.0;
    double dev_loss = 0.0;
    double dev_corpus_bleu = 0.0;
    double dev_mean_reward = 0.0;
    bool best = false;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_dev_loss = std::numeric_limits<double>::infinity();
};

// Epoch loop with seeded shuffling, gradient accumulation and best-checkpoint
// selection by dev loss. When out_dir is non-empty, writes best.qgf and
// final.qgf (atomically, every epoch) plus history.jsonl.
TrainResult train(GeneratorModel& model, const EvaluatorModel* evaluator,
                  const std::vector<TrainItem>& train_items,
                  const std::vector<TrainItem>& dev_items, const TrainConfig& cfg,
                  const Vocab& vocab, const std::string& out_dir = "");

struct ClassStats {
    int count = 0;
    double frequency = 0.0;
    double mean_sentence_bleu = 0.0;
    double mean_cosine = 0.0;
    double mean_reward = 0.0;
    double mean_match_score = 0.0;
};

struct PredictionRecord {
    std::string id;
    std::string candidate;
    std::string reference;
    double bleu = 0.0;
    double cosine_sim = 0.0;
    double reward_value = 0.0;
    double match_score = 0.0;
    std::string question_class;
};

struct EvalReport {
    int n = 0;
    double corpus_bleu = 0.0;        // 0..100
    double mean_sentence_bleu = 0.0; // 0..1
    double mean_cosine = 0.0;
    double mean_reward = 0.0;
    double mean_match_score = 0.0;
    double alpha = 0.0;
    std::map<std::string, ClassStats> classes;  // keyed by question class name

    std::string to_json() const;
    static EvalReport from_json(const std::string& text);
};

// Greedy-decodes every test example and aggregates metrics; the per-class
// table groups by the class of the *generated* question. The reported reward
// is always the blended normalized reward at cfg.alpha. decode_hook, when
// set, substitutes the model's decoder (test use).
EvalReport evaluate(const GeneratorModel& model, const EvaluatorModel& evaluator,
                    const std::vector<QaTriple>& test_set, const Vocab& vocab,
                    const TrainConfig& cfg, std::vector<PredictionRecord>* predictions = nullptr,
                    const std::function<std::vector<int>(size_t)>& decode_hook = nullptr);

// Batch scoring line format: {"id", "candidate", "reference"} in,
// plus {"bleu", "cosine", "reward", "match_score", "class"} out.
std::string prediction_jsonl(const std::vector<PredictionRecord>& predictions);

}  // namespace qg
