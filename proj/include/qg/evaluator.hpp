#pragma once

#include <string>
#include <vector>

#include "qg/transformer.hpp"
#include "qg/vocab.hpp"

namespace qg {

struct EvaluatorConfig {
    int d_model = 64;
    int n_heads = 4;
    int n_layers = 2;
    int d_ff = 128;
    int max_len = 80;
    int vocab_size = 0;
    uint64_t seed = 0;

    void validate() const;
    std::string to_json() const;
    static EvaluatorConfig from_json(const std::string& text);
};

struct RtdCorruption {
    std::vector<int> corrupted_ids;
    std::vector<bool> labels;  // true iff replaced with a different token
};

// Each non-special position is replaced with probability `rate` by a draw
// from unigram_dist (resampled once if it hits the original token).
RtdCorruption corrupt_for_rtd(const std::vector<int>& ids, double rate,
                              const std::vector<double>& unigram_dist, Rng& rng);

// Unigram distribution over non-special tokens of a corpus; specials get 0.
std::vector<double> unigram_distribution(const std::vector<TokenSeq>& corpus, int vocab_size);

struct RtdEpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double holdout_loss = 0.0;
    double holdout_accuracy = 0.0;
    double holdout_replaced_accuracy = 0.0;
};

// Transformer encoder with a per-token replaced-token-detection head. Once
// frozen, any mutation attempt throws and the parameter hash is pinned.
class EvaluatorModel {
public:
    static EvaluatorModel init(const EvaluatorConfig& config);

    const EvaluatorConfig& config() const { return cfg_; }
    const ParamStore& params() const { return params_; }
    ParamStore& mutable_params();  // throws when frozen

    bool frozen() const { return frozen_; }
    const std::string& frozen_hash() const { return frozen_hash_; }
    void freeze();  // idempotent
    std::string current_param_hash() const;

    // Binary cross-entropy RTD pretraining over non-special positions.
    std::vector<RtdEpochStats> pretrain_rtd(const std::vector<TokenSeq>& corpus, double rate,
                                            int epochs, double lr, uint64_t seed,
                                            double holdout_fraction = 0.1);

    // Final-layer hidden state at CLS; CLS is prepended when absent.
    Tensor embed_cls(const std::vector<int>& ids) const;
    // Final-layer hidden states for the ids exactly as given.
    Tensor token_embeddings(const std::vector<int>& ids) const;
    // Per-position RTD logits [T, 1] for corrupted input (raw path).
    Tensor rtd_logits(const std::vector<int>& ids) const;

    void save(const std::string& path, const Vocab& vocab) const;
    static std::pair<EvaluatorModel, Vocab> load(const std::string& path);

private:
    EvaluatorModel() = default;
    Tensor encode_hidden(const std::vector<int>& ids) const;
    TransformerDims dims() const { return {cfg_.d_model, cfg_.n_heads, cfg_.d_ff}; }

    EvaluatorConfig cfg_;
    ParamStore params_;
    int tok_emb_ = -1;
    EncoderStackRef encoder_;
    int rtd_w_ = -1, rtd_b_ = -1;
    Tensor pe_;
    bool frozen_ = false;
    std::string frozen_hash_;
};

}  // namespace qg
