#pragma once

#include <string>
#include <vector>

#include "qg/transformer.hpp"
#include "qg/vocab.hpp"

namespace qg {

struct GeneratorConfig {
    int d_model = 64;
    int n_heads = 4;
    int n_enc_layers = 2;
    int n_dec_layers = 2;
    int d_ff = 128;
    int max_src_len = 64;
    int max_tgt_len = 16;
    int vocab_size = 0;
    double dropout = 0.0;
    uint64_t seed = 0;
    bool tie_embeddings = true;

    void validate() const;  // throws listing every violation
    std::string to_json() const;
    static GeneratorConfig from_json(const std::string& text);
};

struct TeacherForcedResult {
    Tensor logits;                      // [T, V], T = len(tgt) - 1 decoder steps
    std::vector<double> step_log_probs; // log P(tgt[t+1] | tgt[<=t], src)
    double sum_log_prob = 0.0;          // excludes PAD steps
};

// Transformer encoder-decoder over a shared token embedding; the output
// projection is tied to the embedding unless config says otherwise.
class GeneratorModel {
public:
    static GeneratorModel init(const GeneratorConfig& config);

    const GeneratorConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Training-path forward; the returned Var is sum_log_prob (scalar <= 0).
    Var teacher_forced_log_prob(Tape& tape, const TokenSeq& src, const TokenSeq& tgt,
                                TeacherForcedResult* aux = nullptr,
                                const Dropout& drop = {});

    TeacherForcedResult forward_teacher_forced(const TokenSeq& src, const TokenSeq& tgt);

    // Greedy decoding from BOS, argmax ties broken toward the lowest id.
    // Specials other than EOS never appear: their logits are excluded from
    // the argmax. The result excludes BOS/EOS and has at most max_len ids.
    std::vector<int> greedy_decode(const TokenSeq& src, int max_len) const;

    // Incremental decoder over a fixed source; one logits row per step.
    class DecodeSession {
    public:
        DecodeSession(const GeneratorModel& model, const TokenSeq& src);
        Tensor step(int token);  // feed next decoder input token -> logits [V]
        int position() const { return pos_; }

    private:
        const GeneratorModel& model_;
        std::vector<int> src_ids_;
        Tensor memory_;
        std::vector<Tensor> cross_k_, cross_v_;  // per layer [Ts, D]
        std::vector<Tensor> self_k_, self_v_;    // per layer [max_T, D], first pos_ rows live
        Tensor cross_mask_row_;                  // [1, Ts]
        int pos_ = 0;
    };

    void save(const std::string& path, const Vocab& vocab) const;
    static std::pair<GeneratorModel, Vocab> load(const std::string& path);

private:
    GeneratorModel() = default;
    Tensor encode_raw(const TokenSeq& src) const;  // encoder memory [Ts, D]
    Tensor logits_from_hidden_raw(const Tensor& h) const;
    Var logits_from_hidden(Tape& tape, Var h);
    TransformerDims dims() const { return {cfg_.d_model, cfg_.n_heads, cfg_.d_ff}; }

    GeneratorConfig cfg_;
    ParamStore params_;
    int tok_emb_ = -1;
    EncoderStackRef encoder_;
    std::vector<DecLayerRef> decoder_;
    LayerNormRef dec_final_ln_;
    int out_w_ = -1, out_b_ = -1;  // untied only
    Tensor pe_src_, pe_tgt_;
};

}  // namespace qg
