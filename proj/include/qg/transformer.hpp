#pragma once

#include <string>
#include <vector>

#include "qg/autodiff.hpp"
#include "qg/common.hpp"

namespace qg {

struct TransformerDims {
    int d_model = 64;
    int n_heads = 4;
    int d_ff = 128;
};

struct LayerNormRef {
    int gain = -1, bias = -1;
};
// No key bias: a bias added to every key shifts each score row by a
// constant, which the softmax cancels exactly.
struct AttentionRef {
    int wq = -1, bq = -1, wk = -1, wv = -1, bv = -1, wo = -1, bo = -1;
};
struct FfnRef {
    int w1 = -1, b1 = -1, w2 = -1, b2 = -1;
};
struct EncLayerRef {
    LayerNormRef ln1;
    AttentionRef attn;
    LayerNormRef ln2;
    FfnRef ffn;
};
struct DecLayerRef {
    LayerNormRef ln1;
    AttentionRef self_attn;
    LayerNormRef ln2;
    AttentionRef cross_attn;
    LayerNormRef ln3;
    FfnRef ffn;
};
struct EncoderStackRef {
    std::vector<EncLayerRef> layers;
    LayerNormRef final_ln;
};

// Optional dropout applied to residual branches during training.
struct Dropout {
    double p = 0.0;
    Rng* rng = nullptr;
    bool active() const { return p > 0.0 && rng != nullptr; }
};

Tensor init_matrix(const std::vector<int>& shape, Rng& rng);  // N(0, 0.02)

LayerNormRef register_layer_norm(ParamStore& ps, const std::string& prefix, int d);
AttentionRef register_attention(ParamStore& ps, const std::string& prefix, int d, Rng& rng);
FfnRef register_ffn(ParamStore& ps, const std::string& prefix, int d, int d_ff, Rng& rng);
EncLayerRef register_enc_layer(ParamStore& ps, const std::string& prefix,
                               const TransformerDims& dims, Rng& rng);
DecLayerRef register_dec_layer(ParamStore& ps, const std::string& prefix,
                               const TransformerDims& dims, Rng& rng);
EncoderStackRef register_encoder_stack(ParamStore& ps, const std::string& prefix, int n_layers,
                                       const TransformerDims& dims, Rng& rng);

// Sinusoidal table: PE(pos, 2i) = sin(pos / 10000^(2i/d)),
// PE(pos, 2i+1) = cos(pos / 10000^(2i/d)). d_model must be even.
Tensor positional_encoding(int length, int d_model);

// Additive attention masks (0 keeps, -1e9 blocks).
Tensor causal_mask(int t);
Tensor pad_key_mask(const std::vector<int>& key_ids, int rows);
Tensor combine_masks(const Tensor* a, const Tensor* b);  // either may be null

// ---- tape forward (training path), pre-norm residual blocks ----

Var attention(Tape& tape, ParamStore& ps, const AttentionRef& ar, Var q_in, Var kv_in,
              const Tensor* mask, const TransformerDims& dims);
Var layer_norm(Tape& tape, ParamStore& ps, const LayerNormRef& lr, Var x);
Var ffn(Tape& tape, ParamStore& ps, const FfnRef& fr, Var x, const Dropout& drop);
Var enc_layer(Tape& tape, ParamStore& ps, const EncLayerRef& lr, Var x, const Tensor* self_mask,
              const TransformerDims& dims, const Dropout& drop);
Var dec_layer(Tape& tape, ParamStore& ps, const DecLayerRef& lr, Var x, Var memory,
              const Tensor* self_mask, const Tensor* cross_mask, const TransformerDims& dims,
              const Dropout& drop);
Var encoder_stack(Tape& tape, ParamStore& ps, const EncoderStackRef& sr, Var x,
                  const Tensor* self_mask, const TransformerDims& dims, const Dropout& drop);

// ---- raw inference forward (no tape) ----

Tensor layer_norm_raw(const ParamStore& ps, const LayerNormRef& lr, const Tensor& x);
Tensor gelu_raw(const Tensor& x);
Tensor ffn_raw(const ParamStore& ps, const FfnRef& fr, const Tensor& x);
Tensor attention_raw(const ParamStore& ps, const AttentionRef& ar, const Tensor& q_in,
                     const Tensor& kv_in, const Tensor* mask, const TransformerDims& dims);
Tensor enc_layer_raw(const ParamStore& ps, const EncLayerRef& lr, const Tensor& x,
                     const Tensor* self_mask, const TransformerDims& dims);
Tensor encoder_stack_raw(const ParamStore& ps, const EncoderStackRef& sr, const Tensor& x,
                         const Tensor* self_mask, const TransformerDims& dims);

// Multi-head attention over precomputed keys/values (for incremental
// decoding). q: [1, d]; k, v: [t, d].
Tensor attention_heads_raw(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* mask,
                           const TransformerDims& dims);
Tensor linear_raw(const ParamStore& ps, int w, int b, const Tensor& x);

}  // namespace qg
