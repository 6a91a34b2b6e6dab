#include "qg/transformer.hpp"

#include <cmath>

#include "qg/vocab.hpp"

namespace qg {

namespace {
constexpr double kInitStd = 0.02;
constexpr double kMaskValue = -1e9;
constexpr double kLnEps = 1e-5;
}  // namespace

Tensor init_matrix(const std::vector<int>& shape, Rng& rng) {
    Tensor t(shape);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = kInitStd * rng.normal();
    return t;
}

LayerNormRef register_layer_norm(ParamStore& ps, const std::string& prefix, int d) {
    LayerNormRef r;
    r.gain = ps.add(prefix + ".gain", Tensor::full({d}, 1.0));
    r.bias = ps.add(prefix + ".bias", Tensor::zeros({d}));
    return r;
}

AttentionRef register_attention(ParamStore& ps, const std::string& prefix, int d, Rng& rng) {
    AttentionRef r;
    r.wq = ps.add(prefix + ".wq", init_matrix({d, d}, rng));
    r.bq = ps.add(prefix + ".bq", Tensor::zeros({d}));
    r.wk = ps.add(prefix + ".wk", init_matrix({d, d}, rng));
    r.wv = ps.add(prefix + ".wv", init_matrix({d, d}, rng));
    r.bv = ps.add(prefix + ".bv", Tensor::zeros({d}));
    r.wo = ps.add(prefix + ".wo", init_matrix({d, d}, rng));
    r.bo = ps.add(prefix + ".bo", Tensor::zeros({d}));
    return r;
}

FfnRef register_ffn(ParamStore& ps, const std::string& prefix, int d, int d_ff, Rng& rng) {
    FfnRef r;
    r.w1 = ps.add(prefix + ".w1", init_matrix({d, d_ff}, rng));
    r.b1 = ps.add(prefix + ".b1", Tensor::zeros({d_ff}));
    r.w2 = ps.add(prefix + ".w2", init_matrix({d_ff, d}, rng));
    r.b2 = ps.add(prefix + ".b2", Tensor::zeros({d}));
    return r;
}

EncLayerRef register_enc_layer(ParamStore& ps, const std::string& prefix,
                               const TransformerDims& dims, Rng& rng) {
    EncLayerRef r;
    r.ln1 = register_layer_norm(ps, prefix + ".ln1", dims.d_model);
    r.attn = register_attention(ps, prefix + ".attn", dims.d_model, rng);
    r.ln2 = register_layer_norm(ps, prefix + ".ln2", dims.d_model);
    r.ffn = register_ffn(ps, prefix + ".ffn", dims.d_model, dims.d_ff, rng);
    return r;
}

DecLayerRef register_dec_layer(ParamStore& ps, const std::string& prefix,
                               const TransformerDims& dims, Rng& rng) {
    DecLayerRef r;
    r.ln1 = register_layer_norm(ps, prefix + ".ln1", dims.d_model);
    r.self_attn = register_attention(ps, prefix + ".self", dims.d_model, rng);
    r.ln2 = register_layer_norm(ps, prefix + ".ln2", dims.d_model);
    r.cross_attn = register_attention(ps, prefix + ".cross", dims.d_model, rng);
    r.ln3 = register_layer_norm(ps, prefix + ".ln3", dims.d_model);
    r.ffn = register_ffn(ps, prefix + ".ffn", dims.d_model, dims.d_ff, rng);
    return r;
}

EncoderStackRef register_encoder_stack(ParamStore& ps, const std::string& prefix, int n_layers,
                                       const TransformerDims& dims, Rng& rng) {
    EncoderStackRef r;
    for (int i = 0; i < n_layers; ++i) {
        r.layers.push_back(register_enc_layer(ps, prefix + ".L" + std::to_string(i), dims, rng));
    }
    r.final_ln = register_layer_norm(ps, prefix + ".final_ln", dims.d_model);
    return r;
}

Tensor positional_encoding(int length, int d_model) {
    if (d_model % 2 != 0) throw ContractError("positional_encoding: d_model must be even");
    Tensor pe({length, d_model});
    for (int pos = 0; pos < length; ++pos) {
        for (int i = 0; i < d_model / 2; ++i) {
            double rate = std::pow(10000.0, 2.0 * i / d_model);
            pe.at(pos, 2 * i) = std::sin(pos / rate);
            pe.at(pos, 2 * i + 1) = std::cos(pos / rate);
        }
    }
    return pe;
}

Tensor causal_mask(int t) {
    Tensor m({t, t});
    for (int i = 0; i < t; ++i) {
        for (int j = i + 1; j < t; ++j) m.at(i, j) = kMaskValue;
    }
    return m;
}

Tensor pad_key_mask(const std::vector<int>& key_ids, int rows) {
    Tensor m({rows, static_cast<int>(key_ids.size())});
    for (int j = 0; j < static_cast<int>(key_ids.size()); ++j) {
        if (key_ids[static_cast<size_t>(j)] == PAD) {
            for (int i = 0; i < rows; ++i) m.at(i, j) = kMaskValue;
        }
    }
    return m;
}

Tensor combine_masks(const Tensor* a, const Tensor* b) {
    if (a && b) return add(*a, *b);
    if (a) return *a;
    if (b) return *b;
    return Tensor();
}

// ---- tape forward ----

Var layer_norm(Tape& tape, ParamStore& ps, const LayerNormRef& lr, Var x) {
    return tape.layer_norm(x, tape.param(ps, lr.gain), tape.param(ps, lr.bias));
}

namespace {

Tensor dropout_mask(const std::vector<int>& shape, const Dropout& drop) {
    Tensor m(shape);
    const double keep = 1.0 - drop.p;
    for (int64_t i = 0; i < m.size(); ++i) {
        m[i] = drop.rng->uniform() < keep ? 1.0 / keep : 0.0;
    }
    return m;
}

Var maybe_dropout(Tape& tape, Var x, const Dropout& drop) {
    if (!drop.active()) return x;
    return tape.mul_mask(x, dropout_mask(tape.value(x).shape(), drop));
}

}  // namespace

Var attention(Tape& tape, ParamStore& ps, const AttentionRef& ar, Var q_in, Var kv_in,
              const Tensor* mask, const TransformerDims& dims) {
    const int d = dims.d_model, heads = dims.n_heads;
    const int dh = d / heads;
    Var q = tape.add_row_bias(tape.matmul(q_in, tape.param(ps, ar.wq)), tape.param(ps, ar.bq));
    Var k = tape.matmul(kv_in, tape.param(ps, ar.wk));
    Var v = tape.add_row_bias(tape.matmul(kv_in, tape.param(ps, ar.wv)), tape.param(ps, ar.bv));
    std::vector<Var> ctx;
    ctx.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Var qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
        Var vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
        Var scores = tape.scale(tape.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
        Var attn = tape.softmax_rows(scores, mask);
        ctx.push_back(tape.matmul(attn, vh));
    }
    Var merged = tape.concat_cols(ctx);
    return tape.add_row_bias(tape.matmul(merged, tape.param(ps, ar.wo)), tape.param(ps, ar.bo));
}

Var ffn(Tape& tape, ParamStore& ps, const FfnRef& fr, Var x, const Dropout& drop) {
    Var h = tape.add_row_bias(tape.matmul(x, tape.param(ps, fr.w1)), tape.param(ps, fr.b1));
    h = tape.gelu(h);
    h = maybe_dropout(tape, h, drop);
    return tape.add_row_bias(tape.matmul(h, tape.param(ps, fr.w2)), tape.param(ps, fr.b2));
}

Var enc_layer(Tape& tape, ParamStore& ps, const EncLayerRef& lr, Var x, const Tensor* self_mask,
              const TransformerDims& dims, const Dropout& drop) {
    Var normed = layer_norm(tape, ps, lr.ln1, x);
    Var attn_out = attention(tape, ps, lr.attn, normed, normed, self_mask, dims);
    x = tape.add(x, maybe_dropout(tape, attn_out, drop));
    Var ffn_out = ffn(tape, ps, lr.ffn, layer_norm(tape, ps, lr.ln2, x), drop);
    return tape.add(x, maybe_dropout(tape, ffn_out, drop));
}

Var dec_layer(Tape& tape, ParamStore& ps, const DecLayerRef& lr, Var x, Var memory,
              const Tensor* self_mask, const Tensor* cross_mask, const TransformerDims& dims,
              const Dropout& drop) {
    Var normed = layer_norm(tape, ps, lr.ln1, x);
    Var self_out = attention(tape, ps, lr.self_attn, normed, normed, self_mask, dims);
    x = tape.add(x, maybe_dropout(tape, self_out, drop));
    Var cross_out =
        attention(tape, ps, lr.cross_attn, layer_norm(tape, ps, lr.ln2, x), memory, cross_mask, dims);
    x = tape.add(x, maybe_dropout(tape, cross_out, drop));
    Var ffn_out = ffn(tape, ps, lr.ffn, layer_norm(tape, ps, lr.ln3, x), drop);
    return tape.add(x, maybe_dropout(tape, ffn_out, drop));
}

Var encoder_stack(Tape& tape, ParamStore& ps, const EncoderStackRef& sr, Var x,
                  const Tensor* self_mask, const TransformerDims& dims, const Dropout& drop) {
    for (const auto& layer : sr.layers) {
        x = enc_layer(tape, ps, layer, x, self_mask, dims, drop);
    }
    return layer_norm(tape, ps, sr.final_ln, x);
}

// ---- raw inference forward ----

Tensor layer_norm_raw(const ParamStore& ps, const LayerNormRef& lr, const Tensor& x) {
    const Tensor& gain = ps.entry(lr.gain).value;
    const Tensor& bias = ps.entry(lr.bias).value;
    const int m = x.dim(0), n = x.dim(1);
    Tensor out({m, n});
    for (int i = 0; i < m; ++i) {
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += x.at(i, j);
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            double d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= n;
        double inv_std = 1.0 / std::sqrt(var + kLnEps);
        for (int j = 0; j < n; ++j) {
            out.at(i, j) = (x.at(i, j) - mean) * inv_std * gain.at(j) + bias.at(j);
        }
    }
    return out;
}

Tensor gelu_raw(const Tensor& x) {
    Tensor out = x;
    for (int64_t i = 0; i < out.size(); ++i) {
        double v = out[i];
        out[i] = 0.5 * v * (1.0 + std::erf(v * 0.70710678118654752440));
    }
    return out;
}

Tensor linear_raw(const ParamStore& ps, int w, int b, const Tensor& x) {
    return add_row_bias(matmul(x, ps.entry(w).value), ps.entry(b).value);
}

Tensor ffn_raw(const ParamStore& ps, const FfnRef& fr, const Tensor& x) {
    return linear_raw(ps, fr.w2, fr.b2, gelu_raw(linear_raw(ps, fr.w1, fr.b1, x)));
}

Tensor attention_heads_raw(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* mask,
                           const TransformerDims& dims) {
    const int heads = dims.n_heads;
    const int dh = dims.d_model / heads;
    const int tq = q.dim(0), tk = k.dim(0);
    Tensor out({tq, dims.d_model});
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor scores({tq, tk});
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        for (int i = 0; i < tq; ++i) {
            for (int j = 0; j < tk; ++j) {
                double s = 0.0;
                for (int c = 0; c < dh; ++c) s += q.at(i, off + c) * k.at(j, off + c);
                s *= inv_sqrt_dh;
                if (mask) s += mask->at(i, j);
                scores.at(i, j) = s;
            }
        }
        Tensor attn = softmax_rows(scores);
        for (int i = 0; i < tq; ++i) {
            for (int c = 0; c < dh; ++c) {
                double s = 0.0;
                for (int j = 0; j < tk; ++j) s += attn.at(i, j) * v.at(j, off + c);
                out.at(i, off + c) = s;
            }
        }
    }
    return out;
}

Tensor attention_raw(const ParamStore& ps, const AttentionRef& ar, const Tensor& q_in,
                     const Tensor& kv_in, const Tensor* mask, const TransformerDims& dims) {
    Tensor q = linear_raw(ps, ar.wq, ar.bq, q_in);
    Tensor k = matmul(kv_in, ps.entry(ar.wk).value);
    Tensor v = linear_raw(ps, ar.wv, ar.bv, kv_in);
    Tensor merged = attention_heads_raw(q, k, v, mask, dims);
    return linear_raw(ps, ar.wo, ar.bo, merged);
}

Tensor enc_layer_raw(const ParamStore& ps, const EncLayerRef& lr, const Tensor& x,
                     const Tensor* self_mask, const TransformerDims& dims) {
    Tensor normed = layer_norm_raw(ps, lr.ln1, x);
    Tensor with_attn = add(x, attention_raw(ps, lr.attn, normed, normed, self_mask, dims));
    Tensor ffn_out = ffn_raw(ps, lr.ffn, layer_norm_raw(ps, lr.ln2, with_attn));
    return add(with_attn, ffn_out);
}

Tensor encoder_stack_raw(const ParamStore& ps, const EncoderStackRef& sr, const Tensor& x,
                         const Tensor* self_mask, const TransformerDims& dims) {
    Tensor h = x;
    for (const auto& layer : sr.layers) {
        h = enc_layer_raw(ps, layer, h, self_mask, dims);
    }
    return layer_norm_raw(ps, sr.final_ln, h);
}

}  // namespace qg
