#include "qg/generator.hpp"

#include <cmath>
#include <json.hpp>

namespace qg {

using nlohmann::json;

void GeneratorConfig::validate() const {
    std::vector<std::string> problems;
    if (d_model <= 0 || d_model % 2 != 0) problems.push_back("d_model must be positive and even");
    if (n_heads <= 0 || d_model % n_heads != 0) {
        problems.push_back("d_model must be divisible by n_heads");
    }
    if (n_enc_layers < 1 || n_dec_layers < 1) problems.push_back("need at least one layer per stack");
    if (d_ff < 1) problems.push_back("d_ff must be positive");
    if (max_src_len < 4) problems.push_back("max_src_len must be >= 4");
    if (max_tgt_len < 3) problems.push_back("max_tgt_len must be >= 3");
    if (vocab_size < kNumSpecials + 1) problems.push_back("vocab_size must be >= 7");
    if (!(dropout >= 0.0 && dropout < 1.0)) problems.push_back("dropout must be in [0,1)");
    if (!problems.empty()) {
        std::string msg = "invalid generator config:";
        for (const auto& p : problems) msg += " " + p + ";";
        throw ContractError(msg);
    }
}

std::string GeneratorConfig::to_json() const {
    json j = {{"d_model", d_model},
              {"n_heads", n_heads},
              {"n_enc_layers", n_enc_layers},
              {"n_dec_layers", n_dec_layers},
              {"d_ff", d_ff},
              {"max_src_len", max_src_len},
              {"max_tgt_len", max_tgt_len},
              {"vocab_size", vocab_size},
              {"dropout", dropout},
              {"seed", seed},
              {"tie_embeddings", tie_embeddings}};
    return j.dump();
}

GeneratorConfig GeneratorConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    GeneratorConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.n_enc_layers = j.at("n_enc_layers").get<int>();
    c.n_dec_layers = j.at("n_dec_layers").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.max_src_len = j.at("max_src_len").get<int>();
    c.max_tgt_len = j.at("max_tgt_len").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    c.tie_embeddings = j.at("tie_embeddings").get<bool>();
    return c;
}

GeneratorModel GeneratorModel::init(const GeneratorConfig& config) {
    config.validate();
    GeneratorModel m;
    m.cfg_ = config;
    Rng rng(config.seed);
    TransformerDims dims{config.d_model, config.n_heads, config.d_ff};
    m.tok_emb_ = m.params_.add("tok_emb", init_matrix({config.vocab_size, config.d_model}, rng));
    m.encoder_ = register_encoder_stack(m.params_, "enc", config.n_enc_layers, dims, rng);
    for (int i = 0; i < config.n_dec_layers; ++i) {
        m.decoder_.push_back(register_dec_layer(m.params_, "dec.L" + std::to_string(i), dims, rng));
    }
    m.dec_final_ln_ = register_layer_norm(m.params_, "dec.final_ln", config.d_model);
    if (!config.tie_embeddings) {
        m.out_w_ = m.params_.add("out.w", init_matrix({config.d_model, config.vocab_size}, rng));
        m.out_b_ = m.params_.add("out.b", Tensor::zeros({config.vocab_size}));
    }
    m.pe_src_ = positional_encoding(config.max_src_len, config.d_model);
    m.pe_tgt_ = positional_encoding(config.max_tgt_len, config.d_model);
    return m;
}

namespace {

Tensor pe_slice(const Tensor& pe, int rows) {
    Tensor out({rows, pe.dim(1)});
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < pe.dim(1); ++j) out.at(i, j) = pe.at(i, j);
    }
    return out;
}

Tensor embed_raw(const ParamStore& ps, int table, const std::vector<int>& ids, const Tensor& pe,
                 double emb_scale) {
    const Tensor& tab = ps.entry(table).value;
    const int d = tab.dim(1);
    Tensor out({static_cast<int>(ids.size()), d});
    for (size_t t = 0; t < ids.size(); ++t) {
        for (int j = 0; j < d; ++j) {
            out.at(static_cast<int>(t), j) =
                tab.at(ids[t], j) * emb_scale + pe.at(static_cast<int>(t), j);
        }
    }
    return out;
}

}  // namespace

Var GeneratorModel::logits_from_hidden(Tape& tape, Var h) {
    if (cfg_.tie_embeddings) {
        return tape.matmul_nt(h, tape.param(params_, tok_emb_));
    }
    return tape.add_row_bias(tape.matmul(h, tape.param(params_, out_w_)),
                             tape.param(params_, out_b_));
}

Tensor GeneratorModel::logits_from_hidden_raw(const Tensor& h) const {
    if (cfg_.tie_embeddings) {
        return matmul_nt(h, params_.entry(tok_emb_).value);
    }
    return linear_raw(params_, out_w_, out_b_, h);
}

Var GeneratorModel::teacher_forced_log_prob(Tape& tape, const TokenSeq& src, const TokenSeq& tgt,
                                            TeacherForcedResult* aux, const Dropout& drop) {
    src.validate(cfg_.vocab_size);
    tgt.validate(cfg_.vocab_size);
    if (src.kind != TokenSeq::Kind::Source || tgt.kind != TokenSeq::Kind::Target) {
        throw ContractError("teacher_forced: src must be Source and tgt must be Target");
    }
    const int ts = static_cast<int>(src.ids.size());
    const int tt = static_cast<int>(tgt.ids.size());
    if (ts > cfg_.max_src_len) {
        throw ContractError("source length " + std::to_string(ts) + " exceeds max_src_len " +
                            std::to_string(cfg_.max_src_len));
    }
    if (tt > cfg_.max_tgt_len) {
        throw ContractError("target length " + std::to_string(tt) + " exceeds max_tgt_len " +
                            std::to_string(cfg_.max_tgt_len));
    }
    const double emb_scale = std::sqrt(static_cast<double>(cfg_.d_model));
    TransformerDims dm = dims();

    // Encoder.
    Var src_emb = tape.scale(tape.embedding(tape.param(params_, tok_emb_), src.ids), emb_scale);
    src_emb = tape.add(src_emb, tape.constant(pe_slice(pe_src_, ts)));
    Tensor enc_mask = pad_key_mask(src.ids, ts);
    Var memory = encoder_stack(tape, params_, encoder_, src_emb, &enc_mask, dm, drop);

    // Decoder input is tgt without its last token; targets are shifted left.
    std::vector<int> dec_input(tgt.ids.begin(), tgt.ids.end() - 1);
    std::vector<int> dec_targets(tgt.ids.begin() + 1, tgt.ids.end());
    const int td = static_cast<int>(dec_input.size());

    Var dec_emb = tape.scale(tape.embedding(tape.param(params_, tok_emb_), dec_input), emb_scale);
    dec_emb = tape.add(dec_emb, tape.constant(pe_slice(pe_tgt_, td)));
    Tensor self_mask = add(causal_mask(td), pad_key_mask(dec_input, td));
    Tensor cross_mask = pad_key_mask(src.ids, td);
    Var h = dec_emb;
    for (const auto& layer : decoder_) {
        h = dec_layer(tape, params_, layer, h, memory, &self_mask, &cross_mask, dm, drop);
    }
    h = layer_norm(tape, params_, dec_final_ln_, h);
    Var logits = logits_from_hidden(tape, h);

    std::vector<bool> pad_steps(dec_targets.size(), false);
    for (size_t i = 0; i < dec_targets.size(); ++i) pad_steps[i] = dec_targets[i] == PAD;

    std::vector<double> per_step;
    Var sum_log_prob = tape.sequence_log_prob(logits, dec_targets, pad_steps, &per_step);
    if (aux) {
        aux->logits = tape.value(logits);
        aux->step_log_probs = per_step;
        aux->sum_log_prob = tape.value(sum_log_prob).at(0);
    }
    return sum_log_prob;
}

TeacherForcedResult GeneratorModel::forward_teacher_forced(const TokenSeq& src,
                                                           const TokenSeq& tgt) {
    Tape tape;
    TeacherForcedResult aux;
    teacher_forced_log_prob(tape, src, tgt, &aux, Dropout{});
    return aux;
}

Tensor GeneratorModel::encode_raw(const TokenSeq& src) const {
    const int ts = static_cast<int>(src.ids.size());
    const double emb_scale = std::sqrt(static_cast<double>(cfg_.d_model));
    Tensor x = embed_raw(params_, tok_emb_, src.ids, pe_src_, emb_scale);
    Tensor enc_mask = pad_key_mask(src.ids, ts);
    return encoder_stack_raw(params_, encoder_, x, &enc_mask, dims());
}

GeneratorModel::DecodeSession::DecodeSession(const GeneratorModel& model, const TokenSeq& src)
    : model_(model), src_ids_(src.ids) {
    src.validate(model.cfg_.vocab_size);
    if (static_cast<int>(src.ids.size()) > model.cfg_.max_src_len) {
        throw ContractError("source length exceeds max_src_len");
    }
    memory_ = model.encode_raw(src);
    const int d = model.cfg_.d_model;
    cross_mask_row_ = pad_key_mask(src_ids_, 1);
    for (const auto& layer : model.decoder_) {
        cross_k_.push_back(matmul(memory_, model.params_.entry(layer.cross_attn.wk).value));
        cross_v_.push_back(linear_raw(model.params_, layer.cross_attn.wv, layer.cross_attn.bv,
                                      memory_));
        self_k_.push_back(Tensor({model.cfg_.max_tgt_len, d}));
        self_v_.push_back(Tensor({model.cfg_.max_tgt_len, d}));
    }
}

Tensor GeneratorModel::DecodeSession::step(int token) {
    const auto& m = model_;
    if (pos_ >= m.cfg_.max_tgt_len) throw ContractError("decode past max_tgt_len");
    const int d = m.cfg_.d_model;
    const double emb_scale = std::sqrt(static_cast<double>(d));
    TransformerDims dm = m.dims();

    Tensor x({1, d});
    const Tensor& tab = m.params_.entry(m.tok_emb_).value;
    for (int j = 0; j < d; ++j) x.at(0, j) = tab.at(token, j) * emb_scale + m.pe_tgt_.at(pos_, j);

    for (size_t li = 0; li < m.decoder_.size(); ++li) {
        const auto& layer = m.decoder_[li];
        // Self-attention over the cached prefix plus this position.
        Tensor normed = layer_norm_raw(m.params_, layer.ln1, x);
        Tensor q = linear_raw(m.params_, layer.self_attn.wq, layer.self_attn.bq, normed);
        Tensor k = matmul(normed, m.params_.entry(layer.self_attn.wk).value);
        Tensor v = linear_raw(m.params_, layer.self_attn.wv, layer.self_attn.bv, normed);
        Tensor& kc = self_k_[li];
        Tensor& vc = self_v_[li];
        for (int j = 0; j < d; ++j) {
            kc.at(pos_, j) = k.at(0, j);
            vc.at(pos_, j) = v.at(0, j);
        }
        const int t = pos_ + 1;
        Tensor k_live({t, d}), v_live({t, d});
        for (int i = 0; i < t; ++i) {
            for (int j = 0; j < d; ++j) {
                k_live.at(i, j) = kc.at(i, j);
                v_live.at(i, j) = vc.at(i, j);
            }
        }
        Tensor ctx = attention_heads_raw(q, k_live, v_live, nullptr, dm);
        x = add(x, linear_raw(m.params_, layer.self_attn.wo, layer.self_attn.bo, ctx));

        // Cross-attention over the precomputed source keys/values.
        Tensor q2 = linear_raw(m.params_, layer.cross_attn.wq, layer.cross_attn.bq,
                               layer_norm_raw(m.params_, layer.ln2, x));
        Tensor ctx2 = attention_heads_raw(q2, cross_k_[li], cross_v_[li], &cross_mask_row_, dm);
        x = add(x, linear_raw(m.params_, layer.cross_attn.wo, layer.cross_attn.bo, ctx2));

        x = add(x, ffn_raw(m.params_, layer.ffn, layer_norm_raw(m.params_, layer.ln3, x)));
    }
    x = layer_norm_raw(m.params_, m.dec_final_ln_, x);
    Tensor logits_row = m.logits_from_hidden_raw(x);
    pos_ += 1;
    Tensor out({m.cfg_.vocab_size});
    for (int jv = 0; jv < m.cfg_.vocab_size; ++jv) out.at(jv) = logits_row.at(0, jv);
    return out;
}

std::vector<int> GeneratorModel::greedy_decode(const TokenSeq& src, int max_len) const {
    DecodeSession session(*this, src);
    std::vector<int> out;
    int token = BOS;
    // Decoder input positions are bounded by max_tgt_len - 1 so that the
    // sequence [BOS, out..., EOS] itself fits max_tgt_len.
    const int max_positions = cfg_.max_tgt_len - 1;
    while (static_cast<int>(out.size()) < max_len && session.position() < max_positions) {
        Tensor logits = session.step(token);
        int best = -1;
        double best_v = 0.0;
        for (int v = 0; v < cfg_.vocab_size; ++v) {
            if (v != EOS && is_special_id(v)) continue;  // no specials in output
            if (best < 0 || logits.at(v) > best_v) {
                best = v;
                best_v = logits.at(v);
            }
        }
        if (best == EOS) break;
        out.push_back(best);
        token = best;
    }
    return out;
}

void GeneratorModel::save(const std::string& path, const Vocab& vocab) const {
    save_params(params_, path);
    json side = {{"kind", "generator"},
                 {"config", json::parse(cfg_.to_json())},
                 {"vocab", vocab.word_list()}};
    atomic_write_file(path + ".json", side.dump(2) + "\n");
}

std::pair<GeneratorModel, Vocab> GeneratorModel::load(const std::string& path) {
    json side = json::parse(read_text_file(path + ".json"));
    if (side.at("kind").get<std::string>() != "generator") {
        throw InputError("checkpoint is not a generator: " + path);
    }
    GeneratorConfig cfg = GeneratorConfig::from_json(side.at("config").dump());
    Vocab vocab = Vocab::from_word_list(side.at("vocab").get<std::vector<std::string>>());
    if (vocab.size() != cfg.vocab_size) {
        throw InputError("checkpoint vocab size does not match config");
    }
    GeneratorModel m = init(cfg);
    load_params(m.params_, path);
    return {std::move(m), std::move(vocab)};
}

}  // namespace qg
