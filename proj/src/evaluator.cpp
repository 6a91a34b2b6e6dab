#include "qg/evaluator.hpp"

#include <cmath>
#include <json.hpp>

#include "qg/optim.hpp"

namespace qg {

using nlohmann::json;

void EvaluatorConfig::validate() const {
    std::vector<std::string> problems;
    if (d_model <= 0 || d_model % 2 != 0) problems.push_back("d_model must be positive and even");
    if (n_heads <= 0 || d_model % n_heads != 0) {
        problems.push_back("d_model must be divisible by n_heads");
    }
    if (n_layers < 1) problems.push_back("need at least one layer");
    if (d_ff < 1) problems.push_back("d_ff must be positive");
    if (max_len < 4) problems.push_back("max_len must be >= 4");
    if (vocab_size < kNumSpecials + 1) problems.push_back("vocab_size must be >= 7");
    if (!problems.empty()) {
        std::string msg = "invalid evaluator config:";
        for (const auto& p : problems) msg += " " + p + ";";
        throw ContractError(msg);
    }
}

std::string EvaluatorConfig::to_json() const {
    json j = {{"d_model", d_model}, {"n_heads", n_heads},     {"n_layers", n_layers},
              {"d_ff", d_ff},       {"max_len", max_len},     {"vocab_size", vocab_size},
              {"seed", seed}};
    return j.dump();
}

EvaluatorConfig EvaluatorConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    EvaluatorConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

RtdCorruption corrupt_for_rtd(const std::vector<int>& ids, double rate,
                              const std::vector<double>& unigram_dist, Rng& rng) {
    if (!(rate >= 0.0 && rate <= 0.5)) {
        throw ContractError("corrupt_for_rtd: rate must be in [0, 0.5]");
    }
    RtdCorruption out;
    out.corrupted_ids = ids;
    out.labels.assign(ids.size(), false);
    if (rate == 0.0) return out;

    auto sample = [&]() {
        double u = rng.uniform();
        double acc = 0.0;
        for (size_t v = 0; v < unigram_dist.size(); ++v) {
            acc += unigram_dist[v];
            if (u < acc) return static_cast<int>(v);
        }
        return static_cast<int>(unigram_dist.size()) - 1;
    };

    for (size_t i = 0; i < ids.size(); ++i) {
        if (is_special_id(ids[i])) continue;
        if (rng.uniform() >= rate) continue;
        int replacement = sample();
        if (replacement == ids[i]) replacement = sample();  // resample once
        if (replacement == ids[i]) continue;                // still equal: not replaced
        out.corrupted_ids[i] = replacement;
        out.labels[i] = true;
    }
    return out;
}

std::vector<double> unigram_distribution(const std::vector<TokenSeq>& corpus, int vocab_size) {
    std::vector<double> counts(static_cast<size_t>(vocab_size), 0.0);
    double total = 0.0;
    for (const auto& seq : corpus) {
        for (int id : seq.ids) {
            if (is_special_id(id)) continue;
            counts[static_cast<size_t>(id)] += 1.0;
            total += 1.0;
        }
    }
    if (total == 0.0) throw ContractError("unigram_distribution: corpus has no regular tokens");
    for (double& c : counts) c /= total;
    return counts;
}

EvaluatorModel EvaluatorModel::init(const EvaluatorConfig& config) {
    config.validate();
    EvaluatorModel m;
    m.cfg_ = config;
    Rng rng(config.seed);
    TransformerDims dims{config.d_model, config.n_heads, config.d_ff};
    m.tok_emb_ = m.params_.add("tok_emb", init_matrix({config.vocab_size, config.d_model}, rng));
    m.encoder_ = register_encoder_stack(m.params_, "enc", config.n_layers, dims, rng);
    m.rtd_w_ = m.params_.add("rtd.w", init_matrix({config.d_model, 1}, rng));
    m.rtd_b_ = m.params_.add("rtd.b", Tensor::zeros({1}));
    m.pe_ = positional_encoding(config.max_len, config.d_model);
    return m;
}

ParamStore& EvaluatorModel::mutable_params() {
    if (frozen_) throw ContractError("evaluator is frozen: parameters are immutable");
    return params_;
}

void EvaluatorModel::freeze() {
    if (frozen_) return;
    frozen_ = true;
    params_.set_frozen(true);
    frozen_hash_ = param_hash(params_);
}

std::string EvaluatorModel::current_param_hash() const { return param_hash(params_); }

Tensor EvaluatorModel::encode_hidden(const std::vector<int>& ids) const {
    if (ids.empty()) throw ContractError("evaluator: empty input");
    const int t = static_cast<int>(ids.size());
    if (t > cfg_.max_len) {
        throw ContractError("evaluator: input length " + std::to_string(t) + " exceeds max_len " +
                            std::to_string(cfg_.max_len));
    }
    const double emb_scale = std::sqrt(static_cast<double>(cfg_.d_model));
    const Tensor& tab = params_.entry(tok_emb_).value;
    Tensor x({t, cfg_.d_model});
    for (int i = 0; i < t; ++i) {
        int id = ids[static_cast<size_t>(i)];
        if (id < 0 || id >= cfg_.vocab_size) {
            throw ContractError("evaluator: id " + std::to_string(id) + " out of range");
        }
        for (int j = 0; j < cfg_.d_model; ++j) {
            x.at(i, j) = tab.at(id, j) * emb_scale + pe_.at(i, j);
        }
    }
    Tensor mask = pad_key_mask(ids, t);
    return encoder_stack_raw(params_, encoder_, x, &mask, dims());
}

Tensor EvaluatorModel::embed_cls(const std::vector<int>& ids) const {
    if (ids.empty()) throw ContractError("embed_cls: empty input");
    std::vector<int> with_cls = ids;
    if (with_cls[0] != CLS) with_cls.insert(with_cls.begin(), CLS);
    Tensor h = encode_hidden(with_cls);
    Tensor out({cfg_.d_model});
    for (int j = 0; j < cfg_.d_model; ++j) out.at(j) = h.at(0, j);
    return out;
}

Tensor EvaluatorModel::token_embeddings(const std::vector<int>& ids) const {
    if (ids.empty()) throw ContractError("token_embeddings: empty input");
    return encode_hidden(ids);
}

Tensor EvaluatorModel::rtd_logits(const std::vector<int>& ids) const {
    Tensor h = encode_hidden(ids);
    return linear_raw(params_, rtd_w_, rtd_b_, h);
}

std::vector<RtdEpochStats> EvaluatorModel::pretrain_rtd(const std::vector<TokenSeq>& corpus,
                                                        double rate, int epochs, double lr,
                                                        uint64_t seed, double holdout_fraction) {
    if (frozen_) throw ContractError("pretrain_rtd: evaluator is frozen");
    if (corpus.empty()) throw ContractError("pretrain_rtd: empty corpus");
    if (epochs < 0) throw ContractError("pretrain_rtd: negative epochs");
    std::vector<RtdEpochStats> history;
    if (epochs == 0) return history;

    std::vector<double> unigram = unigram_distribution(corpus, cfg_.vocab_size);

    Rng rng(seed);
    std::vector<size_t> order(corpus.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    size_t holdout_n = corpus.size() >= 2
                           ? std::max<size_t>(1, static_cast<size_t>(holdout_fraction *
                                                                     static_cast<double>(corpus.size())))
                           : 0;
    std::vector<size_t> holdout(order.begin(), order.begin() + static_cast<long>(holdout_n));
    std::vector<size_t> train(order.begin() + static_cast<long>(holdout_n), order.end());
    if (train.empty()) throw ContractError("pretrain_rtd: no training sequences after holdout");

    AdamConfig acfg;
    acfg.lr = lr;
    AdamState adam = AdamState::init(params_, acfg);
    const double emb_scale = std::sqrt(static_cast<double>(cfg_.d_model));
    const int batch = 16;

    auto seq_loss_node = [&](Tape& tape, const std::vector<int>& corrupted,
                             const std::vector<bool>& labels) {
        const int t = static_cast<int>(corrupted.size());
        Var x = tape.scale(tape.embedding(tape.param(params_, tok_emb_), corrupted), emb_scale);
        Tensor pe({t, cfg_.d_model});
        for (int i = 0; i < t; ++i) {
            for (int j = 0; j < cfg_.d_model; ++j) pe.at(i, j) = pe_.at(i, j);
        }
        x = tape.add(x, tape.constant(pe));
        Tensor mask = pad_key_mask(corrupted, t);
        Var h = encoder_stack(tape, params_, encoder_, x, &mask, dims(), Dropout{});
        Var z = tape.add_row_bias(tape.matmul(h, tape.param(params_, rtd_w_)),
                                  tape.param(params_, rtd_b_));
        std::vector<bool> include(corrupted.size());
        for (size_t i = 0; i < corrupted.size(); ++i) include[i] = !is_special_id(corrupted[i]);
        return tape.bce_with_logits(z, labels, include);
    };

    for (int epoch = 0; epoch < epochs; ++epoch) {
        Rng erng = rng.fork(static_cast<uint64_t>(epoch) + 1);
        erng.shuffle(train);
        double loss_sum = 0.0;
        size_t processed = 0;
        Tape tape;
        while (processed < train.size()) {
            size_t take = std::min<size_t>(batch, train.size() - processed);
            params_.zero_grads();
            for (size_t b = 0; b < take; ++b) {
                const TokenSeq& seq = corpus[train[processed + b]];
                RtdCorruption cor = corrupt_for_rtd(seq.ids, rate, unigram, erng);
                tape.reset();
                Var loss = seq_loss_node(tape, cor.corrupted_ids, cor.labels);
                double lv = tape.value(loss).at(0);
                if (!std::isfinite(lv)) throw ContractError("pretrain_rtd: non-finite loss");
                loss_sum += lv;
                tape.backward(loss, 1.0 / static_cast<double>(take));
            }
            adam_step(params_, adam);
            processed += take;
        }

        RtdEpochStats st;
        st.epoch = epoch;
        st.train_loss = loss_sum / static_cast<double>(train.size());
        if (!holdout.empty()) {
            Rng hrng = rng.fork(0xE0);  // fixed corruption for comparable epochs
            double hloss = 0.0;
            int64_t total = 0, correct = 0, replaced_total = 0, replaced_correct = 0;
            for (size_t idx : holdout) {
                const TokenSeq& seq = corpus[idx];
                RtdCorruption cor = corrupt_for_rtd(seq.ids, rate, unigram, hrng);
                Tensor z = rtd_logits(cor.corrupted_ids);
                double seq_total = 0.0;
                int seq_count = 0;
                for (size_t i = 0; i < cor.corrupted_ids.size(); ++i) {
                    if (is_special_id(cor.corrupted_ids[i])) continue;
                    double zi = z.at(static_cast<int>(i), 0);
                    double y = cor.labels[i] ? 1.0 : 0.0;
                    double sp = std::max(zi, 0.0) + std::log1p(std::exp(-std::abs(zi)));
                    seq_total += sp - y * zi;
                    seq_count += 1;
                    bool pred = zi > 0.0;
                    total += 1;
                    if (pred == cor.labels[i]) correct += 1;
                    if (cor.labels[i]) {
                        replaced_total += 1;
                        if (pred) replaced_correct += 1;
                    }
                }
                if (seq_count > 0) hloss += seq_total / seq_count;
            }
            st.holdout_loss = hloss / static_cast<double>(holdout.size());
            st.holdout_accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;
            st.holdout_replaced_accuracy =
                replaced_total > 0 ? static_cast<double>(replaced_correct) / replaced_total : 0.0;
        }
        history.push_back(st);
    }
    return history;
}

void EvaluatorModel::save(const std::string& path, const Vocab& vocab) const {
    save_params(params_, path);
    json side = {{"kind", "evaluator"},
                 {"config", json::parse(cfg_.to_json())},
                 {"frozen", frozen_},
                 {"param_hash", frozen_ ? frozen_hash_ : current_param_hash()},
                 {"vocab", vocab.word_list()}};
    atomic_write_file(path + ".json", side.dump(2) + "\n");
}

std::pair<EvaluatorModel, Vocab> EvaluatorModel::load(const std::string& path) {
    json side = json::parse(read_text_file(path + ".json"));
    if (side.at("kind").get<std::string>() != "evaluator") {
        throw InputError("checkpoint is not an evaluator: " + path);
    }
    EvaluatorConfig cfg = EvaluatorConfig::from_json(side.at("config").dump());
    Vocab vocab = Vocab::from_word_list(side.at("vocab").get<std::vector<std::string>>());
    if (vocab.size() != cfg.vocab_size) {
        throw InputError("checkpoint vocab size does not match config");
    }
    EvaluatorModel m = init(cfg);
    load_params(m.params_, path);
    std::string stored_hash = side.at("param_hash").get<std::string>();
    if (m.current_param_hash() != stored_hash) {
        throw InputError("evaluator checkpoint hash mismatch (corrupt file?)");
    }
    if (side.at("frozen").get<bool>()) {
        m.freeze();
    }
    return {std::move(m), std::move(vocab)};
}

}  // namespace qg
