#include "qg/training.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "qg/optim.hpp"

namespace qg {

using nlohmann::json;

RewardMode reward_mode_from_string(const std::string& s) {
    if (s == "none") return RewardMode::None;
    if (s == "bleu") return RewardMode::Bleu;
    if (s == "bleu+semantic") return RewardMode::BleuPlusSemantic;
    throw UsageError("unknown reward mode: " + s + " (expected none|bleu|bleu+semantic)");
}

const char* to_string(RewardMode m) {
    switch (m) {
        case RewardMode::None: return "none";
        case RewardMode::Bleu: return "bleu";
        default: return "bleu+semantic";
    }
}

void TrainConfig::validate() const {
    if (!(alpha > 0.05 && alpha <= 1.0)) {
        throw ContractError("config: alpha = " + std::to_string(alpha) + " outside (0.05,1]");
    }
    if (!(gamma > 0.05 && gamma <= 1.0)) {
        throw ContractError("config: gamma = " + std::to_string(gamma) + " outside (0.05,1]");
    }
    if (!(lr > 0.0 && lr < 1.0)) throw ContractError("config: lr must be in (0,1)");
    if (!lr_explicit && !(lr >= 1e-6 && lr <= 1e-4)) {
        throw ContractError("config: default lr must stay in [1e-6,1e-4]; set lr explicitly to "
                            "override");
    }
    if (batch_size < 1) throw ContractError("config: batch_size must be >= 1");
    if (accum_steps < 1) throw ContractError("config: accum_steps must be >= 1");
    if (batch_size % accum_steps != 0) {
        throw ContractError("config: batch_size must be divisible by accum_steps");
    }
    if (epochs < 0) throw ContractError("config: epochs must be >= 0");
    if (max_steps < 0) throw ContractError("config: max_steps must be >= 0");
    if (max_src_len < 4 || max_tgt_len < 3) throw ContractError("config: max lengths too small");
}

TrainConfig TrainConfig::parse(const std::string& text) {
    TrainConfig cfg;
    std::istringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw InputError("config line " + std::to_string(lineno) + ": expected key=value");
        }
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        try {
            if (key == "alpha") {
                cfg.alpha = std::stod(value);
            } else if (key == "gamma") {
                cfg.gamma = std::stod(value);
            } else if (key == "lr") {
                cfg.lr = std::stod(value);
                cfg.lr_explicit = true;
            } else if (key == "batch_size") {
                cfg.batch_size = std::stoi(value);
            } else if (key == "accum_steps") {
                cfg.accum_steps = std::stoi(value);
            } else if (key == "epochs") {
                cfg.epochs = std::stoi(value);
            } else if (key == "seed") {
                cfg.seed = std::stoull(value);
            } else if (key == "max_src_len") {
                cfg.max_src_len = std::stoi(value);
            } else if (key == "max_tgt_len") {
                cfg.max_tgt_len = std::stoi(value);
            } else if (key == "reward_mode") {
                cfg.reward_mode = reward_mode_from_string(value);
            } else if (key == "max_steps") {
                cfg.max_steps = std::stoi(value);
            } else {
                throw InputError("config: unknown key '" + key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw InputError("config: bad value for " + key + ": " + value);
        }
    }
    return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) { return parse(read_text_file(path)); }

std::string TrainConfig::to_key_values() const {
    std::ostringstream ss;
    ss << "alpha=" << alpha << "\n"
       << "gamma=" << gamma << "\n"
       << "lr=" << lr << "\n"
       << "batch_size=" << batch_size << "\n"
       << "accum_steps=" << accum_steps << "\n"
       << "epochs=" << epochs << "\n"
       << "seed=" << seed << "\n"
       << "max_src_len=" << max_src_len << "\n"
       << "max_tgt_len=" << max_tgt_len << "\n"
       << "reward_mode=" << to_string(reward_mode) << "\n"
       << "max_steps=" << max_steps << "\n";
    return ss.str();
}

double loss_base(double sum_log_prob) {
    if (sum_log_prob > 0.0) {
        throw ContractError("loss_base: sum_log_prob must be <= 0, got " +
                            std::to_string(sum_log_prob));
    }
    return -sum_log_prob;
}

double loss_rl(double sum_log_prob, double r) {
    if (!(r >= 0.0 && r <= 1.0)) {
        throw ContractError("loss_rl: reward " + std::to_string(r) + " outside [0,1]");
    }
    return (1.0 - r) * loss_base(sum_log_prob);
}

double loss_total(double l_base_v, double l_rl_v, double gamma) {
    if (!(gamma > 0.05 && gamma <= 1.0)) {
        throw ContractError("loss_total: gamma outside (0.05,1]");
    }
    return gamma * l_base_v + (1.0 - gamma) * l_rl_v;
}

std::vector<int> strip_specials(const std::vector<int>& ids) {
    std::vector<int> out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (!is_special_id(id) || id == UNK) out.push_back(id);
    }
    return out;
}

std::vector<TrainItem> prepare_items(const std::vector<QaTriple>& triples, const Vocab& vocab,
                                     int max_src_len, int max_tgt_len, int* skipped) {
    std::vector<TrainItem> items;
    int skip_count = 0;
    for (const auto& t : triples) {
        std::vector<int> ctx = vocab.encode(t.context);
        std::vector<int> ans = vocab.encode(t.answer);
        std::vector<int> q = vocab.encode(t.question);
        if (ans.empty() || q.empty() ||
            static_cast<int>(ans.size()) + 3 > max_src_len) {
            ++skip_count;
            continue;
        }
        TrainItem item;
        item.src = assemble_input(ctx, ans, max_src_len);
        item.tgt = assemble_target(q, max_tgt_len);
        items.push_back(std::move(item));
    }
    if (skipped) *skipped = skip_count;
    return items;
}

RewardBreakdown compute_reward(const std::vector<int>& candidate,
                               const std::vector<int>& reference,
                               const EvaluatorModel* evaluator, const TrainConfig& cfg) {
    if (cfg.reward_mode == RewardMode::None) {
        return reward(0.0, 0.0, 1.0);  // degenerates to r = 0
    }
    double r1 = bleu_sentence(candidate, reference);
    if (cfg.reward_mode == RewardMode::Bleu) {
        // alpha = 1 collapses the normalization to r = r1.
        return reward(r1, 0.0, 1.0);
    }
    if (evaluator == nullptr) {
        throw ContractError("semantic reward requires an evaluator");
    }
    double r2 = 0.0;  // zero-vector cosine convention covers empty candidates
    if (!candidate.empty()) {
        Tensor ec = evaluator->embed_cls(candidate);
        Tensor er = evaluator->embed_cls(reference);
        r2 = cosine(ec, er);
        // Clamp fp drift at the [-1,1] boundary before range validation.
        r2 = std::min(1.0, std::max(-1.0, r2));
    }
    return reward(r1, r2, cfg.alpha);
}

LossBreakdown train_step(GeneratorModel& model, const EvaluatorModel* evaluator,
                         const std::vector<TrainItem>& micro_batch, const TrainConfig& cfg,
                         Rng* dropout_rng) {
    if (cfg.reward_mode != RewardMode::None && evaluator != nullptr && !evaluator->frozen()) {
        throw ContractError("train_step: evaluator must be frozen when a reward is in use");
    }
    if (cfg.reward_mode == RewardMode::BleuPlusSemantic && evaluator == nullptr) {
        throw ContractError("train_step: bleu+semantic reward requires an evaluator");
    }
    LossBreakdown out;
    Dropout drop;
    if (model.config().dropout > 0.0 && dropout_rng != nullptr) {
        drop.p = model.config().dropout;
        drop.rng = dropout_rng;
    }
    Tape tape;
    for (const auto& item : micro_batch) {
        tape.reset();
        TeacherForcedResult aux;
        Var slp = model.teacher_forced_log_prob(tape, item.src, item.tgt, &aux, drop);

        RewardBreakdown rb;
        if (cfg.forced_reward.has_value()) {
            rb.r = *cfg.forced_reward;
            rb.alpha = cfg.alpha;
        } else if (cfg.reward_mode == RewardMode::None) {
            rb = compute_reward({}, {}, nullptr, cfg);
        } else {
            std::vector<int> candidate =
                model.greedy_decode(item.src, cfg.max_tgt_len - 2);
            std::vector<int> reference = strip_specials(item.tgt.ids);
            rb = compute_reward(candidate, reference, evaluator, cfg);
        }

        double lb = loss_base(aux.sum_log_prob);
        double lr_v = loss_rl(aux.sum_log_prob, rb.r);
        double lt = loss_total(lb, lr_v, cfg.gamma);
        if (!std::isfinite(lt)) throw ContractError("train_step: non-finite loss");
        out.l_base += lb;
        out.l_rl += lr_v;
        out.l_total += lt;
        out.rewards.push_back(rb);

        // d l_total / d slp = -(gamma + (1-gamma)(1-r)); reward is constant.
        double weight = cfg.gamma + (1.0 - cfg.gamma) * (1.0 - rb.r);
        tape.backward(slp, -weight);
    }
    const double n = static_cast<double>(micro_batch.size());
    if (n > 0) {
        out.l_base /= n;
        out.l_rl /= n;
        out.l_total /= n;
    }
    return out;
}

namespace {

struct DevEval {
    double loss = 0.0;
    double l_base = 0.0;
    double corpus_bleu_score = 0.0;
    double mean_reward = 0.0;
};

DevEval evaluate_dev(GeneratorModel& model, const EvaluatorModel* evaluator,
                     const std::vector<TrainItem>& dev_items, const TrainConfig& cfg) {
    DevEval ev;
    std::vector<std::vector<int>> cands, refs;
    for (const auto& item : dev_items) {
        TeacherForcedResult aux = model.forward_teacher_forced(item.src, item.tgt);
        std::vector<int> reference = strip_specials(item.tgt.ids);
        std::vector<int> candidate = model.greedy_decode(item.src, cfg.max_tgt_len - 2);
        RewardBreakdown rb = cfg.forced_reward.has_value()
                                 ? RewardBreakdown{0, 0, 0, *cfg.forced_reward, cfg.alpha}
                                 : compute_reward(candidate, reference, evaluator, cfg);
        double lb = loss_base(aux.sum_log_prob);
        ev.l_base += lb;
        ev.loss += loss_total(lb, loss_rl(aux.sum_log_prob, rb.r), cfg.gamma);
        ev.mean_reward += rb.r;
        cands.push_back(std::move(candidate));
        refs.push_back(std::move(reference));
    }
    const double n = static_cast<double>(dev_items.size());
    ev.loss /= n;
    ev.l_base /= n;
    ev.mean_reward /= n;
    ev.corpus_bleu_score = bleu_corpus(cands, refs);
    return ev;
}

json epoch_json(const EpochRecord& r) {
    return json{{"epoch", r.epoch},
                {"steps", r.steps},
                {"train_loss", r.train_loss},
                {"train_l_base", r.train_l_base},
                {"dev_loss", r.dev_loss},
                {"dev_corpus_bleu", r.dev_corpus_bleu},
                {"dev_mean_reward", r.dev_mean_reward},
                {"best", r.best}};
}

}  // namespace

TrainResult train(GeneratorModel& model, const EvaluatorModel* evaluator,
                  const std::vector<TrainItem>& train_items,
                  const std::vector<TrainItem>& dev_items, const TrainConfig& cfg,
                  const Vocab& vocab, const std::string& out_dir) {
    cfg.validate();
    if (train_items.empty() || dev_items.empty()) {
        throw ContractError("train: train and dev sets must be non-empty");
    }
    std::string evaluator_hash_before;
    if (evaluator != nullptr) evaluator_hash_before = evaluator->current_param_hash();

    TrainResult result;
    if (cfg.epochs == 0) return result;

    AdamConfig acfg;
    acfg.lr = cfg.lr;
    AdamState adam = AdamState::init(model.params(), acfg);
    Rng rng(cfg.seed);
    Rng dropout_rng = rng.fork(0xD0);

    const int micro = cfg.batch_size / cfg.accum_steps;
    std::vector<size_t> order(train_items.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    int steps = 0;
    bool stop = false;
    std::string history_path = out_dir.empty() ? "" : out_dir + "/history.jsonl";
    if (!history_path.empty()) write_text_file(history_path, "");

    for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        Rng erng = rng.fork(static_cast<uint64_t>(epoch) + 1);
        erng.shuffle(order);
        double loss_sum = 0.0, base_sum = 0.0;
        size_t examples_done = 0;
        size_t cursor = 0;
        int batch_index = 0;
        while (cursor < order.size() && !stop) {
            size_t batch_n = std::min<size_t>(cfg.batch_size, order.size() - cursor);
            model.params().zero_grads();
            size_t done = 0;
            while (done < batch_n) {
                size_t take = std::min<size_t>(micro, batch_n - done);
                std::vector<TrainItem> mb;
                mb.reserve(take);
                for (size_t k = 0; k < take; ++k) {
                    mb.push_back(train_items[order[cursor + done + k]]);
                }
                LossBreakdown lb;
                try {
                    lb = train_step(model, evaluator, mb, cfg, &dropout_rng);
                } catch (const ContractError& e) {
                    throw ContractError(std::string(e.what()) + " (epoch " +
                                        std::to_string(epoch) + ", batch " +
                                        std::to_string(batch_index) + ")");
                }
                loss_sum += lb.l_total * static_cast<double>(take);
                base_sum += lb.l_base * static_cast<double>(take);
                done += take;
            }
            model.params().scale_grads(1.0 / static_cast<double>(batch_n));
            adam_step(model.params(), adam);
            cursor += batch_n;
            examples_done += batch_n;
            ++steps;
            ++batch_index;
            if (cfg.max_steps > 0 && steps >= cfg.max_steps) stop = true;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.steps = steps;
        rec.train_loss = examples_done ? loss_sum / static_cast<double>(examples_done) : 0.0;
        rec.train_l_base = examples_done ? base_sum / static_cast<double>(examples_done) : 0.0;
        DevEval dev = evaluate_dev(model, evaluator, dev_items, cfg);
        rec.dev_loss = dev.loss;
        rec.dev_corpus_bleu = dev.corpus_bleu_score;
        rec.dev_mean_reward = dev.mean_reward;
        if (dev.loss < result.best_dev_loss) {
            result.best_dev_loss = dev.loss;
            result.best_epoch = epoch;
            rec.best = true;
            if (!out_dir.empty()) model.save(out_dir + "/best.qgf", vocab);
        }
        result.history.push_back(rec);
        if (!out_dir.empty()) {
            model.save(out_dir + "/final.qgf", vocab);
            std::ofstream hist(out_dir + "/history.jsonl", std::ios::app);
            hist << epoch_json(rec).dump() << "\n";
        }
    }

    if (evaluator != nullptr && evaluator->current_param_hash() != evaluator_hash_before) {
        throw ContractError("train: evaluator parameters changed during training");
    }
    return result;
}

std::string EvalReport::to_json() const {
    json cl = json::object();
    for (const auto& [name, st] : classes) {
        cl[name] = {{"count", st.count},
                    {"frequency", st.frequency},
                    {"mean_sentence_bleu", st.mean_sentence_bleu},
                    {"mean_cosine", st.mean_cosine},
                    {"mean_reward", st.mean_reward},
                    {"mean_match_score", st.mean_match_score}};
    }
    json j = {{"n", n},
              {"corpus_bleu", corpus_bleu},
              {"mean_sentence_bleu", mean_sentence_bleu},
              {"mean_cosine", mean_cosine},
              {"mean_reward", mean_reward},
              {"mean_match_score", mean_match_score},
              {"alpha", alpha},
              {"classes", cl}};
    return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
    json j = json::parse(text);
    EvalReport r;
    r.n = j.at("n").get<int>();
    r.corpus_bleu = j.at("corpus_bleu").get<double>();
    r.mean_sentence_bleu = j.at("mean_sentence_bleu").get<double>();
    r.mean_cosine = j.at("mean_cosine").get<double>();
    r.mean_reward = j.at("mean_reward").get<double>();
    r.mean_match_score = j.at("mean_match_score").get<double>();
    r.alpha = j.at("alpha").get<double>();
    for (auto it = j.at("classes").begin(); it != j.at("classes").end(); ++it) {
        ClassStats st;
        st.count = it.value().at("count").get<int>();
        st.frequency = it.value().at("frequency").get<double>();
        st.mean_sentence_bleu = it.value().at("mean_sentence_bleu").get<double>();
        st.mean_cosine = it.value().at("mean_cosine").get<double>();
        st.mean_reward = it.value().at("mean_reward").get<double>();
        st.mean_match_score = it.value().at("mean_match_score").get<double>();
        r.classes[it.key()] = st;
    }
    return r;
}

EvalReport evaluate(const GeneratorModel& model, const EvaluatorModel& evaluator,
                    const std::vector<QaTriple>& test_set, const Vocab& vocab,
                    const TrainConfig& cfg, std::vector<PredictionRecord>* predictions,
                    const std::function<std::vector<int>(size_t)>& decode_hook) {
    if (test_set.empty()) throw ContractError("evaluate: empty test set");
    if (!evaluator.frozen()) throw ContractError("evaluate: evaluator must be frozen");

    EvalReport report;
    report.alpha = cfg.alpha;
    std::vector<std::vector<int>> cands, refs;
    struct Accum {
        int count = 0;
        double bleu = 0, cos = 0, rew = 0, match = 0;
    };
    std::map<std::string, Accum> acc;

    for (size_t i = 0; i < test_set.size(); ++i) {
        const QaTriple& t = test_set[i];
        std::vector<int> ctx = vocab.encode(t.context);
        std::vector<int> ans = vocab.encode(t.answer);
        std::vector<int> reference = vocab.encode(t.question);
        if (ans.empty() || static_cast<int>(ans.size()) + 3 > cfg.max_src_len ||
            reference.empty()) {
            continue;  // unencodable example
        }
        TokenSeq src = assemble_input(ctx, ans, cfg.max_src_len);
        std::vector<int> candidate =
            decode_hook ? decode_hook(i) : model.greedy_decode(src, cfg.max_tgt_len - 2);

        double r1 = bleu_sentence(candidate, reference);
        double r2 = 0.0;
        double match = 0.0;
        if (!candidate.empty()) {
            r2 = cosine(evaluator.embed_cls(candidate), evaluator.embed_cls(reference));
            r2 = std::min(1.0, std::max(-1.0, r2));
            match = embedding_match_score(candidate, reference, evaluator);
        }
        RewardBreakdown rb = reward(r1, r2, cfg.alpha);
        std::string cand_text = vocab.decode(candidate);
        QuestionClass qc = classify_question_type(cand_text);

        report.n += 1;
        report.mean_sentence_bleu += r1;
        report.mean_cosine += r2;
        report.mean_reward += rb.r;
        report.mean_match_score += match;
        Accum& a = acc[to_string(qc)];
        a.count += 1;
        a.bleu += r1;
        a.cos += r2;
        a.rew += rb.r;
        a.match += match;
        cands.push_back(candidate);
        refs.push_back(reference);

        if (predictions) {
            PredictionRecord p;
            p.id = t.id;
            p.candidate = cand_text;
            p.reference = vocab.decode(reference);
            p.bleu = r1;
            p.cosine_sim = r2;
            p.reward_value = rb.r;
            p.match_score = match;
            p.question_class = to_string(qc);
            predictions->push_back(std::move(p));
        }
    }
    if (report.n == 0) throw ContractError("evaluate: no encodable examples in test set");

    const double n = static_cast<double>(report.n);
    report.mean_sentence_bleu /= n;
    report.mean_cosine /= n;
    report.mean_reward /= n;
    report.mean_match_score /= n;
    report.corpus_bleu = bleu_corpus(cands, refs);
    for (QuestionClass qc : all_question_classes()) {
        const char* name = to_string(qc);
        ClassStats st;
        auto it = acc.find(name);
        if (it != acc.end()) {
            st.count = it->second.count;
            st.frequency = it->second.count / n;
            st.mean_sentence_bleu = it->second.bleu / it->second.count;
            st.mean_cosine = it->second.cos / it->second.count;
            st.mean_reward = it->second.rew / it->second.count;
            st.mean_match_score = it->second.match / it->second.count;
        }
        report.classes[name] = st;
    }
    return report;
}

std::string prediction_jsonl(const std::vector<PredictionRecord>& predictions) {
    std::ostringstream ss;
    for (const auto& p : predictions) {
        json j = {{"id", p.id},
                  {"candidate", p.candidate},
                  {"reference", p.reference},
                  {"bleu", p.bleu},
                  {"cosine", p.cosine_sim},
                  {"reward", p.reward_value},
                  {"match_score", p.match_score},
                  {"class", p.question_class}};
        ss << j.dump() << "\n";
    }
    return ss.str();
}

}  // namespace qg
