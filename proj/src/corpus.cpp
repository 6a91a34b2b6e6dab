#include "qg/corpus.hpp"

#include <cmath>
#include <json.hpp>

#include "qg/common.hpp"

namespace qg {

using nlohmann::json;

void QaTriple::validate() const {
    if (trim(context).empty()) throw ContractError("triple " + id + ": empty context");
    if (trim(answer).empty()) throw ContractError("triple " + id + ": empty answer");
    if (trim(question).empty()) throw ContractError("triple " + id + ": empty question");
    if (answer_start.has_value()) {
        int off = *answer_start;
        if (off < 0 || off + answer.size() > context.size() ||
            context.compare(static_cast<size_t>(off), answer.size(), answer) != 0) {
            throw ContractError("triple " + id + ": answer_start does not match answer text");
        }
    }
}

namespace {

const json& expect(const json& node, const char* key, const std::string& path) {
    if (!node.is_object() || !node.contains(key)) {
        throw InputError("SQuAD schema error: missing key at " + path + "." + key);
    }
    return node.at(key);
}

std::string expect_string(const json& node, const char* key, const std::string& path) {
    const json& v = expect(node, key, path);
    if (!v.is_string()) throw InputError("SQuAD schema error: " + path + "." + key + " is not a string");
    return v.get<std::string>();
}

}  // namespace

std::vector<QaTriple> load_squad(const std::string& path, LoadWarnings* warnings) {
    std::string text = read_text_file(path);
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError("SQuAD parse error at byte " + std::to_string(e.byte) + " in " + path +
                         ": " + e.what());
    }
    LoadWarnings local;
    LoadWarnings& warn = warnings ? *warnings : local;

    std::vector<QaTriple> out;
    const json& data = expect(root, "data", "$");
    if (!data.is_array()) throw InputError("SQuAD schema error: $.data is not an array");
    for (size_t a = 0; a < data.size(); ++a) {
        std::string apath = "$.data[" + std::to_string(a) + "]";
        const json& paragraphs = expect(data[a], "paragraphs", apath);
        if (!paragraphs.is_array()) throw InputError("SQuAD schema error: " + apath + ".paragraphs is not an array");
        for (size_t p = 0; p < paragraphs.size(); ++p) {
            std::string ppath = apath + ".paragraphs[" + std::to_string(p) + "]";
            std::string context = expect_string(paragraphs[p], "context", ppath);
            const json& qas = expect(paragraphs[p], "qas", ppath);
            if (!qas.is_array()) throw InputError("SQuAD schema error: " + ppath + ".qas is not an array");
            for (size_t q = 0; q < qas.size(); ++q) {
                std::string qpath = ppath + ".qas[" + std::to_string(q) + "]";
                const json& qa = qas[q];
                QaTriple t;
                t.context = context;
                t.question = expect_string(qa, "question", qpath);
                t.id = expect_string(qa, "id", qpath);
                const json& answers = expect(qa, "answers", qpath);
                if (!answers.is_array()) throw InputError("SQuAD schema error: " + qpath + ".answers is not an array");
                if (answers.empty()) {
                    warn.skipped_no_answers += 1;
                    continue;
                }
                std::string anspath = qpath + ".answers[0]";
                t.answer = expect_string(answers[0], "text", anspath);
                const json& start = expect(answers[0], "answer_start", anspath);
                if (!start.is_number_integer()) {
                    throw InputError("SQuAD schema error: " + anspath + ".answer_start is not an integer");
                }
                int off = start.get<int>();
                if (off >= 0) {
                    bool matches = static_cast<size_t>(off) + t.answer.size() <= t.context.size() &&
                                   t.context.compare(static_cast<size_t>(off), t.answer.size(),
                                                     t.answer) == 0;
                    if (matches) {
                        t.answer_start = off;
                    } else {
                        warn.cleared_answer_offsets += 1;
                    }
                }
                out.push_back(std::move(t));
            }
        }
    }
    return out;
}

std::string squad_json_string(const std::vector<QaTriple>& triples, const std::string& title) {
    json paragraphs = json::array();
    for (const auto& t : triples) {
        json answer = {{"text", t.answer},
                       {"answer_start", t.answer_start.has_value() ? *t.answer_start : -1}};
        json qa = {{"id", t.id}, {"question", t.question}, {"answers", json::array({answer})}};
        paragraphs.push_back({{"context", t.context}, {"qas", json::array({qa})}});
    }
    json root = {{"data", json::array({{{"title", title}, {"paragraphs", paragraphs}}})},
                 {"version", "1.1"}};
    return root.dump(2) + "\n";
}

void save_squad(const std::vector<QaTriple>& triples, const std::string& path,
                const std::string& title) {
    atomic_write_file(path, squad_json_string(triples, title));
}

std::pair<std::vector<QaTriple>, std::vector<QaTriple>> split_train_dev(
    const std::vector<QaTriple>& triples, double dev_fraction, uint64_t seed) {
    if (triples.empty()) throw ContractError("split_train_dev: empty input");
    if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) {
        throw ContractError("split_train_dev: dev_fraction must be in (0,1)");
    }
    std::vector<size_t> order(triples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    size_t n = triples.size();
    size_t dev_n = static_cast<size_t>(std::floor(dev_fraction * static_cast<double>(n)));
    if (dev_n == 0 && n >= 2) dev_n = 1;
    if (dev_n >= n) dev_n = n - 1;

    std::vector<QaTriple> dev, train;
    dev.reserve(dev_n);
    train.reserve(n - dev_n);
    for (size_t i = 0; i < n; ++i) {
        if (i < dev_n) {
            dev.push_back(triples[order[i]]);
        } else {
            train.push_back(triples[order[i]]);
        }
    }
    return {std::move(train), std::move(dev)};
}

namespace {

const std::vector<std::string> kNames = {
    "alice", "brian",  "clara", "david", "elena", "felix", "grace",  "henry", "irene", "jacob",
    "karen", "louis", "maria", "nolan", "olivia", "peter", "quinn", "rosa",  "samuel", "tina"};

const std::vector<std::string> kCities = {
    "paris",  "london", "berlin",   "madrid",    "rome",      "vienna", "prague",
    "dublin", "oslo",   "lisbon",   "athens",    "warsaw",    "budapest", "helsinki",
    "stockholm", "zurich", "geneva", "munich",   "porto",     "seville"};

const std::vector<std::string> kBookWords = {
    "storm",  "journey", "garden", "mirror", "harbor",  "orchard", "lantern",
    "compass", "meadow", "canyon", "island", "castle",  "bridge",  "forest",
    "valley", "harvest", "voyage", "signal", "ember",   "horizon"};

const std::vector<std::string> kReasons = {"war",    "famine",  "flood",     "drought",
                                           "plague", "harvest", "revolution", "blockade",
                                           "storm",  "election"};

const std::vector<std::string> kTransports = {"boat", "train", "horse", "carriage", "bicycle"};

const std::vector<std::string> kCounts = {"40",   "75",   "120",  "210",  "345",
                                          "800",  "950",  "1200", "3300", "6400"};

std::string pick_year(Rng& rng) { return std::to_string(1900 + 3 * rng.uniform_int(0, 29)); }

struct Fact {
    std::string sentence;
    std::string answer;
    std::string question;  // empty for distractor-only facts
};

// One fact per WH class; class index: 0 WhatWhich, 1 WhyHow, 2 Where,
// 3 When, 4 Who, 5 HowMany. variant alternates sub-templates.
Fact make_fact(int cls, int variant, Rng& rng) {
    Fact f;
    switch (cls) {
        case 0: {
            std::string name = rng.pick(kNames);
            std::string book = "the " + rng.pick(kBookWords);
            f.sentence = name + " wrote " + book + " .";
            f.answer = book;
            f.question = (variant % 2 == 0) ? "what did " + name + " write ?"
                                            : "which book did " + name + " write ?";
            break;
        }
        case 1: {
            std::string name = rng.pick(kNames);
            std::string city = rng.pick(kCities);
            if (variant % 2 == 0) {
                std::string reason = "the " + rng.pick(kReasons);
                f.sentence = name + " moved to " + city + " because of " + reason + " .";
                f.answer = reason;
                f.question = "why did " + name + " move to " + city + " ?";
            } else {
                std::string transport = "by " + rng.pick(kTransports);
                f.sentence = name + " traveled to " + city + " " + transport + " .";
                f.answer = transport;
                f.question = "how did " + name + " travel to " + city + " ?";
            }
            break;
        }
        case 2: {
            std::string name = rng.pick(kNames);
            std::string city = rng.pick(kCities);
            f.sentence = name + " was born in " + city + " in " + pick_year(rng) + " .";
            f.answer = city;
            f.question = "where was " + name + " born ?";
            break;
        }
        case 3: {
            std::string name = rng.pick(kNames);
            std::string year = pick_year(rng);
            f.sentence = name + " was born in " + rng.pick(kCities) + " in " + year + " .";
            f.answer = year;
            f.question = "when was " + name + " born ?";
            break;
        }
        case 4: {
            std::string name = rng.pick(kNames);
            std::string city = rng.pick(kCities);
            f.sentence = name + " was born in " + city + " in " + pick_year(rng) + " .";
            f.answer = name;
            f.question = "who was born in " + city + " ?";
            break;
        }
        default: {
            std::string city = rng.pick(kCities);
            std::string count = rng.pick(kCounts);
            f.sentence = city + " has " + count + " people .";
            f.answer = count;
            f.question = "how many people live in " + city + " ?";
            break;
        }
    }
    return f;
}

}  // namespace

std::vector<QaTriple> generate_synthetic(int n, uint64_t seed) {
    if (n < 1) throw ContractError("generate_synthetic: n must be >= 1");
    Rng rng(seed);
    std::vector<QaTriple> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        int cls = i % 6;
        int variant = (i / 6) % 2;
        Fact main = make_fact(cls, variant, rng);
        // A distractor fact from another class; resampled until its sentence
        // does not contain the answer, so the offset stays unambiguous.
        Fact distractor;
        do {
            int dcls = (cls + 1 + static_cast<int>(rng.index(5))) % 6;
            distractor = make_fact(dcls, rng.uniform_int(0, 1), rng);
        } while (distractor.sentence.find(main.answer) != std::string::npos);

        bool main_first = rng.uniform() < 0.5;
        QaTriple t;
        t.context = main_first ? main.sentence + " " + distractor.sentence
                               : distractor.sentence + " " + main.sentence;
        size_t main_off = main_first ? 0 : distractor.sentence.size() + 1;
        size_t in_main = main.sentence.find(main.answer);
        t.answer = main.answer;
        t.answer_start = static_cast<int>(main_off + in_main);
        t.question = main.question;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "syn-%06d", i);
        t.id = idbuf;
        t.validate();
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace qg
