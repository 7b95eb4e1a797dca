#include <doctest.h>

#include <cmath>

#include "glosskit/metrics.hpp"
#include "glosskit/toygen.hpp"

using namespace glosskit;

namespace {

// Builds a prediction that echoes the gold labels of an encoding.
Prediction echo_prediction(const EncodedSentence& e, int label_vocab) {
    Prediction p;
    p.oov_mask = e.oov_mask;
    p.replaced.assign(e.oov_mask.size(), false);
    for (int id : e.label_ids) {
        p.pred_ids.push_back(std::min(id, label_vocab - 1));
        std::vector<float> dist(static_cast<size_t>(label_vocab), 0.0f);
        dist[static_cast<size_t>(std::min(id, label_vocab - 1))] = 1.0f;
        p.dist.push_back(std::move(dist));
    }
    return p;
}

IgtSentence example_sentence() {
    IgtSentence s;
    s.words = {{"Ti", "j", "ya'", "tq", "a'"}, {"juntiir"}};
    s.glosses = {{"INC", "E3S", "VT", "PL", "ENF"}, {"ADV"}};
    s.genre = Genre::parse("story");
    return s;
}

} // namespace

TEST_CASE("perfect prediction scores 6/6 with SEP excluded") {
    auto s = example_sentence();
    auto v = build_vocab({s});
    std::vector<EncodedSentence> gold = {to_task_sequence(s, v)};
    std::vector<Prediction> preds = {echo_prediction(gold[0], v.gloss_count())};
    auto r = morpheme_accuracy(preds, gold);
    CHECK(r.total_morphemes == 6);
    CHECK(r.correct == 6);
    CHECK(r.accuracy == 1.0);
}

TEST_CASE("one wrong morpheme of six scores 5/6") {
    auto s = example_sentence();
    auto v = build_vocab({s});
    std::vector<EncodedSentence> gold = {to_task_sequence(s, v)};
    auto pred = echo_prediction(gold[0], v.gloss_count());
    pred.pred_ids[0] = (pred.pred_ids[0] + 1) % v.gloss_count();
    auto r = morpheme_accuracy({pred}, gold);
    CHECK(r.total_morphemes == 6);
    CHECK(r.correct == 5);
    CHECK(r.accuracy == doctest::Approx(5.0 / 6.0));
}

TEST_CASE("predicting SEP at a morpheme position is an ordinary error") {
    auto s = example_sentence();
    auto v = build_vocab({s});
    std::vector<EncodedSentence> gold = {to_task_sequence(s, v)};
    auto pred = echo_prediction(gold[0], v.gloss_count());
    pred.pred_ids[2] = Vocabulary::kSepLabel;
    auto r = morpheme_accuracy({pred}, gold);
    CHECK(r.correct == 5);
}

TEST_CASE("unseen gold labels always count as incorrect") {
    auto train = example_sentence();
    auto v = build_vocab({train});
    IgtSentence s;
    s.words = {{"Ti", "nula"}};
    s.glosses = {{"INC", "NEWGLOSS"}};
    s.genre = Genre::parse("story");
    std::vector<EncodedSentence> gold = {to_task_sequence(s, v)};
    REQUIRE(gold[0].label_ids[1] == v.unseen_label_id());
    auto pred = echo_prediction(gold[0], v.gloss_count());
    auto r = morpheme_accuracy({pred}, gold);
    CHECK(r.total_morphemes == 2);
    CHECK(r.correct == 1);
}

TEST_CASE("empty corpus is an error rather than 0/0") {
    CHECK_THROWS_WITH_AS(morpheme_accuracy({}, {}), doctest::Contains("EmptyCorpus"), Error);
}

TEST_CASE("length mismatches signal an upstream alignment bug") {
    auto s = example_sentence();
    auto v = build_vocab({s});
    std::vector<EncodedSentence> gold = {to_task_sequence(s, v)};
    auto pred = echo_prediction(gold[0], v.gloss_count());
    pred.pred_ids.pop_back();
    CHECK_THROWS_WITH_AS(morpheme_accuracy({pred}, gold), doctest::Contains("LengthMismatch"),
                         Error);
}

TEST_CASE("accuracy is invariant to sentence order") {
    ToySpec spec;
    spec.n_sentences = 40;
    auto corpus = generate_toy_corpus(spec, 3);
    auto v = build_vocab(corpus);
    auto gold = encode_corpus(corpus, v);
    std::vector<Prediction> preds;
    Rng rng(5);
    for (const auto& e : gold) {
        auto p = echo_prediction(e, v.gloss_count());
        for (auto& id : p.pred_ids)
            if (rng.uniform() < 0.3) id = static_cast<int>(rng.uniform_int(v.gloss_count()));
        preds.push_back(std::move(p));
    }
    auto fwd = morpheme_accuracy(preds, gold);
    std::reverse(preds.begin(), preds.end());
    std::reverse(gold.begin(), gold.end());
    auto rev = morpheme_accuracy(preds, gold);
    CHECK(fwd.accuracy == rev.accuracy);
    CHECK(fwd.total_morphemes == rev.total_morphemes);
}

TEST_CASE("error-analysis ratios match a hand-checked count fixture") {
    auto r = OovReport::from_counts(527, 376, 1910, 12388);
    CHECK(std::round(r.ratio_oov_of_incorrect * 1000.0) / 10.0 == 19.7);
    CHECK(std::round(r.ratio_oov_of_total * 1000.0) / 10.0 == 3.0);
    CHECK(r.to_text().find("19.7%") != std::string::npos);
    CHECK(r.to_text().find("3%") != std::string::npos);
}

TEST_CASE("hand-built ten-morpheme oov report") {
    // 10 morphemes over two words, 2 OOV of which 1 wrong, 3 wrong total
    IgtSentence s;
    s.words = {{"a", "b", "c", "d", "e"}, {"f", "g", "h", "i", "j"}};
    s.glosses = {{"G0", "G1", "G2", "G3", "G4"}, {"G5", "G6", "G7", "G8", "G9"}};
    s.genre = Genre::parse("story");
    auto v = build_vocab({s});
    auto e = to_task_sequence(s, v);
    // positions 0..4 word one, 5 = SEP, 6..10 word two
    e.oov_mask[0] = true;
    e.oov_mask[6] = true;
    auto pred = echo_prediction(e, v.gloss_count());
    auto wrong = [&](int pos) {
        pred.pred_ids[static_cast<size_t>(pos)] =
            (pred.pred_ids[static_cast<size_t>(pos)] % (v.gloss_count() - 1)) + 1 == e.label_ids[static_cast<size_t>(pos)]
                ? 1
                : (e.label_ids[static_cast<size_t>(pos)] % (v.gloss_count() - 1)) + 1 == 1 ? 2 : 1;
        if (pred.pred_ids[static_cast<size_t>(pos)] == e.label_ids[static_cast<size_t>(pos)])
            pred.pred_ids[static_cast<size_t>(pos)]++;
    };
    wrong(0); // the OOV error
    wrong(1);
    wrong(7);
    auto r = oov_report({pred}, {e});
    CHECK(r.oov_tokens == 2);
    CHECK(r.oov_incorrect == 1);
    CHECK(r.total_incorrect == 3);
    CHECK(r.total_tokens == 10);
    CHECK(std::round(r.ratio_oov_of_incorrect * 1000.0) / 10.0 == 33.3);
    CHECK(r.ratio_oov_of_total == doctest::Approx(0.10));
}

TEST_CASE("zero-OOV corpora report zero ratios") {
    auto s = example_sentence();
    auto v = build_vocab({s});
    std::vector<EncodedSentence> gold = {to_task_sequence(s, v)};
    auto pred = echo_prediction(gold[0], v.gloss_count());
    pred.pred_ids[1] = (pred.pred_ids[1] + 1) % v.gloss_count();
    auto r = oov_report({pred}, gold);
    CHECK(r.oov_tokens == 0);
    CHECK(r.oov_incorrect == 0);
    CHECK(r.total_incorrect == 1);
    CHECK(r.ratio_oov_of_incorrect == 0.0);
    CHECK(r.ratio_oov_of_total == 0.0);
}

TEST_CASE("oov_rate spans its extremes and tracks the generator parameter") {
    auto s = example_sentence();
    auto v = build_vocab({s});
    auto in_vocab = encode_corpus({s}, v);
    CHECK(oov_rate(in_vocab) == 0.0);

    IgtSentence novel;
    novel.words = {{"zzz", "yyy"}};
    novel.glosses = {{"INC", "ENF"}};
    novel.genre = Genre::parse("story");
    auto all_oov = encode_corpus({novel}, v);
    CHECK(oov_rate(all_oov) == 1.0);

    CHECK_THROWS_WITH_AS(oov_rate({}), doctest::Contains("EmptyCorpus"), Error);

    ToySpec spec;
    spec.n_sentences = 2500;
    spec.ood_vocab_shift = 0.1;
    auto corpus = generate_toy_corpus(spec, 11);
    auto splits = split_by_genre(corpus, {Genre::parse("story"), Genre::parse("history")},
                                 {Genre::parse("personal"), Genre::parse("advice")}, 0.7, 0.5,
                                 2);
    auto vocab = build_vocab(splits.train);
    auto pool = encode_corpus(splits.eval_ood, vocab);
    CHECK(oov_rate(pool) == doctest::Approx(0.10).epsilon(0.2));

    // the oov share of all tokens can never exceed the corpus oov rate
    std::vector<Prediction> preds;
    Rng rng(9);
    for (const auto& e : pool) {
        auto p = echo_prediction(e, vocab.gloss_count());
        for (auto& id : p.pred_ids)
            if (rng.uniform() < 0.4)
                id = static_cast<int>(rng.uniform_int(vocab.gloss_count()));
        preds.push_back(std::move(p));
    }
    auto r = oov_report(preds, pool);
    CHECK(r.ratio_oov_of_total <= oov_rate(pool) + 1e-12);
}

TEST_CASE("evaluation is a pure function of its inputs") {
    ToySpec spec;
    spec.n_sentences = 25;
    auto corpus = generate_toy_corpus(spec, 7);
    auto v = build_vocab(corpus);
    auto gold = encode_corpus(corpus, v);
    std::vector<Prediction> preds;
    Rng rng(2);
    for (const auto& e : gold) {
        auto p = echo_prediction(e, v.gloss_count());
        for (auto& id : p.pred_ids)
            if (rng.uniform() < 0.25) id = static_cast<int>(rng.uniform_int(v.gloss_count()));
        preds.push_back(std::move(p));
    }
    auto first = morpheme_accuracy(preds, gold);
    auto second = morpheme_accuracy(preds, gold);
    CHECK(first.accuracy == second.accuracy);
    CHECK(first.correct == second.correct);
    auto oov_first = oov_report(preds, gold);
    auto oov_second = oov_report(preds, gold);
    CHECK(oov_first.to_json() == oov_second.to_json());
}

TEST_CASE("reports serialize to json with consistent fields") {
    auto r = OovReport::from_counts(10, 4, 8, 100);
    auto j = r.to_json();
    CHECK(j["oov_tokens"] == 10);
    CHECK(j["ratio_oov_of_incorrect"] == doctest::Approx(0.5));
    EvalReport er;
    er.accuracy = 0.75;
    er.total_morphemes = 4;
    er.correct = 3;
    CHECK(er.to_json()["accuracy"] == doctest::Approx(0.75));
}
