#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "glosskit/igt.hpp"
#include "glosskit/toygen.hpp"

using namespace glosskit;

namespace {

const char* kGiveEverythingJsonl =
    R"({"transcription":[["Ti","j","ya'","tq","a'"],["juntiir"]],)"
    R"("glosses":[["INC","E3S","VT","PL","ENF"],["ADV"]],)"
    R"("translation":"They give us everything","genre":"story","speaker":"s1","doc":"d1"})";

IgtSentence give_everything_sentence() {
    std::istringstream in(kGiveEverythingJsonl);
    return parse_corpus(in, CorpusFormat::Jsonl).at(0);
}

} // namespace

TEST_CASE("jsonl record parses into words and morphemes") {
    std::istringstream in(kGiveEverythingJsonl);
    auto corpus = parse_corpus(in, CorpusFormat::Jsonl);
    REQUIRE(corpus.size() == 1);
    const auto& s = corpus[0];
    CHECK(s.words.size() == 2);
    CHECK(s.morpheme_count() == 6);
    CHECK(s.words[0][2] == "ya'");
    CHECK(s.glosses[1][0] == "ADV");
    CHECK(s.genre.kind == Genre::Kind::Story);
    CHECK(s.translation.has_value());
}

TEST_CASE("empty stream parses to an empty corpus") {
    std::istringstream in("");
    CHECK(parse_corpus(in, CorpusFormat::Jsonl).empty());
    std::istringstream in2("\n\n");
    CHECK(parse_corpus(in2, CorpusFormat::TwoLine).empty());
}

TEST_CASE("morpheme/gloss count mismatch raises MisalignedGloss") {
    std::istringstream in(
        R"({"transcription":[["a","b","c","d","e"]],"glosses":[["X","Y","Z","W"]],"genre":"story"})");
    CHECK_THROWS_WITH_AS(parse_corpus(in, CorpusFormat::Jsonl),
                         doctest::Contains("MisalignedGloss"), Error);
}

TEST_CASE("syntax errors raise MalformedRecord with the line number") {
    std::istringstream in("{\"transcription\":[[\"a\"]],\"glosses\":[[\"X\"]],\"genre\":\"story\"}\nnot json\n");
    try {
        parse_corpus(in, CorpusFormat::Jsonl);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("MalformedRecord at line 2") != std::string::npos);
    }
}

TEST_CASE("two-line format imports with directives") {
    std::istringstream in(
        "# genre: story\n"
        "# speaker: s1\n"
        "# doc: d1\n"
        "Ti-j-ya'-tq-a' juntiir\n"
        "INC-E3S-VT-PL-ENF ADV\n"
        "\n"
        "wi qa-seboya q-iik\n"
        "EXS E1P-NOM E1P-S\n");
    auto corpus = parse_corpus(in, CorpusFormat::TwoLine);
    REQUIRE(corpus.size() == 2);
    CHECK(corpus[0].words.size() == 2);
    CHECK(corpus[0].morpheme_count() == 6);
    CHECK(corpus[0].genre.kind == Genre::Kind::Story);
    CHECK(corpus[0].doc_id == "d1");
    CHECK(corpus[1].words[1][1] == "seboya");
    CHECK(corpus[1].index_in_doc == 1);
}

TEST_CASE("two-line mismatches are flagged") {
    std::istringstream in("a-b c\nX Y\n");
    CHECK_THROWS_WITH_AS(parse_corpus(in, CorpusFormat::TwoLine),
                         doctest::Contains("MisalignedGloss"), Error);
    std::istringstream in2("a b\nX Y\nc d\n");
    CHECK_THROWS_WITH_AS(parse_corpus(in2, CorpusFormat::TwoLine),
                         doctest::Contains("MalformedRecord"), Error);
    std::istringstream in3("lonely\n");
    CHECK_THROWS_WITH_AS(parse_corpus(in3, CorpusFormat::TwoLine),
                         doctest::Contains("MalformedRecord"), Error);
}

TEST_CASE("serialize-parse round trip is stable") {
    ToySpec spec;
    spec.n_sentences = 60;
    auto corpus = generate_toy_corpus(spec, 5);
    std::ostringstream first;
    serialize_corpus(corpus, first);
    std::istringstream back(first.str());
    auto reparsed = parse_corpus(back, CorpusFormat::Jsonl);
    std::ostringstream second;
    serialize_corpus(reparsed, second);
    CHECK(first.str() == second.str());
}

TEST_CASE("vocabulary from a single sentence") {
    auto s = give_everything_sentence();
    auto v = build_vocab({s});
    // 4 specials + 6 distinct morphemes, SEP + 6 distinct glosses
    CHECK(v.morpheme_count() == 10);
    CHECK(v.gloss_count() == 7);

    // duplicates add nothing
    auto v2 = build_vocab({s, s});
    CHECK(v2.morpheme_count() == 10);
    CHECK(v2.gloss_count() == 7);

    CHECK_THROWS_WITH_AS(build_vocab({}), doctest::Contains("EmptyCorpus"), Error);
}

TEST_CASE("vocabulary maps are mutually inverse") {
    ToySpec spec;
    spec.n_sentences = 80;
    auto corpus = generate_toy_corpus(spec, 9);
    auto v = build_vocab(corpus);
    for (int id = 0; id < v.morpheme_count(); ++id)
        CHECK(v.morpheme_id(v.morpheme(id)) == id);
    for (int id = 0; id < v.gloss_count(); ++id) CHECK(v.gloss_id(v.gloss(id)) == id);
    CHECK(v.gloss(v.unseen_label_id()) == "<unseen>");
}

TEST_CASE("vocabulary save/load round trip preserves ids and fingerprint") {
    auto s = give_everything_sentence();
    auto v = build_vocab({s});
    const std::string path = "vocab_test_roundtrip.json";
    v.save(path);
    auto loaded = Vocabulary::load(path);
    CHECK(loaded.morpheme_count() == v.morpheme_count());
    CHECK(loaded.gloss_count() == v.gloss_count());
    CHECK(loaded.fingerprint() == v.fingerprint());
    for (int id = 0; id < v.morpheme_count(); ++id) CHECK(loaded.morpheme(id) == v.morpheme(id));
    std::remove(path.c_str());
}

TEST_CASE("task encoding inserts SEP at word boundaries only") {
    auto s = give_everything_sentence();
    auto v = build_vocab({s});
    auto e = to_task_sequence(s, v);
    REQUIRE(e.length() == 7);
    CHECK(e.input_ids[5] == Vocabulary::kSep);
    CHECK(e.label_ids[5] == Vocabulary::kSepLabel);
    for (int i = 0; i < 7; ++i) {
        CHECK(!e.oov_mask[i]);
        if (i != 5) {
            CHECK(e.input_ids[i] != Vocabulary::kSep);
            CHECK(e.label_ids[i] != Vocabulary::kSepLabel);
        }
    }
    CHECK(e.input_ids.front() != Vocabulary::kSep);
    CHECK(e.input_ids.back() != Vocabulary::kSep);
}

TEST_CASE("one-word sentence has no SEP") {
    IgtSentence s;
    s.words = {{"juntiir"}};
    s.glosses = {{"ADV"}};
    s.genre = Genre::parse("story");
    auto v = build_vocab({s});
    auto e = to_task_sequence(s, v);
    CHECK(e.length() == 1);
    CHECK(e.input_ids[0] != Vocabulary::kSep);
}

TEST_CASE("unknown morpheme encodes to UNK with oov flag set") {
    auto train = give_everything_sentence();
    auto v = build_vocab({train});
    IgtSentence s;
    s.words = {{"wi"}, {"qa", "seboya"}};
    s.glosses = {{"EXS"}, {"E1P", "NOM"}};
    s.genre = Genre::parse("personal");
    auto e = to_task_sequence(s, v);
    REQUIRE(e.length() == 4);
    CHECK(e.input_ids[3] == Vocabulary::kUnk);
    CHECK(e.oov_mask[3]);
    // unknown gold glosses map to the reserved unseen id
    CHECK(e.label_ids[3] == v.unseen_label_id());
}

TEST_CASE("decode reproduces the surface with <unk> exactly at oov positions") {
    ToySpec spec;
    spec.n_sentences = 200;
    spec.ood_vocab_shift = 0.2;
    auto corpus = generate_toy_corpus(spec, 13);
    std::vector<IgtSentence> id_side, ood_side;
    for (auto& s : corpus)
        (s.genre.kind == Genre::Kind::Story || s.genre.kind == Genre::Kind::History ? id_side
                                                                                    : ood_side)
            .push_back(s);
    REQUIRE(!id_side.empty());
    REQUIRE(!ood_side.empty());
    auto v = build_vocab(id_side);
    for (const auto& s : ood_side) {
        auto e = to_task_sequence(s, v);
        auto surface = decode_input(e, v);
        int pos = 0;
        for (size_t w = 0; w < s.words.size(); ++w) {
            if (w > 0) {
                CHECK(surface[pos] == "<sep>");
                ++pos;
            }
            for (const auto& m : s.words[w]) {
                if (e.oov_mask[pos]) CHECK(surface[pos] == "<unk>");
                else CHECK(surface[pos] == m);
                ++pos;
            }
        }
    }
}

TEST_CASE("sequences beyond the position limit are rejected") {
    IgtSentence s;
    s.genre = Genre::parse("story");
    for (int w = 0; w < 300; ++w) {
        s.words.push_back({"a", "b"});
        s.glosses.push_back({"X", "Y"});
    }
    auto v = build_vocab({s});
    CHECK_THROWS_WITH_AS(to_task_sequence(s, v), doctest::Contains("SequenceTooLong"), Error);
}

TEST_CASE("genre split partitions the corpus deterministically") {
    ToySpec spec;
    spec.n_sentences = 400;
    auto corpus = generate_toy_corpus(spec, 17);
    const std::set<Genre> id_genres = {Genre::parse("story"), Genre::parse("history")};
    const std::set<Genre> ood_genres = {Genre::parse("personal"), Genre::parse("advice")};

    auto splits = split_by_genre(corpus, id_genres, ood_genres, 0.7, 0.5, 42);
    auto splits2 = split_by_genre(corpus, id_genres, ood_genres, 0.7, 0.5, 42);
    CHECK(splits.train.size() == splits2.train.size());
    for (size_t i = 0; i < splits.train.size(); ++i)
        CHECK(splits.train[i].sentence_key() == splits2.train[i].sentence_key());

    // partition invariants: pairwise disjoint, union equals the corpus
    std::map<std::pair<std::string, int>, int> seen;
    size_t total = 0;
    for (const auto* part : {&splits.train, &splits.eval_id, &splits.eval_ood, &splits.test_ood}) {
        total += part->size();
        for (const auto& s : *part) seen[s.sentence_key()]++;
    }
    CHECK(total == corpus.size());
    for (const auto& [key, count] : seen) CHECK(count == 1);

    // genre sides respected
    for (const auto& s : splits.train) CHECK(id_genres.count(s.genre) == 1);
    for (const auto& s : splits.eval_id) CHECK(id_genres.count(s.genre) == 1);
    for (const auto& s : splits.eval_ood) CHECK(ood_genres.count(s.genre) == 1);
    for (const auto& s : splits.test_ood) CHECK(ood_genres.count(s.genre) == 1);

    // requested ratios hold
    const size_t n_id = splits.train.size() + splits.eval_id.size();
    CHECK(splits.train.size() == static_cast<size_t>(std::llround(0.7 * double(n_id))));
    const size_t n_ood = splits.eval_ood.size() + splits.test_ood.size();
    CHECK(splits.eval_ood.size() == static_cast<size_t>(std::llround(0.5 * double(n_ood))));
}

TEST_CASE("corpus with only ID genres leaves OOD splits empty") {
    ToySpec spec;
    spec.n_sentences = 100;
    spec.genre_weights = {{"story", 0.5}, {"history", 0.5}};
    auto corpus = generate_toy_corpus(spec, 3);
    auto splits = split_by_genre(corpus, {Genre::parse("story"), Genre::parse("history")},
                                 {Genre::parse("personal")}, 0.7, 0.5, 1);
    CHECK(splits.eval_ood.empty());
    CHECK(splits.test_ood.empty());
    CHECK(splits.train.size() + splits.eval_id.size() == corpus.size());
}

TEST_CASE("genres outside both sides raise UnassignedGenre") {
    ToySpec spec;
    spec.n_sentences = 50;
    auto corpus = generate_toy_corpus(spec, 4);
    CHECK_THROWS_WITH_AS(split_by_genre(corpus, {Genre::parse("story")},
                                        {Genre::parse("personal"), Genre::parse("advice")}, 0.7,
                                        0.5, 1),
                         doctest::Contains("UnassignedGenre"), Error);
}

TEST_CASE("document-random policy keeps documents whole") {
    ToySpec spec;
    spec.n_sentences = 300;
    spec.docs_per_genre = 6;
    auto corpus = generate_toy_corpus(spec, 23);
    auto splits = split_by_genre(corpus, {Genre::parse("story"), Genre::parse("history")},
                                 {Genre::parse("personal"), Genre::parse("advice")}, 0.6, 0.5,
                                 11, SplitPolicy::DocumentRandom);
    std::map<std::string, std::set<int>> doc_sides;
    int side = 0;
    for (const auto* part : {&splits.train, &splits.eval_id}) {
        for (const auto& s : *part) doc_sides[s.doc_id].insert(side);
        ++side;
    }
    for (const auto& [doc, sides] : doc_sides) CHECK(sides.size() == 1);
}
