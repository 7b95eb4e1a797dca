#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "glosskit/toygen.hpp"

using namespace glosskit;

namespace {

bool is_ood_genre(const Genre& g) {
    return g.kind == Genre::Kind::Personal || g.kind == Genre::Kind::Advice;
}

} // namespace

TEST_CASE("generated sentences satisfy the alignment invariants") {
    ToySpec spec;
    spec.n_sentences = 500;
    auto corpus = generate_toy_corpus(spec, 1);
    CHECK(corpus.size() == 500);
    for (size_t i = 0; i < corpus.size(); ++i) {
        CHECK_NOTHROW(validate_sentence(corpus[i], static_cast<long>(i)));
        CHECK(!corpus[i].doc_id.empty());
        CHECK(!corpus[i].speaker_id.empty());
    }
}

TEST_CASE("generation is deterministic per seed") {
    ToySpec spec;
    spec.n_sentences = 120;
    std::ostringstream a, b, c;
    serialize_corpus(generate_toy_corpus(spec, 7), a);
    serialize_corpus(generate_toy_corpus(spec, 7), b);
    serialize_corpus(generate_toy_corpus(spec, 8), c);
    CHECK(a.str() == b.str());
    CHECK(a.str() != c.str());
}

TEST_CASE("genre distribution tracks the requested weights") {
    ToySpec spec;
    spec.n_sentences = 4000;
    auto corpus = generate_toy_corpus(spec, 2);
    std::map<std::string, long> counts;
    for (const auto& s : corpus) counts[s.genre.str()]++;
    double wsum = 0.0;
    for (const auto& [g, w] : spec.genre_weights) wsum += w;
    for (const auto& [g, w] : spec.genre_weights) {
        const double p = w / wsum;
        const double expected = p * spec.n_sentences;
        const double sigma = std::sqrt(spec.n_sentences * p * (1.0 - p));
        CHECK(std::abs(counts[g] - expected) <= 3.5 * sigma);
    }
}

TEST_CASE("zero ambiguity makes every surface unambiguous") {
    ToySpec spec;
    spec.n_sentences = 1500;
    spec.ambiguity_rate = 0.0;
    spec.ood_vocab_shift = 0.0;
    auto corpus = generate_toy_corpus(spec, 3);
    std::map<std::string, std::set<std::string>> observed;
    for (const auto& s : corpus)
        for (size_t w = 0; w < s.words.size(); ++w)
            for (size_t m = 0; m < s.words[w].size(); ++m)
                observed[s.words[w][m]].insert(s.glosses[w][m]);
    for (const auto& [surface, glosses] : observed) CHECK(glosses.size() == 1);
}

TEST_CASE("ambiguous token fraction approximates the configured rate") {
    ToySpec spec;
    spec.n_sentences = 3000;
    spec.ambiguity_rate = 0.2;
    spec.ood_vocab_shift = 0.0;
    auto corpus = generate_toy_corpus(spec, 5);

    // ambiguous surfaces are exactly those observed with two distinct glosses
    std::map<std::string, std::set<std::string>> observed;
    for (const auto& s : corpus)
        for (size_t w = 0; w < s.words.size(); ++w)
            for (size_t m = 0; m < s.words[w].size(); ++m)
                observed[s.words[w][m]].insert(s.glosses[w][m]);

    long ambiguous_tokens = 0, total_tokens = 0;
    long amb_verb = 0, amb_noun = 0;
    for (const auto& s : corpus)
        for (size_t w = 0; w < s.words.size(); ++w)
            for (size_t m = 0; m < s.words[w].size(); ++m) {
                ++total_tokens;
                if (observed[s.words[w][m]].size() > 1) {
                    ++ambiguous_tokens;
                    (s.glosses[w][m] == "VT" ? amb_verb : amb_noun)++;
                }
            }
    const double frac = double(ambiguous_tokens) / double(total_tokens);
    CHECK(frac == doctest::Approx(0.2).epsilon(0.08));

    // the two readings of an ambiguous stem are close to equiprobable
    const double verb_share = double(amb_verb) / double(ambiguous_tokens);
    CHECK(verb_share == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("OOD vocabulary shift produces the requested OOV rate") {
    ToySpec spec;
    spec.n_sentences = 3000;
    spec.ood_vocab_shift = 0.1;
    auto corpus = generate_toy_corpus(spec, 6);
    std::vector<IgtSentence> id_side, ood_side;
    for (auto& s : corpus) (is_ood_genre(s.genre) ? ood_side : id_side).push_back(s);
    auto vocab = build_vocab(id_side);

    long oov = 0, total = 0;
    for (const auto& s : ood_side)
        for (const auto& w : s.words)
            for (const auto& m : w) {
                ++total;
                if (!vocab.has_morpheme(m)) ++oov;
            }
    CHECK(double(oov) / double(total) == doctest::Approx(0.10).epsilon(0.15));

    // ID-side text stays effectively in-vocabulary
    long oov_id = 0, total_id = 0;
    for (const auto& s : id_side)
        for (const auto& w : s.words)
            for (const auto& m : w) {
                ++total_id;
                if (!vocab.has_morpheme(m)) ++oov_id;
            }
    CHECK(double(oov_id) / double(total_id) < 0.01);
}

TEST_CASE("directional suffix gloss is fully determined by the agreement prefix") {
    ToySpec spec;
    spec.n_sentences = 800;
    auto corpus = generate_toy_corpus(spec, 8);
    long verbs = 0;
    for (const auto& s : corpus)
        for (size_t w = 0; w < s.words.size(); ++w)
            if (s.glosses[w].size() == 3) {
                ++verbs;
                const std::string& agr = s.glosses[w][0];
                const std::string& dir = s.glosses[w][2];
                REQUIRE(agr.size() == 2);
                REQUIRE(dir.size() == 4);
                CHECK(dir.back() == agr.back()); // A<i> pairs with DIR<i>
            }
    CHECK(verbs > 100);
}

TEST_CASE("invalid specs are rejected") {
    ToySpec spec;
    spec.ambiguity_rate = 0.9; // infeasible for the default template mix
    CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("InvalidSpec"), Error);

    ToySpec spec2;
    spec2.words_min = 5;
    spec2.words_max = 2;
    CHECK_THROWS_WITH_AS(spec2.validate(), doctest::Contains("InvalidSpec"), Error);

    ToySpec spec3;
    spec3.genre_weights = {{"story", -1.0}};
    CHECK_THROWS_WITH_AS(spec3.validate(), doctest::Contains("InvalidSpec"), Error);

    CHECK_THROWS_WITH_AS(ToySpec::from_json_text("{oops"), doctest::Contains("InvalidSpec"),
                         Error);
}

TEST_CASE("spec round trips through JSON with overrides applied") {
    auto spec = ToySpec::from_json_text(
        R"({"n_sentences": 42, "ambiguity_rate": 0.1, "genre_weights": {"story": 1.0, "personal": 1.0}})");
    CHECK(spec.n_sentences == 42);
    CHECK(spec.ambiguity_rate == doctest::Approx(0.1));
    CHECK(spec.genre_weights.size() == 2);
    auto corpus = generate_toy_corpus(spec, 1);
    CHECK(corpus.size() == 42);
}
