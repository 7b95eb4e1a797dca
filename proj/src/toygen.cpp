#include "glosskit/toygen.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "glosskit/rng.hpp"

namespace glosskit {

using nlohmann::json;

namespace {

double expected_morphemes_per_word(const ToySpec& s) {
    const double total = s.verb_weight + s.noun_weight + s.adv_weight;
    return (3.0 * s.verb_weight + 2.0 * s.noun_weight + s.adv_weight) / total;
}

// Per-stem-slot probabilities derived from the token-level rates in the spec.
double ambiguous_slot_prob(const ToySpec& s) {
    const double total = s.verb_weight + s.noun_weight + s.adv_weight;
    const double eligible = (s.verb_weight + s.noun_weight) / total;
    if (eligible == 0.0) return 0.0;
    return s.ambiguity_rate * expected_morphemes_per_word(s) / eligible;
}

double ood_slot_prob(const ToySpec& s) {
    return s.ood_vocab_shift * expected_morphemes_per_word(s);
}

const char* kConsonants[] = {"b",  "ch", "j", "k",  "l", "m", "n",
                             "p",  "q",  "r", "s",  "t", "tz", "w",
                             "x",  "y"};
const char* kVowels[] = {"a", "e", "i", "o", "u"};

std::string make_syllable(Rng& rng) {
    std::string s = kConsonants[rng.uniform_int(std::size(kConsonants))];
    s += kVowels[rng.uniform_int(std::size(kVowels))];
    if (rng.uniform() < 0.35) s += kConsonants[rng.uniform_int(std::size(kConsonants))];
    return s;
}

std::vector<std::string> make_stem_pool(int n, Rng& rng, std::set<std::string>& taken,
                                        const char* suffix_tag) {
    std::vector<std::string> pool;
    pool.reserve(static_cast<size_t>(n));
    while (static_cast<int>(pool.size()) < n) {
        std::string stem = make_syllable(rng) + make_syllable(rng) + suffix_tag;
        if (taken.insert(stem).second) pool.push_back(std::move(stem));
    }
    return pool;
}

int sample_weighted(const std::vector<double>& weights, Rng& rng) {
    double total = 0.0;
    for (double w : weights) total += w;
    double x = rng.uniform() * total;
    for (size_t i = 0; i < weights.size(); ++i) {
        x -= weights[i];
        if (x < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
}

// Stories and histories are about others; anecdotes about the speaker and
// advice about the listener. Person-index preferences follow that.
std::vector<double> person_weights(const Genre& g) {
    switch (g.kind) {
        case Genre::Kind::Story:
        case Genre::Kind::History: return {0.15, 0.15, 0.7};
        case Genre::Kind::Personal: return {0.6, 0.2, 0.2};
        case Genre::Kind::Advice: return {0.2, 0.6, 0.2};
        case Genre::Kind::Other: return {1.0 / 3, 1.0 / 3, 1.0 / 3};
    }
    return {1.0 / 3, 1.0 / 3, 1.0 / 3};
}

} // namespace

void ToySpec::validate() const {
    if (n_sentences < 1) throw invalid_spec("n_sentences must be >= 1");
    if (genre_weights.empty()) throw invalid_spec("genre_weights must not be empty");
    double gsum = 0.0;
    for (const auto& [name, w] : genre_weights) {
        if (w < 0.0) throw invalid_spec("negative weight for genre '" + name + "'");
        gsum += w;
    }
    if (gsum <= 0.0) throw invalid_spec("genre weights sum to zero");
    if (words_min < 1 || words_max < words_min)
        throw invalid_spec("need 1 <= words_min <= words_max");
    if (verb_weight < 0 || noun_weight < 0 || adv_weight < 0 ||
        verb_weight + noun_weight + adv_weight <= 0)
        throw invalid_spec("template weights must be non-negative and sum above zero");
    if (n_verb_stems < 1 || n_noun_stems < 1 || n_adv_stems < 1)
        throw invalid_spec("every stem pool needs at least one entry");
    if (ambiguity_rate < 0.0 || ambiguity_rate > 1.0 || ood_vocab_shift < 0.0 ||
        ood_vocab_shift > 1.0)
        throw invalid_spec("rates must lie in [0, 1]");
    if (ambiguity_rate > 0.0 && n_ambiguous_stems < 1)
        throw invalid_spec("ambiguity_rate > 0 needs ambiguous stems");
    if (ood_vocab_shift > 0.0 && n_ood_stems_per_class < 1)
        throw invalid_spec("ood_vocab_shift > 0 needs OOD stems");
    if (ambiguous_slot_prob(*this) > 1.0)
        throw invalid_spec("ambiguity_rate too high for the template mix: at most " +
                           std::to_string((verb_weight + noun_weight) /
                                          (verb_weight + noun_weight + adv_weight) /
                                          expected_morphemes_per_word(*this)) +
                           " is feasible");
    if (ood_slot_prob(*this) > 1.0)
        throw invalid_spec("ood_vocab_shift too high for the template mix: at most " +
                           std::to_string(1.0 / expected_morphemes_per_word(*this)) +
                           " is feasible");
    if (docs_per_genre < 1) throw invalid_spec("docs_per_genre must be >= 1");
}

ToySpec ToySpec::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw invalid_spec(std::string("bad JSON: ") + e.what());
    }
    ToySpec s;
    try {
        s.n_sentences = j.value("n_sentences", s.n_sentences);
        if (j.contains("genre_weights"))
            s.genre_weights = j["genre_weights"].get<std::map<std::string, double>>();
        s.words_min = j.value("words_min", s.words_min);
        s.words_max = j.value("words_max", s.words_max);
        s.verb_weight = j.value("verb_weight", s.verb_weight);
        s.noun_weight = j.value("noun_weight", s.noun_weight);
        s.adv_weight = j.value("adv_weight", s.adv_weight);
        s.n_verb_stems = j.value("n_verb_stems", s.n_verb_stems);
        s.n_noun_stems = j.value("n_noun_stems", s.n_noun_stems);
        s.n_adv_stems = j.value("n_adv_stems", s.n_adv_stems);
        s.n_ambiguous_stems = j.value("n_ambiguous_stems", s.n_ambiguous_stems);
        s.n_ood_stems_per_class = j.value("n_ood_stems_per_class", s.n_ood_stems_per_class);
        s.ambiguity_rate = j.value("ambiguity_rate", s.ambiguity_rate);
        s.ood_vocab_shift = j.value("ood_vocab_shift", s.ood_vocab_shift);
        s.docs_per_genre = j.value("docs_per_genre", s.docs_per_genre);
    } catch (const json::exception& e) {
        throw invalid_spec(std::string("bad field: ") + e.what());
    }
    s.validate();
    return s;
}

ToySpec ToySpec::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_spec("cannot open spec file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

std::vector<IgtSentence> generate_toy_corpus(const ToySpec& spec, std::uint64_t seed) {
    spec.validate();

    // The inventory uses its own stream so the lexicon is stable across
    // corpus sizes generated from the same seed.
    Rng inventory_rng(seed ^ 0x1e7d2a3b4c5d6e7full);
    std::set<std::string> taken = {"in", "at", "x", "qa", "aw", "rj", "ik", "ok", "aj"};
    const std::vector<std::string> agr_prefixes = {"in", "at", "x"};
    const std::vector<std::string> poss_prefixes = {"qa", "aw", "rj"};
    const std::vector<std::string> dir_suffixes = {"ik", "ok", "aj"};
    const std::vector<std::string> agr_glosses = {"A1", "A2", "A3"};
    const std::vector<std::string> poss_glosses = {"E1", "E2", "E3"};
    const std::vector<std::string> dir_glosses = {"DIR1", "DIR2", "DIR3"};

    const auto verb_stems = make_stem_pool(spec.n_verb_stems, inventory_rng, taken, "");
    const auto noun_stems = make_stem_pool(spec.n_noun_stems, inventory_rng, taken, "");
    const auto adv_stems = make_stem_pool(spec.n_adv_stems, inventory_rng, taken, "");
    const auto ambiguous_stems =
        make_stem_pool(std::max(spec.n_ambiguous_stems, 1), inventory_rng, taken, "");
    const auto ood_verb = make_stem_pool(std::max(spec.n_ood_stems_per_class, 1),
                                         inventory_rng, taken, "z");
    const auto ood_noun = make_stem_pool(std::max(spec.n_ood_stems_per_class, 1),
                                         inventory_rng, taken, "z");
    const auto ood_adv = make_stem_pool(std::max(spec.n_ood_stems_per_class, 1),
                                        inventory_rng, taken, "z");

    std::vector<Genre> genres;
    std::vector<double> gweights;
    for (const auto& [name, w] : spec.genre_weights) {
        genres.push_back(Genre::parse(name));
        gweights.push_back(w);
    }

    const double p_amb = ambiguous_slot_prob(spec);
    const double p_ood = ood_slot_prob(spec);
    const std::vector<double> template_weights = {spec.verb_weight, spec.noun_weight,
                                                  spec.adv_weight};

    Rng rng(seed);

    // Draw all genres first so documents can be contiguous blocks.
    std::vector<int> genre_of(static_cast<size_t>(spec.n_sentences));
    std::vector<long> genre_counts(genres.size(), 0);
    for (int i = 0; i < spec.n_sentences; ++i) {
        genre_of[static_cast<size_t>(i)] = sample_weighted(gweights, rng);
        ++genre_counts[static_cast<size_t>(genre_of[static_cast<size_t>(i)])];
    }

    std::vector<long> genre_seen(genres.size(), 0);
    std::vector<IgtSentence> corpus;
    corpus.reserve(static_cast<size_t>(spec.n_sentences));
    std::unordered_map<std::string, int> doc_counters;

    for (int i = 0; i < spec.n_sentences; ++i) {
        const int gi = genre_of[static_cast<size_t>(i)];
        const Genre& genre = genres[static_cast<size_t>(gi)];
        const bool is_ood_genre =
            genre.kind == Genre::Kind::Personal || genre.kind == Genre::Kind::Advice;
        const long within = genre_seen[static_cast<size_t>(gi)]++;
        const long doc_index =
            std::min<long>(within * spec.docs_per_genre / std::max<long>(genre_counts[static_cast<size_t>(gi)], 1),
                           spec.docs_per_genre - 1);

        IgtSentence s;
        s.genre = genre;
        s.doc_id = genre.str() + "-d" + std::to_string(doc_index);
        s.speaker_id = "spk-" + genre.str() + std::to_string(doc_index);
        s.index_in_doc = doc_counters[s.doc_id]++;

        const auto pweights = person_weights(genre);
        const int n_words =
            spec.words_min + static_cast<int>(rng.uniform_int(
                                 static_cast<std::uint64_t>(spec.words_max - spec.words_min + 1)));
        for (int w = 0; w < n_words; ++w) {
            const int tmpl = sample_weighted(template_weights, rng);
            const bool from_ood = is_ood_genre && rng.uniform() < p_ood;
            std::vector<std::string> morphemes, glosses;
            if (tmpl == 0) { // verb
                const int person = sample_weighted(pweights, rng);
                const std::string* stem;
                if (from_ood) stem = &ood_verb[rng.uniform_int(ood_verb.size())];
                else if (rng.uniform() < p_amb)
                    stem = &ambiguous_stems[rng.uniform_int(ambiguous_stems.size())];
                else stem = &verb_stems[rng.uniform_int(verb_stems.size())];
                morphemes = {agr_prefixes[person], *stem, dir_suffixes[person]};
                glosses = {agr_glosses[person], "VT", dir_glosses[person]};
            } else if (tmpl == 1) { // noun
                const int person = sample_weighted(pweights, rng);
                const std::string* stem;
                if (from_ood) stem = &ood_noun[rng.uniform_int(ood_noun.size())];
                else if (rng.uniform() < p_amb)
                    stem = &ambiguous_stems[rng.uniform_int(ambiguous_stems.size())];
                else stem = &noun_stems[rng.uniform_int(noun_stems.size())];
                morphemes = {poss_prefixes[person], *stem};
                glosses = {poss_glosses[person], "S"};
            } else { // adverb
                const std::string* stem;
                if (from_ood) stem = &ood_adv[rng.uniform_int(ood_adv.size())];
                else stem = &adv_stems[rng.uniform_int(adv_stems.size())];
                morphemes = {*stem};
                glosses = {"ADV"};
            }
            s.words.push_back(std::move(morphemes));
            s.glosses.push_back(std::move(glosses));
        }
        validate_sentence(s, i + 1);
        corpus.push_back(std::move(s));
    }
    return corpus;
}

} // namespace glosskit
