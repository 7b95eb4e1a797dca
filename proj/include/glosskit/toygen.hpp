#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "glosskit/igt.hpp"

namespace glosskit {

// Stochastic template grammar for generating desk-scale corpora.
//
// Word templates:
//   verb: agreement prefix + verb stem + directional suffix
//         glosses A<i> VT DIR<i>, with the suffix index agreeing with the
//         prefix index (so one slot is fully determined by the other);
//   noun: possessive prefix + noun stem, glosses E<i> S;
//   adv:  a bare stem glossed ADV.
//
// Ambiguous stems appear in both verb and noun templates; their gold gloss
// (VT or S) is decided by the neighboring prefix, so context models can beat
// a per-morpheme lexicon. OOD genres draw a controllable fraction of stems
// from a disjoint pool, producing out-of-vocabulary tokens at a chosen rate.
struct ToySpec {
    int n_sentences = 3000;
    std::map<std::string, double> genre_weights = {
        {"story", 0.33}, {"history", 0.33}, {"personal", 0.17}, {"advice", 0.17}};
    int words_min = 3;
    int words_max = 6;
    double verb_weight = 0.4;
    double noun_weight = 0.4;
    double adv_weight = 0.2;
    int n_verb_stems = 40;
    int n_noun_stems = 40;
    int n_adv_stems = 15;
    int n_ambiguous_stems = 12;
    int n_ood_stems_per_class = 12;
    // Fraction of morpheme tokens whose gold gloss is determined by the
    // neighboring prefix rather than by the surface form alone.
    double ambiguity_rate = 0.2;
    // Fraction of morpheme tokens in OOD-genre sentences drawn from the
    // disjoint OOD stem pool; equals the expected OOD OOV rate.
    double ood_vocab_shift = 0.1;
    int docs_per_genre = 5;

    void validate() const; // throws InvalidSpec

    static ToySpec from_json_file(const std::string& path);
    static ToySpec from_json_text(const std::string& text);
};

std::vector<IgtSentence> generate_toy_corpus(const ToySpec& spec, std::uint64_t seed);

} // namespace glosskit
