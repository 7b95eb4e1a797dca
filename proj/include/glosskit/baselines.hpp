#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "glosskit/igt.hpp"
#include "glosskit/trainer.hpp"

namespace glosskit {

// Observed gold glosses per morpheme surface, counted over the training
// split only. Word separators are not part of the lexicon.
class GlossLexicon {
  public:
    // Counts are kept in sorted maps so ties and serialization are stable.
    using Counts = std::map<std::string, long>;

    void observe(const std::string& morpheme, const std::string& gloss);

    const Counts* counts_for(const std::string& morpheme) const;
    const Counts& global_counts() const { return global_; }
    long total_count() const { return total_; }
    // Highest-count gloss for the morpheme; ties break to the
    // lexicographically smallest gloss. Empty optional when unseen.
    std::optional<std::string> most_frequent(const std::string& morpheme) const;
    const std::string& global_mode() const;

    const std::map<std::string, Counts>& entries() const { return entries_; }
    nlohmann::json to_json() const;

  private:
    std::map<std::string, Counts> entries_;
    Counts global_;
    long total_ = 0;
};

GlossLexicon fit_lexicon(const std::vector<IgtSentence>& train);

// Always the most common observed gloss per morpheme; out-of-vocabulary
// morphemes fall back to the globally most frequent gloss. The returned
// prediction is aligned with to_task_sequence(), with SEP predicted at
// separator positions, and carries the normalized count distribution.
Prediction predict_most_frequent(const GlossLexicon& lex, const IgtSentence& s,
                                 const Vocabulary& vocab);

// Samples a gloss from the observed glosses of each morpheme, by default
// proportionally to counts (uniform over observed types behind the flag).
// Out-of-vocabulary morphemes sample uniformly from the real gloss labels.
Prediction predict_random(const GlossLexicon& lex, const IgtSentence& s,
                          const Vocabulary& vocab, Rng& rng, bool proportional = true);

std::vector<Prediction> predict_most_frequent_corpus(const GlossLexicon& lex,
                                                     const std::vector<IgtSentence>& corpus,
                                                     const Vocabulary& vocab);
std::vector<Prediction> predict_random_corpus(const GlossLexicon& lex,
                                              const std::vector<IgtSentence>& corpus,
                                              const Vocabulary& vocab, std::uint64_t seed,
                                              bool proportional = true);

} // namespace glosskit
