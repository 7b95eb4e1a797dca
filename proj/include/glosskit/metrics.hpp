#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "glosskit/igt.hpp"
#include "glosskit/trainer.hpp"

namespace glosskit {

// Position-wise exact-match accuracy over morphemes, ignoring word
// separators. Gold labels outside the predictable label set count as
// incorrect in the denominator.
struct EvalReport {
    double accuracy = 0.0;
    long total_morphemes = 0;
    long correct = 0;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

// Decomposition of the error into out-of-vocabulary and in-vocabulary parts,
// with the two ratio rows reported as percentages of incorrect predictions
// and of all tokens.
struct OovReport {
    long oov_tokens = 0;
    long oov_incorrect = 0;
    long total_incorrect = 0;
    long total_tokens = 0;
    double ratio_oov_of_incorrect = 0.0;
    double ratio_oov_of_total = 0.0;

    static OovReport from_counts(long oov_tokens, long oov_incorrect, long total_incorrect,
                                 long total_tokens);
    // accuracy restricted to OOV positions; denominators from this report
    double oov_position_accuracy() const {
        return oov_tokens > 0 ? 1.0 - double(oov_incorrect) / double(oov_tokens) : 1.0;
    }
    nlohmann::json to_json() const;
    std::string to_text() const;
};

EvalReport morpheme_accuracy(const std::vector<Prediction>& preds,
                             const std::vector<EncodedSentence>& gold);

OovReport oov_report(const std::vector<Prediction>& preds,
                     const std::vector<EncodedSentence>& gold);

// Fraction of non-SEP morpheme tokens whose surface form is outside the
// training vocabulary.
double oov_rate(const std::vector<EncodedSentence>& corpus);

} // namespace glosskit
