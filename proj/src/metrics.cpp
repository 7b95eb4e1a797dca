#include "glosskit/metrics.hpp"

#include <cmath>
#include <sstream>

namespace glosskit {

using nlohmann::json;

json EvalReport::to_json() const {
    return json{{"accuracy", accuracy},
                {"total_morphemes", total_morphemes},
                {"correct", correct}};
}

std::string EvalReport::to_text() const {
    std::ostringstream os;
    os << "morphemes " << total_morphemes << "  correct " << correct << "  accuracy "
       << accuracy;
    return os.str();
}

OovReport OovReport::from_counts(long oov_tokens, long oov_incorrect, long total_incorrect,
                                 long total_tokens) {
    if (oov_incorrect > oov_tokens || oov_incorrect > total_incorrect ||
        total_incorrect > total_tokens)
        throw length_mismatch("inconsistent OOV error counts");
    OovReport r;
    r.oov_tokens = oov_tokens;
    r.oov_incorrect = oov_incorrect;
    r.total_incorrect = total_incorrect;
    r.total_tokens = total_tokens;
    r.ratio_oov_of_incorrect =
        total_incorrect > 0 ? double(oov_incorrect) / double(total_incorrect) : 0.0;
    r.ratio_oov_of_total = total_tokens > 0 ? double(oov_incorrect) / double(total_tokens) : 0.0;
    return r;
}

json OovReport::to_json() const {
    return json{{"oov_tokens", oov_tokens},
                {"oov_incorrect", oov_incorrect},
                {"total_incorrect", total_incorrect},
                {"total_tokens", total_tokens},
                {"ratio_oov_of_incorrect", ratio_oov_of_incorrect},
                {"ratio_oov_of_total", ratio_oov_of_total}};
}

std::string OovReport::to_text() const {
    std::ostringstream os;
    auto pct = [](double x) {
        std::ostringstream p;
        p << std::round(x * 1000.0) / 10.0 << "%";
        return p.str();
    };
    os << "# OOV Tokens                 " << oov_tokens << "\n"
       << "# OOV Tokens Incor.          " << oov_incorrect << "\n"
       << "Total Incor.                 " << total_incorrect << "\n"
       << "Total Tokens                 " << total_tokens << "\n"
       << "# OOV Incor. / Total Incor.  " << pct(ratio_oov_of_incorrect) << "\n"
       << "# OOV Incor. / Total Tokens  " << pct(ratio_oov_of_total) << "\n";
    return os.str();
}

namespace {

void check_alignment(const std::vector<Prediction>& preds,
                     const std::vector<EncodedSentence>& gold) {
    if (preds.size() != gold.size())
        throw length_mismatch("predictions for " + std::to_string(preds.size()) +
                              " sentences vs " + std::to_string(gold.size()) + " gold");
    for (size_t i = 0; i < preds.size(); ++i)
        if (static_cast<int>(preds[i].pred_ids.size()) != gold[i].length())
            throw length_mismatch("sentence " + std::to_string(i) + ": " +
                                  std::to_string(preds[i].pred_ids.size()) +
                                  " predictions vs " + std::to_string(gold[i].length()) +
                                  " gold positions");
}

} // namespace

EvalReport morpheme_accuracy(const std::vector<Prediction>& preds,
                             const std::vector<EncodedSentence>& gold) {
    check_alignment(preds, gold);
    EvalReport r;
    for (size_t i = 0; i < preds.size(); ++i) {
        for (int t = 0; t < gold[i].length(); ++t) {
            if (gold[i].label_ids[static_cast<size_t>(t)] == Vocabulary::kSepLabel) continue;
            ++r.total_morphemes;
            if (preds[i].pred_ids[static_cast<size_t>(t)] ==
                gold[i].label_ids[static_cast<size_t>(t)])
                ++r.correct;
        }
    }
    if (r.total_morphemes == 0) throw empty_corpus("no morphemes to evaluate");
    r.accuracy = double(r.correct) / double(r.total_morphemes);
    return r;
}

OovReport oov_report(const std::vector<Prediction>& preds,
                     const std::vector<EncodedSentence>& gold) {
    check_alignment(preds, gold);
    long oov = 0, oov_incorrect = 0, incorrect = 0, total = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        for (int t = 0; t < gold[i].length(); ++t) {
            const size_t ti = static_cast<size_t>(t);
            if (gold[i].label_ids[ti] == Vocabulary::kSepLabel) continue;
            ++total;
            const bool wrong = preds[i].pred_ids[ti] != gold[i].label_ids[ti];
            if (wrong) ++incorrect;
            if (gold[i].oov_mask[ti]) {
                ++oov;
                if (wrong) ++oov_incorrect;
            }
        }
    }
    return OovReport::from_counts(oov, oov_incorrect, incorrect, total);
}

double oov_rate(const std::vector<EncodedSentence>& corpus) {
    long oov = 0, total = 0;
    for (const auto& e : corpus)
        for (int t = 0; t < e.length(); ++t) {
            if (e.input_ids[static_cast<size_t>(t)] == Vocabulary::kSep) continue;
            ++total;
            if (e.oov_mask[static_cast<size_t>(t)]) ++oov;
        }
    if (total == 0) throw empty_corpus("no morphemes in corpus");
    return double(oov) / double(total);
}

} // namespace glosskit
