#include "glosskit/baselines.hpp"

namespace glosskit {

void GlossLexicon::observe(const std::string& morpheme, const std::string& gloss) {
    entries_[morpheme][gloss]++;
    global_[gloss]++;
    ++total_;
}

const GlossLexicon::Counts* GlossLexicon::counts_for(const std::string& morpheme) const {
    auto it = entries_.find(morpheme);
    return it == entries_.end() ? nullptr : &it->second;
}

std::optional<std::string> GlossLexicon::most_frequent(const std::string& morpheme) const {
    const Counts* counts = counts_for(morpheme);
    if (!counts) return std::nullopt;
    const std::string* best = nullptr;
    long best_count = -1;
    for (const auto& [gloss, count] : *counts) {
        // map iteration is lexicographic, so '>' keeps the smallest on ties
        if (count > best_count) {
            best = &gloss;
            best_count = count;
        }
    }
    return *best;
}

const std::string& GlossLexicon::global_mode() const {
    static const std::string empty;
    const std::string* best = &empty;
    long best_count = -1;
    for (const auto& [gloss, count] : global_) {
        if (count > best_count) {
            best = &gloss;
            best_count = count;
        }
    }
    return *best;
}

nlohmann::json GlossLexicon::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [morpheme, counts] : entries_) {
        nlohmann::json c = nlohmann::json::object();
        for (const auto& [gloss, count] : counts) c[gloss] = count;
        j[morpheme] = std::move(c);
    }
    return j;
}

GlossLexicon fit_lexicon(const std::vector<IgtSentence>& train) {
    if (train.empty()) throw empty_corpus("fit_lexicon requires a non-empty training split");
    GlossLexicon lex;
    for (const auto& s : train)
        for (size_t w = 0; w < s.words.size(); ++w)
            for (size_t m = 0; m < s.words[w].size(); ++m)
                lex.observe(s.words[w][m], s.glosses[w][m]);
    return lex;
}

namespace {

Prediction make_structural_prediction(const IgtSentence& s) {
    Prediction p;
    const int total = s.morpheme_count() + static_cast<int>(s.words.size()) - 1;
    p.pred_ids.reserve(static_cast<size_t>(total));
    p.dist.reserve(static_cast<size_t>(total));
    p.oov_mask.reserve(static_cast<size_t>(total));
    p.replaced.assign(static_cast<size_t>(total), false);
    return p;
}

void push_sep(Prediction& p, int label_vocab) {
    p.pred_ids.push_back(Vocabulary::kSepLabel);
    std::vector<float> dist(static_cast<size_t>(label_vocab), 0.0f);
    dist[Vocabulary::kSepLabel] = 1.0f;
    p.dist.push_back(std::move(dist));
    p.oov_mask.push_back(false);
}

void finalize_confidence(Prediction& p) {
    double conf = 0.0;
    for (const auto& dist : p.dist) conf += *std::max_element(dist.begin(), dist.end());
    p.confidence = p.dist.empty() ? 0.0 : conf / double(p.dist.size());
}

std::vector<float> count_distribution(const GlossLexicon::Counts& counts, const Vocabulary& v) {
    std::vector<float> dist(static_cast<size_t>(v.gloss_count()), 0.0f);
    double total = 0.0;
    for (const auto& [gloss, count] : counts) total += double(count);
    for (const auto& [gloss, count] : counts) {
        const int id = v.gloss_id(gloss);
        if (id < v.gloss_count()) dist[static_cast<size_t>(id)] += float(double(count) / total);
    }
    return dist;
}

} // namespace

Prediction predict_most_frequent(const GlossLexicon& lex, const IgtSentence& s,
                                 const Vocabulary& vocab) {
    Prediction p = make_structural_prediction(s);
    for (size_t w = 0; w < s.words.size(); ++w) {
        if (w > 0) push_sep(p, vocab.gloss_count());
        for (const auto& m : s.words[w]) {
            const GlossLexicon::Counts* counts = lex.counts_for(m);
            const bool oov = counts == nullptr;
            const std::string gloss = oov ? lex.global_mode() : *lex.most_frequent(m);
            p.pred_ids.push_back(vocab.gloss_id(gloss));
            p.dist.push_back(count_distribution(oov ? lex.global_counts() : *counts, vocab));
            p.oov_mask.push_back(oov);
        }
    }
    finalize_confidence(p);
    return p;
}

Prediction predict_random(const GlossLexicon& lex, const IgtSentence& s,
                          const Vocabulary& vocab, Rng& rng, bool proportional) {
    Prediction p = make_structural_prediction(s);
    for (size_t w = 0; w < s.words.size(); ++w) {
        if (w > 0) push_sep(p, vocab.gloss_count());
        for (const auto& m : s.words[w]) {
            const GlossLexicon::Counts* counts = lex.counts_for(m);
            if (counts) {
                double total = 0.0;
                for (const auto& [gloss, count] : *counts)
                    total += proportional ? double(count) : 1.0;
                double x = rng.uniform() * total;
                const std::string* chosen = nullptr;
                std::vector<float> dist(static_cast<size_t>(vocab.gloss_count()), 0.0f);
                for (const auto& [gloss, count] : *counts) {
                    const double wgt = proportional ? double(count) : 1.0;
                    const int id = vocab.gloss_id(gloss);
                    if (id < vocab.gloss_count())
                        dist[static_cast<size_t>(id)] += float(wgt / total);
                    if (!chosen) {
                        x -= wgt;
                        if (x < 0.0) chosen = &gloss;
                    }
                }
                if (!chosen) chosen = &counts->rbegin()->first;
                p.pred_ids.push_back(vocab.gloss_id(*chosen));
                p.dist.push_back(std::move(dist));
                p.oov_mask.push_back(false);
            } else {
                // uniform over the real gloss labels (SEP excluded)
                const int n_real = vocab.gloss_count() - 1;
                const int pick = Vocabulary::kFirstGloss +
                                 static_cast<int>(rng.uniform_int(
                                     static_cast<std::uint64_t>(std::max(n_real, 1))));
                std::vector<float> dist(static_cast<size_t>(vocab.gloss_count()),
                                        n_real > 0 ? 1.0f / float(n_real) : 0.0f);
                dist[Vocabulary::kSepLabel] = 0.0f;
                p.pred_ids.push_back(pick);
                p.dist.push_back(std::move(dist));
                p.oov_mask.push_back(true);
            }
        }
    }
    finalize_confidence(p);
    return p;
}

std::vector<Prediction> predict_most_frequent_corpus(const GlossLexicon& lex,
                                                     const std::vector<IgtSentence>& corpus,
                                                     const Vocabulary& vocab) {
    std::vector<Prediction> out;
    out.reserve(corpus.size());
    for (const auto& s : corpus) out.push_back(predict_most_frequent(lex, s, vocab));
    return out;
}

std::vector<Prediction> predict_random_corpus(const GlossLexicon& lex,
                                              const std::vector<IgtSentence>& corpus,
                                              const Vocabulary& vocab, std::uint64_t seed,
                                              bool proportional) {
    Rng rng(seed);
    std::vector<Prediction> out;
    out.reserve(corpus.size());
    for (const auto& s : corpus)
        out.push_back(predict_random(lex, s, vocab, rng, proportional));
    return out;
}

} // namespace glosskit
