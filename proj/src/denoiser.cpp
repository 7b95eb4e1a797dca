#include "glosskit/denoiser.hpp"

namespace glosskit {

DenoiseMode denoise_mode_from_string(const std::string& s) {
    if (s == "masked") return DenoiseMode::Masked;
    if (s == "unmasked") return DenoiseMode::Unmasked;
    throw config_error("unknown denoise mode '" + s + "' (expected masked or unmasked)");
}

std::string denoise_mode_to_string(DenoiseMode mode) {
    return mode == DenoiseMode::Masked ? "masked" : "unmasked";
}

int label_to_denoiser_id(int label_id, int label_vocab_size) {
    if (label_id == Vocabulary::kSepLabel) return Vocabulary::kSep;
    if (label_id >= Vocabulary::kFirstGloss && label_id < label_vocab_size)
        return Vocabulary::kFirstMorpheme + (label_id - Vocabulary::kFirstGloss);
    return Vocabulary::kUnk; // unseen-label sentinel and anything else
}

int denoiser_id_to_label(int denoiser_id) {
    if (denoiser_id == Vocabulary::kSep) return Vocabulary::kSepLabel;
    if (denoiser_id >= Vocabulary::kFirstMorpheme)
        return Vocabulary::kFirstGloss + (denoiser_id - Vocabulary::kFirstMorpheme);
    return kIgnoreIndex;
}

TrainConfig denoiser_train_defaults() {
    TrainConfig cfg;
    cfg.weight_decay = 0.01;
    cfg.epochs = 100;
    return cfg;
}

EncoderParamsF train_denoiser(const std::vector<EncodedSentence>& train, const TrainConfig& cfg,
                              EncoderConfig geometry, const LogSink& log) {
    if (train.empty()) throw empty_corpus("denoiser training corpus is empty");
    int label_vocab = 0;
    for (const auto& e : train)
        for (int id : e.label_ids) label_vocab = std::max(label_vocab, id + 1);
    // the label vocabulary is defined by the encoding, not the sample
    if (geometry.label_vocab_size > 0) label_vocab = geometry.label_vocab_size;

    std::vector<EncodedSentence> gloss_corpus;
    gloss_corpus.reserve(train.size());
    for (const auto& e : train) {
        EncodedSentence g;
        g.input_ids.reserve(e.label_ids.size());
        for (int id : e.label_ids) g.input_ids.push_back(label_to_denoiser_id(id, label_vocab));
        g.label_ids.assign(e.label_ids.size(), 0);
        g.oov_mask.assign(e.label_ids.size(), false);
        gloss_corpus.push_back(std::move(g));
    }

    geometry.input_vocab_size = denoiser_input_vocab_size(label_vocab);
    geometry.label_vocab_size = label_vocab;
    MaskingPolicy policy;
    return pretrain_mlm(gloss_corpus, cfg, policy, geometry, log);
}

std::vector<Prediction> apply_denoiser(const std::vector<Prediction>& preds,
                                       const std::vector<EncodedSentence>& encoded,
                                       DenoiseMode mode, int label_vocab_size,
                                       const DenoiserForward& forward) {
    if (preds.size() != encoded.size())
        throw length_mismatch("predictions for " + std::to_string(preds.size()) +
                              " sentences vs " + std::to_string(encoded.size()) + " encodings");
    std::vector<Prediction> out = preds;
    const int dvocab = denoiser_input_vocab_size(label_vocab_size);
    for (size_t i = 0; i < out.size(); ++i) {
        Prediction& p = out[i];
        const EncodedSentence& e = encoded[i];
        if (p.pred_ids.size() != e.oov_mask.size())
            throw length_mismatch("sentence " + std::to_string(i) + " prediction length " +
                                  std::to_string(p.pred_ids.size()) + " vs encoding length " +
                                  std::to_string(e.oov_mask.size()));
        bool any_oov = false;
        for (bool b : e.oov_mask) any_oov = any_oov || b;
        if (!any_oov) continue; // only sentences with unknown morphemes are processed

        std::vector<int> input(p.pred_ids.size());
        for (size_t t = 0; t < p.pred_ids.size(); ++t) {
            // SEP positions are structural; feed the separator itself
            if (e.input_ids[t] == Vocabulary::kSep) input[t] = Vocabulary::kSep;
            else input[t] = label_to_denoiser_id(p.pred_ids[t], label_vocab_size);
            if (mode == DenoiseMode::Masked && e.oov_mask[t]) input[t] = Vocabulary::kMask;
        }

        const auto dists = forward(input);
        if (dists.size() != input.size())
            throw length_mismatch("denoiser returned " + std::to_string(dists.size()) +
                                  " rows for " + std::to_string(input.size()) + " positions");
        for (size_t t = 0; t < p.pred_ids.size(); ++t) {
            if (!e.oov_mask[t]) continue;
            const auto& row = dists[t];
            if (static_cast<int>(row.size()) != dvocab)
                throw vocab_mismatch("denoiser row width " + std::to_string(row.size()) +
                                     " vs expected " + std::to_string(dvocab));
            // restrict to real gloss labels and renormalize
            std::vector<float> dist(static_cast<size_t>(label_vocab_size), 0.0f);
            double mass = 0.0;
            for (int d = Vocabulary::kFirstMorpheme; d < dvocab; ++d)
                mass += static_cast<double>(row[static_cast<size_t>(d)]);
            int best_label = Vocabulary::kFirstGloss;
            float best_p = -1.0f;
            for (int d = Vocabulary::kFirstMorpheme; d < dvocab; ++d) {
                const int label = denoiser_id_to_label(d);
                const float prob =
                    mass > 0.0 ? static_cast<float>(row[static_cast<size_t>(d)] / mass) : 0.0f;
                dist[static_cast<size_t>(label)] = prob;
                if (prob > best_p) {
                    best_p = prob;
                    best_label = label;
                }
            }
            p.pred_ids[t] = best_label;
            p.dist[t] = std::move(dist);
            p.replaced[t] = true;
        }
        // confidence is the mean-max statistic of the (possibly replaced) rows
        double conf = 0.0;
        for (const auto& dist : p.dist) conf += *std::max_element(dist.begin(), dist.end());
        p.confidence = p.dist.empty() ? 0.0 : conf / double(p.dist.size());
    }
    return out;
}

std::vector<Prediction> denoise_predictions(const std::vector<Prediction>& preds,
                                            const std::vector<EncodedSentence>& encoded,
                                            DenoiseMode mode, const EncoderParamsF& denoiser,
                                            int label_vocab_size) {
    const int expected = denoiser_input_vocab_size(label_vocab_size);
    if (denoiser.cfg.input_vocab_size != expected)
        throw vocab_mismatch("denoiser was trained over " +
                             std::to_string(denoiser.cfg.input_vocab_size) +
                             " input ids but the gloss vocabulary needs " +
                             std::to_string(expected));
    DenoiserForward forward = [&denoiser](const std::vector<int>& input) {
        TokenBatch batch = make_token_batch({&input});
        Graph<float> g(false);
        auto hidden = encoder_forward(g, denoiser, batch);
        auto probs = g.softmax(mlm_logits(g, denoiser, hidden));
        std::vector<std::vector<float>> rows(input.size());
        const int v = denoiser.cfg.input_vocab_size;
        for (size_t t = 0; t < input.size(); ++t) {
            const float* row = probs->value.data() + t * static_cast<size_t>(v);
            rows[t].assign(row, row + v);
        }
        return rows;
    };
    return apply_denoiser(preds, encoded, mode, label_vocab_size, forward);
}

} // namespace glosskit
