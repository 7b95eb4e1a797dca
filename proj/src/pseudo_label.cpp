#include "glosskit/pseudo_label.hpp"

#include <algorithm>
#include <numeric>

namespace glosskit {

double sentence_confidence(const Prediction& pred, bool include_sep,
                           const EncodedSentence* encoded) {
    double sum = 0.0;
    long count = 0;
    for (size_t t = 0; t < pred.dist.size(); ++t) {
        if (!include_sep && encoded &&
            encoded->input_ids[t] == Vocabulary::kSep)
            continue;
        sum += *std::max_element(pred.dist[t].begin(), pred.dist[t].end());
        ++count;
    }
    return count > 0 ? sum / double(count) : 0.0;
}

std::vector<size_t> select_top_fraction(const std::vector<double>& confidences,
                                        double fraction) {
    if (confidences.empty()) return {};
    if (fraction <= 0.0 || fraction > 1.0)
        throw config_error("selection fraction must lie in (0, 1]");
    const size_t keep = static_cast<size_t>(
        std::ceil(fraction * static_cast<double>(confidences.size())));
    std::vector<size_t> order(confidences.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return confidences[a] > confidences[b];
    });
    order.resize(std::min(keep, order.size()));
    // corpus order for downstream training
    std::sort(order.begin(), order.end());
    return order;
}

namespace {

std::vector<Prediction> pool_predictions(const EncoderParamsF& model,
                                         const std::vector<EncodedSentence>& pool,
                                         const EncoderParamsF* denoiser, DenoiseMode mode) {
    auto preds = predict(model, pool);
    if (denoiser)
        preds = denoise_predictions(preds, pool, mode, *denoiser,
                                    model.cfg.label_vocab_size);
    return preds;
}

} // namespace

PseudoLabelStep pseudo_label_iteration(const EncoderParamsF& current,
                                       const std::vector<EncodedSentence>& train,
                                       const std::vector<EncodedSentence>& pool,
                                       const PseudoLabelConfig& plc, TrainConfig tc,
                                       const EncoderParamsF* denoiser, DenoiseMode mode,
                                       const EncoderParamsF* reinit_base) {
    plc.validate();
    auto preds = pool_predictions(current, pool, denoiser, mode);
    std::vector<double> confidences(preds.size());
    for (size_t i = 0; i < preds.size(); ++i)
        confidences[i] = sentence_confidence(preds[i], plc.include_sep_in_confidence,
                                             &pool[i]);
    const auto selected = select_top_fraction(confidences, plc.fraction);

    std::vector<EncodedSentence> combined = train;
    double conf_sum = 0.0;
    for (size_t idx : selected) {
        EncodedSentence pseudo = pool[idx];
        pseudo.label_ids = preds[idx].pred_ids; // predicted glosses become gold
        combined.push_back(std::move(pseudo));
        conf_sum += confidences[idx];
    }

    tc.epochs = plc.epochs;
    const EncoderParamsF& start =
        (plc.reinitialize && reinit_base != nullptr) ? *reinit_base : current;

    PseudoLabelStep step;
    step.model = train_classifier(start, combined, tc);
    step.selected_count = static_cast<long>(selected.size());
    step.mean_confidence = selected.empty() ? 0.0 : conf_sum / double(selected.size());
    return step;
}

std::pair<EncoderParamsF, std::vector<IterationReport>> run_pseudo_labeling(
    EncoderParamsF model, const std::vector<EncodedSentence>& train,
    const std::vector<EncodedSentence>& pool, const std::vector<EncodedSentence>& eval_id,
    const std::vector<EncodedSentence>& eval_ood, const PseudoLabelConfig& plc,
    const TrainConfig& tc, const EncoderParamsF* denoiser, DenoiseMode mode) {
    plc.validate();
    const EncoderParamsF base = model; // reinitialization target when enabled

    auto evaluate = [&](const EncoderParamsF& m,
                        const std::vector<EncodedSentence>& split) {
        if (split.empty()) return 0.0;
        auto preds = pool_predictions(m, split, denoiser, mode);
        return morpheme_accuracy(preds, split).accuracy;
    };
    const double initial_eval_id = evaluate(model, eval_id);

    std::function<EncoderParamsF(const EncoderParamsF&, int, IterationReport&)> retrain =
        [&](const EncoderParamsF& cur, int iteration, IterationReport& report) {
            TrainConfig iter_tc = tc;
            // fresh shuffling/masking stream per iteration, still seed-determined
            iter_tc.seed = tc.seed + static_cast<std::uint64_t>(iteration);
            auto step = pseudo_label_iteration(cur, train, pool, plc, iter_tc, denoiser, mode,
                                               &base);
            report.selected_count = step.selected_count;
            report.mean_confidence = step.mean_confidence;
            report.acc_eval_id = evaluate(step.model, eval_id);
            return std::move(step.model);
        };
    std::function<double(const EncoderParamsF&)> eval_fn =
        [&](const EncoderParamsF& m) { return evaluate(m, eval_ood); };

    auto [best, reports] =
        run_iterations<EncoderParamsF>(std::move(model), plc.max_iterations, retrain, eval_fn);
    // the baseline row reports the starting model's ID accuracy too
    if (!reports.empty()) reports[0].acc_eval_id = initial_eval_id;
    return {std::move(best), std::move(reports)};
}

} // namespace glosskit
