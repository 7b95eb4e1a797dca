#pragma once

#include <functional>
#include <optional>

#include "glosskit/denoiser.hpp"
#include "glosskit/metrics.hpp"
#include "glosskit/trainer.hpp"

namespace glosskit {

// Confidence-ranked iterative pseudo-labeling over an unlabeled pool:
// predict, keep the most confident fraction as if gold, retrain, repeat
// while the OOD eval accuracy keeps improving.
struct PseudoLabelConfig {
    double fraction = 0.25; // of pool sentences kept per iteration
    int max_iterations = 3;
    int epochs = 10;          // continued-training budget per iteration
    bool reinitialize = false; // restart each iteration from the base model
    bool include_sep_in_confidence = true;

    void validate() const {
        if (fraction <= 0.0 || fraction > 1.0)
            throw config_error("pseudo-label fraction must lie in (0, 1]");
        if (max_iterations < 1) throw config_error("max_iterations must be >= 1");
        if (epochs < 1) throw config_error("pseudo-label epochs must be >= 1");
    }
};

// Mean over positions of the probability of the most likely gloss. SEP
// positions are included by default; `encoded` is only needed to exclude
// them.
double sentence_confidence(const Prediction& pred, bool include_sep = true,
                           const EncodedSentence* encoded = nullptr);

// Indices of the ceil(fraction * N) most confident predictions, in original
// corpus order. Ties keep earlier sentences (stable ranking).
std::vector<size_t> select_top_fraction(const std::vector<double>& confidences,
                                        double fraction);

struct IterationReport {
    int iteration = 0;
    long selected_count = 0;
    double mean_confidence = 0.0;
    double acc_eval_id = 0.0;
    double acc_eval_ood = 0.0;
};

// Early-stopping driver, generic so the stopping rule is testable against
// scripted accuracy sequences: runs up to max_iterations retrains, evaluates
// after each, and returns the previous model as soon as the OOD accuracy
// drops. `retrain` fills the per-iteration report fields it knows about.
template <typename Model>
std::pair<Model, std::vector<IterationReport>> run_iterations(
    Model initial, int max_iterations,
    const std::function<Model(const Model&, int, IterationReport&)>& retrain,
    const std::function<double(const Model&)>& eval_ood) {
    std::vector<IterationReport> reports;
    IterationReport base;
    base.iteration = 0;
    base.acc_eval_ood = eval_ood(initial);
    reports.push_back(base);

    Model prev = std::move(initial);
    double prev_acc = base.acc_eval_ood;
    for (int it = 1; it <= max_iterations; ++it) {
        IterationReport report;
        report.iteration = it;
        Model cur = retrain(prev, it, report);
        report.acc_eval_ood = eval_ood(cur);
        reports.push_back(report);
        if (report.acc_eval_ood < prev_acc) return {std::move(prev), std::move(reports)};
        prev = std::move(cur);
        prev_acc = report.acc_eval_ood;
    }
    return {std::move(prev), std::move(reports)};
}

// One concrete iteration: predict the pool with the current model (denoised
// when a denoiser is supplied), select, and continue training on the union
// of the original training set and the pseudo-labeled selection.
struct PseudoLabelStep {
    EncoderParamsF model;
    long selected_count = 0;
    double mean_confidence = 0.0;
};

PseudoLabelStep pseudo_label_iteration(const EncoderParamsF& current,
                                       const std::vector<EncodedSentence>& train,
                                       const std::vector<EncodedSentence>& pool,
                                       const PseudoLabelConfig& plc, TrainConfig tc,
                                       const EncoderParamsF* denoiser, DenoiseMode mode,
                                       const EncoderParamsF* reinit_base = nullptr);

// Full loop with per-iteration evaluation on the two eval splits.
std::pair<EncoderParamsF, std::vector<IterationReport>> run_pseudo_labeling(
    EncoderParamsF model, const std::vector<EncodedSentence>& train,
    const std::vector<EncodedSentence>& pool, const std::vector<EncodedSentence>& eval_id,
    const std::vector<EncodedSentence>& eval_ood, const PseudoLabelConfig& plc,
    const TrainConfig& tc, const EncoderParamsF* denoiser, DenoiseMode mode);

} // namespace glosskit
