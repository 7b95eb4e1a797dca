#pragma once

#include <functional>

#include "glosskit/encoder.hpp"
#include "glosskit/trainer.hpp"

namespace glosskit {

// A second MLM over gloss-label sequences. At inference it repairs the
// classifier's predictions at out-of-vocabulary input positions, either
// feeding the predicted labels through unchanged (Unmasked) or substituting
// MASK at the target positions first (Masked).
enum class DenoiseMode { Unmasked, Masked };

DenoiseMode denoise_mode_from_string(const std::string& s); // "masked" / "unmasked"
std::string denoise_mode_to_string(DenoiseMode mode);

// Denoiser input ids: the usual four specials, then the real gloss labels.
// Label SEP maps to the input-side SEP token.
inline int denoiser_input_vocab_size(int label_vocab_size) {
    return label_vocab_size - 1 + Vocabulary::kFirstMorpheme;
}
int label_to_denoiser_id(int label_id, int label_vocab_size);
int denoiser_id_to_label(int denoiser_id);

// Training defaults: the shared recipe except weight decay 0.01 and
// 100 epochs.
TrainConfig denoiser_train_defaults();

// Trains the gloss-sequence MLM on the training split's label sequences
// (SEP included). The encoder geometry is shared with the main model.
EncoderParamsF train_denoiser(const std::vector<EncodedSentence>& train,
                              const TrainConfig& cfg, EncoderConfig geometry,
                              const LogSink& log = {});

// Distribution source for the replacement step: maps one denoiser input
// sequence to per-position probabilities over the denoiser vocabulary.
// The production implementation runs the denoiser MLM; tests may inject
// an identity function.
using DenoiserForward =
    std::function<std::vector<std::vector<float>>(const std::vector<int>&)>;

// Core replacement rule, factored out so its invariants are testable without
// a trained model: sentences with no OOV positions pass through untouched;
// at OOV positions the prediction and its distribution are replaced by the
// denoiser's (restricted to real gloss labels) and flagged as replaced.
std::vector<Prediction> apply_denoiser(const std::vector<Prediction>& preds,
                                       const std::vector<EncodedSentence>& encoded,
                                       DenoiseMode mode, int label_vocab_size,
                                       const DenoiserForward& forward);

std::vector<Prediction> denoise_predictions(const std::vector<Prediction>& preds,
                                            const std::vector<EncodedSentence>& encoded,
                                            DenoiseMode mode, const EncoderParamsF& denoiser,
                                            int label_vocab_size);

} // namespace glosskit
