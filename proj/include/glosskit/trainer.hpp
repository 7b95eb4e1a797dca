#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "glosskit/encoder.hpp"
#include "glosskit/igt.hpp"

namespace glosskit {

// Optimization settings. Defaults follow the training recipe: AdamW with
// beta 0.9/0.999, epsilon 1e-8, batch 64, gradient accumulation 3, 50 epochs.
// The learning rate and its warmup/decay schedule are this toolkit's own
// defaults and are always reported in the training log.
struct TrainConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
    double learning_rate = 3e-4;
    double warmup_frac = 0.1;
    int batch_size = 64;
    int grad_accum_steps = 3;
    int epochs = 50;
    std::uint64_t seed = 0;

    void validate() const {
        if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
            throw config_error("betas must lie in (0, 1)");
        if (epsilon <= 0.0) throw config_error("epsilon must be positive");
        if (weight_decay < 0.0) throw config_error("weight decay must be non-negative");
        if (learning_rate <= 0.0) throw config_error("learning rate must be positive");
        if (warmup_frac < 0.0 || warmup_frac >= 1.0)
            throw config_error("warmup fraction must lie in [0, 1)");
        if (batch_size < 1 || grad_accum_steps < 1 || epochs < 1)
            throw config_error("batch size, accumulation steps and epochs must be >= 1");
    }
};

// 15% of maskable tokens are selected; of those 80% become MASK, 10% a random
// non-special token, 10% stay unchanged. PAD and SEP are never selected.
struct MaskingPolicy {
    double mask_prob = 0.15;
    double replace_mask = 0.80;
    double replace_random = 0.10;
    double keep_original = 0.10;

    void validate() const {
        for (double p : {mask_prob, replace_mask, replace_random, keep_original})
            if (p < 0.0 || p > 1.0) throw config_error("masking probabilities must be in [0, 1]");
        const double s = replace_mask + replace_random + keep_original;
        if (std::abs(s - 1.0) > 1e-9)
            throw config_error("replacement fractions must sum to 1, got " + std::to_string(s));
    }
};

// AdamW with decoupled weight decay: decay applies to matrices (decay-flagged
// parameters) only, never to biases or layer-norm parameters. One step()
// per effective batch, after grad_accum_steps micro-batches.
template <typename T>
class AdamW {
  public:
    AdamW(std::vector<NamedParam<T>> params, const TrainConfig& cfg);

    void step(double lr);
    long step_count() const { return step_; }
    void zero_grads();

  private:
    std::vector<NamedParam<T>> params_;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
    TrainConfig cfg_;
    long step_ = 0;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

// Linear warmup over the first warmup_frac of steps, then linear decay to 0.
double lr_at_step(long step, long total_steps, double base_lr, double warmup_frac);

struct MaskedSentence {
    std::vector<int> input_ids; // corrupted
    std::vector<int> targets;   // original ids at selected positions, else kIgnoreIndex
};

MaskedSentence apply_dynamic_masking(const std::vector<int>& input_ids,
                                     const MaskingPolicy& policy, Rng& rng,
                                     int input_vocab_size);

struct EpochLog {
    int epoch = 0;
    std::string split;
    double loss = 0.0;
    std::optional<double> accuracy;
    double lr = 0.0;
    double seconds = 0.0;
};
using LogSink = std::function<void(const EpochLog&)>;

// Masked-language-model pretraining from fresh initialization.
EncoderParamsF pretrain_mlm(const std::vector<EncodedSentence>& corpus, const TrainConfig& cfg,
                            const MaskingPolicy& policy, const EncoderConfig& enc_cfg,
                            const LogSink& log = {});

// Token-classification training starting from the given parameters (used for
// fine-tuning a pretrained checkpoint and for continued training during
// pseudo-labeling). SEP positions carry the SEP label and are trained; PAD
// and unseen-label positions are ignored by the loss.
EncoderParamsF train_classifier(EncoderParamsF params, const std::vector<EncodedSentence>& train,
                                const TrainConfig& cfg, const LogSink& log = {});

// Per-morpheme gloss distribution, chosen gloss and flags for one sentence.
struct Prediction {
    std::vector<int> pred_ids;
    std::vector<std::vector<float>> dist; // position x label_vocab
    std::vector<bool> oov_mask;           // copied through from the encoding
    std::vector<bool> replaced;           // true where the denoiser substituted
    double confidence = 0.0;              // mean over positions of max probability
};

std::vector<Prediction> predict(const EncoderParamsF& params,
                                const std::vector<EncodedSentence>& sentences,
                                int batch_size = 64);

// exp(mean cross-entropy over masked positions only), masks drawn per seed.
double perplexity(const EncoderParamsF& params, const std::vector<EncodedSentence>& corpus,
                  const MaskingPolicy& policy, std::uint64_t seed);

} // namespace glosskit
