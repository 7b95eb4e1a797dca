#include "glosskit/trainer.hpp"

#include <chrono>
#include <cmath>

namespace glosskit {

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

template <typename T>
AdamW<T>::AdamW(std::vector<NamedParam<T>> params, const TrainConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
    cfg_.validate();
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& np : params_) {
        m_.emplace_back(np.tensor->value.size(), T(0));
        v_.emplace_back(np.tensor->value.size(), T(0));
    }
}

template <typename T>
void AdamW<T>::step(double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = *params_[pi].tensor;
        if (p.grad.size() != p.value.size())
            throw shape_mismatch("missing gradient for parameter '" + params_[pi].name + "'");
        const double wd = params_[pi].decay ? cfg_.weight_decay : 0.0;
        T* theta = p.value.data();
        const T* g = p.grad.data();
        T* m = m_[pi].data();
        T* v = v_[pi].data();
        const long n = p.size();
        for (long i = 0; i < n; ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = cfg_.beta1 * static_cast<double>(m[i]) + (1.0 - cfg_.beta1) * gi;
            const double vi =
                cfg_.beta2 * static_cast<double>(v[i]) + (1.0 - cfg_.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            const double update =
                mhat / (std::sqrt(vhat) + cfg_.epsilon) + wd * static_cast<double>(theta[i]);
            theta[i] = static_cast<T>(static_cast<double>(theta[i]) - lr * update);
        }
    }
}

template <typename T>
void AdamW<T>::zero_grads() {
    for (auto& np : params_) {
        np.tensor->ensure_grad();
        np.tensor->zero_grad();
    }
}

template class AdamW<float>;
template class AdamW<double>;

double lr_at_step(long step, long total_steps, double base_lr, double warmup_frac) {
    if (total_steps <= 0) return base_lr;
    const long warmup = std::max<long>(1, std::lround(warmup_frac * double(total_steps)));
    if (step < warmup) return base_lr * double(step + 1) / double(warmup);
    if (total_steps <= warmup) return base_lr;
    return base_lr * double(total_steps - step) / double(total_steps - warmup);
}

// ---------------------------------------------------------------------------
// Dynamic masking
// ---------------------------------------------------------------------------

MaskedSentence apply_dynamic_masking(const std::vector<int>& input_ids,
                                     const MaskingPolicy& policy, Rng& rng,
                                     int input_vocab_size) {
    MaskedSentence out;
    out.input_ids = input_ids;
    out.targets.assign(input_ids.size(), kIgnoreIndex);
    const int n_regular = input_vocab_size - Vocabulary::kFirstMorpheme;
    for (size_t i = 0; i < input_ids.size(); ++i) {
        const int id = input_ids[i];
        if (id == Vocabulary::kPad || id == Vocabulary::kSep) continue;
        if (rng.uniform() >= policy.mask_prob) continue;
        out.targets[i] = id;
        const double u = rng.uniform();
        if (u < policy.replace_mask) {
            out.input_ids[i] = Vocabulary::kMask;
        } else if (u < policy.replace_mask + policy.replace_random && n_regular > 0) {
            out.input_ids[i] = Vocabulary::kFirstMorpheme +
                               static_cast<int>(rng.uniform_int(
                                   static_cast<std::uint64_t>(n_regular)));
        } // else keep the original token
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shared training loop
// ---------------------------------------------------------------------------

namespace {

struct FlatBatch {
    TokenBatch tokens;
    std::vector<int> targets; // kIgnoreIndex at PAD and unsupervised positions
};

// Pads a micro-batch and aligns targets with the padded layout.
FlatBatch flatten(const std::vector<std::vector<int>>& ids,
                  const std::vector<std::vector<int>>& targets) {
    FlatBatch fb;
    std::vector<const std::vector<int>*> seqs;
    seqs.reserve(ids.size());
    for (const auto& s : ids) seqs.push_back(&s);
    fb.tokens = make_token_batch(seqs);
    fb.targets.assign(fb.tokens.ids.size(), kIgnoreIndex);
    for (size_t i = 0; i < targets.size(); ++i)
        for (size_t t = 0; t < targets[i].size(); ++t)
            fb.targets[i * static_cast<size_t>(fb.tokens.seq) + t] = targets[i][t];
    return fb;
}

template <typename V>
void shuffle_order(V& order, Rng& rng) {
    for (size_t i = order.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng.uniform_int(i));
        std::swap(order[i - 1], order[j]);
    }
}

enum class Objective { MaskedLm, Classification };

// One pass over the corpus per epoch: micro-batches of cfg.batch_size, an
// optimizer step every cfg.grad_accum_steps micro-batches with gradients
// normalized by the tokens accumulated since the last step.
EncoderParamsF run_training(EncoderParamsF params, const std::vector<EncodedSentence>& corpus,
                            const TrainConfig& cfg, const MaskingPolicy* policy,
                            Objective objective, const LogSink& log) {
    cfg.validate();
    if (corpus.empty()) throw empty_corpus("training corpus is empty");
    const auto group = objective == Objective::MaskedLm
                           ? params.mlm_training_parameters()
                           : params.classifier_training_parameters();
    AdamW<float> opt(group, cfg);
    const auto all = params.all_tensors();
    zero_grads(all);

    Rng rng(cfg.seed ^ 0x7261696e6c6f6f70ull);
    const long micro_per_epoch =
        (static_cast<long>(corpus.size()) + cfg.batch_size - 1) / cfg.batch_size;
    const long steps_per_epoch =
        (micro_per_epoch + cfg.grad_accum_steps - 1) / cfg.grad_accum_steps;
    const long total_steps = steps_per_epoch * cfg.epochs;

    std::vector<size_t> order(corpus.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<long> micro_order(static_cast<size_t>(micro_per_epoch));
    for (size_t i = 0; i < micro_order.size(); ++i) micro_order[i] = static_cast<long>(i);

    long step_idx = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        shuffle_order(order, rng);
        // bucket by length to keep padding small: shuffled order is preserved
        // within each length, and the micro-batch order is shuffled again
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            return corpus[a].length() < corpus[b].length();
        });
        shuffle_order(micro_order, rng);
        double epoch_loss = 0.0;
        long epoch_tokens = 0, epoch_correct = 0;
        long pending_micro = 0, accum_tokens = 0;
        double last_lr = 0.0;

        for (long mi = 0; mi < micro_per_epoch; ++mi) {
            const long mb = micro_order[static_cast<size_t>(mi)];
            const size_t begin = static_cast<size_t>(mb) * cfg.batch_size;
            const size_t end = std::min(corpus.size(), begin + cfg.batch_size);
            std::vector<std::vector<int>> ids, targets;
            ids.reserve(end - begin);
            targets.reserve(end - begin);
            for (size_t i = begin; i < end; ++i) {
                const auto& enc = corpus[order[i]];
                if (objective == Objective::MaskedLm) {
                    auto masked = apply_dynamic_masking(enc.input_ids, *policy, rng,
                                                        params.cfg.input_vocab_size);
                    ids.push_back(std::move(masked.input_ids));
                    targets.push_back(std::move(masked.targets));
                } else {
                    ids.push_back(enc.input_ids);
                    std::vector<int> t = enc.label_ids;
                    for (auto& x : t)
                        if (x >= params.cfg.label_vocab_size) x = kIgnoreIndex;
                    targets.push_back(std::move(t));
                }
            }
            FlatBatch fb = flatten(ids, targets);
            const long batch_tokens = count_non_ignored(fb.targets, kIgnoreIndex);

            Graph<float> g;
            auto hidden = encoder_forward(g, params, fb.tokens, params.cfg.dropout, &rng);
            auto logits = objective == Objective::MaskedLm
                              ? mlm_logits(g, params, hidden)
                              : classify_logits(g, params, hidden);
            auto loss = g.cross_entropy(logits, fb.targets, kIgnoreIndex, Reduction::Sum);
            g.backward(loss);

            epoch_loss += loss->value[0];
            epoch_tokens += batch_tokens;
            accum_tokens += batch_tokens;
            if (objective == Objective::Classification) {
                const int v = params.cfg.label_vocab_size;
                for (size_t row = 0; row < fb.targets.size(); ++row) {
                    if (fb.targets[row] == kIgnoreIndex) continue;
                    const float* lgts = logits->value.data() + row * static_cast<size_t>(v);
                    int best = 0;
                    for (int c = 1; c < v; ++c)
                        if (lgts[c] > lgts[best]) best = c;
                    if (best == fb.targets[row]) ++epoch_correct;
                }
            }

            ++pending_micro;
            if (pending_micro == cfg.grad_accum_steps || mi == micro_per_epoch - 1) {
                if (accum_tokens > 0) {
                    const float inv = 1.0f / static_cast<float>(accum_tokens);
                    for (const auto& t : all)
                        if (!t->grad.empty())
                            for (auto& gval : t->grad) gval *= inv;
                    last_lr = lr_at_step(step_idx, total_steps, cfg.learning_rate,
                                         cfg.warmup_frac);
                    opt.step(last_lr);
                }
                zero_grads(all);
                ++step_idx;
                pending_micro = 0;
                accum_tokens = 0;
            }
        }

        if (log) {
            EpochLog el;
            el.epoch = epoch;
            el.split = "train";
            el.loss = epoch_tokens > 0 ? epoch_loss / double(epoch_tokens) : 0.0;
            if (objective == Objective::Classification && epoch_tokens > 0)
                el.accuracy = double(epoch_correct) / double(epoch_tokens);
            el.lr = last_lr;
            el.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                       epoch_start)
                             .count();
            log(el);
        }
    }
    return params;
}

} // namespace

EncoderParamsF pretrain_mlm(const std::vector<EncodedSentence>& corpus, const TrainConfig& cfg,
                            const MaskingPolicy& policy, const EncoderConfig& enc_cfg,
                            const LogSink& log) {
    policy.validate();
    enc_cfg.validate();
    auto params = init_params<float>(enc_cfg, cfg.seed);
    return run_training(std::move(params), corpus, cfg, &policy, Objective::MaskedLm, log);
}

EncoderParamsF train_classifier(EncoderParamsF params, const std::vector<EncodedSentence>& train,
                                const TrainConfig& cfg, const LogSink& log) {
    // deep copy: the caller's parameters are a snapshot, never trained through
    return run_training(clone_params(params), train, cfg, nullptr, Objective::Classification,
                        log);
}

std::vector<Prediction> predict(const EncoderParamsF& params,
                                const std::vector<EncodedSentence>& sentences, int batch_size) {
    std::vector<Prediction> out;
    out.reserve(sentences.size());
    const int v = params.cfg.label_vocab_size;
    for (size_t begin = 0; begin < sentences.size(); begin += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(sentences.size(), begin + static_cast<size_t>(batch_size));
        std::vector<const std::vector<int>*> seqs;
        for (size_t i = begin; i < end; ++i) seqs.push_back(&sentences[i].input_ids);
        TokenBatch batch = make_token_batch(seqs);
        Graph<float> g(false);
        auto hidden = encoder_forward(g, params, batch);
        auto probs = g.softmax(classify_logits(g, params, hidden));
        for (size_t i = begin; i < end; ++i) {
            const auto& enc = sentences[i];
            Prediction p;
            p.oov_mask = enc.oov_mask;
            p.replaced.assign(enc.oov_mask.size(), false);
            const int len = enc.length();
            p.pred_ids.resize(static_cast<size_t>(len));
            p.dist.resize(static_cast<size_t>(len));
            double conf = 0.0;
            for (int t = 0; t < len; ++t) {
                const float* row = probs->value.data() +
                                   (((i - begin) * static_cast<size_t>(batch.seq)) + t) *
                                       static_cast<size_t>(v);
                auto& dist = p.dist[static_cast<size_t>(t)];
                dist.assign(row, row + v);
                int best = 0;
                for (int c = 1; c < v; ++c)
                    if (dist[c] > dist[best]) best = c;
                p.pred_ids[static_cast<size_t>(t)] = best;
                conf += dist[best];
            }
            p.confidence = len > 0 ? conf / len : 0.0;
            out.push_back(std::move(p));
        }
    }
    return out;
}

double perplexity(const EncoderParamsF& params, const std::vector<EncodedSentence>& corpus,
                  const MaskingPolicy& policy, std::uint64_t seed) {
    if (corpus.empty()) throw empty_corpus("perplexity needs a non-empty corpus");
    policy.validate();
    Rng rng(seed);
    double total = 0.0;
    long count = 0;
    const int batch_size = 64;
    for (size_t begin = 0; begin < corpus.size(); begin += batch_size) {
        const size_t end = std::min(corpus.size(), begin + batch_size);
        std::vector<std::vector<int>> ids, targets;
        for (size_t i = begin; i < end; ++i) {
            auto masked = apply_dynamic_masking(corpus[i].input_ids, policy, rng,
                                                params.cfg.input_vocab_size);
            ids.push_back(std::move(masked.input_ids));
            targets.push_back(std::move(masked.targets));
        }
        std::vector<const std::vector<int>*> seqs;
        for (const auto& s : ids) seqs.push_back(&s);
        TokenBatch batch = make_token_batch(seqs);
        std::vector<int> flat(batch.ids.size(), kIgnoreIndex);
        for (size_t i = 0; i < targets.size(); ++i)
            for (size_t t = 0; t < targets[i].size(); ++t)
                flat[i * static_cast<size_t>(batch.seq) + t] = targets[i][t];

        Graph<float> g(false);
        auto hidden = encoder_forward(g, params, batch);
        auto logits = mlm_logits(g, params, hidden);
        auto loss = g.cross_entropy(logits, flat, kIgnoreIndex, Reduction::Sum);
        total += loss->value[0];
        count += count_non_ignored(flat, kIgnoreIndex);
    }
    if (count == 0) throw empty_corpus("masking selected no positions");
    return std::exp(total / double(count));
}

} // namespace glosskit
