#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glosskit/igt.hpp"
#include "glosskit/tensor.hpp"

namespace glosskit {

// Micro transformer encoder: learned absolute position embeddings, post-layer-
// norm residual blocks, exact-erf GELU, and two linear heads (masked-token
// prediction over the input vocabulary, token classification over the label
// vocabulary).
//
// Parameter shape table (H = hidden, F = ffn_dim, P = max_positions,
// V = input_vocab_size, L = label_vocab_size):
//   tok_emb [V x H], pos_emb [P x H], emb_ln.{gain,bias} [H]
//   per layer: wq,wk,wv,wo [H x H]; bq,bk,bv,bo [H]
//              attn_ln.{gain,bias} [H]
//              ffn.w1 [H x F], ffn.b1 [F], ffn.w2 [F x H], ffn.b2 [H]
//              ffn_ln.{gain,bias} [H]
//   mlm_head.w [H x V], mlm_head.b [V]
//   classifier.w [H x L], classifier.b [L]
struct EncoderConfig {
    int n_layers = 3;
    int hidden = 100;
    int n_heads = 5;
    int ffn_dim = 400;
    int max_positions = kMaxSequencePositions;
    int input_vocab_size = 0;
    int label_vocab_size = 0;
    double dropout = 0.1;

    void validate() const {
        if (n_layers < 1 || hidden < 1 || n_heads < 1 || ffn_dim < hidden)
            throw config_error("encoder sizes must be positive with ffn_dim >= hidden");
        if (hidden % n_heads != 0)
            throw config_error("hidden size " + std::to_string(hidden) +
                               " not divisible by " + std::to_string(n_heads) + " heads");
        if (input_vocab_size < Vocabulary::kFirstMorpheme || label_vocab_size < 1)
            throw config_error("vocabulary sizes not set");
        if (dropout < 0.0 || dropout >= 1.0) throw config_error("dropout must be in [0, 1)");
    }
    int head_dim() const { return hidden / n_heads; }
};

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
    bool decay = false; // decoupled weight decay applies to matrices only
};

template <typename T>
struct EncoderLayer {
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<T> attn_ln_gain, attn_ln_bias;
    Tensor<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Tensor<T> ffn_ln_gain, ffn_ln_bias;
};

template <typename T>
struct EncoderParams {
    EncoderConfig cfg;
    Tensor<T> tok_emb, pos_emb;
    Tensor<T> emb_ln_gain, emb_ln_bias;
    std::vector<EncoderLayer<T>> layers;
    Tensor<T> mlm_w, mlm_b;
    Tensor<T> cls_w, cls_b;

    std::vector<NamedParam<T>> named_parameters() const;
    std::vector<Tensor<T>> all_tensors() const;
    // Parameter groups handed to the optimizer: the MLM head only trains
    // during pretraining, the classifier head only during fine-tuning.
    std::vector<NamedParam<T>> mlm_training_parameters() const;
    std::vector<NamedParam<T>> classifier_training_parameters() const;
    long parameter_count() const;
};

template <typename T>
EncoderParams<T> init_params(const EncoderConfig& cfg, std::uint64_t seed);

// A padded batch of id sequences. is_pad marks fill positions; they never act
// as attention keys and are excluded from every loss downstream.
struct TokenBatch {
    std::vector<int> ids;        // batch * seq, row-major
    std::vector<std::uint8_t> is_pad;
    int batch = 0;
    int seq = 0;
};

TokenBatch make_token_batch(const std::vector<const std::vector<int>*>& sequences);

// Hidden states [batch*seq x hidden]. Dropout applies only when
// dropout_p > 0 and rng is non-null (training).
template <typename T>
Tensor<T> encoder_forward(Graph<T>& g, const EncoderParams<T>& p, const TokenBatch& batch,
                          double dropout_p = 0.0, Rng* rng = nullptr);

template <typename T>
Tensor<T> mlm_logits(Graph<T>& g, const EncoderParams<T>& p, const Tensor<T>& hidden) {
    return g.add_rowvec(g.matmul(hidden, p.mlm_w), p.mlm_b);
}

template <typename T>
Tensor<T> classify_logits(Graph<T>& g, const EncoderParams<T>& p, const Tensor<T>& hidden) {
    return g.add_rowvec(g.matmul(hidden, p.cls_w), p.cls_b);
}

// Exact copy with a different scalar type (float checkpoints are checked in
// double precision).
template <typename From, typename To>
EncoderParams<To> convert_params(const EncoderParams<From>& in);

// EncoderParams copies share tensor storage; clone_params gives independent
// storage. Training always clones its starting point, so callers keep their
// snapshots.
template <typename T>
EncoderParams<T> clone_params(const EncoderParams<T>& in) {
    return convert_params<T, T>(in);
}

using EncoderParamsF = EncoderParams<float>;
using EncoderParamsD = EncoderParams<double>;

extern template struct EncoderParams<float>;
extern template struct EncoderParams<double>;
extern template EncoderParams<float> init_params<float>(const EncoderConfig&, std::uint64_t);
extern template EncoderParams<double> init_params<double>(const EncoderConfig&, std::uint64_t);
extern template Tensor<float> encoder_forward<float>(Graph<float>&, const EncoderParams<float>&,
                                                     const TokenBatch&, double, Rng*);
extern template Tensor<double> encoder_forward<double>(Graph<double>&,
                                                       const EncoderParams<double>&,
                                                       const TokenBatch&, double, Rng*);
extern template EncoderParams<double> convert_params<float, double>(const EncoderParams<float>&);
extern template EncoderParams<float> convert_params<double, float>(const EncoderParams<double>&);
extern template EncoderParams<float> convert_params<float, float>(const EncoderParams<float>&);
extern template EncoderParams<double> convert_params<double, double>(const EncoderParams<double>&);

} // namespace glosskit
