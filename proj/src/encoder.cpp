#include "glosskit/encoder.hpp"

#include <cmath>

namespace glosskit {

namespace {

template <typename T>
void collect(std::vector<NamedParam<T>>& out, const std::string& name, const Tensor<T>& t,
             bool decay) {
    out.push_back({name, t, decay});
}

} // namespace

template <typename T>
std::vector<NamedParam<T>> EncoderParams<T>::named_parameters() const {
    std::vector<NamedParam<T>> out;
    collect(out, "tok_emb", tok_emb, true);
    collect(out, "pos_emb", pos_emb, true);
    collect(out, "emb_ln.gain", emb_ln_gain, false);
    collect(out, "emb_ln.bias", emb_ln_bias, false);
    for (size_t l = 0; l < layers.size(); ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        const auto& lp = layers[l];
        collect(out, p + "wq", lp.wq, true);
        collect(out, p + "bq", lp.bq, false);
        collect(out, p + "wk", lp.wk, true);
        collect(out, p + "bk", lp.bk, false);
        collect(out, p + "wv", lp.wv, true);
        collect(out, p + "bv", lp.bv, false);
        collect(out, p + "wo", lp.wo, true);
        collect(out, p + "bo", lp.bo, false);
        collect(out, p + "attn_ln.gain", lp.attn_ln_gain, false);
        collect(out, p + "attn_ln.bias", lp.attn_ln_bias, false);
        collect(out, p + "ffn.w1", lp.ffn_w1, true);
        collect(out, p + "ffn.b1", lp.ffn_b1, false);
        collect(out, p + "ffn.w2", lp.ffn_w2, true);
        collect(out, p + "ffn.b2", lp.ffn_b2, false);
        collect(out, p + "ffn_ln.gain", lp.ffn_ln_gain, false);
        collect(out, p + "ffn_ln.bias", lp.ffn_ln_bias, false);
    }
    collect(out, "mlm_head.w", mlm_w, true);
    collect(out, "mlm_head.b", mlm_b, false);
    collect(out, "classifier.w", cls_w, true);
    collect(out, "classifier.b", cls_b, false);
    return out;
}

template <typename T>
std::vector<Tensor<T>> EncoderParams<T>::all_tensors() const {
    std::vector<Tensor<T>> out;
    for (auto& np : named_parameters()) out.push_back(np.tensor);
    return out;
}

template <typename T>
std::vector<NamedParam<T>> EncoderParams<T>::mlm_training_parameters() const {
    std::vector<NamedParam<T>> out;
    for (auto& np : named_parameters())
        if (np.name.rfind("classifier.", 0) != 0) out.push_back(np);
    return out;
}

template <typename T>
std::vector<NamedParam<T>> EncoderParams<T>::classifier_training_parameters() const {
    std::vector<NamedParam<T>> out;
    for (auto& np : named_parameters())
        if (np.name.rfind("mlm_head.", 0) != 0) out.push_back(np);
    return out;
}

template <typename T>
long EncoderParams<T>::parameter_count() const {
    long n = 0;
    for (auto& np : named_parameters()) n += np.tensor->size();
    return n;
}

template <typename T>
EncoderParams<T> init_params(const EncoderConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const int h = cfg.hidden, f = cfg.ffn_dim;
    const int v = cfg.input_vocab_size, lv = cfg.label_vocab_size;

    auto weight = [&rng](std::vector<int> shape) {
        auto t = make_tensor<T>(std::move(shape), true);
        for (auto& x : t->value) x = static_cast<T>(rng.truncated_normal(0.02));
        return t;
    };
    auto zeros = [](int n) { return make_tensor<T>({n}, true); };
    auto ones = [](int n) {
        auto t = make_tensor<T>({n}, true);
        std::fill(t->value.begin(), t->value.end(), T(1));
        return t;
    };

    EncoderParams<T> p;
    p.cfg = cfg;
    p.tok_emb = weight({v, h});
    p.pos_emb = weight({cfg.max_positions, h});
    p.emb_ln_gain = ones(h);
    p.emb_ln_bias = zeros(h);
    p.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (auto& lp : p.layers) {
        lp.wq = weight({h, h});
        lp.bq = zeros(h);
        lp.wk = weight({h, h});
        lp.bk = zeros(h);
        lp.wv = weight({h, h});
        lp.bv = zeros(h);
        lp.wo = weight({h, h});
        lp.bo = zeros(h);
        lp.attn_ln_gain = ones(h);
        lp.attn_ln_bias = zeros(h);
        lp.ffn_w1 = weight({h, f});
        lp.ffn_b1 = zeros(f);
        lp.ffn_w2 = weight({f, h});
        lp.ffn_b2 = zeros(h);
        lp.ffn_ln_gain = ones(h);
        lp.ffn_ln_bias = zeros(h);
    }
    p.mlm_w = weight({h, v});
    p.mlm_b = zeros(v);
    p.cls_w = weight({h, lv});
    p.cls_b = zeros(lv);
    return p;
}

TokenBatch make_token_batch(const std::vector<const std::vector<int>*>& sequences) {
    TokenBatch b;
    b.batch = static_cast<int>(sequences.size());
    b.seq = 0;
    for (const auto* s : sequences) b.seq = std::max(b.seq, static_cast<int>(s->size()));
    b.ids.assign(static_cast<size_t>(b.batch) * b.seq, Vocabulary::kPad);
    b.is_pad.assign(static_cast<size_t>(b.batch) * b.seq, 1);
    for (int i = 0; i < b.batch; ++i) {
        const auto& s = *sequences[static_cast<size_t>(i)];
        for (size_t t = 0; t < s.size(); ++t) {
            b.ids[static_cast<size_t>(i) * b.seq + t] = s[t];
            b.is_pad[static_cast<size_t>(i) * b.seq + t] = 0;
        }
    }
    return b;
}

template <typename T>
Tensor<T> encoder_forward(Graph<T>& g, const EncoderParams<T>& p, const TokenBatch& batch,
                          double dropout_p, Rng* rng) {
    const EncoderConfig& cfg = p.cfg;
    if (batch.seq > cfg.max_positions)
        throw sequence_too_long("batch sequence length " + std::to_string(batch.seq) +
                                " exceeds max_positions " + std::to_string(cfg.max_positions));
    for (int id : batch.ids)
        if (id < 0 || id >= cfg.input_vocab_size)
            throw id_out_of_range("input id " + std::to_string(id) +
                                  " outside vocabulary of size " +
                                  std::to_string(cfg.input_vocab_size));
    const bool train = dropout_p > 0.0 && rng != nullptr;
    auto drop = [&](const Tensor<T>& x) { return train ? g.dropout(x, dropout_p, *rng) : x; };

    std::vector<int> pos_ids(batch.ids.size());
    for (int i = 0; i < batch.batch; ++i)
        for (int t = 0; t < batch.seq; ++t)
            pos_ids[static_cast<size_t>(i) * batch.seq + t] = t;

    // additive key mask, built once per batch
    auto key_bias = make_tensor<T>({batch.batch, batch.seq});
    for (size_t i = 0; i < batch.is_pad.size(); ++i)
        key_bias->value[i] = batch.is_pad[i] ? static_cast<T>(-1e9) : T(0);

    auto x = g.add(g.embedding_lookup(p.tok_emb, batch.ids),
                   g.embedding_lookup(p.pos_emb, pos_ids));
    x = g.layer_norm(x, p.emb_ln_gain, p.emb_ln_bias, 1e-5);
    x = drop(x);

    const T inv_sqrt_dh = static_cast<T>(1.0 / std::sqrt(double(cfg.head_dim())));
    for (const auto& lp : p.layers) {
        auto q = g.split_heads(g.add_rowvec(g.matmul(x, lp.wq), lp.bq), batch.batch, batch.seq,
                               cfg.n_heads);
        auto k = g.split_heads(g.add_rowvec(g.matmul(x, lp.wk), lp.bk), batch.batch, batch.seq,
                               cfg.n_heads);
        auto v = g.split_heads(g.add_rowvec(g.matmul(x, lp.wv), lp.bv), batch.batch, batch.seq,
                               cfg.n_heads);
        auto scores = g.scale(g.bmm_nt(q, k), inv_sqrt_dh);
        scores = g.add_attention_bias(scores, key_bias, cfg.n_heads);
        auto probs = drop(g.softmax(scores));
        auto ctx = g.merge_heads(g.bmm(probs, v), batch.batch, batch.seq, cfg.n_heads);
        auto attn_out = drop(g.add_rowvec(g.matmul(ctx, lp.wo), lp.bo));
        x = g.layer_norm(g.add(x, attn_out), lp.attn_ln_gain, lp.attn_ln_bias, 1e-5);

        auto ffn = g.gelu(g.add_rowvec(g.matmul(x, lp.ffn_w1), lp.ffn_b1));
        ffn = drop(g.add_rowvec(g.matmul(ffn, lp.ffn_w2), lp.ffn_b2));
        x = g.layer_norm(g.add(x, ffn), lp.ffn_ln_gain, lp.ffn_ln_bias, 1e-5);
    }
    return x;
}

template <typename From, typename To>
EncoderParams<To> convert_params(const EncoderParams<From>& in) {
    EncoderParams<To> out = init_params<To>(in.cfg, 0);
    auto src = in.named_parameters();
    auto dst = out.named_parameters();
    for (size_t i = 0; i < src.size(); ++i) {
        dst[i].tensor->shape = src[i].tensor->shape;
        dst[i].tensor->value.resize(src[i].tensor->value.size());
        for (size_t j = 0; j < src[i].tensor->value.size(); ++j)
            dst[i].tensor->value[j] = static_cast<To>(src[i].tensor->value[j]);
        dst[i].tensor->ensure_grad();
        dst[i].tensor->zero_grad();
    }
    return out;
}

template struct EncoderParams<float>;
template struct EncoderParams<double>;
template EncoderParams<float> init_params<float>(const EncoderConfig&, std::uint64_t);
template EncoderParams<double> init_params<double>(const EncoderConfig&, std::uint64_t);
template Tensor<float> encoder_forward<float>(Graph<float>&, const EncoderParams<float>&,
                                              const TokenBatch&, double, Rng*);
template Tensor<double> encoder_forward<double>(Graph<double>&, const EncoderParams<double>&,
                                                const TokenBatch&, double, Rng*);
template EncoderParams<double> convert_params<float, double>(const EncoderParams<float>&);
template EncoderParams<float> convert_params<double, float>(const EncoderParams<double>&);
template EncoderParams<float> convert_params<float, float>(const EncoderParams<float>&);
template EncoderParams<double> convert_params<double, double>(const EncoderParams<double>&);

} // namespace glosskit
