#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <thread>

#include "glosskit/checkpoint.hpp"
#include "glosskit/encoder.hpp"

using namespace glosskit;

namespace {

EncoderConfig tiny_config(int input_vocab = 12, int label_vocab = 6) {
    EncoderConfig cfg;
    cfg.n_layers = 2;
    cfg.hidden = 12;
    cfg.n_heads = 3;
    cfg.ffn_dim = 24;
    cfg.max_positions = 16;
    cfg.input_vocab_size = input_vocab;
    cfg.label_vocab_size = label_vocab;
    return cfg;
}

} // namespace

TEST_CASE("parameter count matches the shape table closed form") {
    EncoderConfig cfg;
    cfg.input_vocab_size = 120;
    cfg.label_vocab_size = 13;
    auto params = init_params<float>(cfg, 1);
    const long h = cfg.hidden, f = cfg.ffn_dim, p = cfg.max_positions;
    const long v = cfg.input_vocab_size, l = cfg.label_vocab_size;
    const long per_layer = 4 * h * h + 2 * h * f + f + 9 * h;
    const long expected =
        v * h + p * h + 2 * h + cfg.n_layers * per_layer + (h * v + v) + (h * l + l);
    CHECK(params.parameter_count() == expected);
    // defaults from the architecture: 3 layers, hidden 100, 5 heads
    CHECK(per_layer == 121300);
    CHECK(cfg.head_dim() == 20);
}

TEST_CASE("initialization is deterministic and respects init rules") {
    auto cfg = tiny_config();
    auto a = init_params<float>(cfg, 99);
    auto b = init_params<float>(cfg, 99);
    auto na = a.named_parameters();
    auto nb = b.named_parameters();
    REQUIRE(na.size() == nb.size());
    for (size_t i = 0; i < na.size(); ++i) {
        REQUIRE(na[i].tensor->value.size() == nb[i].tensor->value.size());
        for (size_t j = 0; j < na[i].tensor->value.size(); ++j)
            CHECK(na[i].tensor->value[j] == nb[i].tensor->value[j]);
    }
    // truncated at two standard deviations
    for (const auto& np : na)
        if (np.decay)
            for (float x : np.tensor->value) CHECK(std::abs(x) <= 0.04f);
    // gains one, biases zero
    for (const auto& np : na) {
        if (np.name.find("gain") != std::string::npos)
            for (float x : np.tensor->value) CHECK(x == 1.0f);
        if (np.name.find(".b") != std::string::npos && !np.decay)
            for (float x : np.tensor->value) CHECK(x == 0.0f);
    }
}

TEST_CASE("hidden size must divide among heads") {
    EncoderConfig cfg;
    cfg.n_heads = 7;
    cfg.input_vocab_size = 10;
    cfg.label_vocab_size = 5;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("divisible"), Error);
}

TEST_CASE("forward output has shape batch*seq x hidden") {
    auto cfg = tiny_config();
    auto params = init_params<float>(cfg, 5);
    const std::vector<int> seq = {4, 5, 6, 3, 7, 8};
    TokenBatch batch = make_token_batch({&seq});
    Graph<float> g(false);
    auto h = encoder_forward(g, params, batch);
    CHECK(h->shape == std::vector<int>{6, 12});
    for (float v : h->value) CHECK(std::isfinite(v));
}

TEST_CASE("permuting batch order permutes outputs identically") {
    auto cfg = tiny_config();
    auto params = init_params<float>(cfg, 6);
    const std::vector<int> s1 = {4, 5, 6};
    const std::vector<int> s2 = {7, 8, 9, 10, 11};
    Graph<float> g(false);
    auto fwd = make_token_batch({&s1, &s2});
    auto rev = make_token_batch({&s2, &s1});
    auto h_fwd = encoder_forward(g, params, fwd);
    auto h_rev = encoder_forward(g, params, rev);
    const int seq = fwd.seq;
    REQUIRE(rev.seq == seq);
    for (int t = 0; t < static_cast<int>(s1.size()); ++t)
        for (int c = 0; c < cfg.hidden; ++c)
            CHECK(h_fwd->value[(0 * seq + t) * cfg.hidden + c] ==
                  h_rev->value[(1 * seq + t) * cfg.hidden + c]);
    for (int t = 0; t < static_cast<int>(s2.size()); ++t)
        for (int c = 0; c < cfg.hidden; ++c)
            CHECK(h_fwd->value[(1 * seq + t) * cfg.hidden + c] ==
                  h_rev->value[(0 * seq + t) * cfg.hidden + c]);
}

TEST_CASE("appending PAD tokens leaves non-PAD outputs unchanged") {
    auto cfg = tiny_config();
    auto params = init_params<float>(cfg, 7);
    const std::vector<int> seq = {4, 9, 6, 11};
    const std::vector<int> longer = {5, 5, 5, 5, 5, 5, 5}; // forces padding of seq
    Graph<float> g(false);
    auto alone = make_token_batch({&seq});
    auto padded = make_token_batch({&seq, &longer});
    auto h_alone = encoder_forward(g, params, alone);
    auto h_padded = encoder_forward(g, params, padded);
    for (size_t t = 0; t < seq.size(); ++t)
        for (int c = 0; c < cfg.hidden; ++c) {
            const float a = h_alone->value[t * cfg.hidden + c];
            const float b = h_padded->value[t * padded.seq * 0 + (t * padded.seq / padded.seq)];
            (void)b;
            const float p = h_padded->value[(0 * padded.seq + t) * cfg.hidden + c];
            CHECK(std::abs(a - p) < 1e-5f);
        }
}

TEST_CASE("attention probability mass never lands on PAD keys") {
    // assembled from the same ops the encoder uses
    Rng rng(3);
    const int batch = 2, heads = 2, seq = 4;
    auto scores = make_tensor<float>({batch * heads, seq, seq});
    for (auto& v : scores->value) v = static_cast<float>(rng.normal());
    auto bias = make_tensor<float>({batch, seq});
    bias->value = {0.f, 0.f, -1e9f, -1e9f, 0.f, 0.f, 0.f, -1e9f};
    Graph<float> g(false);
    auto probs = g.softmax(g.add_attention_bias(scores, bias, heads));
    for (int bh = 0; bh < batch * heads; ++bh) {
        const int b = bh / heads;
        for (int q = 0; q < seq; ++q) {
            double non_pad_sum = 0.0;
            for (int k = 0; k < seq; ++k) {
                const float p = probs->value[(bh * seq + q) * seq + k];
                if (bias->value[b * seq + k] < 0.f) CHECK(p == 0.0f);
                else non_pad_sum += p;
            }
            CHECK(std::abs(non_pad_sum - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("full model gradient check in double precision") {
    auto cfg = tiny_config();
    cfg.dropout = 0.0;
    auto params = init_params<double>(cfg, 11);
    const std::vector<int> s1 = {4, 5, 6, 7};
    const std::vector<int> s2 = {8, 9, 10};
    TokenBatch batch = make_token_batch({&s1, &s2});
    std::vector<int> targets(batch.ids.size(), kIgnoreIndex);
    targets[0] = 1;
    targets[1] = 3;
    targets[2] = 0;
    targets[4] = 5;
    targets[static_cast<size_t>(batch.seq)] = 2; // a position in the second row

    auto tensors = params.all_tensors();
    zero_grads(tensors);
    auto loss_of = [&](Graph<double>& g) {
        auto h = encoder_forward(g, params, batch);
        auto logits = classify_logits(g, params, h);
        return g.cross_entropy(logits, targets, kIgnoreIndex);
    };
    Graph<double> g;
    auto loss = loss_of(g);
    g.backward(loss);

    auto forward = [&]() {
        Graph<double> g2(false);
        return loss_of(g2)->value[0];
    };
    Rng sample_rng(17);
    const double err = finite_diff_check(forward, tensors, 1e-4, 6, sample_rng);
    CHECK(err < 1e-3);
}

TEST_CASE("head logits have the declared shapes and argmax defines the gloss") {
    auto cfg = tiny_config(12, 6);
    auto params = init_params<float>(cfg, 8);
    const std::vector<int> seq = {4, 5, 6, 7, 8, 3};
    TokenBatch batch = make_token_batch({&seq});
    Graph<float> g(false);
    auto h = encoder_forward(g, params, batch);
    auto mlm = mlm_logits(g, params, h);
    auto cls = classify_logits(g, params, h);
    CHECK(mlm->shape == std::vector<int>{6, 12});
    CHECK(cls->shape == std::vector<int>{6, 6});
    for (float v : mlm->value) CHECK(std::isfinite(v));
    for (int t = 0; t < 6; ++t) {
        int best = 0;
        for (int c = 1; c < 6; ++c)
            if (cls->value[t * 6 + c] > cls->value[t * 6 + best]) best = c;
        CHECK(best >= 0);
        CHECK(best < cfg.label_vocab_size);
    }
}

TEST_CASE("zero hidden input maps to the head bias row") {
    auto cfg = tiny_config();
    auto params = init_params<float>(cfg, 9);
    for (auto& v : params.cls_b->value) v = 0.5f;
    auto hidden = make_tensor<float>({3, cfg.hidden});
    Graph<float> g(false);
    auto cls = classify_logits(g, params, hidden);
    for (int t = 0; t < 3; ++t)
        for (int c = 0; c < cfg.label_vocab_size; ++c)
            CHECK(cls->value[t * cfg.label_vocab_size + c] == 0.5f);
}

TEST_CASE("ids outside the vocabulary and overlong sequences are rejected") {
    auto cfg = tiny_config();
    auto params = init_params<float>(cfg, 10);
    Graph<float> g(false);
    const std::vector<int> bad = {4, 99};
    TokenBatch batch = make_token_batch({&bad});
    CHECK_THROWS_WITH_AS(encoder_forward(g, params, batch), doctest::Contains("IdOutOfRange"),
                         Error);
    std::vector<int> long_seq(cfg.max_positions + 1, 4);
    TokenBatch batch2 = make_token_batch({&long_seq});
    CHECK_THROWS_WITH_AS(encoder_forward(g, params, batch2),
                         doctest::Contains("SequenceTooLong"), Error);
}

TEST_CASE("forward on shared parameters is safe from multiple threads") {
    auto cfg = tiny_config();
    auto params = init_params<float>(cfg, 31);
    const std::vector<int> seq = {4, 5, 6, 7, 8};
    TokenBatch batch = make_token_batch({&seq});
    Graph<float> g0(false);
    const auto expected = encoder_forward(g0, params, batch)->value;

    std::vector<std::vector<float>> results(4);
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&, t] {
            Graph<float> g(false);
            results[static_cast<size_t>(t)] = encoder_forward(g, params, batch)->value;
        });
    for (auto& th : threads) th.join();
    for (const auto& r : results) {
        REQUIRE(r.size() == expected.size());
        for (size_t i = 0; i < r.size(); ++i) CHECK(r[i] == expected[i]);
    }
}

TEST_CASE("checkpoint round trip reproduces the forward pass bit for bit") {
    auto cfg = tiny_config();
    auto params = init_params<float>(cfg, 21);
    const std::string path = "encoder_test_ckpt.bin";
    save_checkpoint(path, params, {{"vocab_fingerprint", 12345}});
    auto loaded = load_checkpoint(path);
    CHECK(loaded.extras.at("vocab_fingerprint").get<int>() == 12345);

    const std::vector<int> seq = {4, 5, 6, 7};
    TokenBatch batch = make_token_batch({&seq});
    Graph<float> g(false);
    auto h1 = encoder_forward(g, params, batch);
    auto h2 = encoder_forward(g, loaded.params, batch);
    REQUIRE(h1->value.size() == h2->value.size());
    for (size_t i = 0; i < h1->value.size(); ++i) CHECK(h1->value[i] == h2->value[i]);
    std::remove(path.c_str());
}
