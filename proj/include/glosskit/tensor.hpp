#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "glosskit/errors.hpp"
#include "glosskit/rng.hpp"
#include "glosskit/threading.hpp"

namespace glosskit {

// Dense row-major tensor. Training runs with T = float; T = double is used
// for gradient checking. grad is allocated lazily, only when requires_grad.
template <typename T>
struct TensorObj {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;

    long size() const {
        long n = 1;
        for (int d : shape) n *= d;
        return n;
    }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }

    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <typename T>
using Tensor = std::shared_ptr<TensorObj<T>>;

inline std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

template <typename T>
Tensor<T> make_tensor(std::vector<int> shape, bool requires_grad = false) {
    auto t = std::make_shared<TensorObj<T>>();
    t->shape = std::move(shape);
    t->value.assign(static_cast<size_t>(t->size()), T(0));
    t->requires_grad = requires_grad;
    if (requires_grad) t->ensure_grad();
    return t;
}

template <typename T>
Tensor<T> make_tensor(std::vector<int> shape, std::vector<T> data, bool requires_grad = false) {
    auto t = std::make_shared<TensorObj<T>>();
    t->shape = std::move(shape);
    if (static_cast<long>(data.size()) != t->size())
        throw shape_mismatch("tensor data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(t->shape));
    t->value = std::move(data);
    t->requires_grad = requires_grad;
    if (requires_grad) t->ensure_grad();
    return t;
}

enum class Reduction { Mean, Sum };

// ---------------------------------------------------------------------------
// Graph: a tape of backward closures appended in forward order. backward()
// replays it in reverse, which is reverse topological order by construction,
// then clears the tape.
// ---------------------------------------------------------------------------
template <typename T>
class Graph {
  public:
    Graph() = default;
    // grad_enabled = false gives a pure-inference graph: no tape, no grad
    // buffers on intermediates.
    explicit Graph(bool grad_enabled) : grad_enabled_(grad_enabled) {}

    size_t node_count() const { return tape_.size(); }

    void backward(const Tensor<T>& loss) {
        if (loss->size() != 1)
            throw non_scalar_loss("backward() expects a scalar, got shape " +
                                  shape_str(loss->shape));
        loss->ensure_grad();
        loss->grad[0] += T(1);
        for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
        tape_.clear();
    }

    // --- elementwise -------------------------------------------------------

    Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
        if (a->shape != b->shape)
            throw shape_mismatch("add: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
        auto out = result_like(a, a->shape, {a, b});
        const long n = a->size();
        for (long i = 0; i < n; ++i) out->value[i] = a->value[i] + b->value[i];
        if (out->requires_grad) {
            tape_.push_back([a, b, out] {
                const long m = out->size();
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (long i = 0; i < m; ++i) a->grad[i] += out->grad[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (long i = 0; i < m; ++i) b->grad[i] += out->grad[i];
                }
            });
        }
        return out;
    }

    // x: [rows x cols], v: [cols]; adds v to every row (bias add).
    Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
        const int cols = x->shape.back();
        if (v->shape.size() != 1 || v->shape[0] != cols)
            throw shape_mismatch("add_rowvec: " + shape_str(x->shape) + " vs " + shape_str(v->shape));
        auto out = result_like(x, x->shape, {x, v});
        const long rows = x->size() / cols;
        for (long r = 0; r < rows; ++r) {
            const T* xr = x->value.data() + r * cols;
            T* onr = out->value.data() + r * cols;
            for (int c = 0; c < cols; ++c) onr[c] = xr[c] + v->value[c];
        }
        if (out->requires_grad) {
            tape_.push_back([x, v, out, rows, cols] {
                if (x->requires_grad) {
                    x->ensure_grad();
                    const long m = out->size();
                    for (long i = 0; i < m; ++i) x->grad[i] += out->grad[i];
                }
                if (v->requires_grad) {
                    v->ensure_grad();
                    for (long r = 0; r < rows; ++r) {
                        const T* gr = out->grad.data() + r * cols;
                        for (int c = 0; c < cols; ++c) v->grad[c] += gr[c];
                    }
                }
            });
        }
        return out;
    }

    Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
        if (a->shape != b->shape)
            throw shape_mismatch("mul: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
        auto out = result_like(a, a->shape, {a, b});
        const long n = a->size();
        for (long i = 0; i < n; ++i) out->value[i] = a->value[i] * b->value[i];
        if (out->requires_grad) {
            tape_.push_back([a, b, out] {
                const long m = out->size();
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (long i = 0; i < m; ++i) a->grad[i] += out->grad[i] * b->value[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (long i = 0; i < m; ++i) b->grad[i] += out->grad[i] * a->value[i];
                }
            });
        }
        return out;
    }

    Tensor<T> scale(const Tensor<T>& a, T c) {
        auto out = result_like(a, a->shape, {a});
        const long n = a->size();
        for (long i = 0; i < n; ++i) out->value[i] = a->value[i] * c;
        if (out->requires_grad) {
            tape_.push_back([a, out, c] {
                if (!a->requires_grad) return;
                a->ensure_grad();
                const long m = out->size();
                for (long i = 0; i < m; ++i) a->grad[i] += out->grad[i] * c;
            });
        }
        return out;
    }

    Tensor<T> sum(const Tensor<T>& a) {
        auto out = result_like(a, {1}, {a});
        double acc = 0.0;
        for (T v : a->value) acc += static_cast<double>(v);
        out->value[0] = static_cast<T>(acc);
        if (out->requires_grad) {
            tape_.push_back([a, out] {
                if (!a->requires_grad) return;
                a->ensure_grad();
                const T g = out->grad[0];
                for (auto& gi : a->grad) gi += g;
            });
        }
        return out;
    }

    Tensor<T> gelu(const Tensor<T>& a) {
        auto out = result_like(a, a->shape, {a});
        const long n = a->size();
        for (long i = 0; i < n; ++i) {
            const double x = static_cast<double>(a->value[i]);
            out->value[i] = static_cast<T>(0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)));
        }
        if (out->requires_grad) {
            tape_.push_back([a, out] {
                if (!a->requires_grad) return;
                a->ensure_grad();
                const long m = out->size();
                constexpr double inv_sqrt_2pi = 0.3989422804014326779399461;
                for (long i = 0; i < m; ++i) {
                    const double x = static_cast<double>(a->value[i]);
                    const double d = 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
                                     x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
                    a->grad[i] += out->grad[i] * static_cast<T>(d);
                }
            });
        }
        return out;
    }

    // Inverted dropout: kept activations are scaled by 1/(1-p).
    Tensor<T> dropout(const Tensor<T>& a, double p, Rng& rng) {
        if (p <= 0.0) return a;
        if (p >= 1.0) throw shape_mismatch("dropout probability must be < 1");
        auto out = result_like(a, a->shape, {a});
        const long n = a->size();
        auto mask = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(n));
        const T inv_keep = static_cast<T>(1.0 / (1.0 - p));
        for (long i = 0; i < n; ++i) {
            const bool keep = rng.uniform() >= p;
            (*mask)[i] = keep;
            out->value[i] = keep ? a->value[i] * inv_keep : T(0);
        }
        if (out->requires_grad) {
            tape_.push_back([a, out, mask, inv_keep] {
                if (!a->requires_grad) return;
                a->ensure_grad();
                const long m = out->size();
                for (long i = 0; i < m; ++i)
                    if ((*mask)[i]) a->grad[i] += out->grad[i] * inv_keep;
            });
        }
        return out;
    }

    // --- matrix products ---------------------------------------------------

    // A: [m x k], B: [k x n] -> [m x n]
    Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
        if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
            throw shape_mismatch("matmul: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
        const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
        auto out = result_like(a, {m, n}, {a, b});
        gemm(a->value.data(), b->value.data(), out->value.data(), m, k, n);
        if (out->requires_grad) {
            tape_.push_back([a, b, out, m, k, n] {
                if (a->requires_grad) {
                    a->ensure_grad();
                    // dA[i,:k] += dC[i,:n] . B[:, n] rows -> dot(dC[i], B[k'])
                    const T* dc = out->grad.data();
                    const T* bv = b->value.data();
                    T* da = a->grad.data();
                    parallel_for(m, 2L * k * n, [=](long r0, long r1) {
                        for (long i = r0; i < r1; ++i) {
                            const T* dci = dc + i * n;
                            T* dai = da + i * k;
                            for (int kk = 0; kk < k; ++kk) {
                                const T* bk = bv + static_cast<long>(kk) * n;
                                double acc = 0.0;
                                for (int j = 0; j < n; ++j) acc += static_cast<double>(dci[j]) * bk[j];
                                dai[kk] += static_cast<T>(acc);
                            }
                        }
                    });
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    const T* dc = out->grad.data();
                    const T* av = a->value.data();
                    T* db = b->grad.data();
                    // dB[kk,:] += sum_i A[i,kk] * dC[i,:]; parallel over kk blocks.
                    parallel_for(k, 2L * m * n, [=](long k0, long k1) {
                        for (int i = 0; i < m; ++i) {
                            const T* dci = dc + static_cast<long>(i) * n;
                            const T* ai = av + static_cast<long>(i) * k;
                            for (long kk = k0; kk < k1; ++kk) {
                                const T aik = ai[kk];
                                if (aik == T(0)) continue;
                                T* dbk = db + kk * n;
                                for (int j = 0; j < n; ++j) dbk[j] += aik * dci[j];
                            }
                        }
                    });
                }
            });
        }
        return out;
    }

    // A: [b x m x k], B: [b x k x n] -> [b x m x n]
    Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
        if (a->shape.size() != 3 || b->shape.size() != 3 || a->shape[0] != b->shape[0] ||
            a->shape[2] != b->shape[1])
            throw shape_mismatch("bmm: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
        const int nb = a->shape[0], m = a->shape[1], k = a->shape[2], n = b->shape[2];
        auto out = result_like(a, {nb, m, n}, {a, b});
        const long as = static_cast<long>(m) * k, bs = static_cast<long>(k) * n,
                   cs = static_cast<long>(m) * n;
        {
            const T* av = a->value.data();
            const T* bv = b->value.data();
            T* cv = out->value.data();
            parallel_for(nb, 2L * m * k * n, [=](long i0, long i1) {
                for (long i = i0; i < i1; ++i)
                    gemm(av + i * as, bv + i * bs, cv + i * cs, m, k, n);
            });
        }
        if (out->requires_grad) {
            tape_.push_back([a, b, out, nb, m, k, n, as, bs, cs] {
                if (a->requires_grad) {
                    a->ensure_grad();
                    const T* dc = out->grad.data();
                    const T* bv = b->value.data();
                    T* da = a->grad.data();
                    parallel_for(nb, 2L * m * k * n, [=](long i0, long i1) {
                        for (long bi = i0; bi < i1; ++bi)
                            for (int i = 0; i < m; ++i) {
                                const T* dci = dc + bi * cs + static_cast<long>(i) * n;
                                T* dai = da + bi * as + static_cast<long>(i) * k;
                                for (int kk = 0; kk < k; ++kk) {
                                    const T* bk = bv + bi * bs + static_cast<long>(kk) * n;
                                    double acc = 0.0;
                                    for (int j = 0; j < n; ++j)
                                        acc += static_cast<double>(dci[j]) * bk[j];
                                    dai[kk] += static_cast<T>(acc);
                                }
                            }
                    });
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    const T* dc = out->grad.data();
                    const T* av = a->value.data();
                    T* db = b->grad.data();
                    parallel_for(nb, 2L * m * k * n, [=](long i0, long i1) {
                        for (long bi = i0; bi < i1; ++bi)
                            for (int i = 0; i < m; ++i) {
                                const T* dci = dc + bi * cs + static_cast<long>(i) * n;
                                const T* ai = av + bi * as + static_cast<long>(i) * k;
                                for (int kk = 0; kk < k; ++kk) {
                                    const T aik = ai[kk];
                                    T* dbk = db + bi * bs + static_cast<long>(kk) * n;
                                    for (int j = 0; j < n; ++j) dbk[j] += aik * dci[j];
                                }
                            }
                    });
                }
            });
        }
        return out;
    }

    // A: [b x m x d], B: [b x n x d] -> A . B^T : [b x m x n]
    Tensor<T> bmm_nt(const Tensor<T>& a, const Tensor<T>& b) {
        if (a->shape.size() != 3 || b->shape.size() != 3 || a->shape[0] != b->shape[0] ||
            a->shape[2] != b->shape[2])
            throw shape_mismatch("bmm_nt: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
        const int nb = a->shape[0], m = a->shape[1], d = a->shape[2], n = b->shape[1];
        auto out = result_like(a, {nb, m, n}, {a, b});
        const long as = static_cast<long>(m) * d, bs = static_cast<long>(n) * d,
                   cs = static_cast<long>(m) * n;
        {
            const T* av = a->value.data();
            const T* bv = b->value.data();
            T* cv = out->value.data();
            parallel_for(nb, 2L * m * n * d, [=](long i0, long i1) {
                for (long bi = i0; bi < i1; ++bi)
                    for (int i = 0; i < m; ++i) {
                        const T* ai = av + bi * as + static_cast<long>(i) * d;
                        T* ci = cv + bi * cs + static_cast<long>(i) * n;
                        for (int j = 0; j < n; ++j) {
                            const T* bj = bv + bi * bs + static_cast<long>(j) * d;
                            double acc = 0.0;
                            for (int kk = 0; kk < d; ++kk)
                                acc += static_cast<double>(ai[kk]) * bj[kk];
                            ci[j] = static_cast<T>(acc);
                        }
                    }
            });
        }
        if (out->requires_grad) {
            tape_.push_back([a, b, out, nb, m, d, n, as, bs, cs] {
                const T* dc = out->grad.data();
                if (a->requires_grad) {
                    a->ensure_grad();
                    const T* bv = b->value.data();
                    T* da = a->grad.data();
                    // dA[b] += dC[b] . B[b]
                    parallel_for(nb, 2L * m * n * d, [=](long i0, long i1) {
                        for (long bi = i0; bi < i1; ++bi)
                            for (int i = 0; i < m; ++i) {
                                const T* dci = dc + bi * cs + static_cast<long>(i) * n;
                                T* dai = da + bi * as + static_cast<long>(i) * d;
                                for (int j = 0; j < n; ++j) {
                                    const T g = dci[j];
                                    if (g == T(0)) continue;
                                    const T* bj = bv + bi * bs + static_cast<long>(j) * d;
                                    for (int kk = 0; kk < d; ++kk) dai[kk] += g * bj[kk];
                                }
                            }
                    });
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    const T* av = a->value.data();
                    T* db = b->grad.data();
                    // dB[b] += dC[b]^T . A[b]
                    parallel_for(nb, 2L * m * n * d, [=](long i0, long i1) {
                        for (long bi = i0; bi < i1; ++bi)
                            for (int i = 0; i < m; ++i) {
                                const T* dci = dc + bi * cs + static_cast<long>(i) * n;
                                const T* ai = av + bi * as + static_cast<long>(i) * d;
                                for (int j = 0; j < n; ++j) {
                                    const T g = dci[j];
                                    if (g == T(0)) continue;
                                    T* dbj = db + bi * bs + static_cast<long>(j) * d;
                                    for (int kk = 0; kk < d; ++kk) dbj[kk] += g * ai[kk];
                                }
                            }
                    });
                }
            });
        }
        return out;
    }

    // --- lookups and reshapes ----------------------------------------------

    // table: [V x H], ids: N entries -> [N x H]
    Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<int>& ids) {
        if (table->shape.size() != 2)
            throw shape_mismatch("embedding_lookup: table must be 2-D, got " +
                                 shape_str(table->shape));
        const int v = table->shape[0], h = table->shape[1];
        for (int id : ids)
            if (id < 0 || id >= v)
                throw id_out_of_range("embedding id " + std::to_string(id) +
                                      " outside table of size " + std::to_string(v));
        const int n = static_cast<int>(ids.size());
        auto out = result_like(table, {n, h}, {table});
        for (int i = 0; i < n; ++i)
            std::copy_n(table->value.data() + static_cast<long>(ids[i]) * h, h,
                        out->value.data() + static_cast<long>(i) * h);
        if (out->requires_grad) {
            auto ids_copy = std::make_shared<std::vector<int>>(ids);
            tape_.push_back([table, out, ids_copy, h] {
                if (!table->requires_grad) return;
                table->ensure_grad();
                const int n2 = static_cast<int>(ids_copy->size());
                for (int i = 0; i < n2; ++i) {
                    T* dst = table->grad.data() + static_cast<long>((*ids_copy)[i]) * h;
                    const T* src = out->grad.data() + static_cast<long>(i) * h;
                    for (int c = 0; c < h; ++c) dst[c] += src[c];
                }
            });
        }
        return out;
    }

    // x: [N=B*S x H] -> [B*heads x S x dh]; inverse is merge_heads.
    Tensor<T> split_heads(const Tensor<T>& x, int batch, int seq, int heads) {
        const int h = x->shape.back();
        if (x->shape.size() != 2 || x->shape[0] != batch * seq || h % heads != 0)
            throw shape_mismatch("split_heads: " + shape_str(x->shape));
        const int dh = h / heads;
        auto out = result_like(x, {batch * heads, seq, dh}, {x});
        for (int b = 0; b < batch; ++b)
            for (int s = 0; s < seq; ++s) {
                const T* src = x->value.data() + (static_cast<long>(b) * seq + s) * h;
                for (int hd = 0; hd < heads; ++hd) {
                    T* dst = out->value.data() +
                             ((static_cast<long>(b) * heads + hd) * seq + s) * dh;
                    std::copy_n(src + static_cast<long>(hd) * dh, dh, dst);
                }
            }
        if (out->requires_grad) {
            tape_.push_back([x, out, batch, seq, heads, h, dh] {
                if (!x->requires_grad) return;
                x->ensure_grad();
                for (int b = 0; b < batch; ++b)
                    for (int s = 0; s < seq; ++s) {
                        T* dst = x->grad.data() + (static_cast<long>(b) * seq + s) * h;
                        for (int hd = 0; hd < heads; ++hd) {
                            const T* src = out->grad.data() +
                                           ((static_cast<long>(b) * heads + hd) * seq + s) * dh;
                            for (int c = 0; c < dh; ++c) dst[hd * dh + c] += src[c];
                        }
                    }
            });
        }
        return out;
    }

    // x: [B*heads x S x dh] -> [B*S x H]
    Tensor<T> merge_heads(const Tensor<T>& x, int batch, int seq, int heads) {
        if (x->shape.size() != 3 || x->shape[0] != batch * heads || x->shape[1] != seq)
            throw shape_mismatch("merge_heads: " + shape_str(x->shape));
        const int dh = x->shape[2];
        const int h = heads * dh;
        auto out = result_like(x, {batch * seq, h}, {x});
        for (int b = 0; b < batch; ++b)
            for (int s = 0; s < seq; ++s) {
                T* dst = out->value.data() + (static_cast<long>(b) * seq + s) * h;
                for (int hd = 0; hd < heads; ++hd) {
                    const T* src = x->value.data() +
                                   ((static_cast<long>(b) * heads + hd) * seq + s) * dh;
                    std::copy_n(src, dh, dst + static_cast<long>(hd) * dh);
                }
            }
        if (out->requires_grad) {
            tape_.push_back([x, out, batch, seq, heads, h, dh] {
                if (!x->requires_grad) return;
                x->ensure_grad();
                for (int b = 0; b < batch; ++b)
                    for (int s = 0; s < seq; ++s) {
                        const T* src = out->grad.data() + (static_cast<long>(b) * seq + s) * h;
                        for (int hd = 0; hd < heads; ++hd) {
                            T* dst = x->grad.data() +
                                     ((static_cast<long>(b) * heads + hd) * seq + s) * dh;
                            for (int c = 0; c < dh; ++c) dst[c] += src[hd * dh + c];
                        }
                    }
            });
        }
        return out;
    }

    // scores: [B*heads x S x S], key_bias: [B x S] additive mask (0 or -1e9),
    // broadcast over heads and query positions. key_bias takes no gradient.
    Tensor<T> add_attention_bias(const Tensor<T>& scores, const Tensor<T>& key_bias, int heads) {
        if (scores->shape.size() != 3 || key_bias->shape.size() != 2 ||
            scores->shape[0] != key_bias->shape[0] * heads ||
            scores->shape[2] != key_bias->shape[1])
            throw shape_mismatch("add_attention_bias: " + shape_str(scores->shape) + " vs " +
                                 shape_str(key_bias->shape));
        const int bh = scores->shape[0], m = scores->shape[1], n = scores->shape[2];
        auto out = result_like(scores, scores->shape, {scores});
        for (int i = 0; i < bh; ++i) {
            const T* bias = key_bias->value.data() + static_cast<long>(i / heads) * n;
            for (int q = 0; q < m; ++q) {
                const T* src = scores->value.data() + (static_cast<long>(i) * m + q) * n;
                T* dst = out->value.data() + (static_cast<long>(i) * m + q) * n;
                for (int j = 0; j < n; ++j) dst[j] = src[j] + bias[j];
            }
        }
        if (out->requires_grad) {
            tape_.push_back([scores, out] {
                if (!scores->requires_grad) return;
                scores->ensure_grad();
                const long total = out->size();
                for (long i = 0; i < total; ++i) scores->grad[i] += out->grad[i];
            });
        }
        return out;
    }

    // --- normalization and losses ------------------------------------------

    // Normalizes the last axis; numerically stable via max subtraction.
    Tensor<T> softmax(const Tensor<T>& x) {
        const int cols = x->shape.back();
        const long rows = x->size() / cols;
        auto out = result_like(x, x->shape, {x});
        for (long r = 0; r < rows; ++r) {
            const T* xr = x->value.data() + r * cols;
            T* yr = out->value.data() + r * cols;
            T mx = xr[0];
            for (int c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
            double z = 0.0;
            for (int c = 0; c < cols; ++c) {
                const double e = std::exp(static_cast<double>(xr[c] - mx));
                yr[c] = static_cast<T>(e);
                z += e;
            }
            const double inv = 1.0 / z;
            for (int c = 0; c < cols; ++c) yr[c] = static_cast<T>(yr[c] * inv);
        }
        if (out->requires_grad) {
            tape_.push_back([x, out, rows, cols] {
                if (!x->requires_grad) return;
                x->ensure_grad();
                for (long r = 0; r < rows; ++r) {
                    const T* y = out->value.data() + r * cols;
                    const T* dy = out->grad.data() + r * cols;
                    T* dx = x->grad.data() + r * cols;
                    double dot = 0.0;
                    for (int c = 0; c < cols; ++c) dot += static_cast<double>(dy[c]) * y[c];
                    for (int c = 0; c < cols; ++c)
                        dx[c] += static_cast<T>(y[c] * (static_cast<double>(dy[c]) - dot));
                }
            });
        }
        return out;
    }

    // x: [N x H]; gain, bias: [H]. Normalizes each row to zero mean and unit
    // variance (biased estimator) before gain and bias.
    Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                         double eps) {
        const int h = x->shape.back();
        if (gain->size() != h || bias->size() != h)
            throw shape_mismatch("layer_norm: " + shape_str(x->shape) + " with gain " +
                                 shape_str(gain->shape));
        const long rows = x->size() / h;
        auto out = result_like(x, x->shape, {x, gain, bias});
        auto xhat = std::make_shared<std::vector<T>>(x->value.size());
        auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
        for (long r = 0; r < rows; ++r) {
            const T* xr = x->value.data() + r * h;
            double mean = 0.0;
            for (int c = 0; c < h; ++c) mean += static_cast<double>(xr[c]);
            mean /= h;
            double var = 0.0;
            for (int c = 0; c < h; ++c) {
                const double d = static_cast<double>(xr[c]) - mean;
                var += d * d;
            }
            var /= h;
            const double inv = 1.0 / std::sqrt(var + eps);
            (*inv_std)[r] = inv;
            T* xh = xhat->data() + r * h;
            T* yr = out->value.data() + r * h;
            for (int c = 0; c < h; ++c) {
                const double v = (static_cast<double>(xr[c]) - mean) * inv;
                xh[c] = static_cast<T>(v);
                yr[c] = static_cast<T>(v * static_cast<double>(gain->value[c]) +
                                       static_cast<double>(bias->value[c]));
            }
        }
        if (out->requires_grad) {
            tape_.push_back([x, gain, bias, out, xhat, inv_std, rows, h] {
                for (long r = 0; r < rows; ++r) {
                    const T* dy = out->grad.data() + r * h;
                    const T* xh = xhat->data() + r * h;
                    if (gain->requires_grad) {
                        gain->ensure_grad();
                        for (int c = 0; c < h; ++c) gain->grad[c] += dy[c] * xh[c];
                    }
                    if (bias->requires_grad) {
                        bias->ensure_grad();
                        for (int c = 0; c < h; ++c) bias->grad[c] += dy[c];
                    }
                    if (x->requires_grad) {
                        x->ensure_grad();
                        // dx = inv/H * (H*dxh - sum(dxh) - xh * sum(dxh*xh))
                        double s1 = 0.0, s2 = 0.0;
                        for (int c = 0; c < h; ++c) {
                            const double dxh = static_cast<double>(dy[c]) * gain->value[c];
                            s1 += dxh;
                            s2 += dxh * xh[c];
                        }
                        const double inv = (*inv_std)[r];
                        T* dx = x->grad.data() + r * h;
                        for (int c = 0; c < h; ++c) {
                            const double dxh = static_cast<double>(dy[c]) * gain->value[c];
                            dx[c] += static_cast<T>(inv * (dxh - (s1 + xh[c] * s2) / h));
                        }
                    }
                }
            });
        }
        return out;
    }

    // logits: [N x V]; targets: N class indices, ignore_index rows excluded.
    // Mean divides by the number of counted rows; Sum leaves the total.
    Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets,
                            int ignore_index, Reduction reduction = Reduction::Mean) {
        if (logits->shape.size() != 2 || static_cast<int>(targets.size()) != logits->shape[0])
            throw shape_mismatch("cross_entropy: logits " + shape_str(logits->shape) + " vs " +
                                 std::to_string(targets.size()) + " targets");
        const int n = logits->shape[0], v = logits->shape[1];
        for (int t : targets)
            if (t != ignore_index && (t < 0 || t >= v))
                throw id_out_of_range("cross_entropy target " + std::to_string(t) +
                                      " outside vocabulary of size " + std::to_string(v));
        long count = 0;
        double total = 0.0;
        auto probs = std::make_shared<std::vector<T>>(logits->value.size());
        for (int i = 0; i < n; ++i) {
            const T* row = logits->value.data() + static_cast<long>(i) * v;
            T* pr = probs->data() + static_cast<long>(i) * v;
            T mx = row[0];
            for (int c = 1; c < v; ++c) mx = std::max(mx, row[c]);
            double z = 0.0;
            for (int c = 0; c < v; ++c) {
                const double e = std::exp(static_cast<double>(row[c] - mx));
                pr[c] = static_cast<T>(e);
                z += e;
            }
            const double inv = 1.0 / z;
            for (int c = 0; c < v; ++c) pr[c] = static_cast<T>(pr[c] * inv);
            if (targets[i] != ignore_index) {
                total += std::log(z) + static_cast<double>(mx) -
                         static_cast<double>(row[targets[i]]);
                ++count;
            }
        }
        auto out = result_like(logits, {1}, {logits});
        const long denom = (reduction == Reduction::Mean) ? std::max<long>(count, 1) : 1;
        out->value[0] = static_cast<T>(total / static_cast<double>(denom));
        if (out->requires_grad) {
            auto tg = std::make_shared<std::vector<int>>(targets);
            tape_.push_back([logits, out, probs, tg, ignore_index, n, v, denom] {
                if (!logits->requires_grad) return;
                logits->ensure_grad();
                const T g = out->grad[0] / static_cast<T>(denom);
                for (int i = 0; i < n; ++i) {
                    if ((*tg)[i] == ignore_index) continue;
                    const T* pr = probs->data() + static_cast<long>(i) * v;
                    T* dl = logits->grad.data() + static_cast<long>(i) * v;
                    for (int c = 0; c < v; ++c) dl[c] += g * pr[c];
                    dl[(*tg)[i]] -= g;
                }
            });
        }
        return out;
    }

  private:
    Tensor<T> result_like(const Tensor<T>& exemplar, std::vector<int> shape,
                          std::initializer_list<Tensor<T>> inputs) {
        (void)exemplar;
        auto out = make_tensor<T>(std::move(shape));
        bool need = false;
        if (grad_enabled_)
            for (const auto& in : inputs) need = need || in->requires_grad;
        out->requires_grad = need;
        if (need) out->ensure_grad();
        return out;
    }

    // C[m x n] += A[m x k] . B[k x n]; i-k-j order so the inner loop runs
    // over contiguous rows of B and C, with k unrolled four wide to cut
    // C-row traffic.
    static void gemm(const T* a, const T* b, T* c, int m, int k, int n) {
        parallel_for(m, 2L * k * n, [=](long r0, long r1) {
            for (long i = r0; i < r1; ++i) {
                T* __restrict ci = c + i * n;
                const T* ai = a + i * k;
                int kk = 0;
                for (; kk + 4 <= k; kk += 4) {
                    const T a0 = ai[kk], a1 = ai[kk + 1], a2 = ai[kk + 2], a3 = ai[kk + 3];
                    const T* __restrict b0 = b + static_cast<long>(kk) * n;
                    const T* __restrict b1 = b0 + n;
                    const T* __restrict b2 = b1 + n;
                    const T* __restrict b3 = b2 + n;
                    for (int j = 0; j < n; ++j)
                        ci[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
                }
                for (; kk < k; ++kk) {
                    const T aik = ai[kk];
                    if (aik == T(0)) continue;
                    const T* __restrict bk = b + static_cast<long>(kk) * n;
                    for (int j = 0; j < n; ++j) ci[j] += aik * bk[j];
                }
            }
        });
    }

    std::vector<std::function<void()>> tape_;
    bool grad_enabled_ = true;
};

inline long count_non_ignored(const std::vector<int>& targets, int ignore_index) {
    long n = 0;
    for (int t : targets)
        if (t != ignore_index) ++n;
    return n;
}

template <typename T>
void zero_grads(const std::vector<Tensor<T>>& params) {
    for (const auto& p : params) {
        p->ensure_grad();
        p->zero_grad();
    }
}

// Compares analytic gradients already stored on `params` against central
// finite differences of `forward_loss`, over `samples_per_tensor` coordinates
// sampled per tensor. The numeric side only re-evaluates the forward
// function, so it is independent of the backward implementation.
inline double finite_diff_check(const std::function<double()>& forward_loss,
                                const std::vector<Tensor<double>>& params, double eps,
                                int samples_per_tensor, Rng& rng) {
    double max_rel = 0.0;
    for (const auto& p : params) {
        const long n = p->size();
        const int samples = static_cast<int>(std::min<long>(n, samples_per_tensor));
        for (int s = 0; s < samples; ++s) {
            const long idx = (n <= samples_per_tensor)
                                 ? s
                                 : static_cast<long>(rng.uniform_int(static_cast<std::uint64_t>(n)));
            const double saved = p->value[idx];
            p->value[idx] = saved + eps;
            const double up = forward_loss();
            p->value[idx] = saved - eps;
            const double down = forward_loss();
            p->value[idx] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = p->grad.empty() ? 0.0 : p->grad[idx];
            const double rel =
                std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

} // namespace glosskit
