#pragma once
// Reverse-mode gradient tape over a fixed operator set. A tape records one
// forward computation; backward() walks the nodes in reverse and accumulates
// gradients. Parameter leaves flush their gradient into an external sink so
// several tapes (one per sample, possibly on different threads) can feed
// separate accumulators.
//
// Gradient buffers are allocated lazily: a node that never receives a
// gradient contributes nothing and is skipped on the backward walk.

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace knews {

template <typename T>
class Tape {
  public:
    using Ix = int32_t;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }
    size_t size() const { return nodes_.size(); }

    const Tensor<T>& value(Ix i) const { return nodes_[i].val; }
    const Tensor<T>& grad(Ix i) const { return nodes_[i].grad; }
    bool has_grad(Ix i) const { return nodes_[i].seen; }

    void reset() {
        nodes_.clear();
        backs_.clear();
    }

    Ix constant(Tensor<T> v) { return push(std::move(v)); }

    // Leaf whose gradient is added into *sink after backward. sink may be
    // null (e.g. frozen tables when no check is running).
    Ix param(const Tensor<T>* value, Tensor<T>* sink) {
        Ix i = push(Tensor<T>(*value));
        if (grad_enabled_ && sink) {
            backs_.push_back({i, [i, sink](Tape& t) {
                                  Node& n = t.nodes_[i];
                                  for (size_t k = 0; k < n.grad.data.size(); ++k) sink->data[k] += n.grad.data[k];
                              }});
        }
        return i;
    }

    // Gather rows of a [num_rows x d] table as columns of a [d x n] output.
    // Row 0 is the PAD row and never receives gradient, so it stays zero.
    Ix gather_rows_as_cols(const Tensor<T>* table, Tensor<T>* sink, std::vector<int> ids) {
        const int d = table->cols;
        const int n = static_cast<int>(ids.size());
        Tensor<T> out(d, n);
        for (int j = 0; j < n; ++j) {
            const int row = ids[j];
            if (row < 0 || row >= table->rows) throw std::out_of_range("gather: id out of table range");
            for (int r = 0; r < d; ++r) out.at(r, j) = table->at(row, r);
        }
        Ix i = push(std::move(out));
        if (grad_enabled_ && sink) {
            backs_.push_back({i, [i, sink, ids = std::move(ids)](Tape& t) {
                                  const Tensor<T>& g = t.nodes_[i].grad;
                                  for (int j = 0; j < static_cast<int>(ids.size()); ++j) {
                                      if (ids[j] == 0) continue;  // PAD row pinned at zero
                                      for (int r = 0; r < g.rows; ++r) sink->at(ids[j], r) += g.at(r, j);
                                  }
                              }});
        }
        return i;
    }

    Ix matmul(Ix a, Ix b, bool ta = false, bool tb = false) {
        Tensor<T> out;
        gemm(value(a), ta, value(b), tb, out, false);
        Ix i = push(std::move(out));
        record(i, [i, a, b, ta, tb](Tape& t) {
            const Tensor<T>& gc = t.nodes_[i].grad;
            // dA and dB for C = op(A) op(B)
            if (t.wants(a)) {
                Tensor<T>& ga = t.grad_buf(a);
                if (!ta && !tb) gemm(gc, false, t.value(b), true, ga, true);
                else if (!ta && tb) gemm(gc, false, t.value(b), false, ga, true);
                else if (ta && !tb) gemm(t.value(b), false, gc, true, ga, true);
                else gemm(t.value(b), true, gc, true, ga, true);
            }
            if (t.wants(b)) {
                Tensor<T>& gb = t.grad_buf(b);
                if (!ta && !tb) gemm(t.value(a), true, gc, false, gb, true);
                else if (!ta && tb) gemm(gc, true, t.value(a), false, gb, true);
                else if (ta && !tb) gemm(t.value(a), false, gc, false, gb, true);
                else gemm(gc, true, t.value(a), true, gb, true);
            }
        });
        return i;
    }

    Ix add(Ix a, Ix b) {
        if (!value(a).same_shape(value(b))) throw std::invalid_argument("add: shape mismatch");
        Tensor<T> out = value(a);
        out.add_inplace(value(b));
        Ix i = push(std::move(out));
        record(i, [i, a, b](Tape& t) {
            const Tensor<T>& g = t.nodes_[i].grad;
            if (t.wants(a)) t.grad_buf(a).add_inplace(g);
            if (t.wants(b)) t.grad_buf(b).add_inplace(g);
        });
        return i;
    }

    Ix sub(Ix a, Ix b) {
        if (!value(a).same_shape(value(b))) throw std::invalid_argument("sub: shape mismatch");
        Tensor<T> out = value(a);
        for (size_t k = 0; k < out.data.size(); ++k) out.data[k] -= value(b).data[k];
        Ix i = push(std::move(out));
        record(i, [i, a, b](Tape& t) {
            const Tensor<T>& g = t.nodes_[i].grad;
            if (t.wants(a)) t.grad_buf(a).add_inplace(g);
            if (t.wants(b)) {
                Tensor<T>& gb = t.grad_buf(b);
                for (size_t k = 0; k < g.data.size(); ++k) gb.data[k] -= g.data[k];
            }
        });
        return i;
    }

    // y = a + s, s a [1x1] scalar broadcast over every entry.
    Ix add_scalar(Ix a, Ix s) {
        Tensor<T> out = value(a);
        const T sv = value(s).data[0];
        for (T& v : out.data) v += sv;
        Ix i = push(std::move(out));
        record(i, [i, a, s](Tape& t) {
            const Tensor<T>& g = t.nodes_[i].grad;
            if (t.wants(a)) t.grad_buf(a).add_inplace(g);
            if (t.wants(s)) {
                T acc = T(0);
                for (T v : g.data) acc += v;
                t.grad_buf(s).data[0] += acc;
            }
        });
        return i;
    }

    Ix scale(Ix a, T c) {
        Tensor<T> out = value(a);
        for (T& v : out.data) v *= c;
        Ix i = push(std::move(out));
        record(i, [i, a, c](Tape& t) {
            if (!t.wants(a)) return;
            const Tensor<T>& g = t.nodes_[i].grad;
            Tensor<T>& ga = t.grad_buf(a);
            for (size_t k = 0; k < g.data.size(); ++k) ga.data[k] += c * g.data[k];
        });
        return i;
    }

    // Elementwise product with a constant tensor (dropout masks etc).
    Ix cmul(Ix a, Tensor<T> m) {
        if (!value(a).same_shape(m)) throw std::invalid_argument("cmul: shape mismatch");
        Tensor<T> out = value(a);
        for (size_t k = 0; k < out.data.size(); ++k) out.data[k] *= m.data[k];
        Ix i = push(std::move(out));
        record(i, [i, a, m = std::move(m)](Tape& t) {
            if (!t.wants(a)) return;
            const Tensor<T>& g = t.nodes_[i].grad;
            Tensor<T>& ga = t.grad_buf(a);
            for (size_t k = 0; k < g.data.size(); ++k) ga.data[k] += m.data[k] * g.data[k];
        });
        return i;
    }

    Ix tanh_op(Ix a) {
        Tensor<T> out = value(a);
        for (T& v : out.data) v = std::tanh(v);
        Ix i = push(std::move(out));
        record(i, [i, a](Tape& t) {
            if (!t.wants(a)) return;
            const Tensor<T>& g = t.nodes_[i].grad;
            const Tensor<T>& y = t.nodes_[i].val;
            Tensor<T>& ga = t.grad_buf(a);
            for (size_t k = 0; k < g.data.size(); ++k) ga.data[k] += (T(1) - y.data[k] * y.data[k]) * g.data[k];
        });
        return i;
    }

    Ix relu(Ix a) { return leaky_relu(a, T(0)); }

    Ix leaky_relu(Ix a, T slope) {
        Tensor<T> out = value(a);
        for (T& v : out.data) v = v > T(0) ? v : slope * v;
        Ix i = push(std::move(out));
        record(i, [i, a, slope](Tape& t) {
            if (!t.wants(a)) return;
            const Tensor<T>& g = t.nodes_[i].grad;
            const Tensor<T>& x = t.nodes_[a].val;
            Tensor<T>& ga = t.grad_buf(a);
            for (size_t k = 0; k < g.data.size(); ++k) ga.data[k] += (x.data[k] > T(0) ? T(1) : slope) * g.data[k];
        });
        return i;
    }

    Ix transpose(Ix a) {
        const Tensor<T>& x = value(a);
        Tensor<T> out(x.cols, x.rows);
        for (int r = 0; r < x.rows; ++r)
            for (int c = 0; c < x.cols; ++c) out.at(c, r) = x.at(r, c);
        Ix i = push(std::move(out));
        record(i, [i, a](Tape& t) {
            if (!t.wants(a)) return;
            const Tensor<T>& g = t.nodes_[i].grad;
            Tensor<T>& ga = t.grad_buf(a);
            for (int r = 0; r < g.rows; ++r)
                for (int c = 0; c < g.cols; ++c) ga.at(c, r) += g.at(r, c);
        });
        return i;
    }

    // Column-wise softmax over rows with an optional shared row mask. Masked
    // rows are exactly zero; fully masked columns come back all zero.
    Ix softmax_cols(Ix a, std::vector<uint8_t> row_mask = {}) {
        const std::vector<uint8_t>* mp = row_mask.empty() ? nullptr : &row_mask;
        Tensor<T> out = masked_softmax_columns(value(a), mp);
        Ix i = push(std::move(out));
        record(i, [i, a, row_mask = std::move(row_mask)](Tape& t) {
            if (!t.wants(a)) return;
            const Tensor<T>& g = t.nodes_[i].grad;
            const Tensor<T>& y = t.nodes_[i].val;
            Tensor<T>& ga = t.grad_buf(a);
            for (int j = 0; j < y.cols; ++j) {
                T s = T(0);
                for (int r = 0; r < y.rows; ++r) {
                    if (!row_mask.empty() && !row_mask[r]) continue;
                    s += y.at(r, j) * g.at(r, j);
                }
                for (int r = 0; r < y.rows; ++r) {
                    if (!row_mask.empty() && !row_mask[r]) continue;
                    ga.at(r, j) += y.at(r, j) * (g.at(r, j) - s);
                }
            }
        });
        return i;
    }

    // Zero out columns whose keep flag is false.
    Ix zero_cols(Ix a, std::vector<uint8_t> keep) {
        const Tensor<T>& x = value(a);
        if (static_cast<int>(keep.size()) != x.cols) throw std::invalid_argument("zero_cols: mask length mismatch");
        Tensor<T> out = x;
        for (int c = 0; c < x.cols; ++c)
            if (!keep[c])
                for (int r = 0; r < x.rows; ++r) out.at(r, c) = T(0);
        Ix i = push(std::move(out));
        record(i, [i, a, keep = std::move(keep)](Tape& t) {
            if (!t.wants(a)) return;
            const Tensor<T>& g = t.nodes_[i].grad;
            Tensor<T>& ga = t.grad_buf(a);
            for (int c = 0; c < g.cols; ++c)
                if (keep[c])
                    for (int r = 0; r < g.rows; ++r) ga.at(r, c) += g.at(r, c);
        });
        return i;
    }

    Ix concat_rows(Ix a, Ix b) {
        const Tensor<T>& xa = value(a);
        const Tensor<T>& xb = value(b);
        if (xa.cols != xb.cols) throw std::invalid_argument("concat_rows: column mismatch");
        Tensor<T> out(xa.rows + xb.rows, xa.cols);
        std::copy(xa.data.begin(), xa.data.end(), out.data.begin());
        std::copy(xb.data.begin(), xb.data.end(), out.data.begin() + xa.data.size());
        Ix i = push(std::move(out));
        record(i, [i, a, b, split = xa.rows](Tape& t) {
            const Tensor<T>& g = t.nodes_[i].grad;
            if (t.wants(a)) {
                Tensor<T>& ga = t.grad_buf(a);
                for (size_t k = 0; k < ga.data.size(); ++k) ga.data[k] += g.data[k];
            }
            if (t.wants(b)) {
                Tensor<T>& gb = t.grad_buf(b);
                const size_t off = static_cast<size_t>(split) * g.cols;
                for (size_t k = 0; k < gb.data.size(); ++k) gb.data[k] += g.data[off + k];
            }
        });
        return i;
    }

    Ix concat_rows_multi(const std::vector<Ix>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_rows_multi: empty");
        const int cols = value(parts[0]).cols;
        int total = 0;
        for (Ix p : parts) {
            if (value(p).cols != cols) throw std::invalid_argument("concat_rows_multi: column mismatch");
            total += value(p).rows;
        }
        Tensor<T> out(total, cols);
        size_t off = 0;
        for (Ix p : parts) {
            const Tensor<T>& x = value(p);
            std::copy(x.data.begin(), x.data.end(), out.data.begin() + off);
            off += x.data.size();
        }
        Ix i = push(std::move(out));
        record(i, [i, parts](Tape& t) {
            const Tensor<T>& g = t.nodes_[i].grad;
            size_t off = 0;
            for (Ix p : parts) {
                Tensor<T>& gp = t.grad_buf(p);
                for (size_t k = 0; k < gp.data.size(); ++k) gp.data[k] += g.data[off + k];
                off += gp.data.size();
            }
        });
        return i;
    }

    Ix concat_cols(const std::vector<Ix>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
        const int rows = value(parts[0]).rows;
        int total = 0;
        for (Ix p : parts) {
            if (value(p).rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
            total += value(p).cols;
        }
        Tensor<T> out(rows, total);
        int off = 0;
        for (Ix p : parts) {
            const Tensor<T>& x = value(p);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < x.cols; ++c) out.at(r, off + c) = x.at(r, c);
            off += x.cols;
        }
        Ix i = push(std::move(out));
        record(i, [i, parts](Tape& t) {
            const Tensor<T>& g = t.nodes_[i].grad;
            int off = 0;
            for (Ix p : parts) {
                const int w = t.value(p).cols;
                if (t.wants(p)) {
                    Tensor<T>& gp = t.grad_buf(p);
                    for (int r = 0; r < g.rows; ++r)
                        for (int c = 0; c < w; ++c) gp.at(r, c) += g.at(r, off + c);
                }
                off += w;
            }
        });
        return i;
    }

    Ix slice_cols(Ix a, int start, int n) {
        const Tensor<T>& x = value(a);
        if (start < 0 || n < 0 || start + n > x.cols) throw std::out_of_range("slice_cols: range");
        Tensor<T> out(x.rows, n);
        for (int r = 0; r < x.rows; ++r)
            for (int c = 0; c < n; ++c) out.at(r, c) = x.at(r, start + c);
        Ix i = push(std::move(out));
        record(i, [i, a, start, n](Tape& t) {
            if (!t.wants(a)) return;
            const Tensor<T>& g = t.nodes_[i].grad;
            Tensor<T>& ga = t.grad_buf(a);
            for (int r = 0; r < g.rows; ++r)
                for (int c = 0; c < n; ++c) ga.at(r, start + c) += g.at(r, c);
        });
        return i;
    }

    // im2col for a width-3 same-padded 1-D convolution over columns:
    // [d x M] -> [3d x M]; output column j stacks input columns j-1, j, j+1
    // (zeros beyond either end).
    Ix unfold_w3(Ix a) {
        const Tensor<T>& x = value(a);
        const int d = x.rows, m = x.cols;
        Tensor<T> out(3 * d, m);
        for (int j = 0; j < m; ++j)
            for (int k = -1; k <= 1; ++k) {
                const int src = j + k;
                if (src < 0 || src >= m) continue;
                for (int r = 0; r < d; ++r) out.at((k + 1) * d + r, j) = x.at(r, src);
            }
        Ix i = push(std::move(out));
        record(i, [i, a, d, m](Tape& t) {
            if (!t.wants(a)) return;
            const Tensor<T>& g = t.nodes_[i].grad;
            Tensor<T>& ga = t.grad_buf(a);
            for (int j = 0; j < m; ++j)
                for (int k = -1; k <= 1; ++k) {
                    const int src = j + k;
                    if (src < 0 || src >= m) continue;
                    for (int r = 0; r < d; ++r) ga.at(r, src) += g.at((k + 1) * d + r, j);
                }
        });
        return i;
    }

    // log(sum(exp(x))) over every entry -> [1x1], computed stably.
    Ix logsumexp(Ix a) {
        const Tensor<T>& x = value(a);
        if (x.empty()) throw std::invalid_argument("logsumexp: empty input");
        T mx = x.data[0];
        for (T v : x.data) mx = std::max(mx, v);
        T s = T(0);
        for (T v : x.data) s += std::exp(v - mx);
        Ix i = push(Tensor<T>::scalar(mx + std::log(s)));
        record(i, [i, a](Tape& t) {
            if (!t.wants(a)) return;
            const T g = t.nodes_[i].grad.data[0];
            const T lse = t.nodes_[i].val.data[0];
            const Tensor<T>& x = t.nodes_[a].val;
            Tensor<T>& ga = t.grad_buf(a);
            for (size_t k = 0; k < x.data.size(); ++k) ga.data[k] += g * std::exp(x.data[k] - lse);
        });
        return i;
    }

    // Inverted dropout; pass the training-mode RNG. Identity when p == 0.
    Ix dropout(Ix a, T p, Rng& rng) {
        if (p < T(0) || p >= T(1)) throw std::invalid_argument("dropout: p must be in [0,1)");
        if (p == T(0)) return a;
        const Tensor<T>& x = value(a);
        Tensor<T> mask(x.rows, x.cols);
        const T keep_scale = T(1) / (T(1) - p);
        for (T& v : mask.data) v = (rng.uniform() < static_cast<double>(p)) ? T(0) : keep_scale;
        return cmul(a, std::move(mask));
    }

    // Seeds d(root)/d(root) = seed and walks the recorded ops in reverse.
    void backward(Ix root, T seed = T(1)) {
        if (!grad_enabled_) throw std::logic_error("backward: tape built with gradients disabled");
        grad_buf(root).fill(seed);
        for (size_t k = backs_.size(); k-- > 0;) {
            if (nodes_[backs_[k].node].seen) backs_[k].fn(*this);
        }
    }

  private:
    struct Node {
        Tensor<T> val;
        Tensor<T> grad;
        bool seen = false;  // grad buffer touched
    };
    struct Back {
        Ix node;
        std::function<void(Tape&)> fn;
    };

    bool wants(Ix i) const { return grad_enabled_; (void)i; }

    Tensor<T>& grad_buf(Ix i) {
        Node& n = nodes_[i];
        if (!n.seen) {
            n.grad = Tensor<T>(n.val.rows, n.val.cols);
            n.seen = true;
        }
        return n.grad;
    }

    Ix push(Tensor<T> v) {
        nodes_.push_back(Node{std::move(v), Tensor<T>(), false});
        return static_cast<Ix>(nodes_.size() - 1);
    }

    void record(Ix i, std::function<void(Tape&)> fn) {
        if (grad_enabled_) backs_.push_back({i, std::move(fn)});
    }

    bool grad_enabled_;
    std::vector<Node> nodes_;
    std::vector<Back> backs_;
};

// Value-level inverted dropout: zeros with probability p in training mode and
// scales survivors by 1/(1-p); identity in evaluation mode.
template <typename T>
Tensor<T> dropout_apply(const Tensor<T>& x, T p, bool training, uint64_t seed) {
    if (p < T(0) || p >= T(1)) throw std::invalid_argument("dropout_apply: p must be in [0,1)");
    if (!training || p == T(0)) return x;
    Rng rng(mix64(seed, 0x64726f70ULL));
    Tensor<T> out = x;
    const T keep_scale = T(1) / (T(1) - p);
    for (T& v : out.data) v = (rng.uniform() < static_cast<double>(p)) ? T(0) : v * keep_scale;
    return out;
}

}  // namespace knews
