#pragma once
// Generic co-attention: an affinity matrix between two column sets, softmax-
// normalized guidance in each direction, additive attention scores and a
// weighted pooling per side. Instantiated with independent parameter sets at
// the entity, word and news levels.

#include <string>
#include <unordered_map>
#include <vector>

#include "params.hpp"
#include "tape.hpp"

namespace knews {

// Creates parameter leaf nodes on demand; one node per parameter per tape so
// every use shares the same gradient accumulator.
template <typename T>
class Binder {
  public:
    using Ix = typename Tape<T>::Ix;

    Binder(Tape<T>& tape, const ParamRegistry<T>& params, GradStore<T>* grads)
        : tape_(tape), params_(params), grads_(grads) {}

    Ix operator()(const std::string& name) {
        auto it = cache_.find(name);
        if (it != cache_.end()) return it->second;
        Tensor<T>* sink = grads_ ? grads_->sink(name) : nullptr;
        Ix ix = tape_.param(&params_.value(name), sink);
        cache_.emplace(name, ix);
        return ix;
    }

    const Tensor<T>& value(const std::string& name) const { return params_.value(name); }
    Tensor<T>* sink(const std::string& name) { return grads_ ? grads_->sink(name) : nullptr; }
    Tape<T>& tape() { return tape_; }

  private:
    Tape<T>& tape_;
    const ParamRegistry<T>& params_;
    GradStore<T>* grads_;
    std::unordered_map<std::string, Ix> cache_;
};

struct CoattnNames {
    std::string Wc, Ws, Wh, q;
    static CoattnNames prefixed(const std::string& p) { return {p + ".W_c", p + ".W_s", p + ".W_h", p + ".q"}; }
};

// One side of a co-attention: the columns plus the three linear projections
// that depend only on this side (cacheable per news).
template <typename T>
struct CoattnSide {
    using Ix = typename Tape<T>::Ix;
    Ix X;    // [d x P]
    Ix WcX;  // [d x P]
    Ix WsX;  // [d_q x P]
    Ix WhX;  // [d_q x P]
    std::vector<uint8_t> mask;  // empty = all positions live
};

template <typename T>
struct CoattnNodes {
    using Ix = typename Tape<T>::Ix;
    Ix pooled_u, pooled_c;    // [d x 1]
    Ix weights_u, weights_c;  // [P x 1], [Q x 1]
};

template <typename T>
CoattnSide<T> coattn_side(Binder<T>& bind, const CoattnNames& n, typename Tape<T>::Ix X,
                          std::vector<uint8_t> mask = {}) {
    Tape<T>& tp = bind.tape();
    return CoattnSide<T>{X, tp.matmul(bind(n.Wc), X), tp.matmul(bind(n.Ws), X), tp.matmul(bind(n.Wh), X),
                         std::move(mask)};
}

template <typename T>
CoattnNodes<T> coattend_nodes(Tape<T>& tp, const CoattnSide<T>& u, const CoattnSide<T>& c,
                              typename Tape<T>::Ix q) {
    using Ix = typename Tape<T>::Ix;
    // affinity: C = Xc^T Wc Xu, rows indexed by c positions
    Ix C = tp.matmul(c.X, u.WcX, true);
    Ix fC = tp.softmax_cols(C, c.mask);
    Ix Au = tp.tanh_op(tp.add(u.WsX, tp.matmul(c.WhX, fC)));
    Ix wu = tp.softmax_cols(tp.transpose(tp.matmul(q, Au, true)), u.mask);
    Ix fCt = tp.softmax_cols(tp.transpose(C), u.mask);
    Ix Ac = tp.tanh_op(tp.add(c.WsX, tp.matmul(u.WhX, fCt)));
    Ix wc = tp.softmax_cols(tp.transpose(tp.matmul(q, Ac, true)), c.mask);
    return {tp.matmul(u.X, wu), tp.matmul(c.X, wc), wu, wc};
}

// Full block when per-side projections are not precomputed.
template <typename T>
CoattnNodes<T> coattend_block(Binder<T>& bind, const CoattnNames& names, typename Tape<T>::Ix Xu,
                              typename Tape<T>::Ix Xc, std::vector<uint8_t> mask_u = {},
                              std::vector<uint8_t> mask_c = {}) {
    CoattnSide<T> u = coattn_side(bind, names, Xu, std::move(mask_u));
    CoattnSide<T> c = coattn_side(bind, names, Xc, std::move(mask_c));
    return coattend_nodes(bind.tape(), u, c, bind(names.q));
}

// ---- value-level interface ----

template <typename T>
struct CoAttentionParams {
    Tensor<T> Wc;  // [d x d]
    Tensor<T> Ws;  // [d_q x d]
    Tensor<T> Wh;  // [d_q x d]
    Tensor<T> q;   // [d_q x 1]
};

template <typename T>
struct CoAttentionOutput {
    Tensor<T> weights_u, weights_c;  // [P x 1], [Q x 1]
    Tensor<T> pooled_u, pooled_c;    // [d x 1]
};

template <typename T>
CoAttentionOutput<T> coattend(const Tensor<T>& Xu, const Tensor<T>& Xc, const std::vector<uint8_t>& mask_u,
                              const std::vector<uint8_t>& mask_c, const CoAttentionParams<T>& p) {
    const int d = Xu.rows;
    if (Xc.rows != d || p.Wc.rows != d || p.Wc.cols != d || p.Ws.cols != d || p.Wh.cols != d ||
        p.Ws.rows != p.q.rows || p.Wh.rows != p.q.rows)
        throw std::invalid_argument("coattend: dimension mismatch between inputs and parameters");
    if (!mask_u.empty() && static_cast<int>(mask_u.size()) != Xu.cols)
        throw std::invalid_argument("coattend: mask_u length mismatch");
    if (!mask_c.empty() && static_cast<int>(mask_c.size()) != Xc.cols)
        throw std::invalid_argument("coattend: mask_c length mismatch");

    ParamRegistry<T> reg;
    reg.add("co.W_c", p.Wc);
    reg.add("co.W_s", p.Ws);
    reg.add("co.W_h", p.Wh);
    reg.add("co.q", p.q);
    Tape<T> tape(false);
    Binder<T> bind(tape, reg, nullptr);
    auto out = coattend_block(bind, CoattnNames::prefixed("co"), tape.constant(Xu), tape.constant(Xc),
                              mask_u, mask_c);
    return {tape.value(out.weights_u), tape.value(out.weights_c), tape.value(out.pooled_u),
            tape.value(out.pooled_c)};
}

}  // namespace knews
