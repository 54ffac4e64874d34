#pragma once
// Semantic co-encoder: per-news contextual word representations from a
// width-3 convolution (local context) added to one masked multi-head
// self-attention layer (global context), then pairwise word-level
// co-attention.

#include <cmath>
#include <string>
#include <vector>

#include "coattention.hpp"
#include "model_config.hpp"
#include "records.hpp"
#include "rng.hpp"
#include "tape.hpp"

namespace knews {

// Scaled dot-product multi-head self-attention over columns of X. Heads read
// param names "<prefix>.h<i>.Wq/Wk/Wv" shaped [head_dim x in_dim]; outputs
// concatenate to [heads*head_dim x n]. Masked positions are excluded as keys.
template <typename T>
typename Tape<T>::Ix self_attention(Binder<T>& bind, const std::string& prefix, int heads,
                                    typename Tape<T>::Ix X, const std::vector<uint8_t>& key_mask = {}) {
    Tape<T>& tp = bind.tape();
    using Ix = typename Tape<T>::Ix;
    std::vector<Ix> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        const std::string hp = prefix + ".h" + std::to_string(h);
        Ix Q = tp.matmul(bind(hp + ".Wq"), X);
        Ix K = tp.matmul(bind(hp + ".Wk"), X);
        Ix V = tp.matmul(bind(hp + ".Wv"), X);
        const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(tp.value(Q).rows)));
        Ix scores = tp.scale(tp.matmul(K, Q, true), inv_sqrt);  // [keys x queries]
        Ix probs = tp.softmax_cols(scores, key_mask);
        outs.push_back(tp.matmul(V, probs));
    }
    return heads == 1 ? outs[0] : tp.concat_rows_multi(outs);
}

// Contextual word representations H = conv(T) + selfattn(T) for one news;
// token ids are already trimmed to the real title (no PAD columns).
template <typename T>
typename Tape<T>::Ix contextual_nodes(Binder<T>& bind, const ModelConfig& cfg,
                                      const std::vector<int>& token_ids, bool training, Rng* rng,
                                      const std::vector<uint8_t>& mask = {}) {
    Tape<T>& tp = bind.tape();
    using Ix = typename Tape<T>::Ix;
    Ix emb = tp.gather_rows_as_cols(&bind.value("embed.word"), bind.sink("embed.word"), token_ids);
    if (training && cfg.dropout > 0) emb = tp.dropout(emb, static_cast<T>(cfg.dropout), *rng);
    Ix local = tp.relu(tp.matmul(bind("sem.cnn.F"), tp.unfold_w3(emb)));
    Ix global = self_attention(bind, "sem.attn", cfg.semantic_heads, emb, mask);
    Ix H = tp.add(local, global);
    if (training && cfg.dropout > 0) H = tp.dropout(H, static_cast<T>(cfg.dropout), *rng);
    if (!mask.empty()) H = tp.zero_cols(H, mask);
    return H;
}

inline CoattnNames semantic_coattn_names() { return CoattnNames::prefixed("sem_coattn"); }

// ---- value-level interface ----

template <typename T>
struct ContextualWords {
    Tensor<T> H;                // [semantic_dim x max_title_words]
    std::vector<uint8_t> mask;  // true on real words
};

// Evaluation-mode contextual representations over a padded record.
template <typename T>
ContextualWords<T> contextual_word_reps(const std::vector<int>& token_ids, const std::vector<uint8_t>& mask,
                                        const ParamRegistry<T>& params, const ModelConfig& cfg) {
    if (token_ids.size() != mask.size()) throw std::invalid_argument("contextual_word_reps: mask length mismatch");
    Tape<T> tape(false);
    Binder<T> bind(tape, params, nullptr);
    auto H = contextual_nodes(bind, cfg, token_ids, false, nullptr, mask);
    return {tape.value(H), mask};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> semantic_coencode(const ContextualWords<T>& Hu, const ContextualWords<T>& Hc,
                                                  const ParamRegistry<T>& params) {
    Tape<T> tape(false);
    Binder<T> bind(tape, params, nullptr);
    auto out = coattend_block(bind, semantic_coattn_names(), tape.constant(Hu.H), tape.constant(Hc.H),
                              Hu.mask, Hc.mask);
    return {tape.value(out.pooled_u), tape.value(out.pooled_c)};
}

}  // namespace knews
