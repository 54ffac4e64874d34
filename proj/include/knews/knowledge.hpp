#pragma once
// Knowledge co-encoder. Per news: a stacked graph-attention pass summarizes
// each entity from its sampled neighbors; a stacked graph co-attention pass
// re-aggregates each entity's neighborhood guided by the other news's entity
// summaries; entity-level co-attention then pools both sides into one
// knowledge vector per news.
//
// Neighbor self-attention inputs are the raw entity embeddings at the first
// layer and the previous layer's self-attended neighbor representations on
// deeper stacks. The guide matrix is always the plain graph-attention output
// of the other news.

#include <string>
#include <vector>

#include "coattention.hpp"
#include "model_config.hpp"
#include "records.hpp"
#include "semantic.hpp"
#include "tape.hpp"

namespace knews {

inline std::string gat_name(int layer, const char* what) {
    return "gat.l" + std::to_string(layer) + "." + what;
}
inline std::string gcat_name(int layer, const char* what) {
    return "gcat.l" + std::to_string(layer) + "." + what;
}
inline CoattnNames gcat_coattn_names(int layer) {
    return CoattnNames::prefixed("gcat.l" + std::to_string(layer));
}
inline CoattnNames entity_coattn_names() { return CoattnNames::prefixed("ent_coattn"); }

// One news's entity inputs on a tape. Masks are empty when every column is
// live (the trimmed hot path).
template <typename T>
struct EntityNodes {
    using Ix = typename Tape<T>::Ix;
    Ix entities = -1;                            // [d_k x D]
    std::vector<Ix> neighbors;                   // per entity, [d_k x B_e]
    std::vector<uint8_t> entity_mask;            // size D or empty
    std::vector<std::vector<uint8_t>> neighbor_mask;  // per entity, size B_e or empty
    int count = 0;                               // D
};

// Additive graph attention, single head, leaky slope 0.2, self loop. Each
// layer re-expresses every node through the layer map; centers aggregate over
// self plus live neighbors, neighbors (whose own neighborhoods are out of
// scope) reduce to their transformed selves.
template <typename T>
typename Tape<T>::Ix gat_nodes(Binder<T>& bind, const ModelConfig& cfg, const EntityNodes<T>& in) {
    Tape<T>& tp = bind.tape();
    using Ix = typename Tape<T>::Ix;
    if (in.count == 0) return in.entities;  // [d_k x 0]

    Ix ents = in.entities;
    std::vector<Ix> neigh = in.neighbors;
    for (int l = 1; l <= cfg.gcat_layers; ++l) {
        Ix W = bind(gat_name(l, "W"));
        Ix a_self = bind(gat_name(l, "a_self"));
        Ix a_neigh = bind(gat_name(l, "a_neigh"));
        Ix WH = tp.matmul(W, ents);                       // [d_k x D]
        Ix s_center = tp.matmul(a_self, WH, true);        // [1 x D]
        Ix s_center_as_nb = tp.matmul(a_neigh, WH, true);  // [1 x D]
        std::vector<Ix> updated;
        updated.reserve(in.count);
        for (int e = 0; e < in.count; ++e) {
            Ix WN = tp.matmul(W, neigh[e]);               // [d_k x B_e]
            Ix s_nb = tp.matmul(a_neigh, WN, true);       // [1 x B_e]
            Ix scores = tp.concat_cols({tp.slice_cols(s_center_as_nb, e, 1), s_nb});
            scores = tp.leaky_relu(tp.add_scalar(scores, tp.slice_cols(s_center, e, 1)), static_cast<T>(0.2));
            std::vector<uint8_t> live;
            if (!in.neighbor_mask.empty() && !in.neighbor_mask[e].empty()) {
                live.push_back(1);  // self loop always live
                live.insert(live.end(), in.neighbor_mask[e].begin(), in.neighbor_mask[e].end());
            }
            Ix alpha = tp.softmax_cols(tp.transpose(scores), live);
            Ix WX = tp.concat_cols({tp.slice_cols(WH, e, 1), WN});
            updated.push_back(tp.matmul(WX, alpha));      // [d_k x 1]
            neigh[e] = WN;                                // neighbors advance by transformed self
        }
        ents = tp.concat_cols(updated);
    }
    return ents;
}

// Guide-independent per-layer pieces: self-attended neighbor representations
// and their match-attention projections.
template <typename T>
struct GcatLayerPre {
    using Ix = typename Tape<T>::Ix;
    std::vector<Ix> Ghat;      // per entity [d_k x B_e]
    std::vector<Ix> WcGhat;    // affinity projection, per entity
    std::vector<Ix> WsGhat;    // score projection, per entity
};

template <typename T>
GcatLayerPre<T> gcat_precompute_layer(Binder<T>& bind, const ModelConfig& cfg, int layer,
                                      const std::vector<typename Tape<T>::Ix>& neigh_in,
                                      const std::vector<std::vector<uint8_t>>& nb_mask) {
    Tape<T>& tp = bind.tape();
    GcatLayerPre<T> pre;
    const CoattnNames names = gcat_coattn_names(layer);
    for (size_t e = 0; e < neigh_in.size(); ++e) {
        std::vector<uint8_t> mask = nb_mask.empty() ? std::vector<uint8_t>{} : nb_mask[e];
        auto Ghat = self_attention(bind, gcat_name(layer, "attn"), cfg.entity_heads, neigh_in[e], mask);
        pre.Ghat.push_back(Ghat);
        pre.WcGhat.push_back(tp.matmul(bind(names.Wc), Ghat));
        pre.WsGhat.push_back(tp.matmul(bind(names.Ws), Ghat));
    }
    return pre;
}

// Guided aggregation of one layer: relevance of each self-attended neighbor
// to the guide entities, match-aware attention, pooling, then the projection
// of [pooled ; previous rep] back to entity width.
template <typename T>
typename Tape<T>::Ix gcat_aggregate_layer(Binder<T>& bind, int layer, const GcatLayerPre<T>& pre,
                                          typename Tape<T>::Ix guide_WhM,
                                          const std::vector<uint8_t>& guide_mask,
                                          typename Tape<T>::Ix guide_M, typename Tape<T>::Ix prev_reps,
                                          const std::vector<std::vector<uint8_t>>& nb_mask) {
    Tape<T>& tp = bind.tape();
    using Ix = typename Tape<T>::Ix;
    const CoattnNames names = gcat_coattn_names(layer);
    const int count = static_cast<int>(pre.Ghat.size());
    Ix q = bind(names.q);
    Ix P_e = bind(gcat_name(layer, "P_e"));
    std::vector<Ix> out_cols;
    out_cols.reserve(count);
    for (int e = 0; e < count; ++e) {
        Ix I = tp.matmul(guide_M, pre.WcGhat[e], true);   // [D_guide x B_e]
        Ix fI = tp.softmax_cols(I, guide_mask);
        Ix scores = tp.tanh_op(tp.add(pre.WsGhat[e], tp.matmul(guide_WhM, fI)));
        Ix v = tp.matmul(q, scores, true);                // [1 x B_e]
        std::vector<uint8_t> mask = nb_mask.empty() ? std::vector<uint8_t>{} : nb_mask[e];
        Ix lam = tp.softmax_cols(tp.transpose(v), std::move(mask));
        Ix pooled = tp.matmul(pre.Ghat[e], lam);          // [d_k x 1]
        out_cols.push_back(tp.matmul(P_e, tp.concat_rows(pooled, tp.slice_cols(prev_reps, e, 1))));
    }
    return tp.concat_cols(out_cols);
}

// Full guided stack for one news: layer 1 attends over raw neighbor
// embeddings, deeper layers over the previous layer's self-attended
// representations; the previous center rep starts at the raw embeddings.
template <typename T>
typename Tape<T>::Ix gcat_stack_nodes(Binder<T>& bind, const ModelConfig& cfg, const EntityNodes<T>& center,
                                      typename Tape<T>::Ix guide_M, const std::vector<uint8_t>& guide_mask) {
    Tape<T>& tp = bind.tape();
    using Ix = typename Tape<T>::Ix;
    if (center.count == 0) return center.entities;
    std::vector<Ix> neigh_in = center.neighbors;
    Ix reps = center.entities;
    for (int l = 1; l <= cfg.gcat_layers; ++l) {
        auto pre = gcat_precompute_layer(bind, cfg, l, neigh_in, center.neighbor_mask);
        Ix WhM = tp.matmul(bind(gcat_coattn_names(l).Wh), guide_M);
        reps = gcat_aggregate_layer(bind, l, pre, WhM, guide_mask, guide_M, reps, center.neighbor_mask);
        neigh_in = pre.Ghat;
    }
    return reps;
}

// Interactive knowledge encoding of a (clicked, candidate) pair.
template <typename T>
CoattnNodes<T> knowledge_pair_nodes(Binder<T>& bind, const ModelConfig& cfg, const EntityNodes<T>& clicked,
                                    const EntityNodes<T>& candidate) {
    Tape<T>& tp = bind.tape();
    typename Tape<T>::Ix Mu = gat_nodes(bind, cfg, clicked);
    typename Tape<T>::Ix Mc = gat_nodes(bind, cfg, candidate);
    typename Tape<T>::Ix Su = gcat_stack_nodes(bind, cfg, clicked, Mc, candidate.entity_mask);
    typename Tape<T>::Ix Sc = gcat_stack_nodes(bind, cfg, candidate, Mu, clicked.entity_mask);
    CoattnSide<T> u = coattn_side(bind, entity_coattn_names(), Su, clicked.entity_mask);
    CoattnSide<T> c = coattn_side(bind, entity_coattn_names(), Sc, candidate.entity_mask);
    return coattend_nodes(tp, u, c, bind(entity_coattn_names().q));
}

// ---- value-level interface ----

template <typename T>
struct EntityBatch {
    Tensor<T> entities;                // [d_k x D]
    Tensor<T> neighbors;               // [d_k x D*B]; neighbor j of entity e at column e*B + j
    std::vector<uint8_t> entity_mask;  // size D
    std::vector<uint8_t> neighbor_mask;  // size D*B
    int B = 0;
};

template <typename T>
EntityBatch<T> make_entity_batch(const NewsRecord& rec, const KnowledgeGraph& kg, const ModelConfig& cfg) {
    const int D = cfg.max_entities, B = cfg.neighbor_samples, dk = cfg.entity_dim;
    EntityBatch<T> b;
    b.B = B;
    b.entities = Tensor<T>(dk, D);
    b.neighbors = Tensor<T>(dk, D * B);
    b.entity_mask = rec.entity_mask;
    b.neighbor_mask.assign(static_cast<size_t>(D) * B, 0);
    for (int e = 0; e < D; ++e) {
        const int eid = rec.entity_ids[e];
        for (int r = 0; r < dk; ++r) b.entities.at(r, e) = static_cast<T>(kg.entity_vectors.at(eid, r));
        if (!rec.entity_mask[e]) continue;
        for (int j = 0; j < B; ++j) {
            const int nid = kg.neighbor_table[eid][j];
            b.neighbor_mask[static_cast<size_t>(e) * B + j] = kg.neighbor_mask[eid][j];
            for (int r = 0; r < dk; ++r) b.neighbors.at(r, e * B + j) = static_cast<T>(kg.entity_vectors.at(nid, r));
        }
    }
    return b;
}

template <typename T>
EntityNodes<T> entity_nodes_from_batch(Tape<T>& tape, const EntityBatch<T>& b) {
    EntityNodes<T> n;
    n.count = b.entities.cols;
    n.entities = tape.constant(b.entities);
    n.entity_mask = b.entity_mask;
    for (int e = 0; e < n.count; ++e) {
        Tensor<T> cols(b.neighbors.rows, b.B);
        std::vector<uint8_t> mask(b.B);
        for (int j = 0; j < b.B; ++j) {
            mask[j] = b.neighbor_mask[static_cast<size_t>(e) * b.B + j];
            for (int r = 0; r < b.neighbors.rows; ++r) cols.at(r, j) = b.neighbors.at(r, e * b.B + j);
        }
        n.neighbors.push_back(tape.constant(std::move(cols)));
        n.neighbor_mask.push_back(std::move(mask));
    }
    return n;
}

template <typename T>
Tensor<T> gat_encode(const EntityBatch<T>& batch, const ParamRegistry<T>& params, const ModelConfig& cfg) {
    Tape<T> tape(false);
    Binder<T> bind(tape, params, nullptr);
    auto nodes = entity_nodes_from_batch(tape, batch);
    return tape.value(gat_nodes(bind, cfg, nodes));
}

// Single co-attention layer over raw neighbor embeddings with explicit
// previous representations; layer selects the parameter set.
template <typename T>
Tensor<T> gcat_layer(const EntityBatch<T>& batch, const Tensor<T>& guide_M,
                     const std::vector<uint8_t>& guide_mask, const Tensor<T>& prev_reps, int layer,
                     const ParamRegistry<T>& params, const ModelConfig& cfg) {
    Tape<T> tape(false);
    Binder<T> bind(tape, params, nullptr);
    auto nodes = entity_nodes_from_batch(tape, batch);
    auto pre = gcat_precompute_layer(bind, cfg, layer, nodes.neighbors, nodes.neighbor_mask);
    auto gM = tape.constant(guide_M);
    auto WhM = tape.matmul(bind(gcat_coattn_names(layer).Wh), gM);
    auto out = gcat_aggregate_layer(bind, layer, pre, WhM, guide_mask, gM, tape.constant(prev_reps),
                                    nodes.neighbor_mask);
    return tape.value(out);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> knowledge_coencode(const EntityBatch<T>& clicked, const EntityBatch<T>& candidate,
                                                   const ParamRegistry<T>& params, const ModelConfig& cfg) {
    Tape<T> tape(false);
    Binder<T> bind(tape, params, nullptr);
    auto cu = entity_nodes_from_batch(tape, clicked);
    auto cc = entity_nodes_from_batch(tape, candidate);
    auto out = knowledge_pair_nodes(bind, cfg, cu, cc);
    return {tape.value(out.pooled_u), tape.value(out.pooled_c)};
}

}  // namespace knews
