#pragma once
// Pair-interactive matcher: fuses the semantic and knowledge encodings of
// every (clicked, candidate) pair, runs news-level co-attention over the
// history, and scores by dot product.
//
// A ForwardContext owns one tape and memoizes all per-news work inside that
// forward pass (contextual words plus their co-attention projections, graph
// summaries, self-attended neighborhoods), so histories shared by several
// candidates are encoded once. Padded columns are trimmed away up front;
// masked softmax semantics make this exact, and the padded value-level
// entry points below go through the same code with explicit masks.

#include <optional>
#include <unordered_map>
#include <vector>

#include "coattention.hpp"
#include "knowledge.hpp"
#include "model_config.hpp"
#include "records.hpp"
#include "semantic.hpp"
#include "tape.hpp"

namespace knews {

// Optional precomputed per-news values (loaded from a cache archive).
struct PrecomputedHm {
    std::vector<Tensor<float>> H;  // [semantic_dim x max_title_words] per news
    std::vector<Tensor<float>> M;  // [entity_dim x max_entities] per news
    uint64_t news_hash = 0;
    uint64_t params_hash = 0;
};

template <typename T>
class ForwardContext {
  public:
    using Ix = typename Tape<T>::Ix;

    ForwardContext(Tape<T>& tape, const ParamRegistry<T>& params, GradStore<T>* grads,
                   const ModelConfig& cfg, const NewsIndex& news, const KnowledgeGraph& kg,
                   bool training = false, Rng* rng = nullptr, const PrecomputedHm* hm = nullptr)
        : tape_(tape), bind_(tape, params, grads), cfg_(cfg), news_(news), kg_(kg), training_(training),
          rng_(rng), hm_(hm) {}

    Binder<T>& binder() { return bind_; }

    // Contextual words plus co-attention projections, trimmed to real length.
    const CoattnSide<T>& semantic(int news_idx) {
        auto it = sem_.find(news_idx);
        if (it != sem_.end()) return it->second;
        const NewsRecord& rec = news_.at(news_idx);
        std::vector<int> toks;
        for (size_t i = 0; i < rec.token_ids.size(); ++i)
            if (rec.token_mask[i]) toks.push_back(rec.token_ids[i]);
        Ix H;
        if (hm_) {
            const Tensor<float>& full = hm_->H.at(news_idx);
            Tensor<T> trimmed(full.rows, static_cast<int>(toks.size()));
            for (int r = 0; r < trimmed.rows; ++r)
                for (int c = 0; c < trimmed.cols; ++c) trimmed.at(r, c) = static_cast<T>(full.at(r, c));
            H = tape_.constant(std::move(trimmed));
        } else {
            H = contextual_nodes(bind_, cfg_, toks, training_, rng_);
        }
        return sem_.emplace(news_idx, coattn_side(bind_, semantic_coattn_names(), H)).first->second;
    }

    struct KnowEntry {
        EntityNodes<T> nodes;
        Ix M = -1;
        std::vector<GcatLayerPre<T>> pre;  // per layer
        std::vector<Ix> WhM;               // per layer, this news acting as guide
    };

    const KnowEntry& knowledge(int news_idx) {
        auto it = know_.find(news_idx);
        if (it != know_.end()) return it->second;
        const NewsRecord& rec = news_.at(news_idx);
        KnowEntry entry;
        std::vector<int> ents;
        if (!cfg_.mask_entities)
            for (size_t i = 0; i < rec.entity_ids.size(); ++i)
                if (rec.entity_mask[i]) ents.push_back(rec.entity_ids[i]);
        entry.nodes.count = static_cast<int>(ents.size());
        const Tensor<T>& table = bind_.value("embed.entity");
        Tensor<T>* sink = bind_.sink("embed.entity");
        entry.nodes.entities = ents.empty() ? tape_.constant(Tensor<T>(cfg_.entity_dim, 0))
                                            : tape_.gather_rows_as_cols(&table, sink, ents);
        for (int eid : ents) {
            std::vector<int> nb;
            for (int j = 0; j < cfg_.neighbor_samples; ++j)
                if (kg_.neighbor_mask[eid][j]) nb.push_back(kg_.neighbor_table[eid][j]);
            entry.nodes.neighbors.push_back(nb.empty() ? tape_.constant(Tensor<T>(cfg_.entity_dim, 0))
                                                       : tape_.gather_rows_as_cols(&table, sink, nb));
        }

        if (hm_ && entry.nodes.count > 0) {
            const Tensor<float>& full = hm_->M.at(news_idx);
            Tensor<T> trimmed(full.rows, entry.nodes.count);
            for (int r = 0; r < trimmed.rows; ++r)
                for (int c = 0; c < trimmed.cols; ++c) trimmed.at(r, c) = static_cast<T>(full.at(r, c));
            entry.M = tape_.constant(std::move(trimmed));
        } else {
            entry.M = gat_nodes(bind_, cfg_, entry.nodes);
        }

        std::vector<Ix> neigh_in = entry.nodes.neighbors;
        for (int l = 1; l <= cfg_.gcat_layers; ++l) {
            entry.pre.push_back(gcat_precompute_layer(bind_, cfg_, l, neigh_in, entry.nodes.neighbor_mask));
            neigh_in = entry.pre.back().Ghat;
            entry.WhM.push_back(tape_.matmul(bind_(gcat_coattn_names(l).Wh), entry.M));
        }
        return know_.emplace(news_idx, std::move(entry)).first->second;
    }

    // Knowledge vectors for a (clicked, candidate) pair via the cached
    // per-news pieces.
    std::pair<Ix, Ix> knowledge_pair(int clicked_idx, int cand_idx) {
        const KnowEntry& cu = knowledge(clicked_idx);
        const KnowEntry& cc = knowledge(cand_idx);
        Ix Su = gcat_stack_cached(cu, cc);
        Ix Sc = gcat_stack_cached(cc, cu);
        CoattnSide<T> u = coattn_side(bind_, entity_coattn_names(), Su);
        CoattnSide<T> c = coattn_side(bind_, entity_coattn_names(), Sc);
        auto out = coattend_nodes(tape_, u, c, bind_(entity_coattn_names().q));
        return {out.pooled_u, out.pooled_c};
    }

    // Unified pair representations n_u, n_c.
    std::pair<Ix, Ix> encode_pair(int clicked_idx, int cand_idx) {
        const CoattnSide<T>& su = semantic(clicked_idx);
        const CoattnSide<T>& sc = semantic(cand_idx);
        auto sem = coattend_nodes(tape_, su, sc, bind_(semantic_coattn_names().q));
        auto [ku, kc] = knowledge_pair(clicked_idx, cand_idx);
        Ix P = bind_("fusion.P_n");
        Ix n_u = tape_.matmul(P, tape_.concat_rows(sem.pooled_u, ku));
        Ix n_c = tape_.matmul(P, tape_.concat_rows(sem.pooled_c, kc));
        return {n_u, n_c};
    }

    struct MatchNodes {
        Ix u = -1, c = -1, z = -1;
        Ix weights_u = -1, weights_c = -1;  // over real history positions
        std::vector<int> real_slots;        // padded history positions used
    };

    MatchNodes match(const UserHistory& user, int cand_idx) {
        MatchNodes out;
        std::vector<Ix> nu_cols, nc_cols;
        for (size_t i = 0; i < user.clicked.size(); ++i) {
            if (!user.history_mask[i]) continue;
            auto [nu, nc] = encode_pair(user.clicked[i], cand_idx);
            nu_cols.push_back(nu);
            nc_cols.push_back(nc);
            out.real_slots.push_back(static_cast<int>(i));
        }
        if (nu_cols.empty()) {
            out.u = tape_.constant(Tensor<T>(cfg_.news_dim, 1));
            out.c = tape_.constant(Tensor<T>(cfg_.news_dim, 1));
            out.z = tape_.constant(Tensor<T>::scalar(T(0)));
            return out;
        }
        Ix Nu = tape_.concat_cols(nu_cols);
        Ix Nc = tape_.concat_cols(nc_cols);
        auto res = coattend_block(bind_, CoattnNames::prefixed("news_coattn"), Nu, Nc);
        out.u = res.pooled_u;
        out.c = res.pooled_c;
        out.weights_u = res.weights_u;
        out.weights_c = res.weights_c;
        out.z = tape_.matmul(out.u, out.c, true);  // [1x1]
        return out;
    }

    // NCE loss node for one training sample (positive plus U negatives).
    Ix sample_loss(const UserHistory& user, int pos_idx, const std::vector<int>& neg_idx) {
        std::vector<Ix> zs;
        zs.push_back(match(user, pos_idx).z);
        for (int n : neg_idx) zs.push_back(match(user, n).z);
        Ix zvec = tape_.concat_cols(zs);  // [1 x (U+1)]
        return tape_.sub(tape_.logsumexp(zvec), zs[0]);
    }

  private:
    Ix gcat_stack_cached(const KnowEntry& center, const KnowEntry& guide) {
        if (center.nodes.count == 0) return center.nodes.entities;
        Ix reps = center.nodes.entities;
        std::vector<uint8_t> guide_mask;  // trimmed: all guide entities live
        for (int l = 1; l <= cfg_.gcat_layers; ++l)
            reps = gcat_aggregate_layer(bind_, l, center.pre[l - 1], guide.WhM[l - 1], guide_mask,
                                        guide.M, reps, center.nodes.neighbor_mask);
        return reps;
    }

    Tape<T>& tape_;
    Binder<T> bind_;
    const ModelConfig& cfg_;
    const NewsIndex& news_;
    const KnowledgeGraph& kg_;
    bool training_;
    Rng* rng_;
    const PrecomputedHm* hm_;
    std::unordered_map<int, CoattnSide<T>> sem_;
    std::unordered_map<int, KnowEntry> know_;
};

// ---- value-level interface ----

template <typename T>
struct PairEncoding {
    Tensor<T> n_u, n_c;  // [news_dim x 1]
};

template <typename T>
struct MatchResult {
    Tensor<T> u, c;               // [news_dim x 1]
    T z = T(0);
    Tensor<T> weights_u, weights_c;  // [history_clicks x 1], zero on masked slots
};

template <typename T>
PairEncoding<T> encode_pair(const Dataset& ds, const ParamRegistry<T>& params, const ModelConfig& cfg,
                            int clicked_idx, int cand_idx, const PrecomputedHm* hm = nullptr) {
    Tape<T> tape(false);
    ForwardContext<T> ctx(tape, params, nullptr, cfg, ds.news, ds.kg, false, nullptr, hm);
    auto [nu, nc] = ctx.encode_pair(clicked_idx, cand_idx);
    return {tape.value(nu), tape.value(nc)};
}

template <typename T>
MatchResult<T> match(const Dataset& ds, const ParamRegistry<T>& params, const ModelConfig& cfg,
                     const UserHistory& user, int cand_idx, const PrecomputedHm* hm = nullptr) {
    Tape<T> tape(false);
    ForwardContext<T> ctx(tape, params, nullptr, cfg, ds.news, ds.kg, false, nullptr, hm);
    auto m = ctx.match(user, cand_idx);
    MatchResult<T> out;
    out.u = tape.value(m.u);
    out.c = tape.value(m.c);
    out.z = tape.value(m.z).data[0];
    out.weights_u = Tensor<T>(static_cast<int>(user.clicked.size()), 1);
    out.weights_c = Tensor<T>(static_cast<int>(user.clicked.size()), 1);
    for (size_t i = 0; i < m.real_slots.size(); ++i) {
        out.weights_u.at(m.real_slots[i], 0) = tape.value(m.weights_u).at(static_cast<int>(i), 0);
        out.weights_c.at(m.real_slots[i], 0) = tape.value(m.weights_c).at(static_cast<int>(i), 0);
    }
    return out;
}

// Scores for every candidate of one impression, sharing per-news work.
template <typename T>
std::vector<double> score_impression(const Dataset& ds, const ParamRegistry<T>& params,
                                     const ModelConfig& cfg, const UserHistory& user,
                                     const std::vector<int>& cand_idx, const PrecomputedHm* hm = nullptr) {
    if (cand_idx.empty()) throw std::invalid_argument("score_impression: empty candidate list");
    Tape<T> tape(false);
    ForwardContext<T> ctx(tape, params, nullptr, cfg, ds.news, ds.kg, false, nullptr, hm);
    std::vector<double> out;
    out.reserve(cand_idx.size());
    for (int c : cand_idx) out.push_back(static_cast<double>(tape.value(ctx.match(user, c).z).data[0]));
    return out;
}

}  // namespace knews
