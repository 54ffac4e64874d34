#pragma once
// Precomputed per-news contextual words (H) and entity summaries (M), stored
// in the tensor archive format. The cache is tied to both the news set and
// the exact parameters it was computed from; forward passes that consume it
// reproduce cache-free results bit for bit because the cached values come out
// of the same kernels.

#include <string>

#include "checkpoint.hpp"
#include "matcher.hpp"
#include "model_params.hpp"
#include "parallel.hpp"

namespace knews {

struct CacheStale : std::runtime_error {
    explicit CacheStale(const std::string& msg) : std::runtime_error(msg) {}
};

template <typename T>
PrecomputedHm precompute_hm(const Dataset& ds, const ParamRegistry<T>& params, const ModelConfig& cfg,
                            int threads = 1) {
    if (ds.news.size() == 0) throw std::invalid_argument("precompute: empty news set");
    PrecomputedHm out;
    out.H.resize(ds.news.size());
    out.M.resize(ds.news.size());
    out.news_hash = news_set_hash(ds.news);
    out.params_hash = params_fingerprint(params);
    parallel_for(ds.news.size(), threads, [&](int64_t lo, int64_t hi, int) {
        for (int64_t i = lo; i < hi; ++i) {
            Tape<T> tape(false);
            ForwardContext<T> ctx(tape, params, nullptr, cfg, ds.news, ds.kg);

            const auto& sem = ctx.semantic(static_cast<int>(i));
            const Tensor<T>& H = tape.value(sem.X);
            Tensor<float> Hfull(cfg.semantic_dim, cfg.max_title_words);
            for (int r = 0; r < H.rows; ++r)
                for (int c = 0; c < H.cols; ++c) Hfull.at(r, c) = static_cast<float>(H.at(r, c));
            out.H[i] = std::move(Hfull);

            const auto& know = ctx.knowledge(static_cast<int>(i));
            const Tensor<T>& M = tape.value(know.M);
            Tensor<float> Mfull(cfg.entity_dim, cfg.max_entities);
            for (int r = 0; r < M.rows; ++r)
                for (int c = 0; c < M.cols; ++c) Mfull.at(r, c) = static_cast<float>(M.at(r, c));
            out.M[i] = std::move(Mfull);
        }
    });
    return out;
}

inline void save_hm_cache(const PrecomputedHm& hm, const NewsIndex& news, const std::string& path) {
    TensorArchive ar;
    ar.meta["kind"] = "hm_cache";
    ar.meta["news_hash"] = std::to_string(hm.news_hash);
    ar.meta["params_hash"] = std::to_string(hm.params_hash);
    for (size_t i = 0; i < hm.H.size(); ++i) {
        ar.add("H/" + news.at(static_cast<int>(i)).news_id, hm.H[i]);
        ar.add("M/" + news.at(static_cast<int>(i)).news_id, hm.M[i]);
    }
    ar.save(path);
}

// Load and validate against the current news set and parameter fingerprint.
template <typename T>
PrecomputedHm load_hm_cache(const std::string& path, const NewsIndex& news, const ParamRegistry<T>& params) {
    TensorArchive ar = TensorArchive::load(path);
    PrecomputedHm hm;
    hm.news_hash = ar.meta.count("news_hash") ? std::stoull(ar.meta.at("news_hash")) : 0;
    hm.params_hash = ar.meta.count("params_hash") ? std::stoull(ar.meta.at("params_hash")) : 0;
    if (hm.news_hash != news_set_hash(news))
        throw CacheStale("cache " + path + " was built for a different news set");
    if (hm.params_hash != params_fingerprint(params))
        throw CacheStale("cache " + path + " was built from different parameters");
    hm.H.resize(news.size());
    hm.M.resize(news.size());
    for (int i = 0; i < news.size(); ++i) {
        const std::string& id = news.at(i).news_id;
        if (!ar.has("H/" + id) || !ar.has("M/" + id)) throw CacheStale("cache missing entries for news " + id);
        hm.H[i] = ar.tensor<float>("H/" + id);
        hm.M[i] = ar.tensor<float>("M/" + id);
    }
    return hm;
}

}  // namespace knews
