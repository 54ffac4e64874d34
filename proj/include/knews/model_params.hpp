#pragma once
// Builds the full trainable parameter set. Registration order is fixed; it
// determines initialization draws, checkpoint layout and optimizer walks.

#include <string>

#include "model_config.hpp"
#include "params.hpp"
#include "records.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace knews {

template <typename T>
ParamRegistry<T> init_model_params(const ModelConfig& cfg, const Tensor<float>& word_vectors,
                                   const Tensor<float>& entity_vectors, uint64_t seed) {
    cfg.validate();
    if (word_vectors.cols != cfg.word_dim) throw std::invalid_argument("word vector width != word_dim");
    if (entity_vectors.cols != cfg.entity_dim) throw std::invalid_argument("entity vector width != entity_dim");
    Rng rng(mix64(seed, 0x706172616dULL));
    ParamRegistry<T> reg;
    auto mat = [&](const std::string& name, int r, int c) {
        Tensor<T> t(r, c);
        glorot_fill(t, rng);
        reg.add(name, std::move(t));
    };

    const int dk = cfg.entity_dim, dt = cfg.semantic_dim, dn = cfg.news_dim, dq = cfg.query_dim;
    const int dg = cfg.word_dim;

    mat("fusion.P_n", dn, dt + dk);

    for (int l = 1; l <= cfg.gcat_layers; ++l) {
        const std::string gl = "gat.l" + std::to_string(l);
        mat(gl + ".W", dk, dk);
        mat(gl + ".a_self", dk, 1);
        mat(gl + ".a_neigh", dk, 1);
        const std::string cl = "gcat.l" + std::to_string(l);
        const int hd = dk / cfg.entity_heads;
        for (int h = 0; h < cfg.entity_heads; ++h) {
            const std::string hp = cl + ".attn.h" + std::to_string(h);
            mat(hp + ".Wq", hd, dk);
            mat(hp + ".Wk", hd, dk);
            mat(hp + ".Wv", hd, dk);
        }
        mat(cl + ".W_c", dk, dk);
        mat(cl + ".W_s", dq, dk);
        mat(cl + ".W_h", dq, dk);
        mat(cl + ".q", dq, 1);
        mat(cl + ".P_e", dk, 2 * dk);
    }

    mat("ent_coattn.W_c", dk, dk);
    mat("ent_coattn.W_s", dq, dk);
    mat("ent_coattn.W_h", dq, dk);
    mat("ent_coattn.q", dq, 1);

    mat("sem.cnn.F", dt, 3 * dg);
    const int shd = dt / cfg.semantic_heads;
    for (int h = 0; h < cfg.semantic_heads; ++h) {
        const std::string hp = "sem.attn.h" + std::to_string(h);
        mat(hp + ".Wq", shd, dg);
        mat(hp + ".Wk", shd, dg);
        mat(hp + ".Wv", shd, dg);
    }
    mat("sem_coattn.W_c", dt, dt);
    mat("sem_coattn.W_s", dq, dt);
    mat("sem_coattn.W_h", dq, dt);
    mat("sem_coattn.q", dq, 1);

    mat("news_coattn.W_c", dn, dn);
    mat("news_coattn.W_s", dq, dn);
    mat("news_coattn.W_h", dq, dn);
    mat("news_coattn.q", dq, 1);

    reg.add("embed.word", word_vectors.template cast<T>(), /*frozen=*/false);
    reg.add("embed.entity", entity_vectors.template cast<T>(), /*frozen=*/true);
    return reg;
}

template <typename T>
uint64_t params_fingerprint(const ParamRegistry<T>& reg) {
    uint64_t h = 1469598103934665603ULL;
    for (const auto& name : reg.names()) {
        for (char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        const Tensor<T>& t = reg.value(name);
        for (T v : t.data) {
            const auto* p = reinterpret_cast<const unsigned char*>(&v);
            for (size_t b = 0; b < sizeof(T); ++b) {
                h ^= p[b];
                h *= 1099511628211ULL;
            }
        }
    }
    return h;
}

}  // namespace knews
