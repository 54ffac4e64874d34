#pragma once
// Model hyperparameters. Defaults are the full-size configuration; tests use
// scaled-down copies.

#include <stdexcept>
#include <string>

namespace knews {

struct ModelConfig {
    int max_title_words = 30;   // padded title length
    int max_entities = 5;       // padded entities per news
    int neighbor_samples = 10;  // sampled KG neighbors per entity
    int history_clicks = 50;    // padded click-history length
    int gcat_layers = 1;        // stacking depth of the graph encoders

    int word_dim = 300;      // pretrained word vector width
    int entity_dim = 100;    // pretrained entity vector width
    int semantic_dim = 400;  // contextual word representation width
    int news_dim = 400;      // fused news representation width
    int query_dim = 100;     // attention query width

    int semantic_heads = 10;
    int entity_heads = 5;
    double dropout = 0.2;

    bool mask_entities = false;  // ablation switch: treat every news as entity-less

    void validate() const {
        auto positive = [](int v, const char* what) {
            if (v < 1) throw std::invalid_argument(std::string("model config: ") + what + " must be >= 1");
        };
        positive(max_title_words, "max_title_words");
        positive(max_entities, "max_entities");
        positive(neighbor_samples, "neighbor_samples");
        positive(history_clicks, "history_clicks");
        positive(gcat_layers, "gcat_layers");
        positive(word_dim, "word_dim");
        positive(entity_dim, "entity_dim");
        positive(semantic_dim, "semantic_dim");
        positive(news_dim, "news_dim");
        positive(query_dim, "query_dim");
        positive(semantic_heads, "semantic_heads");
        positive(entity_heads, "entity_heads");
        if (gcat_layers > 3) throw std::invalid_argument("model config: gcat_layers must be in 1..3");
        if (semantic_dim % semantic_heads != 0)
            throw std::invalid_argument("model config: semantic_dim must be divisible by semantic_heads");
        if (entity_dim % entity_heads != 0)
            throw std::invalid_argument("model config: entity_dim must be divisible by entity_heads");
        if (dropout < 0.0 || dropout >= 1.0)
            throw std::invalid_argument("model config: dropout must be in [0,1)");
    }
};

}  // namespace knews
