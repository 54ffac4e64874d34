#pragma once
// Run configuration: a flat "key = value" text file (# comments) with a fixed
// schema. Unknown keys and malformed values are errors that name the field.
// canonical() emits every key in schema order with round-trip float
// formatting, so parse -> serialize is byte-stable.

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "model_config.hpp"

namespace knews {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct AppConfig {
    // data paths
    std::string news;
    std::string behaviors_train;
    std::string behaviors_val;
    std::string behaviors_test;
    std::string word_vectors;
    std::string entity_vectors;
    std::string kg_edges;

    ModelConfig model;

    // training
    int negatives = 4;
    double learning_rate = 5e-5;
    int batch_size = 16;
    int epochs = 20;
    int patience = 3;
    uint64_t seed = 42;
    int threads = 0;
    std::string checkpoint = "model.ckpt";
    std::string metrics_log = "metrics.tsv";
};

namespace config_detail {

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t");
    size_t e = s.find_last_not_of(" \t");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

inline std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round-trip form
    return std::string(buf, res.ptr);
}

struct Field {
    std::string key;
    enum Kind { kString, kInt, kUint64, kDouble, kBool } kind;
    void* ptr;
};

inline std::vector<Field> schema(AppConfig& c) {
    using F = Field;
    return {
        {"data.news", F::kString, &c.news},
        {"data.behaviors_train", F::kString, &c.behaviors_train},
        {"data.behaviors_val", F::kString, &c.behaviors_val},
        {"data.behaviors_test", F::kString, &c.behaviors_test},
        {"data.word_vectors", F::kString, &c.word_vectors},
        {"data.entity_vectors", F::kString, &c.entity_vectors},
        {"data.kg_edges", F::kString, &c.kg_edges},
        {"model.max_title_words", F::kInt, &c.model.max_title_words},
        {"model.max_entities", F::kInt, &c.model.max_entities},
        {"model.neighbor_samples", F::kInt, &c.model.neighbor_samples},
        {"model.history_clicks", F::kInt, &c.model.history_clicks},
        {"model.gcat_layers", F::kInt, &c.model.gcat_layers},
        {"model.word_dim", F::kInt, &c.model.word_dim},
        {"model.entity_dim", F::kInt, &c.model.entity_dim},
        {"model.semantic_dim", F::kInt, &c.model.semantic_dim},
        {"model.news_dim", F::kInt, &c.model.news_dim},
        {"model.query_dim", F::kInt, &c.model.query_dim},
        {"model.semantic_heads", F::kInt, &c.model.semantic_heads},
        {"model.entity_heads", F::kInt, &c.model.entity_heads},
        {"model.dropout", F::kDouble, &c.model.dropout},
        {"model.mask_entities", F::kBool, &c.model.mask_entities},
        {"train.negatives", F::kInt, &c.negatives},
        {"train.learning_rate", F::kDouble, &c.learning_rate},
        {"train.batch_size", F::kInt, &c.batch_size},
        {"train.epochs", F::kInt, &c.epochs},
        {"train.patience", F::kInt, &c.patience},
        {"train.seed", F::kUint64, &c.seed},
        {"train.threads", F::kInt, &c.threads},
        {"train.checkpoint", F::kString, &c.checkpoint},
        {"train.metrics_log", F::kString, &c.metrics_log},
    };
}

inline void assign(const Field& f, const std::string& raw) {
    const std::string v = trim(raw);
    auto fail = [&](const char* why) { throw ConfigError("config field '" + f.key + "': " + why); };
    switch (f.kind) {
        case Field::kString:
            *static_cast<std::string*>(f.ptr) = v;
            break;
        case Field::kInt: {
            int out = 0;
            auto r = std::from_chars(v.data(), v.data() + v.size(), out);
            if (r.ec != std::errc() || r.ptr != v.data() + v.size()) fail("expected an integer");
            *static_cast<int*>(f.ptr) = out;
            break;
        }
        case Field::kUint64: {
            uint64_t out = 0;
            auto r = std::from_chars(v.data(), v.data() + v.size(), out);
            if (r.ec != std::errc() || r.ptr != v.data() + v.size()) fail("expected an unsigned integer");
            *static_cast<uint64_t*>(f.ptr) = out;
            break;
        }
        case Field::kDouble: {
            double out = 0;
            auto r = std::from_chars(v.data(), v.data() + v.size(), out);
            if (r.ec != std::errc() || r.ptr != v.data() + v.size()) fail("expected a number");
            *static_cast<double*>(f.ptr) = out;
            break;
        }
        case Field::kBool: {
            if (v == "true" || v == "1") *static_cast<bool*>(f.ptr) = true;
            else if (v == "false" || v == "0") *static_cast<bool*>(f.ptr) = false;
            else fail("expected true/false");
            break;
        }
    }
}

inline std::string render(const Field& f) {
    switch (f.kind) {
        case Field::kString: return *static_cast<const std::string*>(f.ptr);
        case Field::kInt: return std::to_string(*static_cast<const int*>(f.ptr));
        case Field::kUint64: return std::to_string(*static_cast<const uint64_t*>(f.ptr));
        case Field::kDouble: return fmt_double(*static_cast<const double*>(f.ptr));
        case Field::kBool: return *static_cast<const bool*>(f.ptr) ? "true" : "false";
    }
    return "";
}

}  // namespace config_detail

inline AppConfig parse_config_text(const std::string& text, const std::string& origin = "<config>") {
    AppConfig cfg;
    auto fields = config_detail::schema(cfg);
    std::map<std::string, const config_detail::Field*> by_key;
    for (const auto& f : fields) by_key[f.key] = &f;

    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = config_detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = config_detail::trim(t.substr(0, eq));
        auto it = by_key.find(key);
        if (it == by_key.end())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown config field '" + key + "'");
        config_detail::assign(*it->second, t.substr(eq + 1));
    }
    return cfg;
}

inline AppConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

// Canonical form: all fields, schema order, one per line.
inline std::string canonical_config(const AppConfig& cfg) {
    AppConfig copy = cfg;
    std::string out;
    for (const auto& f : config_detail::schema(copy)) out += f.key + " = " + config_detail::render(f) + "\n";
    return out;
}

// Field-naming validation for commands that need data on disk.
inline void validate_for_training(const AppConfig& cfg) {
    auto need = [](const std::string& v, const char* field) {
        if (v.empty()) throw ConfigError(std::string("config field '") + field + "' is required");
    };
    need(cfg.news, "data.news");
    need(cfg.behaviors_train, "data.behaviors_train");
    need(cfg.behaviors_val, "data.behaviors_val");
    need(cfg.word_vectors, "data.word_vectors");
    need(cfg.entity_vectors, "data.entity_vectors");
    need(cfg.kg_edges, "data.kg_edges");
    if (cfg.negatives < 1) throw ConfigError("config field 'train.negatives' must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("config field 'train.batch_size' must be >= 1");
    if (cfg.epochs < 1) throw ConfigError("config field 'train.epochs' must be >= 1");
    if (cfg.patience < 1) throw ConfigError("config field 'train.patience' must be >= 1");
    if (cfg.learning_rate < 0) throw ConfigError("config field 'train.learning_rate' must be >= 0");
    cfg.model.validate();
}

}  // namespace knews
