#pragma once
// File parsers: news/behaviors TSVs, ".vec" embedding text files and the
// two-column knowledge-graph edge list. Parsers are pure functions of the
// file bytes; every malformed-input error carries the file name and line.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "records.hpp"
#include "rng.hpp"

namespace knews {

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseStats {
    int bad_entity_json = 0;   // entity columns that failed to parse as JSON
    int dropped_clicks = 0;    // history ids not present in the news index
    int skipped_edges = 0;     // KG edges naming unknown entities
    int duplicate_vectors = 0; // repeated tokens in a .vec file
};

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

// Lowercase, split on whitespace, strip surrounding punctuation. No stemming.
inline std::vector<std::string> tokenize_title(const std::string& title) {
    std::vector<std::string> out;
    for (std::string tok : split_ws(title)) {
        size_t b = 0, e = tok.size();
        while (b < e && std::ispunct(static_cast<unsigned char>(tok[b]))) ++b;
        while (e > b && std::ispunct(static_cast<unsigned char>(tok[e - 1]))) --e;
        if (b >= e) continue;
        std::string w = tok.substr(b, e - b);
        for (char& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        out.push_back(std::move(w));
    }
    return out;
}

inline NewsRecord make_news_record(const std::string& news_id, const std::vector<int>& tokens,
                                   const std::vector<int>& ents, int max_words, int max_entities) {
    NewsRecord r;
    r.news_id = news_id;
    r.token_ids.assign(max_words, kPadId);
    r.token_mask.assign(max_words, 0);
    r.entity_ids.assign(max_entities, kPadId);
    r.entity_mask.assign(max_entities, 0);
    for (int i = 0; i < std::min<int>(max_words, static_cast<int>(tokens.size())); ++i) {
        r.token_ids[i] = tokens[i];
        r.token_mask[i] = 1;
    }
    for (int i = 0; i < std::min<int>(max_entities, static_cast<int>(ents.size())); ++i) {
        r.entity_ids[i] = ents[i];
        r.entity_mask[i] = 1;
    }
    return r;
}

// MIND news file: news_id, category, subcategory, title, abstract, url,
// title_entities, abstract_entities. Only the id, title and title entities
// are consumed; entities keep file order.
inline NewsIndex parse_news_stream(std::istream& in, const std::string& path, Vocabulary& words,
                                   Vocabulary& entities, int max_words, int max_entities,
                                   ParseStats* stats = nullptr) {
    NewsIndex index;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto cols = split_tabs(line);
        if (cols.size() < 8)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected 8 tab-separated columns, got " +
                             std::to_string(cols.size()));
        const std::string& news_id = cols[0];
        std::vector<int> toks;
        for (const auto& w : tokenize_title(cols[3])) toks.push_back(words.add(w));
        std::vector<int> ents;
        const std::string& ejson = cols[6];
        if (!ejson.empty()) {
            nlohmann::json j = nlohmann::json::parse(ejson, nullptr, false);
            if (j.is_discarded() || !j.is_array()) {
                if (stats) ++stats->bad_entity_json;
            } else {
                for (const auto& obj : j) {
                    if (!obj.is_object() || !obj.contains("WikidataId")) continue;
                    ents.push_back(entities.add(obj["WikidataId"].get<std::string>()));
                }
            }
        }
        index.add(make_news_record(news_id, toks, ents, max_words, max_entities));
    }
    return index;
}

inline NewsIndex parse_news_file(const std::string& path, Vocabulary& words, Vocabulary& entities,
                                 int max_words, int max_entities, ParseStats* stats = nullptr) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open news file: " + path);
    return parse_news_stream(in, path, words, entities, max_words, max_entities, stats);
}

// MIND behaviors file: impression_id, user_id, time, history, impressions.
// History keeps the most recent `max_history` clicks, most recent first.
inline std::vector<ImpressionRecord> parse_behaviors_stream(std::istream& in, const std::string& path,
                                                            const NewsIndex& news, int max_history,
                                                            ParseStats* stats = nullptr) {
    std::vector<ImpressionRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto cols = split_tabs(line);
        if (cols.size() < 5)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected 5 tab-separated columns, got " +
                             std::to_string(cols.size()));
        ImpressionRecord rec;
        rec.impression_id = cols[0];
        rec.user.user_id = cols[1];
        rec.user.clicked.assign(max_history, -1);
        rec.user.history_mask.assign(max_history, 0);

        std::vector<int> resolved;
        for (const auto& id : split_ws(cols[3])) {
            const int idx = news.find(id);
            if (idx < 0) {
                if (stats) ++stats->dropped_clicks;
                continue;
            }
            resolved.push_back(idx);
        }
        // rightmost = most recent; keep the tail and flip to most-recent-first
        const int keep = std::min<int>(max_history, static_cast<int>(resolved.size()));
        for (int i = 0; i < keep; ++i) {
            rec.user.clicked[i] = resolved[resolved.size() - 1 - i];
            rec.user.history_mask[i] = 1;
        }

        for (const auto& tok : split_ws(cols[4])) {
            const size_t dash = tok.rfind('-');
            if (dash == std::string::npos || dash + 2 != tok.size() || (tok[dash + 1] != '0' && tok[dash + 1] != '1'))
                throw ParseError(path + ":" + std::to_string(lineno) + ": candidate '" + tok +
                                 "' lacks a -0/-1 label suffix");
            const std::string id = tok.substr(0, dash);
            const int idx = news.find(id);
            if (idx < 0)
                throw ParseError(path + ":" + std::to_string(lineno) + ": candidate news id '" + id +
                                 "' not present in the news file");
            rec.candidates.emplace_back(idx, tok[dash + 1] - '0');
        }
        if (rec.candidates.empty())
            throw ParseError(path + ":" + std::to_string(lineno) + ": impression has no candidates");
        out.push_back(std::move(rec));
    }
    return out;
}

inline std::vector<ImpressionRecord> parse_behaviors_file(const std::string& path, const NewsIndex& news,
                                                          int max_history, ParseStats* stats = nullptr) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open behaviors file: " + path);
    return parse_behaviors_stream(in, path, news, max_history, stats);
}

// "token v1 ... v_dim" per line. Vocabulary entries absent from the file get
// seeded uniform(-0.05, 0.05) rows; row 0 (PAD) is forced to zero.
inline EmbeddingTable load_vector_stream(std::istream& in, const std::string& path, int dim,
                                         const Vocabulary& vocab, uint64_t seed,
                                         ParseStats* stats = nullptr) {
    EmbeddingTable table;
    table.vectors = Tensor<float>(vocab.size(), dim);
    std::vector<uint8_t> filled(vocab.size(), 0);

    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto parts = split_ws(line);
        if (static_cast<int>(parts.size()) != dim + 1)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim + 1) +
                             " fields, got " + std::to_string(parts.size()));
        const int id = vocab.lookup(parts[0]);
        if (id <= 0) continue;  // token outside the vocabulary (or PAD)
        if (filled[id]) {
            ++table.duplicate_lines;
            if (stats) ++stats->duplicate_vectors;
        }
        for (int k = 0; k < dim; ++k) {
            float v = 0;
            const std::string& f = parts[k + 1];
            auto res = std::from_chars(f.data(), f.data() + f.size(), v);
            if (res.ec != std::errc() || res.ptr != f.data() + f.size())
                throw ParseError(path + ":" + std::to_string(lineno) + ": bad float '" + f + "'");
            if (!std::isfinite(v))
                throw ParseError(path + ":" + std::to_string(lineno) + ": non-finite value");
            table.vectors.at(id, k) = v;
        }
        filled[id] = 1;  // last occurrence wins (values already overwritten)
    }

    int covered = 0;
    for (int id = 1; id < vocab.size(); ++id) {
        if (filled[id]) {
            ++covered;
            continue;
        }
        Rng rng(mix64(seed, static_cast<uint64_t>(id)));
        for (int k = 0; k < dim; ++k) table.vectors.at(id, k) = static_cast<float>(rng.uniform(-0.05, 0.05));
    }
    table.coverage = vocab.size() > 1 ? static_cast<double>(covered) / (vocab.size() - 1) : 0.0;
    for (int k = 0; k < dim; ++k) table.vectors.at(0, k) = 0.0f;
    return table;
}

inline EmbeddingTable load_vector_file(const std::string& path, int dim, const Vocabulary& vocab,
                                       uint64_t seed, ParseStats* stats = nullptr) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open vector file: " + path);
    return load_vector_stream(in, path, dim, vocab, seed, stats);
}

// Two-column undirected edge TSV -> adjacency lists over the entity
// vocabulary. Lists come out sorted and deduplicated.
inline std::vector<std::vector<int>> load_kg_edges_stream(std::istream& in, const std::string& path,
                                                          const Vocabulary& entities,
                                                          ParseStats* stats = nullptr) {
    std::vector<std::vector<int>> adj(entities.size());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto cols = split_tabs(line);
        if (cols.size() != 2)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected 2 tab-separated columns");
        const int a = entities.lookup(cols[0]);
        const int b = entities.lookup(cols[1]);
        if (a <= 0 || b <= 0) {
            if (stats) ++stats->skipped_edges;
            continue;
        }
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    for (auto& lst : adj) {
        std::sort(lst.begin(), lst.end());
        lst.erase(std::unique(lst.begin(), lst.end()), lst.end());
    }
    return adj;
}

inline std::vector<std::vector<int>> load_kg_edges(const std::string& path, const Vocabulary& entities,
                                                   ParseStats* stats = nullptr) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open edge file: " + path);
    return load_kg_edges_stream(in, path, entities, stats);
}

// Uniform sample without replacement of min(degree, B) neighbors per entity.
// Each row draws from its own seeded stream, so tables are reproducible and
// insensitive to how many entities exist.
inline void build_neighbor_table(const std::vector<std::vector<int>>& adjacency, int B, uint64_t seed,
                                 std::vector<std::vector<int>>& table, std::vector<std::vector<uint8_t>>& mask) {
    const int n = static_cast<int>(adjacency.size());
    table.assign(n, std::vector<int>(B, kPadId));
    mask.assign(n, std::vector<uint8_t>(B, 0));
    for (int e = 1; e < n; ++e) {
        const auto& nbrs = adjacency[e];
        if (nbrs.empty()) continue;
        Rng rng(mix64(seed, 0x6e656967ULL, static_cast<uint64_t>(e)));
        const int k = std::min<int>(B, static_cast<int>(nbrs.size()));
        auto picks = rng.sample_without_replacement(static_cast<int>(nbrs.size()), k);
        for (int i = 0; i < k; ++i) {
            table[e][i] = nbrs[picks[i]];
            mask[e][i] = 1;
        }
    }
}

inline KnowledgeGraph build_knowledge_graph(std::vector<std::vector<int>> adjacency, int B, uint64_t seed,
                                            Tensor<float> entity_vectors) {
    KnowledgeGraph kg;
    kg.adjacency = std::move(adjacency);
    kg.entity_vectors = std::move(entity_vectors);
    build_neighbor_table(kg.adjacency, B, seed, kg.neighbor_table, kg.neighbor_mask);
    return kg;
}

}  // namespace knews
