#pragma once
// Ingested data structures. Everything is padded to fixed shapes with id 0
// reserved as PAD; masks are true exactly on the non-PAD prefix.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "tensor.hpp"

namespace knews {

inline constexpr int kPadId = 0;

class Vocabulary {
  public:
    Vocabulary() { id2tok_.push_back("<pad>"); }

    int add(const std::string& tok) {
        auto it = tok2id_.find(tok);
        if (it != tok2id_.end()) return it->second;
        const int id = static_cast<int>(id2tok_.size());
        id2tok_.push_back(tok);
        tok2id_.emplace(tok, id);
        return id;
    }

    int lookup(const std::string& tok) const {
        auto it = tok2id_.find(tok);
        return it == tok2id_.end() ? -1 : it->second;
    }

    const std::string& token(int id) const { return id2tok_.at(id); }
    int size() const { return static_cast<int>(id2tok_.size()); }

  private:
    std::vector<std::string> id2tok_;
    std::unordered_map<std::string, int> tok2id_;
};

struct NewsRecord {
    std::string news_id;
    std::vector<int> token_ids;        // length max_title_words, PAD suffix
    std::vector<int> entity_ids;       // length max_entities, PAD suffix
    std::vector<uint8_t> token_mask;   // true exactly on non-PAD prefix
    std::vector<uint8_t> entity_mask;

    int title_len() const {
        int n = 0;
        for (uint8_t m : token_mask) n += m != 0;
        return n;
    }
    int entity_count() const {
        int n = 0;
        for (uint8_t m : entity_mask) n += m != 0;
        return n;
    }
};

struct UserHistory {
    std::string user_id;
    std::vector<int> clicked;         // news indices, most recent first; -1 on PAD slots
    std::vector<uint8_t> history_mask;

    int click_count() const {
        int n = 0;
        for (uint8_t m : history_mask) n += m != 0;
        return n;
    }
};

struct ImpressionRecord {
    std::string impression_id;
    UserHistory user;
    std::vector<std::pair<int, int>> candidates;  // (news index, label in {0,1})
};

struct KnowledgeGraph {
    // adjacency[id] is sorted and deduplicated; index 0 (PAD) stays empty.
    std::vector<std::vector<int>> adjacency;
    std::vector<std::vector<int>> neighbor_table;        // fixed width B, PAD fill
    std::vector<std::vector<uint8_t>> neighbor_mask;
    Tensor<float> entity_vectors;                        // [num_entities x entity_dim], row 0 zero

    int num_entities() const { return static_cast<int>(adjacency.size()); }
};

struct EmbeddingTable {
    Tensor<float> vectors;  // [vocab x dim], row 0 zero
    double coverage = 0.0;  // fraction of non-PAD vocab found in the file
    int duplicate_lines = 0;
};

struct NewsIndex {
    std::vector<NewsRecord> records;
    std::unordered_map<std::string, int> by_id;

    int find(const std::string& id) const {
        auto it = by_id.find(id);
        return it == by_id.end() ? -1 : it->second;
    }
    int add(NewsRecord rec) {
        const int idx = static_cast<int>(records.size());
        by_id.emplace(rec.news_id, idx);
        records.push_back(std::move(rec));
        return idx;
    }
    const NewsRecord& at(int idx) const { return records.at(idx); }
    int size() const { return static_cast<int>(records.size()); }
};

// Everything the model consumes at run time.
struct Dataset {
    Vocabulary words;
    Vocabulary entities;
    NewsIndex news;
    std::vector<ImpressionRecord> train;
    std::vector<ImpressionRecord> val;
    std::vector<ImpressionRecord> test;
    KnowledgeGraph kg;
    EmbeddingTable word_vectors;
};

// Content fingerprint of the news set (ids, tokens, entities); used to detect
// stale precomputed caches.
inline uint64_t news_set_hash(const NewsIndex& news) {
    uint64_t h = 1469598103934665603ULL;
    auto feed_int = [&h](int v) {
        for (int b = 0; b < 4; ++b) {
            h ^= static_cast<unsigned char>(v >> (8 * b));
            h *= 1099511628211ULL;
        }
    };
    for (const auto& r : news.records) {
        for (char c : r.news_id) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        for (int t : r.token_ids) feed_int(t);
        for (int e : r.entity_ids) feed_int(e);
    }
    return h;
}

}  // namespace knews
