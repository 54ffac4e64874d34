#pragma once
// Synthetic corpus generator for offline experiments. Emits the same file
// formats the real pipelines consume (news/behaviors TSV, .vec embeddings,
// edge TSV) and parses them back so the returned structures went through the
// production parsers.
//
// Construction: each topic owns a disjoint word pool; entities live in
// clusters that are independent of topics, with knowledge-graph edges inside
// each cluster and embedding vectors near a per-cluster center. A candidate
// is positive either because its topic matches the user's interests (word
// overlap) or because its entity cluster appears in the user's click history
// while its topic does not — a signal invisible to any text-only model.

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ingest.hpp"
#include "model_config.hpp"
#include "records.hpp"
#include "rng.hpp"

namespace knews {

struct GenConfig {
    int topics = 10;
    int news = 200;
    int users = 50;
    int train_impressions = 100;
    int val_impressions = 40;
    int candidates_per_impression = 5;
    int max_positives = 2;
    double kg_signal_fraction = 0.25;  // share of positives generated via the entity route
    int history_len = 10;
    int words_per_topic = 20;
    int stopwords = 10;
    int title_len_min = 4;
    int title_len_max = 8;
    int entities_per_news_max = 3;
    int entity_cluster_size = 6;
    int entity_clusters = 60;
    int word_dim = 300;
    int entity_dim = 100;

    void validate() const {
        auto need = [](bool ok, const char* what) {
            if (!ok) throw std::invalid_argument(std::string("generator config: ") + what);
        };
        need(topics >= 1, "topics must be >= 1");
        need(news >= 4, "news must be >= 4");
        need(users >= 1, "users must be >= 1");
        need(train_impressions >= 1, "train_impressions must be >= 1");
        need(val_impressions >= 0, "val_impressions must be >= 0");
        need(candidates_per_impression >= 2, "candidates_per_impression must be >= 2");
        need(max_positives >= 1 && max_positives < candidates_per_impression,
             "max_positives must be in [1, candidates_per_impression)");
        need(kg_signal_fraction >= 0.0 && kg_signal_fraction <= 1.0, "kg_signal_fraction must be in [0,1]");
        need(history_len >= 0, "history_len must be >= 0");
        need(words_per_topic >= title_len_max, "words_per_topic must cover the longest title");
        need(title_len_min >= 1 && title_len_min <= title_len_max, "title length range invalid");
        need(entities_per_news_max >= 1, "entities_per_news_max must be >= 1");
        need(entity_cluster_size >= 2, "entity_cluster_size must be >= 2");
        need(entity_clusters >= 1, "entity_clusters must be >= 1");
        need(word_dim >= 1 && entity_dim >= 1, "embedding dims must be >= 1");
    }
};

struct SynthFiles {
    std::string news_tsv;
    std::string behaviors_train;
    std::string behaviors_val;
    std::string words_vec;
    std::string entities_vec;
    std::string kg_edges;
};

namespace synth_detail {

inline std::string fmt_float(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

struct NewsPlan {
    int topic = 0;
    int cluster = 0;
    std::vector<int> word_ids;    // indices into the generator's word list
    std::vector<int> entity_ids;  // indices into the generator's entity list
};

}  // namespace synth_detail

inline SynthFiles generate_synthetic_files(const GenConfig& g, uint64_t seed) {
    using synth_detail::fmt_float;
    g.validate();
    Rng rng(mix64(seed, 0x73796e7468ULL));

    // vocabulary: per-topic pools plus shared stopwords
    std::vector<std::string> words;
    for (int t = 0; t < g.topics; ++t)
        for (int w = 0; w < g.words_per_topic; ++w)
            words.push_back("t" + std::to_string(t) + "w" + std::to_string(w));
    const int stop_base = static_cast<int>(words.size());
    for (int s = 0; s < g.stopwords; ++s) words.push_back("s" + std::to_string(s));

    const int num_entities = g.entity_clusters * g.entity_cluster_size;
    std::vector<std::string> entities;
    for (int e = 0; e < num_entities; ++e) entities.push_back("Q" + std::to_string(10000 + e));
    auto cluster_of = [&](int e) { return e / g.entity_cluster_size; };

    // news
    std::vector<synth_detail::NewsPlan> plans(g.news);
    for (int n = 0; n < g.news; ++n) {
        auto& p = plans[n];
        p.topic = n % g.topics;  // round-robin keeps every topic populated
        p.cluster = rng.uniform_int(g.entity_clusters);
        const int len = g.title_len_min + rng.uniform_int(g.title_len_max - g.title_len_min + 1);
        for (int i : rng.sample_without_replacement(g.words_per_topic, len))
            p.word_ids.push_back(p.topic * g.words_per_topic + i);
        if (g.stopwords > 0) p.word_ids.push_back(stop_base + rng.uniform_int(g.stopwords));
        rng.shuffle(p.word_ids);
        const int ec = 1 + rng.uniform_int(g.entities_per_news_max);
        for (int i : rng.sample_without_replacement(g.entity_cluster_size, ec))
            p.entity_ids.push_back(p.cluster * g.entity_cluster_size + i);
    }

    std::ostringstream news_tsv;
    for (int n = 0; n < g.news; ++n) {
        const auto& p = plans[n];
        std::string title;
        for (size_t i = 0; i < p.word_ids.size(); ++i) {
            if (i) title += ' ';
            title += words[p.word_ids[i]];
        }
        std::string ejson = "[";
        for (size_t i = 0; i < p.entity_ids.size(); ++i) {
            if (i) ejson += ",";
            ejson += "{\"WikidataId\":\"" + entities[p.entity_ids[i]] + "\"}";
        }
        ejson += "]";
        news_tsv << "N" << n << "\tt" << p.topic << "\tsub\t" << title << "\t\t\t" << ejson << "\t[]\n";
    }

    // users: a couple of interest topics each
    std::vector<std::vector<int>> interests(g.users);
    for (int u = 0; u < g.users; ++u) {
        const int k = std::min(2, g.topics);
        interests[u] = rng.sample_without_replacement(g.topics, k);
    }

    // per-topic news buckets for history sampling
    std::vector<std::vector<int>> by_topic(g.topics);
    for (int n = 0; n < g.news; ++n) by_topic[plans[n].topic].push_back(n);

    std::vector<std::vector<int>> histories(g.users);
    for (int u = 0; u < g.users; ++u) {
        for (int i = 0; i < g.history_len; ++i) {
            const int topic = interests[u][rng.uniform_int(static_cast<int>(interests[u].size()))];
            const auto& bucket = by_topic[topic];
            histories[u].push_back(bucket[rng.uniform_int(static_cast<int>(bucket.size()))]);
        }
    }

    auto history_clusters = [&](int u) {
        std::set<int> cs;
        for (int n : histories[u]) cs.insert(plans[n].cluster);
        return cs;
    };
    auto is_interest = [&](int u, int topic) {
        return std::find(interests[u].begin(), interests[u].end(), topic) != interests[u].end();
    };

    // rejection-sample a news item satisfying pred; falls back to any item
    auto pick_news = [&](auto&& pred) -> int {
        for (int tries = 0; tries < 4000; ++tries) {
            const int n = rng.uniform_int(g.news);
            if (pred(n)) return n;
        }
        return -1;
    };

    auto emit_impressions = [&](std::ostringstream& out, int count, int id_base) {
        for (int i = 0; i < count; ++i) {
            const int u = rng.uniform_int(g.users);
            const auto hc = history_clusters(u);
            std::set<int> used;
            std::vector<std::pair<int, int>> cands;

            const int pos_count = 1 + rng.uniform_int(g.max_positives);
            for (int p = 0; p < pos_count; ++p) {
                const bool kg_route = rng.uniform() < g.kg_signal_fraction;
                int n = -1;
                if (kg_route) {
                    n = pick_news([&](int c) {
                        return !used.count(c) && !is_interest(u, plans[c].topic) && hc.count(plans[c].cluster);
                    });
                }
                if (n < 0) {
                    n = pick_news([&](int c) {
                        return !used.count(c) && is_interest(u, plans[c].topic) && !hc.count(plans[c].cluster);
                    });
                }
                if (n < 0) n = pick_news([&](int c) { return !used.count(c) && is_interest(u, plans[c].topic); });
                if (n < 0) n = pick_news([&](int c) { return !used.count(c); });
                if (n < 0) throw std::runtime_error("generator: could not place a positive candidate");
                used.insert(n);
                cands.emplace_back(n, 1);
            }
            while (static_cast<int>(cands.size()) < g.candidates_per_impression) {
                int n = pick_news([&](int c) {
                    return !used.count(c) && !is_interest(u, plans[c].topic) && !hc.count(plans[c].cluster);
                });
                if (n < 0) n = pick_news([&](int c) { return !used.count(c); });
                if (n < 0) throw std::runtime_error("generator: could not place a negative candidate");
                used.insert(n);
                cands.emplace_back(n, 0);  // at least one negative exists by construction
            }
            rng.shuffle(cands);

            out << "I" << (id_base + i) << "\tU" << u << "\t2020-01-01";
            out << "\t";
            // oldest first on disk; the parser keeps the rightmost entries
            for (size_t h = 0; h < histories[u].size(); ++h) {
                if (h) out << ' ';
                out << "N" << histories[u][histories[u].size() - 1 - h];
            }
            out << "\t";
            for (size_t c = 0; c < cands.size(); ++c) {
                if (c) out << ' ';
                out << "N" << cands[c].first << "-" << cands[c].second;
            }
            out << "\n";
        }
    };

    std::ostringstream train_tsv, val_tsv;
    emit_impressions(train_tsv, g.train_impressions, 0);
    emit_impressions(val_tsv, g.val_impressions, g.train_impressions);

    // word vectors: topic-clustered; stopwords small and unstructured
    std::ostringstream words_vec;
    {
        std::vector<std::vector<double>> centers(g.topics, std::vector<double>(g.word_dim));
        for (auto& c : centers)
            for (double& v : c) v = rng.normal() / std::sqrt(static_cast<double>(g.word_dim));
        for (int w = 0; w < static_cast<int>(words.size()); ++w) {
            words_vec << words[w];
            const bool stop = w >= stop_base;
            for (int k = 0; k < g.word_dim; ++k) {
                const double base = stop ? 0.0 : centers[w / g.words_per_topic][k];
                const double noise = 0.15 * rng.normal() / std::sqrt(static_cast<double>(g.word_dim));
                words_vec << ' ' << fmt_float(base + noise);
            }
            words_vec << "\n";
        }
    }

    // entity vectors: cluster-clustered, so graph-linked entities are close
    std::ostringstream entities_vec;
    {
        std::vector<std::vector<double>> centers(g.entity_clusters, std::vector<double>(g.entity_dim));
        for (auto& c : centers)
            for (double& v : c) v = rng.normal() / std::sqrt(static_cast<double>(g.entity_dim));
        for (int e = 0; e < num_entities; ++e) {
            entities_vec << entities[e];
            for (int k = 0; k < g.entity_dim; ++k) {
                const double noise = 0.15 * rng.normal() / std::sqrt(static_cast<double>(g.entity_dim));
                entities_vec << ' ' << fmt_float(centers[cluster_of(e)][k] + noise);
            }
            entities_vec << "\n";
        }
    }

    // knowledge graph: complete within each cluster
    std::ostringstream edges;
    for (int c = 0; c < g.entity_clusters; ++c)
        for (int i = 0; i < g.entity_cluster_size; ++i)
            for (int j = i + 1; j < g.entity_cluster_size; ++j)
                edges << entities[c * g.entity_cluster_size + i] << "\t"
                      << entities[c * g.entity_cluster_size + j] << "\n";

    SynthFiles files;
    files.news_tsv = news_tsv.str();
    files.behaviors_train = train_tsv.str();
    files.behaviors_val = val_tsv.str();
    files.words_vec = words_vec.str();
    files.entities_vec = entities_vec.str();
    files.kg_edges = edges.str();
    return files;
}

// Parse generated text back through the production parsers into a Dataset.
inline Dataset dataset_from_synth(const SynthFiles& files, const ModelConfig& cfg, uint64_t seed,
                                  ParseStats* stats = nullptr) {
    Dataset ds;
    {
        std::istringstream in(files.news_tsv);
        ds.news = parse_news_stream(in, "<synthetic news>", ds.words, ds.entities, cfg.max_title_words,
                                    cfg.max_entities, stats);
    }
    {
        std::istringstream in(files.behaviors_train);
        ds.train = parse_behaviors_stream(in, "<synthetic train>", ds.news, cfg.history_clicks, stats);
    }
    if (!files.behaviors_val.empty()) {
        std::istringstream in(files.behaviors_val);
        ds.val = parse_behaviors_stream(in, "<synthetic val>", ds.news, cfg.history_clicks, stats);
    }
    {
        std::istringstream in(files.words_vec);
        ds.word_vectors = load_vector_stream(in, "<synthetic words>", cfg.word_dim, ds.words,
                                             mix64(seed, 0x77ULL), stats);
    }
    EmbeddingTable ents;
    {
        std::istringstream in(files.entities_vec);
        ents = load_vector_stream(in, "<synthetic entities>", cfg.entity_dim, ds.entities,
                                  mix64(seed, 0x65ULL), stats);
    }
    std::vector<std::vector<int>> adj;
    {
        std::istringstream in(files.kg_edges);
        adj = load_kg_edges_stream(in, "<synthetic edges>", ds.entities, stats);
    }
    ds.kg = build_knowledge_graph(std::move(adj), cfg.neighbor_samples, mix64(seed, 0x6bULL),
                                  std::move(ents.vectors));
    return ds;
}

inline Dataset generate_synthetic_corpus(const GenConfig& g, const ModelConfig& cfg, uint64_t seed,
                                         ParseStats* stats = nullptr) {
    return dataset_from_synth(generate_synthetic_files(g, seed), cfg, seed, stats);
}

// "key = value" generator config; same syntax as the run config file.
inline GenConfig parse_gen_config_text(const std::string& text, const std::string& origin = "<gen config>") {
    GenConfig g;
    std::map<std::string, int*> ints = {
        {"gen.topics", &g.topics},
        {"gen.news", &g.news},
        {"gen.users", &g.users},
        {"gen.train_impressions", &g.train_impressions},
        {"gen.val_impressions", &g.val_impressions},
        {"gen.candidates_per_impression", &g.candidates_per_impression},
        {"gen.max_positives", &g.max_positives},
        {"gen.history_len", &g.history_len},
        {"gen.words_per_topic", &g.words_per_topic},
        {"gen.stopwords", &g.stopwords},
        {"gen.title_len_min", &g.title_len_min},
        {"gen.title_len_max", &g.title_len_max},
        {"gen.entities_per_news_max", &g.entities_per_news_max},
        {"gen.entity_cluster_size", &g.entity_cluster_size},
        {"gen.entity_clusters", &g.entity_clusters},
        {"gen.word_dim", &g.word_dim},
        {"gen.entity_dim", &g.entity_dim},
    };
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        size_t b = line.find_first_not_of(" \t");
        if (b == std::string::npos || line[b] == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        auto strip = [](std::string s) {
            const size_t x = s.find_first_not_of(" \t");
            const size_t y = s.find_last_not_of(" \t");
            return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
        };
        const std::string key = strip(line.substr(0, eq));
        const std::string val = strip(line.substr(eq + 1));
        if (key == "gen.kg_signal_fraction") {
            g.kg_signal_fraction = std::stod(val);
            continue;
        }
        auto it = ints.find(key);
        if (it == ints.end())
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": unknown generator field '" +
                                        key + "'");
        *it->second = std::stoi(val);
    }
    return g;
}

}  // namespace knews
