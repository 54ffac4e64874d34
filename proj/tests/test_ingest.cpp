#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "knews/ingest.hpp"
#include "knews/synthetic.hpp"
#include "test_util.hpp"

using namespace knews;

namespace {
NewsIndex parse_news_str(const std::string& body, Vocabulary& w, Vocabulary& e, ParseStats* st = nullptr,
                         int M = 30, int D = 5) {
    std::istringstream in(body);
    return parse_news_stream(in, "<test>", w, e, M, D, st);
}
}  // namespace

TEST_CASE("news parsing: tokens, entities, padding") {
    Vocabulary words, ents;
    ParseStats st;
    const std::string row =
        "N1\tstyle\tsub\tStyle is trending\t\thttp://x\t[{\"WikidataId\":\"Q1\"}]\t[]\n"
        "N2\tnews\tsub\tPlain title here\t\t\t\t[]\n";
    auto index = parse_news_str(row, words, ents, &st);
    REQUIRE(index.size() == 2);

    const NewsRecord& r1 = index.at(0);
    CHECK(r1.news_id == "N1");
    CHECK(r1.title_len() == 3);
    CHECK(r1.token_ids[0] == words.lookup("style"));
    CHECK(r1.token_ids[1] == words.lookup("is"));
    CHECK(r1.token_ids[2] == words.lookup("trending"));
    for (int i = 3; i < 30; ++i) {
        CHECK(r1.token_ids[i] == kPadId);
        CHECK(r1.token_mask[i] == 0);
    }
    CHECK(r1.entity_count() == 1);
    CHECK(r1.entity_ids[0] == ents.lookup("Q1"));
    for (int i = 1; i < 5; ++i) CHECK(r1.entity_ids[i] == kPadId);

    // empty entity column -> all PAD, mask all false
    const NewsRecord& r2 = index.at(1);
    CHECK(r2.entity_count() == 0);
    for (auto m : r2.entity_mask) CHECK(m == 0);
    CHECK(st.bad_entity_json == 0);
}

TEST_CASE("news parsing: truncation at 30 words") {
    Vocabulary words, ents;
    std::string title;
    for (int i = 0; i < 40; ++i) title += "w" + std::to_string(i) + " ";
    auto index = parse_news_str("N1\tc\ts\t" + title + "\t\t\t\t\n", words, ents);
    const NewsRecord& r = index.at(0);
    CHECK(r.title_len() == 30);
    for (auto m : r.token_mask) CHECK(m == 1);
    CHECK(r.token_ids[29] == words.lookup("w29"));
}

TEST_CASE("news parsing: errors and warnings") {
    Vocabulary words, ents;
    ParseStats st;
    CHECK_THROWS_WITH(parse_news_str("N1\tonly\tthree\n", words, ents),
                      Catch::Matchers::ContainsSubstring(":1"));
    // malformed JSON in the entity column counts a warning, keeps the row
    auto index = parse_news_str("N1\tc\ts\thello world\t\t\tnot-json\t\n", words, ents, &st);
    CHECK(index.size() == 1);
    CHECK(index.at(0).entity_count() == 0);
    CHECK(st.bad_entity_json == 1);
}

TEST_CASE("tokenizer: lowercase, punctuation stripping") {
    auto toks = tokenize_title("The  QUICK, brown fox's (jump)!");
    REQUIRE(toks.size() == 5);
    CHECK(toks[0] == "the");
    CHECK(toks[1] == "quick");
    CHECK(toks[2] == "brown");
    CHECK(toks[3] == "fox's");
    CHECK(toks[4] == "jump");
}

TEST_CASE("behaviors parsing") {
    Vocabulary words, ents;
    auto news = parse_news_str(
        "N1\tc\ts\ta b\t\t\t\t\nN2\tc\ts\tc d\t\t\t\t\nN3\tc\ts\te f\t\t\t\t\nN4\tc\ts\tg h\t\t\t\t\n",
        words, ents);

    SECTION("history tail kept, most recent first; mask marks real clicks") {
        std::istringstream in("I1\tU1\t2019-11-01\tN1 N2 N3\tN4-1 N1-0\n");
        auto imps = parse_behaviors_stream(in, "<t>", news, 50);
        REQUIRE(imps.size() == 1);
        const auto& u = imps[0].user;
        CHECK(u.click_count() == 3);
        CHECK(u.clicked[0] == news.find("N3"));  // most recent first
        CHECK(u.clicked[1] == news.find("N2"));
        CHECK(u.clicked[2] == news.find("N1"));
        for (int i = 3; i < 50; ++i) CHECK(u.history_mask[i] == 0);
        REQUIRE(imps[0].candidates.size() == 2);
        CHECK(imps[0].candidates[0] == std::make_pair(news.find("N4"), 1));
        CHECK(imps[0].candidates[1] == std::make_pair(news.find("N1"), 0));
    }

    SECTION("history truncation keeps the most recent N") {
        std::istringstream in("I1\tU1\tt\tN1 N2 N3 N4\tN1-0 N2-1\n");
        auto imps = parse_behaviors_stream(in, "<t>", news, 2);
        CHECK(imps[0].user.click_count() == 2);
        CHECK(imps[0].user.clicked[0] == news.find("N4"));
        CHECK(imps[0].user.clicked[1] == news.find("N3"));
    }

    SECTION("unknown history ids are dropped and counted") {
        ParseStats st;
        std::istringstream in("I1\tU1\tt\tN1 NOPE N2\tN3-1 N4-0\n");
        auto imps = parse_behaviors_stream(in, "<t>", news, 50, &st);
        CHECK(imps[0].user.click_count() == 2);
        CHECK(st.dropped_clicks == 1);
    }

    SECTION("empty history is retained") {
        std::istringstream in("I1\tU1\tt\t\tN1-1 N2-0\n");
        auto imps = parse_behaviors_stream(in, "<t>", news, 50);
        REQUIRE(imps.size() == 1);
        CHECK(imps[0].user.click_count() == 0);
    }

    SECTION("label suffix is mandatory") {
        std::istringstream in("I1\tU1\tt\tN1\tN2-7\n");
        CHECK_THROWS_WITH(parse_behaviors_stream(in, "<t>", news, 50),
                          Catch::Matchers::ContainsSubstring(":1"));
        std::istringstream in2("I1\tU1\tt\tN1\tN2\n");
        CHECK_THROWS(parse_behaviors_stream(in2, "<t>", news, 50));
    }
}

TEST_CASE("vector file loading") {
    Vocabulary vocab;
    vocab.add("the");
    vocab.add("cat");

    SECTION("file row wins; missing tokens get seeded uniform rows; PAD stays zero") {
        std::istringstream in("the 0.1 0.1 0.1\n");
        auto table = load_vector_stream(in, "<v>", 3, vocab, 7);
        for (int k = 0; k < 3; ++k) {
            CHECK(table.vectors.at(vocab.lookup("the"), k) == Catch::Approx(0.1));
            CHECK(table.vectors.at(0, k) == 0.0f);
        }
        bool nonzero = false;
        for (int k = 0; k < 3; ++k) {
            const float v = table.vectors.at(vocab.lookup("cat"), k);
            CHECK(std::abs(v) <= 0.05f);
            nonzero |= v != 0.0f;
        }
        CHECK(nonzero);
        CHECK(table.coverage == Catch::Approx(0.5));

        // same seed -> identical random fills
        std::istringstream in2("the 0.1 0.1 0.1\n");
        auto table2 = load_vector_stream(in2, "<v>", 3, vocab, 7);
        CHECK(table2.vectors.data == table.vectors.data);
    }

    SECTION("empty file: everything random except PAD, coverage 0") {
        std::istringstream in("");
        auto table = load_vector_stream(in, "<v>", 3, vocab, 7);
        CHECK(table.coverage == 0.0);
        for (int k = 0; k < 3; ++k) CHECK(table.vectors.at(0, k) == 0.0f);
    }

    SECTION("duplicate tokens: last wins, counted") {
        ParseStats st;
        std::istringstream in("the 1 1 1\nthe 2 2 2\n");
        auto table = load_vector_stream(in, "<v>", 3, vocab, 7, &st);
        CHECK(table.vectors.at(vocab.lookup("the"), 0) == 2.0f);
        CHECK(st.duplicate_vectors == 1);
    }

    SECTION("errors name the line") {
        std::istringstream in("the 1 2\n");
        CHECK_THROWS_WITH(load_vector_stream(in, "<v>", 3, vocab, 7),
                          Catch::Matchers::ContainsSubstring(":1"));
        std::istringstream in2("the 1 2 nan\n");
        CHECK_THROWS(load_vector_stream(in2, "<v>", 3, vocab, 7));
    }
}

TEST_CASE("neighbor table") {
    Vocabulary ents;
    for (int i = 1; i <= 30; ++i) ents.add("Q" + std::to_string(i));

    SECTION("few neighbors: real prefix plus PAD suffix") {
        std::istringstream in("Q1\tQ2\nQ1\tQ3\nQ1\tQ4\n");
        auto adj = load_kg_edges_stream(in, "<e>", ents);
        std::vector<std::vector<int>> table;
        std::vector<std::vector<uint8_t>> mask;
        build_neighbor_table(adj, 10, 5, table, mask);
        const int q1 = ents.lookup("Q1");
        std::set<int> got;
        for (int j = 0; j < 3; ++j) {
            CHECK(mask[q1][j] == 1);
            got.insert(table[q1][j]);
        }
        for (int j = 3; j < 10; ++j) {
            CHECK(mask[q1][j] == 0);
            CHECK(table[q1][j] == kPadId);
        }
        CHECK(got == std::set<int>{ents.lookup("Q2"), ents.lookup("Q3"), ents.lookup("Q4")});
        // undirected: Q2 sees Q1
        CHECK(table[ents.lookup("Q2")][0] == q1);
    }

    SECTION("high degree: B distinct neighbors from the adjacency list") {
        std::ostringstream edges;
        for (int i = 2; i <= 27; ++i) edges << "Q1\tQ" << i << "\n";
        std::istringstream in(edges.str());
        auto adj = load_kg_edges_stream(in, "<e>", ents);
        std::vector<std::vector<int>> table;
        std::vector<std::vector<uint8_t>> mask;
        build_neighbor_table(adj, 10, 5, table, mask);
        const int q1 = ents.lookup("Q1");
        std::set<int> got(table[q1].begin(), table[q1].end());
        CHECK(got.size() == 10);  // distinct
        for (int n : got) CHECK(std::find(adj[q1].begin(), adj[q1].end(), n) != adj[q1].end());
    }

    SECTION("determinism and seed sensitivity") {
        std::ostringstream edges;
        for (int i = 2; i <= 27; ++i) edges << "Q1\tQ" << i << "\n";
        auto make = [&](uint64_t seed) {
            std::istringstream in(edges.str());
            auto adj = load_kg_edges_stream(in, "<e>", ents);
            std::vector<std::vector<int>> table;
            std::vector<std::vector<uint8_t>> mask;
            build_neighbor_table(adj, 10, seed, table, mask);
            return table;
        };
        CHECK(make(5) == make(5));
        CHECK(make(5) != make(6));
    }

    SECTION("edges naming unknown entities are skipped and counted") {
        ParseStats st;
        std::istringstream in("Q1\tQUNKNOWN\nQ1\tQ2\n");
        auto adj = load_kg_edges_stream(in, "<e>", ents, &st);
        CHECK(st.skipped_edges == 1);
        CHECK(adj[ents.lookup("Q1")].size() == 1);
    }
}

TEST_CASE("vocabulary round-trip") {
    Vocabulary v;
    std::vector<std::string> toks = {"alpha", "beta", "gamma", "beta"};
    for (const auto& t : toks) v.add(t);
    CHECK(v.size() == 4);  // PAD + 3 distinct
    for (int id = 1; id < v.size(); ++id) CHECK(v.lookup(v.token(id)) == id);
}

TEST_CASE("parsing is pure: same bytes, equal structures") {
    auto g = testutil::tiny_gen();
    auto files = generate_synthetic_files(g, 99);
    Vocabulary w1, e1, w2, e2;
    auto i1 = parse_news_str(files.news_tsv, w1, e1, nullptr, 8, 2);
    auto i2 = parse_news_str(files.news_tsv, w2, e2, nullptr, 8, 2);
    REQUIRE(i1.size() == i2.size());
    for (int i = 0; i < i1.size(); ++i) {
        CHECK(i1.at(i).news_id == i2.at(i).news_id);
        CHECK(i1.at(i).token_ids == i2.at(i).token_ids);
        CHECK(i1.at(i).entity_ids == i2.at(i).entity_ids);
        CHECK(i1.at(i).token_mask == i2.at(i).token_mask);
    }
}

TEST_CASE("record invariants over a generated corpus") {
    auto cfg = testutil::tiny_config();
    auto ds = generate_synthetic_corpus(testutil::tiny_gen(), cfg, 4242);
    for (int i = 0; i < ds.news.size(); ++i) {
        const auto& r = ds.news.at(i);
        REQUIRE(static_cast<int>(r.token_ids.size()) == cfg.max_title_words);
        REQUIRE(static_cast<int>(r.entity_ids.size()) == cfg.max_entities);
        bool seen_pad = false;
        for (size_t j = 0; j < r.token_ids.size(); ++j) {
            CHECK((r.token_mask[j] != 0) == (r.token_ids[j] != kPadId));
            if (!r.token_mask[j]) seen_pad = true;
            else CHECK(!seen_pad);  // padding is a contiguous suffix
            CHECK(r.token_ids[j] < ds.words.size());
        }
        for (size_t j = 0; j < r.entity_ids.size(); ++j)
            CHECK((r.entity_mask[j] != 0) == (r.entity_ids[j] != kPadId));
    }
    for (const auto& imp : ds.train) {
        CHECK(static_cast<int>(imp.user.clicked.size()) == cfg.history_clicks);
        REQUIRE(!imp.candidates.empty());
        for (auto [news, label] : imp.candidates) {
            CHECK(news >= 0);
            CHECK(news < ds.news.size());
            CHECK((label == 0 || label == 1));
        }
    }
    // KG invariants: sampled neighbors come from the adjacency lists, PAD row zero
    for (int e = 1; e < ds.kg.num_entities(); ++e)
        for (int j = 0; j < cfg.neighbor_samples; ++j)
            if (ds.kg.neighbor_mask[e][j]) {
                const auto& adj = ds.kg.adjacency[e];
                CHECK(std::find(adj.begin(), adj.end(), ds.kg.neighbor_table[e][j]) != adj.end());
            }
    for (int k = 0; k < ds.kg.entity_vectors.cols; ++k) CHECK(ds.kg.entity_vectors.at(0, k) == 0.0f);
}

TEST_CASE("generator contracts") {
    SECTION("every impression has at least one positive and one negative") {
        auto ds = generate_synthetic_corpus(testutil::tiny_gen(), testutil::tiny_config(), 7);
        for (const auto& imp : ds.train) {
            int pos = 0, neg = 0;
            for (auto [_, label] : imp.candidates) (label ? pos : neg)++;
            CHECK(pos >= 1);
            CHECK(neg >= 1);
        }
    }

    SECTION("single topic still emits negatives") {
        auto g = testutil::tiny_gen();
        g.topics = 1;
        g.words_per_topic = 10;
        auto ds = generate_synthetic_corpus(g, testutil::tiny_config(), 11);
        for (const auto& imp : ds.train) {
            int neg = 0;
            for (auto [_, label] : imp.candidates) neg += label == 0;
            CHECK(neg >= 1);
        }
    }

    SECTION("fixed seed is byte-identical; different seed differs") {
        auto g = testutil::tiny_gen();
        auto f1 = generate_synthetic_files(g, 31);
        auto f2 = generate_synthetic_files(g, 31);
        CHECK(f1.news_tsv == f2.news_tsv);
        CHECK(f1.behaviors_train == f2.behaviors_train);
        CHECK(f1.words_vec == f2.words_vec);
        CHECK(f1.entities_vec == f2.entities_vec);
        CHECK(f1.kg_edges == f2.kg_edges);
        auto f3 = generate_synthetic_files(g, 32);
        CHECK(f1.behaviors_train != f3.behaviors_train);
    }

    SECTION("candidates_per_impression < 2 is rejected") {
        auto g = testutil::tiny_gen();
        g.candidates_per_impression = 1;
        CHECK_THROWS(generate_synthetic_files(g, 1));
    }

    SECTION("kg_signal_fraction drives word-disjoint positives") {
        auto g = testutil::tiny_gen();
        g.topics = 8;
        g.news = 160;
        g.users = 30;
        g.train_impressions = 300;
        g.kg_signal_fraction = 0.5;
        auto files = generate_synthetic_files(g, 123);
        auto ds = dataset_from_synth(files, testutil::tiny_config(), 123);

        // count positives whose titles share zero non-stopword tokens with the history
        auto is_stopword = [&](int tok) { return ds.words.token(tok)[0] == 's'; };
        int disjoint = 0, total = 0;
        for (const auto& imp : ds.train) {
            std::set<int> hist_words;
            for (size_t i = 0; i < imp.user.clicked.size(); ++i) {
                if (!imp.user.history_mask[i]) continue;
                const auto& rec = ds.news.at(imp.user.clicked[i]);
                for (size_t j = 0; j < rec.token_ids.size(); ++j)
                    if (rec.token_mask[j] && !is_stopword(rec.token_ids[j])) hist_words.insert(rec.token_ids[j]);
            }
            for (auto [news, label] : imp.candidates) {
                if (!label) continue;
                ++total;
                const auto& rec = ds.news.at(news);
                bool overlap = false;
                for (size_t j = 0; j < rec.token_ids.size(); ++j)
                    if (rec.token_mask[j] && !is_stopword(rec.token_ids[j]) && hist_words.count(rec.token_ids[j]))
                        overlap = true;
                disjoint += !overlap;
            }
        }
        const double frac = static_cast<double>(disjoint) / total;
        INFO("disjoint fraction " << frac << " over " << total << " positives");
        CHECK(frac > 0.35);
        CHECK(frac < 0.65);
    }
}
