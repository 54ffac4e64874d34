#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "knews/cache.hpp"
#include "knews/checkpoint.hpp"
#include "knews/config.hpp"
#include "knews/matcher.hpp"
#include "knews/synthetic.hpp"
#include "test_util.hpp"

using namespace knews;
namespace fs = std::filesystem;

namespace {
struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("knews_test_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(reinterpret_cast<uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};
}  // namespace

TEST_CASE("config: parse, canonicalize, round-trip") {
    const std::string text =
        "# comment line\n"
        "data.news = /tmp/news.tsv\n"
        "model.semantic_dim = 64\n"
        "train.learning_rate = 5e-05\n"
        "train.seed = 7\n"
        "model.mask_entities = true\n";
    AppConfig cfg = parse_config_text(text);
    CHECK(cfg.news == "/tmp/news.tsv");
    CHECK(cfg.model.semantic_dim == 64);
    CHECK(cfg.learning_rate == 5e-5);
    CHECK(cfg.seed == 7);
    CHECK(cfg.model.mask_entities);
    CHECK(cfg.model.max_title_words == 30);  // untouched defaults stay at the published values
    CHECK(cfg.model.neighbor_samples == 10);
    CHECK(cfg.model.history_clicks == 50);
    CHECK(cfg.negatives == 4);
    CHECK(cfg.model.dropout == 0.2);
    CHECK(cfg.model.semantic_heads == 10);
    CHECK(cfg.model.entity_heads == 5);
    CHECK(cfg.model.gcat_layers == 1);

    const std::string canon = canonical_config(cfg);
    AppConfig cfg2 = parse_config_text(canon);
    CHECK(canonical_config(cfg2) == canon);  // canonical form is a fixed point

    SECTION("unknown keys and malformed values name the offender") {
        CHECK_THROWS_WITH(parse_config_text("model.bogus = 3\n"),
                          Catch::Matchers::ContainsSubstring("model.bogus"));
        CHECK_THROWS_WITH(parse_config_text("train.epochs = soon\n"),
                          Catch::Matchers::ContainsSubstring("train.epochs"));
        CHECK_THROWS_WITH(parse_config_text("train.epochs 12\n"), Catch::Matchers::ContainsSubstring(":1"));
    }

    SECTION("training validation names the missing field") {
        AppConfig incomplete;
        CHECK_THROWS_WITH(validate_for_training(incomplete), Catch::Matchers::ContainsSubstring("data.news"));
        incomplete.news = "x";
        CHECK_THROWS_WITH(validate_for_training(incomplete),
                          Catch::Matchers::ContainsSubstring("data.behaviors_train"));
    }
}

TEST_CASE("tensor archive: round trip, truncation, shape mismatches") {
    TempDir tmp;
    Rng rng(5);
    ParamRegistry<float> reg;
    reg.add("a", testutil::random_tensor<float>(rng, 3, 4));
    reg.add("b", testutil::random_tensor<float>(rng, 2, 2), /*frozen=*/true);

    const auto path = tmp.file("params.ckpt");
    archive_from_params(reg, {{"kind", "checkpoint"}}).save(path);

    SECTION("round trip restores bytes and flags") {
        auto ar = TensorArchive::load(path);
        CHECK(ar.meta.at("kind") == "checkpoint");
        CHECK(ar.entry("b").frozen);
        ParamRegistry<float> reg2;
        reg2.add("a", Tensor<float>(3, 4));
        reg2.add("b", Tensor<float>(2, 2), true);
        load_params_from_archive(ar, reg2);
        CHECK(reg2.value("a").data == reg.value("a").data);
        CHECK(reg2.value("b").data == reg.value("b").data);
    }

    SECTION("doubles survive the round trip exactly") {
        ParamRegistry<double> regd;
        regd.add("x", testutil::random_tensor<double>(rng, 5, 3));
        const auto p2 = tmp.file("d.ckpt");
        archive_from_params(regd).save(p2);
        ParamRegistry<double> regd2;
        regd2.add("x", Tensor<double>(5, 3));
        load_params_from_archive(TensorArchive::load(p2), regd2);
        CHECK(regd2.value("x").data == regd.value("x").data);
    }

    SECTION("truncated file is rejected") {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        for (size_t cut : {bytes.size() - 7, bytes.size() / 2, size_t(6)}) {
            std::ofstream out(tmp.file("trunc.ckpt"), std::ios::binary);
            out.write(bytes.data(), cut);
            out.close();
            CHECK_THROWS_AS(TensorArchive::load(tmp.file("trunc.ckpt")), ArchiveError);
        }
    }

    SECTION("shape mismatches list every offending name") {
        ParamRegistry<float> wrong;
        wrong.add("a", Tensor<float>(3, 5));  // wrong shape
        wrong.add("c", Tensor<float>(1, 1));  // not in archive
        auto ar = TensorArchive::load(path);
        try {
            load_params_from_archive(ar, wrong);
            FAIL("expected mismatch error");
        } catch (const ArchiveError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("a (archive 3x4") != std::string::npos);
            CHECK(msg.find("c (missing)") != std::string::npos);
            CHECK(msg.find("b (unexpected)") != std::string::npos);
        }
    }
}

TEST_CASE("precomputed cache: bit-equal evaluation and staleness checks") {
    TempDir tmp;
    auto cfg = testutil::tiny_config();
    auto ds = generate_synthetic_corpus(testutil::tiny_gen(), cfg, 303);
    auto params = init_model_params<float>(cfg, ds.word_vectors.vectors, ds.kg.entity_vectors, 9);

    auto hm = precompute_hm(ds, params, cfg, 2);
    const auto path = tmp.file("hm.cache");
    save_hm_cache(hm, ds.news, path);
    auto loaded = load_hm_cache(path, ds.news, params);

    SECTION("scores agree bitwise with the cache-free path") {
        for (const auto& imp : {ds.val[0], ds.val[1]}) {
            std::vector<int> cands;
            for (auto& c : imp.candidates) cands.push_back(c.first);
            auto plain = score_impression(ds, params, cfg, imp.user, cands);
            auto cached = score_impression(ds, params, cfg, imp.user, cands, &loaded);
            CHECK(plain == cached);
        }
    }

    SECTION("news-set change is stale") {
        Dataset other = generate_synthetic_corpus(testutil::tiny_gen(), cfg, 304);
        CHECK_THROWS_AS(load_hm_cache(path, other.news, params), CacheStale);
    }

    SECTION("parameter change is stale") {
        auto params2 = init_model_params<float>(cfg, ds.word_vectors.vectors, ds.kg.entity_vectors, 10);
        CHECK_THROWS_AS(load_hm_cache(path, ds.news, params2), CacheStale);
    }

    SECTION("empty news set is rejected at precompute") {
        Dataset empty;
        CHECK_THROWS(precompute_hm(empty, params, cfg, 1));
    }
}
