// knews command line: synthetic corpus generation, training, evaluation,
// ranked prediction, cache precomputation and a significance test over saved
// reports. Exit codes: 0 success, 2 invalid config, 3 data error,
// 4 checkpoint error, 5 stale cache.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "knews/cache.hpp"
#include "knews/checkpoint.hpp"
#include "knews/config.hpp"
#include "knews/evaluation.hpp"
#include "knews/ingest.hpp"
#include "knews/matcher.hpp"
#include "knews/model_params.hpp"
#include "knews/synthetic.hpp"
#include "knews/training.hpp"

namespace fs = std::filesystem;
using namespace knews;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitCheckpoint = 4;
constexpr int kExitStaleCache = 5;

std::string f6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

AppConfig load_config_or_exit(const std::string& path, const std::vector<std::string>& overrides) {
    try {
        AppConfig cfg = load_config(path);
        std::string text;
        for (const auto& kv : overrides) text += kv + "\n";
        if (!text.empty()) {
            // overrides use the same "key = value" syntax and schema
            AppConfig merged = parse_config_text(canonical_config(cfg) + text, "<override>");
            cfg = merged;
        }
        return cfg;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        std::exit(kExitConfig);
    }
}

struct LoadedData {
    Dataset ds;
    ParseStats stats;
};

LoadedData load_dataset(const AppConfig& cfg, bool need_train, bool need_val, bool need_test) {
    LoadedData out;
    Dataset& ds = out.ds;
    ds.news = parse_news_file(cfg.news, ds.words, ds.entities, cfg.model.max_title_words,
                              cfg.model.max_entities, &out.stats);
    if (need_train)
        ds.train = parse_behaviors_file(cfg.behaviors_train, ds.news, cfg.model.history_clicks, &out.stats);
    if (need_val && !cfg.behaviors_val.empty())
        ds.val = parse_behaviors_file(cfg.behaviors_val, ds.news, cfg.model.history_clicks, &out.stats);
    if (need_test && !cfg.behaviors_test.empty())
        ds.test = parse_behaviors_file(cfg.behaviors_test, ds.news, cfg.model.history_clicks, &out.stats);
    ds.word_vectors =
        load_vector_file(cfg.word_vectors, cfg.model.word_dim, ds.words, mix64(cfg.seed, 0x77ULL), &out.stats);
    EmbeddingTable ents = load_vector_file(cfg.entity_vectors, cfg.model.entity_dim, ds.entities,
                                           mix64(cfg.seed, 0x65ULL), &out.stats);
    auto adj = load_kg_edges(cfg.kg_edges, ds.entities, &out.stats);
    ds.kg = build_knowledge_graph(std::move(adj), cfg.model.neighbor_samples, mix64(cfg.seed, 0x6bULL),
                                  std::move(ents.vectors));
    return out;
}

ParamRegistry<float> registry_for(const AppConfig& cfg, const Dataset& ds) {
    return init_model_params<float>(cfg.model, ds.word_vectors.vectors, ds.kg.entity_vectors, cfg.seed);
}

void load_checkpoint_or_exit(const std::string& path, ParamRegistry<float>& params) {
    try {
        load_params_from_archive(TensorArchive::load(path), params);
    } catch (const ArchiveError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        std::exit(kExitCheckpoint);
    }
}

std::function<std::vector<double>(const ImpressionRecord&)> model_scorer(const Dataset& ds,
                                                                         const ParamRegistry<float>& params,
                                                                         const ModelConfig& mc,
                                                                         const PrecomputedHm* hm) {
    return [&ds, &params, &mc, hm](const ImpressionRecord& imp) {
        std::vector<int> cands;
        cands.reserve(imp.candidates.size());
        for (const auto& c : imp.candidates) cands.push_back(c.first);
        return score_impression(ds, params, mc, imp.user, cands, hm);
    };
}

void print_report(const MetricsReport& m) {
    std::cout << "auc\tmrr\tndcg5\tndcg10\tscored\tskipped\n";
    std::cout << f6(m.auc) << "\t" << f6(m.mrr) << "\t" << f6(m.ndcg5) << "\t" << f6(m.ndcg10) << "\t"
              << m.scored << "\t" << m.skipped << "\n\n";
    std::cout << "auc = " << f6(m.auc) << "\n";
    std::cout << "mrr = " << f6(m.mrr) << "\n";
    std::cout << "ndcg5 = " << f6(m.ndcg5) << "\n";
    std::cout << "ndcg10 = " << f6(m.ndcg10) << "\n";
    std::cout << "scored = " << m.scored << "\n";
    std::cout << "skipped = " << m.skipped << "\n";
}

int cmd_gen(const std::string& gen_path, const std::string& out_dir, uint64_t seed) {
    GenConfig g;
    if (!gen_path.empty()) {
        std::ifstream in(gen_path);
        if (!in) {
            std::cerr << "config error: cannot open generator config " << gen_path << "\n";
            return kExitConfig;
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        try {
            g = parse_gen_config_text(ss.str(), gen_path);
            g.validate();
        } catch (const std::exception& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return kExitConfig;
        }
    }
    SynthFiles files;
    try {
        files = generate_synthetic_files(g, seed);
    } catch (const std::exception& e) {
        std::cerr << "generator error: " << e.what() << "\n";
        return kExitConfig;
    }
    fs::create_directories(out_dir);
    auto put = [&](const std::string& name, const std::string& body) {
        std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
        f << body;
    };
    put("news.tsv", files.news_tsv);
    put("behaviors_train.tsv", files.behaviors_train);
    put("behaviors_val.tsv", files.behaviors_val);
    put("words.vec", files.words_vec);
    put("entities.vec", files.entities_vec);
    put("kg_edges.tsv", files.kg_edges);

    AppConfig cfg;
    auto abs = [&](const char* n) { return (fs::path(out_dir) / n).string(); };
    cfg.news = abs("news.tsv");
    cfg.behaviors_train = abs("behaviors_train.tsv");
    cfg.behaviors_val = abs("behaviors_val.tsv");
    cfg.word_vectors = abs("words.vec");
    cfg.entity_vectors = abs("entities.vec");
    cfg.kg_edges = abs("kg_edges.tsv");
    cfg.model.word_dim = g.word_dim;
    cfg.model.entity_dim = g.entity_dim;
    cfg.seed = seed;
    cfg.checkpoint = abs("model.ckpt");
    cfg.metrics_log = abs("metrics.tsv");
    put("corpus.conf", canonical_config(cfg));
    std::cout << "wrote corpus to " << out_dir << " (news=" << g.news << ", train=" << g.train_impressions
              << ", val=" << g.val_impressions << ")\n";
    return 0;
}

int cmd_train(const AppConfig& cfg) {
    try {
        validate_for_training(cfg);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    LoadedData data;
    try {
        data = load_dataset(cfg, true, true, false);
    } catch (const ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    }
    if (data.ds.val.empty()) {
        std::cerr << "config error: config field 'data.behaviors_val' names an empty impression set\n";
        return kExitConfig;
    }
    auto params = registry_for(cfg, data.ds);
    TrainOptions opt;
    opt.epochs = cfg.epochs;
    opt.batch_size = cfg.batch_size;
    opt.learning_rate = cfg.learning_rate;
    opt.negatives = cfg.negatives;
    opt.patience = cfg.patience;
    opt.seed = cfg.seed;
    opt.threads = cfg.threads;
    opt.metrics_log_path = cfg.metrics_log;
    opt.checkpoint_path = cfg.checkpoint;
    opt.checkpoint_meta["config"] = canonical_config(cfg);
    opt.on_epoch = [](const EpochRow& row) {
        std::cout << metrics_row(row.epoch, row.loss, row.val) << "\n" << std::flush;
        return true;
    };
    try {
        auto report = train(data.ds, data.ds.val, cfg.model, params, opt);
        std::cout << "best epoch " << report.best_epoch << " (val auc " << f6(report.best_auc) << ")\n";
    } catch (const std::exception& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}

int cmd_evaluate(const AppConfig& cfg, const std::string& ckpt, const std::string& split,
                 const std::string& cache_path) {
    LoadedData data;
    try {
        data = load_dataset(cfg, split == "train", split == "val", split == "test");
    } catch (const ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    }
    auto params = registry_for(cfg, data.ds);
    load_checkpoint_or_exit(ckpt, params);

    PrecomputedHm hm;
    const PrecomputedHm* hmp = nullptr;
    if (!cache_path.empty()) {
        try {
            hm = load_hm_cache(cache_path, data.ds.news, params);
            hmp = &hm;
        } catch (const CacheStale& e) {
            std::cerr << "cache error: " << e.what() << "\n";
            return kExitStaleCache;
        } catch (const ArchiveError& e) {
            std::cerr << "cache error: " << e.what() << "\n";
            return kExitStaleCache;
        }
    }

    const auto& imps = split == "train" ? data.ds.train : (split == "test" ? data.ds.test : data.ds.val);
    if (imps.empty()) {
        std::cerr << "data error: split '" << split << "' has no impressions\n";
        return kExitData;
    }
    try {
        auto report = evaluate_impressions(imps, model_scorer(data.ds, params, cfg.model, hmp), cfg.threads);
        print_report(report);
    } catch (const std::exception& e) {
        std::cerr << "evaluation error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}

int cmd_predict(const AppConfig& cfg, const std::string& ckpt, const std::string& behaviors,
                const std::string& output, const std::string& cache_path) {
    LoadedData data;
    std::vector<ImpressionRecord> imps;
    try {
        data = load_dataset(cfg, false, false, false);
        imps = parse_behaviors_file(behaviors, data.ds.news, cfg.model.history_clicks, &data.stats);
    } catch (const ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    }
    if (imps.empty()) {
        std::cerr << "data error: behaviors file " << behaviors << " has no impressions\n";
        return kExitData;
    }
    auto params = registry_for(cfg, data.ds);
    load_checkpoint_or_exit(ckpt, params);

    PrecomputedHm hm;
    const PrecomputedHm* hmp = nullptr;
    if (!cache_path.empty()) {
        try {
            hm = load_hm_cache(cache_path, data.ds.news, params);
            hmp = &hm;
        } catch (const std::exception& e) {
            std::cerr << "cache error: " << e.what() << "\n";
            return kExitStaleCache;
        }
    }

    std::vector<std::vector<double>> scores(imps.size());
    auto scorer = model_scorer(data.ds, params, cfg.model, hmp);
    parallel_for(static_cast<int64_t>(imps.size()), cfg.threads, [&](int64_t lo, int64_t hi, int) {
        for (int64_t i = lo; i < hi; ++i) scores[i] = scorer(imps[i]);
    });

    std::ofstream out(output, std::ios::binary);
    if (!out) {
        std::cerr << "data error: cannot open output " << output << "\n";
        return kExitData;
    }
    for (size_t i = 0; i < imps.size(); ++i) {
        // candidate indices (1-based) in descending score order, stable ties
        std::vector<int> order(scores[i].size());
        for (size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return scores[i][a] > scores[i][b]; });
        out << imps[i].impression_id << " [";
        for (size_t j = 0; j < order.size(); ++j) {
            if (j) out << ",";
            out << order[j] + 1;
        }
        out << "]\n";
    }
    return 0;
}

int cmd_precompute(const AppConfig& cfg, const std::string& ckpt, const std::string& output) {
    LoadedData data;
    try {
        data = load_dataset(cfg, false, false, false);
    } catch (const ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    }
    if (data.ds.news.size() == 0) {
        std::cerr << "data error: news set is empty\n";
        return kExitData;
    }
    auto params = registry_for(cfg, data.ds);
    load_checkpoint_or_exit(ckpt, params);
    auto hm = precompute_hm(data.ds, params, cfg.model, cfg.threads);
    save_hm_cache(hm, data.ds.news, output);
    std::cout << "wrote cache for " << data.ds.news.size() << " news to " << output << "\n";
    return 0;
}

// Welch's t-test helpers over saved report files ("auc = 0.71" style).
double report_metric(const std::string& path, const std::string& key) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open report " + path);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string k = line.substr(0, eq);
        k.erase(k.find_last_not_of(" \t") + 1);
        if (k == key) return std::stod(line.substr(eq + 1));
    }
    throw std::runtime_error("report " + path + " lacks metric '" + key + "'");
}

double betacf(double a, double b, double x) {
    const int kMaxIter = 200;
    const double eps = 3e-14, fpmin = 1e-300;
    double qab = a + b, qap = a + 1, qam = a - 1;
    double c = 1, d = 1 - qab * x / qap;
    if (std::abs(d) < fpmin) d = fpmin;
    d = 1 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

double betai(double a, double b, double x) {
    if (x <= 0) return 0;
    if (x >= 1) return 1;
    const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                               b * std::log(1 - x));
    if (x < (a + 1) / (a + b + 2)) return bt * betacf(a, b, x) / a;
    return 1 - bt * betacf(b, a, 1 - x) / b;
}

int cmd_ttest(const std::vector<std::string>& a_paths, const std::vector<std::string>& b_paths,
              const std::string& metric) {
    try {
        auto collect = [&](const std::vector<std::string>& paths) {
            std::vector<double> v;
            for (const auto& p : paths) v.push_back(report_metric(p, metric));
            return v;
        };
        const auto a = collect(a_paths), b = collect(b_paths);
        if (a.size() < 2 || b.size() < 2) throw std::runtime_error("need at least 2 reports per side");
        auto mean = [](const std::vector<double>& v) {
            double s = 0;
            for (double x : v) s += x;
            return s / v.size();
        };
        auto var = [&](const std::vector<double>& v, double m) {
            double s = 0;
            for (double x : v) s += (x - m) * (x - m);
            return s / (v.size() - 1);
        };
        const double ma = mean(a), mb = mean(b);
        const double va = var(a, ma), vb = var(b, mb);
        const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
        const double se2 = va / na + vb / nb;
        const double t = (ma - mb) / std::sqrt(se2);
        const double df = se2 * se2 / ((va / na) * (va / na) / (na - 1) + (vb / nb) * (vb / nb) / (nb - 1));
        const double p = betai(df / 2, 0.5, df / (df + t * t));  // two-sided
        std::cout << "metric = " << metric << "\n";
        std::cout << "mean_a = " << f6(ma) << " (n=" << a.size() << ")\n";
        std::cout << "mean_b = " << f6(mb) << " (n=" << b.size() << ")\n";
        std::cout << "t = " << f6(t) << "\n";
        std::cout << "df = " << f6(df) << "\n";
        std::cout << "p = " << f6(p) << "\n";
    } catch (const std::exception& e) {
        std::cerr << "ttest error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge-aware interactive news recommendation"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
    std::string gen_config, gen_out = "corpus";
    uint64_t gen_seed = 42;
    gen->add_option("--gen-config", gen_config, "generator key=value config file");
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--seed", gen_seed, "generator seed");

    // shared options
    std::string config_path, checkpoint_path, cache_path, behaviors_path, output_path;
    std::string split = "val", metric = "auc";
    std::vector<std::string> overrides, a_reports, b_reports;

    auto add_common = [&](CLI::App* cmd, bool needs_ckpt) {
        cmd->add_option("--config", config_path, "run config file")->required();
        cmd->add_option("--set", overrides, "override a config field, e.g. --set \"train.seed = 7\"");
        if (needs_ckpt) cmd->add_option("--checkpoint", checkpoint_path, "parameter archive")->required();
    };

    auto* tr = app.add_subcommand("train", "train and checkpoint the best validation epoch");
    add_common(tr, false);

    auto* ev = app.add_subcommand("evaluate", "report ranking metrics for a checkpoint");
    add_common(ev, true);
    ev->add_option("--split", split, "train|val|test (default val)");
    ev->add_option("--cache", cache_path, "precomputed per-news cache archive");

    auto* pr = app.add_subcommand("predict", "write ranked candidate lists");
    add_common(pr, true);
    pr->add_option("--behaviors", behaviors_path, "behaviors file to rank")->required();
    pr->add_option("--output", output_path, "output path")->required();
    pr->add_option("--cache", cache_path, "precomputed per-news cache archive");

    auto* pc = app.add_subcommand("precompute", "precompute per-news contextual/entity summaries");
    add_common(pc, true);
    pc->add_option("--output", output_path, "cache archive path")->required();

    auto* cf = app.add_subcommand("config", "print the canonical form of a config file");
    cf->add_option("--config", config_path, "run config file")->required();

    auto* tt = app.add_subcommand("ttest", "Welch t-test between two report sets");
    tt->add_option("--a", a_reports, "reports for side A")->required();
    tt->add_option("--b", b_reports, "reports for side B")->required();
    tt->add_option("--metric", metric, "metric key (default auc)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(gen_config, gen_out, gen_seed);
        if (tr->parsed()) return cmd_train(load_config_or_exit(config_path, overrides));
        if (ev->parsed())
            return cmd_evaluate(load_config_or_exit(config_path, overrides), checkpoint_path, split, cache_path);
        if (pr->parsed())
            return cmd_predict(load_config_or_exit(config_path, overrides), checkpoint_path, behaviors_path,
                               output_path, cache_path);
        if (pc->parsed())
            return cmd_precompute(load_config_or_exit(config_path, overrides), checkpoint_path, output_path);
        if (cf->parsed()) {
            std::cout << canonical_config(load_config_or_exit(config_path, overrides));
            return 0;
        }
        if (tt->parsed()) return cmd_ttest(a_reports, b_reports, metric);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
