#pragma once
// Negative sampling, the softmax ranking loss and the epoch loop. The loop is
// bit-deterministic for a fixed (config, seed): sample order, per-sample
// dropout streams and gradient merge order are all derived from the seed and
// never from scheduling.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "adam.hpp"
#include "checkpoint.hpp"
#include "evaluation.hpp"
#include "matcher.hpp"
#include "model_params.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace knews {

struct TrainingSample {
    int impression = 0;         // index into the training impressions
    int positive = 0;           // news index
    std::vector<int> negatives;  // news indices, |negatives| == U
};

struct SampleBuildStats {
    int skipped_impressions = 0;  // impressions with no negative candidate
};

// One sample per positive candidate; negatives drawn uniformly without
// replacement from the impression's unclicked candidates, or with
// replacement when fewer than U exist.
inline std::vector<TrainingSample> build_training_samples(const std::vector<ImpressionRecord>& impressions,
                                                          int U, uint64_t seed,
                                                          SampleBuildStats* stats = nullptr) {
    if (U < 1) throw std::invalid_argument("build_training_samples: U must be >= 1");
    Rng rng(mix64(seed, 0x6e656773ULL));
    std::vector<TrainingSample> out;
    for (size_t imp = 0; imp < impressions.size(); ++imp) {
        std::vector<int> negs;
        for (const auto& [news, label] : impressions[imp].candidates)
            if (label == 0) negs.push_back(news);
        if (negs.empty()) {
            if (stats) ++stats->skipped_impressions;
            continue;
        }
        for (const auto& [news, label] : impressions[imp].candidates) {
            if (label != 1) continue;
            TrainingSample s;
            s.impression = static_cast<int>(imp);
            s.positive = news;
            if (static_cast<int>(negs.size()) >= U) {
                for (int k : rng.sample_without_replacement(static_cast<int>(negs.size()), U))
                    s.negatives.push_back(negs[k]);
            } else {
                for (int k = 0; k < U; ++k) s.negatives.push_back(negs[rng.uniform_int(static_cast<int>(negs.size()))]);
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

// -log( exp(z+) / (exp(z+) + sum_j exp(z_j)) ), stabilized via log-sum-exp.
inline double nce_loss(double z_pos, const std::vector<double>& z_neg) {
    double mx = z_pos;
    for (double z : z_neg) mx = std::max(mx, z);
    double s = std::exp(z_pos - mx);
    for (double z : z_neg) s += std::exp(z - mx);
    return mx + std::log(s) - z_pos;
}

struct EpochRow {
    int epoch = 0;
    double loss = 0;
    MetricsReport val;
};

struct TrainOptions {
    int epochs = 20;
    int batch_size = 16;
    double learning_rate = 5e-5;
    int negatives = 4;  // U
    int patience = 3;   // early stop after this many non-improving epochs
    uint64_t seed = 42;
    int threads = 0;
    std::string metrics_log_path;  // per-epoch TSV, empty to skip
    std::string checkpoint_path;   // best-AUC checkpoint, empty to skip
    std::map<std::string, std::string> checkpoint_meta;
    // Observer per finished epoch; return false to stop training.
    std::function<bool(const EpochRow&)> on_epoch;
};

struct TrainReport {
    std::vector<EpochRow> rows;
    int best_epoch = -1;
    double best_auc = 0;
    int skipped_impressions = 0;
};

inline std::string metrics_row(int epoch, double loss, const MetricsReport& m) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f", epoch, loss, m.auc, m.mrr, m.ndcg5,
                  m.ndcg10);
    return buf;
}

template <typename T>
TrainReport train(const Dataset& ds, const std::vector<ImpressionRecord>& eval_impressions,
                  const ModelConfig& cfg, ParamRegistry<T>& params, const TrainOptions& opt) {
    if (opt.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    SampleBuildStats sstats;
    const auto samples = build_training_samples(ds.train, opt.negatives, opt.seed, &sstats);
    if (samples.empty()) throw std::runtime_error("train: no usable training samples");

    AdamState<T> adam(params, opt.learning_rate);
    const int threads = resolve_threads(opt.threads);
    std::vector<GradStore<T>> worker_grads;
    for (int t = 0; t < threads; ++t) worker_grads.emplace_back(params, /*include_frozen=*/false);
    GradStore<T> total(params, false);

    std::ofstream log;
    if (!opt.metrics_log_path.empty()) {
        log.open(opt.metrics_log_path);
        if (!log) throw std::runtime_error("train: cannot open metrics log " + opt.metrics_log_path);
    }

    TrainReport report;
    report.skipped_impressions = sstats.skipped_impressions;
    int since_best = 0;
    for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
        std::vector<int> order(samples.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        Rng shuffle_rng(mix64(opt.seed, 0x65706f63ULL, static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0;
        for (size_t start = 0; start < order.size(); start += opt.batch_size) {
            const int bn = static_cast<int>(std::min<size_t>(opt.batch_size, order.size() - start));
            std::vector<double> losses(bn, 0.0);
            parallel_for(bn, threads, [&](int64_t lo, int64_t hi, int slot) {
                for (int64_t b = lo; b < hi; ++b) {
                    const TrainingSample& s = samples[order[start + b]];
                    Rng drop_rng(mix64(opt.seed, static_cast<uint64_t>(epoch) << 20,
                                       static_cast<uint64_t>(start + b)));
                    Tape<T> tape(true);
                    ForwardContext<T> ctx(tape, params, &worker_grads[slot], cfg, ds.news, ds.kg,
                                          /*training=*/true, &drop_rng);
                    auto loss = ctx.sample_loss(ds.train[s.impression].user, s.positive, s.negatives);
                    losses[b] = static_cast<double>(tape.value(loss).data[0]);
                    tape.backward(loss, static_cast<T>(1.0 / bn));
                }
            });
            for (int b = 0; b < bn; ++b) {
                if (!std::isfinite(losses[b]))
                    throw std::runtime_error("train: non-finite loss in epoch " + std::to_string(epoch) +
                                             ", batch starting at sample " + std::to_string(start));
                loss_sum += losses[b];
            }
            for (int t = 0; t < threads; ++t) {
                total.add(worker_grads[t]);
                worker_grads[t].zero();
            }
            adam.step(params, total);
            total.zero();
        }

        EpochRow row;
        row.epoch = epoch;
        row.loss = loss_sum / static_cast<double>(samples.size());
        row.val = evaluate_impressions(
            eval_impressions,
            [&](const ImpressionRecord& imp) {
                std::vector<int> cands;
                for (const auto& c : imp.candidates) cands.push_back(c.first);
                return score_impression(ds, params, cfg, imp.user, cands);
            },
            threads);
        if (log) log << metrics_row(epoch, row.loss, row.val) << "\n" << std::flush;
        report.rows.push_back(row);

        if (row.val.auc > report.best_auc || report.best_epoch < 0) {
            report.best_auc = row.val.auc;
            report.best_epoch = epoch;
            since_best = 0;
            if (!opt.checkpoint_path.empty()) {
                auto meta = opt.checkpoint_meta;
                meta["kind"] = "checkpoint";
                meta["epoch"] = std::to_string(epoch);
                archive_from_params(params, meta).save(opt.checkpoint_path);
            }
        } else if (++since_best >= opt.patience) {
            break;
        }
        if (opt.on_epoch && !opt.on_epoch(row)) break;
    }
    return report;
}

}  // namespace knews
