#pragma once
// Impression-level ranking metrics. Rank metrics break ties by original
// candidate index (stable sort); the pairwise statistic credits ties 0.5.
// Impressions are scored in parallel but aggregated in a fixed order.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "parallel.hpp"
#include "records.hpp"

namespace knews {

struct MetricsReport {
    double auc = 0, mrr = 0, ndcg5 = 0, ndcg10 = 0;
    int scored = 0, skipped = 0;
};

namespace metric_detail {
inline std::vector<int> ranking(const std::vector<double>& scores) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
    return order;
}
}  // namespace metric_detail

// Fraction of (positive, negative) pairs ranked correctly, ties at half
// credit; computed through average ranks. Returns nothing when the
// impression lacks a positive or a negative.
inline std::optional<double> auc_single(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auc_single: length mismatch");
    const int n = static_cast<int>(scores.size());
    int pos = 0;
    for (int l : labels) pos += l != 0;
    const int neg = n - pos;
    if (pos == 0 || neg == 0) return std::nullopt;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] < scores[b]; });
    // average ascending rank per tie group
    std::vector<double> rank(n);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg = (i + 1 + j) / 2.0;  // mean of ranks i+1 .. j
        for (int k = i; k < j; ++k) rank[order[k]] = avg;
        i = j;
    }
    double pos_rank_sum = 0;
    for (int k = 0; k < n; ++k)
        if (labels[k]) pos_rank_sum += rank[k];
    return (pos_rank_sum - pos * (pos + 1.0) / 2.0) / (static_cast<double>(pos) * neg);
}

// Mean over positives of 1/rank under descending score order.
inline std::optional<double> mrr_single(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("mrr_single: length mismatch");
    int pos = 0;
    for (int l : labels) pos += l != 0;
    if (pos == 0) return std::nullopt;
    const auto order = metric_detail::ranking(scores);
    double acc = 0;
    for (size_t r = 0; r < order.size(); ++r)
        if (labels[order[r]]) acc += 1.0 / static_cast<double>(r + 1);
    return acc / pos;
}

inline std::optional<double> ndcg_at_k(const std::vector<double>& scores, const std::vector<int>& labels,
                                       int k) {
    if (scores.size() != labels.size()) throw std::invalid_argument("ndcg_at_k: length mismatch");
    int pos = 0;
    for (int l : labels) pos += l != 0;
    if (pos == 0) return std::nullopt;
    const auto order = metric_detail::ranking(scores);
    double dcg = 0;
    for (int r = 0; r < std::min<int>(k, static_cast<int>(order.size())); ++r)
        if (labels[order[r]]) dcg += 1.0 / std::log2(r + 2.0);
    double idcg = 0;
    for (int r = 0; r < std::min(k, pos); ++r) idcg += 1.0 / std::log2(r + 2.0);
    return dcg / idcg;
}

// Macro-averaged metrics over impressions that carry at least one positive
// and one negative. The scorer maps an impression to per-candidate scores.
inline MetricsReport evaluate_impressions(
    const std::vector<ImpressionRecord>& impressions,
    const std::function<std::vector<double>(const ImpressionRecord&)>& scorer, int threads = 1) {
    if (impressions.empty()) throw std::invalid_argument("evaluate: no impressions");
    std::vector<std::vector<double>> scores(impressions.size());
    parallel_for(static_cast<int64_t>(impressions.size()), threads, [&](int64_t lo, int64_t hi, int) {
        for (int64_t i = lo; i < hi; ++i) scores[i] = scorer(impressions[i]);
    });
    MetricsReport rep;
    for (size_t i = 0; i < impressions.size(); ++i) {
        std::vector<int> labels;
        labels.reserve(impressions[i].candidates.size());
        for (const auto& c : impressions[i].candidates) labels.push_back(c.second);
        const auto auc = auc_single(scores[i], labels);
        if (!auc) {
            ++rep.skipped;
            continue;
        }
        rep.auc += *auc;
        rep.mrr += *mrr_single(scores[i], labels);
        rep.ndcg5 += *ndcg_at_k(scores[i], labels, 5);
        rep.ndcg10 += *ndcg_at_k(scores[i], labels, 10);
        ++rep.scored;
    }
    if (rep.scored == 0) throw std::runtime_error("evaluate: zero scorable impressions");
    rep.auc /= rep.scored;
    rep.mrr /= rep.scored;
    rep.ndcg5 /= rep.scored;
    rep.ndcg10 /= rep.scored;
    return rep;
}

}  // namespace knews
