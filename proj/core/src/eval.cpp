#include "icudyn/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include "icudyn/errors.hpp"
#include "icudyn/model.hpp"
#include "icudyn/parallel.hpp"
#include "icudyn/rng.hpp"

namespace icudyn {

namespace {

void check_scores_labels(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.empty()) fail_data("E_EMPTY_INPUT", "no scores to evaluate");
    if (scores.size() != labels.size()) fail_data("E_SHAPE", "score and label counts differ");
    bool any_pos = false, any_neg = false;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) fail_data("E_BAD_LABEL", "labels must be 0 or 1");
        (labels[i] == 1 ? any_pos : any_neg) = true;
        if (!std::isfinite(scores[i]))
            fail_numeric("E_NONFINITE", "non-finite score at index " + std::to_string(i));
    }
    if (!(any_pos && any_neg))
        fail_data("E_SINGLE_CLASS", "both outcome classes are required for a ROC curve");
}

// AUC over a subset given by index, without building the curve. Ties get the
// usual half credit, which matches the trapezoid over a tied-group step.
double auc_indexed(const std::vector<double>& scores, const std::vector<int>& labels,
                   const std::vector<std::size_t>& idx) {
    std::vector<std::size_t> order = idx;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    double pos = 0.0, neg = 0.0;
    for (auto i : idx) (labels[i] == 1 ? pos : neg) += 1.0;

    double area = 0.0;  // accumulated in pair units, normalised at the end
    double seen_neg = 0.0;
    std::size_t k = 0;
    while (k < order.size()) {
        std::size_t j = k;
        double group_pos = 0.0, group_neg = 0.0;
        while (j < order.size() && scores[order[j]] == scores[order[k]]) {
            (labels[order[j]] == 1 ? group_pos : group_neg) += 1.0;
            ++j;
        }
        area += group_pos * (seen_neg + 0.5 * group_neg);
        seen_neg += group_neg;
        k = j;
    }
    // `area` counts discordant pairs plus half the ties, exactly (dyadic
    // sums). The single division keeps AUC(s) + AUC(-s) = 1 exact.
    return (pos * neg - area) / (pos * neg);
}

}  // namespace

RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_scores_labels(scores, labels);

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    double pos = 0.0, neg = 0.0;
    for (int y : labels) (y == 1 ? pos : neg) += 1.0;

    RocResult result;
    result.points.emplace_back(0.0, 0.0);
    double tp = 0.0, fp = 0.0;
    double area = 0.0;  // discordant pairs + half the ties, exact dyadic sums
    std::size_t k = 0;
    while (k < order.size()) {
        std::size_t j = k;
        // A group of tied scores moves the curve in one straight step, so
        // ties contribute a diagonal segment instead of an axis staircase.
        double group_pos = 0.0, group_neg = 0.0;
        while (j < order.size() && scores[order[j]] == scores[order[k]]) {
            (labels[order[j]] == 1 ? group_pos : group_neg) += 1.0;
            ++j;
        }
        area += group_pos * (fp + 0.5 * group_neg);
        tp += group_pos;
        fp += group_neg;
        result.points.emplace_back(fp / neg, tp / pos);
        k = j;
    }

    // Pair counting rather than integrating the stored (divided) points: the
    // two agree to ~1e-15, but the single division also keeps
    // AUC(s) + AUC(-s) = 1 exact.
    result.auc = (pos * neg - area) / (pos * neg);
    return result;
}

double auc_pvalue(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                  const std::vector<int>& labels, int n_boot, std::uint64_t seed, int threads) {
    check_scores_labels(scores_a, labels);
    check_scores_labels(scores_b, labels);
    if (n_boot < 1) fail_data("E_CONFIG", "bootstrap resample count must be >= 1");

    const std::size_t n = labels.size();
    std::vector<double> deltas(static_cast<std::size_t>(n_boot));

    parallel_for(static_cast<std::size_t>(n_boot), threads, [&](std::size_t r) {
        Rng rng(mix_seed(mix_seed(seed, 0x70626f6f74ULL), static_cast<std::uint64_t>(r)));
        std::vector<std::size_t> idx(n);
        for (int attempt = 0;; ++attempt) {
            if (attempt >= 1000)
                fail_data("E_SINGLE_CLASS",
                          "bootstrap resample kept drawing a single class; cohort too small");
            bool any_pos = false, any_neg = false;
            for (std::size_t i = 0; i < n; ++i) {
                idx[i] = rng.uniform_int(n);
                (labels[idx[i]] == 1 ? any_pos : any_neg) = true;
            }
            if (any_pos && any_neg) break;
        }
        deltas[r] = auc_indexed(scores_a, labels, idx) - auc_indexed(scores_b, labels, idx);
    });

    std::size_t le = 0, ge = 0;
    for (double d : deltas) {
        if (d <= 0.0) ++le;
        if (d >= 0.0) ++ge;
    }
    const double denom = static_cast<double>(n_boot) + 1.0;
    const double tail = static_cast<double>(std::min(le, ge) + 1) / denom;
    return std::min(1.0, 2.0 * tail);
}

SweepResult observation_sweep(const ModelParams& params,
                              const std::vector<EncounterMatrix>& encounters,
                              const std::vector<double>& hours, double delta_t_hours,
                              int threads) {
    if (hours.empty()) fail_data("E_CONFIG", "no observation durations given");
    for (double h : hours)
        if (h <= 0.0) fail_data("E_CONFIG", "observation durations must be positive");
    for (std::size_t k = 1; k < hours.size(); ++k)
        if (hours[k] <= hours[k - 1])
            fail_data("E_CONFIG", "observation durations must be strictly increasing");
    if (encounters.empty()) fail_data("E_EMPTY_INPUT", "no encounters to evaluate");

    const double min_window = *std::min_element(hours.begin(), hours.end()) * 60.0;
    const double max_window = *std::max_element(hours.begin(), hours.end()) * 60.0;

    // Keep one fixed cohort across all durations, so the per-row AUCs differ
    // only in how much of each encounter the model has seen.
    std::vector<std::size_t> included;
    for (std::size_t i = 0; i < encounters.size(); ++i) {
        const auto& m = encounters[i];
        if (m.times.empty()) continue;
        if (m.times.front() <= min_window && m.times.back() >= max_window) included.push_back(i);
    }
    SweepResult result;
    result.excluded = encounters.size() - included.size();
    if (included.empty())
        fail_data("E_EMPTY_INPUT", "no encounter spans every requested observation duration");

    std::vector<int> labels(included.size());
    for (std::size_t k = 0; k < included.size(); ++k)
        labels[k] = encounters[included[k]].survived ? 0 : 1;

    for (double h : hours) {
        std::vector<double> scores(included.size());
        parallel_for(included.size(), threads, [&](std::size_t k) {
            scores[k] = predict_at(encounters[included[k]], h * 60.0, delta_t_hours, params);
        });
        SweepRow row;
        row.observe_hours = h;
        row.auc = roc_auc(scores, labels).auc;
        row.n_encounters = included.size();
        result.rows.push_back(row);
    }
    return result;
}

}  // namespace icudyn
