#pragma once

// Classification metrics (accuracy, precision, recall, F1), document-level
// bootstrap, and the diagnostic breakdowns by certainty and article length.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "epu/corpus.hpp"
#include "epu/csv.hpp"
#include "epu/error.hpp"
#include "epu/labels.hpp"
#include "epu/parallel.hpp"
#include "epu/scores.hpp"
#include "epu/text.hpp"

namespace epu {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

    [[nodiscard]] std::uint64_t total() const { return tp + fp + tn + fn; }
    [[nodiscard]] std::uint64_t positives() const { return tp + fn; }
    [[nodiscard]] std::uint64_t negatives() const { return fp + tn; }

    void add(bool predicted, bool gold) {
        if (predicted) (gold ? tp : fp) += 1;
        else (gold ? fn : tn) += 1;
    }

    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp, fp += o.fp, tn += o.tn, fn += o.fn;
        return *this;
    }

    bool operator==(const ConfusionCounts&) const = default;
};

/// Metric value; nullopt is the undefined marker for a zero denominator.
using Metric = std::optional<double>;

[[nodiscard]] inline Metric ratio(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

enum class Statistic { accuracy, precision, recall, f1 };

[[nodiscard]] inline std::string_view to_string(Statistic s) {
    switch (s) {
    case Statistic::accuracy: return "accuracy";
    case Statistic::precision: return "precision";
    case Statistic::recall: return "recall";
    case Statistic::f1: return "f1";
    }
    return "?";
}

[[nodiscard]] inline Statistic parse_statistic(std::string_view s) {
    if (s == "accuracy") return Statistic::accuracy;
    if (s == "precision") return Statistic::precision;
    if (s == "recall") return Statistic::recall;
    if (s == "f1") return Statistic::f1;
    throw ValidationError("unknown statistic '" + std::string(s) + "'");
}

struct BootstrapSummary {
    Statistic statistic = Statistic::f1;
    double mean = 0;
    double ci_low = 0;
    double ci_high = 0;
    double level = 0.95;
    std::size_t resamples = 0;  // B
    std::size_t dropped = 0;    // resamples where the statistic was undefined
    std::uint64_t seed = 0;
};

struct MetricReport {
    ConfusionCounts counts;
    Metric accuracy, precision, recall, f1;
    std::map<Statistic, BootstrapSummary> bootstrap;

    [[nodiscard]] Metric get(Statistic s) const {
        switch (s) {
        case Statistic::accuracy: return accuracy;
        case Statistic::precision: return precision;
        case Statistic::recall: return recall;
        case Statistic::f1: return f1;
        }
        return std::nullopt;
    }
};

[[nodiscard]] inline Metric statistic_of(const ConfusionCounts& c, Statistic s) {
    switch (s) {
    case Statistic::accuracy: return ratio(c.tp + c.tn, c.total());
    case Statistic::precision: return ratio(c.tp, c.tp + c.fp);
    case Statistic::recall: return ratio(c.tp, c.tp + c.fn);
    case Statistic::f1: return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
    }
    return std::nullopt;
}

/// accuracy = (TP+TN)/total, precision = TP/(TP+FP), recall = TP/(TP+FN),
/// F1 = 2TP/(2TP+FP+FN).
[[nodiscard]] inline MetricReport metrics(const ConfusionCounts& c) {
    if (c.total() == 0) throw ValidationError("cannot compute metrics over zero documents");
    MetricReport r;
    r.counts = c;
    r.accuracy = statistic_of(c, Statistic::accuracy);
    r.precision = statistic_of(c, Statistic::precision);
    r.recall = statistic_of(c, Statistic::recall);
    r.f1 = statistic_of(c, Statistic::f1);
    return r;
}

/// Aligned predicted/gold pairs, in id order.
struct LabeledPairs {
    std::vector<std::string> ids;
    std::vector<std::uint8_t> predicted;
    std::vector<std::uint8_t> gold;
};

/// Joins predictions with gold labels; the id sets must be identical.
[[nodiscard]] inline LabeledPairs align(const Labels& predicted, const Labels& gold) {
    if (predicted.size() != gold.size()) {
        throw ValidationError("prediction/gold id mismatch: " + std::to_string(predicted.size()) + " predictions vs " +
                              std::to_string(gold.size()) + " gold labels");
    }
    LabeledPairs out;
    out.ids.reserve(gold.size());
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const auto& [pid, pv] = predicted.entries()[i];
        const auto& [gid, gv] = gold.entries()[i];
        if (pid != gid) throw ValidationError("prediction/gold id mismatch at '" + (pid < gid ? pid : gid) + "'");
        out.ids.push_back(gid);
        out.predicted.push_back(pv);
        out.gold.push_back(gv);
    }
    return out;
}

[[nodiscard]] inline ConfusionCounts confusion(std::span<const std::uint8_t> predicted,
                                               std::span<const std::uint8_t> gold) {
    if (predicted.size() != gold.size()) throw ValidationError("prediction/gold length mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < gold.size(); ++i) c.add(predicted[i] != 0, gold[i] != 0);
    return c;
}

[[nodiscard]] inline ConfusionCounts confusion(const Labels& predicted, const Labels& gold) {
    const auto pairs = align(predicted, gold);
    return confusion(pairs.predicted, pairs.gold);
}

struct BootstrapOptions {
    std::size_t resamples = 1000;
    std::uint64_t seed = 0;
    double level = 0.95;
    unsigned threads = 0;
};

namespace detail {

/// Linear-interpolated percentile of sorted data (type 7).
inline double percentile_sorted(const std::vector<double>& v, double q) {
    if (v.size() == 1) return v.front();
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + (v[hi] - v[lo]) * frac;
}

} // namespace detail

/// Resamples documents with replacement B times. Resample b draws from an
/// engine seeded by (seed, b), so the result is independent of scheduling.
/// Pairs must be in id order (as produced by `align`).
[[nodiscard]] inline BootstrapSummary bootstrap(const LabeledPairs& pairs, Statistic stat,
                                                const BootstrapOptions& opt = {}) {
    if (opt.resamples < 1) throw ValidationError("bootstrap needs B >= 1");
    if (!(opt.level > 0 && opt.level < 1)) throw ValidationError("confidence level must be in (0,1)");
    const std::size_t n = pairs.gold.size();
    if (n == 0) throw ValidationError("bootstrap over zero documents");

    std::vector<Metric> values(opt.resamples);
    parallel_for(opt.resamples, opt.threads, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b) {
            std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                              static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
            std::mt19937_64 rng(seq);
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            ConfusionCounts c;
            for (std::size_t k = 0; k < n; ++k) {
                const auto i = pick(rng);
                c.add(pairs.predicted[i] != 0, pairs.gold[i] != 0);
            }
            values[b] = statistic_of(c, stat);
        }
    });

    std::vector<double> defined;
    defined.reserve(values.size());
    for (const auto& v : values)
        if (v) defined.push_back(*v);
    if (defined.empty()) throw ValidationError("statistic undefined in every bootstrap resample");
    BootstrapSummary s;
    s.statistic = stat;
    s.resamples = opt.resamples;
    s.dropped = opt.resamples - defined.size();
    s.seed = opt.seed;
    s.level = opt.level;
    double sum = 0;
    for (double v : defined) sum += v;
    s.mean = sum / static_cast<double>(defined.size());
    std::sort(defined.begin(), defined.end());
    const double alpha = (1.0 - opt.level) / 2.0;
    s.ci_low = std::min(detail::percentile_sorted(defined, alpha), s.mean);
    s.ci_high = std::max(detail::percentile_sorted(defined, 1.0 - alpha), s.mean);
    return s;
}

/// Scored, gold-labelled documents with optional certainty and length.
struct EvalRecord {
    std::string id;
    double p = 0;
    bool gold = false;
    std::optional<int> certainty;
    std::size_t length = 0;  // whitespace tokens of title + body
};

/// Joins a corpus with scores over documents that carry a gold label and a
/// score, in id order.
[[nodiscard]] inline std::vector<EvalRecord> eval_records(const Corpus& corpus, const ScoreSet& scores) {
    std::vector<EvalRecord> out;
    for (const auto& d : corpus.docs()) {
        if (!d.gold_epu) continue;
        auto p = scores.find(d.id);
        if (!p) continue;
        out.push_back({d.id, *p, *d.gold_epu, d.certainty, text::whitespace_token_count(d.full_text())});
    }
    return out;
}

struct CertaintyErrorRow {
    int certainty = 0;
    ConfusionCounts counts;
    double error_rate = 0;  // (FP + FN) / n
    bool below_min = false;
};

/// Misclassification rate per auditor-certainty level, with p >= tau as positive.
[[nodiscard]] inline std::vector<CertaintyErrorRow> misclassification_by_certainty(
    const std::vector<EvalRecord>& records, double tau, std::size_t min_n = 30) {
    std::map<int, ConfusionCounts> bins;
    for (const auto& r : records)
        if (r.certainty) bins[*r.certainty].add(r.p >= tau, r.gold);
    if (bins.empty()) throw ValidationError("no evaluated document carries a certainty score");
    std::vector<CertaintyErrorRow> out;
    for (const auto& [level, c] : bins) {
        CertaintyErrorRow row{level, c, 0, c.total() < min_n};
        row.error_rate = static_cast<double>(c.fp + c.fn) / static_cast<double>(c.total());
        out.push_back(row);
    }
    return out;
}

struct HistogramRow {
    int certainty = 0;
    std::size_t bin = 0;
    double lo = 0, hi = 0;
    std::size_t count = 0;
    double mass = 0;
};

/// Normalized score histogram over [0,1] per certainty level (`bins` equal
/// bins; p = 1 falls in the last bin). Rows = levels x bins.
[[nodiscard]] inline std::vector<HistogramRow> score_distribution_by_certainty(const std::vector<EvalRecord>& records,
                                                                               std::size_t bins = 20) {
    if (bins < 1) throw ValidationError("histogram needs at least one bin");
    std::map<int, std::vector<std::size_t>> counts;
    for (const auto& r : records) {
        if (!r.certainty) continue;
        auto& c = counts.try_emplace(*r.certainty, bins, 0).first->second;
        auto k = static_cast<std::size_t>(r.p * static_cast<double>(bins));
        ++c[std::min(k, bins - 1)];
    }
    std::vector<HistogramRow> out;
    for (const auto& [level, c] : counts) {
        std::size_t n = 0;
        for (auto v : c) n += v;
        for (std::size_t k = 0; k < bins; ++k)
            out.push_back({level, k, static_cast<double>(k) / bins, static_cast<double>(k + 1) / bins, c[k],
                           static_cast<double>(c[k]) / static_cast<double>(n)});
    }
    return out;
}

struct LengthBinRow {
    std::size_t lo = 0, hi = 0;  // [lo, hi); the last bin includes hi
    ConfusionCounts counts;
    Metric f1;
};

struct LengthBreakdown {
    std::vector<LengthBinRow> rows;
    std::size_t out_of_range = 0;
};

/// F1 per length bin. Edges e0 < e1 < ... < ek define bins [e_i, e_{i+1});
/// the final bin is closed on the right. Documents outside [e0, ek] are counted
/// in `out_of_range`.
[[nodiscard]] inline LengthBreakdown f1_by_length(const std::vector<EvalRecord>& records, double tau,
                                                  const std::vector<std::size_t>& edges) {
    if (edges.size() < 2) throw ValidationError("length bins need at least two edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (edges[i] <= edges[i - 1]) throw ValidationError("length bin edges must be strictly increasing");
    LengthBreakdown out;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) out.rows.push_back({edges[i], edges[i + 1], {}, {}});
    for (const auto& r : records) {
        if (r.length < edges.front() || r.length > edges.back()) {
            ++out.out_of_range;
            continue;
        }
        auto it = std::upper_bound(edges.begin(), edges.end(), r.length);
        auto k = static_cast<std::size_t>(it - edges.begin()) - 1;
        if (k >= out.rows.size()) k = out.rows.size() - 1;
        out.rows[k].counts.add(r.p >= tau, r.gold);
    }
    for (auto& row : out.rows) row.f1 = statistic_of(row.counts, Statistic::f1);
    return out;
}

/// Per-category metrics. A category missing from `gold` (or with no gold
/// documents) gets undefined markers throughout.
[[nodiscard]] inline std::map<std::string, MetricReport> multilabel_metrics(
    const std::map<std::string, Labels>& predicted, const std::map<std::string, Labels>& gold) {
    std::map<std::string, MetricReport> out;
    for (const auto& [cat, pred] : predicted) {
        auto g = gold.find(cat);
        if (g == gold.end() || g->second.empty()) {
            out.emplace(cat, MetricReport{});
            continue;
        }
        out.emplace(cat, metrics(confusion(pred, g->second)));
    }
    return out;
}

} // namespace epu
