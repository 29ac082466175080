#pragma once

// Decision thresholds for probabilistic classifiers: exact ROC construction and
// optimization under Youden's J, F1, or a target precision/recall.
//
// Only distinct score values (plus one sentinel above the maximum) need to be
// examined: for any tau in [0,1] the confusion counts of `p >= tau` equal those
// at the smallest candidate >= tau.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "epu/error.hpp"
#include "epu/eval.hpp"
#include "epu/labels.hpp"
#include "epu/scores.hpp"
#include "epu/split.hpp"

namespace epu {

struct ScoredLabel {
    double p = 0;
    bool gold = false;
};

/// Where a threshold is being fit. Fitting must be explicit about its data:
/// either the validation partition of a split, or the whole labelled pool.
enum class FitScope { validation, pooled };

/// Scored gold labels a threshold may be fit on.
class ValidationSample {
public:
    ValidationSample(std::vector<ScoredLabel> items, FitScope scope) : items_(std::move(items)), scope_(scope) {}

    /// Validation-partition documents that have both a score and a gold label.
    static ValidationSample from_split(const ScoreSet& scores, const Labels& gold, const SplitAssignment& split) {
        std::vector<ScoredLabel> items;
        for (const auto& [id, g] : gold.entries()) {
            if (split.find(id) != Partition::validation) continue;
            if (auto p = scores.find(id)) items.push_back({*p, g});
        }
        return ValidationSample(std::move(items), FitScope::validation);
    }

    /// Every document with both a score and a gold label.
    static ValidationSample pooled(const ScoreSet& scores, const Labels& gold) {
        std::vector<ScoredLabel> items;
        for (const auto& [id, g] : gold.entries())
            if (auto p = scores.find(id)) items.push_back({*p, g});
        return ValidationSample(std::move(items), FitScope::pooled);
    }

    [[nodiscard]] const std::vector<ScoredLabel>& items() const { return items_; }
    [[nodiscard]] FitScope scope() const { return scope_; }
    [[nodiscard]] std::size_t size() const { return items_.size(); }

private:
    std::vector<ScoredLabel> items_;
    FitScope scope_;
};

struct RocPoint {
    double tau = 0;
    std::uint64_t tp = 0, fp = 0;
    double tpr = 0, fpr = 0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // ascending tau; last point is the sentinel above the max score
    std::uint64_t positives = 0;
    std::uint64_t negatives = 0;
};

/// Exact ROC over every distinct score plus a sentinel (no interpolation).
[[nodiscard]] inline RocCurve roc(std::vector<ScoredLabel> items) {
    RocCurve c;
    for (const auto& it : items) {
        if (!(it.p >= 0.0 && it.p <= 1.0)) throw ValidationError("score outside [0,1]");
        (it.gold ? c.positives : c.negatives) += 1;
    }
    if (c.positives == 0 || c.negatives == 0)
        throw ValidationError("threshold fitting needs at least one positive and one negative gold label");
    std::sort(items.begin(), items.end(), [](const ScoredLabel& a, const ScoredLabel& b) { return a.p > b.p; });

    const double P = static_cast<double>(c.positives), N = static_cast<double>(c.negatives);
    std::vector<RocPoint> desc;
    desc.push_back({std::nextafter(items.front().p, std::numeric_limits<double>::infinity()), 0, 0, 0.0, 0.0});
    std::uint64_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < items.size();) {
        const double v = items[i].p;
        for (; i < items.size() && items[i].p == v; ++i) (items[i].gold ? tp : fp) += 1;
        desc.push_back({v, tp, fp, static_cast<double>(tp) / P, static_cast<double>(fp) / N});
    }
    c.points.assign(desc.rbegin(), desc.rend());
    return c;
}

[[nodiscard]] inline RocCurve roc(const ValidationSample& sample) { return roc(sample.items()); }

enum class TargetKind { precision, recall };

struct YoudenRule {};
struct F1MaxRule {};
struct TargetMetricRule {
    TargetKind metric = TargetKind::recall;
    double target = 0.85;
};
struct FixedRule {
    double tau = 0.5;
};

using ThresholdRule = std::variant<YoudenRule, F1MaxRule, TargetMetricRule, FixedRule>;

[[nodiscard]] inline std::string to_string(const ThresholdRule& r) {
    struct V {
        std::string operator()(YoudenRule) const { return "youden"; }
        std::string operator()(F1MaxRule) const { return "f1"; }
        std::string operator()(const TargetMetricRule& t) const {
            return std::string(t.metric == TargetKind::precision ? "precision" : "recall") + ":" +
                   csv::format_double(t.target);
        }
        std::string operator()(const FixedRule& f) const { return "fixed:" + csv::format_double(f.tau); }
    };
    return std::visit(V{}, r);
}

/// Parses `youden`, `f1`, `recall[:t]`, `precision[:t]`, `fixed:tau`.
[[nodiscard]] inline ThresholdRule parse_rule(std::string_view s) {
    const auto colon = s.find(':');
    const auto head = s.substr(0, colon);
    std::optional<double> arg;
    if (colon != std::string_view::npos) {
        arg = csv::parse_double(s.substr(colon + 1));
        if (!arg) throw ValidationError("bad rule argument in '" + std::string(s) + "'");
    }
    if (head == "youden" && !arg) return YoudenRule{};
    if ((head == "f1" || head == "f1max") && !arg) return F1MaxRule{};
    if (head == "recall" || head == "precision") {
        const double t = arg.value_or(0.85);
        if (!(t > 0 && t <= 1)) throw ValidationError("target must lie in (0,1]");
        return TargetMetricRule{head == "recall" ? TargetKind::recall : TargetKind::precision, t};
    }
    if (head == "fixed" && arg) {
        if (!(*arg >= 0 && *arg <= 1)) throw ValidationError("fixed threshold must lie in [0,1]");
        return FixedRule{*arg};
    }
    throw ValidationError("unknown threshold rule '" + std::string(s) + "'");
}

struct ThresholdMetrics {
    Metric accuracy, precision, recall, f1, tpr, fpr;
};

struct ThresholdResult {
    double tau = 0;
    ConfusionCounts counts;
    ThresholdMetrics metrics;
    std::string rule;
    FitScope scope = FitScope::validation;
};

[[nodiscard]] inline ThresholdMetrics threshold_metrics(const ConfusionCounts& c) {
    return {statistic_of(c, Statistic::accuracy), statistic_of(c, Statistic::precision),
            statistic_of(c, Statistic::recall),   statistic_of(c, Statistic::f1),
            ratio(c.tp, c.tp + c.fn),             ratio(c.fp, c.fp + c.tn)};
}

namespace detail {

inline ConfusionCounts counts_at(const RocPoint& pt, const RocCurve& c) {
    return {pt.tp, pt.fp, c.negatives - pt.fp, c.positives - pt.tp};
}

using i128 = __int128;

// Youden's J scaled by P*N: TP*N - FP*P.
inline i128 youden_scaled(const RocPoint& pt, const RocCurve& c) {
    return static_cast<i128>(pt.tp) * c.negatives - static_cast<i128>(pt.fp) * c.positives;
}

// F1 = 2TP / (TP + FP + P) as an exact fraction.
inline std::pair<i128, i128> f1_fraction(const RocPoint& pt, const RocCurve& c) {
    return {2 * static_cast<i128>(pt.tp), static_cast<i128>(pt.tp) + pt.fp + c.positives};
}

} // namespace detail

/// Optimizes the threshold under `rule`. Among equally good candidates the
/// lowest tau wins; TargetMetric ties first prefer the higher complementary
/// metric. Candidates above 1 (the sentinel when max score is 1) are skipped.
[[nodiscard]] inline ThresholdResult optimize(const ValidationSample& sample, const ThresholdRule& rule) {
    ThresholdResult out;
    out.rule = to_string(rule);
    out.scope = sample.scope();
    if (const auto* fixed = std::get_if<FixedRule>(&rule)) {
        ConfusionCounts c;
        for (const auto& it : sample.items()) c.add(it.p >= fixed->tau, it.gold);
        if (c.total() == 0) throw ValidationError("no scored gold documents to evaluate");
        out.tau = fixed->tau;
        out.counts = c;
        out.metrics = threshold_metrics(c);
        return out;
    }

    const RocCurve curve = roc(sample);
    std::optional<std::size_t> best;
    for (std::size_t k = 0; k < curve.points.size(); ++k) {
        const auto& pt = curve.points[k];
        if (pt.tau > 1.0) continue;
        if (!best) {
            if (std::holds_alternative<TargetMetricRule>(rule)) {
                const auto& t = std::get<TargetMetricRule>(rule);
                const auto c = detail::counts_at(pt, curve);
                if (!statistic_of(c, t.metric == TargetKind::precision ? Statistic::precision : Statistic::recall))
                    continue;
            }
            best = k;
            continue;
        }
        const auto& bp = curve.points[*best];
        bool better = false;
        if (std::holds_alternative<YoudenRule>(rule)) {
            better = detail::youden_scaled(pt, curve) > detail::youden_scaled(bp, curve);
        } else if (std::holds_alternative<F1MaxRule>(rule)) {
            const auto [a, b] = detail::f1_fraction(pt, curve);
            const auto [c, d] = detail::f1_fraction(bp, curve);
            better = a * d > c * b;
        } else {
            const auto& t = std::get<TargetMetricRule>(rule);
            const auto main_stat = t.metric == TargetKind::precision ? Statistic::precision : Statistic::recall;
            const auto other_stat = t.metric == TargetKind::precision ? Statistic::recall : Statistic::precision;
            const auto m = statistic_of(detail::counts_at(pt, curve), main_stat);
            if (!m) continue;
            const auto bm = *statistic_of(detail::counts_at(bp, curve), main_stat);
            const double d = std::abs(*m - t.target), bd = std::abs(bm - t.target);
            if (d < bd) {
                better = true;
            } else if (d == bd) {
                const double o = statistic_of(detail::counts_at(pt, curve), other_stat).value_or(-1.0);
                const double bo = statistic_of(detail::counts_at(bp, curve), other_stat).value_or(-1.0);
                better = o > bo;
            }
        }
        if (better) best = k;
    }
    if (!best) throw ValidationError("no admissible threshold candidate");
    const auto& pt = curve.points[*best];
    out.tau = pt.tau;
    out.counts = detail::counts_at(pt, curve);
    out.metrics = threshold_metrics(out.counts);
    return out;
}

struct GroupThreshold {
    std::size_t n = 0;
    bool below_min_size = false;
    std::optional<ThresholdResult> result;  // empty when the group failed
    std::string error;
};

/// Independent optimization per group (e.g. per language). A group lacking
/// one of the classes is reported as failed while the others proceed.
[[nodiscard]] inline std::map<std::string, GroupThreshold> optimize_per_group(
    const std::map<std::string, ValidationSample>& groups, const ThresholdRule& rule, std::size_t min_size = 20) {
    std::map<std::string, std::future<GroupThreshold>> pending;
    for (const auto& [name, sample] : groups) {
        pending.emplace(name, std::async(std::launch::async, [&sample, &rule, min_size] {
                            GroupThreshold g;
                            g.n = sample.size();
                            g.below_min_size = g.n < min_size;
                            try {
                                g.result = optimize(sample, rule);
                            } catch (const ValidationError& e) {
                                g.error = e.what();
                            }
                            return g;
                        }));
    }
    std::map<std::string, GroupThreshold> out;
    for (auto& [name, f] : pending) out.emplace(name, f.get());
    return out;
}

/// Splits a sample into groups keyed by `group_of(id)`.
template <class GroupOf>
[[nodiscard]] inline std::map<std::string, ValidationSample> group_samples(const ScoreSet& scores, const Labels& gold,
                                                                    const SplitAssignment* split, GroupOf&& group_of) {
    std::map<std::string, std::vector<ScoredLabel>> items;
    for (const auto& [id, g] : gold.entries()) {
        if (split && split->find(id) != Partition::validation) continue;
        auto p = scores.find(id);
        if (!p) continue;
        items[group_of(id)].push_back({*p, g});
    }
    std::map<std::string, ValidationSample> out;
    const auto scope = split ? FitScope::validation : FitScope::pooled;
    for (auto& [k, v] : items) out.emplace(k, ValidationSample(std::move(v), scope));
    return out;
}

[[nodiscard]] inline nlohmann::ordered_json metric_json(const Metric& m) {
    return m ? nlohmann::ordered_json(*m) : nlohmann::ordered_json(nullptr);
}

/// Threshold report: `{task, model_id, rule, tau, metrics:{...}, group?}`.
[[nodiscard]] inline nlohmann::ordered_json threshold_report(const ThresholdResult& r, const std::string& task,
                                                             const std::string& model_id,
                                                             const std::optional<std::string>& group = std::nullopt) {
    nlohmann::ordered_json j;
    j["task"] = task;
    j["model_id"] = model_id;
    j["rule"] = r.rule;
    j["tau"] = r.tau;
    j["metrics"] = {{"accuracy", metric_json(r.metrics.accuracy)}, {"precision", metric_json(r.metrics.precision)},
                    {"recall", metric_json(r.metrics.recall)},     {"f1", metric_json(r.metrics.f1)},
                    {"tpr", metric_json(r.metrics.tpr)},           {"fpr", metric_json(r.metrics.fpr)}};
    if (group) j["group"] = *group;
    j["fit_scope"] = r.scope == FitScope::validation ? "validation" : "pooled";
    j["counts"] = {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}};
    return j;
}

} // namespace epu
