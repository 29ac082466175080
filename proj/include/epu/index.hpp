#pragma once

// Aggregation of article-level outputs into a normalized index:
//   X_it  share of positive (or mean probability of) articles of outlet i in period t
//   Y_it  X_it / sd_i, where sd_i is taken over the normalization window T0
//   Z_t   mean of Y_it over outlets active in t
//   EPU_t Z_t / mean(Z over T0) * 100

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "epu/corpus.hpp"
#include "epu/csv.hpp"
#include "epu/date.hpp"
#include "epu/error.hpp"
#include "epu/labels.hpp"
#include "epu/parallel.hpp"
#include "epu/scores.hpp"

namespace epu {

enum class Granularity { month, quarter, year };
enum class SdConvention { sample, population };

[[nodiscard]] inline std::string_view to_string(Granularity g) {
    switch (g) {
    case Granularity::month: return "month";
    case Granularity::quarter: return "quarter";
    case Granularity::year: return "year";
    }
    return "?";
}

[[nodiscard]] inline Granularity parse_granularity(std::string_view s) {
    if (s == "month") return Granularity::month;
    if (s == "quarter") return Granularity::quarter;
    if (s == "year") return Granularity::year;
    throw ValidationError("unknown granularity '" + std::string(s) + "'");
}

[[nodiscard]] inline std::string_view to_string(SdConvention s) {
    return s == SdConvention::sample ? "sample (n-1)" : "population (n)";
}

[[nodiscard]] inline SdConvention parse_sd_convention(std::string_view s) {
    if (s == "sample" || s == "n-1") return SdConvention::sample;
    if (s == "population" || s == "n") return SdConvention::population;
    throw ValidationError("unknown sd convention '" + std::string(s) + "'");
}

/// First month of the period containing `m`.
[[nodiscard]] constexpr Month period_of(Month m, Granularity g) {
    switch (g) {
    case Granularity::month: return m;
    case Granularity::quarter: return Month{m.year, ((m.month - 1) / 3) * 3 + 1};
    case Granularity::year: return Month{m.year, 1};
    }
    return m;
}

struct ShareCell {
    double share = 0;         // X_it in [0,1]
    std::uint64_t count = 0;  // J_it >= 1
};

/// outlet -> period -> cell. Only cells with at least one article exist.
using PanelShares = std::map<std::string, std::map<Month, ShareCell>>;

/// Order-independent accumulator of per-article values in [0,1]. Values are
/// summed as 62-bit fixed-point integers, so any partitioning or ordering of
/// the input produces bit-identical shares.
class ShareAccumulator {
public:
    void add(const std::string& outlet, Month period, double value) {
        if (!(value >= 0.0 && value <= 1.0)) throw ValidationError("article value outside [0,1]");
        auto& c = cells_[outlet][period];
        c.sum += static_cast<std::uint64_t>(std::nearbyint(std::ldexp(value, kFracBits)));
        ++c.count;
    }

    void merge(const ShareAccumulator& o) {
        for (const auto& [outlet, periods] : o.cells_)
            for (const auto& [m, c] : periods) {
                auto& d = cells_[outlet][m];
                d.sum += c.sum;
                d.count += c.count;
            }
    }

    [[nodiscard]] PanelShares finalize() const {
        PanelShares out;
        for (const auto& [outlet, periods] : cells_)
            for (const auto& [m, c] : periods) {
                const long double mean = static_cast<long double>(c.sum) / static_cast<long double>(c.count);
                out[outlet][m] = ShareCell{static_cast<double>(std::ldexp(mean, -kFracBits)), c.count};
            }
        return out;
    }

private:
    static constexpr int kFracBits = 62;
    struct Cell {
        unsigned __int128 sum = 0;
        std::uint64_t count = 0;
    };
    std::map<std::string, std::map<Month, Cell>> cells_;
};

/// Per-document values aligned with `corpus.docs()`.
using ArticleValues = std::vector<double>;

[[nodiscard]] inline ArticleValues values_from_scores(const Corpus& corpus, const ScoreSet& scores) {
    ArticleValues v;
    v.reserve(corpus.size());
    for (const auto& d : corpus.docs()) {
        auto p = scores.find(d.id);
        if (!p) throw ValidationError("no score for document '" + d.id + "'");
        v.push_back(*p);
    }
    return v;
}

[[nodiscard]] inline ArticleValues values_from_scores_binary(const Corpus& corpus, const ScoreSet& scores, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("threshold must lie in [0,1]");
    auto v = values_from_scores(corpus, scores);
    for (auto& x : v) x = x >= tau ? 1.0 : 0.0;
    return v;
}

[[nodiscard]] inline ArticleValues values_from_labels(const Corpus& corpus, const Labels& labels) {
    ArticleValues v;
    v.reserve(corpus.size());
    for (const auto& d : corpus.docs()) {
        auto l = labels.find(d.id);
        if (!l) throw ValidationError("no label for document '" + d.id + "'");
        v.push_back(*l ? 1.0 : 0.0);
    }
    return v;
}

[[nodiscard]] inline ArticleValues values_from_gold(const Corpus& corpus) {
    ArticleValues v;
    v.reserve(corpus.size());
    for (const auto& d : corpus.docs()) {
        if (!d.gold_epu) throw ValidationError("document '" + d.id + "' has no gold label");
        v.push_back(*d.gold_epu ? 1.0 : 0.0);
    }
    return v;
}

struct SharesResult {
    PanelShares shares;
    std::vector<std::string> rejected;  // ids without an outlet
};

/// X_it = mean article value per (outlet, period), J_it = article count.
[[nodiscard]] inline SharesResult article_shares(const Corpus& corpus, const ArticleValues& values,
                                                 Granularity g = Granularity::month, unsigned threads = 0) {
    const auto& docs = corpus.docs();
    if (values.size() != docs.size()) throw ValidationError("article values do not align with the corpus");
    const unsigned t = static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(1, docs.size())));
    std::vector<ShareAccumulator> partial(t);
    std::vector<std::vector<std::string>> rejected(t);
    const std::size_t chunk = (docs.size() + t - 1) / std::max(1u, t);
    parallel_for(t, t, [&](std::size_t b, std::size_t e) {
        for (std::size_t w = b; w < e; ++w) {
            const std::size_t lo = w * chunk, hi = std::min(docs.size(), lo + chunk);
            for (std::size_t i = lo; i < hi; ++i) {
                if (docs[i].outlet.empty()) {
                    rejected[w].push_back(docs[i].id);
                    continue;
                }
                partial[w].add(docs[i].outlet, period_of(docs[i].month(), g), values[i]);
            }
        }
    });
    ShareAccumulator all;
    SharesResult out;
    for (unsigned w = 0; w < t; ++w) {
        all.merge(partial[w]);
        out.rejected.insert(out.rejected.end(), rejected[w].begin(), rejected[w].end());
    }
    out.shares = all.finalize();
    return out;
}

struct DroppedOutlet {
    std::string outlet;
    std::string reason;
};

struct StandardizedPanel {
    std::map<std::string, std::map<Month, double>> y;  // outlet -> period -> Y_it
    std::map<std::string, double> sigma;
    std::vector<DroppedOutlet> dropped;
};

/// Y_it = X_it / sd_i with sd_i over the outlet's periods inside T0. Outlets
/// with fewer than two T0 periods or zero sd are dropped and reported.
[[nodiscard]] inline StandardizedPanel standardize(const PanelShares& shares, MonthRange t0,
                                                   SdConvention sd = SdConvention::sample) {
    if (t0.empty()) throw ValidationError("normalization window is empty");
    StandardizedPanel out;
    for (const auto& [outlet, cells] : shares) {
        std::vector<double> xs;
        for (const auto& [m, c] : cells)
            if (t0.contains(m)) xs.push_back(c.share);
        if (xs.size() < 2) {
            out.dropped.push_back({outlet, "fewer than 2 periods inside the normalization window"});
            continue;
        }
        double mean = 0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double ss = 0;
        for (double x : xs) ss += (x - mean) * (x - mean);
        const double denom = static_cast<double>(sd == SdConvention::sample ? xs.size() - 1 : xs.size());
        const double sigma = std::sqrt(ss / denom);
        if (!(sigma > 0)) {
            out.dropped.push_back({outlet, "zero standard deviation inside the normalization window"});
            continue;
        }
        out.sigma[outlet] = sigma;
        auto& ys = out.y[outlet];
        for (const auto& [m, c] : cells) ys[m] = c.share / sigma;
    }
    if (out.y.empty()) throw ValidationError("every outlet was dropped during standardization");
    return out;
}

struct IndexMeta {
    std::string task;
    std::string model_id;
    std::string construction;  // binary | probabilistic | labels | gold | combined
    std::string rule;          // threshold rule or "probabilistic"
    std::optional<double> tau;
    MonthRange t0{};
    std::string granularity = "month";
    std::string sd_convention = "sample (n-1)";
    std::vector<std::string> outlets;
    std::vector<DroppedOutlet> dropped;
    std::size_t rejected_documents = 0;
    std::string created_at;
    std::map<std::string, double> components;  // series id -> weight (combined indices)
};

struct IndexSeries {
    std::map<Month, double> values;
    std::vector<Month> gaps;  // periods with no covering input (combine only)
    IndexMeta meta;
};

/// Z_t over outlets active in t, rescaled so that the mean over T0 is 100.
/// Every T0 period between the first and last observed period must be covered.
[[nodiscard]] inline IndexSeries aggregate(const StandardizedPanel& panel, MonthRange t0,
                                           Granularity g = Granularity::month) {
    if (t0.empty()) throw ValidationError("normalization window is empty");
    std::map<Month, std::pair<double, std::size_t>> z;  // period -> (sum Y, active outlets)
    for (const auto& [outlet, ys] : panel.y)
        for (const auto& [m, y] : ys) {
            auto& c = z[m];
            c.first += y;
            ++c.second;
        }
    std::vector<Month> t0_periods;
    for (Month m = t0.first; m <= t0.last; m = m.next())
        if (t0_periods.empty() || t0_periods.back() != period_of(m, g)) t0_periods.push_back(period_of(m, g));
    double zsum = 0;
    std::size_t zn = 0;
    for (Month m : t0_periods) {
        auto it = z.find(m);
        if (it == z.end())
            throw ValidationError("normalization window period " + m.str() + " has no active outlet");
        zsum += it->second.first / static_cast<double>(it->second.second);
        ++zn;
    }
    if (zn == 0) throw ValidationError("normalization window contains no periods");
    const double zbar = zsum / static_cast<double>(zn);
    if (!(zbar > 0)) throw ValidationError("mean of Z over the normalization window is not positive");
    IndexSeries s;
    for (const auto& [m, c] : z) s.values[m] = (c.first / static_cast<double>(c.second)) / zbar * 100.0;
    for (const auto& [outlet, ys] : panel.y) s.meta.outlets.push_back(outlet);
    s.meta.dropped = panel.dropped;
    s.meta.t0 = t0;
    s.meta.granularity = std::string(to_string(g));
    return s;
}

struct IndexConfig {
    MonthRange t0{};
    Granularity granularity = Granularity::month;
    SdConvention sd = SdConvention::sample;
    unsigned threads = 0;
};

/// article_shares -> standardize -> aggregate. `meta` describes the classifier
/// output; window, outlets and conventions are filled in here.
[[nodiscard]] inline IndexSeries build_index(const Corpus& corpus, const ArticleValues& values,
                                             const IndexConfig& cfg, IndexMeta meta = {}) {
    auto shares = article_shares(corpus, values, cfg.granularity, cfg.threads);
    auto panel = standardize(shares.shares, cfg.t0, cfg.sd);
    auto series = aggregate(panel, cfg.t0, cfg.granularity);
    meta.t0 = cfg.t0;
    meta.granularity = std::string(to_string(cfg.granularity));
    meta.sd_convention = std::string(to_string(cfg.sd));
    meta.outlets = std::move(series.meta.outlets);
    meta.dropped = std::move(series.meta.dropped);
    meta.rejected_documents = shares.rejected.size();
    series.meta = std::move(meta);
    return series;
}

/// Per period, the weighted mean of the series present in that period with
/// weights renormalized over them; rescaled to mean 100 over T0. Periods where
/// no series with positive weight is present are gaps.
[[nodiscard]] inline IndexSeries weighted_combine(const std::vector<std::pair<std::string, IndexSeries>>& series,
                                                  const std::map<std::string, double>& weights, MonthRange t0) {
    if (series.empty()) throw ValidationError("nothing to combine");
    if (t0.empty()) throw ValidationError("normalization window is empty");
    std::vector<double> w;
    for (const auto& [id, s] : series) {
        auto it = weights.find(id);
        if (it == weights.end()) throw ValidationError("no weight for series '" + id + "'");
        if (!(it->second >= 0) || !std::isfinite(it->second))
            throw ValidationError("weight for series '" + id + "' must be finite and >= 0");
        w.push_back(it->second);
    }
    std::map<Month, std::pair<double, double>> acc;  // period -> (sum w*v, sum w)
    std::map<Month, bool> seen;
    for (std::size_t k = 0; k < series.size(); ++k)
        for (const auto& [m, v] : series[k].second.values) {
            seen[m] = true;
            if (w[k] > 0) {
                auto& a = acc[m];
                a.first += w[k] * v;
                a.second += w[k];
            }
        }
    IndexSeries out;
    std::map<Month, double> raw;
    for (const auto& [m, _] : seen) {
        auto it = acc.find(m);
        if (it == acc.end() || !(it->second.second > 0)) {
            out.gaps.push_back(m);
            continue;
        }
        raw[m] = it->second.first / it->second.second;
    }
    // Gap periods between covered ones are reported too.
    if (!raw.empty())
        for (Month m = raw.begin()->first; m < raw.rbegin()->first; m = m.next())
            if (!seen.count(m) && !std::binary_search(out.gaps.begin(), out.gaps.end(), m) &&
                series.front().second.meta.granularity == "month")
                out.gaps.push_back(m);
    std::sort(out.gaps.begin(), out.gaps.end());
    double sum = 0;
    std::size_t n = 0;
    for (const auto& [m, v] : raw)
        if (t0.contains(m)) {
            sum += v;
            ++n;
        }
    if (n == 0) throw ValidationError("no combined value inside the normalization window");
    const double mean = sum / static_cast<double>(n);
    if (!(mean > 0)) throw ValidationError("combined mean over the normalization window is not positive");
    for (const auto& [m, v] : raw) out.values[m] = v / mean * 100.0;
    out.meta.construction = "combined";
    out.meta.rule = "weighted";
    out.meta.t0 = t0;
    out.meta.granularity = series.front().second.meta.granularity;
    for (std::size_t k = 0; k < series.size(); ++k) out.meta.components[series[k].first] = w[k];
    return out;
}

struct Correlation {
    std::optional<double> r;  // undefined when either series is constant on the overlap
    std::size_t n = 0;
    Month first{}, last{};
};

/// Pearson correlation over the periods both series cover (at least 3).
[[nodiscard]] inline Correlation correlate(const std::map<Month, double>& a, const std::map<Month, double>& b) {
    std::vector<std::pair<double, double>> xy;
    Correlation c;
    for (const auto& [m, v] : a) {
        auto it = b.find(m);
        if (it == b.end()) continue;
        if (xy.empty()) c.first = m;
        c.last = m;
        xy.emplace_back(v, it->second);
    }
    c.n = xy.size();
    if (c.n < 3) throw ValidationError("series overlap in " + std::to_string(c.n) + " periods; need at least 3");
    double mx = 0, my = 0;
    for (const auto& [x, y] : xy) mx += x, my += y;
    mx /= static_cast<double>(c.n);
    my /= static_cast<double>(c.n);
    double sxx = 0, syy = 0, sxy = 0;
    for (const auto& [x, y] : xy) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if (!(sxx > 0) || !(syy > 0)) return c;
    c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    return c;
}

/// CSV `month,value`; gap periods are written with an empty value.
inline void write_index_csv(std::ostream& out, const IndexSeries& s) {
    out << "month,value\n";
    std::map<Month, std::optional<double>> rows;
    for (const auto& [m, v] : s.values) rows[m] = v;
    for (Month m : s.gaps) rows.emplace(m, std::nullopt);
    for (const auto& [m, v] : rows) {
        out << m.str() << ',';
        if (v) out << csv::format_double(*v);
        out << '\n';
    }
}

/// Reads `month,value` (header required); empty values are gaps.
[[nodiscard]] inline IndexSeries read_index_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("index file is empty");
    auto header = csv::split_line(line);
    if (!header || header->size() != 2 || (*header)[0] != "month" || (*header)[1] != "value")
        throw ValidationError("index file header must be 'month,value'");
    IndexSeries s;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto f = csv::split_line(line);
        if (!f || f->size() != 2) throw ValidationError("index file line " + std::to_string(lineno) + ": malformed");
        auto m = parse_month((*f)[0]);
        if (!m) throw ValidationError("index file line " + std::to_string(lineno) + ": bad month '" + (*f)[0] + "'");
        if ((*f)[1].empty()) {
            s.gaps.push_back(*m);
            continue;
        }
        auto v = csv::parse_double((*f)[1]);
        if (!v || !std::isfinite(*v))
            throw ValidationError("index file line " + std::to_string(lineno) + ": bad value '" + (*f)[1] + "'");
        if (!s.values.emplace(*m, *v).second)
            throw ValidationError("index file line " + std::to_string(lineno) + ": duplicate month");
    }
    return s;
}

[[nodiscard]] inline nlohmann::ordered_json to_json(const IndexMeta& m) {
    nlohmann::ordered_json j;
    j["task"] = m.task;
    j["model_id"] = m.model_id;
    j["construction"] = m.construction;
    j["rule"] = m.rule;
    j["tau"] = m.tau ? nlohmann::ordered_json(*m.tau) : nlohmann::ordered_json(nullptr);
    j["normalization_window"] = {{"start", m.t0.first.str()}, {"end", m.t0.last.str()}};
    j["granularity"] = m.granularity;
    j["sd_convention"] = m.sd_convention;
    j["outlets"] = m.outlets;
    nlohmann::ordered_json dropped = nlohmann::ordered_json::array();
    for (const auto& d : m.dropped) dropped.push_back({{"outlet", d.outlet}, {"reason", d.reason}});
    j["dropped_outlets"] = std::move(dropped);
    j["rejected_documents"] = m.rejected_documents;
    if (!m.components.empty()) j["components"] = m.components;
    j["created_at"] = m.created_at;
    return j;
}

/// Weights file: CSV `series_id,weight`.
[[nodiscard]] inline std::map<std::string, double> read_weights_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("weights file is empty");
    auto header = csv::split_line(line);
    if (!header || header->size() != 2 || (*header)[0] != "series_id" || (*header)[1] != "weight")
        throw ValidationError("weights file header must be 'series_id,weight'");
    std::map<std::string, double> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto f = csv::split_line(line);
        if (!f || f->size() != 2) throw ValidationError("weights file line " + std::to_string(lineno) + ": malformed");
        auto v = csv::parse_double((*f)[1]);
        if (!v || !(*v >= 0) || !std::isfinite(*v))
            throw ValidationError("weights file line " + std::to_string(lineno) + ": weight must be >= 0");
        if (!out.emplace((*f)[0], *v).second)
            throw ValidationError("weights file line " + std::to_string(lineno) + ": duplicate series id");
    }
    return out;
}

} // namespace epu
