#pragma once

// Synthetic measurement-error lab: latent uncertainty U_t -> per-month share
// s_t -> articles with gold labels -> noisy predictions -> index, and the gap
// e_t between the prediction index and the gold index.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "epu/corpus.hpp"
#include "epu/date.hpp"
#include "epu/error.hpp"
#include "epu/index.hpp"
#include "epu/labels.hpp"
#include "epu/parallel.hpp"
#include "epu/scores.hpp"

namespace epu {

struct SimConfig {
    int months = 60;
    int outlets = 5;
    Month start{2000, 1};
    double articles_mean = 200;
    double articles_dispersion = 0;  // 0: Poisson; otherwise var = mean + dispersion * mean^2
    double phi = 0.5;                // AR(1) persistence
    double innovation = 0.05;        // AR(1) innovation sd
    double baseline = 0.2;           // share at U = 0
    double scale = 1.0;
    double fpr = 0;
    double fnr = 0;
    std::optional<double> score_noise;  // sd of Gaussian noise in score mode
    std::uint64_t seed = 1;

    void validate() const {
        if (months < 2) throw ValidationError("months must be >= 2");
        if (outlets < 1) throw ValidationError("outlets must be >= 1");
        if (!(articles_mean > 0)) throw ValidationError("articles_mean must be > 0");
        if (!(articles_dispersion >= 0)) throw ValidationError("articles_dispersion must be >= 0");
        if (!(phi >= 0 && phi < 1)) throw ValidationError("phi must lie in [0,1)");
        if (!(innovation >= 0)) throw ValidationError("innovation must be >= 0");
        if (!(baseline > 0 && baseline < 1)) throw ValidationError("baseline must lie in (0,1)");
        if (!(fpr >= 0 && fpr <= 1) || !(fnr >= 0 && fnr <= 1)) throw ValidationError("error rates must lie in [0,1]");
        if (score_noise && !(*score_noise >= 0)) throw ValidationError("score_noise must be >= 0");
        if (start.month < 1 || start.month > 12) throw ValidationError("start month out of range");
    }

    [[nodiscard]] MonthRange range() const {
        return {start, Month::from_ordinal(start.ordinal() + months - 1)};
    }
};

[[nodiscard]] inline SimConfig sim_config_from_json(const nlohmann::json& j) {
    SimConfig c;
    try {
        c.months = j.value("months", c.months);
        c.outlets = j.value("outlets", c.outlets);
        if (j.contains("start")) c.start = parse_month_or_throw(j.at("start").get<std::string>());
        c.articles_mean = j.value("articles_mean", c.articles_mean);
        c.articles_dispersion = j.value("articles_dispersion", c.articles_dispersion);
        c.phi = j.value("phi", c.phi);
        c.innovation = j.value("innovation", c.innovation);
        c.baseline = j.value("baseline", c.baseline);
        c.scale = j.value("scale", c.scale);
        c.fpr = j.value("fpr", c.fpr);
        c.fnr = j.value("fnr", c.fnr);
        if (j.contains("score_noise") && !j.at("score_noise").is_null()) c.score_noise = j.at("score_noise").get<double>();
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid simulation config: ") + e.what());
    }
    c.validate();
    return c;
}

[[nodiscard]] inline nlohmann::ordered_json to_json(const SimConfig& c) {
    nlohmann::ordered_json j;
    j["months"] = c.months;
    j["outlets"] = c.outlets;
    j["start"] = c.start.str();
    j["articles_mean"] = c.articles_mean;
    j["articles_dispersion"] = c.articles_dispersion;
    j["phi"] = c.phi;
    j["innovation"] = c.innovation;
    j["baseline"] = c.baseline;
    j["scale"] = c.scale;
    j["fpr"] = c.fpr;
    j["fnr"] = c.fnr;
    j["score_noise"] = c.score_noise ? nlohmann::ordered_json(*c.score_noise) : nlohmann::ordered_json(nullptr);
    j["seed"] = c.seed;
    return j;
}

struct LatentSeries {
    std::map<Month, double> u;      // zero-mean AR(1)
    std::map<Month, double> share;  // s_t = clip(baseline + scale * U_t, 0.001, 0.999)
};

struct SimResult {
    Corpus corpus;  // gold labels attached
    LatentSeries latent;
};

namespace detail {

inline std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c)};
    return std::mt19937_64(seq);
}

inline std::uint64_t draw_count(std::mt19937_64& rng, double mean, double dispersion) {
    if (dispersion <= 0) return std::poisson_distribution<std::uint64_t>(mean)(rng);
    // Gamma-Poisson mixture with shape 1/dispersion.
    const double shape = 1.0 / dispersion;
    const double lambda = std::gamma_distribution<double>(shape, mean / shape)(rng);
    return lambda > 0 ? std::poisson_distribution<std::uint64_t>(lambda)(rng) : 0;
}

inline std::string outlet_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "o%02d", i + 1);
    return buf;
}

} // namespace detail

[[nodiscard]] inline LatentSeries simulate_latent(const SimConfig& cfg) {
    cfg.validate();
    auto rng = detail::keyed_rng(cfg.seed, 0x6c6174656e74ULL);  // "latent"
    std::normal_distribution<double> eps(0.0, 1.0);
    LatentSeries out;
    double u = 0;
    Month m = cfg.start;
    for (int t = 0; t < cfg.months; ++t, m = m.next()) {
        u = cfg.phi * u + cfg.innovation * eps(rng);
        out.u[m] = u;
        out.share[m] = std::clamp(cfg.baseline + cfg.scale * u, 0.001, 0.999);
    }
    return out;
}

/// Draws article counts and gold labels per (outlet, month) from s_t. Ids are
/// `sim-<outlet>-<yyyymm>-<k>`; bodies are placeholders.
[[nodiscard]] inline SimResult simulate_corpus(const SimConfig& cfg, const std::optional<LatentSeries>& latent = {}) {
    cfg.validate();
    SimResult res;
    res.latent = latent ? *latent : simulate_latent(cfg);
    std::vector<Document> docs;
    for (int i = 0; i < cfg.outlets; ++i) {
        const auto outlet = detail::outlet_name(i);
        for (const auto& [m, s] : res.latent.share) {
            auto rng = detail::keyed_rng(cfg.seed, static_cast<std::uint64_t>(i) + 1, static_cast<std::uint64_t>(m.ordinal()));
            const auto n = detail::draw_count(rng, cfg.articles_mean, cfg.articles_dispersion);
            std::bernoulli_distribution gold(s);
            const int dim = days_in_month(m.year, m.month);
            for (std::uint64_t k = 0; k < n; ++k) {
                char id[64];
                std::snprintf(id, sizeof id, "sim-%s-%04d%02d-%05llu", outlet.c_str(), m.year, m.month,
                              static_cast<unsigned long long>(k));
                Document d;
                d.id = id;
                d.outlet = outlet;
                d.date = Date{m.year, m.month, static_cast<int>(k % static_cast<std::uint64_t>(dim)) + 1};
                d.body = d.id;
                d.gold_epu = gold(rng);
                docs.push_back(std::move(d));
            }
        }
    }
    res.corpus = Corpus(std::move(docs));
    return res;
}

/// Flips each positive with probability fnr and each negative with probability
/// fpr. One uniform draw per document in id order, so runs that differ only in
/// the rates share their random numbers.
[[nodiscard]] inline Labels inject_errors(const Labels& gold, double fpr, double fnr, std::uint64_t seed) {
    if (!(fpr >= 0 && fpr <= 1) || !(fnr >= 0 && fnr <= 1)) throw ValidationError("error rates must lie in [0,1]");
    auto rng = detail::keyed_rng(seed, 0x666c6970ULL);  // "flip"
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Labels::Entry> out;
    out.reserve(gold.size());
    for (const auto& [id, g] : gold.entries()) {
        const double r = u(rng);
        const bool flip = r < (g ? fnr : fpr);
        out.emplace_back(id, flip ? !g : g);
    }
    return Labels(std::move(out));
}

/// Score mode: p = gold * (1 - eps1) + (1 - gold) * eps0 + N(0, noise), clipped.
[[nodiscard]] inline ScoreSet inject_scores(const Labels& gold, double eps0, double eps1, double noise,
                                            std::uint64_t seed, std::string model_id = "sim") {
    if (!(eps0 >= 0 && eps0 <= 1) || !(eps1 >= 0 && eps1 <= 1)) throw ValidationError("score offsets must lie in [0,1]");
    if (!(noise >= 0)) throw ValidationError("score noise must be >= 0");
    auto rng = detail::keyed_rng(seed, 0x73636f7265ULL);  // "score"
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<ScoreSet::Entry> out;
    out.reserve(gold.size());
    for (const auto& [id, g] : gold.entries()) {
        const double base = g ? 1.0 - eps1 : eps0;
        const double p = noise > 0 ? base + noise * z(rng) : base;
        out.emplace_back(id, std::clamp(p, 0.0, 1.0));
    }
    return ScoreSet("epu", std::move(model_id), std::move(out));
}

struct ErrorReport {
    std::optional<double> corr_pred_gold;
    std::optional<double> corr_pred_latent;
    std::optional<double> corr_gold_latent;
    std::map<Month, double> e;  // prediction index - gold index
    double mean_e = 0;
    double sd_e = 0;
    double max_abs_e = 0;
};

[[nodiscard]] inline ErrorReport error_decomposition(const IndexSeries& pred, const IndexSeries& gold,
                                                     const std::map<Month, double>& latent_share) {
    if (pred.values.size() != gold.values.size() ||
        !std::equal(pred.values.begin(), pred.values.end(), gold.values.begin(),
                    [](const auto& a, const auto& b) { return a.first == b.first; }))
        throw ValidationError("prediction and gold indices cover different periods");
    ErrorReport r;
    r.corr_pred_gold = correlate(pred.values, gold.values).r;
    r.corr_pred_latent = correlate(pred.values, latent_share).r;
    r.corr_gold_latent = correlate(gold.values, latent_share).r;
    double sum = 0;
    for (const auto& [m, v] : pred.values) {
        const double e = v - gold.values.at(m);
        r.e[m] = e;
        sum += e;
        r.max_abs_e = std::max(r.max_abs_e, std::abs(e));
    }
    const double n = static_cast<double>(r.e.size());
    r.mean_e = sum / n;
    double ss = 0;
    for (const auto& [m, e] : r.e) ss += (e - r.mean_e) * (e - r.mean_e);
    r.sd_e = r.e.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    return r;
}

struct GridCell {
    double fpr = 0;
    double fnr = 0;
    std::vector<std::optional<double>> corr;  // per seed
    std::vector<double> sd_e;                 // per seed
    std::optional<double> mean_corr;          // over seeds with a defined corr
    double mean_sd_e = 0;
};

/// For each seed, simulates one corpus and compares the gold index with the
/// index built from predictions at every (fpr, fnr) in the grid. T0 is the
/// whole simulated range. Seeds run in parallel.
[[nodiscard]] inline std::vector<GridCell> run_error_grid(const SimConfig& base,
                                                          const std::vector<std::pair<double, double>>& fpr_fnr,
                                                          const std::vector<std::uint64_t>& seeds, unsigned threads = 0) {
    base.validate();
    if (seeds.empty()) throw ValidationError("need at least one seed");
    std::vector<GridCell> cells(fpr_fnr.size());
    for (std::size_t g = 0; g < fpr_fnr.size(); ++g) {
        cells[g].fpr = fpr_fnr[g].first;
        cells[g].fnr = fpr_fnr[g].second;
        cells[g].corr.resize(seeds.size());
        cells[g].sd_e.resize(seeds.size());
    }
    parallel_for(seeds.size(), threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t s = b; s < e; ++s) {
            SimConfig cfg = base;
            cfg.seed = seeds[s];
            const auto sim = simulate_corpus(cfg);
            const auto gold = gold_labels(sim.corpus);
            IndexConfig ic;
            ic.t0 = cfg.range();
            ic.threads = 1;
            const auto gold_index = build_index(sim.corpus, values_from_labels(sim.corpus, gold), ic);
            for (std::size_t g = 0; g < fpr_fnr.size(); ++g) {
                const auto pred = inject_errors(gold, fpr_fnr[g].first, fpr_fnr[g].second, seeds[s]);
                const auto pred_index = build_index(sim.corpus, values_from_labels(sim.corpus, pred), ic);
                const auto rep = error_decomposition(pred_index, gold_index, sim.latent.share);
                cells[g].corr[s] = rep.corr_pred_gold;
                cells[g].sd_e[s] = rep.sd_e;
            }
        }
    });
    for (auto& c : cells) {
        double sum = 0, sd = 0;
        std::size_t n = 0;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            if (c.corr[s]) sum += *c.corr[s], ++n;
            sd += c.sd_e[s];
        }
        if (n) c.mean_corr = sum / static_cast<double>(n);
        c.mean_sd_e = sd / static_cast<double>(seeds.size());
    }
    return cells;
}

} // namespace epu
