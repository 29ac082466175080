#include <gtest/gtest.h>

#include <cmath>

#include "epu/simlab.hpp"

using namespace epu;

namespace {

SimConfig small(std::uint64_t seed = 1) {
    SimConfig c;
    c.months = 24;
    c.outlets = 3;
    c.articles_mean = 80;
    c.seed = seed;
    return c;
}

std::map<std::pair<std::string, Month>, std::pair<int, int>> cell_counts(const Corpus& c) {
    std::map<std::pair<std::string, Month>, std::pair<int, int>> out;
    for (const auto& d : c.docs()) {
        auto& v = out[{d.outlet, d.month()}];
        v.first += *d.gold_epu;
        ++v.second;
    }
    return out;
}

IndexSeries index_of(const Corpus& c, const Labels& l, MonthRange t0) {
    IndexConfig ic;
    ic.t0 = t0;
    return build_index(c, values_from_labels(c, l), ic);
}

} // namespace

TEST(Simlab, ConstantLatentGivesBaselineShares) {
    SimConfig c;
    c.innovation = 0;
    c.baseline = 0.3;
    c.seed = 3;
    const auto sim = simulate_corpus(c);
    for (const auto& [m, s] : sim.latent.share) EXPECT_EQ(s, 0.3);
    std::map<Month, std::pair<int, int>> per_month;
    int pos = 0, n = 0;
    for (const auto& d : sim.corpus.docs()) {
        per_month[d.month()].first += *d.gold_epu;
        ++per_month[d.month()].second;
        pos += *d.gold_epu;
        ++n;
    }
    EXPECT_NEAR(double(pos) / n, 0.3, 3 * std::sqrt(0.3 * 0.7 / n));
    int outside = 0;
    for (const auto& [m, v] : per_month)
        outside += std::abs(double(v.first) / v.second - 0.3) > 3 * std::sqrt(0.3 * 0.7 / v.second);
    EXPECT_LE(outside, 2);
    EXPECT_EQ(per_month.size(), 60u);
}

TEST(Simlab, DeterministicForSeed) {
    const auto a = simulate_corpus(small(5));
    const auto b = simulate_corpus(small(5));
    EXPECT_EQ(a.corpus.docs(), b.corpus.docs());
    EXPECT_EQ(a.latent.u, b.latent.u);
    const auto c = simulate_corpus(small(6));
    EXPECT_NE(a.latent.u, c.latent.u);
    EXPECT_EQ(a.corpus.docs().front().id, "sim-o01-200001-00000");
}

TEST(Simlab, ArticleCountDispersion) {
    SimConfig c;
    c.outlets = 10;
    c.seed = 2;
    auto stats = [](const SimConfig& cfg) {
        std::vector<double> n;
        for (const auto& [k, v] : cell_counts(simulate_corpus(cfg).corpus)) n.push_back(v.second);
        double mean = 0, ss = 0;
        for (double x : n) mean += x;
        mean /= n.size();
        for (double x : n) ss += (x - mean) * (x - mean);
        return std::pair{mean, ss / (n.size() - 1)};
    };
    const auto [m0, v0] = stats(c);
    EXPECT_NEAR(m0, 200, 3);
    EXPECT_GT(v0, 0.7 * m0);
    EXPECT_LT(v0, 1.3 * m0);
    c.articles_dispersion = 0.5;
    const auto [m1, v1] = stats(c);
    EXPECT_GT(v1, 20 * m1);
}

TEST(Simlab, LatentSpikeShowsInGoldIndex) {
    const auto cfg = small(7);
    LatentSeries lat;
    Month m = cfg.start;
    for (int t = 0; t < cfg.months; ++t, m = m.next()) {
        lat.u[m] = t == 10 ? 0.4 : 0.0;
        lat.share[m] = t == 10 ? 0.6 : 0.2 + 0.01 * (t % 4);
    }
    const auto sim = simulate_corpus(cfg, lat);
    const auto idx = index_of(sim.corpus, gold_labels(sim.corpus), cfg.range());
    const Month spike = Month::from_ordinal(cfg.start.ordinal() + 10);
    for (const auto& [mm, v] : idx.values)
        if (mm != spike) {
            EXPECT_GT(idx.values.at(spike), 2 * v);
        }
}

TEST(Simlab, InjectErrorsExtremes) {
    const auto gold = gold_labels(simulate_corpus(small(8)).corpus);
    EXPECT_EQ(inject_errors(gold, 0, 0, 1), gold);
    const auto neg = inject_errors(gold, 1, 1, 1);
    for (std::size_t i = 0; i < gold.size(); ++i) EXPECT_NE(neg.entries()[i].second, gold.entries()[i].second);
    EXPECT_THROW((void)inject_errors(gold, -0.1, 0, 1), ValidationError);
    EXPECT_THROW((void)inject_errors(gold, 0, 1.5, 1), ValidationError);
}

TEST(Simlab, FlipRatesMatchConfiguration) {
    std::vector<Labels::Entry> e;
    for (int i = 0; i < 40000; ++i) e.emplace_back("d" + std::to_string(100000 + i), i % 2 == 0);
    const Labels gold(e);
    const auto pred = inject_errors(gold, 0.1, 0.5, 11);
    int fn = 0, fp = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const bool g = gold.entries()[i].second, p = pred.entries()[i].second;
        fn += g && !p;
        fp += !g && p;
    }
    EXPECT_GE(fn / 20000.0, 0.485);
    EXPECT_LE(fn / 20000.0, 0.515);
    EXPECT_NEAR(fp / 20000.0, 0.1, 0.01);
}

TEST(Simlab, HigherRatesFlipSupersets) {
    const auto gold = gold_labels(simulate_corpus(small(9)).corpus);
    const auto lo = inject_errors(gold, 0.05, 0.2, 4);
    const auto hi = inject_errors(gold, 0.05, 0.4, 4);
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const bool g = gold.entries()[i].second;
        if (lo.entries()[i].second != g) {
            EXPECT_NE(hi.entries()[i].second, g);
        }
    }
}

TEST(Simlab, ZeroErrorIndexIsExact) {
    const auto cfg = small(10);
    const auto sim = simulate_corpus(cfg);
    const auto gold = gold_labels(sim.corpus);
    const auto g = index_of(sim.corpus, gold, cfg.range());
    const auto p = index_of(sim.corpus, inject_errors(gold, 0, 0, 99), cfg.range());
    const auto r = error_decomposition(p, g, sim.latent.share);
    EXPECT_EQ(*r.corr_pred_gold, 1.0);
    for (const auto& [m, e] : r.e) EXPECT_EQ(e, 0.0);
    EXPECT_EQ(r.sd_e, 0.0);
    EXPECT_EQ(r.max_abs_e, 0.0);
    EXPECT_GT(*r.corr_gold_latent, 0.5);

    const auto scores = inject_scores(gold, 0, 0, 0, 1);
    IndexConfig ic;
    ic.t0 = cfg.range();
    EXPECT_EQ(build_index(sim.corpus, values_from_scores(sim.corpus, scores), ic).values, g.values);
}

TEST(Simlab, ScoreModeOffsetsAndNoise) {
    const Labels gold({{"a", true}, {"b", false}});
    const auto s = inject_scores(gold, 0.1, 0.3, 0, 1);
    EXPECT_EQ(s.find("a"), 0.7);
    EXPECT_EQ(s.find("b"), 0.1);
    const auto n = inject_scores(gold, 0.0, 0.0, 5.0, 1);
    for (const auto& [id, p] : n.entries()) EXPECT_TRUE(p == 0.0 || p == 1.0 || (p > 0 && p < 1));
    EXPECT_EQ(inject_scores(gold, 0.1, 0.3, 0.2, 7), inject_scores(gold, 0.1, 0.3, 0.2, 7));
    EXPECT_THROW((void)inject_scores(gold, 0.1, 0.3, -1, 7), ValidationError);
}

TEST(Simlab, GridCorrelationFallsWithFalseNegatives) {
    auto base = small();
    base.fpr = 0.05;
    const auto cells = run_error_grid(base, {{0, 0}, {0.05, 0}, {0.05, 0.2}, {0.05, 0.4}}, {1, 2, 3, 4, 5, 6}, 0);
    ASSERT_EQ(cells.size(), 4u);
    for (const auto& c : cells[0].corr) EXPECT_EQ(*c, 1.0);
    EXPECT_EQ(cells[0].mean_sd_e, 0.0);
    EXPECT_GT(*cells[1].mean_corr, *cells[2].mean_corr);
    EXPECT_GT(*cells[2].mean_corr, *cells[3].mean_corr);
}

TEST(Simlab, ErrorSpreadGrowsWithFalsePositives) {
    const auto cells = run_error_grid(small(), {{0, 0.1}, {0.1, 0.1}, {0.3, 0.1}}, {1, 2, 3, 4, 5, 6}, 0);
    EXPECT_LT(cells[0].mean_sd_e, cells[1].mean_sd_e);
    EXPECT_LT(cells[1].mean_sd_e, cells[2].mean_sd_e);
}

TEST(Simlab, GridIndependentOfThreads) {
    const auto a = run_error_grid(small(), {{0.05, 0.2}}, {1, 2, 3}, 1);
    const auto b = run_error_grid(small(), {{0.05, 0.2}}, {1, 2, 3}, 3);
    EXPECT_EQ(a[0].corr, b[0].corr);
    EXPECT_EQ(a[0].sd_e, b[0].sd_e);
}

TEST(Simlab, ConfigJsonAndValidation) {
    auto c = sim_config_from_json(nlohmann::json::parse(R"({"months": 12, "start": "1990-06", "fnr": 0.2,
                                                          "score_noise": 0.1, "seed": 9})"));
    EXPECT_EQ(c.months, 12);
    EXPECT_EQ(c.start, (Month{1990, 6}));
    EXPECT_EQ(c.range().last, (Month{1991, 5}));
    EXPECT_EQ(*c.score_noise, 0.1);
    const auto back = sim_config_from_json(nlohmann::json::parse(to_json(c).dump()));
    EXPECT_EQ(to_json(back), to_json(c));
    for (const char* bad : {R"({"months": 1})", R"({"phi": 1.0})", R"({"baseline": 0})", R"({"fpr": 2})",
                            R"({"outlets": "x"})", R"({"start": "1990-13"})"})
        EXPECT_THROW((void)sim_config_from_json(nlohmann::json::parse(bad)), ValidationError) << bad;
}
