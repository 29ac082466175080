#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>

#include "epu/aho_corasick.hpp"
#include "epu/bow.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace epu;
using testing_support::doc;

namespace {

Dictionary load(const std::string& file) {
    std::ifstream in(std::string(EPU_DATA_DIR) + "/dictionaries/" + file);
    return load_dictionary(in);
}

Dictionary one_term(const std::string& term, DictionaryOptions opt = {}) {
    return Dictionary("t", {{"g", {term}, {}}}, opt);
}

bool hit(const Dictionary& d, const std::string& text) { return compile(d).matches(text); }

using oracle::kVocab;
using oracle::naive_classify;
using oracle::random_text;

} // namespace

TEST(AhoCorasick, FindsAllOverlappingMatches) {
    AhoCorasick<int> ac;
    ac.add("he", 0);
    ac.add("she", 1);
    ac.add("hers", 2);
    ac.add("his", 3);
    ac.build();
    std::multiset<std::pair<std::size_t, int>> got;
    ac.for_each_match("ushers", [&](const auto& m) {
        got.emplace(m.begin, m.payload);
        return true;
    });
    EXPECT_EQ(got, (std::multiset<std::pair<std::size_t, int>>{{1, 1}, {2, 0}, {2, 2}}));
}

TEST(AhoCorasick, MatchesNaiveSearch) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        std::uniform_int_distribution<int> ch('a', 'c'), plen(1, 4), tlen(0, 40);
        std::vector<std::string> pats;
        AhoCorasick<std::size_t> ac;
        for (int k = 0; k < 5; ++k) {
            std::string p;
            for (int i = plen(rng); i > 0; --i) p.push_back(static_cast<char>(ch(rng)));
            pats.push_back(p);
            ac.add(p, static_cast<std::size_t>(k));
        }
        ac.build();
        std::string t;
        for (int i = tlen(rng); i > 0; --i) t.push_back(static_cast<char>(ch(rng)));
        std::multiset<std::tuple<std::size_t, std::size_t, std::size_t>> want, got;
        for (std::size_t k = 0; k < pats.size(); ++k)
            for (auto pos = t.find(pats[k]); pos != std::string::npos; pos = t.find(pats[k], pos + 1))
                want.emplace(pos, pos + pats[k].size(), k);
        ac.for_each_match(t, [&](const auto& m) {
            got.emplace(m.begin, m.end, m.payload);
            return true;
        });
        ASSERT_EQ(got, want) << "text " << t;
    }
}

TEST(Bow, BbdCompilesToTenPatternsInThreeGroups) {
    const auto d = load("bbd_base.json");
    const auto m = compile(d);
    EXPECT_EQ(m.pattern_count(), 10u);
    EXPECT_EQ(d.groups().size(), 3u);
    EXPECT_EQ(d.groups()[0].name, "economic");
    EXPECT_EQ(d.groups()[1].terms.size(), 6u);
    const auto h = load("bbd_historical.json");
    EXPECT_EQ(compile(h).pattern_count(), 14u);
}

TEST(Bow, BbdCanonicalFixtures) {
    const auto m = compile(load("bbd_base.json"));
    EXPECT_TRUE(classify(doc("1", "o", "2001-01-01", "The economy faces Congress amid uncertainty."), m));
    EXPECT_FALSE(classify(doc("2", "o", "2001-01-01", "The economy looks uncertain this year."), m));
    EXPECT_FALSE(classify(doc("3", "o", "2001-01-01", "Economic uncertainties weigh on Congress."), m));
}

TEST(Bow, TitleThenBody) {
    const auto m = compile(load("bbd_base.json"));
    auto d = doc("1", "o", "2001-01-01", "uncertainty at the White House");
    d.title = "Economy";
    EXPECT_TRUE(classify(d, m));
    d.title = "Econo";
    d.body = "my uncertainty at the White House";  // "Econo my" must not join into "economy"
    EXPECT_FALSE(classify(d, m));
}

TEST(Bow, SingleTermHitsIffPresent) {
    const auto d = one_term("tariff");
    EXPECT_TRUE(hit(d, "new tariff announced"));
    EXPECT_FALSE(hit(d, "no trade news"));
}

TEST(Bow, MultiWordAcrossWhitespaceRuns) {
    EXPECT_TRUE(hit(one_term("White House"), "the white   house said"));
    EXPECT_TRUE(hit(one_term("White House"), "the White-House said"));
    EXPECT_FALSE(hit(one_term("White House", {.case_fold = true, .partial_match = false, .strip_punct = false}),
                     "the White-House said"));
}

TEST(Bow, PartialMatchOption) {
    EXPECT_FALSE(hit(one_term("uncertain"), "uncertainties abound"));
    EXPECT_TRUE(hit(one_term("uncertain", {.case_fold = true, .partial_match = true, .strip_punct = true}),
                    "uncertainties abound"));
    EXPECT_FALSE(hit(one_term("uncertainty"), "uncertaintyX"));
}

TEST(Bow, CaseFoldOption) {
    const DictionaryOptions cs{.case_fold = false, .partial_match = false, .strip_punct = true};
    EXPECT_FALSE(hit(one_term("Congress", cs), "congress met"));
    EXPECT_TRUE(hit(one_term("Congress", cs), "Congress met"));
    EXPECT_TRUE(hit(one_term("Congress"), "CONGRESS met"));
}

TEST(Bow, UnicodeWordBoundaries) {
    EXPECT_TRUE(hit(one_term("économie"), "L'ÉCONOMIE va mal"));
    EXPECT_FALSE(hit(one_term("conomie"), "L'économie va mal"));
}

TEST(Bow, EmptyTermAfterNormalizationIsError) {
    EXPECT_THROW((void)one_term("--"), ValidationError);
    EXPECT_THROW((void)Dictionary("x", {}), ValidationError);
    EXPECT_THROW((void)Dictionary("x", {{"g", {}, {}}}), ValidationError);
}

TEST(Bow, DictionaryJsonRoundTrip) {
    const auto d = load("bbd_base.json");
    EXPECT_EQ(dictionary_from_json(to_json(d)), d);
    auto arr = nlohmann::ordered_json::parse(R"({"name":"a","groups":[{"name":"g","terms":["x y"]}]})");
    EXPECT_EQ(dictionary_from_json(arr).groups()[0].terms[0], "x y");
    EXPECT_THROW((void)dictionary_from_json(nlohmann::ordered_json::parse(R"({"name":"a"})")), ValidationError);
    EXPECT_THROW((void)dictionary_from_json(nlohmann::ordered_json::parse(
                     R"({"groups":{"g":["x"]},"options":{"stem":true}})")),
                 ValidationError);
}

TEST(Bow, MatcherEqualsNaiveOracleAcrossOptions) {
    const auto base = load("bbd_base.json");
    std::mt19937_64 rng(2024);
    std::vector<std::string> texts;
    for (int i = 0; i < 200; ++i) texts.push_back(random_text(rng));
    for (int mask = 0; mask < 8; ++mask) {
        VariantSpec v;
        v.name = "opt" + std::to_string(mask);
        v.case_fold = (mask & 1) != 0;
        v.partial_match = (mask & 2) != 0;
        v.strip_punct = (mask & 4) != 0;
        const auto d = apply_variant(base, v);
        const auto m = compile(d);
        for (const auto& t : texts) ASSERT_EQ(m.matches(t), naive_classify(d, t)) << "options " << mask << " text: " << t;
    }
}

TEST(Bow, ClassifyCategoriesIndependent) {
    std::map<std::string, Matcher> ms;
    ms.emplace("epu", compile(load("bbd_base.json")));
    ms.emplace("trade", compile(load("trade.json")));
    const auto d = doc("1", "o", "2001-01-01", "Economic uncertainty as Congress weighs a new tariff.");
    EXPECT_EQ(classify_categories(d, ms), (std::set<std::string>{"epu", "trade"}));
    EXPECT_TRUE(classify_categories(doc("2", "o", "2001-01-01", "sunny weather"), ms).empty());
    ms.erase("trade");
    EXPECT_EQ(classify_categories(d, ms), (std::set<std::string>{"epu"}));
}

TEST(Bow, VariantErrors) {
    const auto base = load("bbd_base.json");
    EXPECT_THROW((void)apply_variant(base, {"v", {{"nope", {"x"}}}, {}, {}, {}, {}}), ValidationError);
    EXPECT_THROW((void)apply_variant(base, {"v", {}, {{"policy", {"tariff"}}}, {}, {}, {}}), ValidationError);
    EXPECT_THROW((void)apply_variant(base, {"v", {}, {{"uncertainty", {"uncertain", "uncertainty"}}}, {}, {}, {}}),
                 ValidationError);
}

TEST(Bow, SweepIdentityAndBruteForceDisagreement) {
    const auto base = load("bbd_base.json");
    std::mt19937_64 rng(77);
    std::vector<Document> docs;
    for (int i = 0; i < 1000; ++i)
        docs.push_back(doc("d" + std::to_string(1000 + i), "o", i % 2 ? "2001-01-15" : "2001-02-15", random_text(rng)));
    const Corpus corpus(docs);
    std::vector<VariantSpec> vs = {
        {"same", {}, {}, {}, {}, {}},
        {"hist", {{"economic", {"business", "industry", "commerce", "commercial"}}}, {}, {}, {}, {}},
        {"partial", {}, {}, {}, true, {}},
        {"case", {}, {}, false, {}, {}},
        {"nodeficit", {}, {{"policy", {"deficit"}}}, {}, {}, {}},
    };
    const auto rows = sensitivity_sweep(corpus, base, vs, 3);
    ASSERT_EQ(rows.size(), 6u);
    EXPECT_EQ(rows[0].variant, "base");
    EXPECT_EQ(rows[1].disagreement_vs_base, 0.0);
    std::vector<bool> base_labels;
    for (const auto& d : corpus.docs()) base_labels.push_back(naive_classify(base, d.full_text()));
    for (std::size_t k = 0; k < vs.size(); ++k) {
        const auto vd = apply_variant(base, vs[k]);
        std::size_t diff = 0, pos = 0;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            const bool l = naive_classify(vd, corpus.docs()[i].full_text());
            diff += l != base_labels[i];
            pos += l;
        }
        EXPECT_EQ(rows[k + 1].positives, pos) << vs[k].name;
        EXPECT_DOUBLE_EQ(rows[k + 1].disagreement_vs_base, static_cast<double>(diff) / 1000.0) << vs[k].name;
        std::size_t monthly = 0;
        for (const auto& [m, pt] : rows[k + 1].monthly) monthly += pt.first;
        EXPECT_EQ(monthly, pos);
    }
    // Thread count does not change the table.
    const auto again = sensitivity_sweep(corpus, base, vs, 1);
    for (std::size_t k = 0; k < rows.size(); ++k) EXPECT_EQ(rows[k].positives, again[k].positives);
}

TEST(Bow, AddingTermsIsMonotone) {
    const auto base = load("bbd_base.json");
    std::mt19937_64 rng(31);
    std::vector<Document> docs;
    for (int i = 0; i < 300; ++i) docs.push_back(doc("m" + std::to_string(i), "o", "2001-01-01", random_text(rng)));
    const Corpus corpus(docs);
    const auto base_labels = classify_corpus(corpus, compile(base));
    std::uniform_int_distribution<std::size_t> w(0, kVocab.size() - 1), g(0, 2), n(1, 4);
    const std::vector<std::string> groups{"economic", "policy", "uncertainty"};
    for (int trial = 0; trial < 100; ++trial) {
        VariantSpec v;
        v.name = "v" + std::to_string(trial);
        for (auto k = n(rng); k > 0; --k) {
            const auto& term = kVocab[w(rng)];
            if (!text::normalize(term, {}).empty()) v.add[groups[g(rng)]].push_back(term);
        }
        const auto labels = classify_corpus(corpus, compile(apply_variant(base, v)));
        for (std::size_t i = 0; i < labels.size(); ++i) ASSERT_GE(labels[i], base_labels[i]) << v.name;
    }
}
