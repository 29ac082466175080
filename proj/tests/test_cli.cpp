#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "epu/index.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using testing_support::slurp;
using testing_support::spit;

namespace {

struct Result {
    int code = -1;
    std::string output;
};

/// Runs the CLI with `args` (already shell-quoted where needed).
Result cli(const std::string& args, const fs::path& dir) {
    const auto log = dir / "cli.log";
    const std::string cmd = std::string(EPU_CLI) + " " + args + " > '" + log.string() + "' 2>&1";
    const int st = std::system(cmd.c_str());
    return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, slurp(log)};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = testing_support::scratch(::testing::UnitTest::GetInstance()->current_test_info()->name());
        // Ten documents: predictions at tau 0.5 give TP 2, FP 1, TN 6, FN 1.
        const double p[] = {0.9, 0.8, 0.7, 0.2, 0.1, 0.1, 0.3, 0.2, 0.4, 0.0};
        const int g[] = {1, 1, 0, 1, 0, 0, 0, 0, 0, 0};
        std::string corpus, scores = "id,task,model_id,p\n";
        for (int i = 0; i < 10; ++i) {
            const std::string id = "d" + std::to_string(i);
            const int month = i % 3 + 1;
            corpus += R"({"id":")" + id + R"(","outlet":")" + (i % 2 ? "b" : "a") + R"(","date":"2001-0)" +
                      std::to_string(month) + R"(-15","body":"text )" + id + R"(","gold_epu":)" + std::to_string(g[i]) +
                      R"(,"certainty":)" + std::to_string(i % 2 + 1) + "}\n";
            scores += id + ",epu,m1," + std::to_string(p[i]) + "\n";
        }
        spit(dir / "corpus.jsonl", corpus);
        spit(dir / "scores.csv", scores);
        spit(dir / "four.jsonl", R"({"id":"a","outlet":"x","date":"2001-01-01","body":"a","gold_epu":0}
{"id":"b","outlet":"x","date":"2001-01-02","body":"b","gold_epu":0}
{"id":"c","outlet":"x","date":"2001-01-03","body":"c","gold_epu":1}
{"id":"d","outlet":"x","date":"2001-01-04","body":"d","gold_epu":1}
)");
        spit(dir / "four.csv", "id,task,model_id,p\na,epu,m,0.1\nb,epu,m,0.4\nc,epu,m,0.6\nd,epu,m,0.9\n");
        spit(dir / "four_split.csv", "id,partition\na,validation\nb,validation\nc,validation\nd,validation\n");
    }
    void TearDown() override { fs::remove_all(dir); }

    nlohmann::json json_at(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

    std::string build_index_args(const fs::path& out, int threads) {
        return "build-index --corpus " + q(dir / "corpus.jsonl") + " --scores " + q(dir / "scores.csv") +
               " --mode probabilistic --t0-start 2001-01 --t0-end 2001-03 --created-at 2020-01-01T00:00:00Z" +
               " --threads " + std::to_string(threads) + " --out " + q(out);
    }

    fs::path dir;
};

} // namespace

TEST_F(Cli, Version) {
    const auto r = cli("--version", dir);
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.output.find("epu 0.1.0"), std::string::npos);
}

TEST_F(Cli, OptimizeThresholdYoudenOnFourScores) {
    auto r = cli("optimize-threshold --corpus " + q(dir / "four.jsonl") + " --scores " + q(dir / "four.csv") +
                     " --split " + q(dir / "four_split.csv") + " --rule youden --out " + q(dir / "t"),
                 dir);
    ASSERT_EQ(r.code, 0) << r.output;
    const auto j = json_at(dir / "t" / "threshold.json");
    EXPECT_EQ(j["tau"], 0.6);
    EXPECT_EQ(j["rule"], "youden");
    EXPECT_EQ(j["fit_scope"], "validation");
    EXPECT_EQ(j["metrics"]["tpr"], 1.0);
    EXPECT_EQ(j["metrics"]["fpr"], 0.0);

    // validation scope without a split is refused
    r = cli("optimize-threshold --corpus " + q(dir / "four.jsonl") + " --scores " + q(dir / "four.csv") + " --out " +
                q(dir / "t2"),
            dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("--split"), std::string::npos);
    r = cli("optimize-threshold --scope pooled --corpus " + q(dir / "four.jsonl") + " --scores " + q(dir / "four.csv") +
                " --out " + q(dir / "t3"),
            dir);
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(json_at(dir / "t3" / "threshold.json")["tau"], 0.6);
}

TEST_F(Cli, EvaluateFixture) {
    const auto r = cli("evaluate --corpus " + q(dir / "corpus.jsonl") + " --scores " + q(dir / "scores.csv") +
                           " --tau 0.5 --bootstrap 200 --seed 3 --breakdowns --min-n 2 --out " + q(dir / "e"),
                       dir);
    ASSERT_EQ(r.code, 0) << r.output;
    const auto j = json_at(dir / "e" / "metrics.json");
    const auto& m = j["categories"]["epu"];
    EXPECT_EQ(m["counts"]["tp"], 2);
    EXPECT_EQ(m["counts"]["fp"], 1);
    EXPECT_EQ(m["counts"]["tn"], 6);
    EXPECT_EQ(m["counts"]["fn"], 1);
    EXPECT_DOUBLE_EQ(m["accuracy"].get<double>(), 0.8);
    EXPECT_DOUBLE_EQ(m["precision"].get<double>(), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(m["recall"].get<double>(), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(m["f1"].get<double>(), 2.0 / 3.0);
    EXPECT_EQ(m["bootstrap"]["f1"]["resamples"], 200);
    EXPECT_EQ(j["tau"], 0.5);
    EXPECT_TRUE(fs::exists(dir / "e" / "certainty_errors.csv"));
    EXPECT_TRUE(fs::exists(dir / "e" / "score_distribution.csv"));
    EXPECT_TRUE(fs::exists(dir / "e" / "f1_by_length.csv"));
    const auto manifest = json_at(dir / "e" / "manifest.json");
    EXPECT_EQ(manifest["command"], "evaluate");
    EXPECT_TRUE(manifest["outputs"].contains("metrics.json"));
    EXPECT_EQ(manifest["inputs"].size(), 2u);
}

TEST_F(Cli, BuildIndexDeterministicAcrossThreads) {
    ASSERT_EQ(cli(build_index_args(dir / "i1", 1), dir).code, 0);
    ASSERT_EQ(cli(build_index_args(dir / "i2", 4), dir).code, 0);
    EXPECT_EQ(slurp(dir / "i1" / "index.csv"), slurp(dir / "i2" / "index.csv"));
    EXPECT_EQ(slurp(dir / "i1" / "index.json"), slurp(dir / "i2" / "index.json"));
    const auto meta = json_at(dir / "i1" / "index.json");
    EXPECT_EQ(meta["construction"], "probabilistic");
    EXPECT_EQ(meta["created_at"], "2020-01-01T00:00:00Z");
    EXPECT_EQ(meta["model_id"], "m1");
}

TEST_F(Cli, ManifestReplayReproducesOutputs) {
    ASSERT_EQ(cli(build_index_args(dir / "orig", 0), dir).code, 0);
    const auto r = cli("build-index --config " + q(dir / "orig" / "manifest.json") + " --out " + q(dir / "replay"), dir);
    ASSERT_EQ(r.code, 0) << r.output;
    for (const char* f : {"index.csv", "index.json"})
        EXPECT_EQ(slurp(dir / "orig" / f), slurp(dir / "replay" / f)) << f;
    const auto a = json_at(dir / "orig" / "manifest.json"), b = json_at(dir / "replay" / "manifest.json");
    EXPECT_EQ(a["outputs"], b["outputs"]);
    EXPECT_EQ(a["inputs"], b["inputs"]);
    // a manifest from another command is refused
    const auto bad = cli("evaluate --config " + q(dir / "orig" / "manifest.json"), dir);
    EXPECT_EQ(bad.code, 1);
}

TEST_F(Cli, FlatConfigFileAndFlagsOverride) {
    spit(dir / "cfg.json", R"({"corpus": ")" + (dir / "corpus.jsonl").string() +
                               R"(", "mode": "gold", "t0-start": "2001-01", "t0-end": "2001-03", "created-at": "x"})");
    auto r = cli("build-index --config " + q(dir / "cfg.json") + " --out " + q(dir / "g"), dir);
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(json_at(dir / "g" / "index.json")["construction"], "gold");
    r = cli("build-index --config " + q(dir / "cfg.json") + " --mode nonsense --out " + q(dir / "g2"), dir);
    EXPECT_EQ(r.code, 1);
    spit(dir / "cfg_bad.json", R"({"no-such-key": 1})");
    EXPECT_EQ(cli("build-index --config " + q(dir / "cfg_bad.json"), dir).code, 1);
    spit(dir / "cfg_type.json", R"({"threads": "four"})");
    EXPECT_EQ(cli("build-index --config " + q(dir / "cfg_type.json"), dir).code, 1);
}

TEST_F(Cli, ManifestOnlyWritesNothingElse) {
    const auto r = cli(build_index_args(dir / "m", 1) + " --manifest-only", dir);
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_TRUE(fs::exists(dir / "m" / "manifest.json"));
    EXPECT_FALSE(fs::exists(dir / "m" / "index.csv"));
    const auto j = json_at(dir / "m" / "manifest.json");
    EXPECT_EQ(j["config"]["mode"], "probabilistic");
    EXPECT_EQ(j["config"]["t0-start"], "2001-01");
    EXPECT_TRUE(j["outputs"].empty());
}

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(cli("", dir).code, 1);
    EXPECT_EQ(cli("evaluate --bogus", dir).code, 1);
    EXPECT_EQ(cli("evaluate --corpus " + q(dir / "corpus.jsonl") + " --scores " + q(dir / "scores.csv") +
                      " --tau abc --out " + q(dir / "x"),
                  dir)
                  .code,
              1);
    EXPECT_EQ(cli("evaluate --corpus " + q(dir / "corpus.jsonl") + " --scores " + q(dir / "scores.csv") +
                      " --tau 1.5 --out " + q(dir / "x"),
                  dir)
                  .code,
              1);
    EXPECT_EQ(cli("evaluate --corpus " + q(dir / "missing.jsonl") + " --tau 0.5 --out " + q(dir / "x"), dir).code, 2);
    const auto r = cli("score-fetch --corpus " + q(dir / "corpus.jsonl") +
                           " --scorer-url http://127.0.0.1:1 --retries 0 --timeout-ms 300 --out " + q(dir / "f"),
                       dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("unscored"), std::string::npos) << r.output;
}

TEST_F(Cli, CorrelateAndCombine) {
    spit(dir / "a.csv", "month,value\n2001-01,90\n2001-02,100\n2001-03,110\n");
    spit(dir / "b.csv", "month,value\n2001-01,80\n2001-02,100\n2001-03,120\n");
    auto r = cli("correlate --series-a " + q(dir / "a.csv") + " --series-b " + q(dir / "b.csv") + " --out " +
                     q(dir / "c"),
                 dir);
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_DOUBLE_EQ(json_at(dir / "c" / "correlation.json")["r"].get<double>(), 1.0);
    spit(dir / "w.csv", "series_id,weight\nus,1\nuk,1\n");
    r = cli("combine --series us=" + q(dir / "a.csv") + " --series uk=" + q(dir / "b.csv") + " --weights " +
                q(dir / "w.csv") + " --t0-start 2001-01 --t0-end 2001-03 --out " + q(dir / "k"),
            dir);
    ASSERT_EQ(r.code, 0) << r.output;
    std::ifstream in(dir / "k" / "index.csv");
    const auto k = epu::read_index_csv(in).values;
    ASSERT_EQ(k.size(), 3u);
    const std::vector<double> want{85, 100, 115};
    std::size_t i = 0;
    for (const auto& [m, v] : k) EXPECT_NEAR(v, want[i++], 1e-9) << m.str();
}
