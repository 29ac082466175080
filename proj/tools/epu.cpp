// epu: command-line entry point. Every run resolves its configuration
// (defaults < --config file < flags), writes artifacts atomically into --out
// and finishes with manifest.json. Passing a manifest back through --config
// replays the run.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "epu/epu.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

enum class Kind { str, num, integer, flag, list };

struct OptSpec {
    std::string name;
    Kind kind;
    std::string help;
    json def = nullptr;
    bool input = false;  // value names input file(s) to checksum
};

std::string sha256_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw epu::IoError("cannot open '" + p.string() + "'");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    char h[3];
    for (unsigned i = 0; i < len; ++i) {
        std::snprintf(h, sizeof h, "%02x", md[i]);
        hex += h;
    }
    return hex;
}

std::string sha256_string(const std::string& s) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_Digest(s.data(), s.size(), md, &len, EVP_sha256(), nullptr);
    std::string hex;
    char h[3];
    for (unsigned i = 0; i < len; ++i) {
        std::snprintf(h, sizeof h, "%02x", md[i]);
        hex += h;
    }
    return hex;
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Path part of a `name=path` list entry.
std::string path_of(const std::string& entry) {
    const auto eq = entry.find('=');
    return eq == std::string::npos ? entry : entry.substr(eq + 1);
}

class Run {
public:
    Run(std::string command, json config) : command_(std::move(command)), config_(std::move(config)) {}

    const std::string& command() const { return command_; }
    json& config() { return config_; }

    bool has(const std::string& k) const {
        auto it = config_.find(k);
        if (it == config_.end() || it->is_null()) return false;
        if (it->is_string()) return !it->get<std::string>().empty();
        if (it->is_array()) return !it->empty();
        return true;
    }
    void need(const std::string& k) const {
        if (!has(k)) throw epu::ValidationError("--" + k + " is required");
    }
    std::string str(const std::string& k) const { return has(k) ? config_.at(k).get<std::string>() : std::string(); }
    double num(const std::string& k) const {
        need(k);
        return config_.at(k).get<double>();
    }
    long long integer(const std::string& k) const {
        need(k);
        return config_.at(k).get<long long>();
    }
    bool flag(const std::string& k) const { return has(k) && config_.at(k).get<bool>(); }
    std::vector<std::string> list(const std::string& k) const {
        return has(k) ? config_.at(k).get<std::vector<std::string>>() : std::vector<std::string>{};
    }
    unsigned threads() const { return has("threads") ? static_cast<unsigned>(integer("threads")) : 0u; }
    const std::string& created_at() const { return created_at_; }
    void set_created_at(std::string s) { created_at_ = std::move(s); }

    std::ifstream open(const std::string& key) const {
        need(key);
        return open_path(str(key));
    }
    static std::ifstream open_path(const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw epu::IoError("cannot open '" + p + "'");
        return in;
    }

    fs::path out_dir() const { return fs::path(str("out")); }

    /// Writes `name` into the output directory via a temporary file and rename.
    void write(const std::string& name, const std::string& content) {
        const fs::path dir = out_dir();
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw epu::IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
        const fs::path final_path = dir / name;
        const fs::path tmp = dir / ("." + name + ".tmp." + std::to_string(::getpid()));
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw epu::IoError("cannot write '" + tmp.string() + "'");
            out << content;
            out.flush();
            if (!out) throw epu::IoError("write failed for '" + tmp.string() + "'");
        }
        fs::rename(tmp, final_path, ec);
        if (ec) {
            fs::remove(tmp, ec);
            throw epu::IoError("cannot move output into place: '" + final_path.string() + "'");
        }
        outputs_[name] = sha256_string(content);
    }
    void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

    json inputs = json::object();
    const json& outputs() const { return outputs_; }

private:
    std::string command_;
    json config_;
    std::string created_at_;
    json outputs_ = json::object();
};

epu::Corpus load_corpus(const Run& run, const std::string& key = "corpus") {
    auto in = run.open(key);
    epu::IngestOptions opt;
    opt.threads = run.threads();
    auto res = epu::ingest(in, opt);
    if (!res.report.rejections.empty())
        std::cerr << "warning: " << res.report.rejections.size() << " record(s) in '" << run.str(key)
                  << "' rejected; first: line " << res.report.rejections.front().line << ": "
                  << res.report.rejections.front().reason << "\n";
    return std::move(res.corpus);
}

epu::ScoreSet load_scores(const Run& run, const epu::Corpus* corpus) {
    auto in = run.open("scores");
    epu::ScoreFilter f;
    if (run.has("task")) f.task = run.str("task");
    if (run.has("model-id")) f.model_id = run.str("model-id");
    return epu::load_scores(in, corpus, f);
}

std::optional<epu::SplitAssignment> load_split(const Run& run) {
    if (!run.has("split")) return std::nullopt;
    auto in = run.open("split");
    return epu::read_split_csv(in);
}

epu::MonthRange t0_of(const Run& run) {
    run.need("t0-start");
    run.need("t0-end");
    epu::MonthRange r{epu::parse_month_or_throw(run.str("t0-start")), epu::parse_month_or_throw(run.str("t0-end"))};
    if (r.empty()) throw epu::ValidationError("--t0-start is after --t0-end");
    return r;
}

std::vector<double> parse_doubles(const std::string& s, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto v = epu::csv::parse_double(item);
        if (!v) throw epu::ValidationError("bad number '" + item + "' in --" + what);
        out.push_back(*v);
    }
    return out;
}

json metric_report_json(const epu::MetricReport& r) {
    json j;
    j["n"] = r.counts.total();
    j["counts"] = {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}};
    j["accuracy"] = epu::metric_json(r.accuracy);
    j["precision"] = epu::metric_json(r.precision);
    j["recall"] = epu::metric_json(r.recall);
    j["f1"] = epu::metric_json(r.f1);
    if (!r.bootstrap.empty()) {
        json b = json::object();
        for (const auto& [stat, s] : r.bootstrap)
            b[std::string(epu::to_string(stat))] = {{"mean", s.mean},         {"ci_low", s.ci_low},
                                                    {"ci_high", s.ci_high},   {"level", s.level},
                                                    {"resamples", s.resamples}, {"dropped", s.dropped},
                                                    {"seed", s.seed}};
        j["bootstrap"] = std::move(b);
    }
    return j;
}

// ---- subcommands ----------------------------------------------------------

void cmd_ingest(Run& run) {
    auto in = run.open("corpus");
    epu::IngestOptions opt;
    opt.threads = run.threads();
    if (run.has("date-start")) opt.window.first = epu::parse_date_or_throw(run.str("date-start"));
    if (run.has("date-end")) opt.window.last = epu::parse_date_or_throw(run.str("date-end"));
    auto res = epu::ingest(in, opt);
    std::ostringstream corpus;
    epu::write_jsonl(corpus, res.corpus);
    run.write("corpus.jsonl", corpus.str());
    json rej = json::array();
    for (const auto& r : res.report.rejections) rej.push_back({{"line", r.line}, {"reason", r.reason}, {"id", r.id}});
    run.write_json("ingest_report.json", {{"lines_read", res.report.lines_read},
                                          {"accepted", res.report.accepted},
                                          {"rejected", res.report.rejections.size()},
                                          {"unknown_fields", res.report.unknown_fields},
                                          {"rejections", rej}});
}

void cmd_dedup(Run& run) {
    const auto corpus = load_corpus(run);
    epu::DedupReport rep;
    const auto out = epu::deduplicate(corpus, &rep);
    std::ostringstream s;
    epu::write_jsonl(s, out);
    run.write("corpus.jsonl", s.str());
    run.write_json("dedup_report.json", {{"input", rep.input},
                                         {"removed_empty", rep.removed_empty},
                                         {"removed_duplicates", rep.removed_duplicates},
                                         {"output", out.size()}});
}

void cmd_split(Run& run) {
    const auto corpus = load_corpus(run);
    const auto method = run.str("method");
    const auto seed = static_cast<std::uint64_t>(run.integer("seed"));
    epu::SplitAssignment split;
    if (method == "random" || method == "stratified") {
        const auto f = parse_doubles(run.str("fractions"), "fractions");
        if (f.size() != 3) throw epu::ValidationError("--fractions needs three values (train,validation,test)");
        const epu::Fractions fr{f[0], f[1], f[2]};
        split = method == "random" ? epu::split_random(corpus, fr, seed)
                                   : epu::split_stratified_multilabel(corpus, fr, seed);
    } else if (method == "temporal") {
        run.need("cutoff");
        split = epu::split_temporal(corpus, epu::parse_date_or_throw(run.str("cutoff")), run.num("val-fraction"), seed);
    } else {
        throw epu::ValidationError("unknown split method '" + method + "'");
    }
    std::ostringstream s;
    epu::write_split_csv(s, split);
    run.write("split.csv", s.str());
    const auto sizes = split.sizes();
    for (const auto& w : split.warnings()) std::cerr << "warning: " << w << "\n";
    run.write_json("split_report.json", {{"method", method},
                                         {"seed", seed},
                                         {"sizes", {{"train", sizes[0]}, {"validation", sizes[1]}, {"test", sizes[2]}}},
                                         {"warnings", split.warnings()}});
}

std::vector<epu::Dictionary> load_dictionaries(const Run& run) {
    run.need("dict");
    std::vector<epu::Dictionary> out;
    for (const auto& p : run.list("dict")) {
        auto in = Run::open_path(p);
        out.push_back(epu::load_dictionary(in));
    }
    return out;
}

void cmd_bow(Run& run) {
    const auto corpus = load_corpus(run);
    const auto dicts = load_dictionaries(run);
    std::map<std::string, epu::Labels> by_cat;
    json report = json::array();
    for (const auto& d : dicts) {
        if (by_cat.count(d.name())) throw epu::ValidationError("two dictionaries are named '" + d.name() + "'");
        const auto m = epu::compile(d);
        const auto labels = epu::classify_corpus(corpus, m, run.threads());
        std::vector<epu::Labels::Entry> e;
        std::size_t pos = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            e.emplace_back(corpus.docs()[i].id, labels[i] != 0);
            pos += labels[i];
        }
        by_cat.emplace(d.name(), epu::Labels(std::move(e)));
        report.push_back({{"dictionary", d.name()},
                          {"patterns", m.pattern_count()},
                          {"groups", d.groups().size()},
                          {"positives", pos},
                          {"total", labels.size()}});
    }
    std::ostringstream s;
    epu::write_labels_csv(s, by_cat);
    run.write("labels.csv", s.str());
    run.write_json("bow_report.json", {{"dictionaries", report}});
}

void cmd_sweep(Run& run) {
    const auto corpus = load_corpus(run);
    const auto dicts = load_dictionaries(run);
    if (dicts.size() != 1) throw epu::ValidationError("sweep takes exactly one base dictionary");
    auto vin = run.open("variants");
    auto vj = nlohmann::json::parse(vin, nullptr, false);
    if (vj.is_discarded()) throw epu::ValidationError("variants file is not valid JSON");
    const auto rows = epu::sensitivity_sweep(corpus, dicts.front(), epu::variants_from_json(vj), run.threads());
    std::ostringstream a, b;
    epu::write_sweep_csv(a, rows);
    epu::write_sweep_monthly_csv(b, rows);
    run.write("sweep.csv", a.str());
    run.write("sweep_monthly.csv", b.str());
}

void cmd_score_fetch(Run& run) {
    const auto corpus = load_corpus(run);
    epu::ScoringEndpoint ep;
    if (!run.has("scorer-url"))
        throw epu::ValidationError(std::string("no scorer address: pass --scorer-url or set ") + epu::kScorerEnvVar);
    ep.base_url = run.str("scorer-url");
    ep.batch_size = static_cast<std::size_t>(run.integer("batch-size"));
    ep.max_in_flight = static_cast<std::size_t>(run.integer("max-in-flight"));
    ep.retries = static_cast<int>(run.integer("retries"));
    ep.timeout = std::chrono::milliseconds(run.integer("timeout-ms"));
    const auto res = epu::fetch_scores(ep, corpus, run.str("task"));
    std::ostringstream s;
    epu::write_scores_csv(s, res.scores);
    run.write("scores.csv", s.str());
    run.write_json("fetch_report.json", {{"model_id", res.scores.model_id()},
                                         {"scored", res.scores.size()},
                                         {"batches", res.batches},
                                         {"retries_used", res.retries_used},
                                         {"unscored", res.unscored}});
    if (!res.complete())
        throw epu::IoError(std::to_string(res.unscored.size()) + " document(s) left unscored after retries");
}

void cmd_score_load(Run& run) {
    std::optional<epu::Corpus> corpus;
    if (run.has("corpus")) corpus = load_corpus(run);
    const auto scores = load_scores(run, corpus ? &*corpus : nullptr);
    double sum = 0;
    for (const auto& [id, p] : scores.entries()) sum += p;
    std::ostringstream s;
    epu::write_scores_csv(s, scores);
    run.write("scores.csv", s.str());
    run.write_json("score_report.json",
                   {{"task", scores.task()},
                    {"model_id", scores.model_id()},
                    {"n", scores.size()},
                    {"mean_p", scores.size() ? sum / static_cast<double>(scores.size()) : 0.0},
                    {"max_sequence_length", scores.meta().max_sequence_length},
                    {"language_of_training", scores.meta().language_of_training},
                    {"coverage_checked", corpus.has_value()}});
}

std::string rule_spec(const Run& run) {
    const auto r = run.str("rule");
    if (r == "fixed") return "fixed:" + epu::csv::format_double(run.num("tau"));
    if ((r == "recall" || r == "precision") && run.has("target")) return r + ":" + epu::csv::format_double(run.num("target"));
    return r;
}

epu::Labels gold_for(const epu::Corpus& corpus, const Run& run) {
    const auto cat = run.str("category");
    return cat.empty() || cat == "epu" ? epu::gold_labels(corpus) : epu::gold_category_labels(corpus, cat);
}

void cmd_optimize_threshold(Run& run) {
    const auto corpus = load_corpus(run);
    const auto scores = load_scores(run, nullptr);
    const auto gold = gold_for(corpus, run);
    const auto split = load_split(run);
    const auto scope = run.str("scope");
    if (scope != "validation" && scope != "pooled") throw epu::ValidationError("--scope must be validation or pooled");
    if (scope == "validation" && !split)
        throw epu::ValidationError("fitting on the validation partition needs --split (or pass --scope pooled)");
    const epu::SplitAssignment* sp = scope == "validation" ? &*split : nullptr;
    const auto rule = epu::parse_rule(rule_spec(run));

    const auto group_by = run.str("group-by");
    if (group_by.empty()) {
        const auto sample = sp ? epu::ValidationSample::from_split(scores, gold, *sp)
                               : epu::ValidationSample::pooled(scores, gold);
        const auto r = epu::optimize(sample, rule);
        auto j = epu::threshold_report(r, scores.task(), scores.model_id());
        j["n"] = sample.size();
        run.write_json("threshold.json", j);
        return;
    }
    std::function<std::string(const std::string&)> key;
    if (group_by == "outlet" || group_by == "lang") {
        key = [&](const std::string& id) {
            const auto* d = corpus.find(id);
            if (!d) return std::string("?");
            return group_by == "outlet" ? d->outlet : d->lang;
        };
    } else {
        throw epu::ValidationError("--group-by must be outlet or lang");
    }
    const auto groups = epu::group_samples(scores, gold, sp, key);
    const auto res = epu::optimize_per_group(groups, rule, static_cast<std::size_t>(run.integer("min-group-size")));
    json arr = json::array();
    for (const auto& [g, gt] : res) {
        json j;
        if (gt.result) {
            j = epu::threshold_report(*gt.result, scores.task(), scores.model_id(), g);
        } else {
            j["task"] = scores.task();
            j["model_id"] = scores.model_id();
            j["rule"] = epu::to_string(rule);
            j["group"] = g;
            j["error"] = gt.error;
        }
        j["n"] = gt.n;
        j["below_min_size"] = gt.below_min_size;
        arr.push_back(std::move(j));
    }
    run.write_json("thresholds_by_group.json", {{"group_by", group_by}, {"groups", arr}});
}

std::optional<double> tau_of(const Run& run) {
    if (run.has("tau")) return run.num("tau");
    if (run.has("threshold")) {
        auto in = run.open("threshold");
        auto j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded() || !j.contains("tau") || !j["tau"].is_number())
            throw epu::ValidationError("threshold file lacks a numeric 'tau'");
        return j["tau"].get<double>();
    }
    return std::nullopt;
}

std::string rule_name_of(const Run& run) {
    if (run.has("tau") || !run.has("threshold")) return "fixed";
    auto in = run.open("threshold");
    auto j = nlohmann::json::parse(in, nullptr, false);
    return j.value("rule", std::string("fixed"));
}

void cmd_evaluate(Run& run) {
    const auto corpus = load_corpus(run);
    const auto split = load_split(run);
    std::optional<epu::Partition> part;
    if (split) part = epu::parse_partition(run.str("partition"));
    auto keep = [&](const std::string& id) { return !part || split->find(id) == part; };

    std::map<std::string, epu::Labels> predicted, gold;
    std::optional<epu::ScoreSet> scores;
    std::optional<double> tau;
    if (run.has("scores")) {
        scores = load_scores(run, nullptr);
        tau = tau_of(run);
        if (!tau) throw epu::ValidationError("evaluating scores needs --tau or --threshold");
        const auto cat = run.has("category") ? run.str("category") : std::string("epu");
        predicted[cat] = epu::binarize(*scores, *tau);
    } else if (run.has("labels")) {
        auto in = run.open("labels");
        predicted = epu::read_labels_csv(in);
    } else {
        throw epu::ValidationError("evaluate needs --scores or --labels");
    }
    json cats = json::object();
    for (auto& [cat, pred] : predicted) {
        auto g = cat == "epu" ? epu::gold_labels(corpus) : epu::gold_category_labels(corpus, cat);
        std::vector<epu::Labels::Entry> pe, ge;
        for (const auto& [id, v] : g.entries()) {
            if (!keep(id)) continue;
            auto p = pred.find(id);
            if (!p) continue;
            pe.emplace_back(id, *p);
            ge.emplace_back(id, v);
        }
        if (ge.empty()) {
            cats[cat] = {{"n", 0}, {"error", "no gold-labelled documents with predictions"}};
            continue;
        }
        const auto pairs = epu::align(epu::Labels(std::move(pe)), epu::Labels(std::move(ge)));
        auto rep = epu::metrics(epu::confusion(pairs.predicted, pairs.gold));
        json bs_err = json::object();
        if (run.has("bootstrap") && run.integer("bootstrap") > 0) {
            epu::BootstrapOptions bo;
            bo.resamples = static_cast<std::size_t>(run.integer("bootstrap"));
            bo.seed = static_cast<std::uint64_t>(run.integer("seed"));
            bo.level = run.num("level");
            bo.threads = run.threads();
            for (auto s : {epu::Statistic::accuracy, epu::Statistic::precision, epu::Statistic::recall, epu::Statistic::f1}) {
                try {
                    rep.bootstrap[s] = epu::bootstrap(pairs, s, bo);
                } catch (const epu::ValidationError& e) {
                    bs_err[std::string(epu::to_string(s))] = e.what();
                }
            }
        }
        auto j = metric_report_json(rep);
        if (!bs_err.empty()) j["bootstrap_errors"] = bs_err;
        cats[cat] = std::move(j);
    }
    json out;
    if (scores) {
        out["task"] = scores->task();
        out["model_id"] = scores->model_id();
        out["tau"] = *tau;
    }
    out["partition"] = part ? json(std::string(epu::to_string(*part))) : json("all");
    out["categories"] = std::move(cats);

    if (scores && run.flag("breakdowns")) {
        std::vector<epu::EvalRecord> recs;
        for (auto& r : epu::eval_records(corpus, *scores))
            if (keep(r.id)) recs.push_back(std::move(r));
        std::ostringstream a, b, c;
        try {
            const auto rows = epu::misclassification_by_certainty(recs, *tau, static_cast<std::size_t>(run.integer("min-n")));
            a << "certainty,n,tp,fp,tn,fn,error_rate,below_min\n";
            for (const auto& r : rows)
                a << r.certainty << ',' << r.counts.total() << ',' << r.counts.tp << ',' << r.counts.fp << ','
                  << r.counts.tn << ',' << r.counts.fn << ',' << epu::csv::format_double(r.error_rate) << ','
                  << (r.below_min ? "true" : "false") << '\n';
            run.write("certainty_errors.csv", a.str());
            b << "certainty,bin,lo,hi,count,mass\n";
            for (const auto& r : epu::score_distribution_by_certainty(recs, static_cast<std::size_t>(run.integer("hist-bins"))))
                b << r.certainty << ',' << r.bin << ',' << epu::csv::format_double(r.lo) << ','
                  << epu::csv::format_double(r.hi) << ',' << r.count << ',' << epu::csv::format_double(r.mass) << '\n';
            run.write("score_distribution.csv", b.str());
        } catch (const epu::ValidationError& e) {
            out["certainty_breakdown_error"] = e.what();
        }
        std::vector<std::size_t> edges;
        for (double e : parse_doubles(run.str("length-edges"), "length-edges")) {
            if (!(e >= 0)) throw epu::ValidationError("length edges must be >= 0");
            edges.push_back(static_cast<std::size_t>(e));
        }
        const auto lb = epu::f1_by_length(recs, *tau, edges);
        c << "lo,hi,n,tp,fp,tn,fn,f1\n";
        for (const auto& r : lb.rows)
            c << r.lo << ',' << r.hi << ',' << r.counts.total() << ',' << r.counts.tp << ',' << r.counts.fp << ','
              << r.counts.tn << ',' << r.counts.fn << ',' << (r.f1 ? epu::csv::format_double(*r.f1) : "") << '\n';
        run.write("f1_by_length.csv", c.str());
        out["length_out_of_range"] = lb.out_of_range;
    }
    run.write_json("metrics.json", out);
}

void write_index(Run& run, const epu::IndexSeries& s, const json& extra = json::object()) {
    std::ostringstream csv;
    epu::write_index_csv(csv, s);
    run.write("index.csv", csv.str());
    auto meta = epu::to_json(s.meta);
    for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = *it;
    run.write_json("index.json", meta);
}

void cmd_build_index(Run& run) {
    const auto corpus = load_corpus(run);
    epu::IndexConfig cfg;
    cfg.t0 = t0_of(run);
    cfg.granularity = epu::parse_granularity(run.str("granularity"));
    cfg.sd = epu::parse_sd_convention(run.str("sd"));
    cfg.threads = run.threads();
    epu::IndexMeta meta;
    meta.created_at = run.created_at();
    meta.construction = run.str("mode");
    epu::ArticleValues values;
    if (meta.construction == "binary" || meta.construction == "probabilistic") {
        const auto scores = load_scores(run, &corpus);
        meta.task = scores.task();
        meta.model_id = scores.model_id();
        if (meta.construction == "binary") {
            const auto tau = tau_of(run);
            if (!tau) throw epu::ValidationError("binary mode needs --tau or --threshold");
            meta.tau = *tau;
            meta.rule = rule_name_of(run);
            values = epu::values_from_scores_binary(corpus, scores, *tau);
        } else {
            meta.rule = "probabilistic";
            values = epu::values_from_scores(corpus, scores);
        }
    } else if (meta.construction == "labels") {
        auto in = run.open("labels");
        const auto by_cat = epu::read_labels_csv(in);
        const auto cat = run.has("category") ? run.str("category") : std::string("epu");
        auto it = by_cat.find(cat);
        if (it == by_cat.end()) throw epu::ValidationError("labels file has no category '" + cat + "'");
        meta.task = cat;
        meta.rule = "labels";
        values = epu::values_from_labels(corpus, it->second);
    } else if (meta.construction == "gold") {
        meta.task = "epu";
        meta.rule = "gold";
        values = epu::values_from_gold(corpus);
    } else {
        throw epu::ValidationError("--mode must be binary, probabilistic, labels or gold");
    }
    const auto s = epu::build_index(corpus, values, cfg, meta);
    write_index(run, s);
}

epu::IndexSeries read_series(const std::string& path) {
    auto in = Run::open_path(path);
    return epu::read_index_csv(in);
}

void cmd_combine(Run& run) {
    run.need("series");
    std::vector<std::pair<std::string, epu::IndexSeries>> series;
    for (const auto& e : run.list("series")) {
        const auto eq = e.find('=');
        if (eq == std::string::npos || eq == 0) throw epu::ValidationError("--series entries must be id=path");
        series.emplace_back(e.substr(0, eq), read_series(e.substr(eq + 1)));
    }
    auto win = run.open("weights");
    const auto weights = epu::read_weights_csv(win);
    auto s = epu::weighted_combine(series, weights, t0_of(run));
    s.meta.created_at = run.created_at();
    write_index(run, s);
}

void cmd_correlate(Run& run) {
    run.need("series-a");
    run.need("series-b");
    const auto a = read_series(run.str("series-a"));
    const auto b = read_series(run.str("series-b"));
    const auto c = epu::correlate(a.values, b.values);
    run.write_json("correlation.json", {{"n", c.n},
                                        {"first", c.first.str()},
                                        {"last", c.last.str()},
                                        {"r", c.r ? json(*c.r) : json(nullptr)}});
}

std::string latent_csv(const epu::LatentSeries& l) {
    std::ostringstream s;
    s << "month,u,share\n";
    for (const auto& [m, u] : l.u)
        s << m.str() << ',' << epu::csv::format_double(u) << ',' << epu::csv::format_double(l.share.at(m)) << '\n';
    return s.str();
}

void cmd_simulate(Run& run) {
    epu::SimConfig cfg;
    if (run.has("sim-config")) {
        auto in = run.open("sim-config");
        auto j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded()) throw epu::ValidationError("simulation config is not valid JSON");
        cfg = epu::sim_config_from_json(j);
    }
    if (run.has("seed")) cfg.seed = static_cast<std::uint64_t>(run.integer("seed"));
    if (run.has("fpr")) cfg.fpr = run.num("fpr");
    if (run.has("fnr")) cfg.fnr = run.num("fnr");
    cfg.validate();
    const auto mode = run.str("mode");
    if (mode != "labels" && mode != "scores") throw epu::ValidationError("--mode must be labels or scores");

    const auto sim = epu::simulate_corpus(cfg);
    const auto gold = epu::gold_labels(sim.corpus);
    std::ostringstream corpus;
    epu::write_jsonl(corpus, sim.corpus);
    run.write("corpus.jsonl", corpus.str());
    run.write("latent.csv", latent_csv(sim.latent));

    epu::IndexConfig ic;
    ic.t0 = cfg.range();
    ic.threads = run.threads();
    epu::IndexMeta gm;
    gm.task = "epu";
    gm.construction = "gold";
    gm.rule = "gold";
    gm.created_at = run.created_at();
    const auto gold_index = epu::build_index(sim.corpus, epu::values_from_gold(sim.corpus), ic, gm);

    epu::IndexMeta pm = gm;
    epu::ArticleValues pred_values;
    if (mode == "labels") {
        const auto pred = epu::inject_errors(gold, cfg.fpr, cfg.fnr, cfg.seed);
        std::ostringstream s;
        epu::write_labels_csv(s, {{"epu", pred}});
        run.write("labels.csv", s.str());
        pm.construction = "labels";
        pm.rule = "labels";
        pred_values = epu::values_from_labels(sim.corpus, pred);
    } else {
        const auto scores = epu::inject_scores(gold, cfg.fpr, cfg.fnr, cfg.score_noise.value_or(0.0), cfg.seed);
        std::ostringstream s;
        epu::write_scores_csv(s, scores);
        run.write("scores.csv", s.str());
        pm.construction = "probabilistic";
        pm.rule = "probabilistic";
        pm.model_id = scores.model_id();
        pred_values = epu::values_from_scores(sim.corpus, scores);
    }
    const auto pred_index = epu::build_index(sim.corpus, pred_values, ic, pm);
    std::ostringstream gi, pi;
    epu::write_index_csv(gi, gold_index);
    epu::write_index_csv(pi, pred_index);
    run.write("gold_index.csv", gi.str());
    run.write("pred_index.csv", pi.str());

    const auto rep = epu::error_decomposition(pred_index, gold_index, sim.latent.share);
    std::ostringstream e;
    e << "month,e\n";
    for (const auto& [m, v] : rep.e) e << m.str() << ',' << epu::csv::format_double(v) << '\n';
    run.write("error.csv", e.str());
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json report = {{"config", epu::to_json(cfg)},
                   {"documents", sim.corpus.size()},
                   {"gold_positives", gold.positives()},
                   {"corr_pred_gold", opt(rep.corr_pred_gold)},
                   {"corr_pred_latent", opt(rep.corr_pred_latent)},
                   {"corr_gold_latent", opt(rep.corr_gold_latent)},
                   {"mean_e", rep.mean_e},
                   {"sd_e", rep.sd_e},
                   {"max_abs_e", rep.max_abs_e}};

    if (run.has("fnr-grid")) {
        const auto grid = parse_doubles(run.str("fnr-grid"), "fnr-grid");
        std::vector<std::pair<double, double>> cells;
        for (double f : grid) cells.emplace_back(cfg.fpr, f);
        std::vector<std::uint64_t> seeds;
        for (long long k = 0; k < run.integer("seeds"); ++k) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(k));
        const auto res = epu::run_error_grid(cfg, cells, seeds, run.threads());
        std::ostringstream g;
        g << "fpr,fnr,seeds,mean_corr,mean_sd_e\n";
        for (const auto& c : res)
            g << epu::csv::format_double(c.fpr) << ',' << epu::csv::format_double(c.fnr) << ',' << seeds.size() << ','
              << (c.mean_corr ? epu::csv::format_double(*c.mean_corr) : "") << ','
              << epu::csv::format_double(c.mean_sd_e) << '\n';
        run.write("grid.csv", g.str());
    }
    run.write_json("error_report.json", report);
}

// ---- command table ---------------------------------------------------------

struct Command {
    std::string name;
    std::string help;
    std::vector<OptSpec> opts;
    std::function<void(Run&)> fn;
};

std::vector<Command> commands() {
    const OptSpec corpus{"corpus", Kind::str, "corpus JSON-lines file", nullptr, true};
    const OptSpec scores{"scores", Kind::str, "score file (CSV or JSON-lines)", nullptr, true};
    const OptSpec task{"task", Kind::str, "score task to select"};
    const OptSpec model{"model-id", Kind::str, "score model_id to select"};
    const OptSpec seed{"seed", Kind::integer, "random seed", 0};
    const OptSpec t0s{"t0-start", Kind::str, "first month of the normalization window (YYYY-MM)"};
    const OptSpec t0e{"t0-end", Kind::str, "last month of the normalization window (YYYY-MM)"};
    const OptSpec tau{"tau", Kind::num, "decision threshold (p >= tau is positive)"};
    const OptSpec threshold{"threshold", Kind::str, "threshold report to take tau from", nullptr, true};
    const OptSpec split{"split", Kind::str, "split CSV (id,partition)", nullptr, true};
    const OptSpec category{"category", Kind::str, "label category", "epu"};
    const OptSpec dict{"dict", Kind::list, "dictionary file(s)", nullptr, true};
    return {
        {"ingest", "validate and normalize a raw JSON-lines corpus",
         {corpus, {"date-start", Kind::str, "earliest accepted date"}, {"date-end", Kind::str, "latest accepted date"}},
         cmd_ingest},
        {"dedup", "drop empty and near-identical documents", {corpus}, cmd_dedup},
        {"split", "assign train/validation/test partitions",
         {corpus,
          {"method", Kind::str, "random | temporal | stratified", "random"},
          {"fractions", Kind::str, "train,validation,test fractions", "0.7,0.2,0.1"},
          seed,
          {"cutoff", Kind::str, "temporal cutoff date (later documents go to test)"},
          {"val-fraction", Kind::num, "validation share of the pre-cutoff documents", 0.2}},
         cmd_split},
        {"bow", "classify documents with keyword dictionaries", {corpus, dict}, cmd_bow},
        {"sweep", "dictionary sensitivity sweep",
         {corpus, dict, {"variants", Kind::str, "variants file", nullptr, true}}, cmd_sweep},
        {"score-fetch", "score a corpus through a scoring endpoint",
         {corpus,
          {"task", Kind::str, "task name sent to the scorer", "epu"},
          {"scorer-url", Kind::str, std::string("scorer base URL (default: $") + epu::kScorerEnvVar + ")"},
          {"batch-size", Kind::integer, "documents per request", 32},
          {"max-in-flight", Kind::integer, "concurrent requests", 4},
          {"retries", Kind::integer, "retries per batch", 2},
          {"timeout-ms", Kind::integer, "request timeout", 30000}},
         cmd_score_fetch},
        {"score-load", "validate a score file", {scores, {"corpus", Kind::str, "corpus to check coverage against", nullptr, true}, task, model},
         cmd_score_load},
        {"optimize-threshold", "fit a decision threshold",
         {corpus, scores, task, model, split,
          {"scope", Kind::str, "validation | pooled", "validation"},
          {"rule", Kind::str, "youden | f1 | recall | precision | fixed", "youden"},
          tau,
          {"target", Kind::num, "target for recall/precision rules", 0.85},
          {"group-by", Kind::str, "outlet | lang"},
          {"min-group-size", Kind::integer, "groups below this size are flagged", 20},
          category},
         cmd_optimize_threshold},
        {"evaluate", "metrics against gold labels",
         {corpus, scores, task, model, {"labels", Kind::str, "predicted labels CSV", nullptr, true}, tau, threshold, split,
          {"partition", Kind::str, "partition to evaluate when --split is given", "test"},
          {"category", Kind::str, "category of score predictions"},
          {"bootstrap", Kind::integer, "bootstrap resamples (0 = none)", 0}, seed,
          {"level", Kind::num, "confidence level", 0.95},
          {"breakdowns", Kind::flag, "write certainty and length breakdowns", false},
          {"min-n", Kind::integer, "minimum documents per certainty level", 30},
          {"hist-bins", Kind::integer, "score histogram bins", 20},
          {"length-edges", Kind::str, "token-length bin edges", "0,250,500,1000,2000,1000000"}},
         cmd_evaluate},
        {"build-index", "aggregate article outputs into an index",
         {corpus, scores, task, model, {"labels", Kind::str, "labels CSV (mode labels)", nullptr, true},
          {"category", Kind::str, "label category (mode labels)"},
          {"mode", Kind::str, "binary | probabilistic | labels | gold", "probabilistic"}, tau, threshold, t0s, t0e,
          {"granularity", Kind::str, "month | quarter | year", "month"},
          {"sd", Kind::str, "sample | population", "sample"}},
         cmd_build_index},
        {"combine", "weighted combination of index series",
         {{"series", Kind::list, "id=path index CSVs", nullptr, true},
          {"weights", Kind::str, "weights CSV (series_id,weight)", nullptr, true}, t0s, t0e},
         cmd_combine},
        {"correlate", "Pearson correlation of two index series",
         {{"series-a", Kind::str, "first index CSV", nullptr, true}, {"series-b", Kind::str, "second index CSV", nullptr, true}},
         cmd_correlate},
        {"simulate", "measurement-error simulation",
         {{"sim-config", Kind::str, "simulation config JSON", nullptr, true},
          {"seed", Kind::integer, "overrides the config seed"},
          {"fpr", Kind::num, "overrides the config false-positive rate"},
          {"fnr", Kind::num, "overrides the config false-negative rate"},
          {"mode", Kind::str, "labels | scores", "labels"},
          {"fnr-grid", Kind::str, "comma-separated FNR values for a seed-ensemble grid"},
          {"seeds", Kind::integer, "grid ensemble size", 20}},
         cmd_simulate},
    };
}

const std::vector<OptSpec>& common_opts() {
    static const std::vector<OptSpec> v{
        {"out", Kind::str, "output directory", "out"},
        {"threads", Kind::integer, "worker threads (0 = all cores)", 0},
        {"created-at", Kind::str, "construction timestamp recorded in outputs (default: now)"},
    };
    return v;
}

json coerce(const OptSpec& o, const std::string& raw) {
    switch (o.kind) {
    case Kind::str: return raw;
    case Kind::num: {
        auto v = epu::csv::parse_double(raw);
        if (!v) throw epu::ValidationError("--" + o.name + " expects a number, got '" + raw + "'");
        return *v;
    }
    case Kind::integer: {
        long long v = 0;
        auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
        if (ec != std::errc() || p != raw.data() + raw.size())
            throw epu::ValidationError("--" + o.name + " expects an integer, got '" + raw + "'");
        return v;
    }
    case Kind::flag: return raw == "true" || raw == "1";
    case Kind::list: return json::array({raw});
    }
    return raw;
}

void check_type(const OptSpec& o, const json& v) {
    if (v.is_null()) return;
    bool ok = false;
    switch (o.kind) {
    case Kind::str: ok = v.is_string(); break;
    case Kind::num: ok = v.is_number(); break;
    case Kind::integer: ok = v.is_number_integer(); break;
    case Kind::flag: ok = v.is_boolean(); break;
    case Kind::list:
        ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
        break;
    }
    if (!ok) throw epu::ValidationError("config key '" + o.name + "' has the wrong type");
}

struct Parsed {
    std::map<std::string, std::string> scalars;
    std::map<std::string, std::vector<std::string>> lists;
    std::map<std::string, bool> flags;
    std::string config_path;
    bool manifest_only = false;
};

int run_command(const Command& cmd, CLI::App& sub, Parsed& parsed) {
    std::vector<OptSpec> all = cmd.opts;
    all.insert(all.end(), common_opts().begin(), common_opts().end());

    // defaults < config file < flags
    json cfg = json::object();
    for (const auto& o : all) cfg[o.name] = o.def;
    if (!parsed.config_path.empty()) {
        auto in = Run::open_path(parsed.config_path);
        auto j = json::parse(in, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw epu::ValidationError("config file is not a JSON object");
        if (j.contains("command") && j.contains("config")) {  // manifest
            if (j["command"] != cmd.name)
                throw epu::ValidationError("manifest was written by '" + j["command"].get<std::string>() + "', not '" +
                                           cmd.name + "'");
            j = j["config"];
        }
        for (auto it = j.begin(); it != j.end(); ++it) {
            auto spec = std::find_if(all.begin(), all.end(), [&](const OptSpec& o) { return o.name == it.key(); });
            if (spec == all.end()) throw epu::ValidationError("unknown config key '" + it.key() + "' for " + cmd.name);
            check_type(*spec, *it);
            cfg[it.key()] = *it;
        }
    }
    for (const auto& o : all) {
        auto* opt = sub.get_option_no_throw("--" + o.name);
        if (!opt || opt->count() == 0) continue;
        if (o.kind == Kind::list) cfg[o.name] = parsed.lists[o.name];
        else if (o.kind == Kind::flag) cfg[o.name] = parsed.flags[o.name];
        else cfg[o.name] = coerce(o, parsed.scalars[o.name]);
    }
    if (cmd.name == "score-fetch" && cfg["scorer-url"].is_null())
        if (auto env = epu::ScoringEndpoint::address_from_env()) cfg["scorer-url"] = *env;
    if (cfg["created-at"].is_null() || cfg["created-at"] == "") cfg["created-at"] = utc_now();

    Run run(cmd.name, cfg);
    run.set_created_at(run.str("created-at"));
    for (const auto& o : all) {
        if (!o.input || !run.has(o.name)) continue;
        if (o.kind == Kind::list)
            for (const auto& e : run.list(o.name)) run.inputs[path_of(e)] = sha256_file(path_of(e));
        else
            run.inputs[run.str(o.name)] = sha256_file(run.str(o.name));
    }
    if (!parsed.manifest_only) cmd.fn(run);

    json manifest;
    manifest["tool"] = "epu";
    manifest["version"] = kVersion;
    manifest["command"] = cmd.name;
    manifest["created_at"] = run.created_at();
    manifest["config"] = run.config();
    manifest["inputs"] = run.inputs;
    manifest["outputs"] = run.outputs();
    run.write_json("manifest.json", manifest);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"epu: economic policy uncertainty index toolkit"};
    app.set_version_flag("--version", std::string("epu ") + kVersion);
    app.require_subcommand(1);

    const auto cmds = commands();
    Parsed parsed;
    std::vector<std::pair<const Command*, CLI::App*>> subs;
    for (const auto& c : cmds) {
        auto* sub = app.add_subcommand(c.name, c.help);
        std::vector<OptSpec> all = c.opts;
        all.insert(all.end(), common_opts().begin(), common_opts().end());
        for (const auto& o : all) {
            const auto flag = "--" + o.name;
            if (o.kind == Kind::list) sub->add_option(flag, parsed.lists[o.name], o.help);
            else if (o.kind == Kind::flag) sub->add_flag(flag, parsed.flags[o.name], o.help);
            else sub->add_option(flag, parsed.scalars[o.name], o.help);
        }
        sub->add_option("--config", parsed.config_path, "config file or manifest to replay");
        sub->add_flag("--manifest-only", parsed.manifest_only, "resolve config and write only the manifest");
        subs.emplace_back(&c, sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        for (auto& [c, sub] : subs)
            if (sub->parsed()) return run_command(*c, *sub, parsed);
    } catch (const epu::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const epu::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const epu::ProtocolError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
