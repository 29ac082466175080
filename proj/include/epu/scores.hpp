#pragma once

// Externally produced positive-class probabilities, one set per (task, model).

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "epu/corpus.hpp"
#include "epu/csv.hpp"
#include "epu/error.hpp"
#include "epu/labels.hpp"

namespace epu {

struct ScoreMeta {
    std::string max_sequence_length = "full";  // token count or "full"
    std::string language_of_training;

    bool operator==(const ScoreMeta&) const = default;
};

/// Probabilities keyed by document id (sorted, unique, each in [0, 1]).
class ScoreSet {
public:
    using Entry = std::pair<std::string, double>;

    ScoreSet() = default;
    ScoreSet(std::string task, std::string model_id, std::vector<Entry> entries, ScoreMeta meta = {})
        : task_(std::move(task)), model_id_(std::move(model_id)), entries_(std::move(entries)), meta_(std::move(meta)) {
        std::sort(entries_.begin(), entries_.end(),
                  [](const Entry& a, const Entry& b) { return a.first < b.first; });
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const double p = entries_[i].second;
            if (!(p >= 0.0 && p <= 1.0))
                throw ValidationError("probability for id '" + entries_[i].first + "' outside [0,1]");
            if (i > 0 && entries_[i - 1].first == entries_[i].first)
                throw ValidationError("duplicate score for id '" + entries_[i].first + "'");
        }
    }

    [[nodiscard]] const std::string& task() const { return task_; }
    [[nodiscard]] const std::string& model_id() const { return model_id_; }
    [[nodiscard]] const ScoreMeta& meta() const { return meta_; }
    [[nodiscard]] const std::vector<Entry>& entries() const { return entries_; }
    [[nodiscard]] std::size_t size() const { return entries_.size(); }

    [[nodiscard]] std::optional<double> find(std::string_view id) const {
        auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                                   [](const Entry& e, std::string_view k) { return e.first < k; });
        if (it == entries_.end() || it->first != id) return std::nullopt;
        return it->second;
    }

    bool operator==(const ScoreSet&) const = default;

private:
    std::string task_;
    std::string model_id_;
    std::vector<Entry> entries_;
    ScoreMeta meta_;
};

/// Label = 1 iff p >= tau.
[[nodiscard]] inline Labels binarize(const ScoreSet& scores, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("threshold must lie in [0,1]");
    std::vector<Labels::Entry> out;
    out.reserve(scores.size());
    for (const auto& [id, p] : scores.entries()) out.emplace_back(id, p >= tau);
    return Labels(std::move(out));
}

/// Throws unless the score ids equal the corpus ids exactly.
inline void check_coverage(const ScoreSet& scores, const Corpus& corpus) {
    std::vector<std::string> missing, dangling;
    const auto& docs = corpus.docs();
    const auto& es = scores.entries();
    std::size_t i = 0, j = 0;
    while (i < docs.size() || j < es.size()) {
        if (j == es.size() || (i < docs.size() && docs[i].id < es[j].first)) {
            missing.push_back(docs[i++].id);
        } else if (i == docs.size() || es[j].first < docs[i].id) {
            dangling.push_back(es[j++].first);
        } else {
            ++i;
            ++j;
        }
    }
    auto describe = [](const char* what, const std::vector<std::string>& ids) {
        std::string msg = std::string(what) + ": " + std::to_string(ids.size()) + " (first:";
        for (std::size_t k = 0; k < ids.size() && k < 10; ++k) msg += " " + ids[k];
        return msg + ")";
    };
    if (!dangling.empty()) throw ValidationError(describe("unknown ids", dangling));
    if (!missing.empty()) throw ValidationError(describe("missing ids", missing));
}

struct ScoreFilter {
    std::optional<std::string> task;
    std::optional<std::string> model_id;
};

/// Reads a score file (CSV `id,task,model_id,p` or JSON-lines with the same
/// keys; detected from the first non-blank character). Rows not matching the
/// filter are skipped; the remaining rows must share one (task, model_id).
/// When `corpus` is given, ids must cover it exactly.
[[nodiscard]] inline ScoreSet load_scores(std::istream& in, const Corpus* corpus = nullptr,
                                          const ScoreFilter& filter = {}, ScoreMeta meta = {}) {
    if (!in) throw IoError("score stream is not readable");
    std::vector<ScoreSet::Entry> entries;
    std::set<std::string> seen;
    std::optional<std::pair<std::string, std::string>> key;
    std::string line;
    std::size_t lineno = 0;
    std::optional<bool> is_json;
    bool header_done = false;
    auto fail = [&](const std::string& msg) {
        throw ValidationError("score file line " + std::to_string(lineno) + ": " + msg);
    };

    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        if (!is_json) is_json = line[first] == '{';

        std::string id, task, model;
        double p = 0;
        if (*is_json) {
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object()) fail("malformed JSON record");
            for (const char* k : {"id", "task", "model_id"})
                if (!j.contains(k) || !j[k].is_string()) fail(std::string("missing or non-string '") + k + "'");
            if (!j.contains("p") || !j["p"].is_number()) fail("missing or non-numeric 'p'");
            id = j["id"].get<std::string>();
            task = j["task"].get<std::string>();
            model = j["model_id"].get<std::string>();
            p = j["p"].get<double>();
            if (auto it = j.find("max_sequence_length"); it != j.end())
                meta.max_sequence_length = it->is_string() ? it->get<std::string>() : it->dump();
            if (auto it = j.find("language_of_training"); it != j.end() && it->is_string())
                meta.language_of_training = it->get<std::string>();
        } else {
            auto f = csv::split_line(line);
            if (!f) fail("unterminated quote");
            if (!header_done) {
                if (f->size() != 4 || (*f)[0] != "id" || (*f)[1] != "task" || (*f)[2] != "model_id" || (*f)[3] != "p")
                    fail("CSV header must be 'id,task,model_id,p'");
                header_done = true;
                continue;
            }
            if (f->size() != 4) fail("expected 4 fields");
            id = (*f)[0];
            task = (*f)[1];
            model = (*f)[2];
            auto v = csv::parse_double((*f)[3]);
            if (!v) fail("probability '" + (*f)[3] + "' is not a number");
            p = *v;
        }
        if (filter.task && task != *filter.task) continue;
        if (filter.model_id && model != *filter.model_id) continue;
        if (!(p >= 0.0 && p <= 1.0)) fail("probability " + csv::format_double(p) + " outside [0,1]");
        if (id.empty()) fail("empty id");
        if (!key) key.emplace(task, model);
        else if (key->first != task || key->second != model)
            fail("mixes (task, model_id) pairs; select one with a task/model filter");
        if (!seen.insert(id).second) fail("duplicate id '" + id + "'");
        entries.emplace_back(std::move(id), p);
    }
    if (in.bad()) throw IoError("read error while loading scores");
    if (!key) throw ValidationError("score file contains no matching rows");
    ScoreSet s(key->first, key->second, std::move(entries), std::move(meta));
    if (corpus) check_coverage(s, *corpus);
    return s;
}

inline void write_scores_csv(std::ostream& out, const ScoreSet& s) {
    out << "id,task,model_id,p\n";
    for (const auto& [id, p] : s.entries())
        out << csv::escape(id) << ',' << csv::escape(s.task()) << ',' << csv::escape(s.model_id()) << ','
            << csv::format_double(p) << '\n';
}

} // namespace epu
