#pragma once

// Article corpora: JSON-lines ingestion with per-record validation,
// serialization, and exact-body deduplication.

#include <algorithm>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "epu/date.hpp"
#include "epu/error.hpp"
#include "epu/text.hpp"

namespace epu {

struct Document {
    std::string id;
    std::string outlet;
    Date date;
    std::string title;
    std::string body;
    std::string lang = "en";
    std::optional<bool> gold_epu;
    std::optional<int> certainty;
    std::optional<std::vector<std::string>> categories;  // sorted, unique

    bool operator==(const Document&) const = default;

    [[nodiscard]] Month month() const { return date.to_month(); }

    /// Text seen by classifiers: title first, then body, separated by one space.
    [[nodiscard]] std::string full_text() const {
        if (title.empty()) return body;
        std::string s;
        s.reserve(title.size() + 1 + body.size());
        s.append(title).push_back(' ');
        s.append(body);
        return s;
    }

    [[nodiscard]] bool has_category(std::string_view c) const {
        return categories && std::binary_search(categories->begin(), categories->end(), c);
    }
};

/// Inclusive date window every document must fall into.
struct DateWindow {
    Date first{1600, 1, 1};
    Date last{2199, 12, 31};

    [[nodiscard]] bool contains(const Date& d) const { return first <= d && d <= last; }
};

/// Documents sorted by id; ids are unique.
class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<Document> docs, DateWindow window = {})
        : docs_(std::move(docs)), window_(window) {
        std::sort(docs_.begin(), docs_.end(),
                  [](const Document& a, const Document& b) { return a.id < b.id; });
        for (std::size_t i = 1; i < docs_.size(); ++i)
            if (docs_[i - 1].id == docs_[i].id)
                throw ValidationError("duplicate document id '" + docs_[i].id + "'");
    }

    [[nodiscard]] const std::vector<Document>& docs() const { return docs_; }
    [[nodiscard]] std::size_t size() const { return docs_.size(); }
    [[nodiscard]] bool empty() const { return docs_.empty(); }
    [[nodiscard]] const DateWindow& window() const { return window_; }

    [[nodiscard]] const Document* find(std::string_view id) const {
        auto it = std::lower_bound(docs_.begin(), docs_.end(), id,
                                   [](const Document& d, std::string_view k) { return d.id < k; });
        return it != docs_.end() && it->id == id ? &*it : nullptr;
    }

    bool operator==(const Corpus& o) const { return docs_ == o.docs_; }

private:
    std::vector<Document> docs_;
    DateWindow window_;
};

struct Rejection {
    std::size_t line = 0;  // 1-based
    std::string reason;
    std::string id;        // empty when unknown

    bool operator==(const Rejection&) const = default;
};

struct IngestReport {
    std::size_t lines_read = 0;
    std::size_t accepted = 0;
    std::vector<Rejection> rejections;
    std::size_t unknown_fields = 0;
};

struct IngestResult {
    Corpus corpus;
    IngestReport report;
};

struct IngestOptions {
    DateWindow window;
    unsigned threads = 0;  // 0 = hardware concurrency
};

namespace detail {

struct ParsedLine {
    std::optional<Document> doc;
    std::string reason;
    std::string id;
    std::size_t unknown_fields = 0;
    bool blank = false;
};

inline ParsedLine parse_record(std::string_view line, const DateWindow& window) {
    ParsedLine out;
    if (line.find_first_not_of(" \t\r\n") == std::string_view::npos) {
        out.blank = true;
        return out;
    }
    auto j = nlohmann::json::parse(line.begin(), line.end(), nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) {
        out.reason = "malformed JSON";
        return out;
    }
    if (!j.is_object()) {
        out.reason = "record is not an object";
        return out;
    }
    if (auto it = j.find("id"); it != j.end() && it->is_string()) out.id = it->get<std::string>();

    auto required_string = [&](const char* key, std::string& dst) -> bool {
        auto it = j.find(key);
        if (it == j.end()) {
            out.reason = std::string("missing ") + key;
            return false;
        }
        if (!it->is_string()) {
            out.reason = std::string("invalid ") + key + " (expected string)";
            return false;
        }
        dst = it->get<std::string>();
        return true;
    };

    Document d;
    std::string date_str;
    if (!required_string("id", d.id) || !required_string("outlet", d.outlet) ||
        !required_string("date", date_str) || !required_string("body", d.body))
        return out;
    if (d.id.empty()) {
        out.reason = "empty id";
        return out;
    }
    auto date = parse_date(date_str);
    if (!date) {
        out.reason = "invalid date '" + date_str + "'";
        return out;
    }
    if (!window.contains(*date)) {
        out.reason = "date out of range '" + date_str + "'";
        return out;
    }
    d.date = *date;

    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        const auto& v = it.value();
        if (key == "id" || key == "outlet" || key == "date" || key == "body") continue;
        if (key == "title") {
            if (!v.is_string()) {
                out.reason = "invalid title (expected string)";
                return out;
            }
            d.title = v.get<std::string>();
        } else if (key == "lang") {
            if (!v.is_string() || v.get<std::string>().empty()) {
                out.reason = "invalid lang (expected non-empty string)";
                return out;
            }
            d.lang = v.get<std::string>();
        } else if (key == "gold_epu") {
            if (v.is_number_integer() && (v.get<long long>() == 0 || v.get<long long>() == 1)) {
                d.gold_epu = v.get<long long>() == 1;
            } else if (v.is_boolean()) {
                d.gold_epu = v.get<bool>();
            } else if (!v.is_null()) {
                out.reason = "invalid gold_epu (expected 0 or 1)";
                return out;
            }
        } else if (key == "certainty") {
            if (v.is_number_integer() && v.get<long long>() >= 1 &&
                v.get<long long>() <= 1'000'000) {
                d.certainty = static_cast<int>(v.get<long long>());
            } else if (!v.is_null()) {
                out.reason = "invalid certainty (expected integer >= 1)";
                return out;
            }
        } else if (key == "categories") {
            if (v.is_null()) continue;
            if (!v.is_array()) {
                out.reason = "invalid categories (expected array of strings)";
                return out;
            }
            std::set<std::string> cats;
            for (const auto& c : v) {
                if (!c.is_string()) {
                    out.reason = "invalid categories (expected array of strings)";
                    return out;
                }
                cats.insert(c.get<std::string>());
            }
            d.categories = std::vector<std::string>(cats.begin(), cats.end());
        } else {
            ++out.unknown_fields;
        }
    }
    out.doc = std::move(d);
    return out;
}

} // namespace detail

/// Parses a JSON-lines corpus. Malformed records and duplicate ids are rejected
/// with their 1-based line number; the first occurrence of an id wins.
/// The result does not depend on `threads`.
[[nodiscard]] inline IngestResult ingest(std::istream& in, const IngestOptions& opt = {}) {
    if (!in) throw IoError("corpus stream is not readable");
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
    if (in.bad()) throw IoError("read error while ingesting corpus");

    std::vector<detail::ParsedLine> parsed(lines.size());
    unsigned threads = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, lines.size() / 256)));
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) parsed[i] = detail::parse_record(lines[i], opt.window);
    };
    if (threads <= 1) {
        work(0, lines.size());
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (lines.size() + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
            const std::size_t b = t * chunk, e = std::min(lines.size(), b + chunk);
            if (b < e) pool.emplace_back(work, b, e);
        }
    }

    IngestResult result;
    IngestReport& rep = result.report;
    rep.lines_read = lines.size();
    std::unordered_map<std::string, std::size_t> seen;
    std::vector<Document> docs;
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        auto& p = parsed[i];
        if (p.blank) continue;
        rep.unknown_fields += p.unknown_fields;
        if (!p.doc) {
            rep.rejections.push_back({i + 1, std::move(p.reason), std::move(p.id)});
            continue;
        }
        auto [it, inserted] = seen.emplace(p.doc->id, i + 1);
        if (!inserted) {
            rep.rejections.push_back({i + 1,
                                      "duplicate id (first seen on line " + std::to_string(it->second) + ")",
                                      p.doc->id});
            continue;
        }
        docs.push_back(std::move(*p.doc));
    }
    rep.accepted = docs.size();
    result.corpus = Corpus(std::move(docs), opt.window);
    return result;
}

[[nodiscard]] inline nlohmann::ordered_json to_json(const Document& d) {
    nlohmann::ordered_json j;
    j["id"] = d.id;
    j["outlet"] = d.outlet;
    j["date"] = d.date.str();
    if (!d.title.empty()) j["title"] = d.title;
    j["body"] = d.body;
    j["lang"] = d.lang;
    if (d.gold_epu) j["gold_epu"] = *d.gold_epu ? 1 : 0;
    if (d.certainty) j["certainty"] = *d.certainty;
    if (d.categories) j["categories"] = *d.categories;
    return j;
}

/// Writes the corpus in id order, one JSON object per line.
inline void write_jsonl(std::ostream& out, const Corpus& corpus) {
    for (const auto& d : corpus.docs()) out << to_json(d).dump() << '\n';
}

struct DedupReport {
    std::size_t input = 0;
    std::size_t removed_empty = 0;
    std::size_t removed_duplicates = 0;
};

/// Keeps one document per normalized body (lower-cased, whitespace-collapsed):
/// the earliest by date, then by id. Documents with blank bodies are removed.
[[nodiscard]] inline Corpus deduplicate(const Corpus& corpus, DedupReport* report = nullptr) {
    DedupReport rep;
    rep.input = corpus.size();
    std::unordered_map<std::string, std::size_t> best;  // key -> index into docs
    const auto& docs = corpus.docs();
    std::vector<bool> keep(docs.size(), false);
    for (std::size_t i = 0; i < docs.size(); ++i) {
        std::string key = text::dedup_key(docs[i].body);
        if (key.empty()) {
            ++rep.removed_empty;
            continue;
        }
        auto [it, inserted] = best.emplace(std::move(key), i);
        if (inserted) {
            keep[i] = true;
            continue;
        }
        ++rep.removed_duplicates;
        // docs are id-sorted, so an equal date keeps the earlier index (smaller id).
        if (docs[i].date < docs[it->second].date) {
            keep[it->second] = false;
            keep[i] = true;
            it->second = i;
        }
    }
    std::vector<Document> out;
    out.reserve(docs.size() - rep.removed_empty - rep.removed_duplicates);
    for (std::size_t i = 0; i < docs.size(); ++i)
        if (keep[i]) out.push_back(docs[i]);
    if (report) *report = rep;
    return Corpus(std::move(out), corpus.window());
}

} // namespace epu
