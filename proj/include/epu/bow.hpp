#pragma once

// Keyword (bag-of-words) classification: an article is positive when at least
// one term of every group occurs in its title + body.

#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "epu/aho_corasick.hpp"
#include "epu/corpus.hpp"
#include "epu/csv.hpp"
#include "epu/error.hpp"
#include "epu/parallel.hpp"
#include "epu/text.hpp"

namespace epu {

struct DictionaryOptions {
    bool case_fold = true;
    bool partial_match = false;
    bool strip_punct = true;

    bool operator==(const DictionaryOptions&) const = default;

    [[nodiscard]] text::NormalizeOptions normalization() const {
        return {.case_fold = case_fold, .strip_punct = strip_punct};
    }
};

struct TermGroup {
    std::string name;
    std::vector<std::string> terms;  // canonical form, unique, insertion order
    std::vector<std::string> raw;    // as written, parallel to `terms`

    bool operator==(const TermGroup&) const = default;
};

/// Named keyword groups. Construction canonicalizes terms under the options
/// and rejects empty groups or terms that normalize to nothing.
class Dictionary {
public:
    Dictionary(std::string name, std::vector<TermGroup> groups, DictionaryOptions options = {})
        : name_(std::move(name)), options_(options) {
        if (groups.empty()) throw ValidationError("dictionary '" + name_ + "' has no groups");
        for (auto& g : groups) {
            TermGroup canon{std::move(g.name), {}, {}};
            std::set<std::string> seen;
            for (const auto& raw : g.terms) {
                auto t = text::normalize(raw, options_.normalization());
                if (t.empty())
                    throw ValidationError("dictionary '" + name_ + "', group '" + canon.name + "': term '" + raw +
                                          "' is empty after normalization");
                if (seen.insert(t).second) {
                    canon.terms.push_back(std::move(t));
                    canon.raw.push_back(raw);
                }
            }
            if (canon.terms.empty())
                throw ValidationError("dictionary '" + name_ + "', group '" + canon.name + "' has no terms");
            groups_.push_back(std::move(canon));
        }
    }

    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] const std::vector<TermGroup>& groups() const { return groups_; }
    [[nodiscard]] const DictionaryOptions& options() const { return options_; }

    [[nodiscard]] std::size_t term_count() const {
        std::size_t n = 0;
        for (const auto& g : groups_) n += g.terms.size();
        return n;
    }

    bool operator==(const Dictionary&) const = default;

private:
    std::string name_;
    std::vector<TermGroup> groups_;
    DictionaryOptions options_;
};

/// Parses the dictionary file format:
/// `{"name": str, "options": {case_fold, partial_match, strip_punct}, "groups": {group: [terms...], ...}}`.
/// `groups` may also be an array of `{"name": str, "terms": [...]}` objects.
[[nodiscard]] inline Dictionary dictionary_from_json(const nlohmann::ordered_json& j) {
    if (!j.is_object()) throw ValidationError("dictionary must be a JSON object");
    std::string name = j.value("name", std::string("dictionary"));
    DictionaryOptions opt;
    if (auto it = j.find("options"); it != j.end()) {
        if (!it->is_object()) throw ValidationError("dictionary options must be an object");
        for (auto o = it->begin(); o != it->end(); ++o) {
            if (!o->is_boolean()) throw ValidationError("dictionary option '" + o.key() + "' must be boolean");
            if (o.key() == "case_fold") opt.case_fold = o->get<bool>();
            else if (o.key() == "partial_match") opt.partial_match = o->get<bool>();
            else if (o.key() == "strip_punct") opt.strip_punct = o->get<bool>();
            else throw ValidationError("unknown dictionary option '" + o.key() + "'");
        }
    }
    auto terms_of = [](const nlohmann::ordered_json& arr, const std::string& group) {
        if (!arr.is_array()) throw ValidationError("group '" + group + "' must be an array of strings");
        std::vector<std::string> terms;
        for (const auto& t : arr) {
            if (!t.is_string()) throw ValidationError("group '" + group + "' must be an array of strings");
            terms.push_back(t.get<std::string>());
        }
        return terms;
    };
    std::vector<TermGroup> groups;
    auto g = j.find("groups");
    if (g == j.end()) throw ValidationError("dictionary '" + name + "' lacks 'groups'");
    if (g->is_object()) {
        for (auto it = g->begin(); it != g->end(); ++it) groups.push_back({it.key(), terms_of(*it, it.key()), {}});
    } else if (g->is_array()) {
        for (const auto& e : *g) {
            if (!e.is_object() || !e.contains("name") || !e.contains("terms") || !e["name"].is_string())
                throw ValidationError("group entries need 'name' and 'terms'");
            const auto gname = e["name"].get<std::string>();
            groups.push_back({gname, terms_of(e["terms"], gname), {}});
        }
    } else {
        throw ValidationError("'groups' must be an object or array");
    }
    return Dictionary(std::move(name), std::move(groups), opt);
}

[[nodiscard]] inline Dictionary load_dictionary(std::istream& in) {
    auto j = nlohmann::ordered_json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ValidationError("dictionary file is not valid JSON");
    return dictionary_from_json(j);
}

[[nodiscard]] inline nlohmann::ordered_json to_json(const Dictionary& d) {
    nlohmann::ordered_json j;
    j["name"] = d.name();
    j["options"] = {{"case_fold", d.options().case_fold},
                    {"partial_match", d.options().partial_match},
                    {"strip_punct", d.options().strip_punct}};
    nlohmann::ordered_json groups = nlohmann::ordered_json::object();
    for (const auto& g : d.groups()) groups[g.name] = g.raw;
    j["groups"] = std::move(groups);
    return j;
}

/// Compiled single-pass matcher for one dictionary. Immutable and thread-safe.
class Matcher {
public:
    explicit Matcher(const Dictionary& dict) : options_(dict.options()), group_count_(dict.groups().size()) {
        for (std::uint32_t g = 0; g < dict.groups().size(); ++g)
            for (const auto& t : dict.groups()[g].terms) automaton_.add(t, g);
        automaton_.build();
    }

    [[nodiscard]] std::size_t pattern_count() const { return automaton_.pattern_count(); }
    [[nodiscard]] std::size_t group_count() const { return group_count_; }
    [[nodiscard]] const DictionaryOptions& options() const { return options_; }

    /// Per group: whether at least one of its terms occurs in `raw_text`.
    [[nodiscard]] std::vector<bool> group_hits(std::string_view raw_text) const {
        std::vector<bool> hits(group_count_, false);
        scan(text::normalize(raw_text, options_.normalization()), hits, /*stop_when_all=*/false);
        return hits;
    }

    [[nodiscard]] bool matches(std::string_view raw_text) const {
        std::vector<bool> hits(group_count_, false);
        return scan(text::normalize(raw_text, options_.normalization()), hits, /*stop_when_all=*/true);
    }

private:
    bool scan(const std::string& norm, std::vector<bool>& hits, bool stop_when_all) const {
        std::size_t remaining = group_count_;
        automaton_.for_each_match(norm, [&](const auto& m) {
            if (hits[m.payload]) return true;
            if (!options_.partial_match && !text::on_word_boundaries(norm, m.begin, m.end)) return true;
            hits[m.payload] = true;
            return !(--remaining == 0 && stop_when_all);
        });
        return remaining == 0;
    }

    DictionaryOptions options_;
    std::size_t group_count_;
    AhoCorasick<std::uint32_t> automaton_;
};

[[nodiscard]] inline Matcher compile(const Dictionary& dict) { return Matcher(dict); }

[[nodiscard]] inline bool classify(const Document& doc, const Matcher& m) { return m.matches(doc.full_text()); }

/// Labels for every document, aligned with `corpus.docs()`.
[[nodiscard]] inline std::vector<std::uint8_t> classify_corpus(const Corpus& corpus, const Matcher& m,
                                                               unsigned threads = 0) {
    const auto& docs = corpus.docs();
    std::vector<std::uint8_t> labels(docs.size(), 0);
    parallel_for(docs.size(), threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) labels[i] = classify(docs[i], m) ? 1 : 0;
    });
    return labels;
}

/// Categories whose dictionary classifies the document positive.
[[nodiscard]] inline std::set<std::string> classify_categories(const Document& doc,
                                                               const std::map<std::string, Matcher>& matchers) {
    std::set<std::string> out;
    const auto text = doc.full_text();
    for (const auto& [cat, m] : matchers)
        if (m.matches(text)) out.insert(cat);
    return out;
}

/// An edit of a base dictionary for sensitivity analysis.
struct VariantSpec {
    std::string name;
    std::map<std::string, std::vector<std::string>> add;
    std::map<std::string, std::vector<std::string>> remove;
    std::optional<bool> case_fold;
    std::optional<bool> partial_match;
    std::optional<bool> strip_punct;
};

/// Applies a variant to the base dictionary. Unknown groups, removal of absent
/// terms, and edits that empty a group are errors.
[[nodiscard]] inline Dictionary apply_variant(const Dictionary& base, const VariantSpec& v) {
    DictionaryOptions opt = base.options();
    if (v.case_fold) opt.case_fold = *v.case_fold;
    if (v.partial_match) opt.partial_match = *v.partial_match;
    if (v.strip_punct) opt.strip_punct = *v.strip_punct;
    auto norm = [&](const std::string& t) { return text::normalize(t, opt.normalization()); };

    auto check_groups = [&](const auto& edits) {
        for (const auto& [g, terms] : edits) {
            bool found = false;
            for (const auto& bg : base.groups()) found = found || bg.name == g;
            if (!found) throw ValidationError("variant '" + v.name + "' edits unknown group '" + g + "'");
        }
    };
    check_groups(v.add);
    check_groups(v.remove);

    std::vector<TermGroup> groups;
    for (const auto& bg : base.groups()) {
        std::vector<std::string> terms = bg.raw;
        if (auto it = v.remove.find(bg.name); it != v.remove.end()) {
            for (const auto& r : it->second) {
                const auto key = norm(r);
                const auto before = terms.size();
                std::erase_if(terms, [&](const std::string& t) { return norm(t) == key; });
                if (terms.size() == before)
                    throw ValidationError("variant '" + v.name + "' removes absent term '" + r + "' from group '" +
                                          bg.name + "'");
            }
        }
        if (auto it = v.add.find(bg.name); it != v.add.end())
            for (const auto& a : it->second) terms.push_back(a);
        if (terms.empty())
            throw ValidationError("variant '" + v.name + "' empties group '" + bg.name + "'");
        groups.push_back({bg.name, std::move(terms), {}});
    }
    return Dictionary(v.name, std::move(groups), opt);
}

[[nodiscard]] inline std::vector<VariantSpec> variants_from_json(const nlohmann::json& j) {
    const nlohmann::json* arr = &j;
    if (j.is_object() && j.contains("variants")) arr = &j["variants"];
    if (!arr->is_array()) throw ValidationError("variants file must hold an array of variants");
    auto edits = [](const nlohmann::json& e, const std::string& what) {
        std::map<std::string, std::vector<std::string>> out;
        if (e.is_null()) return out;
        if (!e.is_object()) throw ValidationError("variant '" + what + "' must map group -> [terms]");
        for (auto it = e.begin(); it != e.end(); ++it) {
            if (!it->is_array()) throw ValidationError("variant '" + what + "' must map group -> [terms]");
            for (const auto& t : *it) {
                if (!t.is_string()) throw ValidationError("variant terms must be strings");
                out[it.key()].push_back(t.get<std::string>());
            }
        }
        return out;
    };
    std::vector<VariantSpec> out;
    for (const auto& v : *arr) {
        if (!v.is_object() || !v.contains("name") || !v["name"].is_string())
            throw ValidationError("each variant needs a string 'name'");
        VariantSpec s;
        s.name = v["name"].get<std::string>();
        s.add = edits(v.value("add", nlohmann::json()), "add");
        s.remove = edits(v.value("remove", nlohmann::json()), "remove");
        if (auto o = v.find("options"); o != v.end()) {
            if (!o->is_object()) throw ValidationError("variant options must be an object");
            for (auto it = o->begin(); it != o->end(); ++it) {
                if (!it->is_boolean()) throw ValidationError("variant option '" + it.key() + "' must be boolean");
                if (it.key() == "case_fold") s.case_fold = it->get<bool>();
                else if (it.key() == "partial_match") s.partial_match = it->get<bool>();
                else if (it.key() == "strip_punct") s.strip_punct = it->get<bool>();
                else throw ValidationError("unknown variant option '" + it.key() + "'");
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

struct SweepRow {
    std::string variant;
    std::size_t positives = 0;
    std::size_t total = 0;
    double positive_rate = 0;
    double disagreement_vs_base = 0;
    std::map<Month, std::pair<std::size_t, std::size_t>> monthly;  // month -> (positives, total)
};

/// Classifies the corpus under the base dictionary (row "base") and under
/// every variant. Disagreement is the share of documents whose label differs
/// from the base label.
[[nodiscard]] inline std::vector<SweepRow> sensitivity_sweep(const Corpus& corpus, const Dictionary& base,
                                                             const std::vector<VariantSpec>& variants,
                                                             unsigned threads = 0) {
    std::vector<Dictionary> dicts{base};
    std::vector<std::string> names{"base"};
    for (const auto& v : variants) {
        dicts.push_back(apply_variant(base, v));
        names.push_back(v.name);
    }
    std::vector<std::uint8_t> base_labels;
    std::vector<SweepRow> rows;
    for (std::size_t k = 0; k < dicts.size(); ++k) {
        const auto labels = classify_corpus(corpus, compile(dicts[k]), threads);
        if (k == 0) base_labels = labels;
        SweepRow row;
        row.variant = names[k];
        row.total = labels.size();
        std::size_t disagree = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            row.positives += labels[i];
            disagree += labels[i] != base_labels[i];
            auto& cell = row.monthly[corpus.docs()[i].month()];
            cell.first += labels[i];
            ++cell.second;
        }
        if (row.total > 0) {
            row.positive_rate = static_cast<double>(row.positives) / static_cast<double>(row.total);
            row.disagreement_vs_base = static_cast<double>(disagree) / static_cast<double>(row.total);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "variant,positives,total,positive_rate,disagreement_vs_base\n";
    for (const auto& r : rows)
        out << csv::escape(r.variant) << ',' << r.positives << ',' << r.total << ','
            << csv::format_double(r.positive_rate) << ',' << csv::format_double(r.disagreement_vs_base) << '\n';
}

inline void write_sweep_monthly_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "variant,month,positives,total,positive_rate\n";
    for (const auto& r : rows)
        for (const auto& [m, c] : r.monthly)
            out << csv::escape(r.variant) << ',' << m.str() << ',' << c.first << ',' << c.second << ','
                << csv::format_double(static_cast<double>(c.first) / static_cast<double>(c.second)) << '\n';
}

} // namespace epu
