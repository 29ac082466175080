#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "epu/corpus.hpp"
#include "epu/csv.hpp"
#include "epu/error.hpp"

namespace epu {

/// Binary labels keyed by document id (sorted, unique).
class Labels {
public:
    using Entry = std::pair<std::string, bool>;

    Labels() = default;
    explicit Labels(std::vector<Entry> entries) : entries_(std::move(entries)) {
        std::sort(entries_.begin(), entries_.end(),
                  [](const Entry& a, const Entry& b) { return a.first < b.first; });
        for (std::size_t i = 1; i < entries_.size(); ++i)
            if (entries_[i - 1].first == entries_[i].first)
                throw ValidationError("duplicate label for id '" + entries_[i].first + "'");
    }

    [[nodiscard]] const std::vector<Entry>& entries() const { return entries_; }
    [[nodiscard]] std::size_t size() const { return entries_.size(); }
    [[nodiscard]] bool empty() const { return entries_.empty(); }

    [[nodiscard]] std::optional<bool> find(std::string_view id) const {
        auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                                   [](const Entry& e, std::string_view k) { return e.first < k; });
        if (it == entries_.end() || it->first != id) return std::nullopt;
        return it->second;
    }

    [[nodiscard]] std::size_t positives() const {
        return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(),
                                                      [](const Entry& e) { return e.second; }));
    }

    bool operator==(const Labels&) const = default;

private:
    std::vector<Entry> entries_;
};

/// Gold EPU labels of every document that carries one.
[[nodiscard]] inline Labels gold_labels(const Corpus& corpus) {
    std::vector<Labels::Entry> out;
    for (const auto& d : corpus.docs())
        if (d.gold_epu) out.emplace_back(d.id, *d.gold_epu);
    return Labels(std::move(out));
}

/// Gold labels for one policy category; only documents with a category set count.
[[nodiscard]] inline Labels gold_category_labels(const Corpus& corpus, std::string_view category) {
    std::vector<Labels::Entry> out;
    for (const auto& d : corpus.docs())
        if (d.categories) out.emplace_back(d.id, d.has_category(category));
    return Labels(std::move(out));
}

/// Restricts labels to the given ids (which must be sorted).
[[nodiscard]] inline Labels restrict_to(const Labels& labels, const std::vector<std::string>& sorted_ids) {
    std::vector<Labels::Entry> out;
    for (const auto& id : sorted_ids)
        if (auto v = labels.find(id)) out.emplace_back(id, *v);
    return Labels(std::move(out));
}

/// Long-format label table: `id,category,label`.
inline void write_labels_csv(std::ostream& out, const std::map<std::string, Labels>& by_category) {
    out << "id,category,label\n";
    for (const auto& [cat, labels] : by_category)
        for (const auto& [id, v] : labels.entries())
            out << csv::escape(id) << ',' << csv::escape(cat) << ',' << (v ? 1 : 0) << '\n';
}

/// Reads `id,category,label` (or `id,label`) rows into per-category label sets.
[[nodiscard]] inline std::map<std::string, Labels> read_labels_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("label file is empty");
    auto header = csv::split_line(line);
    if (!header) throw ValidationError("label file header is malformed");
    const bool has_cat = header->size() == 3;
    if (!(has_cat && (*header)[0] == "id" && (*header)[1] == "category" && (*header)[2] == "label") &&
        !(header->size() == 2 && (*header)[0] == "id" && (*header)[1] == "label"))
        throw ValidationError("label file header must be 'id,category,label' or 'id,label'");
    std::map<std::string, std::vector<Labels::Entry>> tmp;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = csv::split_line(line);
        if (!f || f->size() != header->size())
            throw ValidationError("label file line " + std::to_string(lineno) + ": wrong field count");
        const auto& v = f->back();
        if (v != "0" && v != "1")
            throw ValidationError("label file line " + std::to_string(lineno) + ": label must be 0 or 1");
        tmp[has_cat ? (*f)[1] : std::string("epu")].emplace_back((*f)[0], v == "1");
    }
    std::map<std::string, Labels> out;
    for (auto& [cat, entries] : tmp) out.emplace(cat, Labels(std::move(entries)));
    return out;
}

} // namespace epu
