#pragma once

// Train/validation/test partitioning: seeded random, temporal cutoff, and
// greedy iterative stratification over multilabel category sets.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "epu/corpus.hpp"
#include "epu/csv.hpp"
#include "epu/error.hpp"

namespace epu {

enum class Partition : std::uint8_t { train = 0, validation = 1, test = 2 };

[[nodiscard]] inline std::string_view to_string(Partition p) {
    switch (p) {
    case Partition::train: return "train";
    case Partition::validation: return "validation";
    case Partition::test: return "test";
    }
    return "?";
}

[[nodiscard]] inline Partition parse_partition(std::string_view s) {
    if (s == "train") return Partition::train;
    if (s == "validation" || s == "val") return Partition::validation;
    if (s == "test") return Partition::test;
    throw ValidationError("unknown partition '" + std::string(s) + "'");
}

using Fractions = std::array<double, 3>;

struct SplitProvenance {
    std::string method;  // random | temporal | stratified
    std::uint64_t seed = 0;
    Fractions fractions{};
    std::optional<Date> cutoff;
    std::optional<double> val_fraction;
};

class SplitAssignment {
public:
    SplitAssignment() = default;
    SplitAssignment(std::vector<std::pair<std::string, Partition>> entries, SplitProvenance prov,
                    std::vector<std::string> warnings = {})
        : entries_(std::move(entries)), provenance_(std::move(prov)), warnings_(std::move(warnings)) {
        std::sort(entries_.begin(), entries_.end());
        for (std::size_t i = 1; i < entries_.size(); ++i)
            if (entries_[i - 1].first == entries_[i].first)
                throw ValidationError("split assigns id '" + entries_[i].first + "' twice");
    }

    [[nodiscard]] const std::vector<std::pair<std::string, Partition>>& entries() const { return entries_; }
    [[nodiscard]] const SplitProvenance& provenance() const { return provenance_; }
    [[nodiscard]] const std::vector<std::string>& warnings() const { return warnings_; }

    [[nodiscard]] std::optional<Partition> find(std::string_view id) const {
        auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                                   [](const auto& e, std::string_view k) { return e.first < k; });
        if (it == entries_.end() || it->first != id) return std::nullopt;
        return it->second;
    }

    [[nodiscard]] std::array<std::size_t, 3> sizes() const {
        std::array<std::size_t, 3> s{};
        for (const auto& [id, p] : entries_) ++s[static_cast<int>(p)];
        return s;
    }

    [[nodiscard]] std::vector<std::string> ids_in(Partition p) const {
        std::vector<std::string> out;
        for (const auto& [id, q] : entries_)
            if (q == p) out.push_back(id);
        return out;
    }

    bool operator==(const SplitAssignment& o) const { return entries_ == o.entries_; }

private:
    std::vector<std::pair<std::string, Partition>> entries_;
    SplitProvenance provenance_;
    std::vector<std::string> warnings_;
};

inline void validate_fractions(const Fractions& f) {
    double sum = 0;
    for (double x : f) {
        if (!(x > 0) || !std::isfinite(x)) throw ValidationError("split fractions must be positive");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
}

/// Partition sizes for `n` items: each partition gets floor(f_k * n); the
/// leftover items are handed out one each starting from the last partition
/// with a positive fraction and moving backwards. Every size is within one
/// item of its exact quota.
[[nodiscard]] inline std::vector<std::size_t> allocate_sizes(std::size_t n, std::span<const double> fractions) {
    std::vector<std::size_t> sizes(fractions.size());
    std::size_t used = 0;
    for (std::size_t k = 0; k < fractions.size(); ++k) {
        sizes[k] = static_cast<std::size_t>(std::floor(fractions[k] * static_cast<double>(n) + 1e-9));
        used += sizes[k];
    }
    if (used > n) throw ValidationError("split fractions exceed 1");
    std::size_t left = n - used;
    while (left > 0) {
        bool gave = false;
        for (std::size_t k = fractions.size(); k-- > 0 && left > 0;) {
            if (fractions[k] <= 0) continue;
            ++sizes[k];
            --left;
            gave = true;
        }
        if (!gave) throw ValidationError("split fractions are all zero");
    }
    return sizes;
}

namespace detail {

inline std::vector<std::size_t> seeded_order(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

} // namespace detail

/// Seeded random split; documents are taken in id order before shuffling so
/// the result depends only on (ids, fractions, seed).
[[nodiscard]] inline SplitAssignment split_random(const Corpus& corpus, const Fractions& fractions,
                                                  std::uint64_t seed) {
    validate_fractions(fractions);
    const auto& docs = corpus.docs();
    const auto sizes = allocate_sizes(docs.size(), fractions);
    const auto order = detail::seeded_order(docs.size(), seed);
    std::vector<std::pair<std::string, Partition>> entries;
    entries.reserve(docs.size());
    std::size_t pos = 0;
    for (int p = 0; p < 3; ++p)
        for (std::size_t k = 0; k < sizes[p]; ++k, ++pos)
            entries.emplace_back(docs[order[pos]].id, static_cast<Partition>(p));
    return SplitAssignment(std::move(entries), {"random", seed, fractions, std::nullopt, std::nullopt});
}

/// Documents dated after `cutoff` form the test set; the rest is split
/// train/validation at random with `val_fraction`. The cutoff must lie inside
/// the corpus date window.
[[nodiscard]] inline SplitAssignment split_temporal(const Corpus& corpus, Date cutoff, double val_fraction,
                                                    std::uint64_t seed) {
    if (!corpus.window().contains(cutoff))
        throw ValidationError("cutoff " + cutoff.str() + " outside corpus date range " +
                              corpus.window().first.str() + ".." + corpus.window().last.str());
    if (!(val_fraction >= 0 && val_fraction < 1)) throw ValidationError("val_fraction must be in [0, 1)");
    const auto& docs = corpus.docs();
    std::vector<std::pair<std::string, Partition>> entries;
    std::vector<std::size_t> early;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (docs[i].date > cutoff)
            entries.emplace_back(docs[i].id, Partition::test);
        else
            early.push_back(i);
    }
    const double fr[2] = {1.0 - val_fraction, val_fraction};
    const auto sizes = allocate_sizes(early.size(), fr);
    const auto order = detail::seeded_order(early.size(), seed);
    for (std::size_t k = 0; k < early.size(); ++k)
        entries.emplace_back(docs[early[order[k]]].id, k < sizes[0] ? Partition::train : Partition::validation);
    const double test_share = docs.empty() ? 0.0 : static_cast<double>(docs.size() - early.size()) / docs.size();
    const double rest = 1.0 - test_share;
    SplitProvenance prov{"temporal", seed, {rest * fr[0], rest * fr[1], test_share}, cutoff, val_fraction};
    return SplitAssignment(std::move(entries), std::move(prov));
}

/// Greedy iterative stratification. Documents (seed-shuffled, then ordered by
/// descending label count) go to the open partition with the largest summed
/// deficit f_p * N_c - assigned_{p,c} over their labels; ties prefer the
/// partition with most remaining capacity, then the lowest index. Unlabeled
/// documents fill remaining capacity. Partition sizes equal `allocate_sizes`.
[[nodiscard]] inline SplitAssignment split_stratified_multilabel(const Corpus& corpus, const Fractions& fractions,
                                                                 std::uint64_t seed) {
    validate_fractions(fractions);
    const auto& docs = corpus.docs();
    std::map<std::string, std::size_t> cat_index;
    for (const auto& d : docs)
        if (d.categories)
            for (const auto& c : *d.categories) cat_index.emplace(c, 0);
    std::size_t next = 0;
    for (auto& [name, idx] : cat_index) idx = next++;
    const std::size_t n_cat = cat_index.size();

    std::vector<std::vector<std::size_t>> labels(docs.size());
    std::vector<double> totals(n_cat, 0.0);
    for (std::size_t i = 0; i < docs.size(); ++i)
        if (docs[i].categories)
            for (const auto& c : *docs[i].categories) {
                const auto k = cat_index.at(c);
                labels[i].push_back(k);
                totals[k] += 1.0;
            }

    std::vector<std::string> warnings;
    for (const auto& [name, idx] : cat_index)
        if (totals[idx] < 3)
            warnings.push_back("category '" + name + "' has " + std::to_string(static_cast<int>(totals[idx])) +
                               " positives; balance not guaranteed");

    const auto sizes = allocate_sizes(docs.size(), fractions);
    auto order = detail::seeded_order(docs.size(), seed);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return labels[a].size() > labels[b].size(); });

    std::array<std::size_t, 3> remaining{sizes[0], sizes[1], sizes[2]};
    std::vector<std::array<double, 3>> assigned(n_cat, {0, 0, 0});
    std::vector<std::pair<std::string, Partition>> entries;
    entries.reserve(docs.size());
    for (std::size_t i : order) {
        int best = -1;
        double best_deficit = 0;
        for (int p = 0; p < 3; ++p) {
            if (remaining[p] == 0) continue;
            double deficit = 0;
            for (auto k : labels[i]) deficit += fractions[p] * totals[k] - assigned[k][p];
            if (best < 0) {
                best = p;
                best_deficit = deficit;
                continue;
            }
            constexpr double eps = 1e-9;
            if (deficit > best_deficit + eps ||
                (std::abs(deficit - best_deficit) <= eps && remaining[p] > remaining[best])) {
                best = p;
                best_deficit = deficit;
            }
        }
        for (auto k : labels[i]) assigned[k][best] += 1.0;
        --remaining[best];
        entries.emplace_back(docs[i].id, static_cast<Partition>(best));
    }
    return SplitAssignment(std::move(entries), {"stratified", seed, fractions, std::nullopt, std::nullopt},
                           std::move(warnings));
}

/// CSV `id,partition`.
inline void write_split_csv(std::ostream& out, const SplitAssignment& s) {
    out << "id,partition\n";
    for (const auto& [id, p] : s.entries()) out << csv::escape(id) << ',' << to_string(p) << '\n';
}

[[nodiscard]] inline SplitAssignment read_split_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("split file is empty");
    auto header = csv::split_line(line);
    if (!header || header->size() != 2 || (*header)[0] != "id" || (*header)[1] != "partition")
        throw ValidationError("split file header must be 'id,partition'");
    std::vector<std::pair<std::string, Partition>> entries;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = csv::split_line(line);
        if (!f || f->size() != 2) throw ValidationError("split file line " + std::to_string(lineno) + ": malformed");
        entries.emplace_back((*f)[0], parse_partition((*f)[1]));
    }
    return SplitAssignment(std::move(entries), {"file", 0, {}, std::nullopt, std::nullopt});
}

} // namespace epu
