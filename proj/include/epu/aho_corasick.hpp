#pragma once

// Byte-level Aho-Corasick automaton with a dense transition table.
//
// Patterns are arbitrary byte strings; each pattern carries a user payload.
// After construction the automaton is immutable and `for_each_match` may be
// called concurrently from many threads.

#include <array>
#include <cstddef>
#include <cstdint>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

namespace epu {

template <class Payload>
class AhoCorasick {
public:
    struct Match {
        std::size_t begin;  // byte offset of the first matched byte
        std::size_t end;    // one past the last matched byte
        const Payload& payload;
    };

    AhoCorasick() { new_state(); }

    /// Adds a pattern; must be called before `build`. Empty patterns are ignored.
    void add(std::string_view pattern, Payload payload) {
        if (pattern.empty()) return;
        std::uint32_t s = 0;
        for (unsigned char c : pattern) {
            auto& next = trie_[s][c];
            if (next == kNone) {
                const auto fresh = new_state();
                trie_[s][c] = fresh;  // trie_ may have reallocated
                s = fresh;
            } else {
                s = next;
            }
        }
        const auto id = static_cast<std::uint32_t>(patterns_.size());
        patterns_.push_back({std::string(pattern), std::move(payload)});
        outputs_[s].push_back(id);
    }

    /// Computes failure links and turns the trie into a full DFA.
    void build() {
        fail_.assign(trie_.size(), 0);
        dict_link_.assign(trie_.size(), kNone);
        std::queue<std::uint32_t> q;
        for (int c = 0; c < 256; ++c) {
            auto& t = trie_[0][c];
            if (t == kNone) {
                t = 0;
            } else {
                fail_[t] = 0;
                q.push(t);
            }
        }
        while (!q.empty()) {
            const auto s = q.front();
            q.pop();
            const auto f = fail_[s];
            dict_link_[s] = outputs_[f].empty() ? dict_link_[f] : f;
            for (int c = 0; c < 256; ++c) {
                auto& t = trie_[s][c];
                if (t == kNone) {
                    t = trie_[f][c];
                } else {
                    fail_[t] = trie_[f][c];
                    q.push(t);
                }
            }
        }
        built_ = true;
    }

    [[nodiscard]] bool built() const { return built_; }
    [[nodiscard]] std::size_t pattern_count() const { return patterns_.size(); }
    [[nodiscard]] std::size_t state_count() const { return trie_.size(); }

    /// Calls `fn(Match)` for every occurrence of every pattern, in order of end
    /// offset. `fn` returns false to stop the scan early.
    template <class Fn>
    void for_each_match(std::string_view text, Fn&& fn) const {
        std::uint32_t s = 0;
        for (std::size_t i = 0; i < text.size(); ++i) {
            s = trie_[s][static_cast<unsigned char>(text[i])];
            for (auto o = outputs_[s].empty() ? dict_link_[s] : s; o != kNone; o = dict_link_[o]) {
                for (auto id : outputs_[o]) {
                    const auto& p = patterns_[id];
                    if (!fn(Match{i + 1 - p.text.size(), i + 1, p.payload})) return;
                }
            }
        }
    }

private:
    static constexpr std::uint32_t kNone = UINT32_MAX;

    struct Pattern {
        std::string text;
        Payload payload;
    };

    std::uint32_t new_state() {
        std::array<std::uint32_t, 256> row;
        row.fill(kNone);
        trie_.push_back(row);
        outputs_.emplace_back();
        return static_cast<std::uint32_t>(trie_.size() - 1);
    }

    std::vector<std::array<std::uint32_t, 256>> trie_;
    std::vector<std::vector<std::uint32_t>> outputs_;
    std::vector<std::uint32_t> fail_;
    std::vector<std::uint32_t> dict_link_;
    std::vector<Pattern> patterns_;
    bool built_ = false;
};

} // namespace epu
