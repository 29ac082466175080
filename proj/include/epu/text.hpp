#pragma once

// UTF-8 text utilities shared by matching, deduplication and length binning.
//
// Case folding and character classes are table-driven and locale-independent so
// that results are identical on every platform. Folding covers Latin (incl.
// Latin-1, Extended-A and Extended Additional), Greek, Cyrillic, Armenian and
// fullwidth Latin; other scripts are left unchanged.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace epu::text {

inline constexpr char32_t kReplacement = 0xFFFD;

/// Decodes one code point starting at `pos`, advancing `pos`. Malformed
/// sequences decode as U+FFFD and consume a single byte.
[[nodiscard]] inline char32_t decode_utf8(std::string_view s, std::size_t& pos) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) {
        ++pos;
        return b0;
    }
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++pos;
        return kReplacement;
    }
    if (pos + len > s.size()) {
        ++pos;
        return kReplacement;
    }
    for (int i = 1; i < len; ++i) {
        const auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80) {
            ++pos;
            return kReplacement;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    // Reject overlong forms and surrogates.
    constexpr char32_t min_for_len[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < min_for_len[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
        ++pos;
        return kReplacement;
    }
    pos += len;
    return cp;
}

inline void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

[[nodiscard]] constexpr bool is_space(char32_t c) {
    return c == ' ' || (c >= 0x09 && c <= 0x0D) || c == 0x85 || c == 0xA0 || c == 0x1680 ||
           (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
           c == 0x205F || c == 0x3000;
}

namespace detail {

struct Range {
    char32_t lo, hi;
};

// Punctuation and symbol blocks outside ASCII. Anything non-ASCII that is not
// whitespace and not listed here counts as a word character (letters, digits,
// combining marks of every script).
inline constexpr Range kNonWord[] = {
    {0x00A1, 0x00A9}, {0x00AB, 0x00B1}, {0x00B4, 0x00B4}, {0x00B6, 0x00B8}, {0x00BB, 0x00BB},
    {0x00BF, 0x00BF}, {0x00D7, 0x00D7}, {0x00F7, 0x00F7}, {0x037E, 0x037E}, {0x0387, 0x0387},
    {0x055A, 0x055F}, {0x0589, 0x058A}, {0x05BE, 0x05BE}, {0x05C0, 0x05C0}, {0x05C3, 0x05C3},
    {0x05C6, 0x05C6}, {0x05F3, 0x05F4}, {0x060C, 0x060D}, {0x061B, 0x061B}, {0x061F, 0x061F},
    {0x066A, 0x066D}, {0x06D4, 0x06D4}, {0x0964, 0x0965}, {0x0970, 0x0970}, {0x0E4F, 0x0E4F},
    {0x0E5A, 0x0E5B}, {0x10FB, 0x10FB}, {0x1360, 0x1368}, {0x166D, 0x166E}, {0x17D4, 0x17DA},
    {0x2010, 0x2027}, {0x2030, 0x205E}, {0x20A0, 0x20CF}, {0x2190, 0x2BFF}, {0x2E00, 0x2E7F},
    {0x3001, 0x3004}, {0x3008, 0x3020}, {0x3030, 0x3030}, {0x303D, 0x303F}, {0xFD3E, 0xFD3F},
    {0xFE10, 0xFE1F}, {0xFE30, 0xFE6F}, {0xFF01, 0xFF0F}, {0xFF1A, 0xFF20}, {0xFF3B, 0xFF40},
    {0xFF5B, 0xFF65}, {0xFFF9, 0xFFFD}, {0x1F000, 0x1FAFF},
};

} // namespace detail

/// Alphanumeric in the word-boundary sense: a match must not split a run of these.
[[nodiscard]] constexpr bool is_word_char(char32_t c) {
    if (c < 0x80)
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    if (is_space(c)) return false;
    for (const auto& r : detail::kNonWord)
        if (c >= r.lo && c <= r.hi) return false;
    return true;
}

/// Simple (one-to-one) lower-case folding.
[[nodiscard]] constexpr char32_t fold_case(char32_t c) {
    if (c < 0x80) return (c >= 'A' && c <= 'Z') ? c + 0x20 : c;
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 0x20;
    if (c >= 0x0100 && c <= 0x017F) {
        if (c == 0x0130) return 'i';
        if (c == 0x0178) return 0x00FF;
        if ((c >= 0x0139 && c <= 0x0148) || (c >= 0x0179 && c <= 0x017E))
            return (c & 1) ? c + 1 : c;
        if (c == 0x0138 || c == 0x0149 || c == 0x017F) return c;
        return (c & 1) ? c : c + 1;
    }
    if (c >= 0x0391 && c <= 0x03AB && c != 0x03A2) return c + 0x20;
    if (c == 0x0386) return 0x03AC;
    if (c >= 0x0388 && c <= 0x038A) return c + 0x25;
    if (c == 0x038C) return 0x03CC;
    if (c == 0x038E || c == 0x038F) return c + 0x3F;
    if (c >= 0x0410 && c <= 0x042F) return c + 0x20;
    if (c >= 0x0400 && c <= 0x040F) return c + 0x50;
    if ((c >= 0x0460 && c <= 0x0481) || (c >= 0x048A && c <= 0x04BF) ||
        (c >= 0x04D0 && c <= 0x052F))
        return (c & 1) ? c : c + 1;
    if (c >= 0x04C1 && c <= 0x04CE) return (c & 1) ? c + 1 : c;
    if (c == 0x04C0) return 0x04CF;
    if (c >= 0x0531 && c <= 0x0556) return c + 0x30;
    if ((c >= 0x1E00 && c <= 0x1E95) || (c >= 0x1EA0 && c <= 0x1EFF)) return (c & 1) ? c : c + 1;
    if (c >= 0xFF21 && c <= 0xFF3A) return c + 0x20;
    return c;
}

/// Options controlling text canonicalization before matching.
struct NormalizeOptions {
    bool case_fold = true;
    bool strip_punct = true;
};

/// Canonical form used for matching: whitespace runs collapse to one ASCII
/// space, optional punctuation-to-space replacement, optional case folding,
/// leading/trailing space trimmed.
[[nodiscard]] inline std::string normalize(std::string_view in, NormalizeOptions opt) {
    std::string out;
    out.reserve(in.size());
    bool pending_space = false;
    std::size_t pos = 0;
    while (pos < in.size()) {
        char32_t c = decode_utf8(in, pos);
        bool space = is_space(c) || (opt.strip_punct && !is_word_char(c));
        if (space) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        append_utf8(out, opt.case_fold ? fold_case(c) : c);
    }
    return out;
}

/// Key used to detect duplicate bodies: lower-cased, whitespace-collapsed.
[[nodiscard]] inline std::string dedup_key(std::string_view body) {
    return normalize(body, NormalizeOptions{.case_fold = true, .strip_punct = false});
}

/// Number of whitespace-separated tokens.
[[nodiscard]] inline std::size_t whitespace_token_count(std::string_view s) {
    std::size_t n = 0;
    bool in_token = false;
    std::size_t pos = 0;
    while (pos < s.size()) {
        const bool space = is_space(decode_utf8(s, pos));
        if (!space && !in_token) ++n;
        in_token = !space;
    }
    return n;
}

/// Code point ending right before byte offset `end` (which must be a code point boundary).
[[nodiscard]] inline char32_t code_point_before(std::string_view s, std::size_t end) {
    if (end == 0) return ' ';
    std::size_t start = end - 1;
    while (start > 0 && (static_cast<unsigned char>(s[start]) & 0xC0) == 0x80 && end - start < 4)
        --start;
    std::size_t pos = start;
    return decode_utf8(s, pos);
}

/// Code point starting at byte offset `begin`, or a space at end of text.
[[nodiscard]] inline char32_t code_point_at(std::string_view s, std::size_t begin) {
    if (begin >= s.size()) return ' ';
    return decode_utf8(s, begin);
}

/// True when the byte range [begin, end) of `s` does not split a word on either side.
[[nodiscard]] inline bool on_word_boundaries(std::string_view s, std::size_t begin, std::size_t end) {
    if (begin > 0 && is_word_char(code_point_before(s, begin)) &&
        is_word_char(code_point_at(s, begin)))
        return false;
    if (end < s.size() && is_word_char(code_point_before(s, end)) &&
        is_word_char(code_point_at(s, end)))
        return false;
    return true;
}

} // namespace epu::text
