#include <gtest/gtest.h>

#include "epu/csv.hpp"
#include "epu/date.hpp"
#include "epu/text.hpp"

using namespace epu;

TEST(Date, ParsesStrictIsoDates) {
    EXPECT_EQ(parse_date("2005-12-31"), (Date{2005, 12, 31}));
    EXPECT_EQ(parse_date("2004-02-29"), (Date{2004, 2, 29}));
    EXPECT_FALSE(parse_date("2005-02-29"));
    EXPECT_FALSE(parse_date("1900-02-29"));
    EXPECT_FALSE(parse_date("2005-13-01"));
    EXPECT_FALSE(parse_date("2005-1-01"));
    EXPECT_FALSE(parse_date("2005-01-01T00:00"));
    EXPECT_FALSE(parse_date(""));
}

TEST(Date, MonthOrdinalRoundTrip) {
    Month m{1999, 12};
    EXPECT_EQ(m.next(), (Month{2000, 1}));
    EXPECT_EQ(Month::from_ordinal(m.ordinal()), m);
    EXPECT_EQ(m.str(), "1999-12");
    EXPECT_EQ(parse_month("2000-07"), (Month{2000, 7}));
    EXPECT_FALSE(parse_month("2000-00"));
    EXPECT_THROW((void)parse_month_or_throw("07/2000"), ValidationError);
}

TEST(Csv, SplitsQuotedFields) {
    auto f = csv::split_line(R"(a,"b,c","d""e",)");
    ASSERT_TRUE(f);
    ASSERT_EQ(f->size(), 4u);
    EXPECT_EQ((*f)[1], "b,c");
    EXPECT_EQ((*f)[2], "d\"e");
    EXPECT_EQ((*f)[3], "");
    EXPECT_FALSE(csv::split_line("\"open"));
}

TEST(Csv, EscapeRoundTrips) {
    for (std::string s : {"plain", "with,comma", "with\"quote", ""}) {
        auto f = csv::split_line(csv::escape(s) + ",x");
        ASSERT_TRUE(f);
        EXPECT_EQ((*f)[0], s);
    }
}

TEST(Csv, DoublesRoundTrip) {
    for (double v : {0.0, 1.0, 0.1, 1.0 / 3.0, 123456.789, 1e-300}) {
        auto back = csv::parse_double(csv::format_double(v));
        ASSERT_TRUE(back);
        EXPECT_EQ(*back, v);
    }
    EXPECT_FALSE(csv::parse_double("abc"));
    EXPECT_FALSE(csv::parse_double("1.5x"));
}

TEST(Text, NormalizeCollapsesWhitespaceAndFolds) {
    EXPECT_EQ(text::normalize("  White \t\n House  ", {}), "white house");
    EXPECT_EQ(text::normalize("White-House!", {}), "white house");
    EXPECT_EQ(text::normalize("White-House!", {.case_fold = true, .strip_punct = false}), "white-house!");
    EXPECT_EQ(text::normalize("ÉCONOMIE Économie", {}), "économie économie");
    EXPECT_EQ(text::normalize("ΟΙΚΟΝΟΜΙΑ", {}), "οικονομια");
    EXPECT_EQ(text::normalize("Congress", {.case_fold = false, .strip_punct = true}), "Congress");
}

TEST(Text, MalformedUtf8BecomesReplacement) {
    std::string bad = "ab\xC3";
    std::size_t pos = 2;
    EXPECT_EQ(text::decode_utf8(bad, pos), text::kReplacement);
}

TEST(Text, WordBoundaries) {
    const std::string s = "uncertainty uncertaintyx xuncertainty";
    EXPECT_TRUE(text::on_word_boundaries(s, 0, 11));
    EXPECT_FALSE(text::on_word_boundaries(s, 12, 23));
    EXPECT_FALSE(text::on_word_boundaries(s, 26, 37));
    const std::string u = "économie";
    EXPECT_FALSE(text::on_word_boundaries(u, 2, u.size()));  // starts inside a word after é
}

TEST(Text, WhitespaceTokens) {
    EXPECT_EQ(text::whitespace_token_count(""), 0u);
    EXPECT_EQ(text::whitespace_token_count("  a  b\tc\n"), 3u);
    EXPECT_EQ(text::whitespace_token_count("one"), 1u);
}

TEST(Text, DedupKeyKeepsPunctuation) {
    EXPECT_EQ(text::dedup_key("A  b\nC."), "a b c.");
}
