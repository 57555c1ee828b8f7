#include <doctest.h>

#include "juris/text.hpp"

using namespace juris;

TEST_CASE("utf-8 code point addressing")
{
    std::string s = "第1条 民法";
    CHECK(text::codepoint_count(s) == 6);
    CHECK(text::substr_cp(s, 1, 3) == "1条");
    CHECK(text::encode_utf8(text::decode_utf8(s)) == s);
    CHECK(text::decode_utf8("\xff").front() == 0xFFFD);
}

TEST_CASE("whitespace normalization")
{
    CHECK(text::normalize_whitespace("  a\t\tb \r\n\r\n\r\n c\x01 ") == "a b\n\nc");
    CHECK(text::normalize_whitespace("甲　　乙") == "甲 乙");
    CHECK(text::normalize_whitespace("\n\n") == "");
    CHECK(text::collapse_whitespace(" x \n y ") == "x y");
}

TEST_CASE("two-decimal half-up rendering")
{
    CHECK(text::fixed2_half_up(3.335) == "3.34");
    CHECK(text::fixed2_half_up(2.675) == "2.68");
    CHECK(text::fixed2_half_up(10.0 / 3.0) == "3.33");
    CHECK(text::fixed2_half_up(3.39) == "3.39");
    CHECK(text::fixed2_half_up(0.0) == "0.00");
    CHECK(text::fixed2_half_up(99.995) == "100.00");
    CHECK(text::percent2_half_up(1, 8) == "12.50");
    CHECK(text::percent2_half_up(1, 3) == "33.33");
    CHECK(text::percent2_half_up(2, 3) == "66.67");
    CHECK(text::percent2_half_up(1, 80000) == "0.00");
    CHECK(text::percent2_half_up(1, 40000) == "0.00");
    CHECK(text::percent2_half_up(1, 20000) == "0.01");
    CHECK(text::percent2_half_up(4, 4) == "100.00");
}
