#include "doctest.h"
#include "surveyforge/text.hpp"

using namespace surveyforge;

TEST_CASE("bibkey extraction handles single and multi-key groups") {
    auto keys = text::extract_bibkeys("see [\"A\"] and [\"B\", \"C\"] then [\"A\"]");
    CHECK(keys == std::vector<std::string>{"A", "B", "C"});

    auto raw = text::extract_bibkeys("x [\"A\"][\"A\"]", /*dedup=*/false);
    CHECK(raw == std::vector<std::string>{"A", "A"});

    CHECK(text::extract_bibkeys("no citations here").empty());
    CHECK(text::extract_bibkeys("broken [\"A\" oops").empty());
    CHECK(text::extract_bibkeys("array [1, 2] is not a citation").empty());
}

TEST_CASE("strip_unknown_citations filters keys and drops empty groups") {
    std::set<std::string> known{"A", "B"};
    std::vector<std::string> removed;
    CHECK(text::strip_unknown_citations("x [\"A\"] y [\"Z\"] z", known, &removed) ==
          "x [\"A\"] y  z");
    CHECK(removed == std::vector<std::string>{"Z"});
    CHECK(text::strip_unknown_citations("m [\"A\", \"Z\", \"B\"]", known) ==
          "m [\"A\", \"B\"]");
}

TEST_CASE("render_template replaces known placeholders only") {
    CHECK(text::render_template("a {{x}} b {{y}} c", {{"x", "1"}}) == "a 1 b {{y}} c");
    CHECK(text::render_template("{{x}}{{x}}", {{"x", "q"}}) == "qq");
}

TEST_CASE("token estimate and truncation") {
    CHECK(text::token_estimate("") == 0);
    CHECK(text::token_estimate("abcd") == 1);
    CHECK(text::token_estimate("abcde") == 2);
    CHECK(text::truncate_to_tokens("abcdefgh", 1) == "abcd");
    CHECK(text::truncate_to_tokens("ab", 1) == "ab");
    // Multi-byte sequences are never split.
    std::string s = "ab\xC3\xA9xyz";  // e-acute at offset 2..3
    std::string cut = text::truncate_to_tokens(s, 1);  // 4 bytes would split? no: [0,4) ends after the 2-byte char
    CHECK(cut == "ab\xC3\xA9");
    std::string s2 = "abc\xC3\xA9xyz";  // 4-byte cut would land mid-sequence
    CHECK(text::truncate_to_tokens(s2, 1) == "abc");
}

TEST_CASE("sentence splitting on terminal punctuation") {
    auto s = text::split_sentences("One. Two two! Three? Four");
    REQUIRE(s.size() == 4);
    CHECK(s[0] == "One.");
    CHECK(s[1] == "Two two!");
    CHECK(s[2] == "Three?");
    CHECK(s[3] == "Four");

    // A period not followed by whitespace does not end the sentence.
    auto t = text::split_sentences("v1.2 is new. done");
    REQUIRE(t.size() == 2);
    CHECK(t[0] == "v1.2 is new.");
}

TEST_CASE("numbered list and int list parsing") {
    auto items = text::parse_numbered_list("intro\n1. first\n2) second\nnoise\n3. third");
    CHECK(items == std::vector<std::string>{"first", "second", "third"});

    CHECK(text::parse_int_list("5,8") == std::vector<int>{5, 8});
    CHECK(text::parse_int_list("remove 5 and 8") == std::vector<int>{5, 8});
    CHECK(text::parse_int_list("none").empty());
}

TEST_CASE("find_span scans sequentially") {
    auto span = text::find_span("x <A>one</A> <B>two</B>", "<A>", "</A>");
    REQUIRE(span.has_value());
    CHECK(std::string("x <A>one</A> <B>two</B>").substr(span->first,
                                                        span->second - span->first) ==
          "one");
    CHECK_FALSE(text::find_span("no markers", "<A>", "</A>").has_value());
}

#include "surveyforge/hashing.hpp"
#include "surveyforge/parallel.hpp"
#include "surveyforge/rng.hpp"

TEST_CASE("fnv1a64 is the stable reference implementation") {
    // Known FNV-1a vectors.
    CHECK(fnv1a64("") == 14695981039346656037ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
    CHECK(hash_hex(0) == "0000000000000000");
    CHECK(hash_hex(0xdeadbeefull) == "00000000deadbeef");
    CHECK(content_hash("x").size() == 16);
}

TEST_CASE("child seeds differ by stage and substep") {
    auto a = child_seed(42, "convolution");
    auto b = child_seed(42, "writing");
    auto c = child_seed(43, "convolution");
    CHECK(a != b);
    CHECK(a != c);
    CHECK(child_seed(42, "conv_layer", 1) != child_seed(42, "conv_layer", 2));
    CHECK(child_seed(42, "conv_layer", 1) == child_seed(42, "conv_layer", 1));
}

TEST_CASE("weighted_draw respects the cdf and its edges") {
    Rng rng(9);
    std::vector<double> p{0.0, 1.0, 0.0};
    for (int i = 0; i < 100; ++i) CHECK(weighted_draw(rng, p) == 1);
}

TEST_CASE("parallel_map preserves input order and propagates exceptions") {
    std::vector<int> items;
    for (int i = 0; i < 100; ++i) items.push_back(i);
    auto doubled = surveyforge::parallel_map(items, 8, [](const int& x) { return 2 * x; });
    for (int i = 0; i < 100; ++i) CHECK(doubled[static_cast<size_t>(i)] == 2 * i);

    CHECK_THROWS_AS(surveyforge::parallel_map(items, 8,
                                              [](const int& x) -> int {
                                                  if (x == 57) {
                                                      throw std::runtime_error("boom");
                                                  }
                                                  return x;
                                              }),
                    std::runtime_error);

    // Degenerate limits fall back to sequential execution.
    auto seq = surveyforge::parallel_map(items, 0, [](const int& x) { return x + 1; });
    CHECK(seq[99] == 100);
}
