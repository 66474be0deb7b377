#include <functional>

#include "doctest.h"
#include "support/test_util.hpp"
#include "surveyforge/errors.hpp"
#include "surveyforge/survey_tree.hpp"

using namespace surveyforge;

namespace {

// Independent reference: collect (level, title) pairs straight from the
// source text, with no tree machinery.
std::vector<std::pair<int, std::string>> headings_in_source(const std::string& md) {
    std::vector<std::pair<int, std::string>> out;
    size_t pos = 0;
    while (pos <= md.size()) {
        size_t end = md.find('\n', pos);
        std::string line =
            end == std::string::npos ? md.substr(pos) : md.substr(pos, end - pos);
        size_t hashes = 0;
        while (hashes < line.size() && line[hashes] == '#') ++hashes;
        if (hashes > 0 && hashes < line.size() && line[hashes] == ' ') {
            out.emplace_back(static_cast<int>(hashes), line.substr(hashes + 1));
        }
        if (end == std::string::npos) break;
        pos = end + 1;
    }
    return out;
}

std::vector<const SkeletonNode*> preorder(const SkeletonNode& root) {
    std::vector<const SkeletonNode*> nodes;
    walk(root, [&](const SkeletonNode& n) { nodes.push_back(&n); });
    return nodes;
}

}  // namespace

TEST_CASE("protocol snippet parses with both blocks and citations") {
    SkeletonNode node = parse_tree(sftest::protocol_snippet());
    CHECK(node.level == 3);
    CHECK(node.title == "2.1 Section Title");
    CHECK(node.digest_construction ==
          "Write about what information should be extracted from the full paper in "
          "this section.");
    CHECK(node.digest_analysis ==
          "Write about how to organize and analyse papers [\"BIBKEY1\", \"BIBKEY2\"] "
          "with executable step.");
    CHECK(node.cited_bibkeys == std::vector<std::string>{"BIBKEY1", "BIBKEY2"});
    CHECK(node.children.empty());
    CHECK(node.heading_path == std::vector<std::string>{"2.1 Section Title"});
}

TEST_CASE("minimal document") {
    SkeletonNode root = parse_tree("# T\n");
    CHECK(root.level == 1);
    CHECK(root.title == "T");
    CHECK(root.children.empty());
    CHECK(root.preamble.empty());
    CHECK(root.digest_construction.empty());
    CHECK(root.digest_analysis.empty());
    CHECK(serialize_tree(root) == "# T\n");
}

TEST_CASE("three-level document matches hand-built tree and heading order") {
    const std::string md =
        "# Root\n"
        "## A\n"
        "### A1\n"
        "### A2\n"
        "## B\n"
        "### B1\n"
        "## C\n";
    SkeletonNode parsed = parse_tree(md);
    CHECK(count_nodes(parsed) == 7);

    SkeletonNode expected = make_tree(
        1, make_node("Root", "", "", "",
                     {make_node("A", "", "", "",
                                {make_node("A1"), make_node("A2")}),
                      make_node("B", "", "", "", {make_node("B1")}),
                      make_node("C")}));
    CHECK(tree_equal(parsed, expected));

    // Pre-order traversal reproduces source heading order.
    auto nodes = preorder(parsed);
    auto source = headings_in_source(md);
    REQUIRE(nodes.size() == source.size());
    for (size_t i = 0; i < nodes.size(); ++i) {
        CHECK(nodes[i]->level == source[i].first);
        CHECK(nodes[i]->title == source[i].second);
    }
}

TEST_CASE("serialization orders construction before analysis") {
    SkeletonNode node = parse_tree(sftest::protocol_snippet());
    std::string out = serialize_tree(node);
    size_t c = out.find("**Digest Construction:**");
    size_t a = out.find("**Digest Analysis:**");
    REQUIRE(c != std::string::npos);
    REQUIRE(a != std::string::npos);
    CHECK(c < a);
    CHECK(tree_equal(parse_tree(out), node));
}

TEST_CASE("round-trip property over random trees") {
    sftest::TreeGen gen(20240229);
    for (int i = 0; i < 200; ++i) {
        SkeletonNode tree = gen.random_tree();
        SkeletonNode reparsed = parse_tree(serialize_tree(tree));
        CHECK(tree_equal(tree, reparsed));
    }
}

TEST_CASE("citation extraction is stable across round trips") {
    sftest::TreeGen gen(7);
    for (int i = 0; i < 20; ++i) {
        SkeletonNode tree = gen.random_tree();
        SkeletonNode reparsed = parse_tree(serialize_tree(tree));
        auto a = preorder(tree);
        auto b = preorder(reparsed);
        REQUIRE(a.size() == b.size());
        for (size_t n = 0; n < a.size(); ++n) {
            CHECK(a[n]->cited_bibkeys == b[n]->cited_bibkeys);
        }
    }
}

TEST_CASE("node_at finds nodes and rejects bad paths") {
    const std::string md =
        "# Root\n"
        "## A\n"
        "### A1\n"
        "## B\n";
    SkeletonNode root = parse_tree(md);

    CHECK(&node_at(root, {"Root"}) == &root);
    CHECK(node_at(root, {"Root", "A", "A1"}).title == "A1");
    CHECK_THROWS_AS(node_at(root, {"Root", "missing"}), PathNotFoundError);
    CHECK_THROWS_AS(node_at(root, {}), PathNotFoundError);
    CHECK_THROWS_AS(node_at(root, {"NotRoot"}), PathNotFoundError);

    SkeletonNode fig = parse_tree(sftest::protocol_snippet());
    CHECK(&node_at(fig, {"2.1 Section Title"}) == &fig);
}

TEST_CASE("node_at agrees with brute-force search on random trees") {
    sftest::TreeGen gen(99);
    for (int i = 0; i < 30; ++i) {
        SkeletonNode tree = gen.random_tree();
        for (const SkeletonNode* node : preorder(tree)) {
            const SkeletonNode& found = node_at(tree, node->heading_path);
            CHECK(&found == node);
        }
    }
}

TEST_CASE("malformed documents are rejected") {
    CHECK_THROWS_AS(parse_tree("# A\n### skip\n"), MalformedTreeError);   // jump > 1
    CHECK_THROWS_AS(parse_tree("# A\n# B\n"), MalformedTreeError);        // two roots
    CHECK_THROWS_AS(parse_tree("## A\n# B\n"), MalformedTreeError);       // root not first
    CHECK_THROWS_AS(parse_tree("# A\n## X\n## X\n"), MalformedTreeError); // dup siblings
    CHECK_THROWS_AS(parse_tree("####### deep\n"), MalformedTreeError);    // level 7
    CHECK_THROWS_AS(parse_tree("prose\n# A\n"), MalformedTreeError);      // leading prose
    CHECK_THROWS_AS(parse_tree(""), MalformedTreeError);                  // no headings
    CHECK_THROWS_AS(
        parse_tree("# A\n**Digest Analysis:**\nx\n**Digest Analysis:**\ny\n"),
        MalformedTreeError);                                              // dup label
}

TEST_CASE("preamble prose is preserved verbatim") {
    const std::string md =
        "# A\n"
        "Some loose prose the model emitted.\n"
        "A second line.\n"
        "**Digest Construction:**\n"
        "Extract things.\n";
    SkeletonNode root = parse_tree(md);
    CHECK(root.preamble == "Some loose prose the model emitted.\nA second line.");
    CHECK(root.digest_construction == "Extract things.");
    CHECK(tree_equal(parse_tree(serialize_tree(root)), root));
}

TEST_CASE("builder rejects block text containing structure lines") {
    CHECK_THROWS_AS(make_tree(1, make_node("A", "", "# sneaky heading", "")),
                    MalformedTreeError);
    CHECK_THROWS_AS(make_tree(1, make_node("A", "**Digest Analysis:**", "", "")),
                    MalformedTreeError);
    CHECK_THROWS_AS(make_tree(7, make_node("A")), MalformedTreeError);
    CHECK_THROWS_AS(make_tree(1, make_node("")), MalformedTreeError);
}

TEST_CASE("json mirror round-trips bit-stably") {
    sftest::TreeGen gen(5150);
    SkeletonNode tree = gen.random_tree();
    nlohmann::json j = tree_to_json(tree);
    SkeletonNode back = tree_from_json(j);
    CHECK(tree_equal(tree, back));
    CHECK(tree_to_json(back).dump() == j.dump());
}

TEST_CASE("unknown_citations reports keys missing from the reference set") {
    SkeletonNode tree = make_tree(
        1, make_node("Root", "", "", "Use [\"A\"] and [\"Z\"].",
                     {make_node("C", "", "", "Also [\"B\"].")}));
    auto unknown = unknown_citations(tree, {"A", "B"});
    CHECK(unknown == std::vector<std::string>{"Z"});
}

TEST_CASE("lenient section splitter tolerates jumps and duplicates") {
    auto chunks = split_sections("# A\nbody a\n### deep\ndeep body\n### deep\nagain\n");
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].heading_path == std::vector<std::string>{"A"});
    CHECK(chunks[0].body == "body a");
    CHECK(chunks[1].heading_path == std::vector<std::string>{"A", "deep"});
    CHECK(chunks[2].body == "again");

    auto headingless = split_sections("just prose\n");
    REQUIRE(headingless.size() == 1);
    CHECK(headingless[0].heading_path == std::vector<std::string>{"(document)"});
}
