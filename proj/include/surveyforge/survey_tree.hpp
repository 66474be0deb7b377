#pragma once

#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "vendor_json.hpp"

namespace surveyforge {

// One node of the skeleton tree. The markdown mirror of a node is
//
//   ### 2.1 Section Title
//   optional preamble prose
//   **Digest Construction:**
//   what to extract from each reference for this section
//   **Digest Analysis:**
//   how to organize the extracted material ["BIBKEY1", "BIBKEY2"]
//
// Trees are treated as immutable after construction; revisions build new
// trees, so sharing across stage workers needs no locking.
struct SkeletonNode {
    std::vector<std::string> heading_path;  // titles from root, inclusive
    int level = 1;                          // markdown heading depth, 1..6
    std::string title;
    std::string preamble;  // prose between the heading and the first label
    std::string digest_construction;
    std::string digest_analysis;
    std::vector<std::string> cited_bibkeys;  // union over both blocks
    std::vector<SkeletonNode> children;
};

// Skeleton shape plus the written section body.
struct SurveyNode {
    std::vector<std::string> heading_path;
    int level = 1;
    std::string title;
    std::string content;
    std::vector<std::string> cited_bibkeys;
    std::vector<SurveyNode> children;
};

// Parses an ATX-heading markdown document into a skeleton tree.
// Throws MalformedTree on: content before the first heading, more than one
// top-level heading, heading level jumps > 1, duplicate sibling titles,
// levels above 6, duplicate block labels within one section.
SkeletonNode parse_tree(const std::string& markdown_text);

// Canonical serialization; parse_tree(serialize_tree(t)) structurally
// equals t. Empty blocks and preambles are omitted, so a bare root
// serializes to "# Title\n".
std::string serialize_tree(const SkeletonNode& root);

// Unique node with the given heading path; throws PathNotFound.
const SkeletonNode& node_at(const SkeletonNode& root,
                            const std::vector<std::string>& heading_path);

// Builds a detached node from its text fields; cited_bibkeys is derived.
// Block text must not itself contain heading or label lines.
SkeletonNode make_node(std::string title, std::string preamble = "",
                       std::string digest_construction = "",
                       std::string digest_analysis = "",
                       std::vector<SkeletonNode> children = {});

// Assigns levels and heading paths over a hand-built tree and validates the
// node invariants. Returns the finalized tree.
SkeletonNode make_tree(int root_level, SkeletonNode root);

// Pre-order traversal.
void walk(const SkeletonNode& root,
          const std::function<void(const SkeletonNode&)>& visit);
void walk(const SurveyNode& root,
          const std::function<void(const SurveyNode&)>& visit);

std::set<std::vector<std::string>> heading_paths(const SkeletonNode& root);
size_t count_nodes(const SkeletonNode& root);

// Structural equality: levels, titles, paths, preamble, block texts,
// citations, and children.
bool tree_equal(const SkeletonNode& a, const SkeletonNode& b);

// Bibkeys cited anywhere in the tree but absent from `known`.
std::vector<std::string> unknown_citations(const SkeletonNode& root,
                                           const std::set<std::string>& known);

// JSON mirror for run-state persistence; levels/paths/citations are
// re-derived and validated on load.
nlohmann::json tree_to_json(const SkeletonNode& root);
SkeletonNode tree_from_json(const nlohmann::json& j);

SurveyNode survey_from_skeleton(const SkeletonNode& root);

// Lenient heading splitter for material we do not control (model digests,
// arbitrary survey markdown under evaluation). Tolerates level jumps and
// duplicate titles; never throws.
struct SectionChunk {
    std::vector<std::string> heading_path;
    int level = 1;
    std::string title;
    std::string body;
};
std::vector<SectionChunk> split_sections(std::string_view markdown_text);

}  // namespace surveyforge
