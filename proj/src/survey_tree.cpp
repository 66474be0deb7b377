#include "surveyforge/survey_tree.hpp"

#include <algorithm>

#include "surveyforge/errors.hpp"
#include "surveyforge/text.hpp"

namespace surveyforge {

namespace {

constexpr const char* kConstructionLabel = "**Digest Construction:**";
constexpr const char* kConstructionLabelAlt = "**Digest Construction**:";
constexpr const char* kAnalysisLabel = "**Digest Analysis:**";
constexpr const char* kAnalysisLabelAlt = "**Digest Analysis**:";

// Returns the heading level (1..6) or 0 when the line is not an ATX
// heading. Lines with 7+ hashes report 7 so callers can reject them.
int heading_level(std::string_view line) {
    size_t hashes = 0;
    while (hashes < line.size() && line[hashes] == '#') ++hashes;
    if (hashes == 0) return 0;
    if (hashes > 6) return 7;
    if (hashes >= line.size() || (line[hashes] != ' ' && line[hashes] != '\t')) {
        return 0;  // "#x" is a paragraph, not a heading
    }
    return static_cast<int>(hashes);
}

enum class LabelKind { none, construction, analysis };

LabelKind label_kind(std::string_view raw_line) {
    std::string line = text::trim_right(raw_line);
    if (line == kConstructionLabel || line == kConstructionLabelAlt) {
        return LabelKind::construction;
    }
    if (line == kAnalysisLabel || line == kAnalysisLabelAlt) {
        return LabelKind::analysis;
    }
    return LabelKind::none;
}

std::string join_block(const std::vector<std::string>& lines) {
    return text::trim_right(text::join(lines, "\n"));
}

void reject_block_text(const std::string& field, const std::string& value) {
    for (const auto& line : text::split_lines(value)) {
        if (heading_level(line) != 0) {
            throw MalformedTreeError(field + " text contains a heading line: " + line);
        }
        if (label_kind(line) != LabelKind::none) {
            throw MalformedTreeError(field + " text contains a block label: " + line);
        }
    }
}

std::vector<std::string> derive_citations(const std::string& construction,
                                          const std::string& analysis) {
    std::vector<std::string> keys = text::extract_bibkeys(construction + "\n" + analysis);
    return keys;
}

// Recomputes level / heading_path / cited_bibkeys and validates invariants.
void finalize(SkeletonNode& node, int level,
              const std::vector<std::string>& parent_path) {
    if (level < 1 || level > 6) {
        throw MalformedTreeError("heading level out of range: " +
                                 std::to_string(level));
    }
    if (node.title.empty()) throw MalformedTreeError("empty node title");
    reject_block_text("preamble", node.preamble);
    reject_block_text("digest_construction", node.digest_construction);
    reject_block_text("digest_analysis", node.digest_analysis);

    node.level = level;
    node.heading_path = parent_path;
    node.heading_path.push_back(node.title);
    node.preamble = text::trim_right(node.preamble);
    node.digest_construction = text::trim_right(node.digest_construction);
    node.digest_analysis = text::trim_right(node.digest_analysis);
    node.cited_bibkeys = derive_citations(node.digest_construction, node.digest_analysis);

    std::set<std::string> sibling_titles;
    for (auto& child : node.children) {
        if (!sibling_titles.insert(child.title).second) {
            throw MalformedTreeError("duplicate sibling title: " + child.title);
        }
        finalize(child, level + 1, node.heading_path);
    }
}

void serialize_into(const SkeletonNode& node, std::string& out) {
    out.append(static_cast<size_t>(node.level), '#');
    out += ' ';
    out += node.title;
    out += '\n';
    if (!node.preamble.empty()) {
        out += node.preamble;
        out += '\n';
    }
    if (!node.digest_construction.empty()) {
        out += kConstructionLabel;
        out += '\n';
        out += node.digest_construction;
        out += '\n';
    }
    if (!node.digest_analysis.empty()) {
        out += kAnalysisLabel;
        out += '\n';
        out += node.digest_analysis;
        out += '\n';
    }
    for (const auto& child : node.children) serialize_into(child, out);
}

// Fills preamble / blocks from the body lines of one section.
void assign_body(SkeletonNode& node, const std::vector<std::string>& body) {
    std::vector<std::string> preamble;
    std::vector<std::string> construction;
    std::vector<std::string> analysis;
    bool seen_construction = false;
    bool seen_analysis = false;
    std::vector<std::string>* current = &preamble;
    for (const auto& line : body) {
        switch (label_kind(line)) {
            case LabelKind::construction:
                if (seen_construction) {
                    throw MalformedTreeError("duplicate Digest Construction label under '" +
                                             node.title + "'");
                }
                seen_construction = true;
                current = &construction;
                break;
            case LabelKind::analysis:
                if (seen_analysis) {
                    throw MalformedTreeError("duplicate Digest Analysis label under '" +
                                             node.title + "'");
                }
                seen_analysis = true;
                current = &analysis;
                break;
            case LabelKind::none:
                current->push_back(line);
                break;
        }
    }
    node.preamble = join_block(preamble);
    node.digest_construction = join_block(construction);
    node.digest_analysis = join_block(analysis);
}

}  // namespace

SkeletonNode parse_tree(const std::string& markdown_text) {
    const std::vector<std::string> lines = text::split_lines(markdown_text);

    struct RawSection {
        int level = 0;
        std::string title;
        std::vector<std::string> body;
    };
    std::vector<RawSection> sections;
    for (size_t i = 0; i < lines.size(); ++i) {
        int level = heading_level(lines[i]);
        if (level == 7) {
            throw MalformedTreeError("heading level above 6: " + lines[i]);
        }
        if (level > 0) {
            RawSection section;
            section.level = level;
            section.title = text::trim(std::string_view(lines[i]).substr(
                static_cast<size_t>(level) + 1));
            if (section.title.empty()) {
                throw MalformedTreeError("heading with empty title");
            }
            sections.push_back(std::move(section));
        } else if (sections.empty()) {
            if (!text::trim(lines[i]).empty()) {
                throw MalformedTreeError("content before the first heading: " + lines[i]);
            }
        } else {
            sections.back().body.push_back(lines[i]);
        }
    }
    if (sections.empty()) {
        throw MalformedTreeError("document has no headings");
    }

    const int root_level = sections.front().level;
    SkeletonNode root;
    root.title = sections.front().title;
    assign_body(root, sections.front().body);

    // Stack of open nodes from root to the most recent heading.
    std::vector<SkeletonNode*> open{&root};
    for (size_t s = 1; s < sections.size(); ++s) {
        RawSection& section = sections[s];
        if (section.level <= root_level) {
            throw MalformedTreeError("multiple top-level headings: '" + root.title +
                                     "' and '" + section.title + "'");
        }
        int depth = section.level - root_level;  // children of root are depth 1
        if (depth > static_cast<int>(open.size())) {
            throw MalformedTreeError("heading level jumps by more than one at '" +
                                     section.title + "'");
        }
        open.resize(static_cast<size_t>(depth));
        SkeletonNode child;
        child.title = section.title;
        assign_body(child, section.body);
        open.back()->children.push_back(std::move(child));
        open.push_back(&open.back()->children.back());
    }

    finalize(root, root_level, {});
    return root;
}

std::string serialize_tree(const SkeletonNode& root) {
    std::string out;
    serialize_into(root, out);
    return out;
}

const SkeletonNode& node_at(const SkeletonNode& root,
                            const std::vector<std::string>& heading_path) {
    if (heading_path.empty()) throw PathNotFoundError("empty heading path");
    if (heading_path.front() != root.title) {
        throw PathNotFoundError("path root '" + heading_path.front() +
                                "' does not match tree root '" + root.title + "'");
    }
    const SkeletonNode* node = &root;
    for (size_t i = 1; i < heading_path.size(); ++i) {
        const SkeletonNode* next = nullptr;
        for (const auto& child : node->children) {
            if (child.title == heading_path[i]) {
                next = &child;
                break;
            }
        }
        if (next == nullptr) {
            throw PathNotFoundError("no node titled '" + heading_path[i] + "' under '" +
                                    node->title + "'");
        }
        node = next;
    }
    return *node;
}

SkeletonNode make_node(std::string title, std::string preamble,
                       std::string digest_construction, std::string digest_analysis,
                       std::vector<SkeletonNode> children) {
    SkeletonNode node;
    node.title = std::move(title);
    node.preamble = std::move(preamble);
    node.digest_construction = std::move(digest_construction);
    node.digest_analysis = std::move(digest_analysis);
    node.children = std::move(children);
    return node;
}

SkeletonNode make_tree(int root_level, SkeletonNode root) {
    finalize(root, root_level, {});
    return root;
}

void walk(const SkeletonNode& root,
          const std::function<void(const SkeletonNode&)>& visit) {
    visit(root);
    for (const auto& child : root.children) walk(child, visit);
}

void walk(const SurveyNode& root,
          const std::function<void(const SurveyNode&)>& visit) {
    visit(root);
    for (const auto& child : root.children) walk(child, visit);
}

std::set<std::vector<std::string>> heading_paths(const SkeletonNode& root) {
    std::set<std::vector<std::string>> paths;
    walk(root, [&](const SkeletonNode& node) { paths.insert(node.heading_path); });
    return paths;
}

size_t count_nodes(const SkeletonNode& root) {
    size_t n = 0;
    walk(root, [&](const SkeletonNode&) { ++n; });
    return n;
}

bool tree_equal(const SkeletonNode& a, const SkeletonNode& b) {
    if (a.level != b.level || a.title != b.title || a.heading_path != b.heading_path ||
        a.preamble != b.preamble || a.digest_construction != b.digest_construction ||
        a.digest_analysis != b.digest_analysis || a.cited_bibkeys != b.cited_bibkeys ||
        a.children.size() != b.children.size()) {
        return false;
    }
    for (size_t i = 0; i < a.children.size(); ++i) {
        if (!tree_equal(a.children[i], b.children[i])) return false;
    }
    return true;
}

std::vector<std::string> unknown_citations(const SkeletonNode& root,
                                           const std::set<std::string>& known) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    walk(root, [&](const SkeletonNode& node) {
        for (const auto& key : node.cited_bibkeys) {
            if (!known.count(key) && seen.insert(key).second) out.push_back(key);
        }
    });
    return out;
}

nlohmann::json tree_to_json(const SkeletonNode& root) {
    nlohmann::json j;
    j["title"] = root.title;
    j["level"] = root.level;
    j["preamble"] = root.preamble;
    j["digest_construction"] = root.digest_construction;
    j["digest_analysis"] = root.digest_analysis;
    j["children"] = nlohmann::json::array();
    for (const auto& child : root.children) {
        j["children"].push_back(tree_to_json(child));
    }
    return j;
}

namespace {

SkeletonNode node_from_json(const nlohmann::json& j) {
    SkeletonNode node;
    node.title = j.at("title").get<std::string>();
    node.level = j.at("level").get<int>();
    node.preamble = j.value("preamble", std::string());
    node.digest_construction = j.value("digest_construction", std::string());
    node.digest_analysis = j.value("digest_analysis", std::string());
    for (const auto& cj : j.value("children", nlohmann::json::array())) {
        node.children.push_back(node_from_json(cj));
    }
    return node;
}

}  // namespace

SkeletonNode tree_from_json(const nlohmann::json& j) {
    SkeletonNode root = node_from_json(j);
    int root_level = root.level;
    finalize(root, root_level, {});
    return root;
}

SurveyNode survey_from_skeleton(const SkeletonNode& root) {
    SurveyNode node;
    node.heading_path = root.heading_path;
    node.level = root.level;
    node.title = root.title;
    node.cited_bibkeys.clear();
    for (const auto& child : root.children) {
        node.children.push_back(survey_from_skeleton(child));
    }
    return node;
}

std::vector<SectionChunk> split_sections(std::string_view markdown_text) {
    std::vector<SectionChunk> chunks;
    std::vector<std::pair<int, std::string>> stack;  // (level, title)
    std::string leading_body;
    for (const auto& line : text::split_lines(markdown_text)) {
        int level = heading_level(line);
        if (level >= 1 && level <= 6) {
            while (!stack.empty() && stack.back().first >= level) stack.pop_back();
            std::string title =
                text::trim(std::string_view(line).substr(static_cast<size_t>(level) + 1));
            stack.emplace_back(level, title);
            SectionChunk chunk;
            chunk.level = level;
            chunk.title = title;
            for (const auto& [_, t] : stack) chunk.heading_path.push_back(t);
            chunks.push_back(std::move(chunk));
        } else if (!chunks.empty()) {
            chunks.back().body += line;
            chunks.back().body += '\n';
        } else if (!text::trim(line).empty()) {
            leading_body += line;
            leading_body += '\n';
        }
    }
    if (chunks.empty() && !leading_body.empty()) {
        SectionChunk chunk;
        chunk.level = 1;
        chunk.title = "(document)";
        chunk.heading_path = {"(document)"};
        chunk.body = leading_body;
        chunks.push_back(std::move(chunk));
    }
    for (auto& chunk : chunks) chunk.body = text::trim_right(chunk.body);
    return chunks;
}

}  // namespace surveyforge
