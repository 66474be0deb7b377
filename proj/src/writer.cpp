#include "surveyforge/writer.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "surveyforge/errors.hpp"
#include "surveyforge/hashing.hpp"
#include "surveyforge/logging.hpp"
#include "surveyforge/parallel.hpp"
#include "surveyforge/prompts.hpp"
#include "surveyforge/text.hpp"

namespace surveyforge {

namespace {

constexpr const char* kContentOpen = "<CONTENT>";
constexpr const char* kContentClose = "</CONTENT>";

std::string digests_block(const SectionContext& ctx) {
    if (ctx.digests_for_node.empty()) {
        return "(no digest material is aligned to this section)\n";
    }
    std::string out;
    for (const auto& [bibkey, body] : ctx.digests_for_node) {
        out += "--- [\"" + bibkey + "\"] ---\n" + body + "\n";
    }
    return out;
}

}  // namespace

SurveyWriter::SurveyWriter(ModelBackend& backend, WriterOptions options)
    : backend_(backend), options_(std::move(options)) {}

std::string SurveyWriter::write_node(const SectionContext& ctx, bool leaf) {
    if (ctx.node == nullptr) throw PipelineError("section context without a node");
    std::map<std::string, std::string> vars{
        {"topic", options_.topic},
        {"section_path", text::join(ctx.node->heading_path, " / ")},
        {"analysis", ctx.node->digest_analysis},
        {"digests", digests_block(ctx)},
    };
    if (!leaf) {
        std::string children;
        for (size_t i = 0; i < ctx.child_contents.size(); ++i) {
            children += "--- subsection " + std::to_string(i + 1) + " ---\n" +
                        ctx.child_contents[i] + "\n";
        }
        vars["children"] = children;
    }
    auto request = make_request(
        leaf ? RequestTag::write_leaf : RequestTag::write_nonleaf,
        prompts::render(leaf ? "write_leaf" : "write_nonleaf", vars, options_.prompts_dir));

    std::string body = text::trim(
        backend_.generate_extract(request, {{kContentOpen, kContentClose}})[0]);
    if (body.empty()) {
        throw OutputRejectedError("empty section body for '" + ctx.node->title + "'");
    }

    std::set<std::string> allowed;
    for (const auto& [bibkey, _] : ctx.digests_for_node) allowed.insert(bibkey);
    std::vector<std::string> removed;
    std::string cleaned = text::strip_unknown_citations(body, allowed, &removed);
    for (const auto& key : removed) {
        log::warn("citation [\"" + key + "\"] in '" + ctx.node->title +
                  "' has no digest material; stripped");
    }
    return cleaned;
}

std::string SurveyWriter::write_leaf(const SectionContext& ctx) {
    if (!ctx.child_contents.empty()) {
        throw PipelineError("write_leaf called with child contents present");
    }
    return write_node(ctx, true);
}

std::string SurveyWriter::write_nonleaf(const SectionContext& ctx) {
    return write_node(ctx, false);
}

SurveyNode SurveyWriter::write_survey(const SkeletonNode& skeleton,
                                      const std::vector<DigestBundle>& digests,
                                      BodyStore* store) {
    const std::string skeleton_hash = content_hash(serialize_tree(skeleton));

    // Digest lookup per heading path, bundle (= reference input) order.
    std::map<std::vector<std::string>, std::vector<std::pair<std::string, std::string>>>
        aligned;
    for (const auto& bundle : digests) {
        for (const auto& [path, body] : bundle.digest.entries) {
            aligned[path].emplace_back(bundle.bibkey, body);
        }
    }

    // Wavefront order: all nodes of the deepest level first, so every
    // child body exists before its parent is written.
    std::vector<const SkeletonNode*> nodes;
    walk(skeleton, [&](const SkeletonNode& node) { nodes.push_back(&node); });
    std::map<int, std::vector<const SkeletonNode*>> by_level;
    for (const auto* node : nodes) by_level[node->level].push_back(node);

    std::map<std::vector<std::string>, std::string> contents;
    for (auto it = by_level.rbegin(); it != by_level.rend(); ++it) {
        const auto& wave = it->second;
        std::vector<std::string> bodies = parallel_map(
            wave, backend_.policy().parallelism_limit, [&](const SkeletonNode* node) {
                const std::string key = body_key(skeleton_hash, node->heading_path);
                if (store != nullptr) {
                    if (auto cached = store->load(key)) return *cached;
                }
                SectionContext ctx;
                ctx.node = node;
                if (auto hit = aligned.find(node->heading_path); hit != aligned.end()) {
                    ctx.digests_for_node = hit->second;
                }
                for (const auto& child : node->children) {
                    ctx.child_contents.push_back(contents.at(child.heading_path));
                }
                return ctx.child_contents.empty() ? write_leaf(ctx) : write_nonleaf(ctx);
            });
        for (size_t i = 0; i < wave.size(); ++i) {
            contents[wave[i]->heading_path] = bodies[i];
            if (store != nullptr) {
                store->save(body_key(skeleton_hash, wave[i]->heading_path), bodies[i]);
            }
        }
    }

    SurveyNode root = survey_from_skeleton(skeleton);
    std::function<void(SurveyNode&)> fill = [&](SurveyNode& node) {
        node.content = contents.at(node.heading_path);
        node.cited_bibkeys = text::extract_bibkeys(node.content);
        for (auto& child : node.children) fill(child);
    };
    fill(root);
    return root;
}

std::vector<DigestBundle> regenerate_digests(ModelBackend& backend,
                                             const std::string& topic,
                                             const SkeletonNode& final_skeleton,
                                             const std::vector<ReferenceDoc>& refs,
                                             const InitializerOptions& options) {
    Initializer initializer(backend, topic, options);
    return initializer.generate_digests(final_skeleton, refs);
}

AssembledSurvey assemble_survey(const SurveyNode& root,
                                const std::vector<ReferenceDoc>& refs) {
    std::string doc;
    std::set<std::string> cited;
    walk(root, [&](const SurveyNode& node) {
        if (node.content.empty()) {
            throw PipelineError("node '" + node.title + "' has no content");
        }
        doc.append(static_cast<size_t>(node.level), '#');
        doc += ' ';
        doc += node.title;
        doc += "\n\n";
        doc += node.content;
        doc += "\n\n";
        for (const auto& key : text::extract_bibkeys(node.content)) cited.insert(key);
    });

    nlohmann::json bibliography = nlohmann::json::array();
    std::string refs_block;
    for (const auto& ref : refs) {
        if (!cited.count(ref.bibkey)) continue;
        bibliography.push_back({{"bibkey", ref.bibkey}, {"title", ref.title}});
        refs_block += "- [\"" + ref.bibkey + "\"] " + ref.title + "\n";
        cited.erase(ref.bibkey);
    }
    for (const auto& orphan : cited) {
        log::warn("cited bibkey \"" + orphan + "\" is not in the reference set");
    }
    if (!refs_block.empty()) {
        // Plain block, not a heading: the document's heading structure must
        // stay identical to the skeleton's.
        doc += "---\n**References**\n\n" + refs_block;
    }
    return AssembledSurvey{doc, bibliography};
}

std::string body_key(const std::string& skeleton_hash,
                     const std::vector<std::string>& heading_path) {
    std::uint64_t h = fnv1a64(skeleton_hash);
    for (const auto& part : heading_path) {
        h = fnv1a64(part, h);
        h = fnv1a64("\x1f", h);
    }
    return hash_hex(h);
}

}  // namespace surveyforge
