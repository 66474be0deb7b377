#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "surveyforge/backend.hpp"
#include "surveyforge/initializer.hpp"
#include "surveyforge/survey_tree.hpp"

namespace surveyforge {

// Everything a node-level writing call sees: the node (whose Digest
// Analysis is the writing instruction), the digests aligned to its heading
// path, and the already-written child bodies for non-leaf nodes.
struct SectionContext {
    const SkeletonNode* node = nullptr;
    std::vector<std::pair<std::string, std::string>> digests_for_node;  // (bibkey, text)
    std::vector<std::string> child_contents;
};

// Optional persistence for per-node bodies, enabling resume mid-writing.
// Keys are stable across runs of the same skeleton.
class BodyStore {
public:
    virtual ~BodyStore() = default;
    virtual std::optional<std::string> load(const std::string& key) = 0;
    virtual void save(const std::string& key, const std::string& body) = 0;
};

struct WriterOptions {
    std::string prompts_dir;
    std::string topic;
};

class SurveyWriter {
public:
    SurveyWriter(ModelBackend& backend, WriterOptions options = {});

    // Section body for a leaf node; citations are restricted to bibkeys in
    // ctx.digests_for_node (violations stripped with a warning).
    std::string write_leaf(const SectionContext& ctx);

    // Overview body for a node whose children are already written; same
    // citation hygiene.
    std::string write_nonleaf(const SectionContext& ctx);

    // Writes every node bottom-up (all nodes of a depth in parallel,
    // deepest first) and returns the filled survey tree. Bodies found in
    // the store are reused without a backend call.
    SurveyNode write_survey(const SkeletonNode& skeleton,
                            const std::vector<DigestBundle>& digests,
                            BodyStore* store = nullptr);

private:
    std::string write_node(const SectionContext& ctx, bool leaf);

    ModelBackend& backend_;
    WriterOptions options_;
};

// Fresh digest pass against the optimized skeleton; contract identical to
// Initializer::generate_digests.
std::vector<DigestBundle> regenerate_digests(ModelBackend& backend,
                                             const std::string& topic,
                                             const SkeletonNode& final_skeleton,
                                             const std::vector<ReferenceDoc>& refs,
                                             const InitializerOptions& options = {});

// Final markdown document (headings match the skeleton; Digest blocks are
// scaffolding and do not appear) plus a structured bibliography listing
// every cited bibkey with its title. The references block is emitted
// without a heading so the document's heading structure stays identical to
// the skeleton's.
struct AssembledSurvey {
    std::string markdown;
    nlohmann::json bibliography;  // [{"bibkey","title"}], reference input order
};
AssembledSurvey assemble_survey(const SurveyNode& root,
                                const std::vector<ReferenceDoc>& refs);

// Stable per-node body key: hash of (skeleton hash, heading path).
std::string body_key(const std::string& skeleton_hash,
                     const std::vector<std::string>& heading_path);

}  // namespace surveyforge
