#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "surveyforge/backend.hpp"
#include "surveyforge/survey_tree.hpp"

namespace surveyforge {

struct ReferenceDoc {
    std::string bibkey;
    std::string title;
    std::optional<std::string> abstract;
    std::string full_text;
    std::size_t token_estimate = 0;  // ceil(bytes / 4), derived at load
};

// JSON-lines, one object per reference: {"bibkey", "title", "abstract"?, "txt"}.
// Enforces unique bibkeys and non-empty text.
std::vector<ReferenceDoc> load_references_jsonl(const std::filesystem::path& path);
std::vector<ReferenceDoc> parse_references_jsonl(const std::string& content);

struct Cluster {
    int id = 0;
    std::vector<std::string> members;  // bibkeys, input order
};

// Greedy contiguous fill: walk the references in input order and open a new
// cluster whenever the next reference would push the running token sum past
// the budget. A reference larger than the whole budget becomes a singleton
// cluster (logged). The clusters partition the input and preserve its order.
std::vector<Cluster> cluster_references(const std::vector<ReferenceDoc>& refs,
                                        std::size_t budget_tokens);

// Alignment of one reference's extracted content to skeleton heading paths.
struct Digest {
    std::vector<std::pair<std::vector<std::string>, std::string>> entries;
};

struct DigestBundle {
    std::string bibkey;
    Digest digest;
    std::string feedback;  // skeleton-improvement suggestion from this reference
};

struct InitializerOptions {
    std::string prompts_dir;
    std::size_t ref_window_tokens = 100000;  // reference text cap inside prompts
    double max_digest_failure_fraction = 0.10;
};

class Initializer {
public:
    Initializer(ModelBackend& backend, std::string topic, InitializerOptions options = {});

    // One local-skeleton call per cluster, then a single aggregation call;
    // the merged output must parse as a valid tree (re-asked on malformed
    // output up to the backend retry budget).
    SkeletonNode init_skeleton(const std::vector<Cluster>& clusters,
                               const std::vector<ReferenceDoc>& refs);

    // One digest call per reference, fanned out up to the backend
    // parallelism limit, results in input order. Entries whose heading path
    // is missing from the skeleton are dropped with a warning. A reference
    // whose digest cannot be extracted is skipped (empty bundle recorded);
    // the run fails once more than max_digest_failure_fraction of the
    // references fail.
    std::vector<DigestBundle> generate_digests(const SkeletonNode& skeleton,
                                               const std::vector<ReferenceDoc>& refs);

private:
    ModelBackend& backend_;
    std::string topic_;
    InitializerOptions options_;
};

// Digest persistence for the run directory.
nlohmann::json digest_bundle_to_json(const DigestBundle& bundle);
DigestBundle digest_bundle_from_json(const nlohmann::json& j);

}  // namespace surveyforge
