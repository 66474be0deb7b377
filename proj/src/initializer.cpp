#include "surveyforge/initializer.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "surveyforge/errors.hpp"
#include "surveyforge/logging.hpp"
#include "surveyforge/parallel.hpp"
#include "surveyforge/prompts.hpp"
#include "surveyforge/text.hpp"

namespace surveyforge {

namespace {

constexpr const char* kSkeletonOpen = "<SKELETON>";
constexpr const char* kSkeletonClose = "</SKELETON>";
constexpr const char* kDigestOpen = "<DIGEST>";
constexpr const char* kDigestClose = "</DIGEST>";
constexpr const char* kFeedbackOpen = "<FEEDBACK>";
constexpr const char* kFeedbackClose = "</FEEDBACK>";

std::string reference_block(const ReferenceDoc& ref, std::size_t window_tokens) {
    std::string block = "### " + ref.title + " [bibkey: " + ref.bibkey + "]\n";
    if (ref.abstract && !ref.abstract->empty()) {
        block += "Abstract: " + *ref.abstract + "\n";
    }
    block += text::truncate_to_tokens(ref.full_text, window_tokens);
    block += "\n";
    return block;
}

}  // namespace

std::vector<ReferenceDoc> parse_references_jsonl(const std::string& content) {
    std::vector<ReferenceDoc> refs;
    std::set<std::string> seen;
    size_t line_no = 0;
    for (const auto& line : text::split_lines(content)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("references line " + std::to_string(line_no) +
                              " is not valid JSON: " + e.what());
        }
        ReferenceDoc ref;
        ref.bibkey = j.value("bibkey", std::string());
        ref.title = j.value("title", std::string());
        ref.full_text = j.value("txt", std::string());
        if (j.contains("abstract") && j["abstract"].is_string()) {
            ref.abstract = j["abstract"].get<std::string>();
        }
        if (ref.bibkey.empty()) {
            throw ConfigError("references line " + std::to_string(line_no) +
                              ": missing bibkey");
        }
        if (ref.full_text.empty()) {
            throw ConfigError("references line " + std::to_string(line_no) + " (" +
                              ref.bibkey + "): empty txt");
        }
        if (!seen.insert(ref.bibkey).second) {
            throw ConfigError("duplicate bibkey in references: " + ref.bibkey);
        }
        ref.token_estimate = text::token_estimate(ref.full_text);
        refs.push_back(std::move(ref));
    }
    return refs;
}

std::vector<ReferenceDoc> load_references_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open references file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_references_jsonl(buffer.str());
}

std::vector<Cluster> cluster_references(const std::vector<ReferenceDoc>& refs,
                                        std::size_t budget_tokens) {
    if (refs.empty()) throw ConfigError("cannot cluster an empty reference set");
    std::vector<Cluster> clusters;
    Cluster current;
    current.id = 0;
    std::size_t current_tokens = 0;
    for (const auto& ref : refs) {
        if (ref.token_estimate > budget_tokens) {
            log::warn("reference " + ref.bibkey + " exceeds the cluster budget (" +
                      std::to_string(ref.token_estimate) + " > " +
                      std::to_string(budget_tokens) + " tokens); placed alone");
        }
        if (!current.members.empty() &&
            current_tokens + ref.token_estimate > budget_tokens) {
            clusters.push_back(std::move(current));
            current = Cluster{static_cast<int>(clusters.size()), {}};
            current_tokens = 0;
        }
        current.members.push_back(ref.bibkey);
        current_tokens += ref.token_estimate;
    }
    clusters.push_back(std::move(current));
    return clusters;
}

Initializer::Initializer(ModelBackend& backend, std::string topic,
                         InitializerOptions options)
    : backend_(backend), topic_(std::move(topic)), options_(std::move(options)) {}

SkeletonNode Initializer::init_skeleton(const std::vector<Cluster>& clusters,
                                        const std::vector<ReferenceDoc>& refs) {
    if (clusters.empty()) throw ConfigError("init_skeleton requires at least one cluster");
    std::map<std::string, const ReferenceDoc*> by_key;
    for (const auto& ref : refs) by_key[ref.bibkey] = &ref;

    // Local skeleton per cluster (fan-out), then one aggregation.
    std::vector<std::string> local_skeletons = parallel_map(
        clusters, backend_.policy().parallelism_limit, [&](const Cluster& cluster) {
            std::string material;
            for (const auto& bibkey : cluster.members) {
                auto it = by_key.find(bibkey);
                if (it == by_key.end()) {
                    throw ConfigError("cluster references unknown bibkey: " + bibkey);
                }
                material += reference_block(*it->second, options_.ref_window_tokens);
            }
            auto request = make_request(
                RequestTag::init_skeleton,
                prompts::render("init_skeleton",
                                {{"topic", topic_}, {"references", material}},
                                options_.prompts_dir));
            return backend_.generate_extract(request,
                                             {{kSkeletonOpen, kSkeletonClose}})[0];
        });

    std::string merged_blocks;
    for (size_t i = 0; i < local_skeletons.size(); ++i) {
        merged_blocks += "--- local skeleton " + std::to_string(i + 1) + " ---\n";
        merged_blocks += text::trim(local_skeletons[i]);
        merged_blocks += "\n";
    }
    auto request = make_request(
        RequestTag::aggregate,
        prompts::render("aggregate", {{"topic", topic_}, {"skeletons", merged_blocks}},
                        options_.prompts_dir));

    const int attempts = backend_.policy().max_retries + 1;
    std::string last_error;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        std::string skeleton_text =
            backend_.generate_extract(request, {{kSkeletonOpen, kSkeletonClose}})[0];
        try {
            return parse_tree(text::trim(skeleton_text) + "\n");
        } catch (const MalformedTreeError& e) {
            last_error = e.what();
            log::warn(std::string("aggregated skeleton failed to parse (attempt ") +
                      std::to_string(attempt + 1) + "): " + last_error);
        }
    }
    throw MalformedTreeError("aggregated skeleton still malformed after " +
                             std::to_string(attempts) + " attempts: " + last_error);
}

std::vector<DigestBundle> Initializer::generate_digests(
    const SkeletonNode& skeleton, const std::vector<ReferenceDoc>& refs) {
    const std::string skeleton_text = serialize_tree(skeleton);
    const auto known_paths = heading_paths(skeleton);

    struct Outcome {
        bool ok = false;
        DigestBundle bundle;
        std::string error;
    };

    std::vector<Outcome> outcomes = parallel_map(
        refs, backend_.policy().parallelism_limit, [&](const ReferenceDoc& ref) {
            Outcome outcome;
            outcome.bundle.bibkey = ref.bibkey;
            auto request = make_request(
                RequestTag::digest,
                prompts::render(
                    "digest",
                    {{"topic", topic_},
                     {"skeleton", skeleton_text},
                     {"bibkey", ref.bibkey},
                     {"title", ref.title},
                     {"text",
                      text::truncate_to_tokens(ref.full_text, options_.ref_window_tokens)}},
                    options_.prompts_dir));
            try {
                auto fields = backend_.generate_extract(
                    request,
                    {{kDigestOpen, kDigestClose}, {kFeedbackOpen, kFeedbackClose}});
                outcome.bundle.feedback = text::trim(fields[1]);
                if (outcome.bundle.feedback.empty()) {
                    throw ExtractionFailedError("empty feedback block for " + ref.bibkey);
                }
                for (const auto& chunk : split_sections(fields[0])) {
                    if (chunk.body.empty()) continue;
                    if (known_paths.count(chunk.heading_path)) {
                        outcome.bundle.digest.entries.emplace_back(chunk.heading_path,
                                                                   chunk.body);
                    } else {
                        log::warn("digest entry for '" +
                                  text::join(chunk.heading_path, " / ") +
                                  "' not in skeleton; dropped (reference " + ref.bibkey +
                                  ")");
                    }
                }
                outcome.ok = true;
            } catch (const ExtractionFailedError& e) {
                outcome.error = e.what();
            } catch (const OutputRejectedError& e) {
                outcome.error = e.what();
            }
            return outcome;
        });

    std::vector<DigestBundle> bundles;
    size_t failures = 0;
    for (auto& outcome : outcomes) {
        if (outcome.ok) {
            bundles.push_back(std::move(outcome.bundle));
        } else {
            ++failures;
            log::warn("digest generation failed for " + outcome.bundle.bibkey + ": " +
                      outcome.error);
        }
    }
    if (failures > 0 &&
        static_cast<double>(failures) >
            options_.max_digest_failure_fraction * static_cast<double>(refs.size())) {
        throw PipelineError("digest generation failed for " + std::to_string(failures) +
                            " of " + std::to_string(refs.size()) + " references");
    }
    return bundles;
}

nlohmann::json digest_bundle_to_json(const DigestBundle& bundle) {
    nlohmann::json j;
    j["bibkey"] = bundle.bibkey;
    j["feedback"] = bundle.feedback;
    j["entries"] = nlohmann::json::array();
    for (const auto& [path, body] : bundle.digest.entries) {
        j["entries"].push_back(nlohmann::json{{"path", path}, {"text", body}});
    }
    return j;
}

DigestBundle digest_bundle_from_json(const nlohmann::json& j) {
    DigestBundle bundle;
    bundle.bibkey = j.at("bibkey").get<std::string>();
    bundle.feedback = j.value("feedback", std::string());
    for (const auto& entry : j.value("entries", nlohmann::json::array())) {
        bundle.digest.entries.emplace_back(
            entry.at("path").get<std::vector<std::string>>(),
            entry.at("text").get<std::string>());
    }
    return bundle;
}

}  // namespace surveyforge
