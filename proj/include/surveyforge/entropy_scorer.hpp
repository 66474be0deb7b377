#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "surveyforge/backend.hpp"
#include "surveyforge/survey_tree.hpp"

namespace surveyforge {

// Judge-estimated skeleton information entropy: a title-structure component
// and a chapter-description component, each 0..10, summed.
struct EntropyScore {
    double structure_score = 0.0;
    double description_score = 0.0;
    double total = 0.0;
};

struct ScoreEvent {
    std::string skeleton_hash;
    std::string component;  // "structure" | "description"
    std::string raw_response;
    double value = 0.0;
};

struct ScorerOptions {
    std::string prompts_dir;
    std::string topic;
    int score_samples = 1;  // judge calls averaged per component
};

// Two judge calls per distinct skeleton at temperature 0, cached on a
// content hash of the serialization so structurally identical skeletons are
// never re-scored. Safe for concurrent callers; racing first-scores may
// duplicate judge calls but record the same value.
class EntropyScorer {
public:
    EntropyScorer(ModelBackend& backend, ScorerOptions options = {});

    EntropyScore score(const SkeletonNode& skeleton);

    // Score events accumulated since the last drain, in recording order.
    // The orchestrator flushes them sorted by (hash, component) so log
    // files are reproducible under concurrency.
    std::vector<ScoreEvent> drain_events();

    size_t cache_size() const;

private:
    double judge_component(const std::string& prompt_name, const std::string& payload,
                           const std::string& skeleton_hash, const std::string& component,
                           std::vector<ScoreEvent>& events);

    ModelBackend& backend_;
    ScorerOptions options_;
    mutable std::mutex mutex_;
    std::unordered_map<std::uint64_t, EntropyScore> cache_;
    std::vector<ScoreEvent> events_;
};

// Min-max normalization to [0,1]; constant (and singleton) inputs map to
// all-0.5 so downstream plots stay interior.
std::vector<double> normalize_scores(const std::vector<double>& scores);

}  // namespace surveyforge
