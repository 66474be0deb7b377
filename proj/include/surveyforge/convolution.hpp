#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "surveyforge/backend.hpp"
#include "surveyforge/entropy_scorer.hpp"
#include "surveyforge/initializer.hpp"
#include "surveyforge/rng.hpp"
#include "surveyforge/survey_tree.hpp"

namespace surveyforge {

// One skeleton-modification suggestion moving through the convolution
// stack. Layer-0 items come from cluster aggregation; higher layers from
// merging sampled sets.
struct Feedback {
    int id = 0;  // unique per run, assigned in creation order
    std::string text;
    int layer = 0;
    std::vector<int> lineage;  // parent feedback ids, draw order
    std::optional<EntropyScore> applied_entropy;  // H(S + this)
};

struct ConvolutionConfig {
    int layers = 6;
    int kernel_width = 3;
    int result_num = 10;
    int top_k = 6;
    int self_refine_steps = 3;
    int best_of = 3;
    std::uint64_t rng_seed = 0;

    void validate() const;  // throws ConfigError (e.g. top_k > result_num)
};

// Per-layer snapshot handed to the persistence sink and used for resume.
// score_events carries the judge calls of this layer sorted by
// (hash, component) so persisted logs are identical across runs regardless
// of worker interleaving.
struct LayerRecord {
    int layer = 0;
    std::vector<Feedback> items;    // every candidate scored at this layer
    std::vector<int> survivor_ids;  // entering the next layer
    int next_id = 0;
    std::vector<ScoreEvent> score_events;
};

// One best-of-N self-refinement round.
struct RefineRecord {
    int step = 0;
    std::vector<Feedback> candidates;
    int adopted_id = 0;
    std::string skeleton_after;  // serialized adopted skeleton
    int next_id = 0;
    std::vector<ScoreEvent> score_events;
};

nlohmann::json layer_record_to_json(const LayerRecord& record);
LayerRecord layer_record_from_json(const nlohmann::json& j);
nlohmann::json refine_record_to_json(const RefineRecord& record);
RefineRecord refine_record_from_json(const nlohmann::json& j);

// Entropy trajectory row; the raw per-candidate trace behind the
// entropy_trace.csv artifact.
struct TraceRow {
    std::string stage;  // "convolution" | "self_refine"
    int step = 0;       // layer index or refinement round
    int candidate_id = 0;
    double total = 0.0;
};

// Persistence hooks; the orchestrator writes run-directory files, tests
// may collect or ignore.
class ConvolutionSink {
public:
    virtual ~ConvolutionSink() = default;
    virtual void on_layer(const LayerRecord&) {}
    virtual void on_refine_step(const RefineRecord&) {}
};

// Resumable progress through the convolution stack. A fresh run starts at
// completed_layer == -1 with `current` holding the unscored layer-0 items.
struct ConvolutionState {
    std::vector<Feedback> current;
    int completed_layer = -1;
    int next_id = 0;
};

struct EngineOptions {
    std::string prompts_dir;
    std::string topic;
    bool apply_empty_shortcut = true;  // empty feedback returns the skeleton as-is
};

class ConvolutionEngine {
public:
    ConvolutionEngine(ModelBackend& backend, EntropyScorer& scorer,
                      ConvolutionConfig config, EngineOptions options = {});

    // Layer-0 aggregation over one cluster's digests and feedbacks.
    Feedback cluster_feedback(const Cluster& cluster,
                              const std::vector<DigestBundle>& bundles,
                              const SkeletonNode& skeleton);

    // Backend merge producing the revised skeleton S + fb; the input
    // skeleton is untouched. Re-asks on malformed output up to the retry
    // budget. Results are memoized per feedback id so the skeleton whose
    // entropy was measured is the one reused later.
    SkeletonNode apply_feedback(const SkeletonNode& skeleton, const Feedback& fb);

    // p_i = h_i / sum(h); requires every entropy > 0.
    static std::vector<double> sampling_distribution(const std::vector<double>& entropies);

    // result_num independent sets of min(kernel_width, n) distinct item
    // indices, drawn without replacement by repeated weighted draws.
    static std::vector<std::vector<size_t>> sample_feedback_sets(
        size_t item_count, const std::vector<double>& distribution, int kernel_width,
        int result_num, Rng& rng);

    // Merge one sampled set into a new candidate at layer max(parent)+1.
    Feedback convolve_set(const SkeletonNode& base_skeleton,
                          const std::vector<Feedback>& feedback_set, int new_id);

    // k highest-total candidates, ties to the lower id, sorted descending.
    static std::vector<Feedback> select_top_k(std::vector<Feedback> candidates, int k);

    // L layers of score -> sample -> convolve -> top-k survival over the
    // state, then applies the argmax-entropy candidate of the last layer to
    // the base skeleton. Returns the refined skeleton.
    SkeletonNode run_convolution(const SkeletonNode& base_skeleton, ConvolutionState& state,
                                 ConvolutionSink* sink = nullptr);

    // Best-of-N rounds: generate best_of candidates, apply + score each,
    // adopt the argmax unconditionally. refine_from > 0 resumes mid-stage.
    SkeletonNode self_refine(const SkeletonNode& skeleton, ConvolutionSink* sink = nullptr,
                             int refine_from = 0, int next_id = 0);

    const std::vector<TraceRow>& trace() const { return trace_; }
    void set_trace(std::vector<TraceRow> rows) { trace_ = std::move(rows); }

    const ConvolutionConfig& config() const { return config_; }

private:
    struct Scored {
        Feedback fb;
        SkeletonNode applied;
    };
    // Apply + score a batch of candidates concurrently, in input order.
    std::vector<Scored> score_candidates(const SkeletonNode& base,
                                         std::vector<Feedback> candidates);
    std::string generate_refine_candidate(const SkeletonNode& skeleton, int attempt,
                                          int attempts);

    ModelBackend& backend_;
    EntropyScorer& scorer_;
    ConvolutionConfig config_;
    EngineOptions options_;
    // (base skeleton, feedback id, feedback text) -> S + fb. Writes happen
    // only between parallel waves; workers read concurrently.
    std::unordered_map<std::uint64_t, SkeletonNode> applied_cache_;
    std::vector<TraceRow> trace_;
};

}  // namespace surveyforge
