#include "surveyforge/convolution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "surveyforge/errors.hpp"
#include "surveyforge/hashing.hpp"
#include "surveyforge/logging.hpp"
#include "surveyforge/parallel.hpp"
#include "surveyforge/prompts.hpp"
#include "surveyforge/text.hpp"

namespace surveyforge {

namespace {

constexpr const char* kSkeletonOpen = "<SKELETON>";
constexpr const char* kSkeletonClose = "</SKELETON>";
constexpr const char* kFeedbackOpen = "<FEEDBACK>";
constexpr const char* kFeedbackClose = "</FEEDBACK>";

nlohmann::json feedback_to_json(const Feedback& fb) {
    nlohmann::json j;
    j["id"] = fb.id;
    j["text"] = fb.text;
    j["layer"] = fb.layer;
    j["lineage"] = fb.lineage;
    if (fb.applied_entropy) {
        j["entropy"] = {{"structure", fb.applied_entropy->structure_score},
                        {"description", fb.applied_entropy->description_score},
                        {"total", fb.applied_entropy->total}};
    }
    return j;
}

Feedback feedback_from_json(const nlohmann::json& j) {
    Feedback fb;
    fb.id = j.at("id").get<int>();
    fb.text = j.at("text").get<std::string>();
    fb.layer = j.at("layer").get<int>();
    fb.lineage = j.value("lineage", std::vector<int>{});
    if (j.contains("entropy")) {
        EntropyScore score;
        score.structure_score = j["entropy"].at("structure").get<double>();
        score.description_score = j["entropy"].at("description").get<double>();
        score.total = j["entropy"].at("total").get<double>();
        fb.applied_entropy = score;
    }
    return fb;
}

double entropy_of(const Feedback& fb) {
    if (!fb.applied_entropy) {
        throw PipelineError("feedback " + std::to_string(fb.id) + " is unscored");
    }
    return fb.applied_entropy->total;
}

std::uint64_t apply_key(const SkeletonNode& skeleton, const Feedback& fb) {
    std::uint64_t h = fnv1a64(serialize_tree(skeleton));
    h = fnv1a64(fb.text, h);
    h = fnv1a64(std::to_string(fb.id), h);
    return h;
}

std::vector<ScoreEvent> drained_sorted(EntropyScorer& scorer) {
    std::vector<ScoreEvent> events = scorer.drain_events();
    std::sort(events.begin(), events.end(), [](const ScoreEvent& a, const ScoreEvent& b) {
        if (a.skeleton_hash != b.skeleton_hash) return a.skeleton_hash < b.skeleton_hash;
        return a.component < b.component;
    });
    return events;
}

nlohmann::json score_events_to_json(const std::vector<ScoreEvent>& events) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& event : events) {
        j.push_back({{"skeleton_hash", event.skeleton_hash},
                     {"component", event.component},
                     {"raw", event.raw_response},
                     {"value", event.value}});
    }
    return j;
}

std::vector<ScoreEvent> score_events_from_json(const nlohmann::json& j) {
    std::vector<ScoreEvent> events;
    for (const auto& item : j) {
        events.push_back(ScoreEvent{item.at("skeleton_hash").get<std::string>(),
                                    item.at("component").get<std::string>(),
                                    item.at("raw").get<std::string>(),
                                    item.at("value").get<double>()});
    }
    return events;
}

}  // namespace

void ConvolutionConfig::validate() const {
    if (layers < 1) throw ConfigError("convolution.layers must be >= 1");
    if (kernel_width < 1) throw ConfigError("convolution.kernel_width must be >= 1");
    if (result_num < 1) throw ConfigError("convolution.result_num must be >= 1");
    if (top_k < 1) throw ConfigError("convolution.top_k must be >= 1");
    if (top_k > result_num) {
        throw ConfigError("convolution.top_k must not exceed convolution.result_num");
    }
    if (self_refine_steps < 0) throw ConfigError("convolution.self_refine_steps must be >= 0");
    if (best_of < 1) throw ConfigError("convolution.best_of must be >= 1");
}

nlohmann::json layer_record_to_json(const LayerRecord& record) {
    nlohmann::json j;
    j["layer"] = record.layer;
    j["items"] = nlohmann::json::array();
    for (const auto& fb : record.items) j["items"].push_back(feedback_to_json(fb));
    j["survivor_ids"] = record.survivor_ids;
    j["next_id"] = record.next_id;
    j["score_events"] = score_events_to_json(record.score_events);
    return j;
}

LayerRecord layer_record_from_json(const nlohmann::json& j) {
    LayerRecord record;
    record.layer = j.at("layer").get<int>();
    for (const auto& item : j.at("items")) record.items.push_back(feedback_from_json(item));
    record.survivor_ids = j.at("survivor_ids").get<std::vector<int>>();
    record.next_id = j.at("next_id").get<int>();
    record.score_events =
        score_events_from_json(j.value("score_events", nlohmann::json::array()));
    return record;
}

nlohmann::json refine_record_to_json(const RefineRecord& record) {
    nlohmann::json j;
    j["step"] = record.step;
    j["candidates"] = nlohmann::json::array();
    for (const auto& fb : record.candidates) j["candidates"].push_back(feedback_to_json(fb));
    j["adopted_id"] = record.adopted_id;
    j["skeleton_after"] = record.skeleton_after;
    j["next_id"] = record.next_id;
    j["score_events"] = score_events_to_json(record.score_events);
    return j;
}

RefineRecord refine_record_from_json(const nlohmann::json& j) {
    RefineRecord record;
    record.step = j.at("step").get<int>();
    for (const auto& item : j.at("candidates")) {
        record.candidates.push_back(feedback_from_json(item));
    }
    record.adopted_id = j.at("adopted_id").get<int>();
    record.skeleton_after = j.at("skeleton_after").get<std::string>();
    record.next_id = j.at("next_id").get<int>();
    record.score_events =
        score_events_from_json(j.value("score_events", nlohmann::json::array()));
    return record;
}

ConvolutionEngine::ConvolutionEngine(ModelBackend& backend, EntropyScorer& scorer,
                                     ConvolutionConfig config, EngineOptions options)
    : backend_(backend), scorer_(scorer), config_(config), options_(std::move(options)) {
    config_.validate();
}

Feedback ConvolutionEngine::cluster_feedback(const Cluster& cluster,
                                             const std::vector<DigestBundle>& bundles,
                                             const SkeletonNode& skeleton) {
    const std::set<std::string> members(cluster.members.begin(), cluster.members.end());
    std::string digests;
    std::string feedbacks;
    for (const auto& bundle : bundles) {
        if (!members.count(bundle.bibkey)) {
            throw PipelineError("bundle " + bundle.bibkey + " does not belong to cluster " +
                                std::to_string(cluster.id));
        }
        digests += "--- digest of " + bundle.bibkey + " ---\n";
        if (bundle.digest.entries.empty()) {
            digests += "(no aligned content)\n";
        }
        for (const auto& [path, body] : bundle.digest.entries) {
            digests += "[" + text::join(path, " / ") + "]\n" + body + "\n";
        }
        feedbacks += "--- feedback from " + bundle.bibkey + " ---\n" + bundle.feedback + "\n";
    }
    auto request = make_request(
        RequestTag::feedback_cluster,
        prompts::render("feedback_cluster",
                        {{"topic", options_.topic},
                         {"skeleton", serialize_tree(skeleton)},
                         {"digests", digests},
                         {"feedbacks", feedbacks}},
                        options_.prompts_dir));
    Feedback fb;
    fb.layer = 0;
    fb.text = text::trim(
        backend_.generate_extract(request, {{kFeedbackOpen, kFeedbackClose}})[0]);
    return fb;
}

SkeletonNode ConvolutionEngine::apply_feedback(const SkeletonNode& skeleton,
                                               const Feedback& fb) {
    if (auto it = applied_cache_.find(apply_key(skeleton, fb)); it != applied_cache_.end()) {
        return it->second;
    }
    if (options_.apply_empty_shortcut && text::trim(fb.text).empty()) {
        return skeleton;
    }
    auto request = make_request(
        RequestTag::refine,
        prompts::render("apply_feedback",
                        {{"topic", options_.topic},
                         {"skeleton", serialize_tree(skeleton)},
                         {"feedback", fb.text},
                         {"feedback_id", std::to_string(fb.id)}},
                        options_.prompts_dir));

    const int attempts = backend_.policy().max_retries + 1;
    std::string last_error;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        std::string revised =
            backend_.generate_extract(request, {{kSkeletonOpen, kSkeletonClose}})[0];
        try {
            return parse_tree(text::trim(revised) + "\n");
        } catch (const MalformedTreeError& e) {
            last_error = e.what();
            log::warn("applied skeleton failed to parse (feedback " +
                      std::to_string(fb.id) + ", attempt " + std::to_string(attempt + 1) +
                      "): " + last_error);
        }
    }
    throw MalformedTreeError("revised skeleton still malformed after " +
                             std::to_string(attempts) + " attempts: " + last_error);
}

std::vector<double> ConvolutionEngine::sampling_distribution(
    const std::vector<double>& entropies) {
    if (entropies.empty()) {
        throw DegenerateDistributionError("no entropies to sample from");
    }
    double sum = 0.0;
    for (double h : entropies) {
        if (!(h > 0.0)) {
            throw DegenerateDistributionError("non-positive entropy in sampling input: " +
                                              std::to_string(h));
        }
        sum += h;
    }
    std::vector<double> p;
    p.reserve(entropies.size());
    for (double h : entropies) p.push_back(h / sum);
    return p;
}

std::vector<std::vector<size_t>> ConvolutionEngine::sample_feedback_sets(
    size_t item_count, const std::vector<double>& distribution, int kernel_width,
    int result_num, Rng& rng) {
    if (item_count == 0 || distribution.size() != item_count) {
        throw PipelineError("sample_feedback_sets: bad item/distribution sizes");
    }
    const size_t set_size = std::min<size_t>(static_cast<size_t>(kernel_width), item_count);
    std::vector<std::vector<size_t>> sets;
    sets.reserve(static_cast<size_t>(result_num));
    for (int s = 0; s < result_num; ++s) {
        std::vector<size_t> remaining(item_count);
        std::iota(remaining.begin(), remaining.end(), size_t{0});
        std::vector<double> weights = distribution;
        std::vector<size_t> chosen;
        chosen.reserve(set_size);
        for (size_t draw = 0; draw < set_size; ++draw) {
            double mass = std::accumulate(weights.begin(), weights.end(), 0.0);
            std::vector<double> p;
            p.reserve(weights.size());
            for (double w : weights) p.push_back(w / mass);
            size_t pick = weighted_draw(rng, p);
            chosen.push_back(remaining[pick]);
            remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
            weights.erase(weights.begin() + static_cast<std::ptrdiff_t>(pick));
        }
        sets.push_back(std::move(chosen));
    }
    return sets;
}

Feedback ConvolutionEngine::convolve_set(const SkeletonNode& base_skeleton,
                                         const std::vector<Feedback>& feedback_set,
                                         int new_id) {
    if (feedback_set.empty()) {
        throw PipelineError("convolve_set requires a non-empty feedback set");
    }
    std::string blocks;
    int max_layer = 0;
    std::vector<int> lineage;
    for (const auto& fb : feedback_set) {
        blocks += "--- suggestion " + std::to_string(fb.id) + " ---\n" + fb.text + "\n";
        max_layer = std::max(max_layer, fb.layer);
        lineage.push_back(fb.id);
    }
    auto request = make_request(
        RequestTag::convolve,
        prompts::render("convolve",
                        {{"topic", options_.topic},
                         {"skeleton", serialize_tree(base_skeleton)},
                         {"feedbacks", blocks}},
                        options_.prompts_dir));
    Feedback merged;
    merged.id = new_id;
    merged.layer = max_layer + 1;
    merged.lineage = std::move(lineage);
    merged.text = text::trim(
        backend_.generate_extract(request, {{kFeedbackOpen, kFeedbackClose}})[0]);
    return merged;
}

std::vector<Feedback> ConvolutionEngine::select_top_k(std::vector<Feedback> candidates,
                                                      int k) {
    for (const auto& fb : candidates) entropy_of(fb);  // all must be scored
    std::sort(candidates.begin(), candidates.end(), [](const Feedback& a, const Feedback& b) {
        double ha = a.applied_entropy->total;
        double hb = b.applied_entropy->total;
        if (ha != hb) return ha > hb;
        return a.id < b.id;
    });
    if (static_cast<size_t>(k) < candidates.size()) {
        candidates.resize(static_cast<size_t>(k));
    }
    return candidates;
}

std::vector<ConvolutionEngine::Scored> ConvolutionEngine::score_candidates(
    const SkeletonNode& base, std::vector<Feedback> candidates) {
    std::vector<Scored> scored = parallel_map(
        candidates, backend_.policy().parallelism_limit, [&](const Feedback& fb) {
            Scored item;
            item.fb = fb;
            item.applied = apply_feedback(base, fb);
            item.fb.applied_entropy = scorer_.score(item.applied);
            return item;
        });
    for (auto& item : scored) {
        applied_cache_.emplace(apply_key(base, item.fb), item.applied);
    }
    return scored;
}

SkeletonNode ConvolutionEngine::run_convolution(const SkeletonNode& base_skeleton,
                                                ConvolutionState& state,
                                                ConvolutionSink* sink) {
    if (state.current.empty()) {
        throw PipelineError("run_convolution requires at least one layer-0 feedback");
    }

    // Layer 0: score the cluster feedbacks before the first sampling.
    if (state.completed_layer < 0) {
        auto scored = score_candidates(base_skeleton, std::move(state.current));
        state.current.clear();
        LayerRecord record;
        record.layer = 0;
        record.score_events = drained_sorted(scorer_);
        for (auto& item : scored) {
            trace_.push_back(TraceRow{"convolution", 0, item.fb.id,
                                      item.fb.applied_entropy->total});
            record.items.push_back(item.fb);
            record.survivor_ids.push_back(item.fb.id);
            state.current.push_back(std::move(item.fb));
        }
        record.next_id = state.next_id;
        state.completed_layer = 0;
        if (sink != nullptr) sink->on_layer(record);
    }

    for (int layer = state.completed_layer + 1; layer <= config_.layers; ++layer) {
        // Candidates with zero entropy carry no sampling mass.
        std::vector<Feedback> eligible;
        for (const auto& fb : state.current) {
            if (entropy_of(fb) > 0.0) {
                eligible.push_back(fb);
            } else {
                log::warn("feedback " + std::to_string(fb.id) +
                          " has non-positive entropy; excluded from sampling");
            }
        }
        if (eligible.empty()) {
            throw DegenerateDistributionError(
                "no feedback with positive entropy at layer " + std::to_string(layer));
        }

        std::vector<double> entropies;
        entropies.reserve(eligible.size());
        for (const auto& fb : eligible) entropies.push_back(entropy_of(fb));
        std::vector<double> distribution = sampling_distribution(entropies);

        Rng rng(child_seed(config_.rng_seed, "conv_layer",
                           static_cast<std::uint64_t>(layer)));
        auto index_sets =
            sample_feedback_sets(eligible.size(), distribution, config_.kernel_width,
                                 config_.result_num, rng);

        std::vector<std::vector<Feedback>> sets;
        sets.reserve(index_sets.size());
        for (const auto& indices : index_sets) {
            std::vector<Feedback> set;
            for (size_t idx : indices) set.push_back(eligible[idx]);
            sets.push_back(std::move(set));
        }

        // Merge each set; ids are assigned in set order after collection.
        const int first_id = state.next_id;
        struct SetTask {
            const std::vector<Feedback>* set;
            int id;
        };
        std::vector<SetTask> tasks;
        tasks.reserve(sets.size());
        for (size_t i = 0; i < sets.size(); ++i) {
            tasks.push_back(SetTask{&sets[i], first_id + static_cast<int>(i)});
        }
        std::vector<Feedback> candidates =
            parallel_map(tasks, backend_.policy().parallelism_limit,
                         [&](const SetTask& task) {
                             return convolve_set(base_skeleton, *task.set, task.id);
                         });
        state.next_id = first_id + static_cast<int>(sets.size());

        auto scored = score_candidates(base_skeleton, std::move(candidates));
        auto score_events = drained_sorted(scorer_);
        std::vector<Feedback> layer_items;
        for (auto& item : scored) {
            trace_.push_back(TraceRow{"convolution", layer, item.fb.id,
                                      item.fb.applied_entropy->total});
            layer_items.push_back(std::move(item.fb));
        }

        state.current = select_top_k(layer_items, config_.top_k);
        state.completed_layer = layer;

        if (sink != nullptr) {
            LayerRecord record;
            record.layer = layer;
            record.items = layer_items;
            for (const auto& fb : state.current) record.survivor_ids.push_back(fb.id);
            record.next_id = state.next_id;
            record.score_events = std::move(score_events);
            sink->on_layer(record);
        }
    }

    // Final selection: survivors are sorted descending with ties to the
    // lower id, so the refined skeleton is the first survivor applied.
    const Feedback& best = state.current.front();
    return apply_feedback(base_skeleton, best);
}

std::string ConvolutionEngine::generate_refine_candidate(const SkeletonNode& skeleton,
                                                         int attempt, int attempts) {
    auto request = make_request(
        RequestTag::refine,
        prompts::render("self_refine",
                        {{"topic", options_.topic},
                         {"skeleton", serialize_tree(skeleton)},
                         {"attempt", std::to_string(attempt)},
                         {"attempts", std::to_string(attempts)}},
                        options_.prompts_dir));
    return text::trim(
        backend_.generate_extract(request, {{kFeedbackOpen, kFeedbackClose}})[0]);
}

SkeletonNode ConvolutionEngine::self_refine(const SkeletonNode& skeleton,
                                            ConvolutionSink* sink, int refine_from,
                                            int next_id) {
    SkeletonNode current = skeleton;
    for (int step = refine_from + 1; step <= config_.self_refine_steps; ++step) {
        std::vector<int> attempts(static_cast<size_t>(config_.best_of));
        std::iota(attempts.begin(), attempts.end(), 1);
        std::vector<std::string> texts = parallel_map(
            attempts, backend_.policy().parallelism_limit, [&](const int& attempt) {
                return generate_refine_candidate(current, attempt, config_.best_of);
            });

        std::vector<Feedback> candidates;
        candidates.reserve(texts.size());
        for (auto& fb_text : texts) {
            Feedback fb;
            fb.id = next_id++;
            fb.text = std::move(fb_text);
            fb.layer = 0;
            candidates.push_back(std::move(fb));
        }

        auto scored = score_candidates(current, std::move(candidates));

        // Argmax adoption is unconditional: the best candidate replaces the
        // current skeleton even when its entropy is lower.
        size_t best = 0;
        for (size_t i = 1; i < scored.size(); ++i) {
            double hi = scored[i].fb.applied_entropy->total;
            double hb = scored[best].fb.applied_entropy->total;
            if (hi > hb || (hi == hb && scored[i].fb.id < scored[best].fb.id)) best = i;
        }

        RefineRecord record;
        record.step = step;
        record.score_events = drained_sorted(scorer_);
        for (auto& item : scored) {
            trace_.push_back(TraceRow{"self_refine", step, item.fb.id,
                                      item.fb.applied_entropy->total});
            record.candidates.push_back(item.fb);
        }
        current = scored[best].applied;
        record.adopted_id = scored[best].fb.id;
        record.skeleton_after = serialize_tree(current);
        record.next_id = next_id;
        if (sink != nullptr) sink->on_refine_step(record);
    }
    return current;
}

}  // namespace surveyforge
