#include "surveyforge/entropy_scorer.hpp"

#include <cmath>

#include "surveyforge/errors.hpp"
#include "surveyforge/hashing.hpp"
#include "surveyforge/logging.hpp"
#include "surveyforge/prompts.hpp"
#include "surveyforge/text.hpp"

namespace surveyforge {

namespace {

// Heading lines only, for the title-structure judge.
std::string outline_of(const SkeletonNode& root) {
    std::string out;
    walk(root, [&](const SkeletonNode& node) {
        out.append(static_cast<size_t>(node.level), '#');
        out += ' ';
        out += node.title;
        out += '\n';
    });
    return out;
}

double parse_score(const std::string& span) {
    std::string value = text::trim(span);
    if (value.empty()) throw ScoreOutOfRangeError("empty score span");
    size_t consumed = 0;
    double parsed = 0.0;
    try {
        parsed = std::stod(value, &consumed);
    } catch (const std::exception&) {
        throw ScoreOutOfRangeError("unparseable score: " + value);
    }
    if (consumed != value.size() || !std::isfinite(parsed)) {
        throw ScoreOutOfRangeError("unparseable score: " + value);
    }
    return parsed;
}

}  // namespace

EntropyScorer::EntropyScorer(ModelBackend& backend, ScorerOptions options)
    : backend_(backend), options_(std::move(options)) {
    if (options_.score_samples < 1) {
        throw ConfigError("score_samples must be at least 1");
    }
}

double EntropyScorer::judge_component(const std::string& prompt_name,
                                      const std::string& payload,
                                      const std::string& skeleton_hash,
                                      const std::string& component,
                                      std::vector<ScoreEvent>& events) {
    const std::string payload_key = prompt_name == "score_structure" ? "outline" : "skeleton";
    double sum = 0.0;
    for (int sample = 0; sample < options_.score_samples; ++sample) {
        std::string prompt = prompts::render(
            prompt_name, {{"topic", options_.topic}, {payload_key, payload}},
            options_.prompts_dir);
        if (options_.score_samples > 1) {
            // Distinct prompts per sample so repeated judging is not a no-op.
            prompt += "\n(sample " + std::to_string(sample + 1) + " of " +
                      std::to_string(options_.score_samples) + ")";
        }
        auto request = make_request(RequestTag::score, std::move(prompt));

        const int attempts = backend_.policy().max_retries + 1;
        std::string last_error;
        bool ok = false;
        for (int attempt = 0; attempt < attempts && !ok; ++attempt) {
            std::string span =
                backend_.generate_extract(request, {{"<SCORE>", "</SCORE>"}})[0];
            try {
                double value = parse_score(span);
                if (value < 0.0 || value > 10.0) {
                    throw ScoreOutOfRangeError("judge score " + std::to_string(value) +
                                               " outside [0,10]");
                }
                events.push_back(ScoreEvent{skeleton_hash, component, span, value});
                sum += value;
                ok = true;
            } catch (const ScoreOutOfRangeError& e) {
                last_error = e.what();
                log::warn("score rejected (attempt " + std::to_string(attempt + 1) +
                          "): " + last_error);
            }
        }
        if (!ok) {
            throw ScoreOutOfRangeError(component + " judge failed after " +
                                       std::to_string(attempts) + " attempts: " +
                                       last_error);
        }
    }
    return sum / options_.score_samples;
}

EntropyScore EntropyScorer::score(const SkeletonNode& skeleton) {
    const std::string serialized = serialize_tree(skeleton);
    const std::uint64_t key = fnv1a64(serialized);
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }

    const std::string hash = hash_hex(key);
    std::vector<ScoreEvent> events;
    EntropyScore score;
    score.structure_score =
        judge_component("score_structure", outline_of(skeleton), hash, "structure", events);
    score.description_score =
        judge_component("score_description", serialized, hash, "description", events);
    score.total = score.structure_score + score.description_score;

    std::lock_guard<std::mutex> lock(mutex_);
    auto [it, inserted] = cache_.emplace(key, score);
    if (!inserted) {
        // A concurrent first-score won the race; both computations must agree.
        if (std::abs(it->second.total - score.total) > 1e-9) {
            log::error("conflicting concurrent scores for skeleton " + hash);
        }
        return it->second;
    }
    for (auto& event : events) events_.push_back(std::move(event));
    return score;
}

std::vector<ScoreEvent> EntropyScorer::drain_events() {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<ScoreEvent> out;
    out.swap(events_);
    return out;
}

size_t EntropyScorer::cache_size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return cache_.size();
}

std::vector<double> normalize_scores(const std::vector<double>& scores) {
    if (scores.empty()) return {};
    double lo = scores[0];
    double hi = scores[0];
    for (double s : scores) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    std::vector<double> out;
    out.reserve(scores.size());
    if (hi == lo) {
        out.assign(scores.size(), 0.5);
        return out;
    }
    for (double s : scores) out.push_back((s - lo) / (hi - lo));
    return out;
}

}  // namespace surveyforge
