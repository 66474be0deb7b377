#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "surveyforge/convolution.hpp"
#include "surveyforge/eval.hpp"

namespace surveyforge {

struct BackendSettings {
    std::string mode = "mock";  // "mock" | "http"
    std::string endpoint;
    std::string model;
    std::string mock_script;  // path, empty = built-in defaults only
    int max_retries = 2;
    int backoff_ms = 250;
    int parallelism = 4;
};

struct EvalToggles {
    bool run_after_write = false;
    bool structure = true;
    bool faithfulness = true;
    bool relevance = true;
    bool language = true;
    bool criticalness = true;
    bool claims = true;
    bool references = true;
};

// Every knob of a run. Defaults for the convolution block are the reference
// operating point: layers 6, kernel 3, result_num 10, top_k 6, refine 3x3.
struct PipelineConfig {
    std::string topic;
    std::string references_path;
    std::string run_dir;
    BackendSettings backend;
    std::size_t cluster_token_budget = 40000;
    ConvolutionConfig convolution;
    std::uint64_t rng_seed = 0;
    int score_samples = 1;
    bool apply_empty_shortcut = true;
    std::size_t ref_window_tokens = 100000;
    std::size_t support_window_tokens = 100000;
    int dedup_batch_size = 300;
    double max_digest_failure_fraction = 0.10;
    std::string prompts_dir;
    EvalToggles eval;

    void validate() const;  // throws ConfigError
};

bool operator==(const BackendSettings& a, const BackendSettings& b);
bool operator==(const EvalToggles& a, const EvalToggles& b);
bool operator==(const ConvolutionConfig& a, const ConvolutionConfig& b);
bool operator==(const PipelineConfig& a, const PipelineConfig& b);

// Flat "key = value" text with '#' comments; emit_config writes every key
// so defaults are visible and versioned, and parse(emit(c)) == c.
std::string emit_config(const PipelineConfig& config);
PipelineConfig parse_config_text(const std::string& content);
PipelineConfig load_config_file(const std::filesystem::path& path);

}  // namespace surveyforge
