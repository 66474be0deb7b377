#include "surveyforge/config.hpp"

#include <fstream>
#include <sstream>

#include "surveyforge/errors.hpp"
#include "surveyforge/text.hpp"

namespace surveyforge {

void PipelineConfig::validate() const {
    if (backend.mode != "mock" && backend.mode != "http") {
        throw ConfigError("backend.mode must be 'mock' or 'http', got '" + backend.mode +
                          "'");
    }
    if (backend.mode == "http" && backend.endpoint.empty()) {
        throw ConfigError("backend.mode = http requires backend.endpoint");
    }
    if (backend.max_retries < 0) throw ConfigError("backend.max_retries must be >= 0");
    if (backend.backoff_ms < 0) throw ConfigError("backend.backoff_ms must be >= 0");
    if (backend.parallelism < 1) throw ConfigError("backend.parallelism must be >= 1");
    if (cluster_token_budget < 1) throw ConfigError("cluster_token_budget must be >= 1");
    if (score_samples < 1) throw ConfigError("score_samples must be >= 1");
    if (dedup_batch_size < 2) throw ConfigError("dedup_batch_size must be >= 2");
    if (max_digest_failure_fraction < 0.0 || max_digest_failure_fraction > 1.0) {
        throw ConfigError("max_digest_failure_fraction must be within [0,1]");
    }
    convolution.validate();
}

bool operator==(const BackendSettings& a, const BackendSettings& b) {
    return a.mode == b.mode && a.endpoint == b.endpoint && a.model == b.model &&
           a.mock_script == b.mock_script && a.max_retries == b.max_retries &&
           a.backoff_ms == b.backoff_ms && a.parallelism == b.parallelism;
}

bool operator==(const EvalToggles& a, const EvalToggles& b) {
    return a.run_after_write == b.run_after_write && a.structure == b.structure &&
           a.faithfulness == b.faithfulness && a.relevance == b.relevance &&
           a.language == b.language && a.criticalness == b.criticalness &&
           a.claims == b.claims && a.references == b.references;
}

bool operator==(const ConvolutionConfig& a, const ConvolutionConfig& b) {
    return a.layers == b.layers && a.kernel_width == b.kernel_width &&
           a.result_num == b.result_num && a.top_k == b.top_k &&
           a.self_refine_steps == b.self_refine_steps && a.best_of == b.best_of &&
           a.rng_seed == b.rng_seed;
}

bool operator==(const PipelineConfig& a, const PipelineConfig& b) {
    return a.topic == b.topic && a.references_path == b.references_path &&
           a.run_dir == b.run_dir && a.backend == b.backend &&
           a.cluster_token_budget == b.cluster_token_budget &&
           a.convolution == b.convolution && a.rng_seed == b.rng_seed &&
           a.score_samples == b.score_samples &&
           a.apply_empty_shortcut == b.apply_empty_shortcut &&
           a.ref_window_tokens == b.ref_window_tokens &&
           a.support_window_tokens == b.support_window_tokens &&
           a.dedup_batch_size == b.dedup_batch_size &&
           a.max_digest_failure_fraction == b.max_digest_failure_fraction &&
           a.prompts_dir == b.prompts_dir && a.eval == b.eval;
}

namespace {

std::string bool_str(bool value) { return value ? "true" : "false"; }

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw ConfigError(key + " must be true or false, got '" + value + "'");
}

long long parse_int(const std::string& key, const std::string& value) {
    try {
        size_t consumed = 0;
        long long parsed = std::stoll(value, &consumed);
        if (consumed != value.size()) throw std::invalid_argument(value);
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError(key + " must be an integer, got '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        size_t consumed = 0;
        unsigned long long parsed = std::stoull(value, &consumed);
        if (consumed != value.size()) throw std::invalid_argument(value);
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError(key + " must be a non-negative integer, got '" + value + "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t consumed = 0;
        double parsed = std::stod(value, &consumed);
        if (consumed != value.size()) throw std::invalid_argument(value);
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError(key + " must be a number, got '" + value + "'");
    }
}

std::string format_double(double value) {
    std::ostringstream out;
    out << value;
    return out.str();
}

}  // namespace

std::string emit_config(const PipelineConfig& c) {
    std::ostringstream out;
    out << "# Pipeline configuration. Flat key = value lines; '#' starts a comment.\n";
    out << "topic = " << c.topic << "\n";
    out << "references_path = " << c.references_path << "\n";
    out << "run_dir = " << c.run_dir << "\n";
    out << "rng_seed = " << c.rng_seed << "\n";
    out << "prompts_dir = " << c.prompts_dir << "\n";
    out << "\n# Backend\n";
    out << "backend.mode = " << c.backend.mode << "\n";
    out << "backend.endpoint = " << c.backend.endpoint << "\n";
    out << "backend.model = " << c.backend.model << "\n";
    out << "backend.mock_script = " << c.backend.mock_script << "\n";
    out << "backend.max_retries = " << c.backend.max_retries << "\n";
    out << "backend.backoff_ms = " << c.backend.backoff_ms << "\n";
    out << "backend.parallelism = " << c.backend.parallelism << "\n";
    out << "\n# Initialization\n";
    out << "cluster_token_budget = " << c.cluster_token_budget << "\n";
    out << "ref_window_tokens = " << c.ref_window_tokens << "\n";
    out << "max_digest_failure_fraction = " << format_double(c.max_digest_failure_fraction)
        << "\n";
    out << "\n# Skeleton improvement\n";
    out << "convolution.layers = " << c.convolution.layers << "\n";
    out << "convolution.kernel_width = " << c.convolution.kernel_width << "\n";
    out << "convolution.result_num = " << c.convolution.result_num << "\n";
    out << "convolution.top_k = " << c.convolution.top_k << "\n";
    out << "convolution.self_refine_steps = " << c.convolution.self_refine_steps << "\n";
    out << "convolution.best_of = " << c.convolution.best_of << "\n";
    out << "score_samples = " << c.score_samples << "\n";
    out << "apply_empty_shortcut = " << bool_str(c.apply_empty_shortcut) << "\n";
    out << "\n# Evaluation\n";
    out << "support_window_tokens = " << c.support_window_tokens << "\n";
    out << "dedup_batch_size = " << c.dedup_batch_size << "\n";
    out << "eval.run_after_write = " << bool_str(c.eval.run_after_write) << "\n";
    out << "eval.structure = " << bool_str(c.eval.structure) << "\n";
    out << "eval.faithfulness = " << bool_str(c.eval.faithfulness) << "\n";
    out << "eval.relevance = " << bool_str(c.eval.relevance) << "\n";
    out << "eval.language = " << bool_str(c.eval.language) << "\n";
    out << "eval.criticalness = " << bool_str(c.eval.criticalness) << "\n";
    out << "eval.claims = " << bool_str(c.eval.claims) << "\n";
    out << "eval.references = " << bool_str(c.eval.references) << "\n";
    return out.str();
}

PipelineConfig parse_config_text(const std::string& content) {
    PipelineConfig c;
    size_t line_no = 0;
    for (const auto& raw : text::split_lines(content)) {
        ++line_no;
        std::string line = raw;
        if (size_t hash = line.find('#'); hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = text::trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              " is not 'key = value': " + raw);
        }
        std::string key = text::trim(line.substr(0, eq));
        std::string value = text::trim(line.substr(eq + 1));

        if (key == "topic") c.topic = value;
        else if (key == "references_path") c.references_path = value;
        else if (key == "run_dir") c.run_dir = value;
        else if (key == "rng_seed") c.rng_seed = parse_u64(key, value);
        else if (key == "prompts_dir") c.prompts_dir = value;
        else if (key == "backend.mode") c.backend.mode = value;
        else if (key == "backend.endpoint") c.backend.endpoint = value;
        else if (key == "backend.model") c.backend.model = value;
        else if (key == "backend.mock_script") c.backend.mock_script = value;
        else if (key == "backend.max_retries")
            c.backend.max_retries = static_cast<int>(parse_int(key, value));
        else if (key == "backend.backoff_ms")
            c.backend.backoff_ms = static_cast<int>(parse_int(key, value));
        else if (key == "backend.parallelism")
            c.backend.parallelism = static_cast<int>(parse_int(key, value));
        else if (key == "cluster_token_budget")
            c.cluster_token_budget = static_cast<std::size_t>(parse_u64(key, value));
        else if (key == "ref_window_tokens")
            c.ref_window_tokens = static_cast<std::size_t>(parse_u64(key, value));
        else if (key == "max_digest_failure_fraction")
            c.max_digest_failure_fraction = parse_double(key, value);
        else if (key == "convolution.layers")
            c.convolution.layers = static_cast<int>(parse_int(key, value));
        else if (key == "convolution.kernel_width")
            c.convolution.kernel_width = static_cast<int>(parse_int(key, value));
        else if (key == "convolution.result_num")
            c.convolution.result_num = static_cast<int>(parse_int(key, value));
        else if (key == "convolution.top_k")
            c.convolution.top_k = static_cast<int>(parse_int(key, value));
        else if (key == "convolution.self_refine_steps")
            c.convolution.self_refine_steps = static_cast<int>(parse_int(key, value));
        else if (key == "convolution.best_of")
            c.convolution.best_of = static_cast<int>(parse_int(key, value));
        else if (key == "score_samples")
            c.score_samples = static_cast<int>(parse_int(key, value));
        else if (key == "apply_empty_shortcut")
            c.apply_empty_shortcut = parse_bool(key, value);
        else if (key == "support_window_tokens")
            c.support_window_tokens = static_cast<std::size_t>(parse_u64(key, value));
        else if (key == "dedup_batch_size")
            c.dedup_batch_size = static_cast<int>(parse_int(key, value));
        else if (key == "eval.run_after_write")
            c.eval.run_after_write = parse_bool(key, value);
        else if (key == "eval.structure") c.eval.structure = parse_bool(key, value);
        else if (key == "eval.faithfulness") c.eval.faithfulness = parse_bool(key, value);
        else if (key == "eval.relevance") c.eval.relevance = parse_bool(key, value);
        else if (key == "eval.language") c.eval.language = parse_bool(key, value);
        else if (key == "eval.criticalness")
            c.eval.criticalness = parse_bool(key, value);
        else if (key == "eval.claims") c.eval.claims = parse_bool(key, value);
        else if (key == "eval.references") c.eval.references = parse_bool(key, value);
        else
            throw ConfigError("unknown config key '" + key + "' (line " +
                              std::to_string(line_no) + ")");
    }
    // rng_seed mirrors into the convolution block, which owns the sampling.
    c.convolution.rng_seed = c.rng_seed;
    c.validate();
    return c;
}

PipelineConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

}  // namespace surveyforge
