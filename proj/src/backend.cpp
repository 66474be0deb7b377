#include "surveyforge/backend.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include "surveyforge/errors.hpp"
#include "surveyforge/hashing.hpp"
#include "surveyforge/text.hpp"
#include "surveyforge/vendor_json.hpp"

namespace surveyforge {

namespace {

struct TagName {
    RequestTag tag;
    const char* name;
};

constexpr TagName kTagNames[] = {
    {RequestTag::init_skeleton, "init_skeleton"},
    {RequestTag::aggregate, "aggregate"},
    {RequestTag::digest, "digest"},
    {RequestTag::feedback_cluster, "feedback_cluster"},
    {RequestTag::convolve, "convolve"},
    {RequestTag::refine, "refine"},
    {RequestTag::score, "score"},
    {RequestTag::write_leaf, "write_leaf"},
    {RequestTag::write_nonleaf, "write_nonleaf"},
    {RequestTag::judge, "judge"},
};

}  // namespace

const char* to_string(RequestTag tag) {
    for (const auto& entry : kTagNames) {
        if (entry.tag == tag) return entry.name;
    }
    return "?";
}

std::optional<RequestTag> tag_from_string(std::string_view name) {
    for (const auto& entry : kTagNames) {
        if (name == entry.name) return entry.tag;
    }
    return std::nullopt;
}

double default_temperature(RequestTag tag) {
    return (tag == RequestTag::score || tag == RequestTag::judge) ? 0.0 : 1.0;
}

GenerationRequest make_request(RequestTag tag, std::string prompt) {
    GenerationRequest request;
    request.tag = tag;
    request.prompt = std::move(prompt);
    request.temperature = default_temperature(tag);
    return request;
}

ModelBackend::ModelBackend(BackendPolicy policy) : policy_(policy) {}

void ModelBackend::set_stage(std::string stage) {
    std::lock_guard<std::mutex> lock(mutex_);
    stage_ = std::move(stage);
}

std::string ModelBackend::stage() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return stage_;
}

std::vector<TranscriptEntry> ModelBackend::transcript() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return transcript_;
}

size_t ModelBackend::call_count(RequestTag tag) const {
    std::lock_guard<std::mutex> lock(mutex_);
    size_t n = 0;
    for (const auto& entry : transcript_) {
        if (entry.tag == tag) ++n;
    }
    return n;
}

size_t ModelBackend::call_count(const std::string& stage, RequestTag tag) const {
    std::lock_guard<std::mutex> lock(mutex_);
    size_t n = 0;
    for (const auto& entry : transcript_) {
        if (entry.stage == stage && entry.tag == tag) ++n;
    }
    return n;
}

size_t ModelBackend::total_calls() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return transcript_.size();
}

void ModelBackend::record(const GenerationRequest& request, const std::string& response) {
    std::lock_guard<std::mutex> lock(mutex_);
    transcript_.push_back(TranscriptEntry{stage_, request.tag, request.prompt, response});
}

std::string ModelBackend::generate(const GenerationRequest& request) {
    if (request.prompt.empty()) {
        throw ConfigError("generation request with empty prompt");
    }
    if (request.max_output_tokens <= 0) {
        throw ConfigError("generation request with non-positive max_output_tokens");
    }
    if (request.temperature < 0.0) {
        throw ConfigError("generation request with negative temperature");
    }
    const int attempts = policy_.max_retries + 1;
    std::string last_error;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0 && should_backoff()) {
            auto delay = policy_.backoff_initial * (1LL << (attempt - 1));
            std::this_thread::sleep_for(delay);
        }
        std::string response;
        try {
            response = generate_once(request);
        } catch (const BackendUnavailableError& e) {
            last_error = e.what();
            continue;
        }
        record(request, response);
        if (!response.empty()) return response;
        last_error = "empty response";
    }
    if (last_error == "empty response") {
        throw OutputRejectedError("empty response from backend after " +
                                  std::to_string(attempts) + " attempts (tag " +
                                  to_string(request.tag) + ")");
    }
    throw BackendUnavailableError("backend unavailable after " + std::to_string(attempts) +
                                  " attempts: " + last_error);
}

std::vector<std::string> ModelBackend::generate_extract(
    const GenerationRequest& request,
    const std::vector<std::pair<std::string, std::string>>& field_markers) {
    if (field_markers.empty()) {
        throw ConfigError("generate_extract requires at least one marker pair");
    }
    const int attempts = policy_.max_retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        std::string response = generate(request);
        std::vector<std::string> fields;
        fields.reserve(field_markers.size());
        size_t pos = 0;
        bool complete = true;
        for (const auto& [open, close] : field_markers) {
            auto span = text::find_span(response, open, close, pos);
            if (!span) {
                complete = false;
                break;
            }
            fields.emplace_back(response.substr(span->first, span->second - span->first));
            pos = span->second + close.size();
        }
        if (complete) return fields;
    }
    throw ExtractionFailedError("markers still absent after " + std::to_string(attempts) +
                                " generations (tag " + std::string(to_string(request.tag)) +
                                ")");
}

// ---------------------------------------------------------------------------
// MockBackend

namespace {

const std::string kBuiltinSkeleton =
    "# Survey\n"
    "**Digest Construction:**\n"
    "Collect the main methods, findings, and open problems from each paper.\n"
    "**Digest Analysis:**\n"
    "Synthesize the material into a coherent narrative (v{{hash}}).\n"
    "## Background\n"
    "**Digest Construction:**\n"
    "Extract definitions and foundational concepts.\n"
    "**Digest Analysis:**\n"
    "Group the papers by the concepts they introduce.\n"
    "## Methods\n"
    "**Digest Construction:**\n"
    "Extract the core technique and evaluation setup of each paper.\n"
    "**Digest Analysis:**\n"
    "Compare techniques and highlight trade-offs.\n";

std::map<RequestTag, std::string> make_builtin_defaults() {
    std::map<RequestTag, std::string> d;
    d[RequestTag::init_skeleton] = "<SKELETON>\n" + kBuiltinSkeleton + "</SKELETON>";
    d[RequestTag::aggregate] = "<SKELETON>\n" + kBuiltinSkeleton + "</SKELETON>";
    d[RequestTag::digest] =
        "<DIGEST>\n"
        "# Survey\n"
        "Key points contributed by this reference (v{{hash}}).\n"
        "## Background\n"
        "Definitions and context this reference provides.\n"
        "</DIGEST>\n"
        "<FEEDBACK>\n"
        "Consider contrasting evaluation protocols across papers (v{{hash}}).\n"
        "</FEEDBACK>";
    d[RequestTag::feedback_cluster] =
        "<FEEDBACK>\n"
        "Broaden the methods coverage and add cross-cutting comparisons "
        "(v{{hash}}).\n"
        "</FEEDBACK>";
    d[RequestTag::convolve] =
        "<FEEDBACK>\n"
        "Unified revision (v{{hash}}): merge overlapping suggestions and "
        "tighten section scopes.\n"
        "</FEEDBACK>";
    // `refine` serves both feedback generation and skeleton merging, so the
    // default carries both blocks; extraction picks whichever the caller asks
    // for.
    d[RequestTag::refine] =
        "<FEEDBACK>\n"
        "Reorganize subsections for better flow (v{{hash}}).\n"
        "</FEEDBACK>\n"
        "<SKELETON>\n" +
        kBuiltinSkeleton +
        "### Revision note v{{hash}}\n"
        "**Digest Analysis:**\n"
        "Track how this revision affects section balance.\n"
        "</SKELETON>";
    d[RequestTag::score] = "<SCORE>7</SCORE>";
    d[RequestTag::write_leaf] =
        "<CONTENT>\n"
        "This section reviews the collected material and summarizes common "
        "themes (v{{hash}}).\n"
        "</CONTENT>";
    d[RequestTag::write_nonleaf] =
        "<CONTENT>\n"
        "This chapter gives an overview of its subsections and draws the "
        "connections between them (v{{hash}}).\n"
        "</CONTENT>";
    // The judge tag covers support checks (Yes/No prefix), rubric scoring
    // (<SCORE> span), and claim extraction (numbered list); this default
    // satisfies the first two and yields zero claims for the third.
    d[RequestTag::judge] = "Yes\n<SCORE>3.5</SCORE>";
    return d;
}

const std::map<RequestTag, std::string>& builtin_defaults() {
    static const std::map<RequestTag, std::string> defaults = make_builtin_defaults();
    return defaults;
}

}  // namespace

MockBackend::MockBackend(BackendPolicy policy, MockScript script)
    : ModelBackend(policy), script_(std::move(script)) {}

std::string MockBackend::prompt_hash(std::string_view prompt) {
    return content_hash(prompt);
}

const std::string& MockBackend::builtin_default(RequestTag tag) {
    return builtin_defaults().at(tag);
}

MockScript MockBackend::load_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open mock script: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("mock script is not valid JSON: " + std::string(e.what()));
    }
    MockScript script;
    const nlohmann::json defaults = j.value("defaults", nlohmann::json::object());
    for (const auto& [tag, tmpl] : defaults.items()) {
        if (!tag_from_string(tag)) throw ConfigError("mock script: unknown tag " + tag);
        script.defaults[tag] = tmpl.get<std::string>();
    }
    const nlohmann::json by_hash = j.value("by_hash", nlohmann::json::object());
    for (const auto& [tag, table] : by_hash.items()) {
        if (!tag_from_string(tag)) throw ConfigError("mock script: unknown tag " + tag);
        for (const auto& [hash, tmpl] : table.items()) {
            script.by_hash[tag][hash] = tmpl.get<std::string>();
        }
    }
    return script;
}

std::string MockBackend::generate_once(const GenerationRequest& request) {
    const std::string tag = to_string(request.tag);
    const std::string hash = prompt_hash(request.prompt);
    const std::string* tmpl = nullptr;
    if (auto table = script_.by_hash.find(tag); table != script_.by_hash.end()) {
        if (auto hit = table->second.find(hash); hit != table->second.end()) {
            tmpl = &hit->second;
        }
    }
    if (tmpl == nullptr) {
        if (auto hit = script_.defaults.find(tag); hit != script_.defaults.end()) {
            tmpl = &hit->second;
        }
    }
    if (tmpl == nullptr) {
        tmpl = &builtin_default(request.tag);
    }
    return text::render_template(*tmpl, {{"hash", hash}, {"tag", tag}});
}

CallbackBackend::CallbackBackend(BackendPolicy policy, Fn fn)
    : ModelBackend(policy), fn_(std::move(fn)) {}

std::string CallbackBackend::generate_once(const GenerationRequest& request) {
    return fn_(request);
}

// ---------------------------------------------------------------------------
// HttpBackend

HttpBackend::HttpBackend(BackendPolicy policy, HttpBackendConfig config,
                         std::shared_ptr<HttpTransport> transport)
    : ModelBackend(policy), config_(std::move(config)), transport_(std::move(transport)) {
    if (config_.endpoint.empty()) {
        throw ConfigError("http backend requires an endpoint URL");
    }
    if (!transport_) transport_ = make_default_transport();
}

std::string HttpBackend::generate_once(const GenerationRequest& request) {
    nlohmann::json body;
    if (!config_.model.empty()) body["model"] = config_.model;
    body["messages"] = nlohmann::json::array(
        {nlohmann::json{{"role", "user"}, {"content", request.prompt}}});
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_output_tokens;
    if (!request.stop_markers.empty()) body["stop"] = request.stop_markers;

    std::vector<std::pair<std::string, std::string>> headers;
    headers.emplace_back("Content-Type", "application/json");
    if (!config_.api_key.empty()) {
        headers.emplace_back("Authorization", "Bearer " + config_.api_key);
    }

    HttpResponse response = transport_->post(config_.endpoint, headers, body.dump());
    if (!response.transport_error.empty()) {
        throw BackendUnavailableError("transport error: " + response.transport_error);
    }
    if (response.status != 200) {
        throw BackendUnavailableError("endpoint returned status " +
                                      std::to_string(response.status));
    }
    try {
        nlohmann::json j = nlohmann::json::parse(response.body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendUnavailableError("malformed completion response: " +
                                      std::string(e.what()));
    }
}

}  // namespace surveyforge
