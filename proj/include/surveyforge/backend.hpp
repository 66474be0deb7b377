#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace surveyforge {

// Pipeline stage issuing a request; drives mock script lookup, caching and
// transcript accounting.
enum class RequestTag {
    init_skeleton,
    aggregate,
    digest,
    feedback_cluster,
    convolve,
    refine,
    score,
    write_leaf,
    write_nonleaf,
    judge,
};

const char* to_string(RequestTag tag);
std::optional<RequestTag> tag_from_string(std::string_view name);

// Temperature defaults: judge/score tags need stability, generation tags
// need diversity for best-of-N.
double default_temperature(RequestTag tag);

struct GenerationRequest {
    std::string prompt;
    int max_output_tokens = 8192;
    double temperature = 1.0;
    std::vector<std::string> stop_markers;
    RequestTag tag = RequestTag::judge;
};

GenerationRequest make_request(RequestTag tag, std::string prompt);

struct BackendPolicy {
    int max_retries = 2;                              // extra attempts after the first
    std::chrono::milliseconds backoff_initial{250};   // doubles per retry
    int parallelism_limit = 4;
};

struct TranscriptEntry {
    std::string stage;  // orchestrator stage label active at call time
    RequestTag tag = RequestTag::judge;
    std::string prompt;
    std::string response;
};

// Uniform text-generation interface. generate() owns the retry loop; no
// other module performs network I/O.
class ModelBackend {
public:
    explicit ModelBackend(BackendPolicy policy);
    virtual ~ModelBackend() = default;

    // Runs up to policy.max_retries + 1 attempts. Throws
    // BackendUnavailable when every attempt failed in transport and
    // OutputRejected when the final response is empty.
    std::string generate(const GenerationRequest& request);

    // generate() plus span extraction for each (open, close) marker pair;
    // regenerates up to max_retries times while any marker is missing, then
    // throws ExtractionFailed.
    std::vector<std::string> generate_extract(
        const GenerationRequest& request,
        const std::vector<std::pair<std::string, std::string>>& field_markers);

    const BackendPolicy& policy() const { return policy_; }

    // Stage label recorded into transcript entries; stages run sequentially
    // so a plain setter is sufficient.
    void set_stage(std::string stage);
    std::string stage() const;

    std::vector<TranscriptEntry> transcript() const;
    size_t call_count(RequestTag tag) const;
    size_t call_count(const std::string& stage, RequestTag tag) const;
    size_t total_calls() const;

protected:
    // One attempt. Implementations signal transient failure with
    // BackendUnavailable and must not record transcripts themselves.
    virtual std::string generate_once(const GenerationRequest& request) = 0;

    // Live transports sleep between retries; the mock does not.
    virtual bool should_backoff() const { return false; }

private:
    void record(const GenerationRequest& request, const std::string& response);

    BackendPolicy policy_;
    mutable std::mutex mutex_;
    std::string stage_;
    std::vector<TranscriptEntry> transcript_;
};

// ---------------------------------------------------------------------------
// Deterministic scripted backend.
//
// Responses are a pure function of (tag, fnv1a64(prompt)): an exact
// hash-keyed entry wins, then the script's per-tag default, then a built-in
// per-tag fallback that keeps toy pipelines runnable. Templates may use
// {{hash}} (hex prompt hash) and {{tag}}.
struct MockScript {
    std::map<std::string, std::string> defaults;                      // tag -> template
    std::map<std::string, std::map<std::string, std::string>> by_hash;  // tag -> hash -> template
};

class MockBackend : public ModelBackend {
public:
    explicit MockBackend(BackendPolicy policy, MockScript script = {});

    // JSON file: {"defaults": {tag: template}, "by_hash": {tag: {hash: template}}}
    static MockScript load_script(const std::filesystem::path& path);

    static const std::string& builtin_default(RequestTag tag);
    static std::string prompt_hash(std::string_view prompt);

protected:
    std::string generate_once(const GenerationRequest& request) override;

private:
    MockScript script_;
};

// Test/bench backend delegating to a caller-supplied function.
class CallbackBackend : public ModelBackend {
public:
    using Fn = std::function<std::string(const GenerationRequest&)>;
    CallbackBackend(BackendPolicy policy, Fn fn);

protected:
    std::string generate_once(const GenerationRequest& request) override;

private:
    Fn fn_;
};

// ---------------------------------------------------------------------------
// Live chat-completions backend.

struct HttpResponse {
    int status = 0;
    std::string body;
    std::string transport_error;  // non-empty when the request never completed
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const std::string& url,
                              const std::vector<std::pair<std::string, std::string>>& headers,
                              const std::string& body) = 0;
};

std::shared_ptr<HttpTransport> make_default_transport();

struct HttpBackendConfig {
    std::string endpoint;  // full URL of the chat-completions route
    std::string model;
    std::string api_key;  // callers read MODEL_API_KEY from the environment
};

class HttpBackend : public ModelBackend {
public:
    HttpBackend(BackendPolicy policy, HttpBackendConfig config,
                std::shared_ptr<HttpTransport> transport = nullptr);

protected:
    std::string generate_once(const GenerationRequest& request) override;
    bool should_backoff() const override { return true; }

private:
    HttpBackendConfig config_;
    std::shared_ptr<HttpTransport> transport_;
};

}  // namespace surveyforge
