#include <atomic>

#include "doctest.h"
#include "support/test_util.hpp"
#include "surveyforge/backend.hpp"
#include "surveyforge/errors.hpp"
#include "surveyforge/vendor_json.hpp"

using namespace surveyforge;

namespace {

// Independent substring-scan oracle for marker extraction.
std::vector<std::string> scan_oracle(const std::string& text,
                                     const std::vector<std::pair<std::string, std::string>>& markers) {
    std::vector<std::string> out;
    size_t pos = 0;
    for (const auto& [open, close] : markers) {
        size_t a = text.find(open, pos);
        size_t b = text.find(close, a + open.size());
        out.push_back(text.substr(a + open.size(), b - (a + open.size())));
        pos = b + close.size();
    }
    return out;
}

}  // namespace

TEST_CASE("mock script lookup: hash entry, then default, then builtin") {
    MockScript script;
    script.defaults["score"] = "<SCORE>9</SCORE>";
    GenerationRequest req = make_request(RequestTag::score, "judge this outline");
    script.by_hash["score"][MockBackend::prompt_hash("judge this outline")] =
        "<SCORE>3</SCORE>";

    MockBackend backend(sftest::fast_policy(), script);
    CHECK(backend.generate(req) == "<SCORE>3</SCORE>");
    CHECK(backend.generate(make_request(RequestTag::score, "other prompt")) ==
          "<SCORE>9</SCORE>");

    MockBackend bare(sftest::fast_policy());
    CHECK(bare.generate(make_request(RequestTag::judge, "anything")) ==
          "Yes\n<SCORE>3.5</SCORE>");
}

TEST_CASE("mock determinism: identical requests give byte-identical output") {
    MockBackend a(sftest::fast_policy());
    MockBackend b(sftest::fast_policy());
    for (RequestTag tag : {RequestTag::init_skeleton, RequestTag::digest,
                           RequestTag::convolve, RequestTag::refine}) {
        GenerationRequest req = make_request(tag, "prompt body");
        std::string first = a.generate(req);
        CHECK(first == a.generate(req));
        CHECK(first == b.generate(req));
    }
}

TEST_CASE("template placeholders expand to the prompt hash") {
    MockScript script;
    script.defaults["digest"] = "tag={{tag}} hash={{hash}}";
    MockBackend backend(sftest::fast_policy(), script);
    GenerationRequest req = make_request(RequestTag::digest, "p1");
    CHECK(backend.generate(req) ==
          "tag=digest hash=" + MockBackend::prompt_hash("p1"));
    // Distinct prompts produce distinct outputs.
    CHECK(backend.generate(req) !=
          backend.generate(make_request(RequestTag::digest, "p2")));
}

TEST_CASE("unreachable endpoint fails after max_retries + 1 attempts") {
    struct CountingTransport : HttpTransport {
        std::atomic<int> attempts{0};
        HttpResponse post(const std::string&,
                          const std::vector<std::pair<std::string, std::string>>&,
                          const std::string&) override {
            ++attempts;
            HttpResponse r;
            r.transport_error = "connection refused";
            return r;
        }
    };
    auto transport = std::make_shared<CountingTransport>();
    HttpBackend backend(sftest::fast_policy(/*max_retries=*/2),
                        HttpBackendConfig{"http://unreachable.invalid/v1/chat", "m", ""},
                        transport);
    CHECK_THROWS_AS(backend.generate(make_request(RequestTag::judge, "q")),
                    BackendUnavailableError);
    CHECK(transport->attempts.load() == 3);
}

TEST_CASE("http backend parses a chat-completions response") {
    struct FakeTransport : HttpTransport {
        std::string last_body;
        HttpResponse post(const std::string&,
                          const std::vector<std::pair<std::string, std::string>>&,
                          const std::string& body) override {
            last_body = body;
            nlohmann::json reply{
                {"choices",
                 {{{"message", {{"role", "assistant"}, {"content", "hello there"}}}}}}};
            return HttpResponse{200, reply.dump(), ""};
        }
    };
    auto transport = std::make_shared<FakeTransport>();
    HttpBackend backend(sftest::fast_policy(),
                        HttpBackendConfig{"http://host/v1/chat", "model-x", "secret"},
                        transport);
    GenerationRequest req = make_request(RequestTag::write_leaf, "write it");
    req.stop_markers = {"STOP"};
    CHECK(backend.generate(req) == "hello there");

    nlohmann::json sent = nlohmann::json::parse(transport->last_body);
    CHECK(sent["model"] == "model-x");
    CHECK(sent["messages"][0]["content"] == "write it");
    CHECK(sent["stop"][0] == "STOP");
}

TEST_CASE("non-200 statuses are retried then surfaced as unavailable") {
    struct FlakyTransport : HttpTransport {
        int attempts = 0;
        HttpResponse post(const std::string&,
                          const std::vector<std::pair<std::string, std::string>>&,
                          const std::string&) override {
            ++attempts;
            if (attempts < 2) return HttpResponse{503, "busy", ""};
            nlohmann::json reply{
                {"choices", {{{"message", {{"content", "recovered"}}}}}}};
            return HttpResponse{200, reply.dump(), ""};
        }
    };
    auto transport = std::make_shared<FlakyTransport>();
    HttpBackend backend(sftest::fast_policy(),
                        HttpBackendConfig{"http://host/v1/chat", "", ""}, transport);
    CHECK(backend.generate(make_request(RequestTag::judge, "q")) == "recovered");
    CHECK(transport->attempts == 2);
}

TEST_CASE("generate_extract pulls marked spans in order") {
    MockScript script;
    script.defaults["score"] = "noise <SCORE>23</SCORE> trailing";
    MockBackend backend(sftest::fast_policy(), script);
    auto fields = backend.generate_extract(make_request(RequestTag::score, "s"),
                                           {{"<SCORE>", "</SCORE>"}});
    REQUIRE(fields.size() == 1);
    CHECK(fields[0] == "23");
}

TEST_CASE("generate_extract with two marker pairs matches the scan oracle") {
    const std::string payload =
        "prefix <DIGEST>\ndigest body\n</DIGEST> middle <FEEDBACK>fb</FEEDBACK> end";
    MockScript script;
    script.defaults["digest"] = payload;
    MockBackend backend(sftest::fast_policy(), script);
    std::vector<std::pair<std::string, std::string>> markers{
        {"<DIGEST>", "</DIGEST>"}, {"<FEEDBACK>", "</FEEDBACK>"}};
    auto fields =
        backend.generate_extract(make_request(RequestTag::digest, "d"), markers);
    CHECK(fields == scan_oracle(payload, markers));
}

TEST_CASE("missing markers exhaust retries then fail") {
    std::atomic<int> calls{0};
    CallbackBackend backend(sftest::fast_policy(/*max_retries=*/2),
                            [&](const GenerationRequest&) {
                                ++calls;
                                return "no markers here";
                            });
    CHECK_THROWS_AS(backend.generate_extract(make_request(RequestTag::score, "s"),
                                             {{"<SCORE>", "</SCORE>"}}),
                    ExtractionFailedError);
    CHECK(calls.load() == 3);
}

TEST_CASE("empty responses are rejected after the retry budget") {
    std::atomic<int> calls{0};
    CallbackBackend backend(sftest::fast_policy(/*max_retries=*/1),
                            [&](const GenerationRequest&) {
                                ++calls;
                                return std::string();
                            });
    CHECK_THROWS_AS(backend.generate(make_request(RequestTag::judge, "q")),
                    OutputRejectedError);
    CHECK(calls.load() == 2);
}

TEST_CASE("transcript records stage and tag") {
    MockBackend backend(sftest::fast_policy());
    backend.set_stage("init");
    backend.generate(make_request(RequestTag::init_skeleton, "a"));
    backend.set_stage("digests");
    backend.generate(make_request(RequestTag::digest, "b"));
    backend.generate(make_request(RequestTag::digest, "c"));

    CHECK(backend.total_calls() == 3);
    CHECK(backend.call_count(RequestTag::digest) == 2);
    CHECK(backend.call_count("digests", RequestTag::digest) == 2);
    CHECK(backend.call_count("init", RequestTag::init_skeleton) == 1);
    CHECK(backend.call_count("init", RequestTag::digest) == 0);
    auto transcript = backend.transcript();
    REQUIRE(transcript.size() == 3);
    CHECK(transcript[0].stage == "init");
    CHECK(transcript[1].prompt == "b");
    CHECK(transcript[2].stage == "digests");
}

TEST_CASE("default temperatures: stable judging, diverse generation") {
    CHECK(default_temperature(RequestTag::score) == 0.0);
    CHECK(default_temperature(RequestTag::judge) == 0.0);
    CHECK(default_temperature(RequestTag::convolve) == 1.0);
    CHECK(make_request(RequestTag::score, "x").temperature == 0.0);
}

TEST_CASE("script files load and reject unknown tags") {
    sftest::TempDir tmp("mockscript");
    auto path = tmp.path() / "script.json";
    sftest::write_file(path, R"({
      "defaults": {"score": "<SCORE>4</SCORE>"},
      "by_hash": {"judge": {"deadbeefdeadbeef": "No"}}
    })");
    MockScript script = MockBackend::load_script(path);
    CHECK(script.defaults.at("score") == "<SCORE>4</SCORE>");
    CHECK(script.by_hash.at("judge").count("deadbeefdeadbeef") == 1);

    sftest::write_file(path, R"({"defaults": {"bogus_tag": "x"}})");
    CHECK_THROWS_AS(MockBackend::load_script(path), ConfigError);
}
