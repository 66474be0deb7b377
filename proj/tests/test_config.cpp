#include "doctest.h"
#include "support/test_util.hpp"
#include "surveyforge/config.hpp"
#include "surveyforge/errors.hpp"

using namespace surveyforge;

TEST_CASE("defaults match the reference operating point") {
    PipelineConfig c;
    CHECK(c.convolution.layers == 6);
    CHECK(c.convolution.kernel_width == 3);
    CHECK(c.convolution.result_num == 10);
    CHECK(c.convolution.top_k == 6);
    CHECK(c.convolution.self_refine_steps == 3);
    CHECK(c.convolution.best_of == 3);
    CHECK(c.cluster_token_budget == 40000);
    CHECK(c.score_samples == 1);
    CHECK(c.dedup_batch_size == 300);
    CHECK(c.backend.mode == "mock");
    CHECK_FALSE(c.eval.run_after_write);
}

TEST_CASE("config defaults round-trip through the text format unchanged") {
    PipelineConfig defaults;
    std::string text = emit_config(defaults);
    PipelineConfig parsed = parse_config_text(text);
    CHECK(parsed == defaults);
    // Emission is stable.
    CHECK(emit_config(parsed) == text);
}

TEST_CASE("non-default values survive the round trip") {
    PipelineConfig c;
    c.topic = "test-time scaling";
    c.references_path = "/data/refs.jsonl";
    c.run_dir = "/runs/demo";
    c.rng_seed = 42;
    c.backend.mode = "http";
    c.backend.endpoint = "https://api.example.com/v1/chat/completions";
    c.backend.model = "some-model";
    c.backend.parallelism = 8;
    c.convolution.layers = 2;
    c.convolution.kernel_width = 2;
    c.convolution.result_num = 3;
    c.convolution.top_k = 2;
    c.convolution.self_refine_steps = 2;
    c.convolution.best_of = 2;
    c.convolution.rng_seed = 42;
    c.eval.run_after_write = true;
    c.eval.language = false;
    c.max_digest_failure_fraction = 0.25;

    PipelineConfig parsed = parse_config_text(emit_config(c));
    CHECK(parsed == c);
}

TEST_CASE("validation rejects inconsistent settings") {
    {
        PipelineConfig c;
        c.convolution.top_k = 11;  // > result_num 10
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
    {
        PipelineConfig c;
        c.backend.mode = "http";  // endpoint missing
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
    {
        PipelineConfig c;
        c.backend.mode = "carrier-pigeon";
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
    {
        PipelineConfig c;
        c.dedup_batch_size = 1;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
    {
        PipelineConfig c;
        c.convolution.layers = 0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
}

TEST_CASE("parser rejects malformed lines, unknown keys, and bad values") {
    CHECK_THROWS_AS(parse_config_text("mystery_key = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("convolution.layers\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("convolution.layers = six\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("eval.claims = yep\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("convolution.top_k = 99\n"), ConfigError);
}

TEST_CASE("comments and blank lines are ignored") {
    PipelineConfig parsed = parse_config_text(
        "# a comment\n"
        "\n"
        "topic = quantum widgets  # trailing comment\n"
        "rng_seed = 7\n");
    CHECK(parsed.topic == "quantum widgets");
    CHECK(parsed.rng_seed == 7);
    // The master seed propagates into the sampling config.
    CHECK(parsed.convolution.rng_seed == 7);
}

TEST_CASE("config files load from disk") {
    sftest::TempDir tmp("config");
    auto path = tmp.path() / "cfg.txt";
    sftest::write_file(path, emit_config(PipelineConfig{}));
    PipelineConfig loaded = load_config_file(path);
    CHECK(loaded == PipelineConfig{});
    CHECK_THROWS_AS(load_config_file(tmp.path() / "missing.txt"), ConfigError);
}
