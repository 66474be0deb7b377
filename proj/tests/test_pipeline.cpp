#include <fstream>

#include "doctest.h"
#include "support/test_util.hpp"
#include "surveyforge/errors.hpp"
#include "surveyforge/pipeline.hpp"
#include "surveyforge/survey_tree.hpp"

using namespace surveyforge;

namespace {

// Eight references of 100 tokens each; a 400-token budget gives 2 clusters.
std::string toy_refs_jsonl(int count = 8) {
    std::string out;
    for (int i = 0; i < count; ++i) {
        nlohmann::json j{
            {"bibkey", "ref" + std::to_string(i)},
            {"title", "Toy reference " + std::to_string(i)},
            {"abstract", "Short abstract " + std::to_string(i)},
            {"txt", std::string(400, static_cast<char>('a' + (i % 26)))},
        };
        out += j.dump() + "\n";
    }
    return out;
}

PipelineConfig toy_config(const std::filesystem::path& dir) {
    PipelineConfig c;
    c.topic = "toy survey topic";
    c.references_path = (dir / "refs.jsonl").string();
    c.run_dir = (dir / "run").string();
    c.cluster_token_budget = 400;
    c.convolution.layers = 2;
    c.convolution.kernel_width = 2;
    c.convolution.result_num = 3;
    c.convolution.top_k = 2;
    c.convolution.self_refine_steps = 2;
    c.convolution.best_of = 2;
    c.rng_seed = 42;
    return c;
}

}  // namespace

TEST_CASE("toy run completes with every stage artifact present") {
    sftest::TempDir tmp("pipe_toy");
    sftest::write_file(tmp.path() / "refs.jsonl", toy_refs_jsonl());

    Pipeline pipeline(toy_config(tmp.path()));
    RunState state = pipeline.run();
    CHECK(state.stage == Stage::done);

    for (const char* artifact :
         {"config.txt", "clusters.json", "skeleton_initial.md", "digests/manifest.json",
          "layers/layer_0.json", "layers/layer_1.json", "layers/layer_2.json",
          "skeleton_refined.md", "refine/step_1.json", "refine/step_2.json",
          "skeleton_final.md", "entropy_trace.csv", "score_log.jsonl",
          "digests_final/manifest.json", "survey.md", "bibliography.json", "state.json"}) {
        CHECK_MESSAGE(std::filesystem::exists(tmp.path() / "run" / artifact),
                      "missing artifact: " << artifact);
    }

    // clusters: 8 refs x 100 tokens at budget 400 = 2 clusters of 4.
    nlohmann::json clusters =
        nlohmann::json::parse(sftest::read_file(tmp.path() / "run" / "clusters.json"));
    REQUIRE(clusters.size() == 2);
    CHECK(clusters[0]["members"].size() == 4);

    // The survey document mirrors the final skeleton's headings.
    SkeletonNode final_tree =
        parse_tree(sftest::read_file(tmp.path() / "run" / "skeleton_final.md"));
    SkeletonNode survey_tree =
        parse_tree(sftest::read_file(tmp.path() / "run" / "survey.md"));
    std::vector<std::pair<int, std::string>> expected;
    walk(final_tree,
         [&](const SkeletonNode& n) { expected.emplace_back(n.level, n.title); });
    std::vector<std::pair<int, std::string>> actual;
    walk(survey_tree,
         [&](const SkeletonNode& n) { actual.emplace_back(n.level, n.title); });
    CHECK(expected == actual);

    // Stage-tagged call budget for initialization: J local + 1 aggregate.
    CHECK(pipeline.backend().call_count("init", RequestTag::init_skeleton) == 2);
    CHECK(pipeline.backend().call_count("init", RequestTag::aggregate) == 1);
    CHECK(pipeline.backend().call_count("digests", RequestTag::digest) == 8);
    CHECK(pipeline.backend().call_count("digests2", RequestTag::digest) == 8);
    CHECK(pipeline.backend().call_count("convolution", RequestTag::feedback_cluster) == 2);
}

TEST_CASE("rerunning a completed run performs no backend calls") {
    sftest::TempDir tmp("pipe_rerun");
    sftest::write_file(tmp.path() / "refs.jsonl", toy_refs_jsonl());

    Pipeline first(toy_config(tmp.path()));
    first.run();
    CHECK(first.backend().total_calls() > 0);

    Pipeline second(toy_config(tmp.path()));
    RunState state = second.run();
    CHECK(state.stage == Stage::done);
    CHECK(second.backend().total_calls() == 0);
}

TEST_CASE("resume executes only the remaining stages") {
    sftest::TempDir tmp("pipe_resume");
    sftest::write_file(tmp.path() / "refs.jsonl", toy_refs_jsonl());

    Pipeline partial(toy_config(tmp.path()));
    partial.set_halt_after("digests");
    RunState halted = partial.run();
    CHECK(halted.stage == Stage::digests);

    Pipeline resumed = Pipeline::resumed((tmp.path() / "run").string());
    RunState state = resumed.run();
    CHECK(state.stage == Stage::done);
    // Completed stages were not re-executed.
    CHECK(resumed.backend().call_count("init", RequestTag::init_skeleton) == 0);
    CHECK(resumed.backend().call_count("init", RequestTag::aggregate) == 0);
    CHECK(resumed.backend().call_count("digests", RequestTag::digest) == 0);
    CHECK(resumed.backend().call_count("digests2", RequestTag::digest) == 8);
}

TEST_CASE("resume after a mid-convolution kill skips completed layers") {
    sftest::TempDir tmp("pipe_layerkill");
    sftest::write_file(tmp.path() / "refs.jsonl", toy_refs_jsonl());

    Pipeline partial(toy_config(tmp.path()));
    partial.set_halt_after("conv_layer_1");
    RunState halted = partial.run();
    CHECK(halted.stage == Stage::convolution);
    CHECK(halted.convolution_layer == 1);

    Pipeline resumed = Pipeline::resumed((tmp.path() / "run").string());
    resumed.run();
    // Layers 0 and 1 are done: no cluster feedback, and exactly one layer of
    // convolve calls (result_num = 3) remains.
    CHECK(resumed.backend().call_count("convolution", RequestTag::feedback_cluster) == 0);
    CHECK(resumed.backend().call_count("convolution", RequestTag::convolve) == 3);
}

TEST_CASE("hand-corrupted artifacts abort the resume with the file named") {
    sftest::TempDir tmp("pipe_corrupt");
    sftest::write_file(tmp.path() / "refs.jsonl", toy_refs_jsonl());

    Pipeline first(toy_config(tmp.path()));
    first.run();

    auto layer_path = tmp.path() / "run" / "layers" / "layer_1.json";
    std::string content = sftest::read_file(layer_path);
    sftest::write_file(layer_path, content + " ");

    Pipeline again = Pipeline::resumed((tmp.path() / "run").string());
    try {
        again.run();
        FAIL("expected IntegrityError");
    } catch (const IntegrityError& e) {
        CHECK(std::string(e.what()).find("layers/layer_1.json") != std::string::npos);
    }
}

TEST_CASE("resumed() requires an existing run state") {
    sftest::TempDir tmp("pipe_nostate");
    CHECK_THROWS_AS(Pipeline::resumed((tmp.path() / "nothing").string()),
                    CorruptStateError);
}

TEST_CASE("a run directory refuses a different configuration") {
    sftest::TempDir tmp("pipe_cfgpin");
    sftest::write_file(tmp.path() / "refs.jsonl", toy_refs_jsonl());

    Pipeline first(toy_config(tmp.path()));
    first.set_halt_after("init");
    first.run();

    PipelineConfig changed = toy_config(tmp.path());
    changed.rng_seed = 43;
    Pipeline second(changed);
    CHECK_THROWS_AS(second.run(), ConfigError);
}

TEST_CASE("inspect views over a completed run") {
    sftest::TempDir tmp("pipe_inspect");
    sftest::write_file(tmp.path() / "refs.jsonl", toy_refs_jsonl());
    PipelineConfig config = toy_config(tmp.path());
    Pipeline pipeline(config);
    pipeline.run();
    const std::string run_dir = (tmp.path() / "run").string();

    std::string trace = inspect_run(run_dir, "trace");
    // Header plus L + self_refine_steps data rows, then the sparkline.
    size_t newlines = 0;
    size_t header_end = trace.find('\n');
    std::string body = trace.substr(header_end + 1);
    size_t rows = 0;
    for (size_t pos = 0; (pos = body.find('\n', pos)) != std::string::npos; ++pos) {
        ++newlines;
    }
    for (const auto& line : {std::string("convolution,1,"), std::string("convolution,2,"),
                             std::string("self_refine,1,"), std::string("self_refine,2,")}) {
        CHECK_MESSAGE(trace.find(line) != std::string::npos, "missing row: " << line);
        ++rows;
    }
    CHECK(rows == static_cast<size_t>(config.convolution.layers +
                                      config.convolution.self_refine_steps));
    CHECK(trace.rfind("stage,step,candidate_id,total,normalized\n", 0) == 0);

    CHECK(inspect_run(run_dir, "skeleton").find("skeleton_final.md") == 0);
    CHECK(inspect_run(run_dir, "layers").find("layer") != std::string::npos);
    CHECK_THROWS_AS(inspect_run(run_dir, "bogus"), ConfigError);
}

TEST_CASE("inspect trace on an empty run is just the header") {
    sftest::TempDir tmp("pipe_empty");
    std::filesystem::create_directories(tmp.path() / "run");
    std::string trace = inspect_run((tmp.path() / "run").string(), "trace");
    CHECK(trace == "stage,step,candidate_id,total,normalized\n");
}

TEST_CASE("stage names round-trip") {
    for (Stage stage : {Stage::none, Stage::init, Stage::digests, Stage::convolution,
                        Stage::refined, Stage::self_refine, Stage::digests2,
                        Stage::writing, Stage::done}) {
        CHECK(stage_from_name(stage_name(stage)) == stage);
    }
    CHECK_THROWS_AS(stage_from_name("nonsense"), CorruptStateError);
    CHECK(stage_reached(Stage::writing, Stage::digests));
    CHECK_FALSE(stage_reached(Stage::init, Stage::digests));
}
