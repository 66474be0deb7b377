// surveyforge: turn a topic plus a corpus of reference papers into a
// structured survey, with run-directory persistence, resume, inspection,
// and the evaluation metric suite.

#include <cstdint>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "surveyforge/config.hpp"
#include "surveyforge/errors.hpp"
#include "surveyforge/eval.hpp"
#include "surveyforge/initializer.hpp"
#include "surveyforge/logging.hpp"
#include "surveyforge/pipeline.hpp"
#include "surveyforge/run_state.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;
constexpr int kExitIntegrity = 4;

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const surveyforge::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const surveyforge::BackendUnavailableError& e) {
        std::cerr << "backend failure: " << e.what() << "\n";
        return kExitBackend;
    } catch (const surveyforge::IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return kExitIntegrity;
    } catch (const surveyforge::CorruptStateError& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return kExitIntegrity;
    } catch (const surveyforge::PipelineError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"surveyforge: long-form survey generation over a reference corpus"};
    app.require_subcommand(1);

    // ---- run
    auto* run_cmd = app.add_subcommand("run", "Execute a full pipeline run");
    std::string run_topic;
    std::string run_refs;
    std::string run_config;
    std::string run_out;
    std::string run_mock_script;
    std::string run_endpoint;
    std::string run_model;
    std::uint64_t run_seed = 0;
    bool run_seed_set = false;
    bool run_eval_after = false;
    run_cmd->add_option("--topic", run_topic, "Survey topic");
    run_cmd->add_option("--refs", run_refs, "References JSONL file");
    run_cmd->add_option("--config", run_config, "Config file (init-config emits defaults)");
    run_cmd->add_option("--out", run_out, "Run directory");
    run_cmd->add_option("--mock-script", run_mock_script,
                        "Mock backend script (switches backend.mode to mock)");
    run_cmd->add_option("--endpoint", run_endpoint,
                        "Chat-completions endpoint (switches backend.mode to http; "
                        "credential from MODEL_API_KEY)");
    run_cmd->add_option("--model", run_model, "Model name for the http backend");
    run_cmd->add_option("--seed", run_seed, "Master RNG seed")
        ->each([&](const std::string&) { run_seed_set = true; });
    run_cmd->add_flag("--eval", run_eval_after, "Run the metric suite after writing");

    // ---- resume
    auto* resume_cmd = app.add_subcommand("resume", "Continue an interrupted run");
    std::string resume_dir;
    resume_cmd->add_option("run_dir", resume_dir, "Run directory")->required();

    // ---- eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a survey against references");
    std::string eval_survey;
    std::string eval_refs;
    std::string eval_out = ".";
    std::string eval_topic;
    std::string eval_mock_script;
    std::string eval_endpoint;
    std::string eval_model;
    eval_cmd->add_option("--survey", eval_survey, "Survey markdown file")->required();
    eval_cmd->add_option("--refs", eval_refs, "References JSONL file")->required();
    eval_cmd->add_option("--out", eval_out, "Output directory for the report");
    eval_cmd->add_option("--topic", eval_topic, "Survey topic (used by rubric judges)");
    eval_cmd->add_option("--mock-script", eval_mock_script, "Mock backend script");
    eval_cmd->add_option("--endpoint", eval_endpoint, "Chat-completions endpoint");
    eval_cmd->add_option("--model", eval_model, "Model name for the http backend");

    // ---- inspect
    auto* inspect_cmd = app.add_subcommand("inspect", "Report on a run directory");
    std::string inspect_dir;
    std::string inspect_what = "trace";
    inspect_cmd->add_option("run_dir", inspect_dir, "Run directory")->required();
    inspect_cmd->add_option("--what", inspect_what, "trace|skeleton|layers");

    // ---- init-config
    auto* init_cmd = app.add_subcommand("init-config", "Emit the full default config");
    std::string init_path;
    init_cmd->add_option("path", init_path, "Write to this file instead of stdout");

    CLI11_PARSE(app, argc, argv);

    if (run_cmd->parsed()) {
        return run_guarded([&]() {
            surveyforge::PipelineConfig config;
            if (!run_config.empty()) config = surveyforge::load_config_file(run_config);
            if (!run_topic.empty()) config.topic = run_topic;
            if (!run_refs.empty()) config.references_path = run_refs;
            if (!run_out.empty()) config.run_dir = run_out;
            if (run_seed_set) config.rng_seed = run_seed;
            if (!run_mock_script.empty()) {
                config.backend.mode = "mock";
                config.backend.mock_script = run_mock_script;
            }
            if (!run_endpoint.empty()) {
                config.backend.mode = "http";
                config.backend.endpoint = run_endpoint;
            }
            if (!run_model.empty()) config.backend.model = run_model;
            if (run_eval_after) config.eval.run_after_write = true;
            if (config.references_path.empty()) {
                throw surveyforge::ConfigError("--refs (or references_path) is required");
            }
            if (config.run_dir.empty()) {
                throw surveyforge::ConfigError("--out (or run_dir) is required");
            }
            surveyforge::Pipeline pipeline(config);
            surveyforge::RunState state = pipeline.run();
            std::cout << "run " << config.run_dir << " at stage "
                      << surveyforge::stage_name(state.stage) << "\n";
            return state.stage == surveyforge::Stage::done ? kExitOk : kExitFailure;
        });
    }

    if (resume_cmd->parsed()) {
        return run_guarded([&]() {
            auto pipeline = surveyforge::Pipeline::resumed(resume_dir);
            surveyforge::RunState state = pipeline.run();
            std::cout << "run " << resume_dir << " at stage "
                      << surveyforge::stage_name(state.stage) << "\n";
            return state.stage == surveyforge::Stage::done ? kExitOk : kExitFailure;
        });
    }

    if (eval_cmd->parsed()) {
        return run_guarded([&]() {
            std::ifstream in(eval_survey, std::ios::binary);
            if (!in) {
                throw surveyforge::ConfigError("cannot open survey: " + eval_survey);
            }
            std::ostringstream buffer;
            buffer << in.rdbuf();

            surveyforge::PipelineConfig config;
            config.eval.run_after_write = true;
            if (!eval_mock_script.empty()) {
                config.backend.mode = "mock";
                config.backend.mock_script = eval_mock_script;
            }
            if (!eval_endpoint.empty()) {
                config.backend.mode = "http";
                config.backend.endpoint = eval_endpoint;
            }
            if (!eval_model.empty()) config.backend.model = eval_model;
            auto backend = surveyforge::make_backend_from_config(config);

            surveyforge::EvalOptions options;
            options.topic = eval_topic;
            surveyforge::Evaluator evaluator(
                *backend, surveyforge::load_references_jsonl(eval_refs), options);
            surveyforge::EvalReport report = evaluator.evaluate(buffer.str());

            std::filesystem::create_directories(eval_out);
            {
                std::ofstream out(std::filesystem::path(eval_out) / "eval_report.json");
                out << report.to_json().dump(2) << "\n";
            }
            {
                std::ofstream out(std::filesystem::path(eval_out) / "eval_audit.jsonl");
                for (const auto& record : evaluator.audit_log()) {
                    nlohmann::json j{{"sentence", record.sentence},
                                     {"bibkey", record.bibkey},
                                     {"supported", record.supported}};
                    out << j.dump() << "\n";
                }
            }
            std::cout << report.summary_table();
            return kExitOk;
        });
    }

    if (inspect_cmd->parsed()) {
        return run_guarded([&]() {
            std::cout << surveyforge::inspect_run(inspect_dir, inspect_what);
            return kExitOk;
        });
    }

    if (init_cmd->parsed()) {
        return run_guarded([&]() {
            std::string text = surveyforge::emit_config(surveyforge::PipelineConfig{});
            if (init_path.empty()) {
                std::cout << text;
            } else {
                std::ofstream out(init_path);
                if (!out) {
                    throw surveyforge::ConfigError("cannot write config to " + init_path);
                }
                out << text;
            }
            return kExitOk;
        });
    }

    return kExitConfig;
}
