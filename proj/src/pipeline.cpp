#include "surveyforge/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <set>
#include <sstream>

#include "surveyforge/convolution.hpp"
#include "surveyforge/entropy_scorer.hpp"
#include "surveyforge/errors.hpp"
#include "surveyforge/eval.hpp"
#include "surveyforge/initializer.hpp"
#include "surveyforge/logging.hpp"
#include "surveyforge/parallel.hpp"
#include "surveyforge/survey_tree.hpp"
#include "surveyforge/text.hpp"
#include "surveyforge/writer.hpp"

namespace surveyforge {

namespace {

// Control-flow signal for the test halt hook; never escapes run().
struct HaltRequested {};

std::string layer_file(int layer) {
    return "layers/layer_" + std::to_string(layer) + ".json";
}

std::string refine_file(int step) {
    return "refine/step_" + std::to_string(step) + ".json";
}

std::string sanitize_component(const std::string& name) {
    std::string out;
    for (char c : name) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') {
            out += c;
        } else {
            out += '_';
        }
    }
    return out.empty() ? "_" : out;
}

std::string pad3(size_t value) {
    std::string s = std::to_string(value);
    while (s.size() < 3) s.insert(s.begin(), '0');
    return s;
}

std::string format_total(double value) {
    std::ostringstream out;
    out << value;
    return out.str();
}

nlohmann::json clusters_to_json(const std::vector<Cluster>& clusters) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& cluster : clusters) {
        j.push_back({{"id", cluster.id}, {"members", cluster.members}});
    }
    return j;
}

std::vector<Cluster> clusters_from_json(const nlohmann::json& j) {
    std::vector<Cluster> clusters;
    for (const auto& item : j) {
        clusters.push_back(Cluster{item.at("id").get<int>(),
                                   item.at("members").get<std::vector<std::string>>()});
    }
    return clusters;
}

}  // namespace

std::shared_ptr<ModelBackend> make_backend_from_config(const PipelineConfig& config) {
    BackendPolicy policy;
    policy.max_retries = config.backend.max_retries;
    policy.backoff_initial = std::chrono::milliseconds(config.backend.backoff_ms);
    policy.parallelism_limit = config.backend.parallelism;
    if (config.backend.mode == "mock") {
        MockScript script;
        if (!config.backend.mock_script.empty()) {
            script = MockBackend::load_script(config.backend.mock_script);
        }
        return std::make_shared<MockBackend>(policy, std::move(script));
    }
    HttpBackendConfig http;
    http.endpoint = config.backend.endpoint;
    http.model = config.backend.model;
    if (const char* key = std::getenv("MODEL_API_KEY")) http.api_key = key;
    return std::make_shared<HttpBackend>(policy, std::move(http));
}

// Sink persisting each layer/step as it completes, so a killed run resumes
// from the last finished substep.
struct PipelineSink : ConvolutionSink {
    explicit PipelineSink(Pipeline& pipeline) : p(pipeline) {}

    void on_layer(const LayerRecord& record) override {
        p.dir_.write_json(layer_file(record.layer), layer_record_to_json(record),
                          p.state_);
        p.state_.stage = Stage::convolution;
        p.state_.convolution_layer = record.layer;
        p.dir_.save_state(p.state_);
        p.halt_check("conv_layer_" + std::to_string(record.layer));
    }

    void on_refine_step(const RefineRecord& record) override {
        p.dir_.write_json(refine_file(record.step), refine_record_to_json(record),
                          p.state_);
        p.state_.stage = Stage::self_refine;
        p.state_.refine_step = record.step;
        p.dir_.save_state(p.state_);
        p.halt_check("refine_step_" + std::to_string(record.step));
    }

    Pipeline& p;
};

Pipeline::Pipeline(PipelineConfig config, std::shared_ptr<ModelBackend> backend)
    : config_(std::move(config)), dir_(config_.run_dir) {
    config_.convolution.rng_seed = config_.rng_seed;
    config_.validate();
    if (config_.run_dir.empty()) throw ConfigError("run_dir is required");
    backend_ = backend ? std::move(backend) : make_backend_from_config(config_);
}

Pipeline Pipeline::resumed(const std::string& run_dir,
                           std::shared_ptr<ModelBackend> backend) {
    RunDir dir{std::filesystem::path(run_dir)};
    if (!dir.has_state()) {
        throw CorruptStateError("no resumable state in " + run_dir);
    }
    PipelineConfig config = parse_config_text(dir.read_text("config.txt"));
    config.run_dir = run_dir;
    return Pipeline(std::move(config), std::move(backend));
}

void Pipeline::halt_check(const std::string& label) {
    if (!halt_after_.empty() && halt_after_ == label) throw HaltRequested{};
}

void Pipeline::write_digest_set(const std::string& dirname,
                                const std::vector<DigestBundle>& bundles) {
    nlohmann::json manifest = nlohmann::json::array();
    for (size_t i = 0; i < bundles.size(); ++i) {
        const std::string file =
            dirname + "/" + pad3(i) + "_" + sanitize_component(bundles[i].bibkey) + ".json";
        dir_.write_json(file, digest_bundle_to_json(bundles[i]), state_);
        manifest.push_back({{"file", file}, {"bibkey", bundles[i].bibkey}});
    }
    dir_.write_json(dirname + "/manifest.json", manifest, state_);
}

std::vector<DigestBundle> Pipeline::read_digest_set(const std::string& dirname) {
    std::vector<DigestBundle> bundles;
    for (const auto& entry : dir_.read_json(dirname + "/manifest.json")) {
        bundles.push_back(
            digest_bundle_from_json(dir_.read_json(entry.at("file").get<std::string>())));
    }
    return bundles;
}

// entropy_trace.csv and score_log.jsonl are rebuilt from the persisted
// layer/step records, so resumed runs produce byte-identical files.
void Pipeline::write_trace_and_score_log() {
    std::string csv = "stage,step,candidate_id,total\n";
    std::string score_log;
    auto append_events = [&](const std::vector<ScoreEvent>& events) {
        for (const auto& event : events) {
            nlohmann::json j{{"skeleton_hash", event.skeleton_hash},
                             {"component", event.component},
                             {"raw", event.raw_response},
                             {"value", event.value}};
            score_log += j.dump() + "\n";
        }
    };
    for (int layer = 0; layer <= config_.convolution.layers; ++layer) {
        if (!dir_.exists(layer_file(layer))) break;
        LayerRecord record = layer_record_from_json(dir_.read_json(layer_file(layer)));
        for (const auto& item : record.items) {
            csv += "convolution," + std::to_string(record.layer) + "," +
                   std::to_string(item.id) + "," +
                   format_total(item.applied_entropy ? item.applied_entropy->total : 0.0) +
                   "\n";
        }
        append_events(record.score_events);
    }
    for (int step = 1; step <= config_.convolution.self_refine_steps; ++step) {
        if (!dir_.exists(refine_file(step))) break;
        RefineRecord record = refine_record_from_json(dir_.read_json(refine_file(step)));
        for (const auto& item : record.candidates) {
            csv += "self_refine," + std::to_string(record.step) + "," +
                   std::to_string(item.id) + "," +
                   format_total(item.applied_entropy ? item.applied_entropy->total : 0.0) +
                   "\n";
        }
        append_events(record.score_events);
    }
    dir_.write_text("entropy_trace.csv", csv, state_);
    dir_.write_text("score_log.jsonl", score_log, state_);
}

namespace {

// Per-node body persistence under sections/, keyed by (skeleton hash,
// heading path) so resumed writing reuses exactly the bodies written for
// this skeleton.
class FileBodyStore : public BodyStore {
public:
    FileBodyStore(RunDir& dir, RunState& state) : dir_(dir), state_(state) {}

    std::optional<std::string> load(const std::string& key) override {
        const std::string file = "sections/" + key + ".md";
        if (!dir_.exists(file)) return std::nullopt;
        return dir_.read_text(file);
    }

    void save(const std::string& key, const std::string& body) override {
        dir_.write_text("sections/" + key + ".md", body, state_);
    }

private:
    RunDir& dir_;
    RunState& state_;
};

}  // namespace

RunState Pipeline::run() {
    dir_.ensure_exists();

    // The persisted config omits run_dir: the directory is self-evident and
    // stays byte-identical when a run is made elsewhere or relocated.
    PipelineConfig persisted = config_;
    persisted.run_dir.clear();
    const std::string config_text = emit_config(persisted);
    if (dir_.exists("config.txt")) {
        if (dir_.read_text("config.txt") != config_text) {
            throw ConfigError("run directory " + config_.run_dir +
                              " was created with a different configuration");
        }
    }

    if (dir_.has_state()) {
        state_ = dir_.load_state();
        dir_.verify(state_);
    } else {
        state_ = RunState{};
        dir_.write_text("config.txt", config_text, state_);
    }

    if (config_.topic.empty()) throw ConfigError("topic is required");
    refs_ = load_references_jsonl(config_.references_path);
    std::set<std::string> known_bibkeys;
    for (const auto& ref : refs_) known_bibkeys.insert(ref.bibkey);

    InitializerOptions init_options;
    init_options.prompts_dir = config_.prompts_dir;
    init_options.ref_window_tokens = config_.ref_window_tokens;
    init_options.max_digest_failure_fraction = config_.max_digest_failure_fraction;
    Initializer initializer(*backend_, config_.topic, init_options);

    ScorerOptions scorer_options;
    scorer_options.prompts_dir = config_.prompts_dir;
    scorer_options.topic = config_.topic;
    scorer_options.score_samples = config_.score_samples;
    EntropyScorer scorer(*backend_, scorer_options);

    EngineOptions engine_options;
    engine_options.prompts_dir = config_.prompts_dir;
    engine_options.topic = config_.topic;
    engine_options.apply_empty_shortcut = config_.apply_empty_shortcut;
    ConvolutionEngine engine(*backend_, scorer, config_.convolution, engine_options);

    try {
        // ------------------------------------------------------ init
        if (!stage_reached(state_.stage, Stage::init)) {
            backend_->set_stage("init");
            auto clusters = cluster_references(refs_, config_.cluster_token_budget);
            SkeletonNode initial = initializer.init_skeleton(clusters, refs_);
            for (const auto& key : unknown_citations(initial, known_bibkeys)) {
                log::warn("initial skeleton cites unknown bibkey \"" + key + "\"");
            }
            dir_.write_json("clusters.json", clusters_to_json(clusters), state_);
            dir_.write_text("skeleton_initial.md", serialize_tree(initial), state_);
            state_.stage = Stage::init;
            dir_.save_state(state_);
            halt_check("init");
        }
        const auto clusters = clusters_from_json(dir_.read_json("clusters.json"));
        const SkeletonNode initial = parse_tree(dir_.read_text("skeleton_initial.md"));

        // ------------------------------------------------------ digests
        if (!stage_reached(state_.stage, Stage::digests)) {
            backend_->set_stage("digests");
            auto bundles = initializer.generate_digests(initial, refs_);
            write_digest_set("digests", bundles);
            state_.stage = Stage::digests;
            dir_.save_state(state_);
            halt_check("digests");
        }

        // ------------------------------------------------------ convolution
        if (!stage_reached(state_.stage, Stage::refined)) {
            backend_->set_stage("convolution");
            ConvolutionState conv_state;
            if (state_.stage == Stage::convolution) {
                LayerRecord last = layer_record_from_json(
                    dir_.read_json(layer_file(state_.convolution_layer)));
                conv_state.completed_layer = last.layer;
                conv_state.next_id = last.next_id;
                std::map<int, Feedback> by_id;
                for (const auto& item : last.items) by_id[item.id] = item;
                for (int id : last.survivor_ids) conv_state.current.push_back(by_id.at(id));
            } else {
                const auto bundles = read_digest_set("digests");
                std::map<std::string, size_t> cluster_of;
                for (size_t i = 0; i < clusters.size(); ++i) {
                    for (const auto& key : clusters[i].members) cluster_of[key] = i;
                }
                std::vector<std::vector<DigestBundle>> grouped(clusters.size());
                for (const auto& bundle : bundles) {
                    grouped[cluster_of.at(bundle.bibkey)].push_back(bundle);
                }
                std::vector<size_t> indices(clusters.size());
                for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;
                std::vector<Feedback> layer0 = parallel_map(
                    indices, backend_->policy().parallelism_limit, [&](const size_t& i) {
                        return engine.cluster_feedback(clusters[i], grouped[i], initial);
                    });
                for (size_t i = 0; i < layer0.size(); ++i) {
                    layer0[i].id = static_cast<int>(i);
                }
                conv_state.current = std::move(layer0);
                conv_state.next_id = static_cast<int>(clusters.size());
            }

            PipelineSink sink(*this);
            SkeletonNode refined = engine.run_convolution(initial, conv_state, &sink);
            dir_.write_text("skeleton_refined.md", serialize_tree(refined), state_);
            state_.stage = Stage::refined;
            dir_.save_state(state_);
            halt_check("refined");
        }
        const SkeletonNode refined = parse_tree(dir_.read_text("skeleton_refined.md"));

        // ------------------------------------------------------ self refine
        if (!state_.artifacts.count("skeleton_final.md")) {
            backend_->set_stage("self_refine");
            int refine_from = state_.stage == Stage::self_refine ? state_.refine_step : 0;
            SkeletonNode current = refined;
            int next_id = 0;
            if (refine_from > 0) {
                RefineRecord last =
                    refine_record_from_json(dir_.read_json(refine_file(refine_from)));
                current = parse_tree(last.skeleton_after);
                next_id = last.next_id;
            } else {
                next_id = layer_record_from_json(
                              dir_.read_json(layer_file(config_.convolution.layers)))
                              .next_id;
            }
            PipelineSink sink(*this);
            SkeletonNode final_tree =
                engine.self_refine(current, &sink, refine_from, next_id);
            dir_.write_text("skeleton_final.md", serialize_tree(final_tree), state_);
            write_trace_and_score_log();
            state_.stage = Stage::self_refine;
            state_.refine_step = config_.convolution.self_refine_steps;
            dir_.save_state(state_);
            halt_check("self_refine");
        }
        const SkeletonNode final_tree = parse_tree(dir_.read_text("skeleton_final.md"));

        // ------------------------------------------------------ digests2
        if (!stage_reached(state_.stage, Stage::digests2)) {
            backend_->set_stage("digests2");
            auto final_bundles = initializer.generate_digests(final_tree, refs_);
            write_digest_set("digests_final", final_bundles);
            state_.stage = Stage::digests2;
            dir_.save_state(state_);
            halt_check("digests2");
        }

        // ------------------------------------------------------ writing
        if (!stage_reached(state_.stage, Stage::writing)) {
            backend_->set_stage("writing");
            const auto final_bundles = read_digest_set("digests_final");
            WriterOptions writer_options;
            writer_options.prompts_dir = config_.prompts_dir;
            writer_options.topic = config_.topic;
            SurveyWriter writer(*backend_, writer_options);
            FileBodyStore store(dir_, state_);
            SurveyNode survey = writer.write_survey(final_tree, final_bundles, &store);
            AssembledSurvey assembled = assemble_survey(survey, refs_);
            dir_.write_text("survey.md", assembled.markdown, state_);
            dir_.write_json("bibliography.json", assembled.bibliography, state_);
            state_.stage = Stage::writing;
            dir_.save_state(state_);
            halt_check("writing");
        }

        // ------------------------------------------------------ eval + done
        if (!stage_reached(state_.stage, Stage::done)) {
            if (config_.eval.run_after_write) {
                backend_->set_stage("eval");
                EvalOptions eval_options;
                eval_options.prompts_dir = config_.prompts_dir;
                eval_options.topic = config_.topic;
                eval_options.support_window_tokens = config_.support_window_tokens;
                eval_options.dedup_batch_size = config_.dedup_batch_size;
                eval_options.run_structure = config_.eval.structure;
                eval_options.run_faithfulness = config_.eval.faithfulness;
                eval_options.run_relevance = config_.eval.relevance;
                eval_options.run_language = config_.eval.language;
                eval_options.run_criticalness = config_.eval.criticalness;
                eval_options.run_claims = config_.eval.claims;
                eval_options.run_references = config_.eval.references;
                Evaluator evaluator(*backend_, refs_, eval_options);
                EvalReport report = evaluator.evaluate(dir_.read_text("survey.md"));
                dir_.write_json("eval_report.json", report.to_json(), state_);
                dir_.write_text("eval_summary.txt", report.summary_table(), state_);
                std::string audit;
                for (const auto& record : evaluator.audit_log()) {
                    nlohmann::json j{{"sentence", record.sentence},
                                     {"bibkey", record.bibkey},
                                     {"supported", record.supported}};
                    audit += j.dump() + "\n";
                }
                dir_.write_text("eval_audit.jsonl", audit, state_);
            }
            state_.stage = Stage::done;
            dir_.save_state(state_);
        }
    } catch (const HaltRequested&) {
        // State for every completed substep is already on disk.
    }
    return state_;
}

std::string inspect_run(const std::string& run_dir, const std::string& what) {
    RunDir dir{std::filesystem::path(run_dir)};
    if (what == "skeleton") {
        for (const char* file :
             {"skeleton_final.md", "skeleton_refined.md", "skeleton_initial.md"}) {
            if (dir.exists(file)) {
                return std::string(file) + "\n\n" + dir.read_text(file);
            }
        }
        return "(no skeleton artifact yet)\n";
    }
    if (what == "layers") {
        std::ostringstream out;
        out << "layer  candidates  best_total  best_id  survivors\n";
        for (int layer = 0;; ++layer) {
            if (!dir.exists(layer_file(layer))) break;
            LayerRecord record = layer_record_from_json(dir.read_json(layer_file(layer)));
            double best = 0.0;
            int best_id = -1;
            for (const auto& item : record.items) {
                double total = item.applied_entropy ? item.applied_entropy->total : 0.0;
                if (best_id < 0 || total > best) {
                    best = total;
                    best_id = item.id;
                }
            }
            out << layer << "      " << record.items.size() << "           "
                << format_total(best) << "        " << best_id << "       [";
            for (size_t i = 0; i < record.survivor_ids.size(); ++i) {
                if (i > 0) out << ",";
                out << record.survivor_ids[i];
            }
            out << "]\n";
        }
        return out.str();
    }
    if (what == "trace") {
        struct Row {
            std::string stage;
            int step;
            int candidate_id;
            double total;
        };
        std::vector<Row> rows;
        for (int layer = 1;; ++layer) {
            if (!dir.exists(layer_file(layer))) break;
            LayerRecord record = layer_record_from_json(dir.read_json(layer_file(layer)));
            const Feedback* best = nullptr;
            for (const auto& item : record.items) {
                if (!item.applied_entropy) continue;
                if (best == nullptr ||
                    item.applied_entropy->total > best->applied_entropy->total) {
                    best = &item;
                }
            }
            if (best != nullptr) {
                rows.push_back(
                    Row{"convolution", layer, best->id, best->applied_entropy->total});
            }
        }
        for (int step = 1;; ++step) {
            if (!dir.exists(refine_file(step))) break;
            RefineRecord record = refine_record_from_json(dir.read_json(refine_file(step)));
            for (const auto& item : record.candidates) {
                if (item.id == record.adopted_id && item.applied_entropy) {
                    rows.push_back(
                        Row{"self_refine", step, item.id, item.applied_entropy->total});
                }
            }
        }
        std::vector<double> totals;
        totals.reserve(rows.size());
        for (const auto& row : rows) totals.push_back(row.total);
        std::vector<double> normalized = normalize_scores(totals);

        std::string out = "stage,step,candidate_id,total,normalized\n";
        for (size_t i = 0; i < rows.size(); ++i) {
            out += rows[i].stage + "," + std::to_string(rows[i].step) + "," +
                   std::to_string(rows[i].candidate_id) + "," + format_total(rows[i].total) +
                   "," + format_total(normalized[i]) + "\n";
        }
        if (!rows.empty()) {
            static const char* kBlocks[] = {"▁", "▂", "▃", "▄",
                                            "▅", "▆", "▇", "█"};
            out += "\n";
            for (double n : normalized) {
                int idx = std::min(7, static_cast<int>(n * 8.0));
                out += kBlocks[idx];
            }
            out += "\n";
        }
        return out;
    }
    throw ConfigError("inspect: unknown view '" + what + "' (trace|skeleton|layers)");
}

}  // namespace surveyforge
