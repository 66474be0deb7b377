#pragma once

#include <memory>
#include <string>
#include <vector>

#include "surveyforge/backend.hpp"
#include "surveyforge/config.hpp"
#include "surveyforge/initializer.hpp"
#include "surveyforge/run_state.hpp"

namespace surveyforge {

// Builds the backend described by config.backend; the http mode reads the
// credential from MODEL_API_KEY.
std::shared_ptr<ModelBackend> make_backend_from_config(const PipelineConfig& config);

// Drives the full run: Initialization (clusters, initial skeleton, digests),
// Skeleton Improvement (convolution layers, best-of-N refinement), Survey
// Construction (fresh digests, bottom-up writing), optional evaluation.
// Every stage's artifacts are persisted and hash-recorded before the next
// stage begins; run() on a directory with existing state verifies the
// artifacts and continues from the first incomplete stage.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig config,
                      std::shared_ptr<ModelBackend> backend = nullptr);

    // Loads config.txt from an existing run directory. Requires state.json.
    static Pipeline resumed(const std::string& run_dir,
                            std::shared_ptr<ModelBackend> backend = nullptr);

    RunState run();

    // Test hook: stop (with state persisted) right after the named point.
    // Labels: init, digests, conv_layer_<l>, refined, refine_step_<c>,
    // self_refine, digests2, writing.
    void set_halt_after(std::string label) { halt_after_ = std::move(label); }

    ModelBackend& backend() { return *backend_; }
    const RunState& state() const { return state_; }
    const PipelineConfig& config() const { return config_; }

private:
    friend struct PipelineSink;

    void halt_check(const std::string& label);
    void write_digest_set(const std::string& dirname,
                          const std::vector<DigestBundle>& bundles);
    std::vector<DigestBundle> read_digest_set(const std::string& dirname);
    void write_trace_and_score_log();

    PipelineConfig config_;
    RunDir dir_;
    std::shared_ptr<ModelBackend> backend_;
    RunState state_;
    std::string halt_after_;
    std::vector<ReferenceDoc> refs_;
};

// Human-readable views over a run directory.
//   trace    normalized best entropy per convolution layer and adopted
//            entropy per refinement step, as CSV plus a sparkline
//   skeleton latest skeleton (final > refined > initial)
//   layers   per-layer candidate/survivor summary
std::string inspect_run(const std::string& run_dir, const std::string& what);

}  // namespace surveyforge
