#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "surveyforge/vendor_json.hpp"

namespace surveyforge {

// Pipeline stages in execution order. `stage` in RunState is the furthest
// stage completed; convolution and self_refine additionally track their
// substep so a killed run resumes mid-stage.
enum class Stage {
    none,         // nothing persisted yet
    init,         // clusters + initial skeleton
    digests,      // skeleton-guided digests for every reference
    convolution,  // convolution_layer = last completed layer
    refined,      // refined skeleton selected and written
    self_refine,  // refine_step = last completed best-of-N round
    digests2,     // digests regenerated against the final skeleton
    writing,      // survey written and assembled
    done,
};

const char* stage_name(Stage stage);
Stage stage_from_name(const std::string& name);  // throws CorruptState
bool stage_reached(Stage state, Stage target);   // state >= target

struct RunState {
    Stage stage = Stage::none;
    int convolution_layer = -1;  // last completed layer, -1 = none
    int refine_step = 0;         // last completed self-refine round
    std::map<std::string, std::string> artifacts;  // relative path -> content hash

    nlohmann::json to_json() const;
    static RunState from_json(const nlohmann::json& j);  // throws CorruptState
};

// The run directory is the single source of truth for a run: every artifact
// lives under it and is hash-recorded in state.json. Writes go through a
// temp file + rename.
class RunDir {
public:
    explicit RunDir(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path path_of(const std::string& relative) const;

    void ensure_exists() const;
    bool exists(const std::string& relative) const;

    // Writes and records the content hash into `state`.
    void write_text(const std::string& relative, const std::string& content,
                    RunState& state) const;
    void write_json(const std::string& relative, const nlohmann::json& j,
                    RunState& state) const;

    std::string read_text(const std::string& relative) const;    // CorruptState on miss
    nlohmann::json read_json(const std::string& relative) const;  // CorruptState on miss

    void save_state(const RunState& state) const;
    bool has_state() const;
    RunState load_state() const;  // CorruptState on missing/unreadable

    // Re-hashes every recorded artifact; throws IntegrityError naming the
    // first mismatching or missing file.
    void verify(const RunState& state) const;

private:
    std::filesystem::path root_;
};

}  // namespace surveyforge
