#include "surveyforge/run_state.hpp"

#include <fstream>
#include <sstream>

#include "surveyforge/errors.hpp"
#include "surveyforge/hashing.hpp"

namespace surveyforge {

namespace {

constexpr const char* kStateFile = "state.json";

const std::pair<Stage, const char*> kStageNames[] = {
    {Stage::none, "none"},           {Stage::init, "init"},
    {Stage::digests, "digests"},     {Stage::convolution, "convolution"},
    {Stage::refined, "refined"},     {Stage::self_refine, "self_refine"},
    {Stage::digests2, "digests2"},   {Stage::writing, "writing"},
    {Stage::done, "done"},
};

}  // namespace

const char* stage_name(Stage stage) {
    for (const auto& [value, name] : kStageNames) {
        if (value == stage) return name;
    }
    return "?";
}

Stage stage_from_name(const std::string& name) {
    for (const auto& [value, n] : kStageNames) {
        if (name == n) return value;
    }
    throw CorruptStateError("unknown stage name: " + name);
}

bool stage_reached(Stage state, Stage target) {
    return static_cast<int>(state) >= static_cast<int>(target);
}

nlohmann::json RunState::to_json() const {
    nlohmann::json j;
    j["stage"] = stage_name(stage);
    j["convolution_layer"] = convolution_layer;
    j["refine_step"] = refine_step;
    j["artifacts"] = artifacts;
    return j;
}

RunState RunState::from_json(const nlohmann::json& j) {
    RunState state;
    try {
        state.stage = stage_from_name(j.at("stage").get<std::string>());
        state.convolution_layer = j.at("convolution_layer").get<int>();
        state.refine_step = j.at("refine_step").get<int>();
        state.artifacts =
            j.at("artifacts").get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw CorruptStateError("malformed run state: " + std::string(e.what()));
    }
    return state;
}

RunDir::RunDir(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path RunDir::path_of(const std::string& relative) const {
    return root_ / relative;
}

void RunDir::ensure_exists() const { std::filesystem::create_directories(root_); }

bool RunDir::exists(const std::string& relative) const {
    return std::filesystem::exists(path_of(relative));
}

void RunDir::write_text(const std::string& relative, const std::string& content,
                        RunState& state) const {
    const std::filesystem::path target = path_of(relative);
    std::filesystem::create_directories(target.parent_path());
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw PipelineError("cannot write artifact: " + target.string());
        out << content;
    }
    std::filesystem::rename(tmp, target);
    state.artifacts[relative] = content_hash(content);
}

void RunDir::write_json(const std::string& relative, const nlohmann::json& j,
                        RunState& state) const {
    write_text(relative, j.dump(2) + "\n", state);
}

std::string RunDir::read_text(const std::string& relative) const {
    std::ifstream in(path_of(relative), std::ios::binary);
    if (!in) throw CorruptStateError("missing artifact: " + relative);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

nlohmann::json RunDir::read_json(const std::string& relative) const {
    try {
        return nlohmann::json::parse(read_text(relative));
    } catch (const nlohmann::json::exception& e) {
        throw CorruptStateError("artifact " + relative +
                                " is not valid JSON: " + e.what());
    }
}

void RunDir::save_state(const RunState& state) const {
    const std::filesystem::path target = path_of(kStateFile);
    std::filesystem::create_directories(root_);
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw PipelineError("cannot write state file");
        out << state.to_json().dump(2) << "\n";
    }
    std::filesystem::rename(tmp, target);
}

bool RunDir::has_state() const { return exists(kStateFile); }

RunState RunDir::load_state() const {
    if (!has_state()) {
        throw CorruptStateError("no state.json in " + root_.string());
    }
    return RunState::from_json(read_json(kStateFile));
}

void RunDir::verify(const RunState& state) const {
    for (const auto& [relative, recorded] : state.artifacts) {
        const std::filesystem::path target = path_of(relative);
        if (!std::filesystem::exists(target)) {
            throw IntegrityError("artifact missing: " + relative);
        }
        const std::string actual = file_hash(target);
        if (actual != recorded) {
            throw IntegrityError("artifact hash mismatch: " + relative + " (recorded " +
                                 recorded + ", found " + actual + ")");
        }
    }
}

}  // namespace surveyforge
