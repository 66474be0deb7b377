#include "surveyforge/logging.hpp"

#include <iostream>
#include <mutex>

namespace surveyforge::log {

namespace {

std::mutex& state_mutex() {
    static std::mutex m;
    return m;
}

std::ostream*& sink_ref() {
    static std::ostream* sink = &std::cerr;
    return sink;
}

Level& level_ref() {
    static Level level = Level::info;
    return level;
}

const char* level_name(Level level) {
    switch (level) {
        case Level::debug: return "debug";
        case Level::info: return "info";
        case Level::warn: return "warn";
        case Level::error: return "error";
    }
    return "?";
}

}  // namespace

void set_sink(std::ostream* sink) {
    std::lock_guard<std::mutex> lock(state_mutex());
    sink_ref() = sink;
}

void set_level(Level level) {
    std::lock_guard<std::mutex> lock(state_mutex());
    level_ref() = level;
}

void write(Level level, const std::string& message) {
    std::lock_guard<std::mutex> lock(state_mutex());
    if (static_cast<int>(level) < static_cast<int>(level_ref())) return;
    std::ostream* sink = sink_ref();
    if (sink == nullptr) return;
    (*sink) << "[" << level_name(level) << "] " << message << "\n";
    sink->flush();
}

Capture::Capture() {
    std::lock_guard<std::mutex> lock(state_mutex());
    previous_ = sink_ref();
    sink_ref() = &buffer_;
}

Capture::~Capture() {
    std::lock_guard<std::mutex> lock(state_mutex());
    sink_ref() = previous_;
}

std::string Capture::text() const {
    std::lock_guard<std::mutex> lock(state_mutex());
    return buffer_.str();
}

}  // namespace surveyforge::log
