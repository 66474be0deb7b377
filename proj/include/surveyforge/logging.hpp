#pragma once

#include <ostream>
#include <sstream>
#include <string>

namespace surveyforge::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3 };

// Process-global sink, default std::cerr. Messages carry no timestamps so
// captured logs are reproducible.
void set_sink(std::ostream* sink);
void set_level(Level level);
void write(Level level, const std::string& message);

inline void debug(const std::string& m) { write(Level::debug, m); }
inline void info(const std::string& m) { write(Level::info, m); }
inline void warn(const std::string& m) { write(Level::warn, m); }
inline void error(const std::string& m) { write(Level::error, m); }

// Scoped capture for tests asserting on warnings.
class Capture {
public:
    Capture();
    ~Capture();
    Capture(const Capture&) = delete;
    Capture& operator=(const Capture&) = delete;
    std::string text() const;

private:
    std::ostringstream buffer_;
    std::ostream* previous_;
};

}  // namespace surveyforge::log
