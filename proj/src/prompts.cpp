#include "surveyforge/prompts.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "surveyforge/errors.hpp"
#include "surveyforge/text.hpp"

namespace surveyforge::prompts {

std::string get(const std::string& name, const std::string& override_dir) {
    if (!override_dir.empty()) {
        std::filesystem::path candidate =
            std::filesystem::path(override_dir) / (name + ".txt");
        std::ifstream in(candidate);
        if (in) {
            std::ostringstream buffer;
            buffer << in.rdbuf();
            return buffer.str();
        }
    }
    const auto& templates = builtin_templates();
    auto it = templates.find(name);
    if (it == templates.end()) {
        throw ConfigError("unknown prompt template: " + name);
    }
    return it->second;
}

std::vector<std::string> names() {
    std::vector<std::string> out;
    for (const auto& [name, _] : builtin_templates()) out.push_back(name);
    return out;
}

std::string render(const std::string& name,
                   const std::map<std::string, std::string>& vars,
                   const std::string& override_dir) {
    return text::render_template(get(name, override_dir), vars);
}

}  // namespace surveyforge::prompts
