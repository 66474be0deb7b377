#pragma once

#include <map>
#include <string>
#include <vector>

namespace surveyforge::prompts {

// Templates from prompts/*.txt, embedded at build time. Generated by
// cmake/embed_prompts.cmake.
const std::map<std::string, std::string>& builtin_templates();

// Template by name; when override_dir is non-empty and <dir>/<name>.txt
// exists, the file wins over the embedded copy. Throws ConfigError for
// unknown names.
std::string get(const std::string& name, const std::string& override_dir = "");

std::vector<std::string> names();

// render_template over the named prompt.
std::string render(const std::string& name,
                   const std::map<std::string, std::string>& vars,
                   const std::string& override_dir = "");

}  // namespace surveyforge::prompts
