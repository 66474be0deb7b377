#include "surveyforge/hashing.hpp"

#include <fstream>
#include <sstream>

#include "surveyforge/errors.hpp"

namespace surveyforge {

std::string hash_hex(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[value & 0xF];
        value >>= 4;
    }
    return out;
}

std::string file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IntegrityError("cannot read artifact for hashing: " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return content_hash(buffer.str());
}

}  // namespace surveyforge
