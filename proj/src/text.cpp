#include "surveyforge/text.hpp"

#include <algorithm>
#include <cctype>

namespace surveyforge::text {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Parses one citation group starting at the '[' in s[pos]. On success
// returns the keys and sets `end` to the index one past the closing ']'.
std::optional<std::vector<std::string>> parse_citation_group(std::string_view s,
                                                             size_t pos,
                                                             size_t* end) {
    std::vector<std::string> keys;
    size_t i = pos + 1;
    for (;;) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        if (i >= s.size() || s[i] != '"') return std::nullopt;
        size_t close_quote = s.find('"', i + 1);
        if (close_quote == std::string_view::npos) return std::nullopt;
        std::string key(s.substr(i + 1, close_quote - i - 1));
        if (key.empty()) return std::nullopt;
        keys.push_back(std::move(key));
        i = close_quote + 1;
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        if (i < s.size() && s[i] == ',') {
            ++i;
            continue;
        }
        if (i < s.size() && s[i] == ']') {
            *end = i + 1;
            return keys;
        }
        return std::nullopt;
    }
}

}  // namespace

std::string trim(std::string_view s) {
    size_t b = 0;
    size_t e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string trim_right(std::string_view s) {
    size_t e = s.size();
    while (e > 0 && is_space(s[e - 1])) --e;
    return std::string(s.substr(0, e));
}

std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> lines;
    size_t start = 0;
    while (start <= s.size()) {
        size_t nl = s.find('\n', start);
        std::string_view line =
            nl == std::string_view::npos ? s.substr(start) : s.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    return lines;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += sep;
        out += parts[i];
    }
    return out;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::size_t token_estimate(std::string_view s) { return (s.size() + 3) / 4; }

std::string truncate_to_tokens(std::string_view s, std::size_t max_tokens) {
    std::size_t max_bytes = max_tokens * 4;
    if (s.size() <= max_bytes) return std::string(s);
    std::size_t cut = max_bytes;
    // Back up over UTF-8 continuation bytes.
    while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
    return std::string(s.substr(0, cut));
}

std::vector<std::string> extract_bibkeys(std::string_view s, bool dedup) {
    std::vector<std::string> keys;
    std::set<std::string> seen;
    size_t pos = 0;
    while ((pos = s.find("[\"", pos)) != std::string_view::npos) {
        size_t end = 0;
        auto group = parse_citation_group(s, pos, &end);
        if (!group) {
            pos += 1;
            continue;
        }
        for (auto& key : *group) {
            if (dedup) {
                if (seen.insert(key).second) keys.push_back(key);
            } else {
                keys.push_back(key);
            }
        }
        pos = end;
    }
    return keys;
}

std::string strip_unknown_citations(std::string_view body,
                                    const std::set<std::string>& known,
                                    std::vector<std::string>* removed) {
    std::string out;
    out.reserve(body.size());
    size_t pos = 0;
    while (pos < body.size()) {
        if (body[pos] == '[' && pos + 1 < body.size() && body[pos + 1] == '"') {
            size_t end = 0;
            auto group = parse_citation_group(body, pos, &end);
            if (group) {
                std::vector<std::string> kept;
                for (auto& key : *group) {
                    if (known.count(key)) {
                        kept.push_back(key);
                    } else if (removed != nullptr) {
                        removed->push_back(key);
                    }
                }
                if (!kept.empty()) {
                    out += '[';
                    for (size_t i = 0; i < kept.size(); ++i) {
                        if (i > 0) out += ", ";
                        out += '"' + kept[i] + '"';
                    }
                    out += ']';
                }
                pos = end;
                continue;
            }
        }
        out += body[pos];
        ++pos;
    }
    return out;
}

std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    size_t pos = 0;
    while (pos < tmpl.size()) {
        size_t open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out += tmpl.substr(pos);
            break;
        }
        size_t close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) {
            out += tmpl.substr(pos);
            break;
        }
        out += tmpl.substr(pos, open - pos);
        std::string key(tmpl.substr(open + 2, close - open - 2));
        auto it = vars.find(key);
        if (it != vars.end()) {
            out += it->second;
        } else {
            out += tmpl.substr(open, close + 2 - open);
        }
        pos = close + 2;
    }
    return out;
}

std::optional<std::pair<std::size_t, std::size_t>> find_span(
    std::string_view haystack, std::string_view open, std::string_view close,
    std::size_t from) {
    size_t begin = haystack.find(open, from);
    if (begin == std::string_view::npos) return std::nullopt;
    size_t content = begin + open.size();
    size_t end = haystack.find(close, content);
    if (end == std::string_view::npos) return std::nullopt;
    return std::make_pair(content, end);
}

std::vector<int> parse_int_list(std::string_view s) {
    std::vector<int> values;
    size_t i = 0;
    while (i < s.size()) {
        if (std::isdigit(static_cast<unsigned char>(s[i]))) {
            int v = 0;
            while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
                v = v * 10 + (s[i] - '0');
                ++i;
            }
            values.push_back(v);
        } else {
            ++i;
        }
    }
    return values;
}

std::vector<std::string> parse_numbered_list(std::string_view s) {
    std::vector<std::string> items;
    for (const auto& raw : split_lines(s)) {
        std::string line = trim(raw);
        size_t i = 0;
        while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
        if (i == 0 || i >= line.size()) continue;
        if (line[i] != '.' && line[i] != ')') continue;
        std::string item = trim(std::string_view(line).substr(i + 1));
        if (!item.empty()) items.push_back(std::move(item));
    }
    return items;
}

std::vector<std::string> split_sentences(std::string_view s) {
    std::vector<std::string> sentences;
    size_t start = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c != '.' && c != '?' && c != '!') continue;
        bool at_boundary = (i + 1 == s.size()) || is_space(s[i + 1]);
        if (!at_boundary) continue;
        std::string sentence = trim(s.substr(start, i + 1 - start));
        if (!sentence.empty()) sentences.push_back(std::move(sentence));
        start = i + 1;
    }
    std::string tail = trim(s.substr(start));
    if (!tail.empty()) sentences.push_back(std::move(tail));
    return sentences;
}

}  // namespace surveyforge::text
