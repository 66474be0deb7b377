#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace surveyforge::text {

std::string trim(std::string_view s);
std::string trim_right(std::string_view s);

// Splits on '\n'; a '\r' before the newline is dropped.
std::vector<std::string> split_lines(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string to_lower(std::string_view s);

// ceil(bytes / 4): model-agnostic token proxy used for clustering budgets
// and prompt windows.
std::size_t token_estimate(std::string_view s);

// Cuts to at most max_tokens * 4 bytes without splitting a UTF-8 sequence.
std::string truncate_to_tokens(std::string_view s, std::size_t max_tokens);

// Citation markers: a bracket group holding one or more double-quoted keys,
// e.g. ["KEY"] or ["KEY1", "KEY2"]. Returns keys in order of appearance;
// with dedup, later repeats are dropped.
std::vector<std::string> extract_bibkeys(std::string_view s, bool dedup = true);

// Rewrites citation groups so they only mention keys in `known`. Groups left
// empty are removed entirely. Stripped keys are appended to `removed` when
// provided.
std::string strip_unknown_citations(std::string_view body,
                                    const std::set<std::string>& known,
                                    std::vector<std::string>* removed = nullptr);

// Replaces every "{{key}}" with vars.at(key); unknown placeholders are left
// in place.
std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string>& vars);

// First span delimited by the marker pair at or after `from`; the returned
// offsets exclude the markers themselves.
std::optional<std::pair<std::size_t, std::size_t>> find_span(
    std::string_view haystack, std::string_view open, std::string_view close,
    std::size_t from = 0);

// All non-negative integers appearing in s, in order. Everything else is
// ignored, so "5, 8" and "remove 5 and 8" both parse.
std::vector<int> parse_int_list(std::string_view s);

// Items of a numbered list ("1. text" / "2) text"); lines outside the
// numbering are dropped.
std::vector<std::string> parse_numbered_list(std::string_view s);

// Splits on '.', '?', '!' followed by whitespace or end of text. Sentences
// are trimmed; empty pieces are dropped.
std::vector<std::string> split_sentences(std::string_view s);

}  // namespace surveyforge::text
