#include "surveyforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "surveyforge/errors.hpp"
#include "surveyforge/logging.hpp"
#include "surveyforge/parallel.hpp"
#include "surveyforge/prompts.hpp"
#include "surveyforge/survey_tree.hpp"
#include "surveyforge/text.hpp"

namespace surveyforge {

namespace {

constexpr const char* kReferencesMarker = "---\n**References**";

// Drops the generated references block; bibliography entries are not
// content sentences.
std::string strip_references_block(const std::string& survey_text) {
    size_t pos = survey_text.find(kReferencesMarker);
    if (pos == std::string::npos) return survey_text;
    return survey_text.substr(0, pos);
}

double parse_bounded_score(const std::string& span, double lo, double hi) {
    std::string value = text::trim(span);
    size_t consumed = 0;
    double parsed = 0.0;
    try {
        parsed = std::stod(value, &consumed);
    } catch (const std::exception&) {
        throw ScoreOutOfRangeError("unparseable score: " + value);
    }
    if (consumed != value.size() || !std::isfinite(parsed)) {
        throw ScoreOutOfRangeError("unparseable score: " + value);
    }
    if (parsed < lo || parsed > hi) {
        throw ScoreOutOfRangeError("score " + value + " outside [" + std::to_string(lo) +
                                   "," + std::to_string(hi) + "]");
    }
    return parsed;
}

std::string format_cell(const std::optional<double>& value) {
    if (!value) return "-";
    std::ostringstream out;
    out.precision(2);
    out << std::fixed << *value;
    return out.str();
}

}  // namespace

const char* to_string(Rubric rubric) {
    switch (rubric) {
        case Rubric::structure: return "structure";
        case Rubric::relevance: return "relevance";
        case Rubric::language: return "language";
        case Rubric::criticalness: return "criticalness";
    }
    return "?";
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    auto put = [&](const char* key, const std::optional<double>& value) {
        if (value) {
            j[key] = *value;
        } else {
            j[key] = nullptr;
        }
    };
    put("structure", structure);
    put("faithfulness", faithfulness);
    put("relevance", relevance);
    put("language", language);
    put("criticalness", criticalness);
    if (claim_num) {
        j["claim_num"] = *claim_num;
    } else {
        j["claim_num"] = nullptr;
    }
    put("claim_density", claim_density);
    put("ref_precision", ref_precision);
    put("ref_recall", ref_recall);
    return j;
}

std::string EvalReport::summary_table() const {
    std::ostringstream out;
    out << "metric        value\n";
    out << "------------  ------\n";
    out << "structure     " << format_cell(structure) << "\n";
    out << "faithfulness  " << format_cell(faithfulness) << "\n";
    out << "relevance     " << format_cell(relevance) << "\n";
    out << "language      " << format_cell(language) << "\n";
    out << "criticalness  " << format_cell(criticalness) << "\n";
    out << "claim_num     " << (claim_num ? std::to_string(*claim_num) : "-") << "\n";
    out << "claim_density " << format_cell(claim_density) << "\n";
    out << "ref_precision " << format_cell(ref_precision) << "\n";
    out << "ref_recall    " << format_cell(ref_recall) << "\n";
    return out.str();
}

Evaluator::Evaluator(ModelBackend& backend, std::vector<ReferenceDoc> refs,
                     EvalOptions options)
    : backend_(backend), refs_(std::move(refs)), options_(std::move(options)) {
    if (options_.dedup_batch_size < 2) {
        throw ConfigError("dedup batch size must be at least 2");
    }
    for (const auto& ref : refs_) by_key_[ref.bibkey] = &ref;
}

std::vector<CitedSentence> Evaluator::extract_cited_sentences(
    const std::string& survey_text) {
    std::vector<CitedSentence> sentences;
    for (const auto& chunk : split_sections(strip_references_block(survey_text))) {
        for (const auto& sentence : text::split_sentences(chunk.body)) {
            auto keys = text::extract_bibkeys(sentence);
            if (keys.empty()) continue;
            sentences.push_back(CitedSentence{sentence, keys, chunk.heading_path});
        }
    }
    return sentences;
}

std::string Evaluator::judge_prompt(const std::string& sentence,
                                    const ReferenceDoc& ref) const {
    std::string source =
        text::truncate_to_tokens(ref.full_text, options_.support_window_tokens);
    if (source.size() < ref.full_text.size()) {
        log::info("reference " + ref.bibkey + " truncated to " +
                  std::to_string(options_.support_window_tokens) +
                  " estimated tokens for support judging");
    }
    return prompts::render("judge_support",
                           {{"claim", sentence}, {"source", source}},
                           options_.prompts_dir);
}

bool Evaluator::judge_support(const std::string& sentence, const ReferenceDoc& reference) {
    auto request = make_request(RequestTag::judge, judge_prompt(sentence, reference));
    const int attempts = backend_.policy().max_retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        std::string answer = text::to_lower(text::trim(backend_.generate(request)));
        if (answer.rfind("yes", 0) == 0) return true;
        if (answer.rfind("no", 0) == 0) return false;
        log::warn("support judge answered neither Yes nor No (attempt " +
                  std::to_string(attempt + 1) + ")");
    }
    throw ExtractionFailedError("support judge produced neither Yes nor No after " +
                                std::to_string(attempts) + " attempts");
}

void Evaluator::ensure_judgments(const std::string& survey_text) {
    if (judged_ && judged_text_ == survey_text) return;
    audit_.clear();

    auto sentences = extract_cited_sentences(survey_text);

    struct Pair {
        size_t sentence_index;
        std::string bibkey;
    };
    std::vector<Pair> pairs;
    for (size_t i = 0; i < sentences.size(); ++i) {
        for (const auto& key : sentences[i].cited_bibkeys) {
            pairs.push_back(Pair{i, key});
        }
    }

    std::vector<char> verdicts = parallel_map(
        pairs, backend_.policy().parallelism_limit, [&](const Pair& pair) -> char {
            auto it = by_key_.find(pair.bibkey);
            if (it == by_key_.end()) {
                log::warn("cited bibkey \"" + pair.bibkey +
                          "\" is not in the reference set; counted as unsupported");
                return 0;
            }
            return judge_support(sentences[pair.sentence_index].text, *it->second) ? 1 : 0;
        });

    std::vector<char> sentence_supported(sentences.size(), 0);
    for (size_t i = 0; i < pairs.size(); ++i) {
        audit_.push_back(JudgmentRecord{sentences[pairs[i].sentence_index].text,
                                        pairs[i].bibkey, verdicts[i] != 0});
        if (verdicts[i] != 0) sentence_supported[pairs[i].sentence_index] = 1;
    }

    if (sentences.empty()) {
        log::warn("survey has no cited sentences; faithfulness scored 0");
        faithfulness_value_ = 0.0;
    } else {
        size_t supported = 0;
        for (char s : sentence_supported) supported += static_cast<size_t>(s);
        faithfulness_value_ =
            100.0 * static_cast<double>(supported) / static_cast<double>(sentences.size());
    }
    judged_ = true;
    judged_text_ = survey_text;
}

double Evaluator::faithfulness(const std::string& survey_text) {
    ensure_judgments(survey_text);
    return faithfulness_value_;
}

double Evaluator::rubric_score(const std::string& survey_text, Rubric rubric) {
    const bool five_point = rubric == Rubric::structure || rubric == Rubric::relevance;
    const std::string name = std::string("rubric_") + to_string(rubric);
    auto request = make_request(
        RequestTag::judge,
        prompts::render(name, {{"topic", options_.topic}, {"section", survey_text}},
                        options_.prompts_dir));

    const int attempts = backend_.policy().max_retries + 1;
    std::string last_error;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        std::string span = backend_.generate_extract(request, {{"<SCORE>", "</SCORE>"}})[0];
        try {
            if (five_point) {
                return 20.0 * parse_bounded_score(span, 0.0, 5.0);
            }
            return parse_bounded_score(span, 0.0, 100.0);
        } catch (const ScoreOutOfRangeError& e) {
            last_error = e.what();
            log::warn(std::string(to_string(rubric)) + " rubric rejected (attempt " +
                      std::to_string(attempt + 1) + "): " + last_error);
        }
    }
    throw ScoreOutOfRangeError(std::string(to_string(rubric)) + " rubric failed after " +
                               std::to_string(attempts) + " attempts: " + last_error);
}

std::vector<std::string> Evaluator::extract_claims(const std::string& section_text) {
    if (text::trim(section_text).empty()) return {};
    auto request = make_request(
        RequestTag::judge,
        prompts::render("extract_claims", {{"text", section_text}}, options_.prompts_dir));
    return text::parse_numbered_list(backend_.generate(request));
}

std::vector<std::string> Evaluator::dedup_claims(const std::vector<std::string>& claims,
                                                 int batch_size) {
    if (batch_size < 2) throw ConfigError("dedup batch size must be at least 2");

    // One judge call over a numbered group; returns the survivors in order.
    auto dedup_group = [&](const std::vector<std::string>& group) {
        if (group.size() < 2) return group;
        std::string numbered;
        for (size_t i = 0; i < group.size(); ++i) {
            numbered += std::to_string(i + 1) + ". " + group[i] + "\n";
        }
        auto request = make_request(
            RequestTag::judge,
            prompts::render("dedup_claims", {{"claims", numbered}}, options_.prompts_dir));
        std::string response = backend_.generate(request);
        std::set<size_t> removed;
        for (int index : text::parse_int_list(response)) {
            if (index >= 1 && static_cast<size_t>(index) <= group.size()) {
                removed.insert(static_cast<size_t>(index));
            } else {
                log::warn("dedup removal index " + std::to_string(index) +
                          " out of range; ignored");
            }
        }
        std::vector<std::string> kept;
        for (size_t i = 0; i < group.size(); ++i) {
            if (!removed.count(i + 1)) kept.push_back(group[i]);
        }
        return kept;
    };

    // Phase 1: intra-group dedup over batches in input order.
    std::vector<std::vector<std::string>> groups;
    for (size_t start = 0; start < claims.size();
         start += static_cast<size_t>(batch_size)) {
        size_t end = std::min(claims.size(), start + static_cast<size_t>(batch_size));
        groups.push_back(
            dedup_group({claims.begin() + static_cast<std::ptrdiff_t>(start),
                         claims.begin() + static_cast<std::ptrdiff_t>(end)}));
    }
    if (groups.empty()) return {};

    // Phase 2: pair adjacent groups and dedup the concatenation, repeating
    // until one group remains.
    while (groups.size() > 1) {
        std::vector<std::vector<std::string>> merged;
        for (size_t i = 0; i < groups.size(); i += 2) {
            if (i + 1 < groups.size()) {
                std::vector<std::string> pair = groups[i];
                pair.insert(pair.end(), groups[i + 1].begin(), groups[i + 1].end());
                merged.push_back(dedup_group(pair));
            } else {
                merged.push_back(groups[i]);
            }
        }
        groups = std::move(merged);
    }
    return groups.front();
}

std::pair<int, double> Evaluator::claim_metrics(const ClaimSet& claims) {
    const int unique = static_cast<int>(claims.unique_claims.size());
    if (claims.raw_claims.empty()) {
        log::warn("no claims extracted; claim density scored 0");
        return {0, 0.0};
    }
    return {unique, 100.0 * static_cast<double>(unique) /
                        static_cast<double>(claims.raw_claims.size())};
}

std::pair<double, double> Evaluator::reference_metrics(const std::string& survey_text) {
    if (refs_.empty()) throw ConfigError("reference metrics require a reference set");
    ensure_judgments(survey_text);

    std::set<std::string> supporting;
    for (const auto& record : audit_) {
        if (record.supported) supporting.insert(record.bibkey);
    }
    std::set<std::string> appearing;
    for (const auto& key : text::extract_bibkeys(survey_text)) appearing.insert(key);

    size_t supported_refs = 0;
    size_t appearing_refs = 0;
    for (const auto& ref : refs_) {
        if (supporting.count(ref.bibkey)) ++supported_refs;
        if (appearing.count(ref.bibkey)) ++appearing_refs;
    }
    const double total = static_cast<double>(refs_.size());
    return {100.0 * static_cast<double>(supported_refs) / total,
            100.0 * static_cast<double>(appearing_refs) / total};
}

EvalReport Evaluator::evaluate(const std::string& survey_text) {
    EvalReport report;
    if (options_.run_structure) {
        report.structure = rubric_score(survey_text, Rubric::structure);
    }
    if (options_.run_relevance) {
        report.relevance = rubric_score(survey_text, Rubric::relevance);
    }
    if (options_.run_language) {
        report.language = rubric_score(survey_text, Rubric::language);
    }
    if (options_.run_criticalness) {
        report.criticalness = rubric_score(survey_text, Rubric::criticalness);
    }
    if (options_.run_faithfulness) {
        report.faithfulness = faithfulness(survey_text);
    }
    if (options_.run_claims) {
        ClaimSet claims;
        auto chunks = split_sections(strip_references_block(survey_text));
        std::vector<std::vector<std::string>> per_section = parallel_map(
            chunks, backend_.policy().parallelism_limit,
            [&](const SectionChunk& chunk) { return extract_claims(chunk.body); });
        for (size_t i = 0; i < chunks.size(); ++i) {
            for (auto& claim : per_section[i]) {
                claims.raw_claims.emplace_back(chunks[i].heading_path, std::move(claim));
            }
        }
        std::vector<std::string> raw_texts;
        raw_texts.reserve(claims.raw_claims.size());
        for (const auto& [_, claim] : claims.raw_claims) raw_texts.push_back(claim);
        claims.unique_claims = dedup_claims(raw_texts, options_.dedup_batch_size);
        auto [num, density] = claim_metrics(claims);
        report.claim_num = num;
        report.claim_density = density;
    }
    if (options_.run_references) {
        auto [precision, recall] = reference_metrics(survey_text);
        report.ref_precision = precision;
        report.ref_recall = recall;
        // A supporting reference must appear at least once.
        if (precision > recall + 1e-9) {
            throw PipelineError("reference precision exceeds recall; judgment state is inconsistent");
        }
    }
    return report;
}

}  // namespace surveyforge
