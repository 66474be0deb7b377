#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "surveyforge/backend.hpp"
#include "surveyforge/initializer.hpp"
#include "surveyforge/vendor_json.hpp"

namespace surveyforge {

struct CitedSentence {
    std::string text;
    std::vector<std::string> cited_bibkeys;  // distinct keys, appearance order
    std::vector<std::string> section_path;
};

struct ClaimSet {
    std::vector<std::pair<std::vector<std::string>, std::string>> raw_claims;
    std::vector<std::string> unique_claims;
};

// All metric outputs; judge-based fields are absent when their toggle is
// off. Percentages are 0..100.
struct EvalReport {
    std::optional<double> structure;
    std::optional<double> faithfulness;
    std::optional<double> relevance;
    std::optional<double> language;
    std::optional<double> criticalness;
    std::optional<int> claim_num;
    std::optional<double> claim_density;
    std::optional<double> ref_precision;
    std::optional<double> ref_recall;

    nlohmann::json to_json() const;
    std::string summary_table() const;
};

enum class Rubric { structure, relevance, language, criticalness };
const char* to_string(Rubric rubric);

struct JudgmentRecord {
    std::string sentence;
    std::string bibkey;
    bool supported = false;
};

struct EvalOptions {
    std::string prompts_dir;
    std::string topic;
    std::size_t support_window_tokens = 100000;  // reference text cap for judging
    int dedup_batch_size = 300;
    bool run_structure = true;
    bool run_faithfulness = true;
    bool run_relevance = true;
    bool run_language = true;
    bool run_criticalness = true;
    bool run_claims = true;
    bool run_references = true;
};

class Evaluator {
public:
    Evaluator(ModelBackend& backend, std::vector<ReferenceDoc> refs,
              EvalOptions options = {});

    // Sentence segmentation by terminal punctuation; a sentence is cited iff
    // it carries at least one ["BIBKEY"] marker. The generated references
    // block (--- + **References**) is excluded.
    static std::vector<CitedSentence> extract_cited_sentences(
        const std::string& survey_text);

    // One Yes/No judge call at temperature 0 over (sentence, reference full
    // text); answer prefix decides.
    bool judge_support(const std::string& sentence, const ReferenceDoc& reference);

    // 100 x |cited sentences with >= 1 supporting citation| / |cited
    // sentences|; zero cited sentences scores 0 with a warning. Judgments
    // are cached for reference_metrics.
    double faithfulness(const std::string& survey_text);

    // structure/relevance: judged 0..5 then x20; language/criticalness:
    // three-dimension prompts judged directly on 0..100.
    double rubric_score(const std::string& survey_text, Rubric rubric);

    // Numbered-list decomposition of one section.
    std::vector<std::string> extract_claims(const std::string& section_text);

    // Two-phase dedup: within batches of batch_size, then tournament-style
    // pairwise merges of the surviving groups until one remains.
    std::vector<std::string> dedup_claims(const std::vector<std::string>& claims,
                                          int batch_size);

    static std::pair<int, double> claim_metrics(const ClaimSet& claims);

    // precision: share of references judged to support >= 1 cited sentence
    // (reuses the faithfulness judgments); recall: share of references
    // whose bibkey appears anywhere in the survey.
    std::pair<double, double> reference_metrics(const std::string& survey_text);

    EvalReport evaluate(const std::string& survey_text);

    const std::vector<JudgmentRecord>& audit_log() const { return audit_; }

private:
    std::string judge_prompt(const std::string& sentence, const ReferenceDoc& ref) const;
    void ensure_judgments(const std::string& survey_text);

    ModelBackend& backend_;
    std::vector<ReferenceDoc> refs_;
    std::map<std::string, const ReferenceDoc*> by_key_;
    EvalOptions options_;
    bool judged_ = false;
    std::string judged_text_;
    std::vector<JudgmentRecord> audit_;  // one row per (sentence, bibkey) pair
    double faithfulness_value_ = 0.0;
};

}  // namespace surveyforge
