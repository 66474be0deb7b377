#pragma once

#include <stdexcept>
#include <string>

namespace surveyforge {

// Base class for every error raised by the pipeline. The CLI maps the
// subtree below to process exit codes (see tools/main.cpp).
class PipelineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// survey_tree: heading level jumps, zero/multiple roots, duplicate siblings.
class MalformedTreeError : public PipelineError {
public:
    using PipelineError::PipelineError;
};

// survey_tree: node_at() miss.
class PathNotFoundError : public PipelineError {
public:
    using PipelineError::PipelineError;
};

// model_backend: transport failure that survived all retries.
class BackendUnavailableError : public PipelineError {
public:
    using PipelineError::PipelineError;
};

// model_backend / survey_writer: empty or unusable model output.
class OutputRejectedError : public PipelineError {
public:
    using PipelineError::PipelineError;
};

// model_backend: required field markers absent after retries.
class ExtractionFailedError : public PipelineError {
public:
    using PipelineError::PipelineError;
};

// entropy_scorer / eval_suite: judge value outside its declared range.
class ScoreOutOfRangeError : public PipelineError {
public:
    using PipelineError::PipelineError;
};

// convolution_engine: no candidate has positive entropy mass.
class DegenerateDistributionError : public PipelineError {
public:
    using PipelineError::PipelineError;
};

// orchestrator: persisted artifact does not match its recorded hash.
class IntegrityError : public PipelineError {
public:
    using PipelineError::PipelineError;
};

// orchestrator: run directory state file missing or unreadable.
class CorruptStateError : public PipelineError {
public:
    using PipelineError::PipelineError;
};

// orchestrator_cli: invalid configuration value or file.
class ConfigError : public PipelineError {
public:
    using PipelineError::PipelineError;
};

}  // namespace surveyforge
