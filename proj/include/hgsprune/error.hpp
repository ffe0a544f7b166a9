#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hgsp {

/// Invalid sizes, grids, rates or config documents.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Shape or topology violations: mask dimension mismatch, pruning a
/// non-prunable channel, a layer reaching zero channels.
class StructuralError : public std::logic_error {
public:
    explicit StructuralError(const std::string& what) : std::logic_error(what) {}
};

/// Raised by a training stage, e.g. on a non-finite loss.
class TrainingError : public std::runtime_error {
public:
    explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

/// Checkpoint / CSV / dataset I/O failures.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// A pipeline stage failed; `stage` names it and what() carries the cause.
class StageFailure : public std::runtime_error {
public:
    StageFailure(std::string stage, const std::string& cause)
        : std::runtime_error(stage + ": " + cause), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// A report was requested from a run directory that lacks artifacts.
class IncompleteManifest : public std::runtime_error {
public:
    explicit IncompleteManifest(std::vector<std::string> missing)
        : std::runtime_error("incomplete run: " + std::to_string(missing.size()) + " missing artifact(s)"),
          missing_(std::move(missing)) {}
    const std::vector<std::string>& missing() const noexcept { return missing_; }

private:
    std::vector<std::string> missing_;
};

}  // namespace hgsp
