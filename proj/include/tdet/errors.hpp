#pragma once

#include <stdexcept>
#include <string>

namespace tdet {

// Base class for every error the library raises on purpose.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A file is missing, unreadable, or a directory cannot be written.
class FileError : public Error {
public:
    using Error::Error;
};

// Manifest CSV problems. Each condition gets its own type so callers can
// react to (or test for) the exact failure.
class ManifestError : public Error {
public:
    using Error::Error;
};

class CsvHeaderError : public ManifestError {
public:
    using ManifestError::ManifestError;
};

class CsvRowError : public ManifestError {
public:
    using ManifestError::ManifestError;
};

class DuplicateIdError : public ManifestError {
public:
    explicit DuplicateIdError(const std::string& id, std::size_t row)
        : ManifestError("duplicate sample id \"" + id + "\" at row " + std::to_string(row)),
          id_(id) {}
    const std::string& id() const { return id_; }

private:
    std::string id_;
};

class LabelValueError : public ManifestError {
public:
    using ManifestError::ManifestError;
};

// Run-configuration file problems.
class ConfigError : public Error {
public:
    using Error::Error;
};

class ConfigUnknownKeyError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class ConfigValueError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class ConfigInvariantError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// Image decode/encode failures.
class ImageError : public Error {
public:
    using Error::Error;
};

// Video/frame-sequence ingestion failures.
class VideoError : public Error {
public:
    using Error::Error;
};

// A face detector broke its contract or failed outright.
class DetectorError : public Error {
public:
    using Error::Error;
};

// Synthetic dataset generation failures (degenerate specs and such).
class SyntheticError : public Error {
public:
    using Error::Error;
};

// Triplet sampling cannot be satisfied by the manifest.
class SamplingError : public Error {
public:
    using Error::Error;
};

// Tensor/network shape mismatches.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Checkpoint archive problems (bad format, wrong parameter counts).
class CheckpointError : public Error {
public:
    using Error::Error;
};

class ScoreValueError : public Error {
public:
    using Error::Error;
};

// Metric preconditions: both classes must be present.
class SingleClassError : public Error {
public:
    using Error::Error;
};

// Experiment plan problems.
class PlanError : public Error {
public:
    using Error::Error;
};

// An output path exists and --overwrite was not given.
class OutputExistsError : public Error {
public:
    explicit OutputExistsError(const std::string& path)
        : Error("refusing to overwrite existing output \"" + path +
                "\"; pass --overwrite to replace it") {}
};

// Feature dimensionality is unusable for the requested operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

}  // namespace tdet
