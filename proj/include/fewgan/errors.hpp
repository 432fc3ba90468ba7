#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fewgan {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension or size disagreement between operands.
struct ShapeError : Error {
    using Error::Error;
};

// A caller violated an API precondition.
struct ContractError : Error {
    using Error::Error;
};

// Bad or insufficient input data (empty set, single class, malformed cell).
struct DataError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

// Checkpoint/manifest could not be read back.
struct LoadError : Error {
    using Error::Error;
};

struct EpisodeError : Error {
    using Error::Error;
};

struct SamplerError : Error {
    using Error::Error;
};

// Calibration holdout produced identical discriminator outputs; the caller is
// expected to fall back to the identity calibration.
struct CalibrationDegenerateError : Error {
    using Error::Error;
};

struct TrainingDivergedError : Error {
    std::size_t step;
    TrainingDivergedError(const std::string& msg, std::size_t at_step)
        : Error(msg + " (step " + std::to_string(at_step) + ")"), step(at_step) {}
};

}  // namespace fewgan
