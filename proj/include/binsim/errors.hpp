// Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include <stdexcept>
#include <string>

namespace binsim {

// Equal-length preconditions on the bit kernels and tensor shapes.
struct DimensionError : std::invalid_argument {
    explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Moment tuples that cannot come from any bit pair.
struct InvalidMomentsError : std::invalid_argument {
    explicit InvalidMomentsError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Out-of-range genes, unknown built-in names.
struct InvalidGenomeError : std::invalid_argument {
    explicit InvalidGenomeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Malformed genome text; message carries the character position.
struct ParseError : std::invalid_argument {
    explicit ParseError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Bad magic, truncation, invalid labels; message carries the byte offset.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Schema violations and unresolvable paths in run configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Population initialization could not meet the fitness bar within budget.
struct InitFailureError : std::runtime_error {
    explicit InitFailureError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace binsim
