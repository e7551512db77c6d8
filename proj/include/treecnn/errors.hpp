#pragma once

#include <stdexcept>
#include <string>

namespace treecnn {

// Error taxonomy mirrored by the CLI exit codes:
//   ConfigError -> 1, ParseError/DataError -> 2, NumericError -> 3.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace treecnn
