#pragma once

#include <stdexcept>
#include <string>

namespace sls {

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed input files or documents. line is 1-based, 0 when not applicable.
struct ParseError : std::runtime_error {
    ParseError(const std::string& what, std::size_t line_number = 0)
        : std::runtime_error(what), line(line_number) {}
    std::size_t line;
};

}  // namespace sls

namespace sls {

// The S-slope scan found no pair of distinct training states within the radius.
struct NoNeighborsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sls
