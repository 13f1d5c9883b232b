#pragma once

#include <stdexcept>
#include <string>

namespace rct {

// Shape disagreement between operands (matmul inner dims, broadcast, ...).
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A caller broke a documented precondition (non-scalar backward root,
// missing gradients before an SGD step, absent truth sidecar, ...).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Bad user-supplied data or configuration.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file; carries a 1-based line number when known.
struct ParseError : ValidationError {
    ParseError(const std::string& what, int line_no = -1)
        : ValidationError(line_no >= 0 ? what + " (line " + std::to_string(line_no) + ")" : what),
          line(line_no) {}
    int line;
};

// A tensor operation produced NaN or Inf.
struct NonFiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace rct
