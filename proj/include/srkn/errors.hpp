#pragma once

#include <stdexcept>
#include <string>

namespace srkn {

// Shape or precondition violated by the caller.
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A loss, gradient or state went non-finite.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ContractError(what);
}

}  // namespace srkn
