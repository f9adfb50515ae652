#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cuebench {

// Error taxonomy. The CLI maps these onto process exit codes:
//   usage_error -> 1, data_error -> 2, invariant_error -> 3.
// Library code throws data_error for malformed or inconsistent inputs
// (files, manifests, mismatched ids) and invariant_error when an internal
// contract that should hold by construction is violated.
struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

struct data_error : error {
    explicit data_error(const std::string& msg) : error(msg) {}
};

struct invariant_error : error {
    explicit invariant_error(const std::string& msg) : error(msg) {}
};

struct usage_error : error {
    explicit usage_error(const std::string& msg) : error(msg) {}
};

using id64 = std::int64_t;

} // namespace cuebench
