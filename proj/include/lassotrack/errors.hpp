#pragma once

#include <stdexcept>
#include <string>

namespace lassotrack {

// I/O, parsing and configuration problems. The CLI maps these to exit code 2.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical and inference failures. The CLI maps these to exit code 1.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// The truncation region carries no representable probability mass under the
// requested location parameter, so the renormalizing denominator underflowed.
class truncation_underflow : public numeric_error {
public:
    explicit truncation_underflow(const std::string& msg) : numeric_error(msg) {}
};

} // namespace lassotrack
