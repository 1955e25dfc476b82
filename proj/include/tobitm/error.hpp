#pragma once

#include <stdexcept>
#include <string>

namespace tobitm {

// Two failure classes surface to callers: bad input (data, flags, config)
// and numerical breakdown during estimation. The CLI maps them to exit
// codes 1 and 2.
enum class ErrorKind { invalid_input, numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string module, const std::string& what)
        : std::runtime_error(module + ": " + what), kind_(kind), module_(std::move(module)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& module() const noexcept { return module_; }

private:
    ErrorKind kind_;
    std::string module_;
};

inline Error invalid_input(std::string module, const std::string& what) {
    return Error(ErrorKind::invalid_input, std::move(module), what);
}

inline Error numerical_failure(std::string module, const std::string& what) {
    return Error(ErrorKind::numerical, std::move(module), what);
}

}  // namespace tobitm
