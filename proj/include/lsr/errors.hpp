#ifndef LSR_ERRORS_HPP
#define LSR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lsr {

// Error taxonomy mirrors the CLI exit-code contract:
// config errors -> 2, data errors -> 3, numerical divergence -> 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/contract violations inside the compute layer. Treated as config
// errors at the CLI boundary.
struct ShapeError : ConfigError {
    explicit ShapeError(const std::string& msg) : ConfigError(msg) {}
};

} // namespace lsr

#endif
