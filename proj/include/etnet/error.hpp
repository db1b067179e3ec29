#pragma once

#include <stdexcept>
#include <string>

namespace etnet {

// Error carries a stable machine-readable kind ("shape", "config", "io", ...)
// next to the human message. The CLI maps kind onto its JSON error envelope.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

[[noreturn]] inline void fail(const std::string& kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool cond, const std::string& kind, const std::string& message) {
    if (!cond) fail(kind, message);
}

} // namespace etnet
