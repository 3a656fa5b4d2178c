#pragma once

#include <stdexcept>
#include <string>

namespace ridgeview {

/// Broad failure classes. The CLI maps these onto its exit codes and the
/// service onto HTTP statuses.
enum class ErrorKind {
    usage,        // bad arguments / malformed request
    data,         // input files, schema, ranges
    numerical,    // rank deficiency, failed recovery, degenerate fits
    not_found,    // unknown dataset, qoi, index
    precondition, // state machine guard (e.g. selector inactive)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

} // namespace ridgeview
