#pragma once

#include <stdexcept>
#include <string>

namespace hairmatte {

// Error categories map onto process exit codes: usage/shape -> 2,
// data/io/format -> 3, numeric -> 4.
enum class ErrorKind {
    usage,
    shape,
    data,
    io,
    format,
    numeric,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

    int exit_code() const {
        switch (kind_) {
            case ErrorKind::usage:
            case ErrorKind::shape:
                return 2;
            case ErrorKind::data:
            case ErrorKind::io:
            case ErrorKind::format:
                return 3;
            case ErrorKind::numeric:
                return 4;
        }
        return 1;
    }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) fail(kind, msg);
}

}  // namespace hairmatte
