#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mhdd {

/// Base class for domain failures (program, decode, verify, reset).
class domain_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class precondition_violation : public domain_error {
public:
    using domain_error::domain_error;
};

class decode_failure : public domain_error {
public:
    using domain_error::domain_error;
};

class reset_failure : public domain_error {
public:
    using domain_error::domain_error;
};

class pool_exhausted : public domain_error {
public:
    using domain_error::domain_error;
};

/// Raised when program-and-verify gives up; carries the last measured conductance.
class program_failure : public domain_error {
public:
    program_failure(const std::string& what, int target_level, double last_G, int last_level)
        : domain_error(what), target_level_(target_level), last_G_(last_G), last_level_(last_level) {}
    int target_level() const noexcept { return target_level_; }
    double last_G() const noexcept { return last_G_; }
    int last_level() const noexcept { return last_level_; }

private:
    int target_level_;
    double last_G_;
    int last_level_;
};

/// Malformed input text; `offset` is the byte position where parsing stopped.
class parse_error : public std::runtime_error {
public:
    parse_error(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class unsupported_format : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Array or key file failed structural, version or checksum validation.
class format_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mhdd
