#pragma once

#include <stdexcept>
#include <string>

namespace gridbill {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Raised when an operation is called before its inputs are ready
// (too little history, too few residual samples).
class PreconditionError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace gridbill
