#pragma once

#include <stdexcept>
#include <string>

namespace bcfmc {

// Violated precondition on an index range, scalar domain or argument.
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Operand shapes do not agree with the operator they are passed to.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Refusal to materialize an object larger than the configured memory budget.
class BudgetError : public std::runtime_error {
public:
    BudgetError(const std::string& what, unsigned long long required_bytes)
        : std::runtime_error(what), required_bytes_(required_bytes) {}
    unsigned long long required_bytes() const noexcept { return required_bytes_; }

private:
    unsigned long long required_bytes_;
};

// Non-finite values appeared during an iterative computation.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define BCFMC_REQUIRE(cond, ExcType, msg)      \
    do {                                       \
        if (!(cond)) throw ExcType(msg);       \
    } while (0)

}  // namespace bcfmc
