#pragma once

#include <stdexcept>
#include <string>

namespace trialcea {

/// Bad input data or arguments (CLI exit code 2).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A design matrix cannot identify one of its coefficients.
class RankDeficiencyError : public InputError {
public:
    RankDeficiencyError(const std::string& coefficient, const std::string& what)
        : InputError(what), coefficient_(coefficient) {}
    const std::string& coefficient() const noexcept { return coefficient_; }

private:
    std::string coefficient_;
};

/// An iterative fit did not meet its convergence criteria (CLI exit code 3).
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace trialcea
