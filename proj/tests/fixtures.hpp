#pragma once

#include "trialcea/dataset.hpp"

#include <limits>
#include <string>
#include <vector>

namespace trialcea::testing {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// NaN in the value lists marks a missing slot.
inline SubjectRecord subject(std::string id, int arm, std::vector<double> u, std::vector<double> c) {
    SubjectRecord s;
    s.id = std::move(id);
    s.arm = arm;
    for (double v : u) s.utility.push_back(v == v ? OptValue(v) : std::nullopt);
    for (double v : c) s.cost.push_back(v == v ? OptValue(v) : std::nullopt);
    return s;
}

/// Builds a subject whose missingness follows a Table-1 style pattern string
/// ('-' observed, 'X' missing, U1..UJ then C1..CJ).
inline SubjectRecord subject_with_pattern(std::string id, int arm, const std::string& pattern) {
    const std::size_t J = pattern.size() / 2;
    std::vector<double> u, c;
    for (std::size_t j = 0; j < J; ++j) {
        u.push_back(pattern[j] == '-' ? 0.7 : kNaN);
        c.push_back(pattern[J + j] == '-' ? 100.0 : kNaN);
    }
    return subject(std::move(id), arm, u, c);
}

inline TrialDataset dataset(std::vector<SubjectRecord> subjects, std::vector<double> times = {0, 0.25, 0.75}) {
    TrialDataset d;
    d.subjects = std::move(subjects);
    d.visit_times = std::move(times);
    return d;
}

}  // namespace trialcea::testing
