#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace trialcea {

using OptValue = std::optional<double>;

enum class Outcome { Utility, Cost };

const char* outcome_name(Outcome o);

struct SubjectRecord {
    std::string id;
    int arm = 0;
    std::vector<OptValue> utility;  // one slot per visit
    std::vector<OptValue> cost;
    std::map<std::string, OptValue> covariates;

    const std::vector<OptValue>& values(Outcome o) const { return o == Outcome::Utility ? utility : cost; }
    bool complete() const;
    bool any_observed() const;

    bool operator==(const SubjectRecord&) const = default;
};

struct TrialDataset {
    std::vector<SubjectRecord> subjects;
    std::vector<double> visit_times;  // years since randomisation, first is 0
    std::array<std::string, 2> arm_labels{"control", "intervention"};

    std::size_t n_visits() const { return visit_times.size(); }
    std::size_t arm_size(int arm) const;

    bool operator==(const TrialDataset&) const = default;
};

/// Throws InputError when a structural invariant is broken. Soft problems
/// (utility range, negative costs, subjects with nothing observed) are
/// returned by validation_warnings instead.
void validate(const TrialDataset& data);
std::vector<std::string> validation_warnings(const TrialDataset& data);

struct LongSchema {
    std::string id = "id";
    std::string arm = "arm";
    std::string time = "time";
    std::string utility = "u";
    std::string cost = "c";
    std::vector<std::string> covariates;
    char delimiter = ',';
    std::string missing_token = "NA";
    /// Visit times in years. When empty, visits are spaced one year apart.
    std::vector<double> visit_times;
};

/// Reads long-format rows (one per subject and visit index 1..J). Rows that
/// are absent and fields that are empty or equal to the missing token both
/// become missing slots.
TrialDataset load_long(std::istream& in, const LongSchema& schema);

/// Inverse of load_long. Values are written with round-trip precision.
void write_long(std::ostream& out, const TrialDataset& data, const LongSchema& schema);

/// Replaces missing values of the named covariates by their mean over all
/// subjects with the covariate observed (pooled across arms).
TrialDataset mean_impute_covariates(const TrialDataset& data, const std::vector<std::string>& names);

struct PatternRow {
    std::string pattern;  // '-' observed, 'X' missing; U1..UJ then C1..CJ
    std::array<std::size_t, 2> count{};
    std::array<double, 2> fraction{};
    std::size_t total = 0;
    double total_fraction = 0.0;
};

struct PatternTable {
    std::array<std::size_t, 2> arm_n{};
    std::vector<PatternRow> rows;  // descending total, ties by pattern
};

std::string missingness_pattern(const SubjectRecord& s);
PatternTable pattern_table(const TrialDataset& data);

struct DescriptiveCell {
    Outcome outcome;
    int arm;
    std::size_t visit;  // 0-based
    std::size_t n = 0;
    std::optional<double> mean;
    std::optional<double> sd;
};

struct DescriptiveTable {
    std::vector<DescriptiveCell> cells;  // outcome-major, then arm, then visit
    const DescriptiveCell& at(Outcome o, int arm, std::size_t visit) const;
};

DescriptiveTable descriptives(const TrialDataset& data);

}  // namespace trialcea
