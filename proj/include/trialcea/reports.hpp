#pragma once

#include "trialcea/dataset.hpp"
#include "trialcea/mmrm.hpp"

#include <json.hpp>

#include <array>
#include <string>

namespace trialcea {

/// Cells read "n(pct%)" with percentages rounded to the nearest integer.
std::string pattern_table_delimited(const PatternTable& t, const std::array<std::string, 2>& arm_labels,
                                    std::size_t n_visits, char delimiter = '\t');
nlohmann::json to_json(const PatternTable& t);

/// Cells read "mean (sd)" followed by an N column; absent values print NA.
std::string descriptives_delimited(const DescriptiveTable& t, const std::array<std::string, 2>& arm_labels,
                                   const std::vector<double>& visit_times, char delimiter = '\t');
nlohmann::json to_json(const DescriptiveTable& t);

/// One row per coefficient with estimate and CI from each model.
std::string coefficient_report(const FittedMmrm& fit_u, const FittedMmrm& fit_c, double level = 0.95,
                               char delimiter = '\t');

}  // namespace trialcea
