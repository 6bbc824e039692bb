#include "trialcea/reports.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace trialcea {

namespace {

std::string fixed(double v, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    std::string s = buf;
    if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

std::string count_pct(std::size_t n, double fraction) {
    return std::to_string(n) + "(" + fixed(std::round(fraction * 100.0), 0) + "%)";
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

std::string pattern_table_delimited(const PatternTable& t, const std::array<std::string, 2>& labels,
                                    std::size_t J, char d) {
    std::string out;
    for (std::size_t j = 0; j < J; ++j) out += (j ? " U" : "U") + std::to_string(j + 1);
    for (std::size_t j = 0; j < J; ++j) out += " C" + std::to_string(j + 1);
    out += d + labels[0] + " (N=" + std::to_string(t.arm_n[0]) + ")";
    out += d + labels[1] + " (N=" + std::to_string(t.arm_n[1]) + ")";
    out += d + std::string("Total (N=") + std::to_string(t.arm_n[0] + t.arm_n[1]) + ")\n";
    for (const auto& r : t.rows) {
        std::string pattern;
        for (std::size_t i = 0; i < r.pattern.size(); ++i) {
            if (i) pattern += ' ';
            pattern += r.pattern[i];
        }
        out += pattern + d + count_pct(r.count[0], r.fraction[0]) + d + count_pct(r.count[1], r.fraction[1]) + d +
               count_pct(r.total, r.total_fraction) + '\n';
    }
    return out;
}

nlohmann::json to_json(const PatternTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"pattern", r.pattern},
                        {"count", r.count},
                        {"fraction", r.fraction},
                        {"total", r.total},
                        {"total_fraction", r.total_fraction}});
    return {{"arm_n", t.arm_n}, {"rows", rows}};
}

std::string descriptives_delimited(const DescriptiveTable& t, const std::array<std::string, 2>& labels,
                                   const std::vector<double>& times, char d) {
    std::string out = std::string("outcome") + d + "visit" + d + "time" + d + labels[0] + d + "N" + d + labels[1] +
                      d + "N\n";
    for (Outcome o : {Outcome::Utility, Outcome::Cost}) {
        const int digits = o == Outcome::Utility ? 3 : 0;
        for (std::size_t j = 0; j < times.size(); ++j) {
            out += std::string(outcome_name(o)) + d + std::to_string(j + 1) + d + fixed(times[j], 4);
            for (int arm = 0; arm < 2; ++arm) {
                const auto& c = t.at(o, arm, j);
                out += d;
                out += c.mean ? fixed(*c.mean, digits) : "NA";
                out += " (";
                out += c.sd ? fixed(*c.sd, digits) : "NA";
                out += ")";
                out += d + std::to_string(c.n);
            }
            out += '\n';
        }
    }
    return out;
}

nlohmann::json to_json(const DescriptiveTable& t) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : t.cells)
        cells.push_back({{"outcome", outcome_name(c.outcome)},
                         {"arm", c.arm},
                         {"visit", c.visit + 1},
                         {"n", c.n},
                         {"mean", opt(c.mean)},
                         {"sd", opt(c.sd)}});
    return {{"cells", cells}};
}

std::string coefficient_report(const FittedMmrm& fit_u, const FittedMmrm& fit_c, double level, char d) {
    const auto cu = wald_ci(fit_u, level), cc = wald_ci(fit_c, level);
    const std::string ci = fixed(level * 100, 0) + "% CI";
    std::string out = std::string("coefficient") + d + "utility" + d + ci + d + "cost" + d + ci + '\n';
    auto cell = [&](const std::vector<CoefficientInterval>& v, const std::string& label, int digits) {
        for (const auto& c : v)
            if (c.label == label)
                return fixed(c.estimate, digits) + d + "(" + fixed(c.lower, digits) + "; " + fixed(c.upper, digits) +
                       ")";
        return std::string("NA") + d + "NA";
    };
    std::vector<std::string> labels = fit_u.labels;
    for (const auto& l : fit_c.labels)
        if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
    for (const auto& l : labels) out += l + d + cell(cu, l, 3) + d + cell(cc, l, 0) + '\n';
    return out;
}

}  // namespace trialcea
