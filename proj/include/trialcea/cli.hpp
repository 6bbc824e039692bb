#pragma once

#include "trialcea/dataset.hpp"
#include "trialcea/mmrm.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace trialcea::cli {

enum ExitCode { kOk = 0, kInputError = 2, kConvergenceError = 3, kInternalError = 4 };

struct KGrid {
    double lo = 0.0, hi = 50000.0, step = 500.0;
};

KGrid parse_k_grid(const std::string& text);  // "lo:hi:step"

struct RunConfig {
    std::string input;
    LongSchema schema;
    std::optional<char> delimiter;  // unset: sniffed from the header line
    std::size_t bootstrap = 10000;
    std::uint64_t seed = 1;
    double k = 25000.0;
    KGrid k_grid;
    int mi = 50;
    std::vector<std::string> covariates;
    std::string out = ".";
    CovarianceStructure structure = CovarianceStructure::Unstructured;
    double level = 0.95;
    int n_sims = 0;            // simulate: replicates of the bias study (0 → dataset only)
    int study_mi = 20;         // simulate: imputations per replicate
    int max_iterations = 500;  // optimizer cap per model fit
    bool serial = false;
};

/// Applies the keys present in j on top of base.
RunConfig apply_config(RunConfig base, const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);

/// Full command line (without the program name). Returns the exit code;
/// errors are reported on err as one line "error[kind]: message".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace trialcea::cli
