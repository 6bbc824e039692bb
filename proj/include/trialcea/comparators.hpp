#pragma once

#include "trialcea/contrasts.hpp"
#include "trialcea/mmrm.hpp"
#include "trialcea/parallel.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace trialcea {

/// Per-subject aggregates used by the regression-based comparators.
struct SubjectSummary {
    int arm = 0;
    double qaly = 0.0;
    double total_cost = 0.0;  // follow-up visits only
    double baseline_utility = 0.0;
    double baseline_cost = 0.0;
};

SubjectSummary summarize_complete_subject(const SubjectRecord& s, const QalyWeights& w);

/// quantity ~ 1 + treatment + baseline, fitted by OLS; arm means are the
/// model predictions at the mean baseline.
struct RegressionAnalysis {
    ArmContrasts qaly;
    ArmContrasts cost;
};

RegressionAnalysis analyze_summaries(std::span<const SubjectSummary> subjects, double level = 0.95);

struct CcaResult {
    RegressionAnalysis analysis;
    std::array<std::size_t, 2> n_completers{};
    std::size_t n_excluded = 0;
};

CcaResult cca(const TrialDataset& data, const QalyWeights& w, double level = 0.95);

struct MiOptions {
    int burn_in = 10;
    Execution execution = Execution::Parallel;
};

/// Chained normal-regression imputation, separately within each arm; each
/// incomplete outcome slot is regressed on every other outcome slot with
/// parameters drawn from their posterior before drawing the values.
std::vector<TrialDataset> mi_impute(const TrialDataset& data, int M, std::uint64_t seed, const MiOptions& options = {});

struct RubinPooled {
    double estimate = 0.0;
    double within = 0.0;   // W
    double between = 0.0;  // B
    double total = 0.0;    // T = W + (1 + 1/M)·B
    double se = 0.0;
};

RubinPooled rubin_pool(std::span<const double> estimates, std::span<const double> variances);

struct MiResult {
    RegressionAnalysis analysis;
    int M = 0;
    RubinPooled qaly_incremental;
    RubinPooled cost_incremental;
};

MiResult mi_analyze(std::span<const TrialDataset> completed, const QalyWeights& w, double level = 0.95);

struct LmmResult {
    ArmContrasts qaly;
    ArmContrasts cost;
    FittedMmrm fit_utility;
    FittedMmrm fit_cost;
};

LmmResult lmm_analysis(const TrialDataset& data, const QalyWeights& w, const MmrmSpec& utility_spec,
                       const MmrmSpec& cost_spec, double level = 0.95);

struct MethodComparison {
    CcaResult cca;
    MiResult mi;
    LmmResult lmm;
    /// SE ratios relative to CCA for the incremental QALY and total cost.
    double mi_se_ratio_qaly = 0.0, mi_se_ratio_cost = 0.0;
    double lmm_se_ratio_qaly = 0.0, lmm_se_ratio_cost = 0.0;
};

struct CompareOptions {
    int M = 50;
    std::uint64_t seed = 1;
    CovarianceStructure structure = CovarianceStructure::Unstructured;
    std::vector<std::string> covariates;
    double level = 0.95;
    MiOptions mi;
};

MethodComparison compare_methods(const TrialDataset& data, const QalyWeights& w, const CompareOptions& options);

nlohmann::json to_json(const MethodComparison& c);
std::string comparison_delimited(const MethodComparison& c, char delimiter = ',');

}  // namespace trialcea
