#pragma once

#include "trialcea/dataset.hpp"
#include "trialcea/parallel.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace trialcea {

namespace mechanism {

struct None {};

/// Each slot (both outcomes, every visit) missing independently with this probability.
struct Mcar {
    double rate = 0.0;
};

/// logit P(missing) = intercept[arm] + slope[arm]·(baseline − center)/scale
struct LogisticDropout {
    std::array<double, 2> intercept{-10.0, -10.0};
    std::array<double, 2> slope{0.0, 0.0};
    double center = 0.0;
    double scale = 1.0;
};

/// Which follow-up slots share one uniform draw (a slot is missing when its
/// draw falls below its probability). Shared draws make the two outcomes go
/// missing together without changing any slot's marginal probability.
enum class DrawSharing { Independent, PerVisit, PerSubject };

/// Follow-up slots of each outcome go missing with a probability driven by
/// that outcome's own baseline value.
struct MarBaseline {
    LogisticDropout utility;
    LogisticDropout cost;
    DrawSharing sharing = DrawSharing::PerVisit;
};

/// Discrete dropout hazard at each follow-up visit driven by the previous
/// utility value; after dropout both outcomes are missing at all later visits.
struct MarMonotone {
    LogisticDropout hazard;
};

}  // namespace mechanism

using Mechanism = std::variant<mechanism::None, mechanism::Mcar, mechanism::MarBaseline, mechanism::MarMonotone>;

enum class CostDistribution { Normal, LogNormal };

struct SimConfig {
    int n_per_arm = 100;
    std::vector<double> visit_times{0.0, 0.25, 0.75};
    std::array<std::vector<double>, 2> mean_utility;  // [arm][visit]
    std::array<std::vector<double>, 2> mean_cost;
    Eigen::MatrixXd cov_utility;
    Eigen::MatrixXd cov_cost;
    /// Correlation between utility and cost noise at each visit, carried by a
    /// subject-level latent normal shared by both outcomes.
    double cross_correlation = 0.0;
    Mechanism mechanism = mechanism::None{};
    std::uint64_t seed = 1;
    /// LogNormal: mean_cost/cov_cost describe log-costs.
    CostDistribution cost_distribution = CostDistribution::Normal;
};

void validate(const SimConfig& config);

struct SimTruth {
    double delta_qaly = 0.0;
    double delta_cost = 0.0;
};

struct SimulatedTrial {
    TrialDataset data;
    SimTruth truth;
};

SimTruth true_effects(const SimConfig& config);

/// Complete data for replicate 0 of config.seed.
SimulatedTrial gen_trial(const SimConfig& config);
/// Complete data for an arbitrary replicate index (keyed stream).
SimulatedTrial gen_trial(const SimConfig& config, std::uint64_t replicate);

TrialDataset apply_mechanism(const TrialDataset& complete, const Mechanism& m, std::uint64_t seed);

enum class Method { CCA, LMM, MI };
const char* method_name(Method m);

struct StudyOptions {
    std::set<Method> methods{Method::CCA, Method::LMM, Method::MI};
    int mi_imputations = 20;
    double level = 0.95;
    Execution execution = Execution::Parallel;
};

struct Summary {
    std::size_t n = 0;  // successful replicates
    double mean_bias = 0.0, mean_bias_mcse = 0.0;
    double empirical_se = 0.0, empirical_se_mcse = 0.0;
    double model_se = 0.0, model_se_mcse = 0.0;
    double coverage = 0.0, coverage_mcse = 0.0;
};

struct MethodSummary {
    Method method;
    std::size_t n_failed = 0;
    Summary delta_qaly;
    Summary delta_cost;
};

struct ReplicateEstimate {
    bool ok = false;
    double dq = 0.0, dq_se = 0.0, dq_lower = 0.0, dq_upper = 0.0;
    double dc = 0.0, dc_se = 0.0, dc_lower = 0.0, dc_upper = 0.0;
};

struct BiasStudy {
    SimTruth truth;
    std::size_t n_sims = 0;
    std::vector<MethodSummary> methods;
    std::vector<std::vector<ReplicateEstimate>> replicates;  // [method][sim]
    double mean_followup_missing = 0.0;                      // fraction of follow-up slots
    double mean_completer_fraction = 0.0;
};

BiasStudy bias_study(const SimConfig& config, int n_sims, const StudyOptions& options = {});

SimConfig sim_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SimConfig& c);
std::string bias_report_delimited(const BiasStudy& study, char delimiter = ',');

}  // namespace trialcea
