#pragma once

#include "trialcea/dataset.hpp"
#include "trialcea/errors.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace trialcea {

enum class CovarianceStructure {
    Unstructured,         ///< log-Cholesky factor of the full J×J matrix
    RandomInterceptDiag,  ///< σ_ω²·11ᵀ + diag(σ_ε,j²)
    CompoundSymmetry,     ///< σ_ω²·11ᵀ + σ_ε²·I
};

const char* structure_name(CovarianceStructure s);
CovarianceStructure parse_structure(const std::string& name);  // "unstructured" | "ri-diag" | "cs"

std::size_t n_covariance_params(CovarianceStructure s, std::size_t n_visits);

/// Marginal covariance implied by the unconstrained parameter vector. For the
/// unstructured case theta holds the lower triangle of the Cholesky factor row
/// by row (L00, L10, L11, L20, ...), with diagonal entries on the log scale.
/// The other structures take log-variances, between-subject variance first.
Eigen::MatrixXd marginal_covariance(CovarianceStructure s, std::size_t n_visits, const Eigen::VectorXd& theta);

/// Chain rule from dℓ/dΣ (symmetric, entries treated as independent) to dℓ/dθ.
Eigen::VectorXd covariance_gradient(CovarianceStructure s, const Eigen::VectorXd& theta, const Eigen::MatrixXd& dsigma);

/// Parameter vector reproducing (or, for the restricted structures,
/// approximating) an SPD matrix.
Eigen::VectorXd covariance_parameters(CovarianceStructure s, const Eigen::MatrixXd& sigma);

struct MmrmSpec {
    Outcome outcome = Outcome::Utility;
    /// No treatment term at the first visit.
    bool constrained_baseline = true;
    /// When false the model has visit means only (single-arm data).
    bool treatment_terms = true;
    CovarianceStructure covariance = CovarianceStructure::Unstructured;
    std::vector<std::string> extra_covariates;
};

struct SubjectDesign {
    std::string id;
    int arm = 0;
    std::uint32_t pattern = 0;  // bit j set when visit j is observed
    std::vector<int> visits;    // observed visit indices, ascending
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
};

struct MmrmDesign {
    std::size_t n_visits = 0;
    std::vector<std::string> labels;
    std::vector<SubjectDesign> subjects;  // ordered by subject id
    std::size_t n_excluded = 0;           // subjects with the outcome missing at every visit
    std::size_t n_observations = 0;
    std::map<std::string, double> covariate_means;
};

/// Cell-means coding: TIME1..TIMEJ indicators, then TIMEj:TRT for the
/// treatment-bearing visits, then covariate main effects. Rows exist only for
/// observed visits. Throws RankDeficiencyError naming the first coefficient
/// that the pooled design cannot identify.
MmrmDesign build_design(const TrialDataset& data, const MmrmSpec& spec);

/// Observed-data log-likelihood at fixed (theta, beta).
double loglik(const MmrmDesign& design, CovarianceStructure s, const Eigen::VectorXd& theta,
              const Eigen::VectorXd& beta);

struct ProfiledLikelihood {
    Eigen::VectorXd beta;
    double loglik = 0.0;
    Eigen::MatrixXd information;  // Σ_i X_iᵀ V_i⁻¹ X_i
    Eigen::VectorXd gradient;     // dℓ/dθ, filled when requested
};

/// GLS estimate of beta given theta and the log-likelihood there.
ProfiledLikelihood profile_beta(const MmrmDesign& design, CovarianceStructure s, const Eigen::VectorXd& theta,
                                bool with_gradient = false);

/// Starting theta: pairwise-complete covariance of OLS residuals projected to
/// positive definite.
Eigen::VectorXd starting_parameters(const MmrmDesign& design, CovarianceStructure s);

struct Convergence {
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;  // max-norm of dℓ/dθ
};

struct FitOptions {
    int max_iterations = 500;
    double relative_tolerance = 1e-10;
    double gradient_tolerance = 1e-6;
};

struct FittedMmrm {
    MmrmSpec spec;
    std::size_t n_visits = 0;
    std::vector<std::string> labels;
    Eigen::VectorXd beta;
    Eigen::MatrixXd sigma;
    Eigen::MatrixXd vcov_beta;
    Eigen::VectorXd theta;
    double loglik = 0.0;
    double start_loglik = 0.0;
    std::size_t n_subjects_used = 0;
    std::size_t n_subjects_excluded = 0;
    std::map<std::string, double> covariate_means;
    Convergence convergence;

    /// Index of a coefficient label; throws InputError for unknown labels.
    std::size_t index_of(const std::string& label) const;
};

class MmrmConvergenceError : public ConvergenceError {
public:
    MmrmConvergenceError(const std::string& what, FittedMmrm best) : ConvergenceError(what), best_(std::move(best)) {}
    const FittedMmrm& best_so_far() const noexcept { return best_; }

private:
    FittedMmrm best_;
};

/// Maximum-likelihood fit by BFGS on the profiled log-likelihood.
FittedMmrm fit(const MmrmDesign& design, const MmrmSpec& spec, const FitOptions& options = {});
FittedMmrm fit(const TrialDataset& data, const MmrmSpec& spec, const FitOptions& options = {});

struct CoefficientInterval {
    std::string label;
    double estimate = 0.0;
    double se = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

std::vector<CoefficientInterval> wald_ci(const FittedMmrm& fit, double level);

nlohmann::json to_json(const FittedMmrm& fit);

}  // namespace trialcea
