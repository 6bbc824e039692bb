#pragma once

#include "trialcea/mmrm.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace trialcea {

using ContrastWeights = std::map<std::string, double>;

struct ContrastResult {
    double estimate = 0.0;
    double se = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

/// Area-under-the-curve weights for a visit schedule: half the gap to each
/// neighbouring visit, then multiplied by the per-visit discount factors.
struct QalyWeights {
    std::vector<double> base;      // years
    std::vector<double> discount;  // multipliers, default 1

    std::size_t size() const { return base.size(); }
    double operator[](std::size_t j) const { return base[j] * discount[j]; }
};

QalyWeights qaly_weights(std::span<const double> visit_times_years, std::span<const double> discount = {});

double auc(std::span<const double> values, const QalyWeights& w);

ContrastResult linear_contrast(const FittedMmrm& fit, const ContrastWeights& weights, double level = 0.95);

/// Weights giving the model mean for an arm at a visit (covariates at their
/// pooled sample means).
ContrastWeights marginal_mean_weights(const FittedMmrm& fit, int arm, std::size_t visit);

struct MarginalMean {
    int arm;
    std::size_t visit;
    ContrastResult value;
};

std::vector<MarginalMean> marginal_means(const FittedMmrm& fit, double level = 0.95);

struct ArmContrasts {
    ContrastResult control;
    ContrastResult intervention;
    ContrastResult incremental;
};

/// Weighted sums of marginal means. The incremental weights are the
/// difference of the two arms' weights, so baseline cancels under the
/// constrained model.
ContrastWeights qaly_weights_for_arm(const FittedMmrm& fit_u, const QalyWeights& w, int arm);
ContrastWeights incremental_qaly_weights(const FittedMmrm& fit_u, const QalyWeights& w);
ArmContrasts qaly_by_arm(const FittedMmrm& fit_u, const QalyWeights& w, double level = 0.95);

/// Sum of follow-up means (visits 2..J unless include_baseline).
ArmContrasts totalcost_by_arm(const FittedMmrm& fit_c, double level = 0.95, bool include_baseline = false);

}  // namespace trialcea
