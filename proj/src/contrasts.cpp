#include "trialcea/contrasts.hpp"

#include "trialcea/stats.hpp"

#include <cmath>

namespace trialcea {

QalyWeights qaly_weights(std::span<const double> t, std::span<const double> discount) {
    if (t.size() < 2) throw InputError("QALY weights need at least two visits");
    if (t[0] != 0.0) throw InputError("the first visit must be at time 0");
    for (std::size_t j = 1; j < t.size(); ++j)
        if (!(t[j] > t[j - 1])) throw InputError("visit times must be strictly increasing");
    if (!discount.empty() && discount.size() != t.size())
        throw InputError("discount multipliers must have one entry per visit");

    QalyWeights w;
    const std::size_t J = t.size();
    w.base.assign(J, 0.0);
    for (std::size_t j = 0; j + 1 < J; ++j) {
        const double half = 0.5 * (t[j + 1] - t[j]);
        w.base[j] += half;
        w.base[j + 1] += half;
    }
    if (discount.empty()) w.discount.assign(J, 1.0);
    else w.discount.assign(discount.begin(), discount.end());
    return w;
}

double auc(std::span<const double> values, const QalyWeights& w) {
    if (values.size() != w.size()) throw InputError("AUC: value and weight lengths differ");
    double s = 0.0;
    for (std::size_t j = 0; j < values.size(); ++j) s += w[j] * values[j];
    return s;
}

ContrastResult linear_contrast(const FittedMmrm& fit, const ContrastWeights& weights, double level) {
    if (weights.empty()) throw InputError("contrast has no weights");
    const double z = two_sided_z(level);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(fit.beta.size());
    for (const auto& [label, w] : weights) c[static_cast<Eigen::Index>(fit.index_of(label))] += w;
    ContrastResult r;
    r.estimate = c.dot(fit.beta);
    r.se = std::sqrt(std::max(0.0, c.dot(fit.vcov_beta * c)));
    r.lower = r.estimate - z * r.se;
    r.upper = r.estimate + z * r.se;
    return r;
}

ContrastWeights marginal_mean_weights(const FittedMmrm& fit, int arm, std::size_t visit) {
    const std::string time = "TIME" + std::to_string(visit + 1);
    ContrastWeights w{{time, 1.0}};
    if (arm == 1) {
        const std::string trt = time + ":TRT";
        for (const auto& l : fit.labels)
            if (l == trt) w[trt] = 1.0;
    }
    for (const auto& [name, mean] : fit.covariate_means) w[name] = mean;
    return w;
}

std::vector<MarginalMean> marginal_means(const FittedMmrm& fit, double level) {
    std::vector<MarginalMean> out;
    for (int arm = 0; arm < 2; ++arm)
        for (std::size_t j = 0; j < fit.n_visits; ++j)
            out.push_back({arm, j, linear_contrast(fit, marginal_mean_weights(fit, arm, j), level)});
    return out;
}

namespace {

void accumulate(ContrastWeights& into, const ContrastWeights& w, double factor) {
    for (const auto& [label, v] : w) into[label] += factor * v;
}

ContrastWeights difference(const ContrastWeights& a, const ContrastWeights& b) {
    ContrastWeights d = a;
    accumulate(d, b, -1.0);
    std::erase_if(d, [](const auto& kv) { return kv.second == 0.0; });
    return d;
}

ContrastResult contrast_or_zero(const FittedMmrm& fit, const ContrastWeights& w, double level) {
    if (w.empty()) {
        two_sided_z(level);
        return {};
    }
    return linear_contrast(fit, w, level);
}

}  // namespace

ContrastWeights qaly_weights_for_arm(const FittedMmrm& fit, const QalyWeights& w, int arm) {
    if (w.size() != fit.n_visits) throw InputError("QALY weights do not match the fitted visit count");
    ContrastWeights out;
    for (std::size_t j = 0; j < fit.n_visits; ++j) accumulate(out, marginal_mean_weights(fit, arm, j), w[j]);
    return out;
}

ContrastWeights incremental_qaly_weights(const FittedMmrm& fit, const QalyWeights& w) {
    return difference(qaly_weights_for_arm(fit, w, 1), qaly_weights_for_arm(fit, w, 0));
}

ArmContrasts qaly_by_arm(const FittedMmrm& fit, const QalyWeights& w, double level) {
    if (fit.spec.outcome != Outcome::Utility) throw InputError("QALYs require a fit on the utility outcome");
    return {linear_contrast(fit, qaly_weights_for_arm(fit, w, 0), level),
            linear_contrast(fit, qaly_weights_for_arm(fit, w, 1), level),
            contrast_or_zero(fit, incremental_qaly_weights(fit, w), level)};
}

ArmContrasts totalcost_by_arm(const FittedMmrm& fit, double level, bool include_baseline) {
    if (fit.spec.outcome != Outcome::Cost) throw InputError("total costs require a fit on the cost outcome");
    if (fit.n_visits < 2 && !include_baseline) throw InputError("total costs need at least one follow-up visit");
    ContrastWeights arm[2];
    for (int a = 0; a < 2; ++a)
        for (std::size_t j = include_baseline ? 0 : 1; j < fit.n_visits; ++j)
            accumulate(arm[a], marginal_mean_weights(fit, a, j), 1.0);
    return {linear_contrast(fit, arm[0], level), linear_contrast(fit, arm[1], level),
            contrast_or_zero(fit, difference(arm[1], arm[0]), level)};
}

}  // namespace trialcea
