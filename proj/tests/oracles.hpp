#pragma once

// Independent reference computations used as test oracles. Nothing here
// calls into the library's estimation code.

#include "trialcea/dataset.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace trialcea::oracle {

/// Bivariate normal log-density through the explicit 2×2 inverse and determinant.
inline double bvn_logdensity(double y1, double y2, double m1, double m2, double s11, double s12, double s22) {
    const double det = s11 * s22 - s12 * s12;
    const double r1 = y1 - m1, r2 = y2 - m2;
    const double quad = (s22 * r1 * r1 - 2.0 * s12 * r1 * r2 + s11 * r2 * r2) / det;
    return -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det) - 0.5 * quad;
}

struct CompleteDataMle {
    double mean[2][8];               // [arm][visit]
    Eigen::MatrixXd pooled_cov;      // divide-by-N
};

/// Closed-form MLE for complete data with a separate mean per arm and visit.
inline CompleteDataMle complete_data_mle(const TrialDataset& d, Outcome o) {
    const std::size_t J = d.n_visits();
    CompleteDataMle out{};
    double n[2] = {0, 0};
    for (int a = 0; a < 2; ++a)
        for (std::size_t j = 0; j < J; ++j) out.mean[a][j] = 0.0;
    for (const auto& s : d.subjects) {
        n[s.arm] += 1;
        for (std::size_t j = 0; j < J; ++j) out.mean[s.arm][j] += *s.values(o)[j];
    }
    for (int a = 0; a < 2; ++a)
        for (std::size_t j = 0; j < J; ++j) out.mean[a][j] /= n[a];
    out.pooled_cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(J));
    for (const auto& s : d.subjects)
        for (std::size_t a = 0; a < J; ++a)
            for (std::size_t b = 0; b < J; ++b)
                out.pooled_cov(a, b) += (*s.values(o)[a] - out.mean[s.arm][a]) * (*s.values(o)[b] - out.mean[s.arm][b]);
    out.pooled_cov /= (n[0] + n[1]);
    return out;
}

struct FactoredMle {
    double mu1, mu2, s11, s12, s22;
};

/// Anderson's factored likelihood for bivariate monotone data: the marginal of
/// visit 1 from everyone, the regression of visit 2 on visit 1 from completers.
inline FactoredMle factored_likelihood(const std::vector<double>& y1, const std::vector<double>& y2_or_nan) {
    double n = 0, s1 = 0;
    for (double v : y1) {
        s1 += v;
        n += 1;
    }
    const double mu1 = s1 / n;
    double s11 = 0;
    for (double v : y1) s11 += (v - mu1) * (v - mu1);
    s11 /= n;

    double nc = 0, a1 = 0, a2 = 0;
    for (std::size_t i = 0; i < y1.size(); ++i)
        if (!std::isnan(y2_or_nan[i])) {
            a1 += y1[i];
            a2 += y2_or_nan[i];
            nc += 1;
        }
    a1 /= nc;
    a2 /= nc;
    double c11 = 0, c12 = 0;
    for (std::size_t i = 0; i < y1.size(); ++i)
        if (!std::isnan(y2_or_nan[i])) {
            c11 += (y1[i] - a1) * (y1[i] - a1);
            c12 += (y1[i] - a1) * (y2_or_nan[i] - a2);
        }
    const double slope = c12 / c11;
    const double intercept = a2 - slope * a1;
    double rss = 0;
    for (std::size_t i = 0; i < y1.size(); ++i)
        if (!std::isnan(y2_or_nan[i])) {
            const double e = y2_or_nan[i] - intercept - slope * y1[i];
            rss += e * e;
        }
    const double s22_1 = rss / nc;
    return {mu1, intercept + slope * mu1, s11, slope * s11, s22_1 + slope * slope * s11};
}

/// Random trial with normal outcomes and independent MCAR holes; used only to
/// exercise code paths, not as a generative truth.
inline TrialDataset random_trial(std::mt19937_64& rng, int n_per_arm, std::size_t J, double miss_prob,
                                 double scale = 1.0) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::bernoulli_distribution miss(miss_prob);
    TrialDataset d;
    for (std::size_t j = 0; j < J; ++j) d.visit_times.push_back(0.25 * static_cast<double>(j));
    for (int arm = 0; arm < 2; ++arm)
        for (int i = 0; i < n_per_arm; ++i) {
            SubjectRecord s;
            s.id = "s" + std::to_string(arm) + "_" + std::to_string(1000 + i);
            s.arm = arm;
            const double b = z(rng), bc = z(rng);
            for (std::size_t j = 0; j < J; ++j) {
                const double u = scale * (0.6 + 0.05 * arm * static_cast<double>(j) + 0.15 * b + 0.1 * z(rng));
                const double c = scale * (500.0 + 80.0 * arm + 150.0 * bc + 100.0 * z(rng));
                s.utility.push_back(j > 0 && miss(rng) ? std::nullopt : OptValue(u));
                s.cost.push_back(j > 0 && miss(rng) ? std::nullopt : OptValue(c));
            }
            d.subjects.push_back(std::move(s));
        }
    return d;
}

}  // namespace trialcea::oracle
