#include "trialcea/comparators.hpp"

#include "trialcea/stats.hpp"
#include "trialcea/textio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace trialcea {

using Eigen::MatrixXd;
using Eigen::VectorXd;

SubjectSummary summarize_complete_subject(const SubjectRecord& s, const QalyWeights& w) {
    if (!s.complete()) throw InputError("subject '" + s.id + "' has missing outcome values");
    SubjectSummary out;
    out.arm = s.arm;
    std::vector<double> u;
    for (const auto& v : s.utility) u.push_back(*v);
    out.qaly = auc(u, w);
    for (std::size_t j = 1; j < s.cost.size(); ++j) out.total_cost += *s.cost[j];
    out.baseline_utility = *s.utility[0];
    out.baseline_cost = *s.cost[0];
    return out;
}

namespace {

ContrastResult with_ci(double estimate, double variance, double z) {
    const double se = std::sqrt(std::max(0.0, variance));
    return {estimate, se, estimate - z * se, estimate + z * se};
}

/// y ~ 1 + trt + baseline; returns (control, intervention, incremental) as
/// estimates with their sampling variances.
struct ArmEstimates {
    std::array<double, 3> estimate;
    std::array<double, 3> variance;
};

ArmEstimates ols_arm_estimates(std::span<const SubjectSummary> s, bool qaly) {
    const auto n = static_cast<Eigen::Index>(s.size());
    if (n <= 3) throw InputError("too few subjects for the baseline-adjusted regression");
    MatrixXd X(n, 3);
    VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = s[static_cast<std::size_t>(i)];
        X(i, 0) = 1.0;
        X(i, 1) = r.arm;
        X(i, 2) = qaly ? r.baseline_utility : r.baseline_cost;
        y[i] = qaly ? r.qaly : r.total_cost;
    }
    const MatrixXd XtX = X.transpose() * X;
    Eigen::LLT<MatrixXd> llt(XtX);
    // relative pivot check: the LLT alone accepts nearly collinear designs
    Eigen::FullPivLU<MatrixXd> lu(XtX);
    lu.setThreshold(1e-12);
    if (llt.info() != Eigen::Success || lu.rank() < 3) throw InputError("collinear regression design");
    const VectorXd beta = llt.solve(X.transpose() * y);
    const double rss = (y - X * beta).squaredNorm();
    const MatrixXd V = (rss / static_cast<double>(n - 3)) * llt.solve(MatrixXd::Identity(3, 3));
    const double xbar = X.col(2).mean();

    ArmEstimates out;
    for (int arm = 0; arm < 2; ++arm) {
        Eigen::Vector3d c(1.0, arm, xbar);
        out.estimate[arm] = c.dot(beta);
        out.variance[arm] = c.dot(V * c);
    }
    out.estimate[2] = beta[1];
    out.variance[2] = V(1, 1);
    return out;
}

ArmContrasts to_contrasts(const ArmEstimates& e, double z) {
    return {with_ci(e.estimate[0], e.variance[0], z), with_ci(e.estimate[1], e.variance[1], z),
            with_ci(e.estimate[2], e.variance[2], z)};
}

}  // namespace

RegressionAnalysis analyze_summaries(std::span<const SubjectSummary> subjects, double level) {
    const double z = two_sided_z(level);
    for (int arm = 0; arm < 2; ++arm)
        if (std::none_of(subjects.begin(), subjects.end(), [arm](const auto& s) { return s.arm == arm; }))
            throw InputError("no analysable subjects in arm " + std::to_string(arm));
    return {to_contrasts(ols_arm_estimates(subjects, true), z), to_contrasts(ols_arm_estimates(subjects, false), z)};
}

CcaResult cca(const TrialDataset& data, const QalyWeights& w, double level) {
    validate(data);
    if (w.size() != data.n_visits()) throw InputError("QALY weights do not match the visit schedule");
    CcaResult out;
    std::vector<SubjectSummary> completers;
    for (const auto& s : data.subjects) {
        if (s.complete()) {
            completers.push_back(summarize_complete_subject(s, w));
            ++out.n_completers[s.arm];
        } else {
            ++out.n_excluded;
        }
    }
    for (int arm = 0; arm < 2; ++arm)
        if (out.n_completers[arm] == 0) throw InputError("no completers in arm " + std::to_string(arm));
    out.analysis = analyze_summaries(completers, level);
    return out;
}

namespace {

/// Within-arm chained-equations imputation for one completed dataset.
void impute_arm(std::vector<SubjectRecord*>& subjects, std::size_t J, int burn_in, std::mt19937_64& rng) {
    const std::size_t n = subjects.size();
    const std::size_t P = 2 * J;  // U1..UJ, C1..CJ
    auto slot = [J](SubjectRecord& s, std::size_t k) -> OptValue& { return k < J ? s.utility[k] : s.cost[k - J]; };

    MatrixXd value(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(P));
    std::vector<std::vector<bool>> observed(P, std::vector<bool>(n));
    std::vector<std::size_t> n_missing(P, 0);
    for (std::size_t k = 0; k < P; ++k) {
        std::vector<double> obs;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& v = slot(*subjects[i], k);
            observed[k][i] = v.has_value();
            if (v) {
                value(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = *v;
                obs.push_back(*v);
            } else {
                ++n_missing[k];
            }
        }
        if (n_missing[k] == 0) continue;
        if (obs.empty())
            throw InputError("cannot impute: variable " + std::string(k < J ? "U" : "C") +
                             std::to_string(k % J + 1) + " has no observed values in an arm");
        // start from random draws of the observed values
        std::uniform_int_distribution<std::size_t> pick(0, obs.size() - 1);
        for (std::size_t i = 0; i < n; ++i)
            if (!observed[k][i]) value(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = obs[pick(rng)];
    }

    std::vector<std::size_t> order;
    for (std::size_t k = 0; k < P; ++k)
        if (n_missing[k] > 0) order.push_back(k);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return n_missing[a] < n_missing[b]; });
    if (order.empty()) return;

    std::normal_distribution<double> z(0.0, 1.0);
    for (int cycle = 0; cycle < burn_in; ++cycle) {
        for (std::size_t k : order) {
            const std::size_t n_obs = n - n_missing[k];
            const auto p = static_cast<Eigen::Index>(P);  // intercept + P−1 predictors
            if (static_cast<Eigen::Index>(n_obs) <= p)
                throw InputError("cannot impute: too few observed values for the chained regression");
            MatrixXd X(static_cast<Eigen::Index>(n_obs), p);
            VectorXd y(static_cast<Eigen::Index>(n_obs));
            auto row = [&](std::size_t i, Eigen::RowVectorXd& out) {
                out[0] = 1.0;
                Eigen::Index c = 1;
                for (std::size_t q = 0; q < P; ++q)
                    if (q != k) out[c++] = value(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q));
            };
            Eigen::Index r = 0;
            Eigen::RowVectorXd x(p);
            for (std::size_t i = 0; i < n; ++i)
                if (observed[k][i]) {
                    row(i, x);
                    X.row(r) = x;
                    y[r] = value(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
                    ++r;
                }
            // column scaling keeps utilities and costs on comparable footing
            VectorXd scale = X.colwise().norm().transpose();
            for (auto& s : scale)
                if (s == 0.0) throw InputError("cannot impute: singular imputation design");
            const MatrixXd Xs = X * scale.cwiseInverse().asDiagonal();
            const MatrixXd XtX = Xs.transpose() * Xs;
            Eigen::LLT<MatrixXd> llt(XtX);
            Eigen::FullPivLU<MatrixXd> lu(XtX);
            lu.setThreshold(1e-10);
            if (llt.info() != Eigen::Success || lu.rank() < p)
                throw InputError("cannot impute: singular imputation design");
            const VectorXd bhat = llt.solve(Xs.transpose() * y);
            const double rss = (y - Xs * bhat).squaredNorm();
            std::chi_squared_distribution<double> chi(static_cast<double>(static_cast<Eigen::Index>(n_obs) - p));
            const double sigma = std::sqrt(rss / chi(rng));
            VectorXd e(p);
            for (auto& x : e) x = z(rng);
            // β* = β̂ + σ*·L⁻ᵀe has covariance σ*²(XᵀX)⁻¹
            const VectorXd bdraw = bhat + sigma * llt.matrixU().solve(e);
            for (std::size_t i = 0; i < n; ++i)
                if (!observed[k][i]) {
                    row(i, x);
                    value(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                        x.cwiseQuotient(scale.transpose()).dot(bdraw) + sigma * z(rng);
                }
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < P; ++k)
            if (!observed[k][i]) slot(*subjects[i], k) = value(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
}

}  // namespace

std::vector<TrialDataset> mi_impute(const TrialDataset& data, int M, std::uint64_t seed, const MiOptions& options) {
    validate(data);
    if (M < 2) throw InputError("multiple imputation needs M >= 2");
    std::vector<TrialDataset> out(static_cast<std::size_t>(M), data);
    for_each_index(options.execution, out.size(), [&](std::size_t m) {
        auto& d = out[m];
        for (int arm = 0; arm < 2; ++arm) {
            std::vector<SubjectRecord*> members;
            for (auto& s : d.subjects)
                if (s.arm == arm) members.push_back(&s);
            if (members.empty()) continue;
            auto rng = keyed_rng(seed, m, static_cast<std::uint64_t>(arm));
            impute_arm(members, d.n_visits(), options.burn_in, rng);
        }
    });
    return out;
}

RubinPooled rubin_pool(std::span<const double> est, std::span<const double> var) {
    if (est.size() != var.size() || est.size() < 2) throw InputError("Rubin's rules need M >= 2 matching estimates");
    const double M = static_cast<double>(est.size());
    RubinPooled r;
    r.estimate = std::accumulate(est.begin(), est.end(), 0.0) / M;
    r.within = std::accumulate(var.begin(), var.end(), 0.0) / M;
    double ss = 0.0;
    for (double e : est) ss += (e - r.estimate) * (e - r.estimate);
    r.between = ss / (M - 1.0);
    r.total = r.within + (1.0 + 1.0 / M) * r.between;
    r.se = std::sqrt(r.total);
    return r;
}

MiResult mi_analyze(std::span<const TrialDataset> completed, const QalyWeights& w, double level) {
    if (completed.size() < 2) throw InputError("pooling needs at least two completed datasets");
    const double z = two_sided_z(level);
    const auto& first = completed.front();
    // [quantity][arm-or-incremental][m]
    std::vector<double> est[2][3], var[2][3];
    for (const auto& d : completed) {
        if (d.subjects.size() != first.subjects.size() || d.n_visits() != first.n_visits())
            throw InputError("completed datasets differ in shape");
        std::vector<SubjectSummary> all;
        for (const auto& s : d.subjects) all.push_back(summarize_complete_subject(s, w));
        const auto a = analyze_summaries(all, level);
        const ArmContrasts* q[2] = {&a.qaly, &a.cost};
        for (int k = 0; k < 2; ++k) {
            const ContrastResult* r[3] = {&q[k]->control, &q[k]->intervention, &q[k]->incremental};
            for (int c = 0; c < 3; ++c) {
                est[k][c].push_back(r[c]->estimate);
                var[k][c].push_back(r[c]->se * r[c]->se);
            }
        }
    }
    MiResult out;
    out.M = static_cast<int>(completed.size());
    ArmContrasts* target[2] = {&out.analysis.qaly, &out.analysis.cost};
    for (int k = 0; k < 2; ++k) {
        ContrastResult* r[3] = {&target[k]->control, &target[k]->intervention, &target[k]->incremental};
        for (int c = 0; c < 3; ++c) {
            const auto pooled = rubin_pool(est[k][c], var[k][c]);
            *r[c] = with_ci(pooled.estimate, pooled.total, z);
            if (c == 2) (k == 0 ? out.qaly_incremental : out.cost_incremental) = pooled;
        }
    }
    return out;
}

LmmResult lmm_analysis(const TrialDataset& data, const QalyWeights& w, const MmrmSpec& utility_spec,
                       const MmrmSpec& cost_spec, double level) {
    LmmResult r;
    r.fit_utility = fit(data, utility_spec);
    r.fit_cost = fit(data, cost_spec);
    r.qaly = qaly_by_arm(r.fit_utility, w, level);
    r.cost = totalcost_by_arm(r.fit_cost, level);
    return r;
}

MethodComparison compare_methods(const TrialDataset& data, const QalyWeights& w, const CompareOptions& o) {
    MethodComparison c;
    c.cca = cca(data, w, o.level);
    const auto imputed = mi_impute(data, o.M, o.seed, o.mi);
    c.mi = mi_analyze(imputed, w, o.level);
    MmrmSpec su, sc;
    su.outcome = Outcome::Utility;
    sc.outcome = Outcome::Cost;
    su.covariance = sc.covariance = o.structure;
    su.extra_covariates = sc.extra_covariates = o.covariates;
    const auto prepared = o.covariates.empty() ? data : mean_impute_covariates(data, o.covariates);
    c.lmm = lmm_analysis(prepared, w, su, sc, o.level);
    const auto& cq = c.cca.analysis.qaly.incremental;
    const auto& cc = c.cca.analysis.cost.incremental;
    c.mi_se_ratio_qaly = c.mi.analysis.qaly.incremental.se / cq.se;
    c.mi_se_ratio_cost = c.mi.analysis.cost.incremental.se / cc.se;
    c.lmm_se_ratio_qaly = c.lmm.qaly.incremental.se / cq.se;
    c.lmm_se_ratio_cost = c.lmm.cost.incremental.se / cc.se;
    return c;
}

namespace {

struct GridRow {
    const char* method;
    const char* quantity;
    const ArmContrasts* values;
};

std::vector<GridRow> grid(const MethodComparison& c) {
    return {{"CCA", "QALYs", &c.cca.analysis.qaly}, {"CCA", "Total costs", &c.cca.analysis.cost},
            {"MI", "QALYs", &c.mi.analysis.qaly},   {"MI", "Total costs", &c.mi.analysis.cost},
            {"LMM", "QALYs", &c.lmm.qaly},          {"LMM", "Total costs", &c.lmm.cost}};
}

nlohmann::json contrast_json(const ContrastResult& r) {
    return {{"estimate", r.estimate}, {"se", r.se}, {"lower", r.lower}, {"upper", r.upper}};
}

}  // namespace

nlohmann::json to_json(const MethodComparison& c) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& g : grid(c))
        rows.push_back({{"method", g.method},
                        {"quantity", g.quantity},
                        {"control", contrast_json(g.values->control)},
                        {"intervention", contrast_json(g.values->intervention)},
                        {"incremental", contrast_json(g.values->incremental)}});
    return {{"rows", rows},
            {"n_completers", c.cca.n_completers},
            {"mi_imputations", c.mi.M},
            {"se_ratio_vs_cca",
             {{"MI", {{"QALYs", c.mi_se_ratio_qaly}, {"Total costs", c.mi_se_ratio_cost}}},
              {"LMM", {{"QALYs", c.lmm_se_ratio_qaly}, {"Total costs", c.lmm_se_ratio_cost}}}}}};
}

std::string comparison_delimited(const MethodComparison& c, char d) {
    std::ostringstream out;
    out << "method" << d << "quantity" << d << "control" << d << "control_se" << d << "intervention" << d
        << "intervention_se" << d << "incremental" << d << "incremental_se\n";
    for (const auto& g : grid(c)) {
        const auto& v = *g.values;
        out << g.method << d << g.quantity << d << format_double(v.control.estimate) << d
            << format_double(v.control.se) << d << format_double(v.intervention.estimate) << d
            << format_double(v.intervention.se) << d << format_double(v.incremental.estimate) << d
            << format_double(v.incremental.se) << '\n';
    }
    out << "se_ratio_vs_cca" << d << "QALYs" << d << "MI" << d << format_double(c.mi_se_ratio_qaly) << d << "LMM" << d
        << format_double(c.lmm_se_ratio_qaly) << d << d << '\n';
    out << "se_ratio_vs_cca" << d << "Total costs" << d << "MI" << d << format_double(c.mi_se_ratio_cost) << d << "LMM"
        << d << format_double(c.lmm_se_ratio_cost) << d << d << '\n';
    return out.str();
}

}  // namespace trialcea
