#include "trialcea/simulate.hpp"

#include "trialcea/comparators.hpp"
#include "trialcea/errors.hpp"
#include "trialcea/textio.hpp"

#include <cmath>
#include <sstream>

namespace trialcea {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void require_spd(const MatrixXd& m, std::size_t J, const char* what) {
    if (static_cast<std::size_t>(m.rows()) != J || static_cast<std::size_t>(m.cols()) != J)
        throw InputError(std::string(what) + " must be " + std::to_string(J) + "x" + std::to_string(J));
    if (!m.isApprox(m.transpose(), 1e-12)) throw InputError(std::string(what) + " is not symmetric");
    Eigen::LLT<MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) throw InputError(std::string(what) + " is not positive definite");
}

/// Noise covariance left after removing the shared component ρ·s·sᵀ.
MatrixXd residual_covariance(const MatrixXd& cov, double rho) {
    const VectorXd sd = cov.diagonal().cwiseSqrt();
    return cov - std::abs(rho) * sd * sd.transpose();
}

/// Cholesky factor of a positive semi-definite matrix (zero rows allowed).
MatrixXd psd_factor(const MatrixXd& m, const char* what) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m);
    const double tol = 1e-12 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
    if (eig.eigenvalues().minCoeff() < -tol)
        throw InputError(std::string(what) + " minus the shared cross-outcome component is not positive semi-definite; "
                                             "reduce |cross_correlation|");
    return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double dropout_probability(const mechanism::LogisticDropout& d, int arm, double value) {
    return logistic(d.intercept[arm] + d.slope[arm] * (value - d.center) / d.scale);
}

}  // namespace

void validate(const SimConfig& c) {
    const std::size_t J = c.visit_times.size();
    if (c.n_per_arm < 2) throw InputError("simulation needs at least 2 subjects per arm");
    if (J < 2) throw InputError("simulation needs at least 2 visits");
    for (int a = 0; a < 2; ++a)
        if (c.mean_utility[a].size() != J || c.mean_cost[a].size() != J)
            throw InputError("mean vectors must have one entry per visit");
    require_spd(c.cov_utility, J, "utility covariance");
    require_spd(c.cov_cost, J, "cost covariance");
    if (!(std::abs(c.cross_correlation) <= 1.0)) throw InputError("cross_correlation must lie in [-1, 1]");
    psd_factor(residual_covariance(c.cov_utility, c.cross_correlation), "utility covariance");
    psd_factor(residual_covariance(c.cov_cost, c.cross_correlation), "cost covariance");
    if (const auto* m = std::get_if<mechanism::Mcar>(&c.mechanism); m && !(m->rate >= 0.0 && m->rate <= 1.0))
        throw InputError("MCAR rate must lie in [0, 1]");
}

SimTruth true_effects(const SimConfig& c) {
    const auto w = qaly_weights(c.visit_times);
    SimTruth t;
    for (std::size_t j = 1; j < c.visit_times.size(); ++j) {
        t.delta_qaly += w[j] * (c.mean_utility[1][j] - c.mean_utility[0][j]);
        if (c.cost_distribution == CostDistribution::Normal) {
            t.delta_cost += c.mean_cost[1][j] - c.mean_cost[0][j];
        } else {
            const double v = c.cov_cost(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
            t.delta_cost += std::exp(c.mean_cost[1][j] + 0.5 * v) - std::exp(c.mean_cost[0][j] + 0.5 * v);
        }
    }
    return t;
}

SimulatedTrial gen_trial(const SimConfig& c) { return gen_trial(c, 0); }

SimulatedTrial gen_trial(const SimConfig& c, std::uint64_t replicate) {
    validate(c);
    const std::size_t J = c.visit_times.size();
    const auto n = static_cast<Eigen::Index>(J);
    const double rho = c.cross_correlation;
    const double shared = std::sqrt(std::abs(rho));
    const double cost_sign = rho < 0.0 ? -1.0 : 1.0;
    const VectorXd sd_u = c.cov_utility.diagonal().cwiseSqrt();
    const VectorXd sd_c = c.cov_cost.diagonal().cwiseSqrt();
    const MatrixXd Lu = psd_factor(residual_covariance(c.cov_utility, rho), "utility covariance");
    const MatrixXd Lc = psd_factor(residual_covariance(c.cov_cost, rho), "cost covariance");

    auto rng = keyed_rng(c.seed, replicate, 0);
    std::normal_distribution<double> z(0.0, 1.0);
    SimulatedTrial out;
    out.truth = true_effects(c);
    out.data.visit_times = c.visit_times;
    for (int arm = 0; arm < 2; ++arm)
        for (int i = 0; i < c.n_per_arm; ++i) {
            const double latent = z(rng);
            VectorXd eu(n), ec(n);
            for (auto& x : eu) x = z(rng);
            for (auto& x : ec) x = z(rng);
            const VectorXd u = shared * latent * sd_u + Lu * eu;
            const VectorXd cst = cost_sign * shared * latent * sd_c + Lc * ec;
            SubjectRecord s;
            char id[32];
            std::snprintf(id, sizeof id, "a%d-%05d", arm, i + 1);
            s.id = id;
            s.arm = arm;
            for (std::size_t j = 0; j < J; ++j) {
                const auto k = static_cast<Eigen::Index>(j);
                s.utility.emplace_back(c.mean_utility[arm][j] + u[k]);
                const double lc = c.mean_cost[arm][j] + cst[k];
                s.cost.emplace_back(c.cost_distribution == CostDistribution::Normal ? lc : std::exp(lc));
            }
            out.data.subjects.push_back(std::move(s));
        }
    return out;
}

TrialDataset apply_mechanism(const TrialDataset& complete, const Mechanism& m, std::uint64_t seed) {
    TrialDataset out = complete;
    auto rng = keyed_rng(seed, 0x6d656368ULL);  // "mech"
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const std::size_t J = complete.n_visits();

    std::visit(
        [&](const auto& mech) {
            using T = std::decay_t<decltype(mech)>;
            if constexpr (std::is_same_v<T, mechanism::Mcar>) {
                for (auto& s : out.subjects)
                    for (auto* v : {&s.utility, &s.cost})
                        for (auto& x : *v)
                            if (unif(rng) < mech.rate) x.reset();
            } else if constexpr (std::is_same_v<T, mechanism::MarBaseline>) {
                for (auto& s : out.subjects) {
                    if (!s.utility[0] || !s.cost[0]) throw InputError("MarBaseline needs observed baseline values");
                    const double pu = dropout_probability(mech.utility, s.arm, *s.utility[0]);
                    const double pc = dropout_probability(mech.cost, s.arm, *s.cost[0]);
                    const double subject_draw = unif(rng);
                    for (std::size_t j = 1; j < J; ++j) {
                        double du = subject_draw, dc = subject_draw;
                        if (mech.sharing == mechanism::DrawSharing::PerVisit) {
                            du = dc = unif(rng);
                        } else if (mech.sharing == mechanism::DrawSharing::Independent) {
                            du = unif(rng);
                            dc = unif(rng);
                        }
                        if (du < pu) s.utility[j].reset();
                        if (dc < pc) s.cost[j].reset();
                    }
                }
            } else if constexpr (std::is_same_v<T, mechanism::MarMonotone>) {
                for (auto& s : out.subjects) {
                    for (std::size_t j = 1; j < J; ++j) {
                        if (!s.utility[j - 1]) throw InputError("MarMonotone needs observed pre-dropout utilities");
                        if (unif(rng) < dropout_probability(mech.hazard, s.arm, *s.utility[j - 1])) {
                            for (std::size_t k = j; k < J; ++k) {
                                s.utility[k].reset();
                                s.cost[k].reset();
                            }
                            break;
                        }
                    }
                }
            }
        },
        m);
    return out;
}

const char* method_name(Method m) {
    switch (m) {
        case Method::CCA: return "CCA";
        case Method::LMM: return "LMM";
        case Method::MI: return "MI";
    }
    return "?";
}

namespace {

ReplicateEstimate from_contrasts(const ArmContrasts& q, const ArmContrasts& c) {
    return {true,
            q.incremental.estimate, q.incremental.se, q.incremental.lower, q.incremental.upper,
            c.incremental.estimate, c.incremental.se, c.incremental.lower, c.incremental.upper};
}

Summary summarize(const std::vector<ReplicateEstimate>& reps, bool qaly, double truth) {
    Summary s;
    double sum = 0.0, sum_se = 0.0, covered = 0.0;
    for (const auto& r : reps) {
        if (!r.ok) continue;
        ++s.n;
        const double est = qaly ? r.dq : r.dc;
        sum += est;
        sum_se += qaly ? r.dq_se : r.dc_se;
        const double lo = qaly ? r.dq_lower : r.dc_lower, hi = qaly ? r.dq_upper : r.dc_upper;
        covered += (lo <= truth && truth <= hi) ? 1.0 : 0.0;
    }
    if (s.n < 2) return s;
    const double n = static_cast<double>(s.n);
    const double mean = sum / n;
    s.model_se = sum_se / n;
    double ss = 0.0, ss_se = 0.0;
    for (const auto& r : reps) {
        if (!r.ok) continue;
        const double est = qaly ? r.dq : r.dc;
        const double se = qaly ? r.dq_se : r.dc_se;
        ss += (est - mean) * (est - mean);
        ss_se += (se - s.model_se) * (se - s.model_se);
    }
    s.mean_bias = mean - truth;
    s.empirical_se = std::sqrt(ss / (n - 1.0));
    s.mean_bias_mcse = s.empirical_se / std::sqrt(n);
    s.empirical_se_mcse = s.empirical_se / std::sqrt(2.0 * (n - 1.0));
    s.model_se_mcse = std::sqrt(ss_se / (n - 1.0)) / std::sqrt(n);
    s.coverage = covered / n;
    s.coverage_mcse = std::sqrt(s.coverage * (1.0 - s.coverage) / n);
    return s;
}

}  // namespace

BiasStudy bias_study(const SimConfig& config, int n_sims, const StudyOptions& o) {
    validate(config);
    if (n_sims < 100) throw InputError("bias study needs at least 100 simulated trials");
    const std::vector<Method> methods(o.methods.begin(), o.methods.end());
    const auto w = qaly_weights(config.visit_times);
    const auto N = static_cast<std::size_t>(n_sims);

    BiasStudy study;
    study.truth = true_effects(config);
    study.n_sims = N;
    study.replicates.assign(methods.size(), std::vector<ReplicateEstimate>(N));
    std::vector<double> missing(N), completers(N);

    MmrmSpec su, sc;
    su.outcome = Outcome::Utility;
    sc.outcome = Outcome::Cost;

    for_each_index(o.execution, N, [&](std::size_t r) {
        const auto trial = gen_trial(config, r);
        const auto data = apply_mechanism(trial.data, config.mechanism, config.seed ^ (0x5bd1e995ULL * (r + 1)));
        std::size_t fu = 0, fu_missing = 0, done = 0;
        for (const auto& s : data.subjects) {
            for (std::size_t j = 1; j < data.n_visits(); ++j) {
                fu += 2;
                fu_missing += !s.utility[j] + !s.cost[j];
            }
            done += s.complete();
        }
        missing[r] = static_cast<double>(fu_missing) / static_cast<double>(fu);
        completers[r] = static_cast<double>(done) / static_cast<double>(data.subjects.size());

        for (std::size_t k = 0; k < methods.size(); ++k) {
            auto& slot = study.replicates[k][r];
            try {
                switch (methods[k]) {
                    case Method::CCA: {
                        const auto res = cca(data, w, o.level);
                        slot = from_contrasts(res.analysis.qaly, res.analysis.cost);
                        break;
                    }
                    case Method::LMM: {
                        const auto res = lmm_analysis(data, w, su, sc, o.level);
                        slot = from_contrasts(res.qaly, res.cost);
                        break;
                    }
                    case Method::MI: {
                        MiOptions mo;
                        mo.execution = Execution::Serial;
                        const auto imp = mi_impute(data, o.mi_imputations, config.seed + 7919 * (r + 1), mo);
                        const auto res = mi_analyze(imp, w, o.level);
                        slot = from_contrasts(res.analysis.qaly, res.analysis.cost);
                        break;
                    }
                }
            } catch (const std::exception&) {
                slot.ok = false;  // counted below
            }
        }
    });

    for (std::size_t k = 0; k < methods.size(); ++k) {
        MethodSummary ms;
        ms.method = methods[k];
        for (const auto& r : study.replicates[k]) ms.n_failed += !r.ok;
        ms.delta_qaly = summarize(study.replicates[k], true, study.truth.delta_qaly);
        ms.delta_cost = summarize(study.replicates[k], false, study.truth.delta_cost);
        study.methods.push_back(ms);
    }
    for (std::size_t r = 0; r < N; ++r) {
        study.mean_followup_missing += missing[r] / static_cast<double>(N);
        study.mean_completer_fraction += completers[r] / static_cast<double>(N);
    }
    return study;
}

std::string bias_report_delimited(const BiasStudy& s, char d) {
    std::ostringstream out;
    out << "method" << d << "quantity" << d << "truth" << d << "n" << d << "n_failed" << d << "mean_bias" << d
        << "mean_bias_mcse" << d << "empirical_se" << d << "empirical_se_mcse" << d << "model_se" << d
        << "model_se_mcse" << d << "coverage" << d << "coverage_mcse\n";
    for (const auto& m : s.methods) {
        for (int q = 0; q < 2; ++q) {
            const auto& x = q == 0 ? m.delta_qaly : m.delta_cost;
            out << method_name(m.method) << d << (q == 0 ? "delta_qaly" : "delta_cost") << d
                << format_double(q == 0 ? s.truth.delta_qaly : s.truth.delta_cost) << d << x.n << d << m.n_failed << d
                << format_double(x.mean_bias) << d << format_double(x.mean_bias_mcse) << d
                << format_double(x.empirical_se) << d << format_double(x.empirical_se_mcse) << d
                << format_double(x.model_se) << d << format_double(x.model_se_mcse) << d
                << format_double(x.coverage) << d << format_double(x.coverage_mcse) << '\n';
        }
    }
    return out.str();
}

namespace {

MatrixXd matrix_from_json(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.empty()) throw InputError(std::string(what) + " must be a non-empty array of rows");
    const auto n = static_cast<Eigen::Index>(j.size());
    MatrixXd m(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
            throw InputError(std::string(what) + " must be square");
        for (Eigen::Index c = 0; c < n; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

nlohmann::json matrix_to_json(const MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

mechanism::LogisticDropout dropout_from_json(const nlohmann::json& j) {
    mechanism::LogisticDropout d;
    auto pair = [](const nlohmann::json& v) {
        if (v.is_number()) return std::array<double, 2>{v.get<double>(), v.get<double>()};
        return v.get<std::array<double, 2>>();
    };
    if (j.contains("intercept")) d.intercept = pair(j["intercept"]);
    if (j.contains("slope")) d.slope = pair(j["slope"]);
    d.center = j.value("center", 0.0);
    d.scale = j.value("scale", 1.0);
    if (!(d.scale > 0.0)) throw InputError("dropout scale must be positive");
    return d;
}

nlohmann::json dropout_to_json(const mechanism::LogisticDropout& d) {
    return {{"intercept", d.intercept}, {"slope", d.slope}, {"center", d.center}, {"scale", d.scale}};
}

}  // namespace

SimConfig sim_config_from_json(const nlohmann::json& j) {
    try {
        SimConfig c;
        c.n_per_arm = j.value("n_per_arm", c.n_per_arm);
        if (j.contains("visit_times")) c.visit_times = j["visit_times"].get<std::vector<double>>();
        c.mean_utility = j.at("mean_utility").get<std::array<std::vector<double>, 2>>();
        c.mean_cost = j.at("mean_cost").get<std::array<std::vector<double>, 2>>();
        c.cov_utility = matrix_from_json(j.at("cov_utility"), "cov_utility");
        c.cov_cost = matrix_from_json(j.at("cov_cost"), "cov_cost");
        c.cross_correlation = j.value("cross_correlation", 0.0);
        c.seed = j.value("seed", std::uint64_t{1});
        const auto dist = j.value("cost_distribution", std::string("normal"));
        if (dist == "normal") c.cost_distribution = CostDistribution::Normal;
        else if (dist == "lognormal") c.cost_distribution = CostDistribution::LogNormal;
        else throw InputError("cost_distribution must be 'normal' or 'lognormal'");

        if (j.contains("mechanism")) {
            const auto& m = j["mechanism"];
            const auto type = m.at("type").get<std::string>();
            if (type == "none") {
                c.mechanism = mechanism::None{};
            } else if (type == "mcar") {
                c.mechanism = mechanism::Mcar{m.at("rate").get<double>()};
            } else if (type == "mar_baseline") {
                mechanism::MarBaseline mb;
                if (m.contains("utility")) mb.utility = dropout_from_json(m["utility"]);
                if (m.contains("cost")) mb.cost = dropout_from_json(m["cost"]);
                const auto sharing = m.value("sharing", std::string("per_visit"));
                if (sharing == "per_visit") mb.sharing = mechanism::DrawSharing::PerVisit;
                else if (sharing == "per_subject") mb.sharing = mechanism::DrawSharing::PerSubject;
                else if (sharing == "independent") mb.sharing = mechanism::DrawSharing::Independent;
                else throw InputError("mechanism sharing must be per_visit, per_subject or independent");
                c.mechanism = mb;
            } else if (type == "mar_monotone") {
                c.mechanism = mechanism::MarMonotone{dropout_from_json(m.at("hazard"))};
            } else {
                throw InputError("unknown mechanism type '" + type + "'");
            }
        }
        validate(c);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("simulation config: ") + e.what());
    }
}

nlohmann::json to_json(const SimConfig& c) {
    nlohmann::json mech = std::visit(
        [](const auto& m) -> nlohmann::json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, mechanism::None>) return {{"type", "none"}};
            else if constexpr (std::is_same_v<T, mechanism::Mcar>) return {{"type", "mcar"}, {"rate", m.rate}};
            else if constexpr (std::is_same_v<T, mechanism::MarBaseline>)
                return {{"type", "mar_baseline"},
                        {"utility", dropout_to_json(m.utility)},
                        {"cost", dropout_to_json(m.cost)},
                        {"sharing", m.sharing == mechanism::DrawSharing::PerVisit     ? "per_visit"
                                    : m.sharing == mechanism::DrawSharing::PerSubject ? "per_subject"
                                                                                      : "independent"}};
            else return {{"type", "mar_monotone"}, {"hazard", dropout_to_json(m.hazard)}};
        },
        c.mechanism);
    return {{"n_per_arm", c.n_per_arm},
            {"visit_times", c.visit_times},
            {"mean_utility", c.mean_utility},
            {"mean_cost", c.mean_cost},
            {"cov_utility", matrix_to_json(c.cov_utility)},
            {"cov_cost", matrix_to_json(c.cov_cost)},
            {"cross_correlation", c.cross_correlation},
            {"seed", c.seed},
            {"cost_distribution", c.cost_distribution == CostDistribution::Normal ? "normal" : "lognormal"},
            {"mechanism", mech}};
}

}  // namespace trialcea
