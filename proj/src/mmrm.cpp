#include "trialcea/mmrm.hpp"

#include "trialcea/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace trialcea {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* structure_name(CovarianceStructure s) {
    switch (s) {
        case CovarianceStructure::Unstructured: return "unstructured";
        case CovarianceStructure::RandomInterceptDiag: return "ri-diag";
        case CovarianceStructure::CompoundSymmetry: return "cs";
    }
    return "?";
}

CovarianceStructure parse_structure(const std::string& name) {
    if (name == "unstructured" || name == "un") return CovarianceStructure::Unstructured;
    if (name == "ri-diag") return CovarianceStructure::RandomInterceptDiag;
    if (name == "cs") return CovarianceStructure::CompoundSymmetry;
    throw InputError("unknown covariance structure '" + name + "' (expected unstructured, ri-diag or cs)");
}

std::size_t n_covariance_params(CovarianceStructure s, std::size_t n_visits) {
    switch (s) {
        case CovarianceStructure::Unstructured: return n_visits * (n_visits + 1) / 2;
        case CovarianceStructure::RandomInterceptDiag: return 1 + n_visits;
        case CovarianceStructure::CompoundSymmetry: return 2;
    }
    return 0;
}

namespace {

MatrixXd cholesky_factor(std::size_t J, const VectorXd& theta) {
    MatrixXd L = MatrixXd::Zero(J, J);
    Eigen::Index k = 0;
    for (std::size_t a = 0; a < J; ++a)
        for (std::size_t b = 0; b <= a; ++b, ++k) L(a, b) = a == b ? std::exp(theta[k]) : theta[k];
    return L;
}

}  // namespace

MatrixXd marginal_covariance(CovarianceStructure s, std::size_t J, const VectorXd& theta) {
    if (static_cast<std::size_t>(theta.size()) != n_covariance_params(s, J))
        throw InputError("covariance parameter vector has length " + std::to_string(theta.size()) + ", expected " +
                         std::to_string(n_covariance_params(s, J)));
    const auto n = static_cast<Eigen::Index>(J);
    switch (s) {
        case CovarianceStructure::Unstructured: {
            const MatrixXd L = cholesky_factor(J, theta);
            return L * L.transpose();
        }
        case CovarianceStructure::RandomInterceptDiag: {
            MatrixXd S = MatrixXd::Constant(n, n, std::exp(theta[0]));
            for (Eigen::Index j = 0; j < n; ++j) S(j, j) += std::exp(theta[1 + j]);
            return S;
        }
        case CovarianceStructure::CompoundSymmetry: {
            MatrixXd S = MatrixXd::Constant(n, n, std::exp(theta[0]));
            S.diagonal().array() += std::exp(theta[1]);
            return S;
        }
    }
    return {};
}

VectorXd covariance_gradient(CovarianceStructure s, const VectorXd& theta, const MatrixXd& dsigma) {
    const auto J = static_cast<std::size_t>(dsigma.rows());
    VectorXd g(theta.size());
    switch (s) {
        case CovarianceStructure::Unstructured: {
            // Σ = L Lᵀ  ⇒  dℓ/dL = (G + Gᵀ) L
            const MatrixXd L = cholesky_factor(J, theta);
            const MatrixXd dL = (dsigma + dsigma.transpose()) * L;
            Eigen::Index k = 0;
            for (std::size_t a = 0; a < J; ++a)
                for (std::size_t b = 0; b <= a; ++b, ++k) g[k] = a == b ? dL(a, b) * L(a, a) : dL(a, b);
            break;
        }
        case CovarianceStructure::RandomInterceptDiag:
            g[0] = std::exp(theta[0]) * dsigma.sum();
            for (Eigen::Index j = 0; j < dsigma.rows(); ++j) g[1 + j] = std::exp(theta[1 + j]) * dsigma(j, j);
            break;
        case CovarianceStructure::CompoundSymmetry:
            g[0] = std::exp(theta[0]) * dsigma.sum();
            g[1] = std::exp(theta[1]) * dsigma.trace();
            break;
    }
    return g;
}

VectorXd covariance_parameters(CovarianceStructure s, const MatrixXd& sigma) {
    const auto J = static_cast<std::size_t>(sigma.rows());
    VectorXd theta(n_covariance_params(s, J));
    switch (s) {
        case CovarianceStructure::Unstructured: {
            Eigen::LLT<MatrixXd> llt(sigma);
            if (llt.info() != Eigen::Success) throw InputError("covariance matrix is not positive definite");
            const MatrixXd L = llt.matrixL();
            Eigen::Index k = 0;
            for (std::size_t a = 0; a < J; ++a)
                for (std::size_t b = 0; b <= a; ++b, ++k) theta[k] = a == b ? std::log(L(a, a)) : L(a, b);
            break;
        }
        case CovarianceStructure::RandomInterceptDiag: {
            const double v = sigma.diagonal().mean();
            theta[0] = std::log(0.5 * v);
            for (std::size_t j = 0; j < J; ++j) theta[1 + j] = std::log(0.5 * v);
            break;
        }
        case CovarianceStructure::CompoundSymmetry: {
            const double v = sigma.diagonal().mean();
            theta[0] = theta[1] = std::log(0.5 * v);
            break;
        }
    }
    return theta;
}

std::size_t FittedMmrm::index_of(const std::string& label) const {
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) throw InputError("unknown coefficient label '" + label + "'");
    return static_cast<std::size_t>(it - labels.begin());
}

namespace {

std::string time_label(std::size_t j) { return "TIME" + std::to_string(j + 1); }

/// Modified Gram-Schmidt over the stacked design; reports the first column
/// lying in the span of its predecessors.
void check_identifiable(const MmrmDesign& d) {
    const auto p = static_cast<Eigen::Index>(d.labels.size());
    MatrixXd X(static_cast<Eigen::Index>(d.n_observations), p);
    Eigen::Index r = 0;
    for (const auto& s : d.subjects) {
        X.middleRows(r, s.X.rows()) = s.X;
        r += s.X.rows();
    }
    std::vector<VectorXd> basis;
    for (Eigen::Index k = 0; k < p; ++k) {
        VectorXd v = X.col(k);
        const double scale = v.norm();
        for (const auto& q : basis) v -= q.dot(v) * q;
        const double resid = v.norm();
        if (scale == 0.0 || resid <= 1e-9 * scale) {
            const auto& label = d.labels[static_cast<std::size_t>(k)];
            throw RankDeficiencyError(label, "coefficient '" + label + "' is not identified by the observed data");
        }
        basis.push_back(v / resid);
    }
}

}  // namespace

MmrmDesign build_design(const TrialDataset& data, const MmrmSpec& spec) {
    validate(data);
    const std::size_t J = data.n_visits();
    if (J == 0 || J > 31) throw InputError("number of visits must be between 1 and 31");

    MmrmDesign d;
    d.n_visits = J;
    for (std::size_t j = 0; j < J; ++j) d.labels.push_back(time_label(j));
    std::vector<std::size_t> trt_visits;
    if (spec.treatment_terms)
        for (std::size_t j = spec.constrained_baseline ? 1 : 0; j < J; ++j) {
            trt_visits.push_back(j);
            d.labels.push_back(time_label(j) + ":TRT");
        }
    for (const auto& c : spec.extra_covariates) d.labels.push_back(c);
    const auto p = static_cast<Eigen::Index>(d.labels.size());
    const auto cov0 = static_cast<Eigen::Index>(J + trt_visits.size());

    std::vector<const SubjectRecord*> order;
    for (const auto& s : data.subjects) order.push_back(&s);
    std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

    for (const auto* rec : order) {
        const auto& values = rec->values(spec.outcome);
        SubjectDesign s;
        s.id = rec->id;
        s.arm = rec->arm;
        for (std::size_t j = 0; j < J; ++j)
            if (values[j]) {
                s.visits.push_back(static_cast<int>(j));
                s.pattern |= 1u << j;
            }
        if (s.visits.empty()) {
            ++d.n_excluded;
            continue;
        }
        std::vector<double> cov;
        for (const auto& c : spec.extra_covariates) {
            auto it = rec->covariates.find(c);
            if (it == rec->covariates.end()) throw InputError("unknown covariate '" + c + "'");
            if (!it->second)
                throw InputError("covariate '" + c + "' is missing for subject '" + rec->id +
                                 "' (impute covariates before fitting)");
            cov.push_back(*it->second);
        }
        const auto n = static_cast<Eigen::Index>(s.visits.size());
        s.X = MatrixXd::Zero(n, p);
        s.y.resize(n);
        for (Eigen::Index r = 0; r < n; ++r) {
            const auto j = static_cast<std::size_t>(s.visits[static_cast<std::size_t>(r)]);
            s.y[r] = *values[j];
            s.X(r, static_cast<Eigen::Index>(j)) = 1.0;
            if (rec->arm == 1) {
                auto it = std::find(trt_visits.begin(), trt_visits.end(), j);
                if (it != trt_visits.end()) s.X(r, static_cast<Eigen::Index>(J) + (it - trt_visits.begin())) = 1.0;
            }
            for (std::size_t k = 0; k < cov.size(); ++k) s.X(r, cov0 + static_cast<Eigen::Index>(k)) = cov[k];
        }
        d.n_observations += static_cast<std::size_t>(n);
        d.subjects.push_back(std::move(s));
    }
    if (d.subjects.empty())
        throw InputError(std::string("no subject has an observed ") + outcome_name(spec.outcome) + " value");

    for (std::size_t k = 0; k < spec.extra_covariates.size(); ++k) {
        double sum = 0.0;
        for (const auto& s : d.subjects) sum += s.X(0, cov0 + static_cast<Eigen::Index>(k));
        d.covariate_means[spec.extra_covariates[k]] = sum / static_cast<double>(d.subjects.size());
    }
    check_identifiable(d);
    return d;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// Per-pattern factorisation of the principal submatrix of Σ.
struct PatternCache {
    std::vector<std::uint32_t> masks;
    std::vector<MatrixXd> inverse;
    std::vector<double> logdet;
    std::vector<std::size_t> subject_pattern;
};

PatternCache factor_patterns(const MmrmDesign& d, const MatrixXd& sigma) {
    PatternCache c;
    c.subject_pattern.reserve(d.subjects.size());
    for (const auto& s : d.subjects) {
        auto it = std::find(c.masks.begin(), c.masks.end(), s.pattern);
        if (it == c.masks.end()) {
            const auto n = static_cast<Eigen::Index>(s.visits.size());
            MatrixXd V(n, n);
            for (Eigen::Index a = 0; a < n; ++a)
                for (Eigen::Index b = 0; b < n; ++b)
                    V(a, b) = sigma(s.visits[static_cast<std::size_t>(a)], s.visits[static_cast<std::size_t>(b)]);
            Eigen::LLT<MatrixXd> llt(V);
            if (llt.info() != Eigen::Success) throw ConvergenceError("covariance submatrix is numerically singular");
            const MatrixXd L = llt.matrixL();
            double logdet = 0.0;
            for (Eigen::Index k = 0; k < n; ++k) logdet += 2.0 * std::log(L(k, k));
            if (!std::isfinite(logdet)) throw ConvergenceError("covariance submatrix is numerically singular");
            c.masks.push_back(s.pattern);
            c.inverse.push_back(llt.solve(MatrixXd::Identity(n, n)));
            c.logdet.push_back(logdet);
            it = c.masks.end() - 1;
        }
        c.subject_pattern.push_back(static_cast<std::size_t>(it - c.masks.begin()));
    }
    return c;
}

}  // namespace

double loglik(const MmrmDesign& d, CovarianceStructure s, const VectorXd& theta, const VectorXd& beta) {
    const MatrixXd sigma = marginal_covariance(s, d.n_visits, theta);
    const PatternCache cache = factor_patterns(d, sigma);
    double ll = 0.0;
    for (std::size_t i = 0; i < d.subjects.size(); ++i) {
        const auto& subj = d.subjects[i];
        const auto k = cache.subject_pattern[i];
        const VectorXd r = subj.y - subj.X * beta;
        ll += -0.5 * (static_cast<double>(r.size()) * kLog2Pi + cache.logdet[k] + r.dot(cache.inverse[k] * r));
    }
    return ll;
}

ProfiledLikelihood profile_beta(const MmrmDesign& d, CovarianceStructure s, const VectorXd& theta,
                                bool with_gradient) {
    const MatrixXd sigma = marginal_covariance(s, d.n_visits, theta);
    const PatternCache cache = factor_patterns(d, sigma);
    const auto p = static_cast<Eigen::Index>(d.labels.size());

    MatrixXd A = MatrixXd::Zero(p, p);
    VectorXd b = VectorXd::Zero(p);
    for (std::size_t i = 0; i < d.subjects.size(); ++i) {
        const auto& subj = d.subjects[i];
        const MatrixXd W = cache.inverse[cache.subject_pattern[i]] * subj.X;
        A.noalias() += subj.X.transpose() * W;
        b.noalias() += W.transpose() * subj.y;
    }
    Eigen::LLT<MatrixXd> llt(A);
    if (llt.info() != Eigen::Success)
        throw RankDeficiencyError("", "GLS information matrix is singular at the current covariance parameters");

    ProfiledLikelihood out;
    out.beta = llt.solve(b);
    out.information = std::move(A);

    double ll = 0.0;
    MatrixXd G = MatrixXd::Zero(static_cast<Eigen::Index>(d.n_visits), static_cast<Eigen::Index>(d.n_visits));
    std::vector<std::size_t> per_pattern(cache.masks.size(), 0);
    for (std::size_t i = 0; i < d.subjects.size(); ++i) {
        const auto& subj = d.subjects[i];
        const auto k = cache.subject_pattern[i];
        const VectorXd r = subj.y - subj.X * out.beta;
        const VectorXd w = cache.inverse[k] * r;
        ll += -0.5 * (static_cast<double>(r.size()) * kLog2Pi + cache.logdet[k] + r.dot(w));
        if (with_gradient) {
            ++per_pattern[k];
            for (std::size_t a = 0; a < subj.visits.size(); ++a)
                for (std::size_t c = 0; c < subj.visits.size(); ++c)
                    G(subj.visits[a], subj.visits[c]) += 0.5 * w[static_cast<Eigen::Index>(a)] *
                                                         w[static_cast<Eigen::Index>(c)];
        }
    }
    out.loglik = ll;
    if (with_gradient) {
        // dℓ/dΣ = ½ Σ_i embed(V_i⁻¹ r_i r_iᵀ V_i⁻¹ − V_i⁻¹); beta is at its profile optimum so no chain term.
        for (std::size_t k = 0; k < cache.masks.size(); ++k) {
            std::vector<int> vis;
            for (int j = 0; j < static_cast<int>(d.n_visits); ++j)
                if (cache.masks[k] & (1u << j)) vis.push_back(j);
            const double m = static_cast<double>(per_pattern[k]);
            for (std::size_t a = 0; a < vis.size(); ++a)
                for (std::size_t c = 0; c < vis.size(); ++c)
                    G(vis[a], vis[c]) -= 0.5 * m *
                                         cache.inverse[k](static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c));
        }
        out.gradient = covariance_gradient(s, theta, G);
    }
    return out;
}

VectorXd starting_parameters(const MmrmDesign& d, CovarianceStructure s) {
    const auto J = static_cast<Eigen::Index>(d.n_visits);
    const auto p = static_cast<Eigen::Index>(d.labels.size());
    MatrixXd A = MatrixXd::Zero(p, p);
    VectorXd b = VectorXd::Zero(p);
    for (const auto& subj : d.subjects) {
        A.noalias() += subj.X.transpose() * subj.X;
        b.noalias() += subj.X.transpose() * subj.y;
    }
    const VectorXd beta = A.ldlt().solve(b);

    // pairwise-complete covariance of the OLS residuals
    MatrixXd sum = MatrixXd::Zero(J, J), sxa = MatrixXd::Zero(J, J), sxb = MatrixXd::Zero(J, J);
    Eigen::MatrixXi n = Eigen::MatrixXi::Zero(J, J);
    for (const auto& subj : d.subjects) {
        const VectorXd r = subj.y - subj.X * beta;
        for (std::size_t a = 0; a < subj.visits.size(); ++a)
            for (std::size_t c = 0; c < subj.visits.size(); ++c) {
                const int va = subj.visits[a], vc = subj.visits[c];
                const double ra = r[static_cast<Eigen::Index>(a)], rc = r[static_cast<Eigen::Index>(c)];
                sum(va, vc) += ra * rc;
                sxa(va, vc) += ra;
                sxb(va, vc) += rc;
                ++n(va, vc);
            }
    }
    MatrixXd S = MatrixXd::Zero(J, J);
    for (Eigen::Index a = 0; a < J; ++a)
        for (Eigen::Index c = 0; c < J; ++c)
            if (n(a, c) > 1) {
                const double m = n(a, c);
                S(a, c) = (sum(a, c) - sxa(a, c) * sxb(a, c) / m) / (m - 1.0);
            }
    S = 0.5 * (S + S.transpose());
    double floor = 1e-6 * S.diagonal().mean();
    if (!(floor > 0.0)) floor = 1e-6;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(S);
    VectorXd ev = eig.eigenvalues().cwiseMax(floor);
    S = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
    S = 0.5 * (S + S.transpose());
    return covariance_parameters(s, S);
}

namespace {

struct Evaluation {
    bool ok = false;
    double f = std::numeric_limits<double>::infinity();  // −ℓ
    VectorXd grad;                                       // d(−ℓ)/dθ
};

Evaluation evaluate(const MmrmDesign& d, CovarianceStructure s, const VectorXd& theta) {
    Evaluation e;
    if (!theta.allFinite() || theta.maxCoeff() > 700.0) return e;
    try {
        auto pl = profile_beta(d, s, theta, true);
        if (!std::isfinite(pl.loglik) || !pl.gradient.allFinite()) return e;
        e.ok = true;
        e.f = -pl.loglik;
        e.grad = -pl.gradient;
    } catch (const ConvergenceError&) {
    } catch (const RankDeficiencyError&) {
    }
    return e;
}

/// RMS of the OLS residuals; the optimizer works on outcomes divided by it.
double outcome_scale(const MmrmDesign& d) {
    const auto p = static_cast<Eigen::Index>(d.labels.size());
    MatrixXd A = MatrixXd::Zero(p, p);
    VectorXd b = VectorXd::Zero(p);
    for (const auto& subj : d.subjects) {
        A.noalias() += subj.X.transpose() * subj.X;
        b.noalias() += subj.X.transpose() * subj.y;
    }
    const VectorXd beta = A.ldlt().solve(b);
    double ss = 0.0;
    for (const auto& subj : d.subjects) ss += (subj.y - subj.X * beta).squaredNorm();
    const double rms = std::sqrt(ss / static_cast<double>(d.n_observations));
    return rms > 0.0 && std::isfinite(rms) ? rms : 1.0;
}

/// theta for Σ·c² given theta for Σ.
VectorXd rescale_parameters(CovarianceStructure s, std::size_t J, VectorXd theta, double c) {
    if (s == CovarianceStructure::Unstructured) {
        Eigen::Index k = 0;
        for (std::size_t a = 0; a < J; ++a)
            for (std::size_t b = 0; b <= a; ++b, ++k) theta[k] = a == b ? theta[k] + std::log(c) : theta[k] * c;
    } else {
        theta.array() += 2.0 * std::log(c);
    }
    return theta;
}

/// d holds outcomes divided by scale and theta is on that scale; estimates
/// are mapped back by plain multiplication so that rescaling the data by a
/// power of two rescales every output exactly.
FittedMmrm finish(const MmrmDesign& d, const MmrmSpec& spec, const VectorXd& theta, const Convergence& conv,
                  double start_ll, double scale) {
    FittedMmrm f;
    f.spec = spec;
    f.n_visits = d.n_visits;
    f.labels = d.labels;
    f.theta = rescale_parameters(spec.covariance, d.n_visits, theta, scale);
    f.sigma = marginal_covariance(spec.covariance, d.n_visits, theta) * (scale * scale);
    const auto pl = profile_beta(d, spec.covariance, theta);
    const double log_jacobian = static_cast<double>(d.n_observations) * std::log(scale);
    f.beta = pl.beta * scale;
    f.loglik = pl.loglik - log_jacobian;
    const MatrixXd inv = pl.information.llt().solve(MatrixXd::Identity(pl.information.rows(), pl.information.cols()));
    f.vcov_beta = 0.5 * (inv + inv.transpose()) * (scale * scale);
    f.start_loglik = start_ll - log_jacobian;
    f.n_subjects_used = d.subjects.size();
    f.n_subjects_excluded = d.n_excluded;
    f.covariate_means = d.covariate_means;
    f.convergence = conv;
    return f;
}

}  // namespace


FittedMmrm fit(const MmrmDesign& original, const MmrmSpec& spec, const FitOptions& opt) {
    const auto s = spec.covariance;
    const double scale = outcome_scale(original);
    MmrmDesign d = original;
    for (auto& subj : d.subjects) subj.y /= scale;
    VectorXd theta = starting_parameters(d, s);
    Evaluation cur = evaluate(d, s, theta);
    if (!cur.ok) throw ConvergenceError("log-likelihood is not finite at the starting values");
    const double start_ll = -cur.f;
    const auto n = theta.size();

    MatrixXd H = MatrixXd::Identity(n, n);  // inverse Hessian approximation
    bool fresh = true;
    Convergence conv;
    auto grad_ok = [&](const Evaluation& e) {
        return e.grad.cwiseAbs().maxCoeff() < opt.gradient_tolerance * (1.0 + std::abs(e.f));
    };

    for (int iter = 1; iter <= opt.max_iterations; ++iter) {
        conv.iterations = iter;
        VectorXd dir = -H * cur.grad;
        double slope = cur.grad.dot(dir);
        if (!(slope < 0.0)) {
            H.setIdentity();
            fresh = true;
            dir = -cur.grad;
            slope = cur.grad.dot(dir);
        }
        if (fresh) {
            // first step after a reset: cap the step length in parameter space
            const double len = dir.norm();
            if (len > 1.0) {
                dir /= len;
                slope /= len;
            }
        }
        double step = 1.0;
        Evaluation next;
        bool accepted = false;
        for (int k = 0; k < 60; ++k) {
            next = evaluate(d, s, theta + step * dir);
            if (next.ok && next.f <= cur.f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (grad_ok(cur)) {
                conv.converged = true;
                break;
            }
            if (!fresh) {
                H.setIdentity();
                fresh = true;
                continue;
            }
            break;
        }
        const VectorXd sk = step * dir;
        const VectorXd yk = next.grad - cur.grad;
        const double rel = std::abs(cur.f - next.f) / std::max(std::abs(cur.f), 1e-300);
        theta += sk;
        cur = std::move(next);
        const double sy = sk.dot(yk);
        if (sy > 1e-12 * sk.norm() * yk.norm()) {
            if (fresh) H *= sy / yk.squaredNorm();
            const double rho = 1.0 / sy;
            const MatrixXd I = MatrixXd::Identity(n, n);
            H = (I - rho * sk * yk.transpose()) * H * (I - rho * yk * sk.transpose()) + rho * sk * sk.transpose();
            fresh = false;
        }
        if (rel < opt.relative_tolerance && grad_ok(cur)) {
            conv.converged = true;
            break;
        }
    }
    // gradient of the original-scale problem: dθ_orig/dθ_scaled is diagonal
    VectorXd g = cur.grad;
    if (s == CovarianceStructure::Unstructured) {
        Eigen::Index k = 0;
        for (std::size_t a = 0; a < d.n_visits; ++a)
            for (std::size_t b = 0; b <= a; ++b, ++k)
                if (a != b) g[k] /= scale;
    }
    conv.gradient_norm = g.cwiseAbs().maxCoeff();
    FittedMmrm out = finish(d, spec, theta, conv, start_ll, scale);
    if (!conv.converged)
        throw MmrmConvergenceError("maximum likelihood fit did not converge after " +
                                       std::to_string(conv.iterations) + " iterations (gradient max-norm " +
                                       std::to_string(conv.gradient_norm) + ")",
                                   std::move(out));
    return out;
}

FittedMmrm fit(const TrialDataset& data, const MmrmSpec& spec, const FitOptions& options) {
    return fit(build_design(data, spec), spec, options);
}

std::vector<CoefficientInterval> wald_ci(const FittedMmrm& f, double level) {
    const double z = two_sided_z(level);
    std::vector<CoefficientInterval> out;
    for (std::size_t k = 0; k < f.labels.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        const double se = std::sqrt(std::max(0.0, f.vcov_beta(i, i)));
        out.push_back({f.labels[k], f.beta[i], se, f.beta[i] - z * se, f.beta[i] + z * se});
    }
    return out;
}

nlohmann::json to_json(const FittedMmrm& f) {
    using nlohmann::json;
    auto matrix = [](const MatrixXd& m) {
        json rows = json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            rows.push_back(row);
        }
        return rows;
    };
    json beta = json::object();
    for (std::size_t k = 0; k < f.labels.size(); ++k) beta[f.labels[k]] = f.beta[static_cast<Eigen::Index>(k)];
    std::vector<std::string> visit_labels;
    for (std::size_t j = 0; j < f.n_visits; ++j) visit_labels.push_back(time_label(j));
    return json{
        {"outcome", outcome_name(f.spec.outcome)},
        {"covariance_structure", structure_name(f.spec.covariance)},
        {"constrained_baseline", f.spec.constrained_baseline},
        {"coefficient_labels", f.labels},
        {"beta", beta},
        {"sigma", {{"labels", visit_labels}, {"rows", matrix(f.sigma)}}},
        {"vcov_beta", {{"labels", f.labels}, {"rows", matrix(f.vcov_beta)}}},
        {"loglik", f.loglik},
        {"n_subjects_used", f.n_subjects_used},
        {"n_subjects_excluded", f.n_subjects_excluded},
        {"covariate_means", f.covariate_means},
        {"convergence",
         {{"converged", f.convergence.converged},
          {"iterations", f.convergence.iterations},
          {"gradient_max_norm", f.convergence.gradient_norm}}},
    };
}

}  // namespace trialcea
