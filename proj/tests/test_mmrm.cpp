#include "fixtures.hpp"
#include "oracles.hpp"
#include "trialcea/mmrm.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace trialcea;
using namespace trialcea::testing;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MmrmSpec saturated(Outcome o = Outcome::Utility) {
    MmrmSpec s;
    s.outcome = o;
    s.constrained_baseline = false;
    return s;
}

TrialDataset complete_trial(std::uint64_t seed, int n_per_arm, std::size_t J) {
    std::mt19937_64 rng(seed);
    return oracle::random_trial(rng, n_per_arm, J, 0.0);
}

}  // namespace

TEST_CASE("marginal_covariance examples") {
    CHECK(marginal_covariance(CovarianceStructure::Unstructured, 1, VectorXd::Zero(1))(0, 0) == 1.0);

    VectorXd cs(2);
    cs << 0.0, 0.0;
    MatrixXd expect(2, 2);
    expect << 2, 1, 1, 2;
    CHECK(marginal_covariance(CovarianceStructure::CompoundSymmetry, 2, cs) == expect);

    VectorXd ri(4);
    ri << -800.0, std::log(0.5), std::log(2.0), std::log(3.0);  // σ_ω² underflows to 0
    MatrixXd S = marginal_covariance(CovarianceStructure::RandomInterceptDiag, 3, ri);
    CHECK(S(0, 1) == 0.0);
    CHECK(S(1, 2) == 0.0);
    CHECK(S(0, 0) == doctest::Approx(0.5));
    CHECK(S(2, 2) == doctest::Approx(3.0));

    CHECK_THROWS_AS(marginal_covariance(CovarianceStructure::Unstructured, 3, VectorXd::Zero(5)), InputError);
}

TEST_CASE("covariance_parameters inverts the unstructured parameterization") {
    MatrixXd S(3, 3);
    S << 2.0, 0.3, -0.2, 0.3, 1.5, 0.4, -0.2, 0.4, 1.1;
    const VectorXd theta = covariance_parameters(CovarianceStructure::Unstructured, S);
    CHECK((marginal_covariance(CovarianceStructure::Unstructured, 3, theta) - S).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("build_design examples") {
    auto d = dataset({subject("a", 1, {0.5, kNaN, 0.7}, {1, 1, 1}), subject("b", 0, {0.4, 0.5, 0.6}, {1, 1, 1}),
                      subject("c", 1, {0.4, 0.5, 0.6}, {1, 1, 1})});
    MmrmSpec spec;
    auto des = build_design(d, spec);
    CHECK(des.labels == std::vector<std::string>{"TIME1", "TIME2", "TIME3", "TIME2:TRT", "TIME3:TRT"});
    const auto& a = des.subjects[0];
    REQUIRE(a.id == "a");
    MatrixXd Xa(2, 5);
    Xa << 1, 0, 0, 0, 0, 0, 0, 1, 0, 1;
    CHECK(a.X == Xa);
    const auto& b = des.subjects[1];
    MatrixXd Xb = MatrixXd::Zero(3, 5);
    Xb.leftCols(3).setIdentity();
    CHECK(b.X == Xb);

    spec.constrained_baseline = false;
    auto un = build_design(dataset({subject("a", 1, {0.5, kNaN, kNaN}, {1, 1, 1}),
                                    subject("b", 1, {0.5, 0.5, 0.5}, {1, 1, 1}),
                                    subject("c", 0, {0.5, 0.5, 0.5}, {1, 1, 1})}),
                           spec);
    CHECK(un.labels[3] == "TIME1:TRT");
    CHECK(un.subjects[0].X.rows() == 1);
    CHECK(un.subjects[0].X(0, 3) == 1.0);
}

TEST_CASE("build_design excludes subjects without observations and checks covariates") {
    auto d = dataset({subject("a", 0, {kNaN, kNaN, kNaN}, {1, 1, 1}), subject("b", 0, {0.4, 0.5, 0.6}, {1, 1, 1}),
                      subject("c", 1, {0.4, 0.5, 0.6}, {1, 1, 1})});
    MmrmSpec spec;
    auto des = build_design(d, spec);
    CHECK(des.n_excluded == 1);
    CHECK(des.subjects.size() == 2);

    spec.extra_covariates = {"age"};
    for (auto& s : d.subjects) s.covariates["age"] = 50.0;
    d.subjects[2].covariates["age"] = std::nullopt;
    CHECK_THROWS_AS(build_design(d, spec), InputError);

    auto none = dataset({subject("a", 0, {kNaN, kNaN, kNaN}, {1, 1, 1})});
    CHECK_THROWS_AS(build_design(none, MmrmSpec{}), InputError);
}

TEST_CASE("profile_beta names the unidentified coefficient") {
    auto d = dataset({subject("a", 0, {0.4, 0.5, kNaN}, {1, 1, 1}), subject("b", 1, {0.4, 0.5, kNaN}, {1, 1, 1})});
    try {
        build_design(d, MmrmSpec{});
        FAIL("expected RankDeficiencyError");
    } catch (const RankDeficiencyError& e) {
        CHECK(e.coefficient() == "TIME3");
    }
    // visit 3 observed only in the control arm: the interaction is unidentified
    auto d2 = dataset({subject("a", 0, {0.4, 0.5, 0.6}, {1, 1, 1}), subject("b", 1, {0.4, 0.5, kNaN}, {1, 1, 1})});
    try {
        build_design(d2, MmrmSpec{});
        FAIL("expected RankDeficiencyError");
    } catch (const RankDeficiencyError& e) {
        CHECK(e.coefficient() == "TIME3:TRT");
    }
}

TEST_CASE("loglik examples") {
    auto one = dataset({subject("a", 0, {0.0}, {1})}, {0});
    MmrmSpec spec;
    spec.treatment_terms = false;
    auto des = build_design(one, spec);
    const double ll = loglik(des, CovarianceStructure::Unstructured, VectorXd::Zero(1), VectorXd::Zero(1));
    CHECK(ll == doctest::Approx(-0.918938533204673).epsilon(1e-14));

    // additivity over independent subjects
    auto two = dataset({subject("a", 0, {0.3, 0.9}, {1, 1}), subject("b", 0, {-0.2, kNaN}, {1, 1})}, {0, 1});
    auto da = build_design(dataset({two.subjects[0]}, {0, 1}), spec);
    auto db = build_design(dataset({subject("b", 0, {-0.2, 0.1}, {1, 1})}, {0, 1}), spec);
    db.subjects[0].X.conservativeResize(1, 2);
    db.subjects[0].y.conservativeResize(1);
    db.subjects[0].visits = {0};
    db.subjects[0].pattern = 1;
    auto dab = build_design(two, spec);
    VectorXd theta(3);
    theta << 0.1, 0.4, -0.3;
    VectorXd beta(2);
    beta << 0.1, 0.2;
    CHECK(loglik(dab, CovarianceStructure::Unstructured, theta, beta) ==
          doctest::Approx(loglik(da, CovarianceStructure::Unstructured, theta, beta) +
                          loglik(db, CovarianceStructure::Unstructured, theta, beta))
              .epsilon(1e-13));

    // J=2 complete: brute-force bivariate density
    const MatrixXd S = marginal_covariance(CovarianceStructure::Unstructured, 2, theta);
    CHECK(loglik(da, CovarianceStructure::Unstructured, theta, beta) ==
          doctest::Approx(oracle::bvn_logdensity(0.3, 0.9, 0.1, 0.2, S(0, 0), S(0, 1), S(1, 1))).epsilon(1e-13));
}

TEST_CASE("profile_beta: GLS special cases") {
    auto d = complete_trial(11, 15, 3);
    SUBCASE("identity covariance gives OLS") {
        auto des = build_design(d, MmrmSpec{});
        MatrixXd X(static_cast<Eigen::Index>(des.n_observations), static_cast<Eigen::Index>(des.labels.size()));
        VectorXd y(X.rows());
        Eigen::Index r = 0;
        for (const auto& s : des.subjects) {
            X.middleRows(r, s.X.rows()) = s.X;
            y.segment(r, s.y.size()) = s.y;
            r += s.X.rows();
        }
        const VectorXd ols = X.colPivHouseholderQr().solve(y);
        const auto pl = profile_beta(des, CovarianceStructure::Unstructured, VectorXd::Zero(6));
        CHECK((pl.beta - ols).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("saturated complete design gives cell means for any covariance") {
        auto des = build_design(d, saturated());
        const auto mle = oracle::complete_data_mle(d, Outcome::Utility);
        std::mt19937_64 rng(3);
        std::normal_distribution<double> z(0.0, 0.5);
        for (int rep = 0; rep < 5; ++rep) {
            VectorXd theta(6);
            for (auto& t : theta) t = z(rng);
            const auto pl = profile_beta(des, CovarianceStructure::Unstructured, theta);
            for (int j = 0; j < 3; ++j) {
                CHECK(pl.beta[j] == doctest::Approx(mle.mean[0][j]).epsilon(1e-12));
                CHECK(pl.beta[j] + pl.beta[3 + j] == doctest::Approx(mle.mean[1][j]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("fit: closed-form oracle on complete data") {
    auto d = complete_trial(2024, 40, 3);
    for (Outcome o : {Outcome::Utility, Outcome::Cost}) {
        const auto f = fit(d, saturated(o));
        const auto mle = oracle::complete_data_mle(d, o);
        CHECK(f.convergence.converged);
        for (int j = 0; j < 3; ++j) {
            CHECK(std::abs(f.beta[j] - mle.mean[0][j]) < 1e-6);
            CHECK(std::abs(f.beta[j] + f.beta[3 + j] - mle.mean[1][j]) < 1e-6);
        }
        // absolute 1e-6 on utilities; on the cost scale the stopping rule bounds the relative error
        const double tol = o == Outcome::Utility ? 1e-6 : 1e-5 * mle.pooled_cov.cwiseAbs().maxCoeff();
        CHECK((f.sigma - mle.pooled_cov).cwiseAbs().maxCoeff() < tol);
    }
}

TEST_CASE("fit: monotone missingness matches factored likelihood") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> z(0.0, 1.0);
    std::bernoulli_distribution drop(0.4);
    std::vector<double> y1, y2;
    TrialDataset d;
    d.visit_times = {0, 1};
    for (int i = 0; i < 200; ++i) {
        const double a = 0.6 + 0.2 * z(rng);
        const double b = 0.3 + 0.6 * a + 0.15 * z(rng);
        const bool dropped = drop(rng);
        y1.push_back(a);
        y2.push_back(dropped ? kNaN : b);
        d.subjects.push_back(subject("p" + std::to_string(1000 + i), 0, {a, y2.back()}, {1, 1}));
    }
    MmrmSpec spec;
    spec.treatment_terms = false;
    const auto f = fit(d, spec);
    const auto fl = oracle::factored_likelihood(y1, y2);
    CHECK(std::abs(f.beta[0] - fl.mu1) < 1e-6);
    CHECK(std::abs(f.beta[1] - fl.mu2) < 1e-6);
    CHECK(std::abs(f.sigma(0, 0) - fl.s11) < 1e-6);
    CHECK(std::abs(f.sigma(0, 1) - fl.s12) < 1e-6);
    CHECK(std::abs(f.sigma(1, 1) - fl.s22) < 1e-6);
}

TEST_CASE("fit: nested covariance structures order the likelihood") {
    auto d = complete_trial(5, 30, 3);
    MmrmSpec un, cs, ri;
    cs.covariance = CovarianceStructure::CompoundSymmetry;
    ri.covariance = CovarianceStructure::RandomInterceptDiag;
    const double l_un = fit(d, un).loglik;
    const double l_ri = fit(d, ri).loglik;
    const double l_cs = fit(d, cs).loglik;
    CHECK(l_un >= l_ri - 1e-8);
    CHECK(l_ri >= l_cs - 1e-8);
}

TEST_CASE("profiled gradient agrees with central finite differences") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> z(0.0, 0.3);
    int checked = 0;
    for (int ds = 0; ds < 5; ++ds) {
        auto d = oracle::random_trial(rng, 12 + 3 * ds, 3, 0.25);
        for (auto structure : {CovarianceStructure::Unstructured, CovarianceStructure::RandomInterceptDiag,
                               CovarianceStructure::CompoundSymmetry}) {
            MmrmSpec spec;
            spec.covariance = structure;
            auto des = build_design(d, spec);
            const VectorXd start = starting_parameters(des, structure);
            for (int pt = 0; pt < 20; ++pt) {
                VectorXd theta = start;
                for (auto& t : theta) t += z(rng);
                const VectorXd g = profile_beta(des, structure, theta, true).gradient;
                for (Eigen::Index k = 0; k < theta.size(); ++k) {
                    const double h = 1e-5 * std::max(1.0, std::abs(theta[k]));
                    VectorXd tp = theta, tm = theta;
                    tp[k] += h;
                    tm[k] -= h;
                    const double fd = (profile_beta(des, structure, tp).loglik - profile_beta(des, structure, tm).loglik) /
                                      (2.0 * h);
                    CHECK(std::abs(fd - g[k]) <= 1e-5 * std::max(1.0, std::abs(g[k])));
                    ++checked;
                }
            }
        }
    }
    CHECK(checked > 0);
}

TEST_CASE("fit improves on the starting point and is permutation invariant") {
    std::mt19937_64 rng(23);
    auto d = oracle::random_trial(rng, 30, 3, 0.3);
    const auto f = fit(d, MmrmSpec{});
    CHECK(f.loglik >= f.start_loglik);

    auto shuffled = d;
    std::shuffle(shuffled.subjects.begin(), shuffled.subjects.end(), rng);
    const auto g = fit(shuffled, MmrmSpec{});
    CHECK(f.beta == g.beta);
    CHECK(f.sigma == g.sigma);
    CHECK(f.vcov_beta == g.vcov_beta);
    CHECK(f.loglik == g.loglik);
}

TEST_CASE("fit is scale equivariant") {
    std::mt19937_64 rng(29);
    auto d = oracle::random_trial(rng, 30, 3, 0.3);
    auto scaled = d;
    const double c = 3.5;
    for (auto& s : scaled.subjects)
        for (auto& v : s.utility)
            if (v) *v *= c;
    const auto f = fit(d, MmrmSpec{});
    const auto g = fit(scaled, MmrmSpec{});
    CHECK((g.beta - c * f.beta).cwiseAbs().maxCoeff() < 1e-6 * c);
    CHECK((g.sigma - c * c * f.sigma).cwiseAbs().maxCoeff() < 1e-6 * c * c * f.sigma.cwiseAbs().maxCoeff());
    CHECK((g.vcov_beta - c * c * f.vcov_beta).cwiseAbs().maxCoeff() <
          1e-6 * c * c * f.vcov_beta.cwiseAbs().maxCoeff());
    CHECK(g.vcov_beta == g.vcov_beta.transpose());

    // a power of two leaves the standardized problem bit-identical
    scaled = d;
    for (auto& s : scaled.subjects)
        for (auto& v : s.utility)
            if (v) *v *= 8.0;
    const auto h = fit(scaled, MmrmSpec{});
    CHECK(h.beta == 8.0 * f.beta);
    CHECK(h.sigma == 64.0 * f.sigma);
    CHECK(h.vcov_beta == 64.0 * f.vcov_beta);
    CHECK(h.convergence.iterations == f.convergence.iterations);
}

TEST_CASE("MCAR deletion: deviation from the full-data fit shrinks with the deletion fraction") {
    std::mt19937_64 rng(31);
    auto full = oracle::random_trial(rng, 150, 3, 0.0);
    const auto ref = fit(full, MmrmSpec{});
    double prev = -1.0;
    for (double frac : {0.0, 0.05, 0.2}) {
        double mad = 0.0;
        const int reps = 10;
        for (int r = 0; r < reps; ++r) {
            std::mt19937_64 del(1000 + r);
            std::bernoulli_distribution drop(frac);
            auto d = full;
            for (auto& s : d.subjects)
                for (std::size_t j = 1; j < 3; ++j)
                    if (drop(del)) s.utility[j].reset();
            mad += (fit(d, MmrmSpec{}).beta - ref.beta).cwiseAbs().mean() / reps;
        }
        CHECK(mad >= prev);
        if (frac == 0.0) CHECK(mad == 0.0);
        prev = mad;
    }
}

TEST_CASE("principal-submatrix likelihood has no special case for complete subjects") {
    auto d = dataset({subject("a", 0, {0.2, 0.8}, {1, 1})}, {0, 1});
    MmrmSpec spec;
    spec.treatment_terms = false;
    auto des = build_design(d, spec);
    VectorXd theta(3);
    theta << -0.2, 0.5, 0.1;
    VectorXd beta(2);
    beta << 0.3, 0.6;
    const MatrixXd S = marginal_covariance(CovarianceStructure::Unstructured, 2, theta);
    CHECK(loglik(des, CovarianceStructure::Unstructured, theta, beta) ==
          doctest::Approx(oracle::bvn_logdensity(0.2, 0.8, 0.3, 0.6, S(0, 0), S(0, 1), S(1, 1))).epsilon(1e-13));
}

TEST_CASE("non-convergence carries the best state") {
    std::mt19937_64 rng(37);
    auto d = oracle::random_trial(rng, 20, 3, 0.2);
    FitOptions opt;
    opt.max_iterations = 1;
    try {
        fit(d, MmrmSpec{}, opt);
        FAIL("expected MmrmConvergenceError");
    } catch (const MmrmConvergenceError& e) {
        CHECK_FALSE(e.best_so_far().convergence.converged);
        CHECK(e.best_so_far().beta.size() == 5);
    }
}

TEST_CASE("wald_ci") {
    FittedMmrm f;
    f.labels = {"a", "b", "c"};
    f.beta = VectorXd::Zero(3);
    f.vcov_beta = MatrixXd::Zero(3, 3);
    f.vcov_beta(0, 0) = 1.0;
    f.vcov_beta(2, 2) = 4.0;
    auto ci = wald_ci(f, 0.95);
    CHECK(ci[0].lower == doctest::Approx(-1.959963985).epsilon(1e-9));
    CHECK(ci[0].upper == doctest::Approx(1.959963985).epsilon(1e-9));
    CHECK(ci[1].lower == 0.0);
    CHECK(ci[1].upper == 0.0);
    auto half = wald_ci(f, 0.5);
    CHECK(half[2].upper == doctest::Approx(2.0 * 0.6744897502).epsilon(1e-9));
    CHECK_THROWS_AS(wald_ci(f, 1.0), InputError);
    CHECK_THROWS_AS(wald_ci(f, 0.0), InputError);
}

TEST_CASE("fit JSON document") {
    auto d = complete_trial(1, 10, 3);
    auto j = to_json(fit(d, MmrmSpec{}));
    CHECK(j["coefficient_labels"].size() == 5);
    CHECK(j["sigma"]["rows"].size() == 3);
    CHECK(j["convergence"]["converged"].get<bool>());
    CHECK(j["beta"].contains("TIME3:TRT"));
}
