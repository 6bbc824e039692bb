#include "fixtures.hpp"
#include "trialcea/errors.hpp"
#include "trialcea/simulate.hpp"

#include <doctest.h>

#include <cmath>

using namespace trialcea;
using Eigen::MatrixXd;

namespace {

SimConfig base_config(int n) {
    SimConfig c;
    c.n_per_arm = n;
    c.mean_utility = {std::vector<double>{0.67, 0.73, 0.73}, {0.67, 0.75, 0.78}};
    c.mean_cost = {std::vector<double>{500, 1400, 2100}, {500, 1250, 2750}};
    MatrixXd R(3, 3);
    R << 1, .6, .5, .6, 1, .7, .5, .7, 1;
    const Eigen::Vector3d su(0.2, 0.2, 0.2), sc(400, 1200, 1800);
    c.cov_utility = su.asDiagonal() * R * su.asDiagonal();
    c.cov_cost = sc.asDiagonal() * R * sc.asDiagonal();
    c.cross_correlation = -0.45;
    c.seed = 42;
    return c;
}

mechanism::MarBaseline strong_mar() {
    mechanism::MarBaseline mb;
    mb.utility = {{-0.6, -0.6}, {-2.0, -2.0}, 0.67, 0.2};
    mb.cost = {{-0.6, -0.6}, {0.0, 0.0}, 500, 400};
    return mb;
}

}  // namespace

TEST_CASE("true_effects") {
    SimConfig c = base_config(10);
    c.mean_utility[1] = c.mean_utility[0];
    c.mean_cost[1] = c.mean_cost[0];
    c.cov_utility = c.cov_utility.diagonal().asDiagonal();
    c.cov_cost = c.cov_cost.diagonal().asDiagonal();
    c.cross_correlation = 0;
    auto t = true_effects(c);
    CHECK(t.delta_qaly == 0.0);
    CHECK(t.delta_cost == 0.0);

    c.mean_utility = {std::vector<double>{0.67, 0.73, 0.73}, {0.69, 0.75, 0.78}};
    t = true_effects(c);
    CHECK(t.delta_qaly == doctest::Approx(0.375 * 0.02 + 0.25 * 0.05).epsilon(1e-14));
    CHECK(t.delta_qaly == doctest::Approx(0.02).epsilon(1e-12));

    c.mean_cost = {std::vector<double>{500, 1400, 2100}, {900, 1250, 2750}};
    CHECK(true_effects(c).delta_cost == doctest::Approx(-150.0 + 650.0));
}

TEST_CASE("gen_trial sample means match the configured means") {
    auto c = base_config(10000);
    const auto trial = gen_trial(c);
    REQUIRE(trial.data.subjects.size() == 20000);
    for (int arm = 0; arm < 2; ++arm)
        for (std::size_t j = 0; j < 3; ++j) {
            double su = 0, sc = 0;
            for (const auto& s : trial.data.subjects)
                if (s.arm == arm) {
                    su += *s.utility[j];
                    sc += *s.cost[j];
                }
            su /= 10000.0;
            sc /= 10000.0;
            const auto jj = static_cast<Eigen::Index>(j);
            CHECK(std::abs(su - c.mean_utility[arm][j]) < 3.0 * std::sqrt(c.cov_utility(jj, jj) / 10000.0));
            CHECK(std::abs(sc - c.mean_cost[arm][j]) < 3.0 * std::sqrt(c.cov_cost(jj, jj) / 10000.0));
        }

    // the shared latent carries the configured cross correlation
    double suv = 0, su2 = 0, sv2 = 0, mu = 0, mc = 0;
    int n = 0;
    for (const auto& s : trial.data.subjects)
        if (s.arm == 0) {
            mu += *s.utility[1];
            mc += *s.cost[1];
            ++n;
        }
    mu /= n;
    mc /= n;
    for (const auto& s : trial.data.subjects)
        if (s.arm == 0) {
            const double a = *s.utility[1] - mu, b = *s.cost[1] - mc;
            suv += a * b;
            su2 += a * a;
            sv2 += b * b;
        }
    CHECK(suv / std::sqrt(su2 * sv2) == doctest::Approx(-0.45).epsilon(0.1));
}

TEST_CASE("gen_trial is reproducible in the seed") {
    const auto c = base_config(50);
    CHECK(gen_trial(c).data == gen_trial(c).data);
    CHECK(gen_trial(c, 3).data == gen_trial(c, 3).data);
    CHECK_FALSE(gen_trial(c, 3).data == gen_trial(c, 4).data);
    auto d = c;
    d.seed = 43;
    CHECK_FALSE(gen_trial(c).data == gen_trial(d).data);
}

TEST_CASE("validate rejects bad configs") {
    auto c = base_config(10);
    c.cov_utility(0, 1) = c.cov_utility(1, 0) = 1.0;  // not positive definite
    CHECK_THROWS_AS(gen_trial(c), InputError);
    c = base_config(1);
    CHECK_THROWS_AS(validate(c), InputError);
    c = base_config(10);
    c.mean_cost[1].pop_back();
    CHECK_THROWS_AS(validate(c), InputError);
    c = base_config(10);
    c.cross_correlation = 0.95;  // residual covariance no longer PSD
    CHECK_THROWS_AS(validate(c), InputError);
}

TEST_CASE("apply_mechanism: None is the identity") {
    const auto d = gen_trial(base_config(20)).data;
    CHECK(apply_mechanism(d, mechanism::None{}, 1) == d);
}

TEST_CASE("apply_mechanism: MCAR observed fraction") {
    const auto d = gen_trial(base_config(5000)).data;
    const auto m = apply_mechanism(d, mechanism::Mcar{0.3}, 9);
    CHECK(m == apply_mechanism(d, mechanism::Mcar{0.3}, 9));
    const double n = static_cast<double>(d.subjects.size());
    const double se = std::sqrt(0.3 * 0.7 / n);
    for (std::size_t j = 0; j < 3; ++j) {
        double ou = 0, oc = 0;
        for (const auto& s : m.subjects) {
            ou += s.utility[j].has_value();
            oc += s.cost[j].has_value();
        }
        CHECK(std::abs(ou / n - 0.7) < 3 * se);
        CHECK(std::abs(oc / n - 0.7) < 3 * se);
    }
}

TEST_CASE("apply_mechanism: MarBaseline deletes low-baseline subjects and never the baseline") {
    const auto d = gen_trial(base_config(3000)).data;
    const auto m = apply_mechanism(d, strong_mar(), 10);
    double sum_c = 0, sum_n = 0;
    int nc = 0, nn = 0;
    for (const auto& s : m.subjects) {
        CHECK(s.utility[0].has_value());
        CHECK(s.cost[0].has_value());
        const bool completer = s.utility[1] && s.utility[2];
        (completer ? sum_c : sum_n) += *s.utility[0];
        ++(completer ? nc : nn);
    }
    REQUIRE(nc > 100);
    REQUIRE(nn > 100);
    CHECK(sum_n / nn < sum_c / nc - 0.05);
    // observed values are untouched
    for (std::size_t i = 0; i < d.subjects.size(); ++i)
        for (std::size_t j = 0; j < 3; ++j)
            if (m.subjects[i].cost[j]) CHECK(*m.subjects[i].cost[j] == *d.subjects[i].cost[j]);
}

TEST_CASE("apply_mechanism: MarMonotone produces monotone patterns") {
    const auto d = gen_trial(base_config(1000)).data;
    mechanism::MarMonotone mm;
    mm.hazard = {{-1.0, -1.0}, {-1.5, -1.5}, 0.7, 0.2};
    const auto m = apply_mechanism(d, mm, 11);
    int dropped = 0;
    for (const auto& s : m.subjects) {
        CHECK(s.utility[0].has_value());
        CHECK(s.cost[0].has_value());
        bool gone = false;
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(s.utility[j].has_value() == s.cost[j].has_value());
            if (!s.utility[j]) gone = true;
            if (gone) CHECK_FALSE(s.utility[j].has_value());
        }
        dropped += gone;
    }
    CHECK(dropped > 200);
}

TEST_CASE("sim config json round trip") {
    auto c = base_config(25);
    c.mechanism = strong_mar();
    const auto j = to_json(c);
    const auto back = sim_config_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(gen_trial(back).data == gen_trial(c).data);

    c.mechanism = mechanism::Mcar{0.2};
    CHECK(to_json(sim_config_from_json(to_json(c))) == to_json(c));
    mechanism::MarMonotone mm;
    mm.hazard.slope = {-1, -2};
    c.mechanism = mm;
    CHECK(to_json(sim_config_from_json(to_json(c))) == to_json(c));

    auto bad = j;
    bad["mechanism"]["type"] = "mnar";
    CHECK_THROWS_AS(sim_config_from_json(bad), InputError);
}

TEST_CASE("bias_study under MCAR: every method unbiased") {
    auto c = base_config(60);
    c.mechanism = mechanism::Mcar{0.2};
    StudyOptions o;
    o.mi_imputations = 5;
    const auto study = bias_study(c, 100, o);
    REQUIRE(study.methods.size() == 3);
    for (const auto& m : study.methods) {
        INFO(method_name(m.method));
        CHECK(m.n_failed == 0);
        CHECK(std::abs(m.delta_qaly.mean_bias) < 3.0 * m.delta_qaly.mean_bias_mcse);
        CHECK(std::abs(m.delta_cost.mean_bias) < 3.0 * m.delta_cost.mean_bias_mcse);
        CHECK(m.delta_qaly.mean_bias_mcse > 0);
        CHECK(m.delta_qaly.coverage_mcse > 0);
    }
    const auto report = bias_report_delimited(study);
    CHECK(report.find("mean_bias_mcse") != std::string::npos);
    CHECK_THROWS_AS(bias_study(c, 99, o), InputError);
}

TEST_CASE("bias_study is independent of execution mode") {
    auto c = base_config(30);
    c.mechanism = strong_mar();
    StudyOptions s, p;
    s.methods = p.methods = {Method::CCA, Method::LMM};
    s.execution = Execution::Serial;
    p.execution = Execution::Parallel;
    const auto a = bias_study(c, 100, s), b = bias_study(c, 100, p);
    for (std::size_t m = 0; m < 2; ++m) {
        CHECK(a.methods[m].delta_qaly.mean_bias == b.methods[m].delta_qaly.mean_bias);
        CHECK(a.methods[m].delta_cost.empirical_se == b.methods[m].delta_cost.empirical_se);
    }
}
