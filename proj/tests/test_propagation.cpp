#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "iotemu/propagation.hpp"

using namespace iotemu::model;

namespace {

ModelParams reference_params() {
    ModelParams p;
    p.N = 110000;
    p.Omega = 3417112576.0;
    p.mu = 27;
    p.q = compute_q(62, 10);
    p.beta = 0.2;
    p.alpha = 3;
    p.I0 = 1;
    return p;
}

// Closed form of the uncongested model: a logistic curve with r = mu*q*N/Omega.
double logistic(double t, const ModelParams& p) {
    double r = p.mu * p.q * p.N / p.Omega;
    double e = std::exp(r * t);
    return p.N * p.I0 * e / (p.N + p.I0 * (e - 1.0));
}

}  // namespace

TEST_CASE("compute_q closed form") {
    CHECK(compute_q(62, 10) == doctest::Approx(0.15007242).epsilon(1e-6));
    CHECK(compute_q(62, 0) == 0.0);
    CHECK(compute_q(1, 1) == 1.0);
    CHECK(compute_q(2, 1) == doctest::Approx(0.5));
    CHECK_THROWS_AS(compute_q(0, 1), ModelError);
    CHECK_THROWS_AS(compute_q(62, -1), ModelError);
}

TEST_CASE("compute_q agrees with Monte Carlo") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> dist(0, 61);
    int successes = 0;
    const int trials = 1'000'000;
    for (int e = 0; e < trials; ++e) {
        int correct = dist(rng);
        for (int a = 0; a < 10; ++a)
            if (dist(rng) == correct) {
                ++successes;
                break;
            }
    }
    double estimate = double(successes) / trials;
    CHECK(std::abs(estimate - compute_q(62, 10)) < 0.005);
}

TEST_CASE("rhs values") {
    ModelParams p = reference_params();
    p.beta = 0;
    p.alpha = 0;
    // At I = N/2 the uncongested rate is mu*q*N^2/(4*Omega).
    double expect = p.mu * p.q * p.N * p.N / (4.0 * p.Omega);
    CHECK(rhs_basic(p.N / 2, p) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(rhs_basic(0, p) == 0.0);
    CHECK(rhs_basic(p.N, p) == 0.0);

    ModelParams c = reference_params();
    double I = 40000;
    double base = (c.mu / c.Omega) * (c.N - I) * I * c.q;
    double factor = std::pow(1.0 - c.beta * I / c.N, c.alpha);
    CHECK(rhs_congested(I, c) == doctest::Approx(base * factor).epsilon(1e-12));
    // beta=0 or alpha=0 collapses to the basic rate.
    c.beta = 0;
    CHECK(rhs_congested(I, c) == doctest::Approx(rhs_basic(I, c)).epsilon(1e-12));
    c = reference_params();
    c.alpha = 0;
    CHECK(rhs_congested(I, c) == doctest::Approx(rhs_basic(I, c)).epsilon(1e-12));
}

TEST_CASE("parameter validation") {
    ModelParams p = reference_params();
    CHECK_NOTHROW(p.validate());
    p.q = 1.5;
    CHECK_THROWS_AS(p.validate(), ModelError);
    p = reference_params();
    p.I0 = p.N + 1;
    CHECK_THROWS_AS(p.validate(), ModelError);
    p = reference_params();
    p.N = p.Omega + 1;
    CHECK_THROWS_AS(p.validate(), ModelError);
    p = reference_params();
    p.mu = -1;
    CHECK_THROWS_AS(p.validate(), ModelError);
    CHECK_THROWS_AS(integrate(rhs_basic, reference_params(), {100, -1, 0}), ModelError);
}

TEST_CASE("integrator matches the logistic closed form") {
    ModelParams p = reference_params();
    p.beta = 0;
    p.alpha = 0;
    double t_end = 42 * 3600.0;
    auto curve = integrate(rhs_basic, p, {t_end, t_end / 100000.0, t_end / 1000.0});
    double worst = 0;
    for (const auto& s : curve.samples) {
        double exact = logistic(s.t, p);
        worst = std::max(worst, std::abs(s.infected - exact) / exact);
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("halving the step reduces the closed-form error") {
    ModelParams p = reference_params();
    p.beta = 0;
    p.alpha = 0;
    double t_end = 30 * 3600.0;
    auto err_with_step = [&](double step) {
        auto curve = integrate(rhs_basic, p, {t_end, step, 0});
        double exact = logistic(curve.samples.back().t, p);
        return std::abs(curve.samples.back().infected - exact);
    };
    double coarse = err_with_step(600);
    double fine = err_with_step(300);
    CHECK(fine < coarse);
    // 4th order: error drops by roughly 2^4.
    CHECK(fine < coarse / 8);
}

TEST_CASE("integration edge cases") {
    ModelParams p = reference_params();
    auto flat = integrate(rhs_congested, p, {0, 1, 0});
    REQUIRE(flat.samples.size() == 1);
    CHECK(flat.samples[0].infected == p.I0);

    p.I0 = p.N;  // fully infected stays put
    auto full = integrate(rhs_congested, p, {3600, 1, 600});
    for (const auto& s : full.samples) CHECK(s.infected == doctest::Approx(p.N));

    p = reference_params();
    p.I0 = 0;  // disease-free equilibrium
    auto none = integrate(rhs_congested, p, {3600, 1, 600});
    for (const auto& s : none.samples) CHECK(s.infected == 0.0);
}

TEST_CASE("reference curve hits its published milestones") {
    auto curve = integrate(rhs_congested, reference_params(),
                           {48 * 3600.0, 1.0, 60.0});
    const std::pair<double, double> milestones[] = {
        {18757, 21.6}, {63763, 26.7}, {101680, 34.4}, {108619, 42.0}};
    for (auto [count, hours] : milestones) {
        auto t = time_to_count(curve, count);
        REQUIRE(t);
        CHECK(*t / 3600.0 == doctest::Approx(hours).epsilon(0.02));
    }
}

TEST_CASE("time_to_count interpolates and reports unreachable targets") {
    InfectionCurve curve;
    curve.samples = {{0, 1}, {10, 3}, {20, 7}};
    CHECK(*time_to_count(curve, 1) == 0.0);
    CHECK(*time_to_count(curve, 2) == doctest::Approx(5.0));
    CHECK(*time_to_count(curve, 5) == doctest::Approx(15.0));
    CHECK(!time_to_count(curve, 8));
    CHECK(!time_to_count(InfectionCurve{}, 1));
}

TEST_CASE("congestion slows the model curve pointwise") {
    ModelParams p = reference_params();
    ModelParams basic = p;
    basic.beta = 0;
    basic.alpha = 0;
    auto slow = integrate(rhs_congested, p, {42 * 3600.0, 10.0, 600.0});
    auto fast = integrate(rhs_congested, basic, {42 * 3600.0, 10.0, 600.0});
    REQUIRE(slow.samples.size() == fast.samples.size());
    for (size_t i = 0; i < slow.samples.size(); ++i)
        CHECK(slow.samples[i].infected <= fast.samples[i].infected + 1e-9);
}

TEST_CASE("curve scale invariance") {
    // Scaling N, Omega and I0 by c scales I(t) by c.
    ModelParams p = reference_params();
    ModelParams scaled = p;
    double c = 10;
    scaled.N *= c;
    scaled.Omega *= c;
    scaled.I0 *= c;
    auto base = integrate(rhs_congested, p, {30 * 3600.0, 10.0, 1800.0});
    auto big = integrate(rhs_congested, scaled, {30 * 3600.0, 10.0, 1800.0});
    REQUIRE(base.samples.size() == big.samples.size());
    for (size_t i = 0; i < base.samples.size(); ++i)
        CHECK(big.samples[i].infected ==
              doctest::Approx(base.samples[i].infected * c).epsilon(1e-9));
}

TEST_CASE("fit recovers parameters from a synthetic curve") {
    ModelParams truth = reference_params();
    auto observed = integrate(rhs_congested, truth, {42 * 3600.0, 30.0, 1800.0});

    ModelParams known = truth;
    known.mu = 0;  // to be recovered
    FitOptions opts;
    opts.free = {FreeParam::Mu};
    auto fit1 = fit_params(observed, known, opts);
    CHECK(fit1.params.mu == doctest::Approx(truth.mu).epsilon(0.05));

    // beta and alpha trade off against each other along a ridge, so each is
    // fit with the other held at truth.
    known = truth;
    known.alpha = 0;
    opts.free = {FreeParam::Alpha};
    auto fit2 = fit_params(observed, known, opts);
    CHECK(std::abs(fit2.params.alpha - truth.alpha) < 0.5);

    known = truth;
    known.beta = 0;
    opts.free = {FreeParam::Beta};
    auto fit3 = fit_params(observed, known, opts);
    CHECK(std::abs(fit3.params.beta - truth.beta) < 0.05);

    known = truth;
    known.q = 0.5;
    opts.free = {FreeParam::Q};
    auto fit4 = fit_params(observed, known, opts);
    CHECK(fit4.params.q == doctest::Approx(truth.q).epsilon(0.05));
}

TEST_CASE("fit rejects degenerate input") {
    InfectionCurve flat;
    flat.samples = {{0, 5}, {10, 5}, {20, 5}};
    FitOptions opts;
    opts.free = {FreeParam::Mu};
    CHECK_THROWS_AS(fit_params(flat, reference_params(), opts), ModelError);
    CHECK_THROWS_AS(fit_params(InfectionCurve{}, reference_params(), opts), ModelError);
    opts.free = {};
    InfectionCurve curve;
    curve.samples = {{0, 1}, {10, 3}};
    CHECK_THROWS_AS(fit_params(curve, reference_params(), opts), ModelError);
}

TEST_CASE("curve CSV roundtrip") {
    InfectionCurve curve;
    curve.samples = {{0, 1}, {1.5, 2.25}, {3, 4.125}};
    std::string path = "/tmp/iotemu_test_curve.csv";
    write_curve_csv(path, curve);
    auto back = read_curve_csv(path);
    REQUIRE(back.samples.size() == curve.samples.size());
    for (size_t i = 0; i < curve.samples.size(); ++i) {
        CHECK(back.samples[i].t == doctest::Approx(curve.samples[i].t));
        CHECK(back.samples[i].infected == doctest::Approx(curve.samples[i].infected));
    }
    std::remove(path.c_str());
    CHECK_THROWS_AS(read_curve_csv("/nonexistent/nope.csv"), ModelError);
}

TEST_CASE("curve validation catches disorder") {
    InfectionCurve bad_t;
    bad_t.samples = {{0, 1}, {0, 2}};
    CHECK_THROWS_AS(bad_t.validate(10), ModelError);
    InfectionCurve decreasing;
    decreasing.samples = {{0, 5}, {1, 4}};
    CHECK_THROWS_AS(decreasing.validate(10), ModelError);
    InfectionCurve fine;
    fine.samples = {{0, 1}, {1, 1}, {2, 3}};
    CHECK_NOTHROW(fine.validate(10));
}
