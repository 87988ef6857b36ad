#include <gtest/gtest.h>

#include <mesolab/limitlaw.hpp>
#include <mesolab/statistics.hpp>

#include "oracles.hpp"

using namespace mesolab;

namespace {

double power_integral(const TestFunction& f, int m) {
    const auto r = oracle::graded(-f.support_radius(), f.support_radius(), f.breakpoints(), 0.05, 20, 0);
    return oracle::integrate([&](double x) { return std::pow(f(x), m); }, r);
}

InfinitelyDivisible unit_law(double kp, double sigma = 0.5) { return {make_builtin("cosine_hat"), kp, sigma}; }

// ID law with jumps f / sqrt(kappa') so that the variance stays sigma^2 + int f^2
InfinitelyDivisible rescaled_law(double kp, double sigma) {
    return {make_builtin("cosine_hat", {1.0 / std::sqrt(kp)}), kp, sigma};
}

}  // namespace

TEST(Cumulants, MatchQuadrature) {
    for (const char* name : {"cosine_hat", "triangle", "bump"}) {
        const InfinitelyDivisible d{make_builtin(name), 0.7, 0.3};
        EXPECT_EQ(cumulant(d, 1), 0.0);
        EXPECT_NEAR(cumulant(d, 2), 0.09 + 0.7 * power_integral(d.f, 2), 1e-11) << name;
        for (int m = 3; m <= 6; ++m)
            EXPECT_NEAR(cumulant(d, m), (m % 2 ? -0.7 : 0.7) * power_integral(d.f, m), 1e-10 * std::pow(2.0, m)) << name;
    }
    EXPECT_EQ(cumulant(Gaussian{2.0}, 2), 2.0);
    EXPECT_EQ(cumulant(Gaussian{2.0}, 3), 0.0);
    EXPECT_THROW(cumulant(Gaussian{2.0}, 0), std::invalid_argument);
}

TEST(Cgf, MatchesCumulantSeries) {
    const auto d = unit_law(1.3, 0.4);
    std::vector<double> mom(41);
    for (int m = 2; m <= 40; ++m) mom[m] = power_integral(d.f, m);
    for (double lam : {-0.5, -0.1, 0.2, 0.5}) {
        double s = 0.5 * 0.16 * lam * lam, term = 1.0;
        for (int m = 1; m <= 40; ++m) {
            term *= -lam / m;
            if (m >= 2) s += 1.3 * term * mom[m];
        }
        EXPECT_NEAR(cgf(d, lam), s, 1e-10) << lam;
    }
    EXPECT_DOUBLE_EQ(cgf(Gaussian{3.0}, 0.5), 0.375);
}

TEST(Cgf, AdditiveInKappaPrime) {
    const double lam = 0.35;
    EXPECT_NEAR(cgf(unit_law(2.5, 0.4), lam), cgf(unit_law(1.0, 0.4), lam) + cgf(unit_law(1.5, 0.0), lam), 1e-13);
    EXPECT_NEAR(cgf(unit_law(0.0, 0.4), lam), cgf(Gaussian{0.16}, lam), 1e-15);
}

TEST(CharacteristicFunction, MatchesQuadrature) {
    const auto d = unit_law(0.8, 0.6);
    const auto r = oracle::graded(-pi, pi, {}, 0.05, 20, 0);
    for (double t : {0.0, 0.3, 1.0, 2.5}) {
        double re = 0.0, im = 0.0;
        for (std::size_t i = 0; i < r.x.size(); ++i) {
            const double v = d.f(r.x[i]);
            re += r.w[i] * (std::cos(t * v) - 1.0);
            im += r.w[i] * (t * v - std::sin(t * v));
        }
        const auto ref = std::exp(oracle::cplx(-0.18 * t * t + 0.8 * re, 0.8 * im));
        EXPECT_NEAR(std::abs(characteristic_function(d, t) - ref), 0.0, 1e-12) << t;
    }
    EXPECT_NEAR(characteristic_function(Gaussian{2.0}, 1.0).real(), std::exp(-1.0), 1e-15);
}

TEST(Sampling, CumulantsAndExponentialMoments) {
    const auto d = unit_law(1.0 / pi, 0.5);
    const auto x = sample(d, 1000000, 42);
    const auto e = make_empirical(x);
    for (int m = 0; m < 4; ++m) EXPECT_NEAR(e.cumulants[m], cumulant(d, m + 1), 4.0 * e.cumulant_se[m]) << m + 1;
    for (double lam : {-0.3, -0.1, 0.1, 0.3}) {
        MomentAccumulator acc;
        for (double v : x) acc.add(std::exp(lam * v));
        const double se = std::sqrt(acc.m2 / (acc.count - 1.0) / acc.count);
        EXPECT_NEAR(acc.mean, std::exp(cgf(d, lam)), 4.0 * se) << lam;
    }
}

TEST(Sampling, DeterministicAcrossThreads) {
    const auto d = unit_law(3.0);
    EXPECT_EQ(sample(d, 10000, 7, 1), sample(d, 10000, 7, 4));
    EXPECT_NE(sample(d, 100, 7), sample(d, 100, 8));
    EXPECT_THROW(sample(d, 0, 7), std::invalid_argument);
    EXPECT_THROW(sample(Gaussian{-1.0}, 10, 7), std::invalid_argument);
}

TEST(Cdf, InversionMatchesSampling) {
    const auto d = unit_law(1.0 / pi, 0.5);
    CdfEvaluator inv(d, 1e-6);
    ASSERT_TRUE(inv.uses_inversion());
    auto x = sample(d, 1000000, 11);
    std::sort(x.begin(), x.end());
    double gap = 0.0;
    for (double t = -4.0; t <= 4.0; t += 0.05) {
        const double emp = double(std::upper_bound(x.begin(), x.end(), t) - x.begin()) / x.size();
        gap = std::max(gap, std::abs(emp - inv(t)));
    }
    // DKW at level 1e-3 for 1e6 draws
    EXPECT_LT(gap, std::sqrt(std::log(2e3) / 2e6));
    EXPECT_NEAR(inv(-100.0), 0.0, 1e-6);
    EXPECT_NEAR(inv(100.0), 1.0, 1e-6);
}

TEST(Cdf, MonotoneAndGaussianExact) {
    CdfEvaluator g(Gaussian{4.0});
    EXPECT_DOUBLE_EQ(g(0.0), 0.5);
    EXPECT_NEAR(g(2.0), normal_cdf(1.0), 1e-15);
    CdfEvaluator inv(unit_law(2.0, 0.3), 1e-6);
    double prev = -1.0;
    for (double t = -8.0; t <= 8.0; t += 0.01) {
        const double v = inv(t);
        EXPECT_GE(v, prev - 2e-6);
        prev = v;
    }
}

TEST(Cdf, FallsBackToSamplingWithoutGaussianPart) {
    const auto d = unit_law(1.0, 0.0);
    CdfEvaluator ev(d, 1e-2);
    EXPECT_TRUE(ev.uses_sampling());
    EXPECT_THROW(CdfEvaluator(d, 1e-6, 0.0, CdfMethod::Inversion), std::domain_error);
    EXPECT_THROW(CdfEvaluator(d, 1e-6), std::domain_error);
    EXPECT_THROW(cdf(d, 0.0, 1e-5), std::invalid_argument);
    const double p = cdf(unit_law(1.0, 0.5), 30.0);
    EXPECT_NEAR(p, 1.0, 1e-4);
}

TEST(Gaussianization, DistanceShrinksWithKappaPrime) {
    const double target = 0.25 + 3 * pi;
    double prev = 1.0;
    for (double kp : {0.5, 5.0, 100.0 / pi}) {
        const double d = law_distance(rescaled_law(kp, 0.5), Gaussian{target}, 12.0, 801);
        EXPECT_LT(d, prev) << kp;
        prev = d;
    }
    EXPECT_LT(prev, 0.02);
    // small kappa' collapses onto the Gaussian part
    EXPECT_LT(law_distance(unit_law(1e-6, 0.5), Gaussian{0.25}, 3.0, 401), 1e-5);
}

TEST(Regime, Classification) {
    const auto f = make_builtin("cosine_hat");
    const double s2 = sigma_f_squared(f);
    auto var = [](const LimitLaw& l) { return std::get<Gaussian>(l).variance; };
    EXPECT_NEAR(var(classify_regime(Process::Cue, 0.3, 0.6, 1.0, f)), s2, 1e-15);
    EXPECT_NEAR(var(classify_regime(Process::Cue, 0.7, 0.4, 1.0, f)), 1.5, 1e-12);
    EXPECT_NEAR(var(classify_regime(Process::Sine, 0.0, 0.5, 1.0, f)), 3.0, 1e-12);
    EXPECT_NEAR(var(classify_regime(Process::Sine, 0.0, 1.5, 1.0, f)), s2, 1e-15);
    const auto id = std::get<InfinitelyDivisible>(classify_regime(Process::Cue, 0.5, 0.5, 2 * pi, f));
    EXPECT_DOUBLE_EQ(id.kappa_prime, 1.0);
    EXPECT_NEAR(id.sigma * id.sigma, s2, 1e-15);
    EXPECT_DOUBLE_EQ(std::get<InfinitelyDivisible>(classify_regime(Process::Sine, 0.2, 1.0, 1.0, f)).kappa_prime, 1 / pi);
    EXPECT_THROW(classify_regime(Process::Cue, 0.5, 0.5, 0.0, f), std::invalid_argument);
    EXPECT_THROW(classify_regime(Process::Cue, 1.0, 0.5, 1.0, f), std::invalid_argument);
    EXPECT_THROW(classify_regime(Process::Cue, 0.5, 1.0, 1.0, f), std::invalid_argument);
    EXPECT_THROW(classify_regime(Process::Sine, 0.5, -1.0, 1.0, f), std::invalid_argument);
    EXPECT_NE(describe(id).find("InfinitelyDivisible"), std::string::npos);
}
