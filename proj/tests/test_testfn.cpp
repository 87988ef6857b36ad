#include <gtest/gtest.h>

#include <thread>

#include <mesolab/testfn.hpp>

#include "oracles.hpp"

using namespace mesolab;

namespace {

std::vector<TestFunction> builtins() {
    return {make_builtin("cosine_hat"), make_builtin("triangle"), make_builtin("bump"),
            make_builtin("hermite", {1.0, 0.5, -0.25})};
}

std::function<double(double)> as_fn(const TestFunction& f) {
    return [f](double x) { return f(x); };
}

}  // namespace

TEST(MakeBuiltin, ZeroFunctionVanishes) {
    const auto z = make_builtin("zero");
    for (double x : {-3.0, 0.0, 1.5}) EXPECT_EQ(z(x), 0.0);
    for (double w : {0.0, 0.7, 10.0}) EXPECT_EQ(std::abs(z.fourier(w)), 0.0);
    EXPECT_TRUE(z.is_zero());
}

TEST(MakeBuiltin, CosineHatEndpoints) {
    const auto f = make_builtin("cosine_hat");
    EXPECT_DOUBLE_EQ(f(0.0), 2.0);
    EXPECT_NEAR(f(pi), 0.0, 1e-15);
    EXPECT_EQ(f(3.5), 0.0);
}

TEST(MakeBuiltin, RejectsUnknownFamilyAndBadEpsilon) {
    EXPECT_THROW(make_builtin("sawtooth"), std::invalid_argument);
    EXPECT_THROW(make_builtin("triangle", {}, 2.5), std::invalid_argument);
    EXPECT_THROW(make_builtin("cosine_hat", {1.0, -1.0}), std::invalid_argument);
    EXPECT_NO_THROW(make_builtin("triangle", {}, 0.0));
}

TEST(FourierMap, TriangleMatchesDirectQuadrature) {
    const auto f = make_builtin("triangle");
    for (double w : {0.5, 1.0, 2.0}) {
        const auto ref = oracle::fourier(as_fn(f), pi, {0.0}, w);
        EXPECT_NEAR(std::abs(f.fourier(w) - ref), 0.0, 1e-10) << "w=" << w;
    }
}

TEST(FourierMap, AllFamiliesMatchDirectQuadrature) {
    for (const auto& f : builtins()) {
        for (double w : {0.0, 0.3, 1.0, 2.5, 7.0}) {
            const auto ref = oracle::fourier(as_fn(f), f.support_radius(), {0.0}, w);
            EXPECT_NEAR(std::abs(f.fourier(w) - ref), 0.0, 1e-10) << f.name() << " w=" << w;
        }
    }
}

TEST(FourierMap, RoundTripRecoversFunction) {
    // f(x) = int F f(w) e^{ixw} dw; truncated at |w| <= W with the analytic tail as budget
    for (const auto& f : builtins()) {
        const auto& d = f.decay();
        double W = 60.0;
        if (f.name() == "cosine_hat") W = 4000.0;
        if (f.name() == "triangle") W = 4000.0;
        const double tail = d.constant > 0.0 ? 2.0 * d.constant * std::pow(W, 1.0 - d.power) / (d.power - 1.0) : 0.0;
        const auto r = oracle::graded(0.0, W, {}, 0.25, 24, 0);
        std::vector<cplx> F(r.x.size());
        for (std::size_t i = 0; i < r.x.size(); ++i) F[i] = f.fourier(r.x[i]);
        double worst = 0.0;
        for (int j = -10; j <= 10; ++j) {
            const double x = 0.099 * j * f.support_radius();
            double v = 0.0;
            for (std::size_t i = 0; i < r.x.size(); ++i) v += 2.0 * r.w[i] * (F[i] * std::exp(cplx(0.0, x * r.x[i]))).real();
            worst = std::max(worst, std::abs(v - f(x)));
        }
        EXPECT_LE(worst, std::max(1e-8, 1.01 * tail + 1e-10)) << f.name();
    }
}

TEST(FourierMap, ParsevalRiemannSum) {
    for (const auto& f : builtins()) {
        const double s = 1.0 / 64.0;  // n^{alpha-1} for n = 4096, alpha = 1/2
        double sum = 0.0;
        for (long k = -64 * 400; k <= 64 * 400; ++k) sum += std::norm(f.fourier(k * s));
        const double ref = l2_norm_squared(f) / (2.0 * pi);
        EXPECT_NEAR(s * sum / ref, 1.0, 0.01) << f.name();
    }
}

TEST(Integrals, CosineHatMoments) {
    const auto f = make_builtin("cosine_hat");
    EXPECT_NEAR(integral_power(f, 1), 2.0 * pi, 1e-12);
    EXPECT_NEAR(integral_power(f, 2), 3.0 * pi, 1e-12);
    EXPECT_NEAR(integral_power(f, 3), 5.0 * pi, 1e-12);
}

TEST(FourierCoefficient, DefinitionAtZeroAndZeroFunction) {
    const auto f = make_builtin("cosine_hat");
    for (std::size_t n : {4u, 64u, 1000u})
        for (double a : {0.3, 0.5, 1.0}) {
            const cplx c = fourier_coefficient(f, n, a, 0);
            EXPECT_NEAR(std::abs(c - std::pow(double(n), a - 1.0) * f.fourier(0.0)), 0.0, 1e-15);
        }
    const auto z = make_builtin("zero");
    for (long k : {-3L, 0L, 5L}) EXPECT_EQ(std::abs(fourier_coefficient(z, 16, 0.5, k)), 0.0);
    EXPECT_THROW(fourier_coefficient(f, 0, 0.5, 1), std::invalid_argument);
    EXPECT_THROW(fourier_coefficient(f, 8, 1.5, 1), std::invalid_argument);
}

TEST(FourierCoefficient, MatchesTrapezoidOnCircle) {
    const auto f = make_builtin("cosine_hat");
    const std::size_t n = 16;
    const double a = 0.5, sc = std::pow(double(n), 1.0 - a);
    const int M = 1 << 20;
    for (long k : {3L, 1L, 7L}) {
        cplx s = 0.0;
        for (int m = 0; m < M; ++m) {
            const double t = -pi + 2.0 * pi * m / M;
            s += f(t * sc) * std::exp(cplx(0.0, -double(k) * t));
        }
        s /= double(M);
        EXPECT_NEAR(std::abs(fourier_coefficient(f, n, a, k) - s), 0.0, 1e-9) << "k=" << k;
    }
}

TEST(Truncate, ZeroAndBandLimited) {
    const auto z = truncate(make_builtin("zero"), 64, 0.5, 10);
    for (double v : z.values) EXPECT_EQ(v, 0.0);
    // at alpha = 1 the cosine hat is 1 + cos(theta), a degree-1 polynomial
    const auto f = make_builtin("cosine_hat");
    const auto t = truncate(f, 32, 1.0, 4, 64);
    for (std::size_t m = 0; m < t.values.size(); ++m) EXPECT_NEAR(t.values[m], f(grid_angle(m, 64)), 1e-12);
    EXPECT_THROW(truncate(f, 32, 0.5, 40, 64), std::invalid_argument);
}

TEST(Truncate, GapBoundedByTailSum) {
    const auto f = make_builtin("cosine_hat");
    const std::size_t n = 256, N = 64;
    const double a = 0.5, sc = std::pow(double(n), 1.0 - a);
    const auto t = truncate(f, n, a, N, 1024);
    double gap = 0.0;
    for (std::size_t m = 0; m < t.values.size(); ++m) gap = std::max(gap, std::abs(t.values[m] - f(grid_angle(m, 1024) * sc)));
    // tail sum up to K plus the analytic remainder of the decay envelope
    const long K = 2000000;
    double tail = 0.0;
    for (long k = N + 1; k <= K; ++k) tail += 2.0 * std::abs(fourier_coefficient(f, n, a, k));
    const auto& d = f.decay();
    const double s = 1.0 / sc;
    tail += 2.0 * d.constant * std::pow(s, 1.0 - d.power) * std::pow(double(K), 1.0 - d.power) / (d.power - 1.0);
    EXPECT_GT(gap, 0.0);
    EXPECT_LE(gap, tail);
}

TEST(Truncate, IsProjection) {
    const auto f = make_builtin("triangle");
    const auto t = truncate(f, 512, 0.4, 100, 1024);
    const auto u = truncate_samples(t.values, 100);
    for (std::size_t m = 0; m < t.values.size(); ++m) EXPECT_NEAR(u.values[m], t.values[m], 1e-12);
}

TEST(ChooseN, MidpointFormula) {
    EXPECT_EQ(choose_N(10000, 0.5), 316u);
    EXPECT_EQ(choose_N(256, 0.3), 111u);  // round(256^0.85) = round(111.43)
    EXPECT_GE(choose_N(1000, 0.999999), 1u);
    EXPECT_EQ(choose_N(2048, 0.5), choose_N(2048, 0.5));
    EXPECT_LE(choose_N(4096, 0.3, 0.01), choose_N(4096, 0.3));
}

TEST(SigmaF, ZeroFunction) { EXPECT_EQ(sigma_f_squared(make_builtin("zero")), 0.0); }

TEST(SigmaF, CosineHatReference) {
    EXPECT_NEAR(sigma_f_squared(make_builtin("cosine_hat")), 0.6983975941695836, 1e-9);
}

TEST(SigmaF, MatchesDoubleIntegral) {
    for (const auto& f : builtins()) {
        std::vector<double> br;
        for (double b : f.breakpoints()) br.push_back(b);
        const double ref = oracle::sigma2_double_integral(as_fn(f), f.support_radius(), br, 0.1 * f.support_radius());
        EXPECT_NEAR(sigma_f_squared(f) / ref, 1.0, 1e-6) << f.name();
    }
}

TEST(SigmaF, DilationInvariance) {
    for (const auto& f : builtins()) {
        const double base = sigma_f_squared(f);
        for (double c : {2.0, 5.0}) EXPECT_NEAR(sigma_f_squared(dilate(f, c)), base, 1e-8) << f.name() << " c=" << c;
    }
}

TEST(WeightedNorm, FiniteWithCertifiedTail) {
    for (const auto& f : builtins()) {
        const auto [v, tail] = weighted_fourier_norm(f);
        EXPECT_GT(v, 0.0);
        EXPECT_LE(tail, 1e-8 * v);
        EXPECT_GE(v, l2_norm_squared(f) / (2.0 * pi));
    }
}

TEST(TestFunction, SharedAcrossThreads) {
    const auto f = make_builtin("bump");
    std::vector<double> out(8);
    std::vector<std::thread> ts;
    for (int i = 0; i < 8; ++i) ts.emplace_back([&, i] { out[i] = f.fourier(0.1 * i).real(); });
    for (auto& t : ts) t.join();
    for (int i = 0; i < 8; ++i) EXPECT_EQ(out[i], f.fourier(0.1 * i).real());
}
