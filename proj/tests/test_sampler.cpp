#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <sstream>

#include <mesolab/sampler.hpp>

#include "oracles.hpp"

using namespace mesolab;

namespace {

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
    }
    return d;
}

void expect_valid_cue(const SpectrumSample& s, std::size_t n) {
    ASSERT_EQ(s.points.size(), n);
    for (std::size_t i = 0; i < s.points.size(); ++i) {
        EXPECT_GE(s.points[i], -pi);
        EXPECT_LT(s.points[i], pi);
        if (i) {
            EXPECT_GT(s.points[i], s.points[i - 1]);
        }
    }
}

struct MeanSe {
    double mean, se;
};

MeanSe mean_se(const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double s2 = 0.0;
    for (double x : v) s2 += (x - m) * (x - m);
    s2 /= (v.size() - 1);
    return {m, std::sqrt(s2 / v.size())};
}

}  // namespace

TEST(SampleCue, RejectsZeroSize) {
    EXPECT_THROW(sample_cue(0, 1), std::invalid_argument);
    EXPECT_THROW(sample_cue_arc(0, -1, 1, 1), std::invalid_argument);
    EXPECT_THROW(sample_cue_arc(8, -4, 1, 1), std::invalid_argument);
}

TEST(SampleCue, SortedDistinctInRange) {
    for (auto m : {CueMethod::Ginibre, CueMethod::Verblunsky})
        for (std::size_t n : {1u, 2u, 7u, 64u, 300u})
            for (std::uint64_t seed = 0; seed < 5; ++seed) expect_valid_cue(sample_cue(n, seed, m), n);
}

TEST(SampleCue, VerblunskyStableAcrossManySeeds) {
    for (std::size_t n : {64u, 512u})
        for (std::uint64_t seed = 0; seed < (n == 64 ? 3000u : 400u); ++seed)
            ASSERT_NO_THROW(expect_valid_cue(sample_cue(n, seed, CueMethod::Verblunsky), n)) << n << " " << seed;
}

TEST(SampleCue, SizeOneIsUniform) {
    for (auto m : {CueMethod::Ginibre, CueMethod::Verblunsky}) {
        std::vector<double> u;
        for (std::uint64_t s = 0; s < 100000; ++s) u.push_back((sample_cue(1, s, m).points[0] + pi) / (2 * pi));
        std::sort(u.begin(), u.end());
        double d = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i)
            d = std::max({d, std::abs(u[i] - double(i) / u.size()), std::abs(u[i] - double(i + 1) / u.size())});
        EXPECT_LT(d, 0.01);
    }
}

TEST(SampleCue, ArcMeanCount) {
    for (auto m : {CueMethod::Ginibre, CueMethod::Verblunsky}) {
        std::vector<double> c;
        for (std::uint64_t s = 0; s < 10000; ++s) {
            const auto p = sample_cue(64, s, m).points;
            c.push_back(double(std::count_if(p.begin(), p.end(), [](double t) { return t >= 0.0 && t <= pi / 2; })));
        }
        const auto r = mean_se(c);
        EXPECT_NEAR(r.mean, 16.0, 3.0 * r.se);
    }
}

TEST(SampleCue, TwoPointGapMatchesWeylDensity) {
    // Weyl density |e^{it1} - e^{it2}|^2 on the torus; the sorted gap g = t2 - t1
    // picks up the factor (2 pi - g) from the placement of t1
    const int bins = 20, N = 20000;
    std::vector<double> p(bins);
    for (int b = 0; b < bins; ++b) {
        const double lo = 2 * pi * b / bins, hi = 2 * pi * (b + 1) / bins;
        const auto r = oracle::graded(lo, hi, {}, 0.05);
        p[b] = oracle::integrate([](double g) { return (2.0 * pi - g) * (2.0 - 2.0 * std::cos(g)); }, r);
    }
    const double tot = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& v : p) v /= tot;
    for (auto m : {CueMethod::Ginibre, CueMethod::Verblunsky}) {
        std::vector<int> cnt(bins);
        for (int s = 0; s < N; ++s) {
            const auto x = sample_cue(2, 1000 + s, m).points;
            const double g = x[1] - x[0];
            cnt[std::min(bins - 1, static_cast<int>(g / (2 * pi) * bins))]++;
        }
        double chi2 = 0.0;
        for (int b = 0; b < bins; ++b) chi2 += std::pow(cnt[b] - N * p[b], 2) / (N * p[b]);
        EXPECT_GT(oracle::chi2_pvalue(chi2, bins - 1), 0.01) << "chi2=" << chi2;
    }
}

TEST(SampleCue, TraceMomentsMatchDiaconisShahshahani) {
    // E |tr U^k|^2 = min(k, n)
    const std::size_t n = 8;
    for (auto m : {CueMethod::Ginibre, CueMethod::Verblunsky}) {
        std::vector<std::vector<double>> v(10);
        for (std::uint64_t s = 0; s < 20000; ++s) {
            const auto x = sample_cue(n, s, m).points;
            for (int k = 1; k <= 10; ++k) {
                cplx t = 0.0;
                for (double a : x) t += std::exp(cplx(0.0, k * a));
                v[k - 1].push_back(std::norm(t));
            }
        }
        for (int k = 1; k <= 10; ++k) {
            const auto r = mean_se(v[k - 1]);
            EXPECT_NEAR(r.mean, double(std::min<std::size_t>(k, n)), 4.0 * r.se) << "k=" << k;
        }
    }
}

TEST(SampleCue, VerblunskyAgreesWithGinibreAtN512) {
    // pooled nearest-neighbour spacings, scaled to mean one
    const std::size_t n = 512;
    auto spacings = [&](CueMethod m, std::uint64_t base, int reps) {
        std::vector<double> out;
        for (int r = 0; r < reps; ++r) {
            const auto x = sample_cue(n, base + r, m).points;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = (i + 1 < n ? x[i + 1] : x[0] + 2 * pi) - x[i];
                out.push_back(d * n / (2 * pi));
            }
        }
        return out;
    };
    const auto g = spacings(CueMethod::Ginibre, 7000, 30);
    const auto v = spacings(CueMethod::Verblunsky, 9000, 200);
    const double crit = 1.63 * std::sqrt(1.0 / g.size() + 1.0 / v.size());
    EXPECT_LT(ks_two_sample(g, v), crit);
}

TEST(SampleCue, ArcSamplerEqualsRestrictedFullSample) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto full = sample_cue(700, seed, CueMethod::Verblunsky).points;
        const auto arc = sample_cue_arc(700, -0.4, 0.9, seed).points;
        std::vector<double> ref;
        for (double t : full)
            if (t >= -0.4 && t < 0.9) ref.push_back(t);
        ASSERT_EQ(arc.size(), ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(arc[i], ref[i], 1e-12);
    }
}

TEST(SampleCue, RotationInvarianceOfArcCounts) {
    const double len = 0.8;
    std::vector<double> a, b;
    for (std::uint64_t s = 0; s < 4000; ++s) {
        a.push_back(double(sample_cue_arc(100, -2.5, -2.5 + len, s).points.size()) + 1e-9 * s);
        b.push_back(double(sample_cue_arc(100, 1.7, 1.7 + len, 50000 + s).points.size()) + 1e-9 * s);
    }
    const auto ra = mean_se(a), rb = mean_se(b);
    EXPECT_NEAR(ra.mean, rb.mean, 4.0 * std::hypot(ra.se, rb.se));
    std::vector<int> ca(20), cb(20);
    for (double x : a) ca[std::min(19, int(x))]++;
    for (double x : b) cb[std::min(19, int(x))]++;
    double chi2 = 0.0;
    int dof = -1;
    for (int k = 0; k < 20; ++k)
        if (ca[k] + cb[k] > 0) {
            chi2 += std::pow(ca[k] - cb[k], 2) / (ca[k] + cb[k]);
            ++dof;
        }
    EXPECT_GT(oracle::chi2_pvalue(chi2, std::max(dof, 1)), 0.001);
}

TEST(SampleCue, Deterministic) {
    for (auto m : {CueMethod::Ginibre, CueMethod::Verblunsky}) {
        EXPECT_EQ(sample_cue(50, 42, m).points, sample_cue(50, 42, m).points);
        EXPECT_NE(sample_cue(50, 42, m).points, sample_cue(50, 43, m).points);
    }
}

TEST(Thin, EndpointsAndBinomialMean) {
    const auto s = sample_cue(128, 5);
    EXPECT_EQ(thin(s, 1.0, 9).points, s.points);
    EXPECT_TRUE(thin(s, 0.0, 9).points.empty());
    EXPECT_DOUBLE_EQ(*thin(s, 0.3, 9).thinned_gamma, 0.3);
    EXPECT_THROW(thin(s, 1.5, 9), std::invalid_argument);
    std::vector<double> c;
    for (std::uint64_t r = 0; r < 10000; ++r) c.push_back(double(thin(s, 0.3, r).points.size()));
    const auto m = mean_se(c);
    const double se = std::sqrt(128 * 0.3 * 0.7 / 10000.0);
    EXPECT_NEAR(m.mean, 38.4, 3.0 * se);
}

TEST(Thin, CommutesWithRestriction) {
    // thin then restrict vs restrict then thin: count moments on an arc
    std::vector<double> a, b;
    for (std::uint64_t r = 0; r < 3000; ++r) {
        auto full = sample_cue(40, r, CueMethod::Verblunsky);
        auto t = thin(full, 0.6, derive_seed(r, 1, 0));
        a.push_back(double(std::count_if(t.points.begin(), t.points.end(), [](double x) { return x >= 0 && x < 1.5; })));
        auto arc = sample_cue_arc(40, 0.0, 1.5, 100000 + r);
        b.push_back(double(thin(arc, 0.6, derive_seed(r, 2, 0)).points.size()));
    }
    const auto ra = mean_se(a), rb = mean_se(b);
    EXPECT_NEAR(ra.mean, rb.mean, 4.0 * std::hypot(ra.se, rb.se));
    EXPECT_NEAR(ra.mean, 0.6 * 40 * 1.5 / (2 * pi), 4.0 * ra.se);
}

TEST(SineKernel, EigenvaluesAndTrace) {
    RestrictedSineKernel K(-20.0, 20.0);
    for (double l : K.eigenvalues()) {
        EXPECT_GE(l, -1e-8);
        EXPECT_LE(l, 1.0 + 1e-8);
    }
    EXPECT_NEAR(K.trace(), 40.0 / pi, 1e-8);
    EXPECT_THROW(RestrictedSineKernel(-400, 400), std::invalid_argument);
}

TEST(SineWindow, MeanCount) {
    RestrictedSineKernel K(-50.0, 50.0);
    std::vector<double> c;
    for (std::uint64_t s = 0; s < 2000; ++s) {
        const auto x = sample_sine_window(K, 1.0, s);
        c.push_back(double(x.points.size()));
        for (std::size_t i = 1; i < x.points.size(); ++i) ASSERT_GT(x.points[i], x.points[i - 1]);
        for (double p : x.points) {
            ASSERT_GE(p, -50.0);
            ASSERT_LE(p, 50.0);
        }
    }
    const auto m = mean_se(c);
    EXPECT_NEAR(m.mean, 100.0 / pi, 3.0 * m.se);
}

TEST(SineWindow, CountVarianceMatchesEigenvalueSum) {
    RestrictedSineKernel K(-20.0, 20.0);
    for (double gamma : {1.0, 0.5}) {
        std::vector<double> c;
        for (std::uint64_t s = 0; s < 6000; ++s) c.push_back(double(sample_sine_window(K, gamma, 77 + s).points.size()));
        const auto m = mean_se(c);
        double m2 = 0.0, m4 = 0.0;
        for (double x : c) {
            m2 += std::pow(x - m.mean, 2);
            m4 += std::pow(x - m.mean, 4);
        }
        m2 /= (c.size() - 1);
        m4 /= c.size();
        const double se = std::sqrt((m4 - m2 * m2) / c.size());
        EXPECT_NEAR(m2, K.count_variance(gamma), 5.0 * se) << "gamma=" << gamma;
        EXPECT_NEAR(m.mean, gamma * 40.0 / pi, 5.0 * m.se);
    }
}

TEST(SineWindow, SmallGammaEmpties) {
    RestrictedSineKernel K(-10.0, 10.0);
    double tot = 0.0;
    for (std::uint64_t s = 0; s < 200; ++s) tot += double(sample_sine_window(K, 1e-6, s).points.size());
    EXPECT_LE(tot, 1.0);
}

TEST(SineWindow, Deterministic) {
    EXPECT_EQ(sample_sine_window(-15.0, 15.0, 0.8, 3).points, sample_sine_window(-15.0, 15.0, 0.8, 3).points);
}

TEST(Dpps, RoundTrip) {
    auto s = thin(sample_cue(33, 4), 0.7, 5);
    std::stringstream ss;
    dpps::write(ss, s);
    const auto r = dpps::read(ss);
    EXPECT_EQ(r.points, s.points);
    EXPECT_EQ(r.n, s.n);
    EXPECT_EQ(r.seed, s.seed);
    EXPECT_EQ(r.kind, s.kind);
    EXPECT_DOUBLE_EQ(*r.thinned_gamma, 0.7);

    const auto w = sample_sine_window(-5.0, 7.0, 1.0, 11);
    const auto path = std::filesystem::temp_directory_path() / "mesolab_roundtrip.dpps";
    dpps::write_file(path.string(), w);
    const auto v = dpps::read_file(path.string());
    EXPECT_EQ(v.points, w.points);
    EXPECT_EQ(v.window_lo, -5.0);
    EXPECT_EQ(v.window_hi, 7.0);
    std::filesystem::remove(path);

    std::stringstream bad("XXXX");
    EXPECT_THROW(dpps::read(bad), std::runtime_error);
}
