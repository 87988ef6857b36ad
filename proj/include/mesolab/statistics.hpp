#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "limitlaw.hpp"
#include "parallel.hpp"
#include "sampler.hpp"
#include "testfn.hpp"

namespace mesolab {

// gamma = value (fixed) or gamma = 1 - kappa size^{-delta} (decaying).
struct GammaRule {
    enum class Kind { Fixed, Decaying };
    Kind kind = Kind::Fixed;
    double value = 1.0;
    double kappa = 0.0;
    double delta = 0.0;

    static GammaRule fixed(double g) {
        if (!(g >= 0.0 && g <= 1.0)) throw std::invalid_argument("GammaRule: gamma must lie in [0,1]");
        return {Kind::Fixed, g, 0.0, 0.0};
    }
    static GammaRule decaying(double kappa, double delta) {
        if (!(kappa > 0.0 && delta > 0.0)) throw std::invalid_argument("GammaRule: kappa and delta must be positive");
        return {Kind::Decaying, 1.0, kappa, delta};
    }

    double gamma_at(double size) const {
        if (kind == Kind::Fixed) return value;
        const double g = 1.0 - kappa * std::pow(size, -delta);
        if (!(g > 0.0 && g < 1.0))
            throw std::domain_error("GammaRule: 1 - kappa size^{-delta} outside (0,1) at size " + std::to_string(size));
        return g;
    }
};

struct LinearStatisticSpec {
    TestFunction f;
    Process process = Process::Cue;
    double alpha = 1.0;  // CUE scale exponent in (0,1]
    GammaRule gamma_rule;

    // Exponent s of the normalization size^{-s}. For a fixed gamma < 1 the
    // fluctuations are Poissonian and grow like the expected count.
    double normalization_s() const {
        const double crit = process == Process::Cue ? alpha : 1.0;
        if (gamma_rule.kind == GammaRule::Kind::Decaying) return std::max(0.0, 0.5 * (crit - gamma_rule.delta));
        return gamma_rule.value < 1.0 ? 0.5 * crit : 0.0;
    }
};

inline LinearStatisticSpec cue_spec(TestFunction f, double alpha, GammaRule rule) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("cue_spec: alpha must lie in (0,1]");
    return {std::move(f), Process::Cue, alpha, rule};
}

inline LinearStatisticSpec sine_spec(TestFunction f, GammaRule rule) { return {std::move(f), Process::Sine, 1.0, rule}; }

// Predicted limit of size^{-s}(X - E X).
inline LimitLaw predicted_law(const LinearStatisticSpec& spec) {
    const auto& r = spec.gamma_rule;
    if (r.kind == GammaRule::Kind::Decaying)
        return classify_regime(spec.process, spec.alpha, r.delta, r.kappa, spec.f);
    if (r.value >= 1.0) return Gaussian{sigma_f_squared(spec.f)};
    const double c = spec.process == Process::Cue ? 1.0 / (2.0 * pi) : 1.0 / pi;
    return Gaussian{r.value * (1.0 - r.value) * c * l2_norm_squared(spec.f)};
}

// sum_j f(theta_j n^{1-alpha}) (CUE) or sum_j f(x_j / L) (sine).
inline double linear_statistic(const SpectrumSample& s, const LinearStatisticSpec& spec, double L = 1.0) {
    const bool cue = s.kind == ProcessKind::Cue;
    if (cue != (spec.process == Process::Cue)) throw std::invalid_argument("linear_statistic: sample kind does not match");
    if (s.points.empty() || spec.f.is_zero()) return 0.0;
    const double scale = cue ? std::pow(static_cast<double>(s.n), 1.0 - spec.alpha) : 1.0 / L;
    double x = 0.0;
    for (double p : s.points) x += spec.f(p * scale);
    return x;
}

inline double exact_mean_cue(const LinearStatisticSpec& spec, std::size_t n) {
    const double g = spec.gamma_rule.gamma_at(static_cast<double>(n));
    return g * std::pow(static_cast<double>(n), spec.alpha) * spec.f.fourier(0.0).real();
}

struct VarianceValue {
    double value = 0.0;
    double tail_bound = 0.0;
    long terms = 0;
};

// sum_k min(n,|k|) |hat h(k)|^2, summed until the certified tail is below
// 1e-8 of the partial sum (or K_max terms when given).
inline VarianceValue exact_variance_cue(const LinearStatisticSpec& spec, std::size_t n, long K_max = 0) {
    const auto& f = spec.f;
    if (f.is_zero()) return {};
    require_fits_circle(f, n, spec.alpha);
    const auto& d = f.decay();
    if (!(d.power > 1.0)) throw std::domain_error("exact_variance_cue: tail not certifiable");
    const double sc = std::pow(static_cast<double>(n), spec.alpha - 1.0);
    const double nd = static_cast<double>(n);
    auto tail = [&](long K) {
        if (static_cast<double>(K) * sc < d.from) return std::numeric_limits<double>::infinity();
        return 2.0 * d.constant * d.constant * std::pow(sc, 2.0 - 2.0 * d.power) *
               std::pow(static_cast<double>(K), 2.0 - 2.0 * d.power) / (2.0 * d.power - 2.0);
    };
    double sum = 0.0;
    long k = 0;
    long K = std::max<long>(16, static_cast<long>(std::ceil(8.0 / sc)));
    for (;;) {
        if (K_max > 0) K = std::min(K, K_max);
        for (long j = k + 1; j <= K; ++j)
            sum += 2.0 * std::min(nd, static_cast<double>(j)) * std::norm(fourier_coefficient(f, n, spec.alpha, j));
        k = K;
        const double t = tail(K);
        if (t <= 1e-8 * sum || (K_max > 0 && K >= K_max)) return {sum, t, K};
        if (K > 400000000L) throw std::domain_error("exact_variance_cue: tail not certifiable");
        K *= 2;
    }
}

struct ThinnedVariance {
    double poissonian = 0.0;  // n^alpha gamma(1-gamma)/(2pi) int f^2
    double cue = 0.0;         // gamma^2 Var_CUE
    double total = 0.0;
    double gamma = 1.0;
};

inline ThinnedVariance exact_variance_thinned(const LinearStatisticSpec& spec, std::size_t n) {
    ThinnedVariance v;
    v.gamma = spec.gamma_rule.gamma_at(static_cast<double>(n));
    if (spec.f.is_zero() || v.gamma == 0.0) return v;
    const double g = v.gamma;
    v.poissonian = std::pow(static_cast<double>(n), spec.alpha) * g * (1.0 - g) / (2.0 * pi) * l2_norm_squared(spec.f);
    v.cue = g * g * exact_variance_cue(spec, n).value;
    v.total = v.poissonian + v.cue;
    return v;
}

struct SineMoments {
    double mean = 0.0;
    double variance = 0.0;
    double poissonian = 0.0;  // gamma(1-gamma)/pi L int f^2
    double sine = 0.0;        // gamma^2 Var_sine
    double gamma = 1.0;
};

// Var_sine of x -> f(x/L): int |F f(w)|^2 min(|w|, 2L) dw.
inline double sine_variance_unthinned(const TestFunction& f, double L) {
    if (f.is_zero()) return 0.0;
    const double W = 2.0 * L;
    const double panel = 0.5 * std::min(1.0, pi / f.support_radius());
    const auto r = quad::composite(0.0, W, {}, panel, 16);
    double lin = 0.0, flat = 0.0;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
        const double a = std::norm(f.fourier(r.nodes[i]));
        lin += r.weights[i] * r.nodes[i] * a;
        flat += r.weights[i] * a;
    }
    // int_0^inf |F f|^2 = (1/4pi) int f^2
    const double tail = std::max(0.0, l2_norm_squared(f) / (4.0 * pi) - flat);
    return 2.0 * (lin + W * tail);
}

inline SineMoments exact_moments_sine(const LinearStatisticSpec& spec, double L) {
    if (spec.process != Process::Sine) throw std::invalid_argument("exact_moments_sine: spec is not a sine spec");
    SineMoments m;
    m.gamma = spec.gamma_rule.gamma_at(L);
    if (spec.f.is_zero() || m.gamma == 0.0) return m;
    const double g = m.gamma;
    m.mean = g * L / pi * integral_power(spec.f, 1);
    m.poissonian = g * (1.0 - g) / pi * L * l2_norm_squared(spec.f);
    m.sine = g * g * sine_variance_unthinned(spec.f, L);
    m.variance = m.poissonian + m.sine;
    return m;
}

// Streaming central moments; merge is associative.
struct MomentAccumulator {
    double count = 0.0, mean = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;

    void add(double x) {
        MomentAccumulator o;
        o.count = 1.0;
        o.mean = x;
        merge(o);
    }

    void merge(const MomentAccumulator& b) {
        if (b.count == 0.0) return;
        if (count == 0.0) {
            *this = b;
            return;
        }
        const double n = count + b.count;
        const double d = b.mean - mean;
        const double d2 = d * d, d3 = d2 * d, d4 = d3 * d;
        const double na = count, nb = b.count;
        const double nm4 = m4 + b.m4 + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n) +
                           6.0 * d2 * (na * na * b.m2 + nb * nb * m2) / (n * n) + 4.0 * d * (na * b.m3 - nb * m3) / n;
        const double nm3 = m3 + b.m3 + d3 * na * nb * (na - nb) / (n * n) + 3.0 * d * (na * b.m2 - nb * m2) / n;
        const double nm2 = m2 + b.m2 + d2 * na * nb / n;
        mean += d * nb / n;
        m2 = nm2;
        m3 = nm3;
        m4 = nm4;
        count = n;
    }

    // unbiased k-statistics k1..k4
    std::array<double, 4> k_statistics() const { return k_from_sums(count, mean, m2, m3, m4); }

    static std::array<double, 4> k_from_sums(double n, double mean, double s2, double s3, double s4) {
        std::array<double, 4> k{mean, 0.0, 0.0, 0.0};
        if (n < 4.0) return k;
        const double c2 = s2 / n, c3 = s3 / n, c4 = s4 / n;
        k[1] = n / (n - 1.0) * c2;
        k[2] = n * n / ((n - 1.0) * (n - 2.0)) * c3;
        k[3] = n * n * ((n + 1.0) * c4 - 3.0 * (n - 1.0) * c2 * c2) / ((n - 1.0) * (n - 2.0) * (n - 3.0));
        return k;
    }
};

struct EmpiricalDistribution {
    std::vector<double> values;  // sorted
    double center_used = 0.0;
    double scale_used = 1.0;
    std::array<double, 4> cumulants{};
    std::array<double, 4> cumulant_se{};

    std::size_t size() const { return values.size(); }
    double mean() const { return cumulants[0]; }
    double variance() const { return cumulants[1]; }
};

// values[i] = scale (raw[i] - center), with k-statistics and delete-one
// jackknife errors.
inline EmpiricalDistribution make_empirical(const std::vector<double>& raw, double center = 0.0, double scale = 1.0) {
    EmpiricalDistribution d;
    d.center_used = center;
    d.scale_used = scale;
    d.values.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) d.values[i] = scale * (raw[i] - center);
    MomentAccumulator acc;
    for (double v : d.values) acc.add(v);
    d.cumulants = acc.k_statistics();
    const double n = static_cast<double>(d.values.size());
    if (n >= 6.0) {
        const double mu = acc.mean;
        double s[5] = {0, 0, 0, 0, 0};
        for (double v : d.values) {
            const double e = v - mu;
            s[1] += e;
            s[2] += e * e;
            s[3] += e * e * e;
            s[4] += e * e * e * e;
        }
        std::array<double, 4> jm{}, jsq{};
        const double m = n - 1.0;
        for (double v : d.values) {
            const double e = v - mu;
            const double t1 = s[1] - e, t2 = s[2] - e * e, t3 = s[3] - e * e * e, t4 = s[4] - e * e * e * e;
            const double dd = t1 / m;
            const double c2 = t2 - m * dd * dd;
            const double c3 = t3 - 3.0 * dd * t2 + 2.0 * m * dd * dd * dd;
            const double c4 = t4 - 4.0 * dd * t3 + 6.0 * dd * dd * t2 - 3.0 * m * dd * dd * dd * dd;
            const auto k = MomentAccumulator::k_from_sums(m, mu + dd, c2, c3, c4);
            for (int q = 0; q < 4; ++q) {
                jm[q] += k[q];
                jsq[q] += k[q] * k[q];
            }
        }
        for (int q = 0; q < 4; ++q) {
            const double avg = jm[q] / n;
            const double var = std::max(0.0, jsq[q] / n - avg * avg);
            d.cumulant_se[q] = std::sqrt((n - 1.0) * var);
        }
    }
    std::sort(d.values.begin(), d.values.end());
    return d;
}

// sup |F_emp - F| for sorted values.
template <class Cdf>
double ks_distance_sorted(const std::vector<double>& v, Cdf&& F) {
    const double n = static_cast<double>(v.size());
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double c = F(v[i]);
        d = std::max({d, c - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - c});
    }
    return d;
}

inline double ks_distance(const EmpiricalDistribution& d, const LimitLaw& law, double accuracy = 1e-5) {
    if (d.values.empty()) throw std::invalid_argument("ks_distance: empty distribution");
    const double span = std::max(std::abs(d.values.front()), std::abs(d.values.back())) + 1.0;
    CdfEvaluator F(law, accuracy, span);
    return ks_distance_sorted(d.values, F);
}

struct EnsembleOptions {
    CueMethod method = CueMethod::Verblunsky;
    unsigned threads = 0;
};

// Replicates of size^{-s} (X - E X); size is n (CUE) or L (sine).
inline EmpiricalDistribution run_ensemble(const LinearStatisticSpec& spec, double size, std::size_t replicates,
                                          std::uint64_t master_seed, EnsembleOptions opt = {}) {
    if (replicates < 100) throw std::invalid_argument("run_ensemble: at least 100 replicates required");
    const double gamma = spec.gamma_rule.gamma_at(size);
    const double s = spec.normalization_s();
    const double scale = std::pow(size, -s);
    std::vector<double> raw(replicates);
    const auto& f = spec.f;
    if (spec.process == Process::Cue) {
        const auto n = static_cast<std::size_t>(size);
        if (static_cast<double>(n) != size || n == 0) throw std::invalid_argument("run_ensemble: n must be a positive integer");
        require_fits_circle(f, n, spec.alpha);
        const double mean = exact_mean_cue(spec, n);
        const double r = std::min(pi, f.support_radius() * std::pow(size, spec.alpha - 1.0));
        const double lo = -r, hi = r >= pi ? pi : std::nextafter(r, 2.0 * pi);
        if (f.is_zero()) return make_empirical(std::vector<double>(replicates, 0.0), 0.0, scale);
        parallel_for(
            replicates,
            [&](std::size_t i) {
                auto smp = sample_cue_arc(n, lo, hi, derive_seed(master_seed, 0, i), opt.method);
                if (gamma < 1.0) smp = thin(smp, gamma, derive_seed(master_seed, 1, i));
                raw[i] = linear_statistic(smp, spec);
            },
            opt.threads);
        return make_empirical(raw, mean, scale);
    }
    const auto mom = exact_moments_sine(spec, size);
    if (f.is_zero()) return make_empirical(std::vector<double>(replicates, 0.0), 0.0, scale);
    const double R = f.support_radius() * size;
    RestrictedSineKernel K(-R, R);
    parallel_for(
        replicates,
        [&](std::size_t i) {
            const auto smp = sample_sine_window(K, gamma, derive_seed(master_seed, 2, i));
            raw[i] = linear_statistic(smp, spec, size);
        },
        opt.threads);
    return make_empirical(raw, mom.mean, scale);
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// CSV with header `value` plus a JSON sidecar (same stem, .json).
inline void write_empirical(const EmpiricalDistribution& d, const std::filesystem::path& csv) {
    {
        std::ofstream os(csv);
        if (!os) throw std::runtime_error("cannot write " + csv.string());
        os << "value\n";
        for (double v : d.values) os << format_double(v) << '\n';
    }
    nlohmann::json j;
    j["count"] = d.values.size();
    j["center_used"] = d.center_used;
    j["scale_used"] = d.scale_used;
    j["cumulants"] = d.cumulants;
    j["cumulant_standard_errors"] = d.cumulant_se;
    auto side = csv;
    side.replace_extension(".json");
    std::ofstream os(side);
    if (!os) throw std::runtime_error("cannot write " + side.string());
    os << j.dump(2) << '\n';
}

inline EmpiricalDistribution read_empirical(const std::filesystem::path& csv) {
    std::ifstream is(csv);
    if (!is) throw std::runtime_error("cannot read " + csv.string());
    std::string line;
    std::getline(is, line);
    if (line != "value") throw std::runtime_error("empirical CSV: expected header 'value'");
    std::vector<double> v;
    while (std::getline(is, line))
        if (!line.empty()) v.push_back(std::stod(line));
    auto side = csv;
    side.replace_extension(".json");
    double center = 0.0, scale = 1.0;
    if (std::filesystem::exists(side)) {
        std::ifstream js(side);
        const auto j = nlohmann::json::parse(js);
        center = j.value("center_used", 0.0);
        scale = j.value("scale_used", 1.0);
    }
    auto d = make_empirical(v);
    d.center_used = center;
    d.scale_used = scale;
    return d;
}

}  // namespace mesolab
