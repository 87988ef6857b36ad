#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "parallel.hpp"
#include "testfn.hpp"

namespace mesolab {

struct Gaussian {
    double variance = 0.0;
};

// sigma Z - sum_i f(U_i) + kappa' int f, {U_i} Poisson with intensity kappa' dx.
struct InfinitelyDivisible {
    TestFunction f;
    double kappa_prime = 0.0;
    double sigma = 0.0;
};

using LimitLaw = std::variant<Gaussian, InfinitelyDivisible>;

enum class Process { Cue, Sine };

inline std::string describe(const LimitLaw& law) {
    if (const auto* g = std::get_if<Gaussian>(&law)) return "Gaussian(variance=" + std::to_string(g->variance) + ")";
    const auto& d = std::get<InfinitelyDivisible>(law);
    return "InfinitelyDivisible(f=" + d.f.name() + ", kappa'=" + std::to_string(d.kappa_prime) +
           ", sigma=" + std::to_string(d.sigma) + ")";
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double cgf(const LimitLaw& law, double lambda) {
    if (const auto* g = std::get_if<Gaussian>(&law)) return 0.5 * g->variance * lambda * lambda;
    const auto& d = std::get<InfinitelyDivisible>(law);
    const double jump = d.kappa_prime == 0.0
                            ? 0.0
                            : d.kappa_prime * integrate_support(d.f, [lambda](double v, double) {
                                  return std::expm1(-lambda * v) + lambda * v;
                              });
    return 0.5 * d.sigma * d.sigma * lambda * lambda + jump;
}

inline cplx characteristic_function(const LimitLaw& law, double t) {
    if (const auto* g = std::get_if<Gaussian>(&law)) return std::exp(cplx(-0.5 * g->variance * t * t, 0.0));
    const auto& d = std::get<InfinitelyDivisible>(law);
    double re = 0.0, im = 0.0;
    if (d.kappa_prime != 0.0 && !d.f.is_zero()) {
        const auto r = d.f.support_rule();
        for (std::size_t i = 0; i < r.nodes.size(); ++i) {
            const double v = d.f(r.nodes[i]);
            re += r.weights[i] * (std::cos(t * v) - 1.0);
            im += r.weights[i] * (t * v - std::sin(t * v));
        }
    }
    return std::exp(cplx(-0.5 * d.sigma * d.sigma * t * t + d.kappa_prime * re, d.kappa_prime * im));
}

// m-th cumulant.
inline double cumulant(const LimitLaw& law, int m) {
    if (m < 1) throw std::invalid_argument("cumulant: order must be positive");
    if (const auto* g = std::get_if<Gaussian>(&law)) return m == 2 ? g->variance : 0.0;
    const auto& d = std::get<InfinitelyDivisible>(law);
    if (m == 1) return 0.0;
    const double jump = d.kappa_prime * integral_power(d.f, m);
    if (m == 2) return d.sigma * d.sigma + jump;
    return (m % 2 == 0 ? 1.0 : -1.0) * jump;
}

// Exact draws; blocks of 4096 use derived seeds, so the output does not depend
// on the worker count.
inline std::vector<double> sample(const LimitLaw& law, std::size_t count, std::uint64_t seed, unsigned threads = 0) {
    if (count < 1) throw std::invalid_argument("sample: count must be positive");
    std::vector<double> out(count);
    constexpr std::size_t block = 4096;
    const std::size_t nblocks = (count + block - 1) / block;
    double sigma = 0.0, kp = 0.0, comp = 0.0, R = 0.0;
    const TestFunction* f = nullptr;
    if (const auto* g = std::get_if<Gaussian>(&law)) {
        if (g->variance < 0.0) throw std::invalid_argument("sample: negative variance");
        sigma = std::sqrt(g->variance);
    } else {
        const auto& d = std::get<InfinitelyDivisible>(law);
        sigma = d.sigma;
        kp = d.f.is_zero() ? 0.0 : d.kappa_prime;
        f = &d.f;
        R = d.f.support_radius();
        comp = kp * integral_power(d.f, 1);
    }
    parallel_for(
        nblocks,
        [&](std::size_t b) {
            Rng rng = make_rng(derive_seed(seed, 0x11, b));
            std::normal_distribution<double> nd(0.0, 1.0);
            std::poisson_distribution<long> pd(kp > 0.0 ? kp * 2.0 * R : 1.0);
            std::uniform_real_distribution<double> ud(-R, R);
            const std::size_t lo = b * block, hi = std::min(count, lo + block);
            for (std::size_t i = lo; i < hi; ++i) {
                double x = sigma * nd(rng);
                if (kp > 0.0) {
                    const long k = pd(rng);
                    double s = 0.0;
                    for (long j = 0; j < k; ++j) s += (*f)(ud(rng));
                    x += comp - s;
                }
                out[i] = x;
            }
        },
        threads);
    return out;
}

enum class CdfMethod { Auto, Inversion, Sampling };

// CDF with absolute error budget `accuracy` on [-span, span].
class CdfEvaluator {
public:
    static constexpr std::size_t kFallbackSamples = 1000000;

    explicit CdfEvaluator(const LimitLaw& law, double accuracy = 1e-6, double span = 0.0,
                          CdfMethod method = CdfMethod::Auto)
        : law_(law), accuracy_(accuracy) {
        if (!(accuracy > 0.0)) throw std::invalid_argument("cdf: accuracy must be positive");
        if (const auto* g = std::get_if<Gaussian>(&law)) {
            gaussian_sd_ = std::sqrt(std::max(0.0, g->variance));
            kind_ = Kind::Gaussian;
            return;
        }
        const auto& d = std::get<InfinitelyDivisible>(law);
        const double c2 = cumulant(law, 2);
        if (span <= 0.0) span = 12.0 * std::sqrt(c2) + 1.0;
        span_ = span;
        if (c2 == 0.0) {
            kind_ = Kind::Gaussian;
            gaussian_sd_ = 0.0;
            return;
        }
        bool inversion_ok = method != CdfMethod::Sampling && d.sigma > 0.0;
        double T = 0.0;
        if (inversion_ok) {
            // (1/pi) int_T^inf e^{-s^2 t^2/2}/t dt <= e^{-s^2 T^2/2} / (pi s^2 T^2)
            const double s2 = d.sigma * d.sigma;
            T = 1.0 / d.sigma;
            while (std::exp(-0.5 * s2 * T * T) / (pi * s2 * T * T) > 0.25 * accuracy && T < 1e4) T *= 1.05;
            inversion_ok = T < 1e4;
        }
        if (!inversion_ok && method == CdfMethod::Inversion)
            throw std::domain_error("cdf: characteristic function cannot be truncated at this accuracy");
        if (inversion_ok) {
            kind_ = Kind::Inversion;
            const double jump_rate = 2.0 * d.kappa_prime * std::abs(integral_power(d.f, 1)) +
                                     d.kappa_prime * d.f.sup_norm() * 2.0 * d.f.support_radius();
            double width = std::min(0.5, 4.0 / (span + jump_rate + 1.0));
            build_table(T, width);
            // refine until halving the panel width is invisible at the probe points
            for (int it = 0; it < 6; ++it) {
                CdfEvaluator finer(*this);
                finer.build_table(T, 0.5 * width);
                double diff = 0.0;
                for (double x : {-span, -0.5 * span, -1.0, 0.0, 1.0, 0.5 * span, span})
                    diff = std::max(diff, std::abs(finer.inversion(x) - inversion(x)));
                if (diff < 0.25 * accuracy) return;
                *this = std::move(finer);
                width *= 0.5;
            }
            throw std::domain_error("cdf: inversion quadrature did not converge");
        }
        const double dkw = std::sqrt(std::log(2.0 / 1e-3) / (2.0 * static_cast<double>(kFallbackSamples)));
        if (accuracy < dkw) throw std::domain_error("cdf: requested accuracy unattainable by inversion or sampling");
        kind_ = Kind::Sampling;
        samples_ = sample(law, kFallbackSamples, 0x5eedcdfULL);
        std::sort(samples_.begin(), samples_.end());
        accuracy_ = dkw;
    }

    double operator()(double x) const {
        switch (kind_) {
            case Kind::Gaussian:
                if (gaussian_sd_ == 0.0) return x < 0.0 ? 0.0 : 1.0;
                return normal_cdf(x / gaussian_sd_);
            case Kind::Inversion:
                return std::clamp(inversion(x), 0.0, 1.0);
            case Kind::Sampling: {
                const auto it = std::upper_bound(samples_.begin(), samples_.end(), x);
                return static_cast<double>(it - samples_.begin()) / static_cast<double>(samples_.size());
            }
        }
        return 0.0;
    }

    double accuracy() const { return kind_ == Kind::Gaussian ? 1e-15 : accuracy_; }
    bool uses_sampling() const { return kind_ == Kind::Sampling; }
    bool uses_inversion() const { return kind_ == Kind::Inversion; }
    double span() const { return span_; }

private:
    enum class Kind { Gaussian, Inversion, Sampling };

    void build_table(double T, double width) {
        const auto& g = quad::gauss_legendre(24);
        const int panels = static_cast<int>(std::ceil(T / width));
        t_.clear();
        w_.clear();
        phi_.clear();
        for (int p = 0; p < panels; ++p) {
            const double lo = T * p / panels, hi = T * (p + 1) / panels;
            for (std::size_t i = 0; i < g.nodes.size(); ++i) {
                const double t = 0.5 * (lo + hi) + 0.5 * (hi - lo) * g.nodes[i];
                t_.push_back(t);
                w_.push_back(0.5 * (hi - lo) * g.weights[i] / t);
                phi_.push_back(characteristic_function(law_, t));
            }
        }
    }

    // 1/2 - (1/pi) int_0^T Im(e^{-itx} phi(t)) / t dt
    double inversion(double x) const {
        double s = 0.0;
        for (std::size_t i = 0; i < t_.size(); ++i) {
            const double a = t_[i] * x;
            s += w_[i] * (phi_[i].imag() * std::cos(a) - phi_[i].real() * std::sin(a));
        }
        return 0.5 - s / pi;
    }

    LimitLaw law_;
    double accuracy_;
    double span_ = 0.0;
    Kind kind_ = Kind::Gaussian;
    double gaussian_sd_ = 0.0;
    std::vector<double> t_, w_;
    std::vector<cplx> phi_;
    std::vector<double> samples_;
};

// Single evaluation; accuracy below 1e-4 is outside the supported range (use
// CdfEvaluator directly for tighter budgets).
inline double cdf(const LimitLaw& law, double x, double accuracy = 1e-4, CdfMethod method = CdfMethod::Auto) {
    if (!(accuracy >= 1e-4)) throw std::invalid_argument("cdf: accuracy must be at least 1e-4");
    CdfEvaluator ev(law, accuracy, 0.0, method);
    if (std::abs(x) > ev.span()) ev = CdfEvaluator(law, accuracy, std::abs(x) + 1.0, method);
    return ev(x);
}

// Limit of the centered, normalized linear statistic under gamma = 1 - kappa size^{-delta}.
// For the sine process alpha is ignored and the critical exponent is 1.
inline LimitLaw classify_regime(Process process, double alpha, double delta, double kappa, const TestFunction& f) {
    if (!(kappa > 0.0)) throw std::invalid_argument("classify_regime: kappa must be positive");
    if (!(delta > 0.0)) throw std::invalid_argument("classify_regime: delta must be positive");
    double crit = 1.0, weight = kappa / pi;
    if (process == Process::Cue) {
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("classify_regime: alpha must lie in (0,1)");
        if (!(delta < 1.0)) throw std::invalid_argument("classify_regime: delta must lie in (0,1)");
        crit = alpha;
        weight = kappa / (2.0 * pi);
    }
    const double sf2 = sigma_f_squared(f);
    if (std::abs(delta - crit) <= 1e-12) return InfinitelyDivisible{f, weight, std::sqrt(sf2)};
    if (delta > crit) return Gaussian{sf2};
    return Gaussian{weight * l2_norm_squared(f)};
}

// sup_x |F_a(x) - F_b(x)| on a grid over [-span, span].
inline double law_distance(const LimitLaw& a, const LimitLaw& b, double span, std::size_t points = 4001,
                           double accuracy = 1e-6) {
    CdfEvaluator fa(a, accuracy, span), fb(b, accuracy, span);
    double d = 0.0;
    for (std::size_t i = 0; i < points; ++i) {
        const double x = -span + 2.0 * span * static_cast<double>(i) / static_cast<double>(points - 1);
        d = std::max(d, std::abs(fa(x) - fb(x)));
    }
    return d;
}

}  // namespace mesolab
