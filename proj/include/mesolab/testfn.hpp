#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fft.hpp"
#include "quadrature.hpp"

namespace mesolab {

using cplx = std::complex<double>;
inline constexpr double pi = std::numbers::pi;

// |F f(w)| <= constant * |w|^(-power) for |w| >= from.
struct FourierDecay {
    double constant = 0.0;
    double power = 0.0;
    double from = 0.0;
};

// Compactly supported real function with access to its Fourier transform
// F f(w) = (1/2pi) int e^{-ixw} f(x) dx. Immutable; copies share state.
class TestFunction {
public:
    struct Parts {
        std::string name;
        std::vector<double> params;
        std::function<double(double)> eval;
        std::function<cplx(double)> fourier;
        double support_radius = 1.0;
        double smoothness_epsilon = 1.0;
        std::vector<double> breakpoints;  // non-analytic points, including the support ends
        FourierDecay decay;
        double sup_norm = 0.0;
        bool even = false;
    };

    TestFunction() : TestFunction(zero_parts()) {}
    explicit TestFunction(Parts p) : p_(std::make_shared<const Parts>(std::move(p))) {
        if (!(p_->support_radius > 0.0)) throw std::invalid_argument("test function: support radius must be positive");
        if (p_->decay.constant > 0.0 && !(p_->smoothness_epsilon < 2.0 * p_->decay.power - 2.0)) {
            throw std::invalid_argument("test function '" + p_->name +
                                        "': weighted Fourier norm is not finite for the declared epsilon");
        }
        if (p_->smoothness_epsilon < 0.0) throw std::invalid_argument("test function: epsilon must be nonnegative");
    }

    double operator()(double x) const { return std::abs(x) > p_->support_radius ? 0.0 : p_->eval(x); }
    double eval(double x) const { return (*this)(x); }
    cplx fourier(double w) const { return p_->fourier(w); }

    const std::string& name() const { return p_->name; }
    const std::vector<double>& params() const { return p_->params; }
    double support_radius() const { return p_->support_radius; }
    double smoothness_epsilon() const { return p_->smoothness_epsilon; }
    const std::vector<double>& breakpoints() const { return p_->breakpoints; }
    const FourierDecay& decay() const { return p_->decay; }
    double sup_norm() const { return p_->sup_norm; }
    bool is_even() const { return p_->even; }
    bool is_zero() const { return p_->sup_norm == 0.0; }
    const Parts& parts() const { return *p_; }

    // Quadrature rule over the support, split at the breakpoints.
    quad::Rule support_rule(int order = 24, double panels_per_radius = 8.0) const {
        const double R = p_->support_radius;
        std::vector<double> br;
        for (double b : p_->breakpoints)
            if (std::abs(b) < R) br.push_back(b);
        return quad::composite(-R, R, br, R / panels_per_radius, order);
    }

    static Parts zero_parts() {
        Parts p;
        p.name = "zero";
        p.eval = [](double) { return 0.0; };
        p.fourier = [](double) { return cplx(0.0, 0.0); };
        p.even = true;
        return p;
    }

private:
    std::shared_ptr<const Parts> p_;
};

namespace detail {

// sin(pi u) / (pi u)
inline double sinc_pi(double u) {
    const double x = pi * u;
    if (std::abs(x) < 1e-4) return 1.0 - x * x / 6.0;
    return std::sin(x) / x;
}

inline double param_or(const std::vector<double>& p, std::size_t i, double dflt) { return i < p.size() ? p[i] : dflt; }

// Derivatives of exp(1 - 1/(1-u^2)) up to order m at u, |u| < 1.
inline std::vector<double> bump_derivatives(double u, int m) {
    std::vector<double> h(m + 1), g(m + 1);
    const double a = 1.0 - u, b = 1.0 + u;
    g[0] = std::exp(1.0 - 1.0 / (a * b));
    double fact = 1.0;
    for (int j = 1; j <= m; ++j) {
        fact *= j;
        // h = 1 - (1/2)(1/(1-u) + 1/(1+u))
        h[j] = -0.5 * fact * (1.0 / std::pow(a, j + 1) + ((j % 2) ? -1.0 : 1.0) / std::pow(b, j + 1));
    }
    for (int k = 0; k < m; ++k) {
        double s = 0.0, binom = 1.0;
        for (int j = 0; j <= k; ++j) {
            s += binom * h[j + 1] * g[k - j];
            binom = binom * (k - j) / (j + 1);
        }
        g[k + 1] = s;
    }
    return g;
}

inline double bump_derivative_l1(int m) {
    static const double v6 = [] {
        auto r = quad::composite(-1.0, 1.0, {}, 1.0 / 64.0, 32);
        return quad::integrate([](double u) { return std::abs(bump_derivatives(u, 6)[6]); }, r);
    }();
    if (m != 6) throw std::logic_error("bump_derivative_l1: only order 6 is tabulated");
    return v6;
}

// Q_m with F[x^m e^{-x^2}](w) = (sqrt(pi)/2pi) i^m Q_m(w) e^{-w^2/4}.
inline std::vector<std::vector<double>> hermite_q(int mmax) {
    std::vector<std::vector<double>> q(mmax + 1);
    q[0] = {1.0};
    for (int m = 0; m < mmax; ++m) {
        const auto& a = q[m];
        std::vector<double> nxt(a.size() + 1, 0.0);
        for (std::size_t j = 1; j < a.size(); ++j) nxt[j - 1] += j * a[j];
        for (std::size_t j = 0; j < a.size(); ++j) nxt[j + 1] -= 0.5 * a[j];
        q[m + 1] = nxt;
    }
    return q;
}

inline TestFunction::Parts cosine_hat_parts(double A, double R) {
    TestFunction::Parts p;
    p.name = "cosine_hat";
    p.params = {A, R};
    const double c = pi / R;
    p.eval = [A, c](double x) { return A * (1.0 + std::cos(c * x)); };
    p.fourier = [A, c](double w) {
        const double u = w / c;
        return cplx(A / c * (sinc_pi(u) + 0.5 * sinc_pi(u - 1.0) + 0.5 * sinc_pi(u + 1.0)), 0.0);
    };
    p.support_radius = R;
    p.breakpoints = {-R, R};
    p.decay = {std::abs(A) * 4.0 / (3.0 * pi) * c * c, 3.0, 2.0 * c};
    p.sup_norm = 2.0 * std::abs(A);
    p.even = true;
    return p;
}

inline TestFunction::Parts triangle_parts(double A, double R) {
    TestFunction::Parts p;
    p.name = "triangle";
    p.params = {A, R};
    p.eval = [A, R](double x) { return A * std::max(0.0, 1.0 - std::abs(x) / R); };
    p.fourier = [A, R](double w) {
        const double s = sinc_pi(R * w / (2.0 * pi));
        return cplx(A * R / (2.0 * pi) * s * s, 0.0);
    };
    p.support_radius = R;
    p.smoothness_epsilon = 0.5;
    p.breakpoints = {-R, 0.0, R};
    p.decay = {2.0 * std::abs(A) / (pi * R), 2.0, 0.0};
    p.sup_norm = std::abs(A);
    p.even = true;
    return p;
}

inline TestFunction::Parts bump_parts(double A, double R) {
    TestFunction::Parts p;
    p.name = "bump";
    p.params = {A, R};
    p.eval = [A, R](double x) {
        const double u = x / R;
        if (std::abs(u) >= 1.0) return 0.0;
        return A * std::exp(1.0 - 1.0 / (1.0 - u * u));
    };
    auto eval = p.eval;
    p.fourier = [A, R, eval](double w) {
        // even: (1/pi) int_0^R f(x) cos(xw) dx
        const double width = std::min(R / 16.0, 2.0 / (std::abs(w) + 1e-300));
        auto r = quad::composite(0.0, R, {}, width, 24);
        const double v = quad::integrate([&](double x) { return eval(x) * std::cos(x * w); }, r);
        return cplx(v / pi, 0.0);
    };
    p.support_radius = R;
    p.breakpoints = {-R, R};
    p.decay = {std::abs(A) * std::pow(R, -5.0) * bump_derivative_l1(6) / (2.0 * pi), 6.0, 0.0};
    p.sup_norm = std::abs(A);
    p.even = true;
    return p;
}

inline TestFunction::Parts hermite_parts(const std::vector<double>& coeffs) {
    if (coeffs.empty()) throw std::invalid_argument("hermite: needs at least one polynomial coefficient");
    bool nonzero = false;
    for (double c : coeffs) {
        if (!std::isfinite(c)) throw std::invalid_argument("hermite: non-finite coefficient");
        nonzero = nonzero || c != 0.0;
    }
    if (!nonzero) throw std::invalid_argument("hermite: polynomial is identically zero");
    const int deg = static_cast<int>(coeffs.size()) - 1;
    auto poly = [coeffs](double x) {
        double s = 0.0;
        for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) s = s * x + *it;
        return s;
    };
    auto majorant = [coeffs](double x) {
        double s = 0.0;
        for (std::size_t m = 0; m < coeffs.size(); ++m) s += std::abs(coeffs[m]) * std::pow(std::abs(x), m);
        return s * std::exp(-x * x);
    };
    double sup = 0.0;
    for (int i = 0; i <= 200000; ++i) {
        const double x = -12.0 + 24.0 * i / 200000.0;
        sup = std::max(sup, std::abs(poly(x)) * std::exp(-x * x));
    }
    // truncate where the majorant is below 1e-17 of the sup and decreasing
    double R = std::sqrt(0.5 * deg) + 1.0;
    while (majorant(R) > 1e-17 * sup) R += 0.01;

    // total Fourier polynomial: sum_m c_m i^m Q_m, kept as complex coefficients
    const auto q = hermite_q(deg);
    std::vector<cplx> tot(deg + 1, cplx(0.0, 0.0));
    for (int m = 0; m <= deg; ++m) {
        const cplx im = std::pow(cplx(0.0, 1.0), m);
        for (std::size_t j = 0; j < q[m].size(); ++j) tot[j] += coeffs[m] * im * q[m][j];
    }
    const double pref = std::sqrt(pi) / (2.0 * pi);

    TestFunction::Parts p;
    p.name = "hermite";
    p.params = coeffs;
    p.eval = [poly](double x) { return poly(x) * std::exp(-x * x); };
    p.fourier = [tot, pref](double w) {
        cplx s(0.0, 0.0);
        for (auto it = tot.rbegin(); it != tot.rend(); ++it) s = s * w + *it;
        return pref * s * std::exp(-0.25 * w * w);
    };
    p.support_radius = R;
    p.breakpoints = {-R, R};
    double amax = 0.0;
    for (const auto& c : tot) amax = std::max(amax, std::abs(c));
    const double from = std::sqrt(2.0 * (6 + deg)) + 1.0;
    double bound = 0.0;
    for (int j = 0; j <= deg; ++j) bound += std::abs(tot[j]) * std::pow(from, j + 6);
    p.decay = {pref * bound * std::exp(-0.25 * from * from), 6.0, from};
    p.sup_norm = sup;
    bool even = true;
    for (std::size_t m = 1; m < coeffs.size(); m += 2) even = even && coeffs[m] == 0.0;
    p.even = even;
    return p;
}

}  // namespace detail

// x -> f(c x), c > 0.
inline TestFunction dilate(const TestFunction& f, double c) {
    if (!(c > 0.0)) throw std::invalid_argument("dilate: factor must be positive");
    TestFunction::Parts p = f.parts();
    auto ev = p.eval;
    auto fo = p.fourier;
    p.eval = [ev, c](double x) { return ev(c * x); };
    p.fourier = [fo, c](double w) { return fo(w / c) / c; };
    p.support_radius /= c;
    for (auto& b : p.breakpoints) b /= c;
    p.decay.constant *= std::pow(c, p.decay.power - 1.0);
    p.decay.from *= c;
    p.name = f.name();
    p.params.push_back(c);
    return TestFunction(std::move(p));
}

// Registered families:
//   zero []
//   cosine_hat [A=1, R=pi]   A (1 + cos(pi x / R)) on |x| <= R
//   triangle   [A=1, R=pi]   A max(0, 1 - |x|/R)
//   bump       [A=1, R=pi]   A exp(1 - 1/(1 - (x/R)^2))
//   hermite    [c0, c1, ...] (sum c_m x^m) e^{-x^2}, cut where negligible
inline TestFunction make_builtin(const std::string& name, const std::vector<double>& params = {},
                                 std::optional<double> epsilon = std::nullopt) {
    for (double v : params)
        if (!std::isfinite(v)) throw std::invalid_argument("make_builtin: non-finite parameter");
    auto check_shape = [&](std::size_t max_params) {
        if (params.size() > max_params) throw std::invalid_argument("make_builtin: too many parameters for " + name);
        const double R = detail::param_or(params, 1, pi);
        if (!(R > 0.0)) throw std::invalid_argument("make_builtin: support radius must be positive");
    };
    TestFunction::Parts p;
    if (name == "zero") {
        if (!params.empty()) throw std::invalid_argument("make_builtin: zero takes no parameters");
        p = TestFunction::zero_parts();
    } else if (name == "cosine_hat") {
        check_shape(2);
        p = detail::cosine_hat_parts(detail::param_or(params, 0, 1.0), detail::param_or(params, 1, pi));
    } else if (name == "triangle") {
        check_shape(2);
        p = detail::triangle_parts(detail::param_or(params, 0, 1.0), detail::param_or(params, 1, pi));
    } else if (name == "bump") {
        check_shape(2);
        p = detail::bump_parts(detail::param_or(params, 0, 1.0), detail::param_or(params, 1, pi));
    } else if (name == "hermite") {
        p = detail::hermite_parts(params.empty() ? std::vector<double>{1.0} : params);
    } else {
        throw std::invalid_argument("make_builtin: unknown function family '" + name + "'");
    }
    if (epsilon) p.smoothness_epsilon = *epsilon;
    if (p.name != "zero" && p.sup_norm == 0.0) {
        p = TestFunction::zero_parts();
        p.name = name;
    }
    return TestFunction(std::move(p));
}

// int g(f(x), x) dx over the support.
template <class G>
double integrate_support(const TestFunction& f, G&& g, int order = 24) {
    if (f.is_zero()) return 0.0;
    const auto r = f.support_rule(order);
    double s = 0.0;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * g(f(r.nodes[i]), r.nodes[i]);
    return s;
}

inline double integral_power(const TestFunction& f, int m) {
    return integrate_support(f, [m](double v, double) { return std::pow(v, m); });
}

inline double l2_norm_squared(const TestFunction& f) { return integral_power(f, 2); }

// hat h(k) of h(theta) = f(theta n^{1-alpha}) on the circle.
inline cplx fourier_coefficient(const TestFunction& f, std::size_t n, double alpha, long k) {
    if (n < 1) throw std::invalid_argument("fourier_coefficient: n must be positive");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("fourier_coefficient: alpha must lie in (0,1]");
    const double scale = std::pow(static_cast<double>(n), alpha - 1.0);
    return scale * f.fourier(static_cast<double>(k) * scale);
}

// The dilated function must fit in [-pi, pi] for the circle identities to hold.
inline void require_fits_circle(const TestFunction& f, std::size_t n, double alpha) {
    const double r = f.support_radius() * std::pow(static_cast<double>(n), alpha - 1.0);
    if (r > pi * (1.0 + 1e-12) && !f.is_zero())
        throw std::invalid_argument("dilated support exceeds the circle: radius " + std::to_string(r));
}

struct DilatedFourierTable {
    std::size_t n = 0;
    double alpha = 1.0;
    std::size_t truncation_N = 0;
    std::vector<cplx> coefficients;  // k = 0..N

    cplx operator()(long k) const {
        const auto idx = static_cast<std::size_t>(std::abs(k));
        if (idx >= coefficients.size()) throw std::out_of_range("DilatedFourierTable: |k| beyond truncation");
        return k >= 0 ? coefficients[idx] : std::conj(coefficients[idx]);
    }
};

inline DilatedFourierTable dilated_fourier_table(const TestFunction& f, std::size_t n, double alpha, std::size_t N) {
    DilatedFourierTable t{n, alpha, N, {}};
    t.coefficients.resize(N + 1);
    for (std::size_t k = 0; k <= N; ++k) t.coefficients[k] = fourier_coefficient(f, n, alpha, static_cast<long>(k));
    return t;
}

// Trigonometric polynomial values on the angles 2 pi m / M.
struct SymbolSamples {
    std::size_t N = 0;
    std::vector<double> values;

    std::size_t grid_size() const { return values.size(); }
    double angle(std::size_t m) const { return 2.0 * pi * static_cast<double>(m) / static_cast<double>(values.size()); }
};

// Angle 2 pi m / M mapped to [-pi, pi).
inline double grid_angle(std::size_t m, std::size_t M) {
    double t = 2.0 * pi * static_cast<double>(m) / static_cast<double>(M);
    return t >= pi ? t - 2.0 * pi : t;
}

// f_{alpha,N} = sum_{|k|<=N} hat h(k) e^{ik theta} on a grid of M angles.
inline SymbolSamples truncate(const TestFunction& f, std::size_t n, double alpha, std::size_t N, std::size_t M = 0) {
    if (M == 0) M = fft::next_pow2(std::max<std::size_t>(4 * N + 4, 64));
    if (M < 2 * N + 1) throw std::invalid_argument("truncate: grid has fewer than 2N+1 points");
    fft::cvec c(M, cplx(0.0, 0.0));
    const auto tab = dilated_fourier_table(f, n, alpha, N);
    for (std::size_t k = 0; k <= N; ++k) {
        c[k] += tab.coefficients[k];
        if (k > 0) c[M - k] += std::conj(tab.coefficients[k]);
    }
    fft::transform(c, +1);
    SymbolSamples s{N, std::vector<double>(M)};
    for (std::size_t m = 0; m < M; ++m) s.values[m] = c[m].real();
    return s;
}

// Projection of grid samples onto frequencies |k| <= N.
inline SymbolSamples truncate_samples(const std::vector<double>& values, std::size_t N) {
    const std::size_t M = values.size();
    if (M < 2 * N + 1) throw std::invalid_argument("truncate_samples: grid has fewer than 2N+1 points");
    auto c = fft::coefficients(values);
    for (std::size_t k = N + 1; k + N < M; ++k) c[k] = 0.0;
    fft::transform(c, +1);
    SymbolSamples s{N, std::vector<double>(M)};
    for (std::size_t m = 0; m < M; ++m) s.values[m] = c[m].real();
    return s;
}

// Geometric midpoint of n^{1-alpha} << N << n^{min(1, 3(1-alpha)/2)}; with delta,
// also kept below the midpoint of n^{1-alpha} << N << n^{1-alpha+4 delta}.
inline std::size_t choose_N(std::size_t n, double alpha, std::optional<double> delta = std::nullopt) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("choose_N: alpha must lie in (0,1)");
    const double ln = std::log(static_cast<double>(n));
    double e = 0.5 * ((1.0 - alpha) + std::min(1.0, 1.5 * (1.0 - alpha)));
    if (delta) e = std::min(e, 0.5 * ((1.0 - alpha) + (1.0 - alpha + 4.0 * *delta)));
    const double N = std::round(std::exp(e * ln));
    return static_cast<std::size_t>(std::max(1.0, N));
}

namespace detail {

// 2 int_0^Omega w^a |F f(w)|^2 (1+w)^b dw with Omega chosen so that the analytic
// tail 2 int_Omega^inf w^a (1+w)^b C^2 w^{-2p} dw <= rel_tol * value.
struct TailIntegral {
    double value = 0.0;
    double tail_bound = 0.0;
    double cutoff = 0.0;
};

inline TailIntegral fourier_moment(const TestFunction& f, double a, double b, double rel_tol) {
    if (f.is_zero()) return {};
    const auto& d = f.decay();
    const double e = 2.0 * d.power - a - b;  // tail integrand ~ w^{-e}
    if (!(e > 1.0)) throw std::domain_error("Fourier tail not certifiable: declared decay too slow");
    const double panel = 0.5 * std::min(1.0, pi / f.support_radius());
    auto integrand = [&](double w) { return std::pow(w, a) * std::pow(1.0 + w, b) * std::norm(f.fourier(w)); };
    auto tail = [&](double W) {
        // (1+w)^b <= (2w)^b for w >= 1, b >= 0
        const double c = (b > 0.0 ? std::pow(2.0, b) : 1.0) * d.constant * d.constant;
        return 2.0 * c * std::pow(W, 1.0 - e) / (e - 1.0);
    };
    const auto& g = quad::gauss_legendre(16);
    double acc = 0.0, W = 0.0;
    double chunk = 8.0;
    for (int iter = 0; iter < 200; ++iter) {
        const double hi = W + chunk;
        quad::Rule r;
        const int panels = static_cast<int>(std::ceil(chunk / panel));
        for (int p = 0; p < panels; ++p) quad::append_mapped(g, W + p * chunk / panels, W + (p + 1) * chunk / panels, r);
        acc += 2.0 * quad::integrate(integrand, r);
        W = hi;
        if (W >= std::max(1.0, d.from) && tail(W) <= rel_tol * std::abs(acc)) return {acc, tail(W), W};
        if (W > 1e7) break;
        chunk = std::min(W, 4096.0);
    }
    throw std::domain_error("Fourier tail not certifiable within the cutoff limit");
}

}  // namespace detail

// int |w| |F f(w)|^2 dw
inline double sigma_f_squared(const TestFunction& f) { return detail::fourier_moment(f, 1.0, 0.0, 1e-10).value; }

// int |F f|^2 (1+|w|)^{1+eps} dw, with the certified tail bound.
inline std::pair<double, double> weighted_fourier_norm(const TestFunction& f) {
    auto r = detail::fourier_moment(f, 0.0, 1.0 + f.smoothness_epsilon(), 1e-8);
    return {r.value, r.tail_bound};
}

}  // namespace mesolab
