#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fft.hpp"
#include "limitlaw.hpp"
#include "quadrature.hpp"
#include "sampler.hpp"
#include "statistics.hpp"
#include "testfn.hpp"

namespace mesolab {

struct LogDet {
    double real = 0.0;   // log |det|
    double phase = 0.0;  // arg det in (-pi, pi]
};

// log det of the Hermitian Toeplitz matrix T_{jk} = c_{j-k}, c_{-k} = conj c_k,
// by the Levinson-Durbin recursion. Requires T positive definite.
inline LogDet toeplitz_logdet_levinson(const std::vector<cplx>& c, std::size_t n) {
    if (n == 0) return {};
    if (c.size() < n) throw std::invalid_argument("toeplitz: not enough coefficients");
    std::vector<cplx> a(n + 1, cplx(0.0, 0.0));
    a[0] = 1.0;
    double E = c[0].real();
    if (!(E > 0.0)) throw std::domain_error("toeplitz: matrix not positive definite");
    double logdet = std::log(E);
    for (std::size_t m = 0; m + 1 < n; ++m) {
        cplx delta(0.0, 0.0);
        for (std::size_t k = 0; k <= m; ++k) delta += c[m + 1 - k] * a[k];
        const cplx kk = delta / E;
        // a_i <- a_i - kk conj(a_{m+1-i}), updated in symmetric pairs
        for (std::size_t i = 0, j = m + 1; i <= j; ++i, --j) {
            const cplx ai = a[i], aj = a[j];
            a[i] = ai - kk * std::conj(aj);
            if (i != j) a[j] = aj - kk * std::conj(ai);
            if (j == 0) break;
        }
        E -= std::norm(delta) / E;
        if (!(E > 0.0)) throw std::domain_error("toeplitz: matrix not positive definite");
        logdet += std::log(E);
    }
    return {logdet, 0.0};
}

// log det by partial-pivoting LU of T_{jk} = col_{j-k} (j >= k), row_{k-j} (k > j).
inline LogDet toeplitz_logdet_lu(const std::vector<cplx>& col, const std::vector<cplx>& row, std::size_t n) {
    if (n == 0) return {};
    Eigen::MatrixXcd T(n, n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) T(j, k) = j >= k ? col[j - k] : row[k - j];
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(T);
    const auto& U = lu.matrixLU();
    LogDet r;
    double ph = lu.permutationP().determinant() < 0 ? pi : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const cplx u = U(i, i);
        if (u == cplx(0.0, 0.0)) throw std::domain_error("toeplitz: singular matrix");
        r.real += std::log(std::abs(u));
        ph += std::arg(u);
    }
    r.phase = std::remainder(ph, 2.0 * pi);
    return r;
}

enum class ToeplitzMethod { Levinson, LU };

struct SymbolOptions {
    std::size_t grid_size = 0;     // 0: automatic
    std::size_t truncation_N = 0;  // 0: untruncated f_alpha
    double max_exponent = 1.0;     // bound on |lambda| n^{-s} sup|f|
};

// phi = 1 + gamma (e^{lambda n^{-s} f_alpha} - 1) on the angles 2 pi m / M.
struct SymbolGrid {
    std::size_t n = 0;
    double alpha = 1.0, gamma = 1.0, s = 0.0, lambda = 0.0;
    std::size_t truncation_N = 0;
    std::vector<double> values;
    fft::cvec fourier;  // index k mod M

    std::size_t grid_size() const { return values.size(); }
    cplx coefficient(long k) const { return fft::coefficient_at(fourier, k); }
};

inline std::size_t default_symbol_grid(std::size_t n) {
    return std::min<std::size_t>(std::size_t{1} << 22, std::max<std::size_t>(std::size_t{1} << 16, fft::next_pow2(256 * n)));
}

inline void check_smallness(const TestFunction& f, std::size_t n, double s, double lambda, double max_exponent) {
    const double e = std::abs(lambda) * std::pow(static_cast<double>(n), -s) * f.sup_norm();
    if (e > max_exponent * (1.0 + 1e-12))
        throw std::domain_error("lambda outside the smallness region: |lambda| n^{-s} sup|f| = " + std::to_string(e));
}

inline SymbolGrid make_symbol_grid(const TestFunction& f, std::size_t n, double alpha, double gamma, double s,
                                   double lambda, const SymbolOptions& opt = {}) {
    if (n < 1) throw std::invalid_argument("symbol: n must be positive");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("symbol: gamma must lie in [0,1]");
    require_fits_circle(f, n, alpha);
    check_smallness(f, n, s, lambda, opt.max_exponent);
    SymbolGrid g{n, alpha, gamma, s, lambda, opt.truncation_N, {}, {}};
    std::size_t M = opt.grid_size ? opt.grid_size : default_symbol_grid(n);
    if (opt.truncation_N > 0) M = std::max(M, fft::next_pow2(4 * opt.truncation_N + 4));
    const double lam = lambda * std::pow(static_cast<double>(n), -s);
    std::vector<double> fv(M);
    if (opt.truncation_N > 0) {
        fv = truncate(f, n, alpha, opt.truncation_N, M).values;
    } else {
        const double sc = std::pow(static_cast<double>(n), 1.0 - alpha);
        for (std::size_t m = 0; m < M; ++m) fv[m] = f(grid_angle(m, M) * sc);
    }
    g.values.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        const double v = 1.0 + gamma * std::expm1(lam * fv[m]);
        if (!(v > 0.0) || !std::isfinite(v)) throw std::domain_error("symbol vanishes on the grid (nonzero winding)");
        g.values[m] = v;
    }
    g.fourier = fft::coefficients(g.values);
    return g;
}

struct CueCgfOptions {
    ToeplitzMethod method = ToeplitzMethod::Levinson;
    std::size_t grid_size = 0;
    double max_exponent = 1.0;
};

inline LogDet cue_logdet(const SymbolGrid& g, ToeplitzMethod method) {
    const std::size_t n = g.n;
    std::vector<cplx> col(n), row(n);
    for (std::size_t k = 0; k < n; ++k) {
        col[k] = g.coefficient(static_cast<long>(k));
        row[k] = g.coefficient(-static_cast<long>(k));
    }
    if (method == ToeplitzMethod::Levinson) return toeplitz_logdet_levinson(col, n);
    return toeplitz_logdet_lu(col, row, n);
}

// log E exp(lambda n^{-s} X) for the thinned CUE, as log D_n(phi).
inline double cue_cgf_exact(const TestFunction& f, std::size_t n, double alpha, double gamma, double s, double lambda,
                            const CueCgfOptions& opt = {}) {
    if (lambda == 0.0 || f.is_zero() || gamma == 0.0) {
        make_symbol_grid(f, n, alpha, gamma, s, 0.0, {64, 0, opt.max_exponent});
        return 0.0;
    }
    const auto g = make_symbol_grid(f, n, alpha, gamma, s, lambda, {opt.grid_size, 0, opt.max_exponent});
    const auto r = cue_logdet(g, opt.method);
    if (std::abs(r.phase) > 1e-10) throw std::runtime_error("cue_cgf_exact: determinant is not positive");
    return r.real;
}

struct SzegoOptions {
    std::size_t truncation_N = 0;  // 0: choose_N(n, alpha)
    bool truncate_symbol = true;
    std::size_t grid_size = 0;  // 0: max(4096, 8 N) truncated, default symbol grid otherwise
    double max_exponent = 1.0;
};

// n ghat(0) + sum_{k=1}^{K_sum} k ghat(k) ghat(-k), g = log phi.
inline double cue_cgf_szego(const TestFunction& f, std::size_t n, double alpha, double gamma, double s, double lambda,
                            std::size_t K_sum = 0, const SzegoOptions& opt = {}) {
    if (lambda == 0.0 || f.is_zero() || gamma == 0.0) return 0.0;
    SymbolOptions so;
    so.max_exponent = opt.max_exponent;
    if (opt.truncate_symbol && alpha < 1.0) {
        so.truncation_N = opt.truncation_N ? opt.truncation_N : choose_N(n, alpha);
        so.grid_size = opt.grid_size ? opt.grid_size : std::max<std::size_t>(4096, fft::next_pow2(8 * so.truncation_N));
    } else {
        so.grid_size = opt.grid_size;
    }
    const auto g = make_symbol_grid(f, n, alpha, gamma, s, lambda, so);
    std::vector<double> lg(g.values.size());
    for (std::size_t m = 0; m < lg.size(); ++m) lg[m] = std::log(g.values[m]);
    const auto c = fft::coefficients(lg);
    const std::size_t M = lg.size();
    if (K_sum == 0) K_sum = M / 2 - 1;
    if (K_sum >= M / 2) throw std::invalid_argument("cue_cgf_szego: K_sum beyond the grid Nyquist index");
    double v = static_cast<double>(n) * c[0].real();
    for (std::size_t k = 1; k <= K_sum; ++k) v += static_cast<double>(k) * (c[k] * c[M - k]).real();
    return v;
}

struct CueRegime {
    double alpha = 0.5;
    double delta = 0.5;
    double kappa = 1.0;
};

inline double limit_cgf_cue(const TestFunction& f, const CueRegime& r, double lambda) {
    if (lambda == 0.0) return 0.0;
    return cgf(classify_regime(Process::Cue, r.alpha, r.delta, r.kappa, f), lambda);
}

// log E exp(lambda n^{-s}(X - E X)) at gamma_n = 1 - kappa n^{-delta}.
inline double centered_cue_cgf(const TestFunction& f, std::size_t n, const CueRegime& r, double lambda,
                               const CueCgfOptions& opt = {}) {
    const auto spec = cue_spec(f, r.alpha, GammaRule::decaying(r.kappa, r.delta));
    const double gamma = spec.gamma_rule.gamma_at(static_cast<double>(n));
    const double s = spec.normalization_s();
    const double raw = cue_cgf_exact(f, n, r.alpha, gamma, s, lambda, opt);
    return raw - lambda * std::pow(static_cast<double>(n), -s) * exact_mean_cue(spec, n);
}

struct SineCgf {
    double value = 0.0;
    double error_estimate = 0.0;
    int order = 0;
};

// Nystrom nodes on supp f_L, split at the scaled breakpoints.
inline quad::Rule sine_nodes(const TestFunction& f, double L, int order) {
    const double R = f.support_radius() * L;
    std::vector<double> br;
    for (double b : f.breakpoints())
        if (std::abs(b) < f.support_radius()) br.push_back(b * L);
    br.push_back(-R);
    br.push_back(R);
    std::sort(br.begin(), br.end());
    br.erase(std::unique(br.begin(), br.end()), br.end());
    quad::Rule r;
    for (std::size_t i = 0; i + 1 < br.size(); ++i) {
        const double len = br[i + 1] - br[i];
        const int m = std::max(16, static_cast<int>(std::ceil(order * len / (2.0 * R))));
        quad::append_mapped(quad::gauss_legendre(m), br[i], br[i + 1], r);
    }
    return r;
}

// M_ij = sqrt(w_i) (e^{lambda L^{-s} f(x_i/L)} - 1) gamma K(x_i,x_j) sqrt(w_j)
inline Eigen::MatrixXd sine_nystrom_matrix(const TestFunction& f, double L, double gamma, double s, double lambda,
                                           int order) {
    const auto r = sine_nodes(f, L, order);
    const std::size_t m = r.nodes.size();
    const double lam = lambda * std::pow(L, -s);
    std::vector<double> sw(m), ph(m);
    for (std::size_t i = 0; i < m; ++i) {
        sw[i] = std::sqrt(r.weights[i]);
        ph[i] = std::expm1(lam * f(r.nodes[i] / L));
    }
    Eigen::MatrixXd M(m, m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) M(i, j) = sw[i] * ph[i] * gamma * sine_kernel(r.nodes[i], r.nodes[j]) * sw[j];
    return M;
}

inline double logdet_identity_plus(const Eigen::MatrixXd& M) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(M.rows(), M.cols()) + M;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    const auto& U = lu.matrixLU();
    double s = 0.0;
    int sign = lu.permutationP().determinant() < 0 ? -1 : 1;
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
        if (U(i, i) == 0.0) throw std::domain_error("fredholm: singular matrix");
        if (U(i, i) < 0.0) sign = -sign;
        s += std::log(std::abs(U(i, i)));
    }
    if (sign < 0) throw std::domain_error("fredholm: determinant is negative");
    return s;
}

inline int default_fredholm_order(const TestFunction& f, double L) {
    return default_sine_order(2.0 * f.support_radius() * L);
}

// log det(I + (e^{lambda L^{-s} f_L} - 1) gamma K_sine), evaluated at order and
// 2 order; the finer value is returned with the difference as error estimate.
inline SineCgf sine_cgf_exact(const TestFunction& f, double L, double gamma, double s, double lambda, int order = 0) {
    if (!(L > 0.0)) throw std::invalid_argument("sine_cgf_exact: L must be positive");
    if (lambda == 0.0 || f.is_zero() || gamma == 0.0) return {0.0, 0.0, order};
    if (order <= 0) order = default_fredholm_order(f, L);
    const double coarse = logdet_identity_plus(sine_nystrom_matrix(f, L, gamma, s, lambda, order));
    const double fine = logdet_identity_plus(sine_nystrom_matrix(f, L, gamma, s, lambda, 2 * order));
    const double err = std::abs(fine - coarse);
    if (!std::isfinite(fine)) throw std::domain_error("sine_cgf_exact: non-convergent quadrature");
    return {fine, err, 2 * order};
}

// Single-order evaluation, for finite differences at a fixed discretization.
inline double sine_cgf_at_order(const TestFunction& f, double L, double gamma, double s, double lambda, int order) {
    if (lambda == 0.0 || f.is_zero() || gamma == 0.0) return 0.0;
    return logdet_identity_plus(sine_nystrom_matrix(f, L, gamma, s, lambda, order));
}

// (L/pi) int log phi_1 + int_0^inf xi |F(log phi_1)(xi)|^2 dxi,
// phi_1 = 1 - gamma (1 - e^{lambda L^{-s} f}).
inline double sine_cgf_asymptotic(const TestFunction& f, double L, double gamma, double s, double lambda) {
    if (lambda == 0.0 || f.is_zero() || gamma == 0.0) return 0.0;
    const double lam = lambda * std::pow(L, -s);
    auto g = [&](double v) { return std::log1p(gamma * std::expm1(lam * v)); };
    const double first = L / pi * integrate_support(f, [&](double v, double) { return g(v); });

    // F(log phi_1) on xi_k = k Delta from a trapezoid FFT over a padded grid
    const double R = f.support_radius();
    const std::size_t M = std::size_t{1} << 18;
    const double span = 16.0 * R;  // padding factor 8
    const double h = span / static_cast<double>(M);
    fft::cvec buf(M, cplx(0.0, 0.0));
    for (std::size_t m = 0; m < M; ++m) {
        const double x = m < M / 2 ? static_cast<double>(m) * h : (static_cast<double>(m) - static_cast<double>(M)) * h;
        buf[m] = g(f(x));
    }
    fft::transform(buf, -1);
    const double delta = 2.0 * pi / span;
    double sum = 0.0;
    for (std::size_t k = 1; k < M / 2; ++k) {
        const double xi = static_cast<double>(k) * delta;
        sum += xi * std::norm(buf[k] * (h / (2.0 * pi)));
    }
    // Euler-Maclaurin corrections at xi = 0 for F(xi) = xi |G(xi)|^2:
    // F'(0) = |G(0)|^2, F'''(0) = 3 (|G|^2)''(0)
    const double G0 = integrate_support(f, [&](double v, double) { return g(v); }) / (2.0 * pi);
    const double G1 = -integrate_support(f, [&](double v, double x) { return x * g(v); }) / (2.0 * pi);  // Im G'(0)
    const double G2 = -integrate_support(f, [&](double v, double x) { return x * x * g(v); }) / (2.0 * pi);
    const double d2 = 2.0 * G2 * G0 + 2.0 * G1 * G1;
    const double second = delta * sum + delta * delta / 12.0 * G0 * G0 - std::pow(delta, 4) / 720.0 * 3.0 * d2;
    return first + second;
}

struct SineRegime {
    double delta = 1.0;
    double kappa = 1.0;
};

inline double limit_cgf_sine(const TestFunction& f, const SineRegime& r, double lambda) {
    if (lambda == 0.0) return 0.0;
    return cgf(classify_regime(Process::Sine, 1.0, r.delta, r.kappa, f), lambda);
}

inline double sine_normalization_s(double delta) { return std::max(0.0, 0.5 * (1.0 - delta)); }

// Centered exact sine CGF at gamma_L = 1 - kappa L^{-delta}.
inline SineCgf centered_sine_cgf(const TestFunction& f, double L, const SineRegime& r, double lambda, int order = 0) {
    const double gamma = GammaRule::decaying(r.kappa, r.delta).gamma_at(L);
    const double s = sine_normalization_s(r.delta);
    auto v = sine_cgf_exact(f, L, gamma, s, lambda, order);
    v.value -= lambda * std::pow(L, -s) * gamma * L / pi * integral_power(f, 1);
    return v;
}

}  // namespace mesolab
