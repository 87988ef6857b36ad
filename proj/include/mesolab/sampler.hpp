#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "parallel.hpp"
#include "quadrature.hpp"
#include "testfn.hpp"

namespace mesolab {

enum class ProcessKind : std::uint8_t { Cue = 0, Sine = 1 };

struct SpectrumSample {
    ProcessKind kind = ProcessKind::Cue;
    std::vector<double> points;  // sorted, strictly increasing
    std::size_t n = 0;           // matrix size (CUE)
    double window_lo = -pi;      // observed arc (CUE) or window (sine)
    double window_hi = pi;
    std::uint64_t seed = 0;
    std::optional<double> thinned_gamma;

    bool full_circle() const { return kind == ProcessKind::Cue && window_lo <= -pi && window_hi >= pi; }
};

enum class CueMethod { Auto, Ginibre, Verblunsky };

inline constexpr std::size_t kVerblunskyThreshold = 2048;

namespace detail {

inline double wrap_angle(double t) {
    t = std::fmod(t + pi, 2.0 * pi);
    if (t < 0.0) t += 2.0 * pi;
    double r = t - pi;
    if (r >= pi) r -= 2.0 * pi;
    return r;
}

inline std::vector<double> ginibre_angles(std::size_t n, Rng& rng) {
    std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
    Eigen::MatrixXcd Z(n, n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            const double re = nd(rng);
            Z(i, j) = cplx(re, nd(rng));
        }
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(Z);
    Eigen::MatrixXcd Q = qr.householderQ();
    const auto& R = qr.matrixQR();
    for (std::size_t j = 0; j < n; ++j) {
        const cplx r = R(j, j);
        const double a = std::abs(r);
        if (a == 0.0) throw std::runtime_error("ginibre: singular draw");
        Q.col(j) *= r / a;
    }
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(Q, false);
    if (es.info() != Eigen::Success) throw std::runtime_error("sample_cue: eigen-solver did not converge");
    std::vector<double> ang(n);
    for (std::size_t i = 0; i < n; ++i) ang[i] = wrap_angle(std::arg(es.eigenvalues()[i]));
    std::sort(ang.begin(), ang.end());
    return ang;
}

}  // namespace detail

// Haar unitary spectrum through Verblunsky coefficients. The eigenangles are
// the solutions of psi(theta) = tau + 2 pi j, where psi is the Pruefer phase of
// the Szego recursion: psi_0 = theta,
//   psi_{k+1} = psi_k + theta - 2 arg(1 - a_k e^{i psi_k}),
// and tau = arg(conj a_{n-1}). psi is increasing and gains 2 pi n per turn.
class VerblunskyPhase {
public:
    VerblunskyPhase(std::size_t n, Rng& rng) : n_(n) {
        if (n == 0) throw std::invalid_argument("VerblunskyPhase: n must be positive");
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        are_.resize(n - 1);
        aim_.resize(n - 1);
        for (std::size_t k = 0; k + 1 < n; ++k) {
            // |a_k|^2 ~ Beta(1, n-k-1)
            const double v = u01(rng);
            const double r2 = -std::expm1(std::log1p(-v) / static_cast<double>(n - k - 1));
            const double r = std::sqrt(r2);
            const double ph = 2.0 * pi * u01(rng);
            are_[k] = r * std::cos(ph);
            aim_[k] = r * std::sin(ph);
        }
        const double last = 2.0 * pi * u01(rng);
        tau_ = -last;  // arg of conj(e^{i last})
        // blocks over which the accumulated argument stays inside (-pi, pi)
        double s = 0.0;
        for (std::size_t k = 0; k + 1 < n; ++k) {
            const double b = std::asin(std::min(1.0, std::hypot(are_[k], aim_[k])));
            if (s + b > 0.45 * pi && k > (blocks_.empty() ? 0 : blocks_.back())) {
                blocks_.push_back(k);
                s = 0.0;
            }
            s += b;
        }
        blocks_.push_back(n - 1);
    }

    std::size_t size() const { return n_; }

    // psi_{n-1}(theta) and its derivative for a batch of angles.
    void evaluate(const double* theta, double* psi, double* dpsi, std::size_t count) const {
        constexpr std::size_t B = 64;
        double zr[B], zi[B], ur[B], ui[B], pr[B], pim[B], acc[B], d[B];
        for (std::size_t off = 0; off < count; off += B) {
            const std::size_t m = std::min(B, count - off);
            for (std::size_t i = 0; i < m; ++i) {
                zr[i] = std::cos(theta[off + i]);
                zi[i] = std::sin(theta[off + i]);
                ur[i] = zr[i];
                ui[i] = zi[i];
                pr[i] = 1.0;
                pim[i] = 0.0;
                acc[i] = 0.0;
                d[i] = 1.0;
            }
            std::size_t k = 0;
            for (std::size_t end : blocks_) {
                for (; k < end; ++k) {
                    const double ar = are_[k], ai = aim_[k];
                    for (std::size_t i = 0; i < m; ++i) {
                        const double wr = ar * ur[i] - ai * ui[i];
                        const double wi = ar * ui[i] + ai * ur[i];
                        const double dr = 1.0 - wr, di = -wi;
                        const double inv = 1.0 / (dr * dr + di * di);
                        const double re = (wr * dr + wi * di) * inv;  // Re(w / (1-w))
                        d[i] = d[i] * (1.0 + 2.0 * re) + 1.0;
                        // u <- u z conj(den)^2 / |den|^2
                        const double cr = (dr * dr - di * di) * inv, ci = -2.0 * dr * di * inv;
                        const double tr = ur[i] * zr[i] - ui[i] * zi[i];
                        const double ti = ur[i] * zi[i] + ui[i] * zr[i];
                        ur[i] = tr * cr - ti * ci;
                        ui[i] = tr * ci + ti * cr;
                        const double npr = pr[i] * dr - pim[i] * di;
                        pim[i] = pr[i] * di + pim[i] * dr;
                        pr[i] = npr;
                    }
                }
                for (std::size_t i = 0; i < m; ++i) {
                    acc[i] += std::atan2(pim[i], pr[i]);
                    pr[i] = 1.0;
                    pim[i] = 0.0;
                    const double nu = 1.0 / std::hypot(ur[i], ui[i]);
                    ur[i] *= nu;
                    ui[i] *= nu;
                }
            }
            for (std::size_t i = 0; i < m; ++i) {
                psi[off + i] = static_cast<double>(n_) * theta[off + i] - 2.0 * acc[i];
                dpsi[off + i] = d[i];
            }
        }
    }

    double psi(double theta) const {
        double p, dp;
        evaluate(&theta, &p, &dp, 1);
        return p;
    }

    // Eigenangles in [a, b), -pi <= a < b <= pi, sorted.
    std::vector<double> roots_in(double a, double b) const {
        if (!(a < b)) return {};
        const std::size_t G = static_cast<std::size_t>(std::ceil(n_ * (b - a) / (2.0 * pi))) + 8;
        std::vector<double> gx(G + 1), gp(G + 1), gd(G + 1);
        for (std::size_t i = 0; i <= G; ++i) gx[i] = (i == G) ? b : a + (b - a) * static_cast<double>(i) / G;
        evaluate(gx.data(), gp.data(), gd.data(), G + 1);
        const double two_pi = 2.0 * pi;
        const long j0 = static_cast<long>(std::ceil((gp[0] - tau_) / two_pi));
        std::vector<double> targets;
        for (long j = j0;; ++j) {
            const double t = tau_ + two_pi * static_cast<double>(j);
            if (t < gp[0]) continue;
            if (t >= gp[G]) break;
            targets.push_back(t);
        }
        const std::size_t c = targets.size();
        std::vector<double> lo(c), hi(c), x(c), fx(c), dx(c);
        for (std::size_t r = 0; r < c; ++r) {
            const auto it = std::upper_bound(gp.begin(), gp.end(), targets[r]);
            std::size_t i = static_cast<std::size_t>(it - gp.begin());
            i = std::clamp<std::size_t>(i, 1, G) - 1;
            lo[r] = gx[i];
            hi[r] = gx[i + 1];
            const double span = gp[i + 1] - gp[i];
            x[r] = span > 0.0 ? gx[i] + (targets[r] - gp[i]) / span * (gx[i + 1] - gx[i]) : 0.5 * (lo[r] + hi[r]);
        }
        std::vector<double> last(c);
        for (std::size_t r = 0; r < c; ++r) last[r] = 2.0 * (hi[r] - lo[r]);
        std::vector<std::size_t> active(c);
        for (std::size_t r = 0; r < c; ++r) active[r] = r;
        std::vector<double> bx, bp, bd;
        for (int iter = 0; iter < 200 && !active.empty(); ++iter) {
            bx.resize(active.size());
            bp.resize(active.size());
            bd.resize(active.size());
            for (std::size_t q = 0; q < active.size(); ++q) bx[q] = x[active[q]];
            evaluate(bx.data(), bp.data(), bd.data(), bx.size());
            std::vector<std::size_t> next;
            for (std::size_t q = 0; q < active.size(); ++q) {
                const std::size_t r = active[q];
                const double f = bp[q] - targets[r];
                if (f == 0.0) continue;
                if (f < 0.0) lo[r] = x[r];
                else hi[r] = x[r];
                const double newton = f / bd[q];
                const double tol = 2e-15 * std::max(1.0, std::abs(x[r]));
                // psi is a sum of n terms; below this residual the phase is noise
                const double noise = 1e-14 * (static_cast<double>(n_) + std::abs(targets[r]));
                if (std::abs(newton) <= tol || std::abs(f) <= noise) {
                    x[r] -= newton;
                    continue;
                }
                double xn = x[r] - newton;
                // bisect when Newton leaves the bracket or stops halving its step
                if (!(xn > lo[r] && xn < hi[r]) || std::abs(newton) > 0.5 * last[r]) xn = 0.5 * (lo[r] + hi[r]);
                last[r] = std::abs(xn - x[r]);
                x[r] = xn;
                if (hi[r] - lo[r] <= tol) continue;
                next.push_back(r);
            }
            active.swap(next);
        }
        if (!active.empty()) throw std::runtime_error("VerblunskyPhase: root refinement did not converge");
        for (auto& v : x) v = std::clamp(v, a, std::nextafter(b, a));
        for (std::size_t r = 1; r < c; ++r)
            if (!(x[r] > x[r - 1])) throw std::runtime_error("VerblunskyPhase: eigenangles not separated");
        return x;
    }

private:
    std::size_t n_;
    std::vector<double> are_, aim_;
    std::vector<std::size_t> blocks_;
    double tau_ = 0.0;
};

// Eigenangles in [-pi, pi) of a Haar unitary matrix of size n.
inline SpectrumSample sample_cue(std::size_t n, std::uint64_t seed, CueMethod method = CueMethod::Auto) {
    if (n == 0) throw std::invalid_argument("sample_cue: n must be positive");
    Rng rng = make_rng(seed);
    if (method == CueMethod::Auto) method = n > kVerblunskyThreshold ? CueMethod::Verblunsky : CueMethod::Ginibre;
    SpectrumSample s;
    s.kind = ProcessKind::Cue;
    s.n = n;
    s.seed = seed;
    if (method == CueMethod::Ginibre) {
        s.points = detail::ginibre_angles(n, rng);
    } else {
        VerblunskyPhase ph(n, rng);
        s.points = ph.roots_in(-pi, pi);
        if (s.points.size() != n) throw std::runtime_error("sample_cue: eigenangle count mismatch");
    }
    return s;
}

// Eigenangles of a Haar unitary restricted to the arc [lo, hi). With the
// Verblunsky method only the points of the arc are computed.
inline SpectrumSample sample_cue_arc(std::size_t n, double lo, double hi, std::uint64_t seed,
                                     CueMethod method = CueMethod::Verblunsky) {
    if (n == 0) throw std::invalid_argument("sample_cue_arc: n must be positive");
    if (!(lo >= -pi && hi <= pi && lo < hi)) throw std::invalid_argument("sample_cue_arc: arc must lie in [-pi, pi]");
    SpectrumSample s;
    if (method == CueMethod::Verblunsky) {
        Rng rng = make_rng(seed);
        VerblunskyPhase ph(n, rng);
        s.kind = ProcessKind::Cue;
        s.n = n;
        s.seed = seed;
        s.points = ph.roots_in(lo, hi);
    } else {
        s = sample_cue(n, seed, method);
        std::erase_if(s.points, [&](double t) { return t < lo || t >= hi; });
    }
    s.window_lo = lo;
    s.window_hi = hi;
    return s;
}

// Keeps each point independently with probability gamma.
inline SpectrumSample thin(const SpectrumSample& s, double gamma, std::uint64_t seed) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("thin: gamma must lie in [0,1]");
    Rng rng = make_rng(seed);
    SpectrumSample out = s;
    out.points.clear();
    for (double p : s.points)
        if (uniform01(rng) < gamma) out.points.push_back(p);
    out.thinned_gamma = s.thinned_gamma ? *s.thinned_gamma * gamma : gamma;
    return out;
}

inline double sine_kernel(double x, double y) {
    const double d = x - y;
    if (std::abs(d) < 1e-8) return (1.0 - d * d / 6.0) / pi;
    return std::sin(d) / (pi * d);
}

inline int default_sine_order(double length) { return static_cast<int>(std::ceil(0.75 * length + 40.0)); }

// Nystrom discretization of the sine kernel restricted to [a, b].
class RestrictedSineKernel {
public:
    static constexpr double kMaxLength = 600.0;

    RestrictedSineKernel(double a, double b, int order = 0, double max_length = kMaxLength) : a_(a), b_(b) {
        if (!(b > a)) throw std::invalid_argument("RestrictedSineKernel: empty window");
        if (b - a > max_length) throw std::invalid_argument("RestrictedSineKernel: window longer than the maximum");
        if (order <= 0) order = default_sine_order(b - a);
        rule_ = quad::Rule{};
        quad::append_mapped(quad::gauss_legendre(order), a, b, rule_);
        const int m = order;
        sw_.resize(m);
        for (int i = 0; i < m; ++i) sw_[i] = std::sqrt(rule_.weights[i]);
        Eigen::MatrixXd S(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) S(i, j) = sw_[i] * sine_kernel(rule_.nodes[i], rule_.nodes[j]) * sw_[j];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
        if (es.info() != Eigen::Success) throw std::runtime_error("RestrictedSineKernel: eigen-solver failed");
        // descending order
        eig_.resize(m);
        vec_.resize(m, m);
        for (int i = 0; i < m; ++i) {
            eig_[i] = es.eigenvalues()[m - 1 - i];
            vec_.col(i) = es.eigenvectors().col(m - 1 - i);
        }
        if (eig_.back() > 1e-10)
            throw std::runtime_error("RestrictedSineKernel: eigenvalue tail not resolved below 1e-10; raise the order");
        for (double& l : eig_) l = std::clamp(l, 0.0, 1.0 + 1e-8);
        active_ = 0;
        while (active_ < eig_.size() && eig_[active_] > 1e-12) ++active_;
    }

    double lo() const { return a_; }
    double hi() const { return b_; }
    int order() const { return static_cast<int>(rule_.nodes.size()); }
    const quad::Rule& rule() const { return rule_; }
    const std::vector<double>& eigenvalues() const { return eig_; }
    const Eigen::MatrixXd& eigenvectors() const { return vec_; }
    std::size_t significant() const { return active_; }

    double trace() const {
        double s = 0.0;
        for (double l : eig_) s += l;
        return s;
    }
    // Var of the point count in the window, sum l (1 - l), times gamma thinning
    double count_variance(double gamma = 1.0) const {
        double s = 0.0;
        for (double l : eig_) s += gamma * l * (1.0 - gamma * l);
        return s;
    }

    // Values at x of the L^2-normalized eigenfunctions listed in idx.
    void eigenfunctions(double x, const std::vector<std::size_t>& idx, std::vector<double>& out,
                        std::vector<double>& krow) const {
        const int m = order();
        krow.resize(m);
        for (int j = 0; j < m; ++j) krow[j] = sw_[j] * sine_kernel(x, rule_.nodes[j]);
        out.resize(idx.size());
        for (std::size_t q = 0; q < idx.size(); ++q) {
            const auto c = vec_.col(static_cast<Eigen::Index>(idx[q]));
            double s = 0.0;
            for (int j = 0; j < m; ++j) s += krow[j] * c[j];
            out[q] = s / eig_[idx[q]];
        }
    }

    // Grid estimates of sup |psi_i|^2 for the significant eigenfunctions.
    const std::vector<double>& sup_squared() const {
        std::call_once(sup_once_, [this] {
            const std::size_t G = static_cast<std::size_t>(std::ceil((b_ - a_) / 0.05)) + 1;
            std::vector<std::size_t> idx(active_);
            for (std::size_t i = 0; i < active_; ++i) idx[i] = i;
            std::vector<double> sup(active_, 0.0), v, krow;
            for (std::size_t g = 0; g < G; ++g) {
                const double x = a_ + (b_ - a_) * static_cast<double>(g) / static_cast<double>(G - 1);
                eigenfunctions(x, idx, v, krow);
                for (std::size_t i = 0; i < active_; ++i) sup[i] = std::max(sup[i], v[i] * v[i]);
            }
            sup_ = std::move(sup);
        });
        return sup_;
    }

private:
    double a_, b_;
    quad::Rule rule_;
    std::vector<double> sw_;
    std::vector<double> eig_;
    Eigen::MatrixXd vec_;
    std::size_t active_ = 0;
    mutable std::once_flag sup_once_;
    mutable std::vector<double> sup_;
};

// Exact sample of the DPP with kernel gamma K_sine restricted to the window.
inline SpectrumSample sample_sine_window(const RestrictedSineKernel& K, double gamma, std::uint64_t seed) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("sample_sine_window: gamma must lie in (0,1]");
    const auto& sup = K.sup_squared();
    Rng rng = make_rng(seed);
    std::vector<std::size_t> sel;
    for (std::size_t i = 0; i < K.significant(); ++i)
        if (uniform01(rng) < gamma * K.eigenvalues()[i]) sel.push_back(i);
    SpectrumSample s;
    s.kind = ProcessKind::Sine;
    s.window_lo = K.lo();
    s.window_hi = K.hi();
    s.seed = seed;
    if (gamma < 1.0) s.thinned_gamma = gamma;
    const std::size_t k = sel.size();
    if (k == 0) return s;
    double bound = 0.0;
    for (std::size_t i : sel) bound += sup[i];
    bound *= 1.25;
    std::vector<std::vector<double>> basis;
    std::vector<double> psi, krow, r(k);
    const double a = K.lo(), len = K.hi() - K.lo();
    for (std::size_t step = 0; step < k; ++step) {
        for (std::size_t tries = 0;; ++tries) {
            if (tries > 100000000) throw std::runtime_error("sample_sine_window: rejection sampler stalled");
            const double x = a + len * uniform01(rng);
            K.eigenfunctions(x, sel, psi, krow);
            r = psi;
            for (const auto& e : basis) {
                double dot = 0.0;
                for (std::size_t q = 0; q < k; ++q) dot += e[q] * psi[q];
                for (std::size_t q = 0; q < k; ++q) r[q] -= dot * e[q];
            }
            double p = 0.0;
            for (double v : r) p += v * v;
            if (p > bound) throw std::runtime_error("sample_sine_window: rejection bound violated");
            if (uniform01(rng) * bound < p) {
                const double nr = 1.0 / std::sqrt(p);
                for (double& v : r) v *= nr;
                basis.push_back(r);
                s.points.push_back(x);
                break;
            }
        }
    }
    std::sort(s.points.begin(), s.points.end());
    return s;
}

inline SpectrumSample sample_sine_window(double a, double b, double gamma, std::uint64_t seed) {
    return sample_sine_window(RestrictedSineKernel(a, b), gamma, seed);
}

// Binary sample dump: "DPPS", u16 version, u8 kind, u64 n, f64 lo, f64 hi,
// f64 gamma, u64 seed, u32 count, count x f64; little-endian.
namespace dpps {

inline constexpr std::uint16_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    unsigned char b[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw std::runtime_error("dpps: truncated stream");
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

inline void write(std::ostream& os, const SpectrumSample& s) {
    os.write("DPPS", 4);
    put<std::uint16_t>(os, kVersion);
    put<std::uint8_t>(os, static_cast<std::uint8_t>(s.kind));
    put<std::uint64_t>(os, s.n);
    put<double>(os, s.window_lo);
    put<double>(os, s.window_hi);
    put<double>(os, s.thinned_gamma.value_or(1.0));
    put<std::uint64_t>(os, s.seed);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.points.size()));
    for (double p : s.points) put<double>(os, p);
}

inline SpectrumSample read(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "DPPS", 4) != 0) throw std::runtime_error("dpps: bad magic");
    if (get<std::uint16_t>(is) != kVersion) throw std::runtime_error("dpps: unsupported version");
    SpectrumSample s;
    const auto kind = get<std::uint8_t>(is);
    if (kind > 1) throw std::runtime_error("dpps: unknown process kind");
    s.kind = static_cast<ProcessKind>(kind);
    s.n = get<std::uint64_t>(is);
    s.window_lo = get<double>(is);
    s.window_hi = get<double>(is);
    const double g = get<double>(is);
    if (g != 1.0) s.thinned_gamma = g;
    s.seed = get<std::uint64_t>(is);
    const auto count = get<std::uint32_t>(is);
    s.points.resize(count);
    for (auto& p : s.points) p = get<double>(is);
    return s;
}

inline void write_file(const std::string& path, const SpectrumSample& s) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("dpps: cannot open " + path);
    write(os, s);
}

inline SpectrumSample read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("dpps: cannot open " + path);
    return read(is);
}

}  // namespace dpps

}  // namespace mesolab
