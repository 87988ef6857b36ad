#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace mesolab::quad {

struct Rule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

namespace detail {

inline Rule compute_gauss_legendre(int n) {
    Rule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        // Tricomi initial guess, then Newton on P_n
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) { p1 = x; p0 = 1.0; }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        if (n == 1) { p1 = x; p0 = 1.0; }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.nodes[i] = -x;
        r.nodes[n - 1 - i] = x;
        r.weights[i] = w;
        r.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) r.nodes[n / 2] = 0.0;
    return r;
}

}  // namespace detail

// Gauss-Legendre rule on [-1, 1]; cached, safe to call concurrently.
inline const Rule& gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: order must be positive");
    static std::mutex mu;
    static std::map<int, std::unique_ptr<Rule>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) {
        it = cache.emplace(n, std::make_unique<Rule>(detail::compute_gauss_legendre(n))).first;
    }
    return *it->second;
}

// Nodes/weights of a rule mapped to [a, b], appended to out.
inline void append_mapped(const Rule& r, double a, double b, Rule& out) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
        out.nodes.push_back(c + h * r.nodes[i]);
        out.weights.push_back(h * r.weights[i]);
    }
}

// Composite rule: [a,b] split at the given interior breakpoints, then each
// piece into panels no wider than max_width, each panel with `order` nodes.
inline Rule composite(double a, double b, std::vector<double> breaks, double max_width, int order) {
    Rule out;
    if (!(b > a)) return out;
    breaks.push_back(a);
    breaks.push_back(b);
    std::sort(breaks.begin(), breaks.end());
    const Rule& g = gauss_legendre(order);
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        const double lo = std::max(a, breaks[i]);
        const double hi = std::min(b, breaks[i + 1]);
        if (!(hi > lo)) continue;
        const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / max_width)));
        const double w = (hi - lo) / panels;
        for (int p = 0; p < panels; ++p) append_mapped(g, lo + p * w, (p + 1 == panels) ? hi : lo + (p + 1) * w, out);
    }
    return out;
}

template <class F>
double integrate(F&& f, const Rule& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * f(r.nodes[i]);
    return s;
}

template <class F>
double integrate(F&& f, double a, double b, std::vector<double> breaks = {}, double max_width = 0.5, int order = 24) {
    return integrate(f, composite(a, b, std::move(breaks), max_width, order));
}

}  // namespace mesolab::quad
