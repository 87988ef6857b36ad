#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace mesolab::fft {

using cvec = std::vector<std::complex<double>>;

inline std::mutex& planner_mutex() {
    static std::mutex mu;
    return mu;
}

// In-place unnormalized DFT. sign = -1: X_k = sum x_m e^{-2 pi i k m / M}.
inline void transform(cvec& data, int sign) {
    if (data.empty()) return;
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        plan = fftw_plan_dft_1d(static_cast<int>(data.size()), p, p, sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD,
                                FFTW_ESTIMATE);
    }
    if (!plan) throw std::runtime_error("fftw: plan creation failed");
    fftw_execute(plan);
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan);
}

// Fourier coefficients c_k = (1/M) sum_m v_m e^{-ik 2 pi m/M} of samples on
// the angles 2 pi m / M; index k mod M.
inline cvec coefficients(const std::vector<double>& values) {
    cvec d(values.begin(), values.end());
    transform(d, -1);
    const double inv = 1.0 / static_cast<double>(values.size());
    for (auto& c : d) c *= inv;
    return d;
}

inline std::complex<double> coefficient_at(const cvec& c, long k) {
    const long M = static_cast<long>(c.size());
    long idx = k % M;
    if (idx < 0) idx += M;
    return c[static_cast<std::size_t>(idx)];
}

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace mesolab::fft
