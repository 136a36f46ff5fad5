// dsp.hpp - FFT wrappers, Hilbert transform and band-limited interpolation

#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace arcfml::dsp {

using cplx = std::complex<double>;

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

inline Eigen::FFT<double>& fft_engine() {
    thread_local Eigen::FFT<double> engine;
    return engine;
}

inline std::vector<cplx> fft(const std::vector<cplx>& x) {
    std::vector<cplx> out;
    fft_engine().fwd(out, x);
    return out;
}

inline std::vector<cplx> fft(std::span<const double> x) {
    std::vector<double> in(x.begin(), x.end());
    std::vector<cplx> out;
    fft_engine().fwd(out, in);
    return out;
}

/// Inverse transform with 1/n scaling.
inline std::vector<cplx> ifft(const std::vector<cplx>& X) {
    std::vector<cplx> out;
    fft_engine().inv(out, X);
    return out;
}

/// Imaginary part of the analytic signal (the Hilbert transform of x).
inline std::vector<double> hilbert(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 2) return std::vector<double>(n, 0.0);
    auto X = fft(x);
    for (std::size_t k = 1; k < n; ++k) {
        if (2 * k < n) X[k] *= 2.0;
        else if (2 * k > n) X[k] = 0.0;
    }
    const auto xa = ifft(X);
    std::vector<double> h(n);
    for (std::size_t k = 0; k < n; ++k) h[k] = xa[k].imag();
    return h;
}

inline double sinc(double x) {
    if (x == 0.0) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

/// 64-tap Blackman-windowed sinc interpolator with a tabulated polyphase kernel.
///
/// Evaluates x at fractional positions; samples outside [0, n) are zero.
/// Integer positions return the stored sample exactly.
class SincInterpolator {
public:
    static constexpr int kTaps = 64;
    static constexpr int kHalf = kTaps / 2;
    static constexpr int kPhases = 1024;

    static const SincInterpolator& instance() {
        static const SincInterpolator k;
        return k;
    }

    double at(std::span<const double> x, double pos) const {
        const double base = std::floor(pos);
        const double frac = pos - base;
        const auto ib = static_cast<long long>(base);
        const auto n = static_cast<long long>(x.size());
        if (frac == 0.0) return (ib >= 0 && ib < n) ? x[static_cast<std::size_t>(ib)] : 0.0;

        const double p = frac * kPhases;
        const auto row = static_cast<std::size_t>(p);
        const double t = p - static_cast<double>(row);
        const double* r0 = &table_[row * kTaps];
        const double* r1 = r0 + kTaps;

        const long long first = ib - (kHalf - 1);
        const long long j_lo = std::max<long long>(0, -first);
        const long long j_hi = std::min<long long>(kTaps, n - first);
        double acc = 0.0;
        for (long long j = j_lo; j < j_hi; ++j) {
            const double w = r0[j] + t * (r1[j] - r0[j]);
            acc += w * x[static_cast<std::size_t>(first + j)];
        }
        return acc;
    }

private:
    SincInterpolator() : table_(static_cast<std::size_t>(kPhases + 1) * kTaps) {
        for (int ph = 0; ph <= kPhases; ++ph) {
            const double frac = static_cast<double>(ph) / kPhases;
            double* row = &table_[static_cast<std::size_t>(ph) * kTaps];
            double sum = 0.0;
            for (int j = 0; j < kTaps; ++j) {
                const double d = frac + (kHalf - 1) - j;  // distance from tap to evaluation point
                const double u = d / kHalf;
                double w = 0.0;
                if (std::abs(u) < 1.0) {
                    const double win = 0.42 + 0.5 * std::cos(std::numbers::pi * u) +
                                       0.08 * std::cos(2.0 * std::numbers::pi * u);
                    w = sinc(d) * win;
                }
                row[j] = w;
                sum += w;
            }
            for (int j = 0; j < kTaps; ++j) row[j] /= sum;
        }
    }

    std::vector<double> table_;
};

}  // namespace arcfml::dsp
