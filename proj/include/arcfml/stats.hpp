// stats.hpp - error-rate statistics used by the BER harnesses

#pragma once

#include <cmath>
#include <cstdint>

namespace arcfml::stats {

/// Gaussian tail probability Q(x) = P(Z > x).
inline double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

/// Coherent binary detection with orthogonal signals: Pb = Q(sqrt(Eb/N0)).
inline double orthogonal_binary_ber(double ebn0_db) { return q_function(std::sqrt(db_to_linear(ebn0_db))); }

struct Interval95 {
    double center;
    double half_width;
};

/// Wilson score interval for a binomial proportion (z = 1.96 by default).
inline Interval95 wilson(std::uint64_t errors, std::uint64_t trials, double z = 1.959963984540054) {
    if (trials == 0) return {0.0, 0.0};
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(errors) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {center, half};
}

}  // namespace arcfml::stats
