// Test-only oracles, independent of the library implementation paths they
// check.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <vector>

namespace oracle {

// ---- analytic minimum jerk --------------------------------------------------

inline double minjerk(double x0, double x1, double t, double T) {
    const double s = t / T;
    return x0 + (x1 - x0) * (s * s * s * (10.0 + s * (-15.0 + 6.0 * s)));
}

inline double minjerk_velocity(double x0, double x1, double t, double T) {
    const double s = t / T;
    return (x1 - x0) * (30.0 * s * s - 60.0 * s * s * s + 30.0 * s * s * s * s) / T;
}

// ---- DFT amplitude of a sampled channel --------------------------------------

inline double dft_amplitude(const std::vector<double>& x, std::size_t bin) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double w = -2.0 * M_PI * static_cast<double>(bin * n) / static_cast<double>(x.size());
        acc += x[n] * std::complex<double>(std::cos(w), std::sin(w));
    }
    return 2.0 * std::abs(acc) / static_cast<double>(x.size());
}

// ---- equality-constrained least-norm via the KKT system ----------------------

// minimize ||a||^2 subject to C a = y, solved from the stationarity system
// [2I C^T; C 0] [a; lambda] = [0; y].
inline Eigen::VectorXd kkt_least_norm(const Eigen::MatrixXd& C, const Eigen::VectorXd& y) {
    const long m = C.cols(), r = C.rows();
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(m + r, m + r);
    kkt.topLeftCorner(m, m) = 2.0 * Eigen::MatrixXd::Identity(m, m);
    kkt.topRightCorner(m, r) = C.transpose();
    kkt.bottomLeftCorner(r, m) = C;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + r);
    rhs.tail(r) = y;
    return kkt.fullPivLu().solve(rhs).head(m);
}

// ---- dense-grid conditioning of a 2-D mixture --------------------------------

struct GridConditional {
    double mean = 0.0;
    double variance = 0.0;
};

// P(x1 | x0 = x_in) for a 2-D mixture, by discretizing the joint density on a
// fine grid over dimension 1 and normalizing the slice.
template <typename Density>
inline GridConditional grid_conditional(Density&& joint_pdf, double x_in, double lo, double hi,
                                        int n = 4001) {
    double z = 0.0, m1 = 0.0, m2 = 0.0;
    const double h = (hi - lo) / (n - 1);
    for (int i = 0; i < n; ++i) {
        const double x = lo + i * h;
        const double p = joint_pdf(x_in, x);
        z += p;
        m1 += p * x;
        m2 += p * x * x;
    }
    m1 /= z;
    m2 /= z;
    return {m1, m2 - m1 * m1};
}

// ---- order statistics by explicit sorting -------------------------------------

inline double sorted_median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double sorted_quantile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double pos = p * (static_cast<double>(v.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= v.size()) return v.back();
    return (1.0 - (pos - lo)) * v[lo] + (pos - lo) * v[lo + 1];
}

}  // namespace oracle
