#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "traj/trajectory.hpp"

namespace traj {

// RMS distance between two trajectories; the longer one is resampled to
// match the shorter.
inline double rms_distance(const Trajectory& a, const Trajectory& b) {
    const Trajectory* pa = &a;
    const Trajectory* pb = &b;
    Trajectory tmp;
    if (a.size() > b.size()) {
        tmp = resample(a, b.size());
        pa = &tmp;
    } else if (b.size() > a.size()) {
        tmp = resample(b, a.size());
        pb = &tmp;
    }
    double acc = 0.0;
    const std::size_t n = pa->size();
    for (std::size_t i = 0; i < n; ++i)
        acc += (pa->positions[i] - pb->positions[i]).squaredNorm();
    return std::sqrt(acc / static_cast<double>(n));
}

// Mean RMS distance over all unordered repetition pairs.
inline double inter_human_variance(const std::vector<Trajectory>& reps) {
    if (reps.size() < 2)
        throw std::invalid_argument("inter_human_variance: needs at least 2 repetitions");
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t j = 0; j < reps.size(); ++j)
        for (std::size_t k = j + 1; k < reps.size(); ++k) {
            acc += rms_distance(reps[j], reps[k]);
            ++pairs;
        }
    return acc / static_cast<double>(pairs);
}

inline double endpoint_distance(const Trajectory& pred, const Trajectory& ref) {
    return (pred.back() - ref.back()).norm();
}

// Success window of 72.5 % to 138 % of the demonstrated duration, inclusive.
inline bool relaxed_time_success(double pred_duration, double demo_duration) {
    if (!(pred_duration > 0.0) || !(demo_duration > 0.0))
        throw std::invalid_argument("relaxed_time_success: durations must be positive");
    return pred_duration >= 0.725 * demo_duration && pred_duration <= 1.38 * demo_duration;
}

struct UndefinedMetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline double dft_magnitude(const std::vector<double>& s, std::size_t bin) {
    std::complex<double> acc(0.0, 0.0);
    const double w = -2.0 * M_PI * static_cast<double>(bin) / static_cast<double>(s.size());
    for (std::size_t n = 0; n < s.size(); ++n)
        acc += s[n] * std::complex<double>(std::cos(w * static_cast<double>(n)),
                                           std::sin(w * static_cast<double>(n)));
    return std::abs(acc);
}

}  // namespace detail

// Kernel-oscillation measure: magnitude of the speed spectrum at K cycles
// per movement relative to the fundamental. A reconstruction counts as
// smooth when the ratio stays below 0.2.
inline double oscillation_metric(const std::vector<Eigen::Vector3d>& velocity, int K,
                                 double duration) {
    if (velocity.empty()) throw std::invalid_argument("oscillation_metric: empty velocity profile");
    if (K < 1) throw std::invalid_argument("oscillation_metric: K must be >= 1");
    if (!(duration > 0.0)) throw std::invalid_argument("oscillation_metric: duration must be positive");
    if (static_cast<std::size_t>(2 * K) >= velocity.size())
        throw UndefinedMetricError("oscillation_metric: too few samples to resolve K cycles");
    std::vector<double> speed(velocity.size());
    for (std::size_t i = 0; i < velocity.size(); ++i) speed[i] = velocity[i].norm();
    const double fund = detail::dft_magnitude(speed, 1);
    const double atk = detail::dft_magnitude(speed, static_cast<std::size_t>(K));
    return atk / std::max(fund, 1e-300);
}

// Per-axis variant, recorded for diagnostics.
inline Eigen::Vector3d oscillation_metric_axes(const std::vector<Eigen::Vector3d>& velocity, int K,
                                               double duration) {
    if (velocity.empty()) throw std::invalid_argument("oscillation_metric: empty velocity profile");
    if (static_cast<std::size_t>(2 * K) >= velocity.size())
        throw UndefinedMetricError("oscillation_metric: too few samples to resolve K cycles");
    (void)duration;
    Eigen::Vector3d out;
    std::vector<double> chan(velocity.size());
    for (int d = 0; d < 3; ++d) {
        for (std::size_t i = 0; i < velocity.size(); ++i) chan[i] = velocity[i][d];
        out[d] = detail::dft_magnitude(chan, static_cast<std::size_t>(K)) /
                 std::max(detail::dft_magnitude(chan, 1), 1e-300);
    }
    return out;
}

inline bool oscillation_smooth(double ratio) { return ratio < 0.2; }

enum class ModelKind { Dmp, DmpGeneralization, TbGmr, TpGmm, Seds };

// Free-parameter counts of the encodings (3-D trajectories).
inline int param_count(ModelKind kind, int K, int n_demos = 1) {
    if (K < 1) throw std::invalid_argument("param_count: K must be >= 1");
    switch (kind) {
        case ModelKind::Dmp: return 3 * K;
        case ModelKind::DmpGeneralization: return 3 * n_demos * K;
        case ModelKind::TbGmr: return 15 * K - 1;
        case ModelKind::TpGmm: return 29 * K - 1;
        case ModelKind::Seds: return 29 * K;
    }
    throw std::invalid_argument("param_count: unknown model kind");
}

struct Aggregate {
    double median = 0.0;
    double mad = 0.0;  // median absolute deviation
    double q1 = 0.0;
    double q3 = 0.0;
};

namespace detail {

inline double median_sorted(const std::vector<double>& s) {
    const std::size_t n = s.size();
    return n % 2 == 1 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

// linear interpolation between order statistics
inline double quantile_sorted(const std::vector<double>& s, double p) {
    const double pos = p * (static_cast<double>(s.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= s.size()) return s.back();
    const double frac = pos - static_cast<double>(lo);
    return (1.0 - frac) * s[lo] + frac * s[lo + 1];
}

}  // namespace detail

inline double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median: empty input");
    std::sort(values.begin(), values.end());
    return detail::median_sorted(values);
}

inline Aggregate aggregate(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("aggregate: empty input");
    std::sort(values.begin(), values.end());
    Aggregate a;
    a.median = detail::median_sorted(values);
    a.q1 = detail::quantile_sorted(values, 0.25);
    a.q3 = detail::quantile_sorted(values, 0.75);
    std::vector<double> dev(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) dev[i] = std::abs(values[i] - a.median);
    std::sort(dev.begin(), dev.end());
    a.mad = detail::median_sorted(dev);
    return a;
}

}  // namespace traj
