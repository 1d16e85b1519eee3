#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace traj {

// Uniformly sampled 3D position time series. Positions in meters, dt in
// seconds (0.01 for the 100 Hz recordings). Immutable by convention: all
// operations return new trajectories.
struct Trajectory {
    std::vector<Eigen::Vector3d> positions;
    double dt = 0.01;

    Trajectory() = default;
    Trajectory(std::vector<Eigen::Vector3d> pos, double sample_dt)
        : positions(std::move(pos)), dt(sample_dt) {
        validate();
    }

    std::size_t size() const { return positions.size(); }
    double duration() const { return (static_cast<double>(positions.size()) - 1.0) * dt; }
    const Eigen::Vector3d& front() const { return positions.front(); }
    const Eigen::Vector3d& back() const { return positions.back(); }

    void validate() const {
        if (positions.size() < 2)
            throw std::invalid_argument("trajectory needs at least 2 samples");
        if (!(dt > 0.0))
            throw std::invalid_argument("trajectory dt must be positive");
        for (const auto& p : positions)
            if (!p.allFinite())
                throw std::invalid_argument("trajectory contains non-finite coordinates");
    }
};

// Rigid frame change: p -> A*p + b with A a proper rotation.
struct FrameTransform {
    Eigen::Matrix3d A = Eigen::Matrix3d::Identity();
    Eigen::Vector3d b = Eigen::Vector3d::Zero();

    FrameTransform() = default;
    FrameTransform(const Eigen::Matrix3d& rot, const Eigen::Vector3d& trans) : A(rot), b(trans) {
        validate();
    }

    void validate() const {
        if ((A * A.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9)
            throw std::invalid_argument("frame rotation is not orthonormal");
        if (std::abs(A.determinant() - 1.0) > 1e-9)
            throw std::invalid_argument("frame rotation determinant must be +1");
    }

    // composition: (this after first)
    FrameTransform compose(const FrameTransform& first) const {
        return FrameTransform(A * first.A, A * first.b + b);
    }
};

// Linear resampling in time. Endpoints are kept exactly; duration is
// preserved by rescaling dt.
inline Trajectory resample(const Trajectory& t, std::size_t n) {
    if (n < 2) throw std::invalid_argument("resample needs n >= 2");
    const std::size_t m = t.size();
    if (n == m) return t;
    const double new_dt = t.duration() / (static_cast<double>(n) - 1.0);
    std::vector<Eigen::Vector3d> out(n);
    out.front() = t.positions.front();
    out.back() = t.positions.back();
    for (std::size_t j = 1; j + 1 < n; ++j) {
        double s = static_cast<double>(j) * (static_cast<double>(m) - 1.0) / (static_cast<double>(n) - 1.0);
        std::size_t i = static_cast<std::size_t>(s);
        if (i >= m - 1) i = m - 2;
        double a = s - static_cast<double>(i);
        out[j] = (1.0 - a) * t.positions[i] + a * t.positions[i + 1];
    }
    return Trajectory(std::move(out), new_dt);
}

// Velocity by central differences, one-sided at the boundaries.
inline std::vector<Eigen::Vector3d> differentiate(const Trajectory& t) {
    const std::size_t n = t.size();
    std::vector<Eigen::Vector3d> v(n);
    v[0] = (t.positions[1] - t.positions[0]) / t.dt;
    v[n - 1] = (t.positions[n - 1] - t.positions[n - 2]) / t.dt;
    for (std::size_t i = 1; i + 1 < n; ++i)
        v[i] = (t.positions[i + 1] - t.positions[i - 1]) / (2.0 * t.dt);
    return v;
}

namespace detail {

// One biquad pass of a 2nd-order Butterworth low-pass (bilinear transform),
// state initialized to steady state for the first sample.
inline void butterworth2_pass(std::vector<double>& x, double cutoff_hz, double fs) {
    const double wc = std::tan(M_PI * cutoff_hz / fs);
    const double k1 = std::sqrt(2.0) * wc;
    const double k2 = wc * wc;
    const double a0 = 1.0 + k1 + k2;
    const double b0 = k2 / a0, b1 = 2.0 * k2 / a0, b2 = k2 / a0;
    const double a1 = 2.0 * (k2 - 1.0) / a0, a2 = (1.0 - k1 + k2) / a0;
    double x1 = x.front(), x2 = x.front();
    double y1 = x.front(), y2 = x.front();
    for (double& v : x) {
        double y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
        x2 = x1; x1 = v;
        y2 = y1; y1 = y;
        v = y;
    }
}

}  // namespace detail

namespace detail {

// zero-phase pass without the endpoint pinning; derivative chains need the
// smooth boundary
inline Trajectory lowpass_filter_unpinned(const Trajectory& t, double cutoff_hz) {
    const double nyquist = 1.0 / (2.0 * t.dt);
    if (!(cutoff_hz > 0.0) || cutoff_hz >= nyquist)
        throw std::invalid_argument("lowpass cutoff must lie in (0, Nyquist)");
    const double fs = 1.0 / t.dt;
    const std::size_t n = t.size();
    std::vector<Eigen::Vector3d> out(n);
    std::vector<double> chan(n);
    for (int d = 0; d < 3; ++d) {
        for (std::size_t i = 0; i < n; ++i) chan[i] = t.positions[i][d];
        butterworth2_pass(chan, cutoff_hz, fs);
        std::reverse(chan.begin(), chan.end());
        butterworth2_pass(chan, cutoff_hz, fs);
        std::reverse(chan.begin(), chan.end());
        for (std::size_t i = 0; i < n; ++i) out[i][d] = chan[i];
    }
    return Trajectory(std::move(out), t.dt);
}

}  // namespace detail

// Zero-phase low-pass: the Butterworth section is run forward and backward so
// the output is not time-shifted. First and last samples are reset to the
// input values afterwards (endpoint pinning) to keep end-point metrics clean.
inline Trajectory lowpass_filter(const Trajectory& t, double cutoff_hz) {
    Trajectory out = detail::lowpass_filter_unpinned(t, cutoff_hz);
    out.positions.front() = t.positions.front();
    out.positions.back() = t.positions.back();
    return out;
}

inline Trajectory transform(const Trajectory& t, const FrameTransform& f) {
    std::vector<Eigen::Vector3d> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = f.A * t.positions[i] + f.b;
    return Trajectory(std::move(out), t.dt);
}

}  // namespace traj
