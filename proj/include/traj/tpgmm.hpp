#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "traj/gmm.hpp"
#include "traj/trajectory.hpp"

namespace traj {

struct DegenerateGeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Per-frame affine transforms in homogeneous (time, x, y, z) block form: the
// time row/column is the identity so time is invariant under the task
// parameters. A_j, b_j map frame-local coordinates to global ones.
struct TaskParams {
    std::vector<Eigen::Matrix4d> A;
    std::vector<Eigen::Vector4d> b;

    int frames() const { return static_cast<int>(A.size()); }

    void validate() const {
        if (A.size() != b.size()) throw std::invalid_argument("TaskParams: size mismatch");
        for (std::size_t j = 0; j < A.size(); ++j) {
            if (std::abs(A[j](0, 0) - 1.0) > 1e-12 || A[j].row(0).tail<3>().cwiseAbs().maxCoeff() > 1e-12 ||
                A[j].col(0).tail<3>().cwiseAbs().maxCoeff() > 1e-12 || std::abs(b[j][0]) > 1e-12)
                throw std::invalid_argument("TaskParams: time block must stay invariant");
        }
    }

    static TaskParams from_spatial(const std::vector<Eigen::Matrix3d>& rot,
                                   const std::vector<Eigen::Vector3d>& trans) {
        TaskParams p;
        for (std::size_t j = 0; j < rot.size(); ++j) {
            Eigen::Matrix4d A = Eigen::Matrix4d::Identity();
            A.block<3, 3>(1, 1) = rot[j];
            Eigen::Vector4d b4 = Eigen::Vector4d::Zero();
            b4.tail<3>() = trans[j];
            p.A.push_back(A);
            p.b.push_back(b4);
        }
        return p;
    }
};

namespace detail {

// Rotation about z mapping +y onto the horizontal direction of d; identity
// when d is (near-)vertical.
inline Eigen::Matrix3d yaw_to_heading(const Eigen::Vector3d& d) {
    const double dh = std::hypot(d.x(), d.y());
    if (dh < 1e-9) return Eigen::Matrix3d::Identity();
    const double theta = std::atan2(-d.x(), d.y());
    Eigen::Matrix3d R;
    const double c = std::cos(theta), s = std::sin(theta);
    R << c, -s, 0, s, c, 0, 0, 0, 1;
    return R;
}

}  // namespace detail

// Two reference frames for a start/end pair. Frame 1 puts the start at the
// origin and rotates about z so the end-point lands in the yz-plane with
// positive y; frame 2 swaps the roles of start and end.
inline TaskParams frame_params_from_endpoints(const Eigen::Vector3d& start,
                                              const Eigen::Vector3d& end) {
    if ((end - start).norm() < 1e-6)
        throw DegenerateGeometryError("frame_params_from_endpoints: coincident endpoints");
    return TaskParams::from_spatial({detail::yaw_to_heading(end - start),
                                     detail::yaw_to_heading(start - end)},
                                    {start, end});
}

// Task-parameterized mixture: shared priors, one set of 4-D Gaussians per
// reference frame.
struct TpGmm {
    Eigen::VectorXd weights;
    std::vector<std::vector<Gaussian>> frames;  // [P][K], dimension 4
    int P = 0;
    int K = 0;

    int param_count() const { return K * P * 14 + K - 1; }  // D=4 per frame
};

namespace detail {

// Frame-local (phase, x, y, z) samples of one demo; phase in [0,1] so demos
// of different durations align.
inline Eigen::MatrixXd frame_local_samples(const Trajectory& t, const Eigen::Matrix4d& A,
                                           const Eigen::Vector4d& b) {
    const Eigen::Matrix3d Rt = A.block<3, 3>(1, 1).transpose();
    const Eigen::Vector3d tr = b.tail<3>();
    Eigen::MatrixXd out(static_cast<long>(t.size()), 4);
    for (std::size_t i = 0; i < t.size(); ++i) {
        out(static_cast<long>(i), 0) = static_cast<double>(i) / (static_cast<double>(t.size()) - 1.0);
        out.row(static_cast<long>(i)).tail<3>() = (Rt * (t.positions[i] - tr)).transpose();
    }
    return out;
}

}  // namespace detail

// Multi-frame EM: every demo is projected into each reference frame; the
// E-step uses the product of per-frame component likelihoods, the M-step
// updates shared priors and frame-local means/covariances. Epsilon is added
// to every covariance diagonal after each M-step.
inline TpGmm tpgmm_fit(const std::vector<Trajectory>& demos, const std::vector<TaskParams>& params,
                       int K, double epsilon, const EmOptions& opts = {}) {
    if (demos.empty()) throw std::invalid_argument("tpgmm_fit: no demonstrations");
    if (demos.size() != params.size())
        throw std::invalid_argument("tpgmm_fit: one TaskParams per demo required");
    const int P = params.front().frames();
    for (const TaskParams& p : params) {
        p.validate();
        if (p.frames() != P) throw std::invalid_argument("tpgmm_fit: frame counts differ");
    }

    std::vector<Eigen::MatrixXd> X(static_cast<std::size_t>(P));
    for (int j = 0; j < P; ++j) {
        long total = 0;
        for (const Trajectory& d : demos) total += static_cast<long>(d.size());
        X[static_cast<std::size_t>(j)].resize(total, 4);
        long row = 0;
        for (std::size_t di = 0; di < demos.size(); ++di) {
            const Eigen::MatrixXd loc = detail::frame_local_samples(
                demos[di], params[di].A[static_cast<std::size_t>(j)],
                params[di].b[static_cast<std::size_t>(j)]);
            X[static_cast<std::size_t>(j)].middleRows(row, loc.rows()) = loc;
            row += loc.rows();
        }
    }
    const long n = X[0].rows();
    if (n <= K) throw FitError("tpgmm_fit: needs more samples than components");

    // init: equal phase bins, shared across frames
    const std::vector<int> lab = detail::init_labels_time_bins(X[0], K);
    TpGmm model;
    model.P = P;
    model.K = K;
    model.weights.resize(K);
    model.frames.assign(static_cast<std::size_t>(P), {});
    for (int j = 0; j < P; ++j) {
        const Gmm g = detail::moments_from_labels(X[static_cast<std::size_t>(j)], lab, K, epsilon);
        model.frames[static_cast<std::size_t>(j)] = g.components;
        if (j == 0) model.weights = g.weights;
    }

    Eigen::MatrixXd logp(n, K), resp(n, K);
    double ll_prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < opts.max_iters; ++it) {
        for (int k = 0; k < K; ++k) {
            logp.col(k).setConstant(std::log(model.weights[k]));
            for (int j = 0; j < P; ++j) {
                const Gaussian& comp = model.frames[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
                const auto llt = detail::cholesky_or_throw(comp.sigma, "tpgmm_fit: degenerate covariance");
                for (long i = 0; i < n; ++i)
                    logp(i, k) += detail::log_gauss(X[static_cast<std::size_t>(j)].row(i).transpose(),
                                                    comp, llt);
            }
        }
        double ll = 0.0;
        for (long i = 0; i < n; ++i) {
            const double mx = logp.row(i).maxCoeff();
            const double lse = mx + std::log((logp.row(i).array() - mx).exp().sum());
            ll += lse;
            resp.row(i) = (logp.row(i).array() - lse).exp();
        }
        for (int k = 0; k < K; ++k) {
            const double nk = resp.col(k).sum();
            if (nk < 1e-12) throw FitError("tpgmm_fit: component starved");
            model.weights[k] = nk / static_cast<double>(n);
            for (int j = 0; j < P; ++j) {
                const Eigen::MatrixXd& Xj = X[static_cast<std::size_t>(j)];
                Eigen::VectorXd mu = (Xj.transpose() * resp.col(k)) / nk;
                Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(4, 4);
                for (long i = 0; i < n; ++i) {
                    const Eigen::VectorXd c = Xj.row(i).transpose() - mu;
                    cov += resp(i, k) * c * c.transpose();
                }
                cov /= nk;
                cov.diagonal().array() += epsilon;
                model.frames[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] = {std::move(mu),
                                                                                          std::move(cov)};
            }
        }
        model.weights /= model.weights.sum();
        if (std::abs(ll - ll_prev) < opts.tol) break;
        ll_prev = ll;
    }
    return model;
}

// Recombination for new task parameters: each frame's Gaussian is pushed
// through its transform and the frames are merged by the Gaussian product.
inline Gmm tpgmm_combine(const TpGmm& model, const TaskParams& new_params) {
    new_params.validate();
    if (new_params.frames() != model.P)
        throw std::invalid_argument("tpgmm_combine: frame count mismatch");
    Gmm g;
    g.dim = 4;
    g.weights = model.weights;
    g.components.resize(static_cast<std::size_t>(model.K));
    for (int k = 0; k < model.K; ++k) {
        Eigen::Matrix4d precision = Eigen::Matrix4d::Zero();
        Eigen::Vector4d info = Eigen::Vector4d::Zero();
        for (int j = 0; j < model.P; ++j) {
            const Gaussian& c = model.frames[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
            const Eigen::Matrix4d& A = new_params.A[static_cast<std::size_t>(j)];
            const Eigen::Vector4d& b = new_params.b[static_cast<std::size_t>(j)];
            const Eigen::Vector4d mu = A * c.mu + b;
            const Eigen::Matrix4d sig = A * c.sigma * A.transpose();
            Eigen::LLT<Eigen::Matrix4d> llt(sig);
            if (llt.info() != Eigen::Success)
                throw ConditioningError("tpgmm_combine: transformed covariance not invertible");
            const Eigen::Matrix4d prec = llt.solve(Eigen::Matrix4d::Identity());
            precision += prec;
            info += prec * mu;
        }
        Eigen::LLT<Eigen::Matrix4d> llt(precision);
        if (llt.info() != Eigen::Success)
            throw ConditioningError("tpgmm_combine: combined precision not invertible");
        Eigen::Matrix4d cov = llt.solve(Eigen::Matrix4d::Identity());
        cov = 0.5 * (cov + cov.transpose());
        g.components[static_cast<std::size_t>(k)] = {cov * info, cov};
    }
    return g;
}

// Full generalization path: frames from the new endpoints, recombination,
// GMR over the phase axis, then the 3 Hz zero-phase post-filter to remove
// the regularization-induced velocity oscillations.
inline Trajectory tpgmm_generalize(const TpGmm& model, const Eigen::Vector3d& new_start,
                                   const Eigen::Vector3d& new_end,
                                   const std::vector<double>& timestamps) {
    const Gmm combined = tpgmm_combine(model, frame_params_from_endpoints(new_start, new_end));
    if (timestamps.size() < 2) throw std::invalid_argument("tpgmm_generalize: need >= 2 timestamps");
    const double span = timestamps.back() - timestamps.front();
    std::vector<double> phases(timestamps.size());
    for (std::size_t i = 0; i < timestamps.size(); ++i)
        phases[i] = (timestamps[i] - timestamps.front()) / span;
    auto [trajectory, cov] = tbgmr_reconstruct(combined, phases);
    trajectory.dt = span / (static_cast<double>(timestamps.size()) - 1.0);
    const double nyquist = 1.0 / (2.0 * trajectory.dt);
    if (3.0 < nyquist) trajectory = lowpass_filter(trajectory, 3.0);
    return trajectory;
}

inline nlohmann::json to_json(const TpGmm& m) {
    nlohmann::json j;
    j["K"] = m.K;
    j["D"] = 4;
    j["P"] = m.P;
    j["pi"] = std::vector<double>(m.weights.data(), m.weights.data() + m.weights.size());
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& frame : m.frames) {
        nlohmann::json fr = nlohmann::json::array();
        for (const Gaussian& c : frame) {
            nlohmann::json comp;
            comp["mu"] = std::vector<double>(c.mu.data(), c.mu.data() + c.mu.size());
            nlohmann::json rows = nlohmann::json::array();
            for (long r = 0; r < 4; ++r) {
                nlohmann::json row = nlohmann::json::array();
                for (long cc = 0; cc < 4; ++cc) row.push_back(c.sigma(r, cc));
                rows.push_back(row);
            }
            comp["sigma"] = rows;
            fr.push_back(comp);
        }
        frames.push_back(fr);
    }
    j["frames"] = frames;
    return j;
}

inline TpGmm tpgmm_from_json(const nlohmann::json& j) {
    TpGmm m;
    m.K = j.at("K").get<int>();
    m.P = j.at("P").get<int>();
    const auto pi = j.at("pi").get<std::vector<double>>();
    m.weights = Eigen::Map<const Eigen::VectorXd>(pi.data(), static_cast<long>(pi.size()));
    for (const auto& fr : j.at("frames")) {
        std::vector<Gaussian> frame;
        for (const auto& comp : fr) {
            Gaussian c;
            const auto mu = comp.at("mu").get<std::vector<double>>();
            c.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<long>(mu.size()));
            c.sigma.resize(4, 4);
            for (int r = 0; r < 4; ++r)
                for (int cc = 0; cc < 4; ++cc) c.sigma(r, cc) = comp.at("sigma").at(r).at(cc).get<double>();
            frame.push_back(std::move(c));
        }
        m.frames.push_back(std::move(frame));
    }
    return m;
}

}  // namespace traj
