#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "traj/rng.hpp"
#include "traj/trajectory.hpp"

namespace traj {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

// Autonomous system xi' = f(xi) over xi = (position - goal, vel_scale * velocity),
// encoded as a mixture of linear maps with responsibilities from the input
// Gaussians. The attractor sits at the origin of these model coordinates, so
// b_k = -A_k * 0 vanishes and the stability certificate reduces to
// A_k + A_k^T negative definite. vel_scale is the characteristic time that
// makes the kinematic coupling between the position and velocity blocks
// representable inside the constraint set.
struct SedsModel {
    int K = 0;
    Vector6d attractor = Vector6d::Zero();  // physical units: goal position, zero velocity
    Eigen::VectorXd priors;
    std::vector<Vector6d> mu;      // input means, model coordinates
    std::vector<Matrix6d> sigma;   // input covariances, model coordinates
    std::vector<Matrix6d> A;       // linear maps, model coordinates
    double vel_scale = 1.0;

    Vector6d implied_b(int k) const { return -A[static_cast<std::size_t>(k)] * Vector6d::Zero(); }
};

// n_SEDS = K (1 + 2/3 D (D+1)) for the 6-D state.
inline int seds_param_count(int K) {
    if (K < 1) throw std::invalid_argument("seds_param_count: K must be >= 1");
    constexpr int D = 6;
    return K * (1 + 2 * D * (D + 1) / 3);
}

struct SedsFailureReport {
    int trials = 0;
    std::string last_gate;         // "path", "endpoint", "nan" or "solver"
    double path_residual = 0.0;    // meters
    double endpoint_residual = 0.0;
    double final_mat_bias = 0.0;
};

struct SedsFitResult {
    std::optional<SedsModel> model;
    SedsFailureReport report;  // filled in either case; trials always counted
    bool ok() const { return model.has_value(); }
};

namespace seds_detail {

struct Params {
    Eigen::VectorXd u;            // prior logits
    std::vector<Vector6d> mu;
    std::vector<Matrix6d> C;      // Sigma = C C^T + bias I
    std::vector<Matrix6d> L;      // sym(A) = -(L L^T) - margin I
    std::vector<Matrix6d> W;      // antisymmetric part of A
};

struct Assembled {
    Eigen::VectorXd pi;
    std::vector<Matrix6d> sigma;
    std::vector<Matrix6d> A;
};

inline Assembled assemble(const Params& p, double bias, double margin) {
    const int K = static_cast<int>(p.u.size());
    Assembled a;
    a.pi = (p.u.array() - p.u.maxCoeff()).exp();
    a.pi /= a.pi.sum();
    a.sigma.resize(static_cast<std::size_t>(K));
    a.A.resize(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        a.sigma[ks] = p.C[ks] * p.C[ks].transpose() + bias * Matrix6d::Identity();
        a.A[ks] = -(p.L[ks] * p.L[ks].transpose()) - margin * Matrix6d::Identity() + p.W[ks];
    }
    return a;
}

inline double log_gauss6(const Vector6d& x, const Vector6d& mu, const Eigen::LLT<Matrix6d>& llt) {
    const Vector6d sol = llt.matrixL().solve(x - mu);
    double logdet = 0.0;
    for (int i = 0; i < 6; ++i) logdet += std::log(llt.matrixL()(i, i));
    return -0.5 * sol.squaredNorm() - logdet - 3.0 * std::log(2.0 * M_PI);
}

// MSE between predicted and demonstrated xi', per-block normalized by the
// target RMS (velocity rows vs acceleration rows), with analytic gradients
// through the responsibilities.
struct Objective {
    const Eigen::MatrixXd& X;   // N x 6 inputs
    const Eigen::MatrixXd& V;   // N x 6 targets
    Vector6d w2;                // squared per-dimension error weights
    double bias;
    double margin;

    double eval(const Params& p, Params* grad) const {
        const int K = static_cast<int>(p.u.size());
        const long n = X.rows();
        const Assembled a = assemble(p, bias, margin);

        std::vector<Eigen::LLT<Matrix6d>> llts(static_cast<std::size_t>(K));
        std::vector<Matrix6d> sig_inv(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            llts[ks].compute(a.sigma[ks]);
            if (llts[ks].info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
            sig_inv[ks] = llts[ks].solve(Matrix6d::Identity());
        }

        Eigen::MatrixXd logp(n, K), h(n, K);
        for (int k = 0; k < K; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            const double lw = std::log(a.pi[k]);
            for (long i = 0; i < n; ++i)
                logp(i, k) = lw + log_gauss6(X.row(i).transpose(), p.mu[ks], llts[ks]);
        }
        for (long i = 0; i < n; ++i) {
            const double mx = logp.row(i).maxCoeff();
            Eigen::VectorXd e = (logp.row(i).transpose().array() - mx).exp();
            h.row(i) = (e / e.sum()).transpose();
        }

        double J = 0.0;
        Eigen::MatrixXd E(n, 6);         // weighted error accumulators
        Eigen::MatrixXd q(n, K);         // dJ/dh before centering
        std::vector<Eigen::Matrix<double, Eigen::Dynamic, 6>> AX(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k)
            AX[static_cast<std::size_t>(k)] = X * a.A[static_cast<std::size_t>(k)].transpose();
        for (long i = 0; i < n; ++i) {
            Vector6d pred = Vector6d::Zero();
            for (int k = 0; k < K; ++k)
                pred += h(i, k) * AX[static_cast<std::size_t>(k)].row(i).transpose();
            const Vector6d err = pred - V.row(i).transpose();
            J += 0.5 * (w2.array() * err.array().square()).sum();
            E.row(i) = (w2.array() * err.array()).transpose();
        }
        J /= static_cast<double>(n);
        if (!grad) return J;

        for (int k = 0; k < K; ++k)
            for (long i = 0; i < n; ++i)
                q(i, k) = E.row(i).dot(AX[static_cast<std::size_t>(k)].row(i)) / static_cast<double>(n);

        grad->u = Eigen::VectorXd::Zero(K);
        grad->mu.assign(static_cast<std::size_t>(K), Vector6d::Zero());
        grad->C.assign(static_cast<std::size_t>(K), Matrix6d::Zero());
        grad->L.assign(static_cast<std::size_t>(K), Matrix6d::Zero());
        grad->W.assign(static_cast<std::size_t>(K), Matrix6d::Zero());

        std::vector<Matrix6d> gA(static_cast<std::size_t>(K), Matrix6d::Zero());
        for (int k = 0; k < K; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            for (long i = 0; i < n; ++i)
                gA[ks].noalias() += h(i, k) * (E.row(i).transpose() * X.row(i));
            gA[ks] /= static_cast<double>(n);
        }
        // responsibilities: dJ/dlogp then chain to logits, means, covariances
        Eigen::VectorXd qbar(n);
        for (long i = 0; i < n; ++i) qbar[i] = h.row(i).dot(q.row(i));
        double glp_total = 0.0;
        Eigen::VectorXd glp_col = Eigen::VectorXd::Zero(K);
        std::vector<Matrix6d> gSigma(static_cast<std::size_t>(K), Matrix6d::Zero());
        for (int k = 0; k < K; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            double col = 0.0;
            double gsum = 0.0;
            for (long i = 0; i < n; ++i) {
                const double glp = h(i, k) * (q(i, k) - qbar[i]);
                col += glp;
                gsum += glp;
                const Vector6d sol = sig_inv[ks] * (X.row(i).transpose() - p.mu[ks]);
                grad->mu[ks] += glp * sol;
                gSigma[ks].noalias() += (0.5 * glp) * (sol * sol.transpose());
            }
            gSigma[ks] -= (0.5 * gsum) * sig_inv[ks];
            glp_col[k] = col;
            glp_total += col;
        }
        for (int k = 0; k < K; ++k) grad->u[k] = glp_col[k] - a.pi[k] * glp_total;
        for (int k = 0; k < K; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            grad->C[ks] = (2.0 * gSigma[ks] * p.C[ks]).triangularView<Eigen::Lower>();
            grad->L[ks] = (-(gA[ks] + gA[ks].transpose()) * p.L[ks]).triangularView<Eigen::Lower>();
            grad->W[ks] = 0.5 * (gA[ks] - gA[ks].transpose());
        }
        return J;
    }
};

// Adam with cosine-decayed learning rate; returns false on NaN.
inline bool adam(const Objective& obj, Params& p, int iters, double lr0) {
    const int K = static_cast<int>(p.u.size());
    Params m, v;
    m.u = Eigen::VectorXd::Zero(K);
    v.u = Eigen::VectorXd::Zero(K);
    m.mu.assign(static_cast<std::size_t>(K), Vector6d::Zero());
    v.mu.assign(static_cast<std::size_t>(K), Vector6d::Zero());
    m.C.assign(static_cast<std::size_t>(K), Matrix6d::Zero());
    v.C.assign(static_cast<std::size_t>(K), Matrix6d::Zero());
    m.L.assign(static_cast<std::size_t>(K), Matrix6d::Zero());
    v.L.assign(static_cast<std::size_t>(K), Matrix6d::Zero());
    m.W.assign(static_cast<std::size_t>(K), Matrix6d::Zero());
    v.W.assign(static_cast<std::size_t>(K), Matrix6d::Zero());
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    Params g;
    auto step = [&](auto& par, auto& mm, auto& vv, const auto& gg, double lr, double c1, double c2) {
        mm = b1 * mm + (1.0 - b1) * gg;
        vv = (b2 * vv.array() + (1.0 - b2) * gg.array().square()).matrix();
        par -= (lr * (mm.array() / c1) / ((vv.array() / c2).sqrt() + eps)).matrix();
    };
    for (int t = 1; t <= iters; ++t) {
        const double J = obj.eval(p, &g);
        if (!std::isfinite(J)) return false;
        const double lr = lr0 * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(t - 1) / iters));
        const double c1 = 1.0 - std::pow(b1, t);
        const double c2 = 1.0 - std::pow(b2, t);
        step(p.u, m.u, v.u, g.u, lr, c1, c2);
        for (int k = 0; k < K; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            step(p.mu[ks], m.mu[ks], v.mu[ks], g.mu[ks], lr, c1, c2);
            step(p.C[ks], m.C[ks], v.C[ks], g.C[ks], lr, c1, c2);
            step(p.L[ks], m.L[ks], v.L[ks], g.L[ks], lr, c1, c2);
            step(p.W[ks], m.W[ks], v.W[ks], g.W[ks], lr, c1, c2);
        }
    }
    return std::isfinite(obj.eval(p, nullptr));
}

// Eigen-clamped Cholesky factor of max(M, floor I).
inline Matrix6d spd_factor(const Matrix6d& M, double floor_ev) {
    Eigen::SelfAdjointEigenSolver<Matrix6d> es(0.5 * (M + M.transpose()));
    Vector6d ev = es.eigenvalues().cwiseMax(floor_ev);
    const Matrix6d spd = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    Eigen::LLT<Matrix6d> llt(spd + 1e-14 * Matrix6d::Identity());
    return llt.matrixL();
}

}  // namespace seds_detail

struct SedsFitOptions {
    int K = 3;
    int retries_per_bump = 5;   // failed trials before the mat_bias bump
    int retry_budget = 15;      // total trials before giving up
    double retry_noise = 0.1;   // relative perturbation scale for retries
    double mat_bias = 1e-6;     // covariance diagonal bias; x10 per bump
    double bias_bump = 10.0;
    double path_gate = 0.02;      // meters, anywhere along the reconstruction
    double endpoint_gate = 0.005; // meters, at the end point
    double margin = 1e-6;         // eigenvalue margin of the stability certificate
    int learn_iters = 4000;
    double learning_rate = 0.03;
    std::uint64_t seed = 0;
    // test hook: replaces the gradient refinement when set
    std::function<bool(seds_detail::Params&, double /*mat_bias*/)> refine_override;
};

struct IntegrationResult {
    Trajectory trajectory;
    double arrival_time = 0.0;  // seconds; set in until_converged mode
    bool converged = false;
};

// GMR mean of the conditional P(xi'|xi): sum_k h_k(xi) A_k xi in model
// coordinates. Exactly zero at the attractor.
inline Vector6d seds_predict(const SedsModel& model, const Vector6d& state) {
    Vector6d xi;
    xi.head<3>() = state.head<3>() - model.attractor.head<3>();
    xi.tail<3>() = model.vel_scale * state.tail<3>();
    Eigen::VectorXd logw(model.K);
    for (int k = 0; k < model.K; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        Eigen::LLT<Matrix6d> llt(model.sigma[ks]);
        logw[k] = std::log(model.priors[k]) + seds_detail::log_gauss6(xi, model.mu[ks], llt);
    }
    const double mx = logw.maxCoeff();
    Eigen::VectorXd h = (logw.array() - mx).exp();
    h /= h.sum();
    Vector6d out = Vector6d::Zero();
    for (int k = 0; k < model.K; ++k) out += h[k] * (model.A[static_cast<std::size_t>(k)] * xi);
    out.tail<3>() /= model.vel_scale;
    return out;  // (dp/dt, dv/dt) in physical units
}

struct IntegrateMode {
    enum Kind { Fixed, UntilConverged } kind = Fixed;
    std::size_t n_steps = 2;     // Fixed
    double radius = 0.005;       // UntilConverged: meters around the attractor position
    std::size_t cap = 0;         // UntilConverged: maximum samples

    static IntegrateMode fixed(std::size_t n) { return {Fixed, n, 0.005, 0}; }
    static IntegrateMode until_converged(std::size_t cap, double radius = 0.005) {
        return {UntilConverged, 2, radius, cap};
    }
};

// Euler rollout at dt = 0.01 s from (start - goal, 0) in shifted coordinates.
inline IntegrationResult seds_integrate(const SedsModel& model, const Eigen::Vector3d& start,
                                        const IntegrateMode& mode) {
    constexpr double dt = 0.01;
    const Eigen::Vector3d goal = model.attractor.head<3>();
    Vector6d state;
    state.head<3>() = start;
    state.tail<3>().setZero();
    const std::size_t limit = mode.kind == IntegrateMode::Fixed ? mode.n_steps : mode.cap;
    if (limit < 2) throw std::invalid_argument("seds_integrate: need at least 2 samples");

    IntegrationResult res;
    std::vector<Eigen::Vector3d> pos;
    pos.reserve(limit);
    pos.push_back(state.head<3>());
    for (std::size_t i = 1; i < limit; ++i) {
        const Vector6d deriv = seds_predict(model, state);
        state += dt * deriv;
        if (!state.allFinite()) break;
        pos.push_back(state.head<3>());
        if (mode.kind == IntegrateMode::UntilConverged &&
            (state.head<3>() - goal).norm() <= mode.radius) {
            res.converged = true;
            res.arrival_time = static_cast<double>(i) * dt;
            break;
        }
    }
    if (mode.kind == IntegrateMode::Fixed) {
        res.converged = pos.size() == mode.n_steps;
        res.arrival_time = (static_cast<double>(pos.size()) - 1.0) * dt;
    }
    while (pos.size() < 2) pos.push_back(pos.back());
    res.trajectory = Trajectory(std::move(pos), dt);
    return res;
}

struct StabilityReport {
    std::vector<double> max_eigenvalues;  // of A_k + A_k^T
    std::vector<double> b_residuals;      // ||b_k + A_k xi*|| in model coordinates
    bool pass = false;
};

inline StabilityReport seds_stability_check(const SedsModel& model) {
    StabilityReport rep;
    rep.pass = true;
    for (int k = 0; k < model.K; ++k) {
        const Matrix6d& A = model.A[static_cast<std::size_t>(k)];
        Eigen::SelfAdjointEigenSolver<Matrix6d> es(A + A.transpose());
        const double mx = es.eigenvalues().maxCoeff();
        rep.max_eigenvalues.push_back(mx);
        // attractor is the origin of model coordinates, so b_k is identically
        // -A_k * 0; the residual is reported for auditability
        const double res = (model.implied_b(k) + A * Vector6d::Zero()).norm();
        rep.b_residuals.push_back(res);
        if (!(mx < -1e-8) || res > 1e-10) rep.pass = false;
    }
    return rep;
}

namespace seds_detail {

struct TrainingData {
    Eigen::MatrixXd X;  // N x 6 model-coordinate states
    Eigen::MatrixXd V;  // N x 6 scaled derivatives
    std::vector<long> demo_offsets;
    std::vector<long> demo_lengths;
    double vel_scale = 1.0;
    Vector6d w2 = Vector6d::Ones();
};

// The velocity block of the state is scaled by a characteristic time; the
// base ratio matches position and velocity spreads, the factor below it was
// picked on synthetic families for rollout tracking (the constraint set is
// not invariant under this scaling, so it is a modeling knob, and the retry
// ladder explores a small cycle around it).
inline constexpr double kVelScaleBase = 0.8;

inline TrainingData build_training_data(const std::vector<Trajectory>& demos,
                                        const Eigen::Vector3d& goal, double scale_factor) {
    TrainingData td;
    long total = 0;
    for (const Trajectory& d : demos) total += static_cast<long>(d.size());
    td.X.resize(total, 6);
    td.V.resize(total, 6);
    long row = 0;
    double pos_ms = 0.0, vel_ms = 0.0;
    std::vector<std::vector<Eigen::Vector3d>> vels;
    for (const Trajectory& d : demos) {
        Trajectory smooth = d;
        const double nyquist = 1.0 / (2.0 * d.dt);
        // unpinned variant: the pinned endpoints would put a step into the
        // derivative chain
        if (3.0 < nyquist) smooth = detail::lowpass_filter_unpinned(d, 3.0);
        vels.push_back(differentiate(smooth));
    }
    for (std::size_t di = 0; di < demos.size(); ++di) {
        const Trajectory& d = demos[di];
        for (std::size_t i = 0; i < d.size(); ++i) {
            pos_ms += (d.positions[i] - goal).squaredNorm();
            vel_ms += vels[di][i].squaredNorm();
        }
    }
    td.vel_scale =
        scale_factor * std::sqrt(std::max(pos_ms, 1e-12) / std::max(vel_ms, 1e-12));
    for (std::size_t di = 0; di < demos.size(); ++di) {
        const Trajectory& d = demos[di];
        const std::vector<Eigen::Vector3d>& v = vels[di];
        // acceleration from the filtered velocity, central differences
        std::vector<Eigen::Vector3d> acc(d.size());
        const std::size_t nn = d.size();
        acc[0] = (v[1] - v[0]) / d.dt;
        acc[nn - 1] = (v[nn - 1] - v[nn - 2]) / d.dt;
        for (std::size_t i = 1; i + 1 < nn; ++i) acc[i] = (v[i + 1] - v[i - 1]) / (2.0 * d.dt);
        td.demo_offsets.push_back(row);
        td.demo_lengths.push_back(static_cast<long>(nn));
        for (std::size_t i = 0; i < nn; ++i) {
            td.X.row(row).head<3>() = (d.positions[i] - goal).transpose();
            td.X.row(row).tail<3>() = td.vel_scale * v[i].transpose();
            td.V.row(row).head<3>() = v[i].transpose();
            td.V.row(row).tail<3>() = td.vel_scale * acc[i].transpose();
            ++row;
        }
    }
    const double vr = std::sqrt(td.V.leftCols<3>().array().square().mean());
    const double ar = std::sqrt(td.V.rightCols<3>().array().square().mean());
    td.w2.head<3>().setConstant(1.0 / std::max(vr * vr, 1e-12));
    td.w2.tail<3>().setConstant(1.0 / std::max(ar * ar, 1e-12));
    return td;
}

// Initialization from the 12-D joint: per-demo time-bin clustering, cluster
// moments, and per-component ridge regression for the A maps, projected onto
// the constraint parameterization.
inline Params initial_params(const TrainingData& td, int K, double bias, double margin) {
    const long n = td.X.rows();
    std::vector<int> lab(static_cast<std::size_t>(n));
    for (std::size_t di = 0; di < td.demo_offsets.size(); ++di) {
        const long off = td.demo_offsets[di];
        const long len = td.demo_lengths[di];
        for (long i = 0; i < len; ++i) {
            int b = static_cast<int>(static_cast<double>(K) * static_cast<double>(i) /
                                     static_cast<double>(len));
            lab[static_cast<std::size_t>(off + i)] = std::min(b, K - 1);
        }
    }
    Params p;
    p.u.resize(K);
    p.mu.resize(static_cast<std::size_t>(K));
    p.C.resize(static_cast<std::size_t>(K));
    p.L.resize(static_cast<std::size_t>(K));
    p.W.resize(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        std::vector<long> rows;
        for (long i = 0; i < n; ++i)
            if (lab[static_cast<std::size_t>(i)] == k) rows.push_back(i);
        if (rows.size() < 7) {
            rows.clear();
            for (long i = 0; i < n; ++i) rows.push_back(i);
        }
        Vector6d mu = Vector6d::Zero();
        for (long i : rows) mu += td.X.row(i).transpose();
        mu /= static_cast<double>(rows.size());
        Matrix6d sxx = Matrix6d::Zero();
        for (long i : rows) {
            const Vector6d c = td.X.row(i).transpose() - mu;
            sxx.noalias() += c * c.transpose();
        }
        sxx /= static_cast<double>(rows.size());
        p.u[k] = std::log(static_cast<double>(rows.size()) / static_cast<double>(n));
        p.mu[ks] = mu;
        p.C[ks] = spd_factor(sxx - bias * Matrix6d::Identity(), 1e-10);
        // ridge regression for the component's linear map
        Matrix6d G = Matrix6d::Zero();
        Matrix6d H = Matrix6d::Zero();
        for (long i : rows) {
            const Vector6d x = td.X.row(i).transpose();
            G.noalias() += x * x.transpose();
            H.noalias() += td.V.row(i).transpose() * x.transpose();
        }
        const double lam = 1e-3 * G.trace() / 6.0;
        const Matrix6d A = H * (G + lam * Matrix6d::Identity()).inverse();
        const Matrix6d sym = 0.5 * (A + A.transpose());
        p.L[ks] = spd_factor(-sym - margin * Matrix6d::Identity(), 1e-10);
        p.W[ks] = 0.5 * (A - A.transpose());
    }
    return p;
}

inline void perturb(Params& p, double scale, Rng& rng) {
    for (long i = 0; i < p.u.size(); ++i) p.u[i] += 2.0 * scale * rng.gaussian();
    for (auto& m : p.mu) {
        const double s = scale * std::max(m.norm(), 0.05);
        for (int i = 0; i < 6; ++i) m[i] += s * rng.gaussian();
    }
    auto jitter = [&](Matrix6d& M, bool lower) {
        for (int r = 0; r < 6; ++r)
            for (int c = 0; c < 6; ++c) {
                if (lower && c > r) continue;
                M(r, c) *= 1.0 + scale * rng.gaussian();
            }
    };
    for (auto& C : p.C) jitter(C, true);
    for (auto& L : p.L) jitter(L, true);
    for (auto& W : p.W) {
        Matrix6d R = Matrix6d::Zero();
        const double s = scale * std::max(W.norm(), 0.1);
        for (int r = 0; r < 6; ++r)
            for (int c = 0; c < r; ++c) {
                const double dv = s * rng.gaussian() * 0.2;
                R(r, c) = dv;
                R(c, r) = -dv;
            }
        W += R;
    }
}

inline SedsModel model_from_params(const Params& p, const Eigen::Vector3d& goal, double vel_scale,
                                   double bias, double margin) {
    const Assembled a = assemble(p, bias, margin);
    SedsModel m;
    m.K = static_cast<int>(p.u.size());
    m.attractor.head<3>() = goal;
    m.attractor.tail<3>().setZero();
    m.priors = a.pi;
    m.mu = p.mu;
    m.sigma = a.sigma;
    m.A = a.A;
    m.vel_scale = vel_scale;
    return m;
}

}  // namespace seds_detail

namespace seds_detail {

struct GateCheck {
    double path = std::numeric_limits<double>::infinity();
    double endpoint = std::numeric_limits<double>::infinity();
    bool finite = false;
};

inline GateCheck check_gates(const SedsModel& model, const Trajectory& first) {
    GateCheck g;
    const IntegrationResult rec =
        seds_integrate(model, first.front(), IntegrateMode::fixed(first.size()));
    if (rec.trajectory.size() != first.size()) return g;
    g.finite = true;
    g.path = 0.0;
    for (std::size_t i = 0; i < first.size(); ++i)
        g.path = std::max(g.path, (rec.trajectory.positions[i] - first.positions[i]).norm());
    g.endpoint = (rec.trajectory.back() - first.back()).norm();
    return g;
}

}  // namespace seds_detail

// Constraint-embedded SEDS estimation. Pipeline: build goal-shifted samples,
// initialize from the 12-D joint, refine the weighted MSE by Adam on the
// parameterization that satisfies the stability constraints at every iterate,
// keeping the iterate that best reconstructs the first demonstration (the
// one-step objective and the rollout quality are not the same thing), and
// accept only if that reconstruction stays within the 2 cm path / 5 mm
// end-point gates. Failed trials restart from a perturbed initialization and
// step through a small ladder of velocity-scale factors and iteration
// budgets; every retries_per_bump failures the covariance bias is multiplied
// by bias_bump. Deterministic for fixed inputs, options and seed.
inline SedsFitResult seds_fit(const std::vector<Trajectory>& demos, const Eigen::Vector3d& goal,
                              const SedsFitOptions& opts) {
    if (demos.empty()) throw std::invalid_argument("seds_fit: no demonstrations");
    if (opts.K < 1) throw std::invalid_argument("seds_fit: K must be >= 1");
    for (const Trajectory& d : demos)
        if ((d.back() - goal).norm() > 0.05)
            throw std::invalid_argument("seds_fit: demonstration does not end near the goal");

    static constexpr std::array<double, 5> kScaleCycle = {1.0, 0.9375, 1.125, 0.875, 1.0625};

    SedsFitResult result;
    double mat_bias = opts.mat_bias;
    int failures = 0;
    for (int trial = 0; trial < opts.retry_budget; ++trial) {
        result.report.trials = trial + 1;
        const double scale_factor =
            seds_detail::kVelScaleBase * kScaleCycle[static_cast<std::size_t>(trial) % kScaleCycle.size()];
        const int iters = opts.learn_iters + 2000 * (trial / static_cast<int>(kScaleCycle.size()));
        const seds_detail::TrainingData td =
            seds_detail::build_training_data(demos, goal, scale_factor);
        if (td.X.rows() <= 2 * opts.K + 12)
            throw std::invalid_argument("seds_fit: too few samples for K");
        seds_detail::Params p = seds_detail::initial_params(td, opts.K, mat_bias, opts.margin);
        if (trial >= static_cast<int>(kScaleCycle.size())) {
            Rng rng(derive_seed(opts.seed, 0x5eedULL, static_cast<std::uint64_t>(trial)));
            seds_detail::perturb(p, opts.retry_noise, rng);
        }

        bool solver_ok = true;
        std::string gate;
        seds_detail::GateCheck best;
        seds_detail::Params best_p = p;
        if (opts.refine_override) {
            solver_ok = opts.refine_override(p, mat_bias);
            if (solver_ok)
                best = seds_detail::check_gates(
                    seds_detail::model_from_params(p, goal, td.vel_scale, mat_bias, opts.margin),
                    demos.front());
            best_p = p;
        } else {
            seds_detail::Objective obj{td.X, td.V, td.w2, mat_bias, opts.margin};
            best = seds_detail::check_gates(
                seds_detail::model_from_params(p, goal, td.vel_scale, mat_bias, opts.margin),
                demos.front());
            // warm-restart chunks with rollout checkpoints between them
            const int chunk = 250;
            for (int done = 0; done < iters && solver_ok; done += chunk) {
                const double lr = opts.learning_rate * 0.5 *
                                  (1.0 + std::cos(M_PI * static_cast<double>(done) / iters));
                solver_ok = seds_detail::adam(obj, p, chunk, lr);
                if (!solver_ok) break;
                const seds_detail::GateCheck g = seds_detail::check_gates(
                    seds_detail::model_from_params(p, goal, td.vel_scale, mat_bias, opts.margin),
                    demos.front());
                if (g.finite && std::max(g.path / opts.path_gate, g.endpoint / opts.endpoint_gate) <
                                    std::max(best.path / opts.path_gate,
                                             best.endpoint / opts.endpoint_gate)) {
                    best = g;
                    best_p = p;
                }
            }
        }

        if (!solver_ok || !best.finite) {
            gate = "nan";
        } else if (best.path > opts.path_gate) {
            gate = "path";
        } else if (best.endpoint > opts.endpoint_gate) {
            gate = "endpoint";
        }
        result.report.last_gate = gate;
        result.report.path_residual = best.finite ? best.path : 0.0;
        result.report.endpoint_residual = best.finite ? best.endpoint : 0.0;
        result.report.final_mat_bias = mat_bias;
        if (gate.empty()) {
            result.model =
                seds_detail::model_from_params(best_p, goal, td.vel_scale, mat_bias, opts.margin);
            return result;
        }
        ++failures;
        if (failures % opts.retries_per_bump == 0) mat_bias *= opts.bias_bump;
        result.report.final_mat_bias = mat_bias;
    }
    return result;  // budget exhausted; report carries the last violated gate
}

inline nlohmann::json to_json(const SedsModel& m) {
    nlohmann::json j;
    j["K"] = m.K;
    j["attractor"] = std::vector<double>(m.attractor.data(), m.attractor.data() + 6);
    j["pi"] = std::vector<double>(m.priors.data(), m.priors.data() + m.priors.size());
    j["vel_scale"] = m.vel_scale;
    auto mat = [](const Matrix6d& M) {
        nlohmann::json rows = nlohmann::json::array();
        for (int r = 0; r < 6; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (int c = 0; c < 6; ++c) row.push_back(M(r, c));
            rows.push_back(row);
        }
        return rows;
    };
    nlohmann::json mus = nlohmann::json::array(), sigmas = nlohmann::json::array(),
                   As = nlohmann::json::array();
    for (int k = 0; k < m.K; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        mus.push_back(std::vector<double>(m.mu[ks].data(), m.mu[ks].data() + 6));
        sigmas.push_back(mat(m.sigma[ks]));
        As.push_back(mat(m.A[ks]));
    }
    j["mu_in"] = mus;
    j["sigma_in"] = sigmas;
    j["A"] = As;
    return j;
}

inline nlohmann::json to_json(const SedsFailureReport& r) {
    return {{"trials", r.trials},
            {"last_gate", r.last_gate},
            {"last_residuals", {{"path", r.path_residual}, {"endpoint", r.endpoint_residual}}},
            {"final_mat_bias", r.final_mat_bias}};
}

inline SedsModel seds_from_json(const nlohmann::json& j) {
    SedsModel m;
    m.K = j.at("K").get<int>();
    for (int i = 0; i < 6; ++i) m.attractor[i] = j.at("attractor").at(i).get<double>();
    const auto pi = j.at("pi").get<std::vector<double>>();
    m.priors = Eigen::Map<const Eigen::VectorXd>(pi.data(), static_cast<long>(pi.size()));
    m.vel_scale = j.at("vel_scale").get<double>();
    for (int k = 0; k < m.K; ++k) {
        Vector6d mu;
        for (int i = 0; i < 6; ++i) mu[i] = j.at("mu_in").at(k).at(i).get<double>();
        m.mu.push_back(mu);
        Matrix6d S, A;
        for (int r = 0; r < 6; ++r)
            for (int c = 0; c < 6; ++c) {
                S(r, c) = j.at("sigma_in").at(k).at(r).at(c).get<double>();
                A(r, c) = j.at("A").at(k).at(r).at(c).get<double>();
            }
        m.sigma.push_back(S);
        m.A.push_back(A);
    }
    return m;
}

}  // namespace traj
