#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "traj/trajectory.hpp"

namespace traj {

// Gains and learning settings for the critically damped attractor system.
// beta_z = alpha_z/4 keeps the system critically damped; the gains act per
// sampling step of the 100 Hz data (the goal-ramp increment per step is
// (dt/T)(g-s), which only closes the ramp with unit integration steps).
struct DmpConfig {
    double alpha_z = 0.75;
    double beta_z = 0.1875;
    double alpha_g = 1.0;  // listed constant; not used by the update equations
    double tau = 1.0;
    int K = 11;               // kernel count
    double kappa = 1.1;       // total-width constant, sigma = kappa/K
    int learn_iters = 200;
    double mu = 0.1;          // delta-rule learning rate

    void validate() const {
        if (K < 2) throw std::invalid_argument("DmpConfig: K must be >= 2");
        if (!(kappa > 0.0)) throw std::invalid_argument("DmpConfig: kappa must be positive");
        if (!(mu > 0.0)) throw std::invalid_argument("DmpConfig: mu must be positive");
        if (learn_iters < 1) throw std::invalid_argument("DmpConfig: learn_iters must be >= 1");
    }
};

// Paper-reported optimum on the kappa grid: 0.7 up to ten kernels, 1.1 above.
inline double default_kappa(int K) { return K > 10 ? 1.1 : 0.7; }

struct DmpModel {
    double alpha_z = 0.75;
    double beta_z = 0.1875;
    double tau = 1.0;
    int K = 0;
    double kappa = 0.0;
    Eigen::VectorXd centers;            // K normalized-time centers in [0,1]
    double sigma = 0.0;                 // kappa / K
    Eigen::Matrix<double, 3, Eigen::Dynamic> weights;  // one row per spatial dimension
    Eigen::Vector3d start = Eigen::Vector3d::Zero();
    Eigen::Vector3d goal = Eigen::Vector3d::Zero();
    double T = 1.0;    // seconds
    double dt = 0.01;  // sampling step the gains are tied to

    int param_count() const { return 3 * K; }
};

namespace detail {

inline Eigen::VectorXd dmp_centers(int K) {
    Eigen::VectorXd c(K);
    for (int i = 0; i < K; ++i) c[i] = static_cast<double>(i) / (K - 1.0);
    return c;
}

// Normalized kernel mix at phase x for one weight row.
inline double forcing_term(const Eigen::VectorXd& centers, double sigma,
                           const Eigen::RowVectorXd& w, double x) {
    double num = 0.0, den = 0.0;
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int i = 0; i < centers.size(); ++i) {
        double d = x - centers[i];
        double psi = std::exp(-d * d * inv2s2);
        num += psi * w[i];
        den += psi;
    }
    return num / den;
}

}  // namespace detail

// Explicit Euler rollout of the three independent attractor systems. The
// returned trajectory has n_steps samples spanning [0, model.T]; the step
// h = T/(n_steps-1) is expressed in units of the model's sampling interval,
// so integrating with n_steps equal to the demonstration length reproduces
// one update per recorded sample. The goal ramp r runs linearly from start
// to goal over T and is clamped at the goal.
inline Trajectory dmp_integrate(const DmpModel& model, const Eigen::Vector3d& start,
                                const Eigen::Vector3d& goal, std::size_t n_steps) {
    if (n_steps < 2) throw std::invalid_argument("dmp_integrate: n_steps must be >= 2");
    const double h = model.T / (static_cast<double>(n_steps) - 1.0);
    const double scale = h / model.dt;  // unit steps when n_steps matches the demo
    std::vector<Eigen::Vector3d> out(n_steps);
    Eigen::Vector3d y = start;
    Eigen::Vector3d z = Eigen::Vector3d::Zero();
    Eigen::Vector3d r = start;
    const Eigen::Vector3d dr = scale * (model.dt / model.T) * (goal - start) / model.tau;
    out[0] = y;
    for (std::size_t n = 1; n < n_steps; ++n) {
        const double x = static_cast<double>(n - 1) / (static_cast<double>(n_steps) - 1.0);
        for (int d = 0; d < 3; ++d) {
            const double f = detail::forcing_term(model.centers, model.sigma,
                                                  model.weights.row(d), x);
            z[d] += scale * (model.alpha_z * (model.beta_z * (r[d] - y[d]) - z[d]) + f) / model.tau;
            y[d] += scale * z[d] / model.tau;
            double rn = r[d] + dr[d];
            if ((goal[d] >= start[d] && rn > goal[d]) || (goal[d] < start[d] && rn < goal[d]))
                rn = goal[d];
            r[d] = rn;
        }
        out[n] = y;
    }
    return Trajectory(std::move(out), h);
}

// Delta-rule encoding: weights start at zero; each round integrates the
// current model over the demonstration grid and nudges every weight by the
// position error at its kernel center (nearest sample).
inline DmpModel dmp_encode(const Trajectory& demo, const DmpConfig& cfg) {
    cfg.validate();
    demo.validate();
    const std::size_t n = demo.size();
    DmpModel model;
    model.alpha_z = cfg.alpha_z;
    model.beta_z = cfg.beta_z;
    model.tau = cfg.tau;
    model.K = cfg.K;
    model.kappa = cfg.kappa;
    model.centers = detail::dmp_centers(cfg.K);
    model.sigma = cfg.kappa / cfg.K;
    model.weights = Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, cfg.K);
    model.start = demo.front();
    model.goal = demo.back();
    model.T = demo.duration();
    model.dt = demo.dt;

    std::vector<std::size_t> idx(cfg.K);
    for (int i = 0; i < cfg.K; ++i)
        idx[i] = static_cast<std::size_t>(std::llround(model.centers[i] * (static_cast<double>(n) - 1.0)));

    for (int it = 0; it < cfg.learn_iters; ++it) {
        const Trajectory roll = dmp_integrate(model, model.start, model.goal, n);
        for (int i = 0; i < cfg.K; ++i) {
            const Eigen::Vector3d err = demo.positions[idx[i]] - roll.positions[idx[i]];
            model.weights.col(i) += cfg.mu * err;
        }
    }
    return model;
}

struct InfeasibleError : std::runtime_error {
    double residual;
    explicit InfeasibleError(double res)
        : std::runtime_error("minimal-norm coefficient system is infeasible (residual " +
                             std::to_string(res) + ")"),
          residual(res) {}
};

// Least-norm coefficients alpha with sum(alpha) = 1 and
// sum(alpha_n * g_n) = g_new on the varying dimensions. Solved as the
// minimum-norm solution of the stacked under-determined system.
inline Eigen::VectorXd minimal_norm_coefficients(const std::vector<Eigen::Vector3d>& goals,
                                                 const Eigen::Vector3d& new_goal,
                                                 const std::array<bool, 3>& varying) {
    if (goals.empty()) throw std::invalid_argument("minimal_norm_coefficients: no goals");
    int nvar = 0;
    for (bool v : varying) nvar += v ? 1 : 0;
    if (nvar == 0) throw std::invalid_argument("minimal_norm_coefficients: no varying dimension");
    const int m = static_cast<int>(goals.size());
    Eigen::MatrixXd C(nvar + 1, m);
    Eigen::VectorXd rhs(nvar + 1);
    int r = 0;
    for (int d = 0; d < 3; ++d) {
        if (!varying[d]) continue;
        for (int j = 0; j < m; ++j) C(r, j) = goals[j][d];
        rhs[r] = new_goal[d];
        ++r;
    }
    C.row(nvar).setOnes();
    rhs[nvar] = 1.0;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(C);
    const Eigen::VectorXd alpha = cod.solve(rhs);
    const double residual = (C * alpha - rhs).norm();
    if (residual > 1e-9 * (1.0 + rhs.norm())) throw InfeasibleError(residual);
    return alpha;
}

// Weight-vector averaging: demonstrations are treated as shifted to y0 = 0,
// so the coefficient solve works on goal offsets g - s. Varying dimensions
// use the minimal-norm coefficients, the remaining dimensions an unweighted
// average. Duration is the alpha-weighted demo duration.
inline DmpModel dmp_generalize(const std::vector<DmpModel>& encodings,
                               const Eigen::Vector3d& new_goal_offset,
                               const std::array<bool, 3>& varying) {
    if (encodings.empty()) throw std::invalid_argument("dmp_generalize: no encodings");
    const DmpModel& first = encodings.front();
    for (const DmpModel& m : encodings)
        if (m.K != first.K || m.kappa != first.kappa || m.dt != first.dt)
            throw std::invalid_argument("dmp_generalize: encodings must share K, kappa, dt");

    std::vector<Eigen::Vector3d> offsets;
    offsets.reserve(encodings.size());
    for (const DmpModel& m : encodings) offsets.push_back(m.goal - m.start);
    const Eigen::VectorXd alpha = minimal_norm_coefficients(offsets, new_goal_offset, varying);

    DmpModel out = first;
    out.weights.setZero();
    out.start.setZero();
    out.goal = new_goal_offset;
    const double uniform = 1.0 / static_cast<double>(encodings.size());
    double duration = 0.0;
    for (std::size_t j = 0; j < encodings.size(); ++j) {
        for (int d = 0; d < 3; ++d) {
            const double c = varying[d] ? alpha[static_cast<int>(j)] : uniform;
            out.weights.row(d) += c * encodings[j].weights.row(d);
        }
        duration += alpha[static_cast<int>(j)] * encodings[j].T;
    }
    out.T = duration;
    return out;
}

inline nlohmann::json to_json(const DmpModel& m) {
    nlohmann::json j;
    j["alpha_z"] = m.alpha_z;
    j["beta_z"] = m.beta_z;
    j["tau"] = m.tau;
    j["K"] = m.K;
    j["kappa"] = m.kappa;
    j["centers"] = std::vector<double>(m.centers.data(), m.centers.data() + m.centers.size());
    j["sigma"] = m.sigma;
    nlohmann::json w = nlohmann::json::array();
    for (int d = 0; d < 3; ++d) {
        nlohmann::json row = nlohmann::json::array();
        for (int i = 0; i < m.K; ++i) row.push_back(m.weights(d, i));
        w.push_back(row);
    }
    j["weights"] = w;
    j["start"] = {m.start.x(), m.start.y(), m.start.z()};
    j["goal"] = {m.goal.x(), m.goal.y(), m.goal.z()};
    j["T"] = m.T;
    j["dt"] = m.dt;
    return j;
}

inline DmpModel dmp_from_json(const nlohmann::json& j) {
    DmpModel m;
    m.alpha_z = j.at("alpha_z").get<double>();
    m.beta_z = j.at("beta_z").get<double>();
    m.tau = j.at("tau").get<double>();
    m.K = j.at("K").get<int>();
    m.kappa = j.at("kappa").get<double>();
    const auto c = j.at("centers").get<std::vector<double>>();
    m.centers = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<long>(c.size()));
    m.sigma = j.at("sigma").get<double>();
    m.weights.resize(3, m.K);
    for (int d = 0; d < 3; ++d)
        for (int i = 0; i < m.K; ++i) m.weights(d, i) = j.at("weights").at(d).at(i).get<double>();
    for (int d = 0; d < 3; ++d) {
        m.start[d] = j.at("start").at(d).get<double>();
        m.goal[d] = j.at("goal").at(d).get<double>();
    }
    m.T = j.at("T").get<double>();
    m.dt = j.at("dt").get<double>();
    return m;
}

}  // namespace traj
