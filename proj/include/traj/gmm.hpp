#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "traj/rng.hpp"
#include "traj/trajectory.hpp"

namespace traj {

struct Gaussian {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
};

struct Gmm {
    Eigen::VectorXd weights;           // simplex
    std::vector<Gaussian> components;  // K entries, dimension D
    int dim = 0;

    int K() const { return static_cast<int>(components.size()); }
};

struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConditioningError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

// log N(x; mu, Sigma) via Cholesky; throws FitError on a non-PD covariance.
inline double log_gauss(const Eigen::VectorXd& x, const Gaussian& g,
                        const Eigen::LLT<Eigen::MatrixXd>& llt) {
    const long d = x.size();
    const Eigen::VectorXd sol = llt.matrixL().solve(x - g.mu);
    double logdet = 0.0;
    for (long i = 0; i < d; ++i) logdet += std::log(llt.matrixL()(i, i));
    return -0.5 * sol.squaredNorm() - logdet - 0.5 * static_cast<double>(d) * std::log(2.0 * M_PI);
}

inline Eigen::LLT<Eigen::MatrixXd> cholesky_or_throw(const Eigen::MatrixXd& sigma,
                                                     const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) throw FitError(what);
    return llt;
}

}  // namespace detail

enum class EmInit {
    TimeBins,  // equal bins over dimension 0; for time-indexed samples
    KMeansPP,  // seeded k-means++ assignment
};

struct EmOptions {
    int max_iters = 200;
    double tol = 1e-8;  // absolute log-likelihood improvement
    EmInit init = EmInit::TimeBins;
};

namespace detail {

inline std::vector<int> init_labels_time_bins(const Eigen::MatrixXd& data, int K) {
    const long n = data.rows();
    const double lo = data.col(0).minCoeff();
    const double hi = data.col(0).maxCoeff();
    const double span = std::max(hi - lo, 1e-12);
    std::vector<int> lab(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        int b = static_cast<int>(static_cast<double>(K) * (data(i, 0) - lo) / span);
        lab[static_cast<std::size_t>(i)] = std::min(b, K - 1);
    }
    return lab;
}

inline std::vector<int> init_labels_kmeanspp(const Eigen::MatrixXd& data, int K,
                                             std::uint64_t seed) {
    const long n = data.rows();
    Rng rng(derive_seed(seed, 0x6b6d6575ULL));
    std::vector<Eigen::VectorXd> centers;
    centers.push_back(data.row(static_cast<long>(rng.index(static_cast<std::size_t>(n)))));
    Eigen::VectorXd d2(n);
    for (int k = 1; k < K; ++k) {
        double total = 0.0;
        for (long i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers)
                best = std::min(best, (data.row(i).transpose() - c).squaredNorm());
            d2[i] = best;
            total += best;
        }
        double u = rng.uniform() * total;
        long pick = n - 1;
        double acc = 0.0;
        for (long i = 0; i < n; ++i) {
            acc += d2[i];
            if (acc >= u) { pick = i; break; }
        }
        centers.push_back(data.row(pick));
    }
    std::vector<int> lab(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        int best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) {
            double d = (data.row(i).transpose() - centers[static_cast<std::size_t>(k)]).squaredNorm();
            if (d < bd) { bd = d; best = k; }
        }
        lab[static_cast<std::size_t>(i)] = best;
    }
    return lab;
}

inline Gmm moments_from_labels(const Eigen::MatrixXd& data, const std::vector<int>& lab, int K,
                               double epsilon) {
    const long n = data.rows();
    const long d = data.cols();
    Gmm g;
    g.dim = static_cast<int>(d);
    g.weights.resize(K);
    g.components.resize(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        std::vector<long> rows;
        for (long i = 0; i < n; ++i)
            if (lab[static_cast<std::size_t>(i)] == k) rows.push_back(i);
        // a starved bin grabs everything; EM reassigns from there
        if (rows.size() < 2) {
            rows.clear();
            for (long i = 0; i < n; ++i) rows.push_back(i);
        }
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
        for (long i : rows) mu += data.row(i).transpose();
        mu /= static_cast<double>(rows.size());
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
        for (long i : rows) {
            const Eigen::VectorXd c = data.row(i).transpose() - mu;
            cov += c * c.transpose();
        }
        cov /= static_cast<double>(rows.size());
        cov.diagonal().array() += std::max(epsilon, 1e-10);
        g.weights[k] = static_cast<double>(rows.size()) / static_cast<double>(n);
        g.components[static_cast<std::size_t>(k)] = {mu, cov};
    }
    g.weights /= g.weights.sum();
    return g;
}

}  // namespace detail

// Standard EM to a local optimum. After every M-step, epsilon is added to
// each covariance diagonal. Stops when the log-likelihood improves by less
// than tol or after max_iters. Deterministic given the seed.
inline Gmm em_fit(const Eigen::MatrixXd& data, int K, double epsilon, std::uint64_t seed,
                  const EmOptions& opts = {}, std::vector<double>* ll_trace = nullptr) {
    const long n = data.rows();
    const long d = data.cols();
    if (K < 1) throw std::invalid_argument("em_fit: K must be >= 1");
    if (n <= K) throw FitError("em_fit: needs more samples than components");
    if (epsilon < 0.0) throw std::invalid_argument("em_fit: epsilon must be >= 0");

    const std::vector<int> lab = opts.init == EmInit::TimeBins
                                     ? detail::init_labels_time_bins(data, K)
                                     : detail::init_labels_kmeanspp(data, K, seed);
    Gmm g = detail::moments_from_labels(data, lab, K, epsilon);

    Eigen::MatrixXd logp(n, K);
    Eigen::MatrixXd resp(n, K);
    double ll_prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < opts.max_iters; ++it) {
        // E-step in log space
        for (int k = 0; k < K; ++k) {
            const auto llt = detail::cholesky_or_throw(g.components[static_cast<std::size_t>(k)].sigma,
                                                       "em_fit: degenerate component covariance");
            const double lw = std::log(g.weights[k]);
            for (long i = 0; i < n; ++i)
                logp(i, k) = lw + detail::log_gauss(data.row(i).transpose(),
                                                    g.components[static_cast<std::size_t>(k)], llt);
        }
        double ll = 0.0;
        for (long i = 0; i < n; ++i) {
            const double mx = logp.row(i).maxCoeff();
            const double lse = mx + std::log((logp.row(i).array() - mx).exp().sum());
            ll += lse;
            resp.row(i) = (logp.row(i).array() - lse).exp();
        }
        if (ll_trace) ll_trace->push_back(ll);
        // M-step
        for (int k = 0; k < K; ++k) {
            const double nk = resp.col(k).sum();
            if (nk < 1e-12) throw FitError("em_fit: component starved");
            Eigen::VectorXd mu = (data.transpose() * resp.col(k)) / nk;
            Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
            for (long i = 0; i < n; ++i) {
                const Eigen::VectorXd c = data.row(i).transpose() - mu;
                cov += resp(i, k) * c * c.transpose();
            }
            cov /= nk;
            cov.diagonal().array() += epsilon;
            g.weights[k] = nk / static_cast<double>(n);
            g.components[static_cast<std::size_t>(k)] = {std::move(mu), std::move(cov)};
        }
        g.weights /= g.weights.sum();
        if (std::abs(ll - ll_prev) < opts.tol) break;
        ll_prev = ll;
    }
    for (int k = 0; k < K; ++k)
        detail::cholesky_or_throw(g.components[static_cast<std::size_t>(k)].sigma,
                                  "em_fit: covariance not PD after regularization");
    return g;
}

// Gaussian mixture regression: the conditional distribution of out_dims given
// x_in on in_dims, collapsed to a single Gaussian by moment matching.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> gmr_condition(const Gmm& g,
                                                                 const std::vector<int>& in_dims,
                                                                 const std::vector<int>& out_dims,
                                                                 const Eigen::VectorXd& x_in) {
    const int K = g.K();
    const int ni = static_cast<int>(in_dims.size());
    const int no = static_cast<int>(out_dims.size());
    if (x_in.size() != ni) throw std::invalid_argument("gmr_condition: x_in size mismatch");
    for (int a : in_dims)
        for (int b : out_dims)
            if (a == b) throw std::invalid_argument("gmr_condition: in/out dims overlap");

    Eigen::VectorXd logw(K);
    std::vector<Eigen::VectorXd> cmu(static_cast<std::size_t>(K));
    std::vector<Eigen::MatrixXd> ccov(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        const Gaussian& comp = g.components[static_cast<std::size_t>(k)];
        Eigen::MatrixXd Sii(ni, ni), Soi(no, ni), Soo(no, no);
        Eigen::VectorXd mi(ni), mo(no);
        for (int a = 0; a < ni; ++a) {
            mi[a] = comp.mu[in_dims[static_cast<std::size_t>(a)]];
            for (int b = 0; b < ni; ++b)
                Sii(a, b) = comp.sigma(in_dims[static_cast<std::size_t>(a)],
                                       in_dims[static_cast<std::size_t>(b)]);
        }
        for (int a = 0; a < no; ++a) {
            mo[a] = comp.mu[out_dims[static_cast<std::size_t>(a)]];
            for (int b = 0; b < ni; ++b)
                Soi(a, b) = comp.sigma(out_dims[static_cast<std::size_t>(a)],
                                       in_dims[static_cast<std::size_t>(b)]);
            for (int b = 0; b < no; ++b)
                Soo(a, b) = comp.sigma(out_dims[static_cast<std::size_t>(a)],
                                       out_dims[static_cast<std::size_t>(b)]);
        }
        Eigen::LLT<Eigen::MatrixXd> llt(Sii);
        if (llt.info() != Eigen::Success)
            throw ConditioningError("gmr_condition: singular input-block covariance");
        Gaussian marg{mi, Sii};
        logw[k] = std::log(g.weights[k]) + detail::log_gauss(x_in, marg, llt);
        const Eigen::MatrixXd gain = llt.solve(Soi.transpose()).transpose();  // Soi * Sii^-1
        cmu[static_cast<std::size_t>(k)] = mo + gain * (x_in - mi);
        ccov[static_cast<std::size_t>(k)] = Soo - gain * Soi.transpose();
    }
    const double mx = logw.maxCoeff();
    Eigen::VectorXd h = (logw.array() - mx).exp();
    h /= h.sum();

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(no);
    for (int k = 0; k < K; ++k) mean += h[k] * cmu[static_cast<std::size_t>(k)];
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(no, no);
    for (int k = 0; k < K; ++k) {
        const Eigen::VectorXd& m = cmu[static_cast<std::size_t>(k)];
        cov += h[k] * (ccov[static_cast<std::size_t>(k)] + m * m.transpose());
    }
    cov -= mean * mean.transpose();
    cov = 0.5 * (cov + cov.transpose());
    return {mean, cov};
}

// Joint (t, x, y, z) samples of a trajectory, time in seconds.
inline Eigen::MatrixXd time_space_samples(const Trajectory& t) {
    Eigen::MatrixXd data(static_cast<long>(t.size()), 4);
    for (std::size_t i = 0; i < t.size(); ++i) {
        data(static_cast<long>(i), 0) = static_cast<double>(i) * t.dt;
        data.row(static_cast<long>(i)).tail<3>() = t.positions[i].transpose();
    }
    return data;
}

// Time-based GMR encoding: a 4-D mixture over (t, x, y, z).
inline Gmm tbgmr_encode(const Trajectory& t, int K, double epsilon,
                        const EmOptions& opts = {}) {
    EmOptions o = opts;
    o.init = EmInit::TimeBins;
    return em_fit(time_space_samples(t), K, epsilon, 0, o);
}

// Conditioning on the time dimension at each timestamp. Returns the
// predicted positions plus the per-sample conditional covariance.
inline std::pair<Trajectory, std::vector<Eigen::Matrix3d>> tbgmr_reconstruct(
    const Gmm& g, const std::vector<double>& timestamps) {
    if (g.dim != 4) throw std::invalid_argument("tbgmr_reconstruct: mixture must be 4-D");
    if (timestamps.size() < 2) throw std::invalid_argument("tbgmr_reconstruct: need >= 2 timestamps");
    std::vector<Eigen::Vector3d> pos(timestamps.size());
    std::vector<Eigen::Matrix3d> cov(timestamps.size());
    Eigen::VectorXd x(1);
    for (std::size_t i = 0; i < timestamps.size(); ++i) {
        x[0] = timestamps[i];
        auto [m, c] = gmr_condition(g, {0}, {1, 2, 3}, x);
        pos[i] = m;
        cov[i] = c;
    }
    const double dt = (timestamps.back() - timestamps.front()) /
                      (static_cast<double>(timestamps.size()) - 1.0);
    return {Trajectory(std::move(pos), dt), std::move(cov)};
}

// Unified mixture schema: a plain Gmm serializes with P = 1.
inline nlohmann::json to_json(const Gmm& g) {
    nlohmann::json j;
    j["K"] = g.K();
    j["D"] = g.dim;
    j["P"] = 1;
    j["pi"] = std::vector<double>(g.weights.data(), g.weights.data() + g.weights.size());
    nlohmann::json frame = nlohmann::json::array();
    for (const Gaussian& c : g.components) {
        nlohmann::json comp;
        comp["mu"] = std::vector<double>(c.mu.data(), c.mu.data() + c.mu.size());
        nlohmann::json rows = nlohmann::json::array();
        for (long r = 0; r < c.sigma.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (long cc = 0; cc < c.sigma.cols(); ++cc) row.push_back(c.sigma(r, cc));
            rows.push_back(row);
        }
        comp["sigma"] = rows;
        frame.push_back(comp);
    }
    j["frames"] = nlohmann::json::array({frame});
    return j;
}

inline Gmm gmm_from_json(const nlohmann::json& j) {
    Gmm g;
    g.dim = j.at("D").get<int>();
    const auto pi = j.at("pi").get<std::vector<double>>();
    g.weights = Eigen::Map<const Eigen::VectorXd>(pi.data(), static_cast<long>(pi.size()));
    for (const auto& comp : j.at("frames").at(0)) {
        Gaussian c;
        const auto mu = comp.at("mu").get<std::vector<double>>();
        c.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<long>(mu.size()));
        c.sigma.resize(g.dim, g.dim);
        for (int r = 0; r < g.dim; ++r)
            for (int cc = 0; cc < g.dim; ++cc)
                c.sigma(r, cc) = comp.at("sigma").at(r).at(cc).get<double>();
        g.components.push_back(std::move(c));
    }
    return g;
}

}  // namespace traj
