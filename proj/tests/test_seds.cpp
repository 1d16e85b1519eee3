#include <gtest/gtest.h>

#include "traj/metrics.hpp"
#include "traj/rng.hpp"
#include "traj/seds.hpp"

using namespace traj;

namespace {

SedsModel hand_model(const Matrix6d& A, const Eigen::Vector3d& goal = Eigen::Vector3d::Zero()) {
    SedsModel m;
    m.K = 1;
    m.attractor.head<3>() = goal;
    m.priors = Eigen::VectorXd::Ones(1);
    m.mu = {Vector6d::Zero()};
    m.sigma = {Matrix6d::Identity()};
    m.A = {A};
    m.vel_scale = 1.0;
    return m;
}

Trajectory decelerating_line(const Eigen::Vector3d& from, const Eigen::Vector3d& to,
                             std::size_t n) {
    std::vector<Eigen::Vector3d> pos(n);
    const double T = (static_cast<double>(n) - 1.0) * 0.01;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = static_cast<double>(i) * 0.01 / T;
        const double m = s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
        pos[i] = (1.0 - m) * from + m * to;
    }
    return Trajectory(std::move(pos), 0.01);
}

std::vector<Trajectory> arc_family(int reps, std::uint64_t seed,
                                   const Eigen::Vector3d& target = {0.0, 0.3, 0.0}) {
    Rng rng(seed);
    std::vector<Trajectory> demos;
    for (int r = 0; r < reps; ++r) {
        const double T = 0.8 * (1.0 + 0.04 * rng.gaussian());
        const std::size_t n = static_cast<std::size_t>(std::llround(T / 0.01)) + 1;
        const double Tn = (static_cast<double>(n) - 1.0) * 0.01;
        const Eigen::Vector3d ds(0.004 * rng.gaussian(), 0.004 * rng.gaussian(), 0.0);
        const Eigen::Vector3d de(0.004 * rng.gaussian(), 0.004 * rng.gaussian(), 0.0);
        std::vector<Eigen::Vector3d> pos(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double s = static_cast<double>(i) * 0.01 / Tn;
            const double m = s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
            pos[i] = m * target;
            pos[i].z() += 0.08 * std::sin(M_PI * m);
            pos[i] += (1.0 - m) * ds + m * de;
        }
        demos.emplace_back(std::move(pos), 0.01);
    }
    return demos;
}

}  // namespace

TEST(SedsParamCount, MatchesClosedForm) {
    EXPECT_EQ(seds_param_count(1), 29);
    EXPECT_EQ(seds_param_count(3), 87);
    EXPECT_EQ(seds_param_count(6), 174);
    EXPECT_EQ(param_count(ModelKind::Seds, 3), 87);
}

TEST(SedsPredict, ZeroAtTheAttractor) {
    Matrix6d A = -Matrix6d::Identity();
    const SedsModel m = hand_model(A, {0.2, -0.1, 0.3});
    EXPECT_EQ(seds_predict(m, m.attractor).norm(), 0.0);
}

TEST(SedsPredict, SingleLinearComponent) {
    const SedsModel m = hand_model(-Matrix6d::Identity());
    Vector6d state;
    state << 1, 0, 0, 0, 0, 0;
    const Vector6d deriv = seds_predict(m, state);
    Vector6d expect;
    expect << -1, 0, 0, 0, 0, 0;
    EXPECT_NEAR((deriv - expect).norm(), 0.0, 1e-12);
}

TEST(SedsPredict, VelocityScaleRoundTrips) {
    // A = -I in model coordinates, lambda = 0.5: physically dv/dt = -v/...
    SedsModel m = hand_model(-Matrix6d::Identity());
    m.vel_scale = 0.5;
    Vector6d state;
    state << 0.2, 0, 0, 0.1, 0, 0;
    const Vector6d deriv = seds_predict(m, state);
    // model xi = (0.2, 0.05): out = (-0.2, -0.05); physical dv = -0.05/0.5
    EXPECT_NEAR(deriv[0], -0.2, 1e-12);
    EXPECT_NEAR(deriv[3], -0.1, 1e-12);
}

TEST(SedsIntegrate, LinearStableSystemApproachesMonotonically) {
    const SedsModel m = hand_model(-Matrix6d::Identity());
    const IntegrationResult res =
        seds_integrate(m, Eigen::Vector3d(0.3, -0.2, 0.1), IntegrateMode::fixed(300));
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& p : res.trajectory.positions) {
        EXPECT_LE(p.norm(), prev + 1e-12);
        prev = p.norm();
    }
}

TEST(SedsIntegrate, UntilConvergedReportsArrival) {
    const SedsModel m = hand_model(-4.0 * Matrix6d::Identity());
    const IntegrationResult res = seds_integrate(m, Eigen::Vector3d(0.2, 0, 0),
                                                 IntegrateMode::until_converged(5000));
    EXPECT_TRUE(res.converged);
    EXPECT_LE((res.trajectory.back()).norm(), 0.005);
    EXPECT_GT(res.arrival_time, 0.0);
}

TEST(SedsIntegrate, CapWithoutConvergenceFlagsFalse) {
    // marginally stable dynamics never reach the 5 mm ball within the cap
    Matrix6d A = Matrix6d::Zero();
    A.diagonal().setConstant(-1e-4);
    const SedsModel m = hand_model(A);
    const IntegrationResult res =
        seds_integrate(m, Eigen::Vector3d(0.5, 0, 0), IntegrateMode::until_converged(200));
    EXPECT_FALSE(res.converged);
    EXPECT_EQ(res.trajectory.size(), 200u);
}

TEST(SedsStability, HandBuiltUnstableModelFailsCertificate) {
    const SedsModel bad = hand_model(Matrix6d::Identity());
    const StabilityReport rep = seds_stability_check(bad);
    EXPECT_FALSE(rep.pass);
    EXPECT_GT(rep.max_eigenvalues[0], 0.0);
}

TEST(SedsStability, CertificateInvariantUnderSpatialRotation) {
    Rng rng(3);
    Matrix6d L = Matrix6d::Zero();
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c <= r; ++c) L(r, c) = rng.gaussian() * 0.4 + (r == c ? 0.8 : 0.0);
    Matrix6d A = -(L * L.transpose()) - 1e-6 * Matrix6d::Identity();
    A(0, 1) += 0.3;
    A(1, 0) -= 0.3;  // antisymmetric extra
    SedsModel m = hand_model(A, {0.1, 0.0, 0.2});
    const StabilityReport before = seds_stability_check(m);
    // conjugate the spatial basis consistently (same rotation on both blocks)
    const double th = 0.7;
    Eigen::Matrix3d R;
    R << std::cos(th), -std::sin(th), 0, std::sin(th), std::cos(th), 0, 0, 0, 1;
    Matrix6d Q = Matrix6d::Zero();
    Q.topLeftCorner<3, 3>() = R;
    Q.bottomRightCorner<3, 3>() = R;
    SedsModel rotated = m;
    rotated.A[0] = Q * m.A[0] * Q.transpose();
    rotated.sigma[0] = Q * m.sigma[0] * Q.transpose();
    rotated.attractor.head<3>() = R * m.attractor.head<3>();
    const StabilityReport after = seds_stability_check(rotated);
    EXPECT_NEAR(before.max_eigenvalues[0], after.max_eigenvalues[0], 1e-9);
    EXPECT_EQ(before.pass, after.pass);
}

TEST(SedsFit, SingleLinearDemoWithOneComponent) {
    const Trajectory demo = decelerating_line({0.0, -0.25, 0.0}, {0.0, 0.0, 0.0}, 80);
    SedsFitOptions opts;
    opts.K = 1;
    opts.seed = 5;
    const SedsFitResult fit = seds_fit({demo}, demo.back(), opts);
    ASSERT_TRUE(fit.ok()) << fit.report.last_gate;
    const StabilityReport stab = seds_stability_check(*fit.model);
    EXPECT_TRUE(stab.pass);
    const IntegrationResult roll =
        seds_integrate(*fit.model, demo.front(), IntegrateMode::fixed(demo.size()));
    EXPECT_LT((roll.trajectory.back() - demo.back()).norm(), 0.005);
}

TEST(SedsFit, ThreeRepetitionFamilyAtKThree) {
    const std::vector<Trajectory> demos = arc_family(3, 11);
    SedsFitOptions opts;
    opts.K = 3;
    opts.seed = 1;
    Eigen::Vector3d goal = Eigen::Vector3d::Zero();
    for (const auto& d : demos) goal += d.back() / 3.0;
    const SedsFitResult fit = seds_fit(demos, goal, opts);
    ASSERT_TRUE(fit.ok()) << fit.report.last_gate << " path=" << fit.report.path_residual
                          << " end=" << fit.report.endpoint_residual;
    EXPECT_LE(fit.report.path_residual, opts.path_gate);
    EXPECT_LE(fit.report.endpoint_residual, opts.endpoint_gate);
    const StabilityReport stab = seds_stability_check(*fit.model);
    EXPECT_TRUE(stab.pass);
    for (double ev : stab.max_eigenvalues) EXPECT_LT(ev, -1e-8);
    for (double res : stab.b_residuals) EXPECT_LT(res, 1e-10);
}

TEST(SedsFit, DeterministicForFixedSeed) {
    const std::vector<Trajectory> demos = arc_family(2, 21);
    SedsFitOptions opts;
    opts.K = 2;
    opts.seed = 77;
    opts.learn_iters = 600;  // keep the double fit cheap
    Eigen::Vector3d goal = 0.5 * (demos[0].back() + demos[1].back());
    const SedsFitResult a = seds_fit(demos, goal, opts);
    const SedsFitResult b = seds_fit(demos, goal, opts);
    ASSERT_EQ(a.ok(), b.ok());
    ASSERT_EQ(a.report.trials, b.report.trials);
    if (a.ok())
        for (int k = 0; k < opts.K; ++k)
            EXPECT_EQ(a.model->A[static_cast<std::size_t>(k)],
                      b.model->A[static_cast<std::size_t>(k)]);
}

TEST(SedsFit, RejectsDemosAwayFromGoal) {
    const Trajectory demo = decelerating_line({0, 0, 0}, {0.3, 0, 0}, 60);
    SedsFitOptions opts;
    opts.K = 1;
    EXPECT_THROW(seds_fit({demo}, Eigen::Vector3d::Zero(), opts), std::invalid_argument);
}

TEST(SedsFit, LyapunovDecreasesAlongRollout) {
    const Trajectory demo = decelerating_line({0.2, 0.1, 0.0}, {0.0, 0.0, 0.0}, 90);
    SedsFitOptions opts;
    opts.K = 1;
    opts.seed = 2;
    const SedsFitResult fit = seds_fit({demo}, demo.back(), opts);
    ASSERT_TRUE(fit.ok());
    // V = ||xi||^2 in model coordinates decreases along the flow
    Vector6d state;
    state.head<3>() = Eigen::Vector3d(0.15, 0.12, 0.05);
    state.tail<3>().setZero();
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 400; ++i) {
        Vector6d xi;
        xi.head<3>() = state.head<3>() - fit.model->attractor.head<3>();
        xi.tail<3>() = fit.model->vel_scale * state.tail<3>();
        const double V = xi.squaredNorm();
        EXPECT_LE(V, prev + 1e-9);
        prev = V;
        state += 0.01 * seds_predict(*fit.model, state);
    }
}

// Injected failing optimizer: the retry protocol must count trials, bump the
// regularizer after five failures and return a report rather than throw.
TEST(SedsRetry, StubExhaustsBudgetAndBumpsBias) {
    const std::vector<Trajectory> demos = arc_family(2, 31);
    SedsFitOptions opts;
    opts.K = 2;
    opts.seed = 9;
    std::vector<double> seen_bias;
    opts.refine_override = [&](seds_detail::Params& p, double bias) {
        seen_bias.push_back(bias);
        for (auto& L : p.L) L = 5.0 * Matrix6d::Identity();  // snaps to the attractor, misses the path gate
        for (auto& W : p.W) W.setZero();
        return true;
    };
    Eigen::Vector3d goal = 0.5 * (demos[0].back() + demos[1].back());
    const SedsFitResult fit = seds_fit(demos, goal, opts);
    EXPECT_FALSE(fit.ok());
    EXPECT_EQ(fit.report.trials, opts.retry_budget);
    EXPECT_FALSE(fit.report.last_gate.empty());
    EXPECT_GT(fit.report.path_residual, opts.path_gate);
    ASSERT_EQ(static_cast<int>(seen_bias.size()), opts.retry_budget);
    EXPECT_DOUBLE_EQ(seen_bias[0], opts.mat_bias);
    EXPECT_DOUBLE_EQ(seen_bias[5], opts.mat_bias * 10.0);    // bumped after 5 failures
    EXPECT_DOUBLE_EQ(seen_bias[10], opts.mat_bias * 100.0);  // and again after 10
    EXPECT_DOUBLE_EQ(fit.report.final_mat_bias, opts.mat_bias * 1000.0);
    const nlohmann::json j = to_json(fit.report);
    EXPECT_EQ(j.at("trials").get<int>(), opts.retry_budget);
    EXPECT_TRUE(j.contains("last_gate"));
    EXPECT_TRUE(j.at("last_residuals").contains("path"));
}

TEST(SedsRetry, NanFromSolverCountsAsFailedTrial) {
    const std::vector<Trajectory> demos = arc_family(2, 41);
    SedsFitOptions opts;
    opts.K = 2;
    opts.retry_budget = 3;
    int calls = 0;
    opts.refine_override = [&](seds_detail::Params&, double) {
        ++calls;
        return false;  // solver reports NaN
    };
    Eigen::Vector3d goal = 0.5 * (demos[0].back() + demos[1].back());
    const SedsFitResult fit = seds_fit(demos, goal, opts);
    EXPECT_FALSE(fit.ok());
    EXPECT_EQ(calls, 3);
    EXPECT_EQ(fit.report.last_gate, "nan");
}

TEST(SedsJson, RoundTrip) {
    const Trajectory demo = decelerating_line({0.0, -0.2, 0.0}, {0.0, 0.0, 0.0}, 70);
    SedsFitOptions opts;
    opts.K = 1;
    opts.learn_iters = 500;
    const SedsFitResult fit = seds_fit({demo}, demo.back(), opts);
    ASSERT_TRUE(fit.ok());
    const nlohmann::json j = to_json(*fit.model);
    for (const char* key : {"K", "attractor", "pi", "mu_in", "sigma_in", "A"})
        EXPECT_TRUE(j.contains(key)) << key;
    const SedsModel back = seds_from_json(j);
    EXPECT_EQ(back.K, fit.model->K);
    EXPECT_EQ(back.A[0], fit.model->A[0]);
    EXPECT_EQ(back.sigma[0], fit.model->sigma[0]);
    Vector6d probe;
    probe << 0.05, -0.1, 0.02, 0.0, 0.1, 0.0;
    EXPECT_NEAR((seds_predict(back, probe) - seds_predict(*fit.model, probe)).norm(), 0.0, 1e-14);
}
