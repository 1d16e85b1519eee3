#include <gtest/gtest.h>

#include "traj/dmp.hpp"
#include "traj/metrics.hpp"
#include "traj/rng.hpp"

#include "oracles.hpp"

using namespace traj;

namespace {

Trajectory minjerk_demo(const Eigen::Vector3d& from, const Eigen::Vector3d& to, std::size_t n,
                        double arc = 0.0, double dt = 0.01) {
    const double T = (static_cast<double>(n) - 1.0) * dt;
    std::vector<Eigen::Vector3d> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = static_cast<double>(i) * dt / T;
        const double m = s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
        pos[i] = (1.0 - m) * from + m * to;
        pos[i].z() += arc * std::sin(M_PI * m);
    }
    return Trajectory(std::move(pos), dt);
}

DmpModel zero_weight_model(int K, double T, std::size_t steps_hint = 0) {
    (void)steps_hint;
    DmpModel m;
    m.K = K;
    m.kappa = default_kappa(K);
    m.centers = Eigen::VectorXd::LinSpaced(K, 0.0, 1.0);
    m.sigma = m.kappa / K;
    m.weights = Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, K);
    m.T = T;
    return m;
}

}  // namespace

TEST(DmpConfig, CriticalDampingDefaults) {
    const DmpConfig cfg;
    EXPECT_DOUBLE_EQ(cfg.beta_z, cfg.alpha_z / 4.0);
    EXPECT_DOUBLE_EQ(cfg.alpha_g, 1.0);
    EXPECT_DOUBLE_EQ(cfg.tau, 1.0);
    DmpConfig bad;
    bad.K = 1;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(DmpIntegrate, ZeroWeightsConvergeMonotonicallyWithoutOvershoot) {
    // long rollout so the ramp-tracking lag decays below the gate
    const DmpModel m = zero_weight_model(5, 8.0);
    const Eigen::Vector3d goal(0, 0, 0.1);
    const Trajectory roll = dmp_integrate(m, Eigen::Vector3d::Zero(), goal, 801);
    EXPECT_EQ(roll.positions.front(), Eigen::Vector3d::Zero());
    double prev = 0.0;
    for (const auto& p : roll.positions) {
        EXPECT_GE(p.z(), prev - 1e-12);        // monotone toward the goal
        EXPECT_LE(p.z(), 0.1 + 1e-9);          // no overshoot
        prev = p.z();
    }
    EXPECT_NEAR((roll.back() - goal).norm(), 0.0, 1e-3);
}

TEST(DmpIntegrate, StartEqualsGoalStaysConstant) {
    const DmpModel m = zero_weight_model(4, 1.0);
    const Eigen::Vector3d p(0.1, -0.2, 0.05);
    const Trajectory roll = dmp_integrate(m, p, p, 101);
    for (const auto& q : roll.positions) EXPECT_NEAR((q - p).norm(), 0.0, 1e-9);
}

TEST(DmpIntegrate, FirstSampleIsExactlyTheStart) {
    DmpModel m = zero_weight_model(6, 0.8);
    m.weights.setRandom();
    const Eigen::Vector3d start(0.03, -0.01, 0.2);
    const Trajectory roll = dmp_integrate(m, start, Eigen::Vector3d(0.3, 0.1, 0.0), 81);
    EXPECT_EQ(roll.positions.front(), start);
}

TEST(DmpEncode, ConstantDemonstrationReconstructsExactly) {
    const Trajectory demo = minjerk_demo({0.1, 0.1, 0.1}, {0.1, 0.1, 0.1}, 60);
    DmpConfig cfg;
    cfg.K = 5;
    cfg.kappa = 0.7;
    const DmpModel m = dmp_encode(demo, cfg);
    const Trajectory roll = dmp_integrate(m, demo.front(), demo.back(), demo.size());
    EXPECT_LT(rms_distance(roll, demo), 1e-6);
}

TEST(DmpEncode, ResidualVanishesAtKernelCenters) {
    const Trajectory demo = minjerk_demo({0, 0, 0}, {0.2, 0.1, 0}, 83, 0.08);
    DmpConfig cfg;
    cfg.K = 3;
    cfg.kappa = 0.7;
    const DmpModel m = dmp_encode(demo, cfg);
    const Trajectory roll = dmp_integrate(m, m.start, m.goal, demo.size());
    for (int i = 0; i < cfg.K; ++i) {
        const auto idx = static_cast<std::size_t>(
            std::llround(m.centers[i] * (static_cast<double>(demo.size()) - 1.0)));
        EXPECT_LT((demo.positions[idx] - roll.positions[idx]).norm(), 1e-4);
    }
}

TEST(DmpEncode, MinJerkRoundTripAtElevenKernels) {
    const Trajectory demo = minjerk_demo({0, 0, 0}, {0.0, 0.25, 0.0}, 83);
    DmpConfig cfg;
    cfg.K = 11;
    cfg.kappa = default_kappa(11);  // appendix value for K > 10
    const DmpModel m = dmp_encode(demo, cfg);
    const Trajectory roll = dmp_integrate(m, m.start, m.goal, demo.size());
    EXPECT_LT(rms_distance(roll, demo), 1e-3);
}

TEST(DmpEncode, ErrorDecreasesWithMoreKernels) {
    const Trajectory demo = minjerk_demo({0, 0, 0}, {0.1, 0.25, 0.0}, 83, 0.08);
    double prev = std::numeric_limits<double>::infinity();
    for (int K : {3, 11}) {
        DmpConfig cfg;
        cfg.K = K;
        cfg.kappa = default_kappa(K);
        const DmpModel m = dmp_encode(demo, cfg);
        const double err = rms_distance(dmp_integrate(m, m.start, m.goal, demo.size()), demo);
        EXPECT_LT(err, prev);
        prev = err;
    }
}

TEST(DmpEncode, ReconstructionErrorNonIncreasingInIterations) {
    const Trajectory demo = minjerk_demo({0, 0, 0}, {0.2, 0.2, 0}, 83, 0.06);
    double prev = std::numeric_limits<double>::infinity();
    for (int iters : {50, 100, 200}) {
        DmpConfig cfg;
        cfg.K = 6;
        cfg.kappa = 0.7;
        cfg.learn_iters = iters;
        const DmpModel m = dmp_encode(demo, cfg);
        const double err = rms_distance(dmp_integrate(m, m.start, m.goal, demo.size()), demo);
        EXPECT_LE(err, prev + 1e-12);
        prev = err;
    }
}

TEST(DmpEncode, RejectsNonFiniteDemo) {
    std::vector<Eigen::Vector3d> pos(10, Eigen::Vector3d::Zero());
    pos[4].x() = std::numeric_limits<double>::infinity();
    Trajectory demo;
    demo.positions = pos;
    demo.dt = 0.01;
    DmpConfig cfg;
    cfg.K = 3;
    cfg.kappa = 0.7;
    EXPECT_THROW(dmp_encode(demo, cfg), std::invalid_argument);
}

TEST(DmpModel, ParameterCountIsThreeK) {
    for (int K = 2; K <= 20; ++K) {
        DmpModel m;
        m.K = K;
        EXPECT_EQ(m.param_count(), 3 * K);
    }
}

TEST(MinimalNorm, TwoGoalSymmetry) {
    const std::vector<Eigen::Vector3d> goals = {{0.1, 0, 0}, {0.3, 0, 0}};
    const Eigen::VectorXd a =
        minimal_norm_coefficients(goals, {0.2, 0, 0}, {true, false, false});
    EXPECT_NEAR(a[0], 0.5, 1e-12);
    EXPECT_NEAR(a[1], 0.5, 1e-12);
}

TEST(MinimalNorm, ThreeGoalsSymmetricSolution) {
    const std::vector<Eigen::Vector3d> goals = {{0.0, 0, 0}, {0.1, 0, 0}, {0.2, 0, 0}};
    const Eigen::VectorXd a =
        minimal_norm_coefficients(goals, {0.1, 0, 0}, {true, false, false});
    // independent KKT oracle
    Eigen::MatrixXd C(2, 3);
    C << 0.0, 0.1, 0.2, 1, 1, 1;
    Eigen::VectorXd y(2);
    y << 0.1, 1.0;
    const Eigen::VectorXd ref = oracle::kkt_least_norm(C, y);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(a[i], ref[i], 1e-10);
    EXPECT_NEAR(a[0], 1.0 / 3.0, 1e-10);
}

TEST(MinimalNorm, SumsToOneAndIsNormMinimal) {
    Rng rng(123);
    for (int trial = 0; trial < 50; ++trial) {
        const int m = 2 + static_cast<int>(rng.index(5));
        std::vector<Eigen::Vector3d> goals;
        for (int i = 0; i < m; ++i)
            goals.push_back({rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 0.0});
        // target inside the affine span
        Eigen::VectorXd mix(m);
        for (int i = 0; i < m; ++i) mix[i] = rng.uniform(-0.5, 1.5);
        mix /= mix.sum();
        Eigen::Vector3d target = Eigen::Vector3d::Zero();
        for (int i = 0; i < m; ++i) target += mix[i] * goals[static_cast<std::size_t>(i)];
        const std::array<bool, 3> vary = {true, true, false};
        const Eigen::VectorXd a = minimal_norm_coefficients(goals, target, vary);
        EXPECT_NEAR(a.sum(), 1.0, 1e-12);
        // no sampled feasible direction improves the norm: check against KKT
        Eigen::MatrixXd C(3, m);
        for (int i = 0; i < m; ++i) {
            C(0, i) = goals[static_cast<std::size_t>(i)].x();
            C(1, i) = goals[static_cast<std::size_t>(i)].y();
            C(2, i) = 1.0;
        }
        Eigen::VectorXd y(3);
        y << target.x(), target.y(), 1.0;
        const Eigen::VectorXd ref = oracle::kkt_least_norm(C, y);
        EXPECT_LE(a.norm(), ref.norm() + 1e-9);
        EXPECT_NEAR((C * a - y).norm(), 0.0, 1e-9);
    }
}

TEST(MinimalNorm, TargetAtDemonstrationGoalWeighsItMost) {
    const std::vector<Eigen::Vector3d> goals = {{0.1, 0.2, 0}, {0.3, -0.1, 0}, {-0.2, 0.25, 0}};
    const Eigen::VectorXd a =
        minimal_norm_coefficients(goals, goals[0], {true, true, false});
    EXPECT_GT(a[0], a[1]);
    EXPECT_GT(a[0], a[2]);
}

TEST(MinimalNorm, InfeasibleTargetCarriesResidual) {
    // both goals share x = 0.1; x = 0.5 is unreachable
    const std::vector<Eigen::Vector3d> goals = {{0.1, 0.0, 0}, {0.1, 0.2, 0}};
    try {
        minimal_norm_coefficients(goals, {0.5, 0.1, 0}, {true, true, false});
        FAIL() << "expected InfeasibleError";
    } catch (const InfeasibleError& e) {
        EXPECT_GT(e.residual, 0.1);
    }
}

TEST(DmpGeneralize, SingleEncodingAtOwnGoalIsIdentity) {
    const Trajectory demo = minjerk_demo({0, 0, 0}, {0.2, 0.1, 0}, 83, 0.05);
    DmpConfig cfg;
    cfg.K = 6;
    cfg.kappa = 0.7;
    const DmpModel enc = dmp_encode(demo, cfg);
    const DmpModel gen =
        dmp_generalize({enc}, enc.goal - enc.start, {true, true, false});
    EXPECT_NEAR((gen.weights - enc.weights).cwiseAbs().maxCoeff(), 0.0, 1e-12);
    EXPECT_NEAR(gen.T, enc.T, 1e-12);
}

TEST(DmpGeneralize, InterpolatesBetweenTwoFamilies) {
    // demos to 0.1 m and 0.3 m; the held-out middle member is analytic
    std::vector<DmpModel> encodings;
    DmpConfig cfg;
    cfg.K = 6;
    cfg.kappa = 0.7;
    for (double y : {0.1, 0.3}) {
        const Trajectory demo = minjerk_demo({0, 0, 0}, {0.0, y, 0.0}, 83, 0.08);
        encodings.push_back(dmp_encode(demo, cfg));
        encodings.push_back(dmp_encode(demo, cfg));  // paper feeds repetitions
    }
    const Trajectory held_out = minjerk_demo({0, 0, 0}, {0.0, 0.2, 0.0}, 83, 0.08);
    const DmpModel gen = dmp_generalize(encodings, {0.0, 0.2, 0.0}, {false, true, false});
    const Trajectory roll =
        dmp_integrate(gen, held_out.front(), held_out.back(), held_out.size());
    EXPECT_LT((roll.back() - held_out.back()).norm(), 1e-3);
    EXPECT_LT(rms_distance(roll, held_out), 0.005);
}

TEST(DmpGeneralize, MixedKernelCountsRejected) {
    const Trajectory demo = minjerk_demo({0, 0, 0}, {0.2, 0.0, 0}, 60);
    DmpConfig a, b;
    a.K = 4;
    a.kappa = 0.7;
    b.K = 6;
    b.kappa = 0.7;
    const std::vector<DmpModel> encs = {dmp_encode(demo, a), dmp_encode(demo, b)};
    EXPECT_THROW(dmp_generalize(encs, {0.2, 0, 0}, {true, false, false}),
                 std::invalid_argument);
}

TEST(DmpJson, RoundTrip) {
    const Trajectory demo = minjerk_demo({0, 0, 0}, {0.15, 0.2, 0}, 64, 0.04);
    DmpConfig cfg;
    cfg.K = 5;
    cfg.kappa = 0.7;
    const DmpModel m = dmp_encode(demo, cfg);
    const DmpModel back = dmp_from_json(to_json(m));
    EXPECT_EQ(back.K, m.K);
    EXPECT_EQ(back.weights, m.weights);
    EXPECT_EQ(back.centers, m.centers);
    EXPECT_DOUBLE_EQ(back.sigma, m.sigma);
    EXPECT_DOUBLE_EQ(back.T, m.T);
    const auto j = to_json(m);
    for (const char* key : {"alpha_z", "beta_z", "tau", "K", "kappa", "centers", "sigma",
                            "weights", "start", "goal", "T", "dt"})
        EXPECT_TRUE(j.contains(key)) << key;
}
