#include <gtest/gtest.h>

#include "tendonid/errors.hpp"
#include "tendonid/model.hpp"
#include "tendonid/n4sid.hpp"
#include "tendonid/plantsim.hpp"
#include "tendonid/random.hpp"

using namespace tendonid;

namespace {

const Eigen::Vector4d kBalanced = Eigen::Vector4d::Constant(105.0);

/// Independent multisine on each tendon about 105 N, frequencies interleaved
/// across channels up to 0.45 cycles per sample, peak `amp` newtons.
TimeSeries full_band_multisine(std::uint64_t seed, double duration_s, int harmonics, double amp) {
    const double dt = 0.03;
    const Eigen::Index m = std::llround(duration_s / dt);
    Rng rng(seed);
    Eigen::MatrixXd F(m, 4);
    const int total = 4 * harmonics;
    for (int c = 0; c < 4; ++c) {
        Eigen::VectorXd s = Eigen::VectorXd::Zero(m);
        for (int h = 0; h < harmonics; ++h) {
            const double f = 0.45 * (4 * h + c + 1) / total;
            const double phase = rng.uniform(0.0, 2.0 * M_PI);
            for (Eigen::Index k = 0; k < m; ++k) s(k) += std::cos(2.0 * M_PI * f * static_cast<double>(k) + phase);
        }
        F.col(c) = (105.0 + amp * s.array() / s.cwiseAbs().maxCoeff()).matrix();
    }
    return TimeSeries(dt, F, {"u1", "u2", "u3", "u4"});
}

SnakePlantConfig frictionless_free() {
    SnakePlantConfig cfg;
    cfg.gravity_gain.setZero();
    cfg.viscous_coeff.setZero();
    cfg.coulomb_coeff.setZero();
    return cfg;
}

Eigen::Index full_rank_by_svd(const Eigen::MatrixXd& M) {
    const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues();
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) r += s(i) > 1e-9 * s(0);
    return r;
}

}  // namespace

TEST(TendonToTorque, BalancedAntagonistsGiveZero) {
    SnakePlantConfig cfg;
    cfg.moment_arm_m = 0.01;
    EXPECT_EQ(tendon_to_torque(Eigen::Vector4d(50, 50, 50, 50), cfg), Eigen::Vector2d::Zero());
    EXPECT_EQ(tendon_to_torque(Eigen::Vector4d(20, 190, 20, 190), cfg), Eigen::Vector2d::Zero());
}

TEST(TendonToTorque, DifferenceTimesMomentArm) {
    SnakePlantConfig cfg;
    cfg.moment_arm_m = 0.01;
    const Eigen::Vector2d tau = tendon_to_torque(Eigen::Vector4d(60, 50, 40, 50), cfg);
    EXPECT_NEAR(tau(0), 0.2, 1e-15);
    EXPECT_NEAR(tau(1), 0.0, 1e-15);
    EXPECT_THROW(tendon_to_torque(Eigen::Vector4d(-1, 0, 0, 0), cfg), DataError);
}

TEST(PlantStep, EquilibriumIsExactFixedPoint) {
    const SnakePlantConfig cfg;
    PlantState s;
    for (int k = 0; k < 100; ++k) s = plant_step(s, kBalanced, 1e-3, cfg);
    EXPECT_EQ(s.q, Eigen::Vector2d::Zero());
    EXPECT_EQ(s.qdot, Eigen::Vector2d::Zero());
}

TEST(PlantStep, ConstantAccelerationOracle) {
    const SnakePlantConfig cfg = frictionless_free();
    const Eigen::Vector4d f(105.5, 104.8, 104.5, 105.0);
    const Eigen::Vector2d tau = cfg.moment_arm_m * Eigen::Vector2d(f(0) - f(2), f(1) - f(3));
    const Eigen::Vector2d acc = cfg.inertia().inverse() * tau;
    const double dt = 1e-3;
    PlantState s;
    for (int k = 1; k <= 200; ++k) {
        s = plant_step(s, f, dt, cfg);
        const Eigen::Vector2d expected = acc * k * dt;
        for (int i = 0; i < 2; ++i) EXPECT_NEAR(s.qdot(i), expected(i), 0.02 * std::abs(expected(i)));
    }
    const double t = 200 * dt;
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(s.q(i), 0.5 * acc(i) * t * t, 0.02 * std::abs(0.5 * acc(i) * t * t));
}

TEST(PlantStep, KineticEnergyNonIncreasingWithFrictionAndNoTorque) {
    SnakePlantConfig cfg;
    cfg.gravity_gain.setZero();
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        PlantState s;
        s.q = Eigen::Vector2d(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
        s.qdot = Eigen::Vector2d(rng.uniform(-5, 5), rng.uniform(-5, 5));
        double e = plant_energy(s, cfg);
        for (int k = 0; k < 300; ++k) {
            s = plant_step(s, kBalanced, 1e-3, cfg);
            const double next = plant_energy(s, cfg);
            ASSERT_LE(next, e + 1e-12);
            e = next;
        }
    }
}

TEST(PlantStep, TotalEnergyNonIncreasingUnderGravity) {
    Rng rng(11);
    for (bool linear : {false, true}) {
        SnakePlantConfig cfg;
        cfg.linear_gravity = linear;
        for (int trial = 0; trial < 20; ++trial) {
            PlantState s;
            s.q = Eigen::Vector2d(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2));
            s.qdot = Eigen::Vector2d(rng.uniform(-3, 3), rng.uniform(-3, 3));
            double e = plant_energy(s, cfg);
            for (int k = 0; k < 2000; ++k) {
                s = plant_step(s, kBalanced, 1e-3, cfg);
                const double next = plant_energy(s, cfg);
                ASSERT_LE(next, e + 1e-9) << "step " << k;
                e = next;
            }
        }
    }
}

TEST(PlantStep, JointsStayClamped) {
    const SnakePlantConfig cfg;
    Rng rng(7);
    PlantState s;
    for (int k = 0; k < 5000; ++k) {
        Eigen::Vector4d f;
        for (int c = 0; c < 4; ++c) f(c) = rng.uniform(0.0, 400.0);
        s = plant_step(s, f, 1e-3, cfg);
        ASSERT_LE(s.q.cwiseAbs().maxCoeff(), kJointLimit);
    }
    const PlantState pinned = plant_advance({}, Eigen::Vector4d(400, 0, 0, 400), 2.0, cfg);
    EXPECT_EQ(pinned.q(0), kJointLimit);
    EXPECT_EQ(pinned.q(1), -kJointLimit);
}

TEST(PlantStep, RejectsBadArguments) {
    const SnakePlantConfig cfg;
    EXPECT_THROW(plant_step({}, kBalanced, 0.0, cfg), DataError);
    PlantState bad;
    bad.q(0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(plant_step(bad, kBalanced, 1e-3, cfg), NumericError);
    SnakePlantConfig neg;
    neg.viscous_coeff(0) = -1.0;
    EXPECT_THROW(neg.validate(), ConfigError);
}

TEST(SimulatePlant, BalancedForcesGiveZeroOutputs) {
    const TimeSeries U(0.03, Eigen::MatrixXd::Constant(200, 4, 80.0));
    const Dataset ds = simulate_plant(SnakePlantConfig{}, U);
    EXPECT_EQ(ds.outputs.values.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(ds.samples(), 200);
}

TEST(SimulatePlant, Deterministic) {
    ExcitationSpec spec;
    spec.duration_s = 10.0;
    spec.seed = 42;
    const Dataset a = simulate_plant(SnakePlantConfig{}, generate_excitation(spec, 0.03));
    const Dataset b = simulate_plant(SnakePlantConfig{}, generate_excitation(spec, 0.03));
    EXPECT_EQ(a.outputs.values, b.outputs.values);
    EXPECT_EQ(a.inputs.values, b.inputs.values);
}

TEST(SimulatePlant, LinearizedPlantIsRecoveredByN4sid) {
    SnakePlantConfig cfg;
    cfg.linear_gravity = true;
    cfg.coulomb_coeff.setZero();
    const Dataset train = simulate_plant(cfg, full_band_multisine(5, 90.0, 25, 4.0));
    const Dataset val = simulate_plant(cfg, full_band_multisine(6, 30.0, 25, 4.0));
    N4sidConfig ncfg;
    ncfg.order = 4;
    ncfg.remove_means = true;
    const ModelKind model = identify_n4sid(train, ncfg);
    const TimeSeries y = simulate(model, val.inputs, initial_condition_from_data(model, val));
    const FitReport fit = fit_percent(val.outputs.values, y.values);
    EXPECT_GE(fit.per_channel_fit.minCoeff(), 99.0);
}

TEST(Excitation, ZeroAmplitudeIsPureBias) {
    for (auto kind : {ExcitationSpec::Kind::Prbs, ExcitationSpec::Kind::Multisine, ExcitationSpec::Kind::CircleSweep}) {
        ExcitationSpec spec;
        spec.kind = kind;
        spec.amplitude_N = 0.0;
        spec.duration_s = 5.0;
        const TimeSeries u = generate_excitation(spec, 0.03);
        EXPECT_EQ(u.channels(), 4);
        EXPECT_EQ((u.values.array() - spec.bias_N).abs().maxCoeff(), 0.0);
    }
}

TEST(Excitation, SameSeedSameSeries) {
    for (auto kind : {ExcitationSpec::Kind::Prbs, ExcitationSpec::Kind::Multisine, ExcitationSpec::Kind::CircleSweep}) {
        ExcitationSpec spec;
        spec.kind = kind;
        spec.seed = 99;
        EXPECT_EQ(generate_excitation(spec, 0.03).values, generate_excitation(spec, 0.03).values);
    }
}

TEST(Excitation, StaysWithinBiasPlusMinusAmplitude) {
    for (auto kind : {ExcitationSpec::Kind::Prbs, ExcitationSpec::Kind::Multisine, ExcitationSpec::Kind::CircleSweep}) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            ExcitationSpec spec;
            spec.kind = kind;
            spec.amplitude_N = 30.0;
            spec.bias_N = 100.0;
            spec.common_mode_N = 5.0;
            spec.seed = seed;
            const TimeSeries u = generate_excitation(spec, 0.03);
            EXPECT_GE(u.values.minCoeff(), 70.0);
            EXPECT_LE(u.values.maxCoeff(), 130.0);
        }
    }
}

TEST(Excitation, DurationMatchesWithinOneSample) {
    ExcitationSpec spec;
    spec.duration_s = 7.0;
    const TimeSeries u = generate_excitation(spec, 0.03);
    EXPECT_LE(std::abs(static_cast<double>(u.samples()) * 0.03 - 7.0), 0.03);
}

TEST(Excitation, InvalidSpecsAreConfigErrors) {
    ExcitationSpec spec;
    spec.amplitude_N = 200.0;
    EXPECT_THROW(generate_excitation(spec, 0.03), ConfigError);
    spec = {};
    spec.prbs_levels = 1;
    EXPECT_THROW(generate_excitation(spec, 0.03), ConfigError);
}

TEST(RandomLti, DeterministicStableAndMinimal) {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const StateSpaceModel a = make_random_lti(seed, 4, 2, 2);
        const StateSpaceModel b = make_random_lti(seed, 4, 2, 2);
        EXPECT_EQ(a.A, b.A);
        EXPECT_EQ(a.B, b.B);
        EXPECT_EQ(a.C, b.C);
        EXPECT_EQ(a.D, b.D);
        const Eigen::VectorXcd eig = Eigen::EigenSolver<Eigen::MatrixXd>(a.A).eigenvalues();
        EXPECT_LE(eig.cwiseAbs().maxCoeff(), 0.95 + 1e-12);
        EXPECT_EQ(full_rank_by_svd(controllability_matrix(a, 4)), 4);
        EXPECT_EQ(full_rank_by_svd(observability_matrix(a, 4)), 4);
    }
}

TEST(SparseTruth, DeterministicSparseAndZeroFixedPoint) {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const SindyModel a = make_sparse_nonlinear_truth(seed);
        const SindyModel b = make_sparse_nonlinear_truth(seed);
        EXPECT_EQ(a.xi, b.xi);
        EXPECT_LE(a.active_terms(), 6);
        EXPECT_FALSE(a.library.include_constant);
        const Eigen::MatrixXd x = simulate_sindy(a, Eigen::MatrixXd::Zero(50, 2), Eigen::Vector2d::Zero());
        EXPECT_EQ(x.cwiseAbs().maxCoeff(), 0.0);
    }
}
