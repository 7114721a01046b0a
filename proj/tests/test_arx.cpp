#include <gtest/gtest.h>

#include "tendonid/arx.hpp"
#include "tendonid/errors.hpp"
#include "tendonid/plantsim.hpp"
#include "tendonid/random.hpp"

using namespace tendonid;

namespace {

Dataset arx_data(const ArxModel& truth, std::uint64_t seed, Eigen::Index m, double noise = 0.0) {
    const Eigen::MatrixXd U = random_binary_signal(seed, m, truth.inputs(), 1.0, 1, 3);
    Eigen::MatrixXd Y = simulate_arx(truth, U, Eigen::MatrixXd::Zero(truth.max_lag(), truth.outputs()));
    if (noise > 0.0) {
        Rng rng(seed + 1);
        for (Eigen::Index k = 0; k < Y.rows(); ++k)
            for (Eigen::Index c = 0; c < Y.cols(); ++c) Y(k, c) += noise * rng.normal();
    }
    return Dataset(TimeSeries(1.0, U), TimeSeries(1.0, Y));
}

double max_coefficient_error(const ArxModel& a, const ArxModel& b) {
    double err = 0.0;
    for (std::size_t i = 0; i < a.a.size(); ++i) {
        for (std::size_t j = 0; j < a.a[i].size(); ++j)
            for (std::size_t l = 0; l < a.a[i][j].size(); ++l) err = std::max(err, std::abs(a.a[i][j][l] - b.a[i][j][l]));
        for (std::size_t j = 0; j < a.b[i].size(); ++j)
            for (std::size_t l = 0; l < a.b[i][j].size(); ++l) err = std::max(err, std::abs(a.b[i][j][l] - b.b[i][j][l]));
    }
    return err;
}

}  // namespace

TEST(Arx, ExactRecoveryOverRandomTruths) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const ArxModel truth = make_random_arx(seed, 2, 4, 8);
        const ArxModel id = identify_arx(arx_data(truth, 500 + seed, 1500), truth);
        EXPECT_LE(max_coefficient_error(truth, id), 1e-6) << "seed " << seed;
    }
}

TEST(Arx, UniformOrderStructureRecovery) {
    ArxModel truth = make_arx_structure(2, 2, 2, 2, 1, 1.0);
    truth.a = {{{0.5, -0.1}, {0.05, 0.02}}, {{-0.1, 0.03}, {0.4, -0.08}}};
    truth.b = {{{1.0, 0.5}, {-0.3, 0.2}}, {{0.7, 0.1}, {0.9, -0.4}}};
    const ArxModel id = identify_arx(arx_data(truth, 4, 800), 2, 2, 1);
    EXPECT_LE(max_coefficient_error(truth, id), 1e-9);
}

TEST(Arx, PureDelayedGain) {
    const Eigen::MatrixXd U = random_binary_signal(3, 200, 1, 1.0);
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(200, 1);
    for (Eigen::Index k = 1; k < 200; ++k) Y(k, 0) = 2.0 * U(k - 1, 0);
    const ArxModel id = identify_arx(Dataset(TimeSeries(1.0, U), TimeSeries(1.0, Y)), 0, 1, 1);
    ASSERT_EQ(id.b[0][0].size(), 1u);
    EXPECT_NEAR(id.b[0][0][0], 2.0, 1e-9);
}

TEST(Arx, ZeroInputChannelIsRankError) {
    Eigen::MatrixXd U = random_binary_signal(3, 300, 2, 1.0);
    U.col(1).setZero();
    const Eigen::MatrixXd Y = Eigen::MatrixXd::Random(300, 1);
    EXPECT_THROW(identify_arx(Dataset(TimeSeries(1.0, U), TimeSeries(1.0, Y)), 2, 2, 1), DataError);
}

TEST(Arx, ResidualsOrthogonalToRegressors) {
    const ArxModel truth = make_random_arx(7, 2, 2, 3);
    const Dataset ds = arx_data(truth, 8, 600, 0.05);
    const ArxModel id = identify_arx(ds, truth);
    const Eigen::MatrixXd& Y = ds.outputs.values;
    const Eigen::MatrixXd& U = ds.inputs.values;
    for (Eigen::Index i = 0; i < 2; ++i) {
        const Eigen::Index L = id.max_lag();
        Eigen::MatrixXd Phi(Y.rows() - L, id.row_parameter_count(i));
        Eigen::VectorXd res(Y.rows() - L);
        for (Eigen::Index k = L; k < Y.rows(); ++k) {
            Phi.row(k - L) = arx_regressor(id, i, Y, U, k);
            res(k - L) = Y(k, i) - arx_one_step(id, Y.middleRows(k - L, L), U.middleRows(k - L, L))(i);
        }
        EXPECT_LE((Phi.transpose() * res).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(ArxOneStep, ZeroHistoryZeroOutput) {
    const ArxModel m = make_random_arx(2, 2, 3, 4);
    const int L = m.max_lag();
    EXPECT_EQ(arx_one_step(m, Eigen::MatrixXd::Zero(L, 2), Eigen::MatrixXd::Zero(L, 3)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ArxOneStep, Homogeneous) {
    const ArxModel m = make_random_arx(5, 2, 3, 4);
    const int L = m.max_lag();
    const Eigen::MatrixXd yh = Eigen::MatrixXd::Random(L, 2), uh = Eigen::MatrixXd::Random(L, 3);
    EXPECT_LE((arx_one_step(m, 2.0 * yh, 2.0 * uh) - 2.0 * arx_one_step(m, yh, uh)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ArxSimulate, LinearInHistoryAndInput) {
    const ArxModel m = make_random_arx(9, 2, 2, 5);
    const int L = m.max_lag();
    const Eigen::MatrixXd u1 = Eigen::MatrixXd::Random(100, 2), u2 = Eigen::MatrixXd::Random(100, 2);
    const Eigen::MatrixXd h1 = Eigen::MatrixXd::Random(L, 2), h2 = Eigen::MatrixXd::Random(L, 2);
    const Eigen::MatrixXd y = simulate_arx(m, 1.5 * u1 - u2, 1.5 * h1 - h2);
    const Eigen::MatrixXd y_sep = 1.5 * simulate_arx(m, u1, h1) - simulate_arx(m, u2, h2);
    EXPECT_LE((y - y_sep).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ArxSimulate, ReproducesGeneratingData) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const ArxModel truth = make_random_arx(seed, 2, 2, 6);
        const Dataset ds = arx_data(truth, seed + 40, 400);
        const ArxModel id = identify_arx(ds, truth);
        const Eigen::MatrixXd y = simulate_arx(id, ds.inputs.values, ds.outputs.values.topRows(id.max_lag()));
        EXPECT_LE((y - ds.outputs.values).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Arx, StructureValidation) {
    EXPECT_THROW(identify_arx(arx_data(make_random_arx(1, 1, 1, 2), 1, 300), 2, 2, 0), DataError);
    EXPECT_THROW(identify_arx(arx_data(make_random_arx(1, 1, 1, 2), 1, 15), 8, 8, 1), DataError);
}
