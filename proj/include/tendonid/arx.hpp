#pragma once

#include <Eigen/Dense>
#include <vector>

#include "tendonid/dataset.hpp"

namespace tendonid {

/// MIMO ARX model
///
///   y_i(k) + sum_j sum_{l=1}^{na(i,j)} a(i,j)[l-1] y_j(k-l)
///          = sum_j sum_{l=1}^{nb(i,j)} b(i,j)[l-1] u_j(k - nk(i,j) - l + 1)
///
/// `na` is q x q (output-on-output lags), `nb` and `nk` are q x p.
struct ArxModel {
    Eigen::MatrixXi na;
    Eigen::MatrixXi nb;
    Eigen::MatrixXi nk;
    /// a[i][j] holds na(i,j) coefficients; b[i][j] holds nb(i,j) coefficients.
    std::vector<std::vector<std::vector<double>>> a;
    std::vector<std::vector<std::vector<double>>> b;
    double sample_time_s = 1.0;

    Eigen::Index outputs() const { return na.rows(); }
    Eigen::Index inputs() const { return nb.cols(); }

    /// Longest lag touched by the recursion; the length of the history window.
    int max_lag() const;

    /// Number of free parameters in output row i.
    int row_parameter_count(Eigen::Index i) const;

    void validate() const;
};

/// Uniform-order structure: every na entry = na, every nb = nb, every nk = nk.
ArxModel make_arx_structure(Eigen::Index q, Eigen::Index p, int na, int nb, int nk, double sample_time_s);

/// Regressor of output row i at time k, parameters ordered [a(i,0..), ..., b(i,0..), ...].
Eigen::RowVectorXd arx_regressor(const ArxModel& structure, Eigen::Index i, const Eigen::MatrixXd& Y,
                                 const Eigen::MatrixXd& U, Eigen::Index k);

/// Row-wise QR least squares of the one-step equation error.
ArxModel identify_arx(const Dataset& ds, const ArxModel& structure);
ArxModel identify_arx(const Dataset& ds, int na, int nb, int nk);

/// One-step output given the last max_lag() samples (oldest row first) of outputs and inputs.
Eigen::VectorXd arx_one_step(const ArxModel& model, const Eigen::MatrixXd& y_history,
                             const Eigen::MatrixXd& u_history);

/// Free run: the first max_lag() outputs are taken from `y_init`, the rest are simulated.
Eigen::MatrixXd simulate_arx(const ArxModel& model, const Eigen::MatrixXd& U, const Eigen::MatrixXd& y_init);

}  // namespace tendonid
