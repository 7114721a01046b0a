#pragma once

#include <Eigen/Dense>
#include <vector>

namespace tendonid {

/// Discrete-time realization about an operating point (u0, y0):
///   x+ = A x + B (u - u0),  y = C x + D (u - u0) + y0.
/// Empty offsets mean zero.
struct StateSpaceModel {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Eigen::MatrixXd C;
    Eigen::MatrixXd D;
    double sample_time_s = 1.0;
    Eigen::VectorXd u_offset;
    Eigen::VectorXd y_offset;

    Eigen::VectorXd input_offset() const {
        return u_offset.size() ? u_offset : Eigen::VectorXd::Zero(inputs());
    }
    Eigen::VectorXd output_offset() const {
        return y_offset.size() ? y_offset : Eigen::VectorXd::Zero(outputs());
    }

    Eigen::Index states() const { return A.rows(); }
    Eigen::Index inputs() const { return B.cols(); }
    Eigen::Index outputs() const { return C.rows(); }

    /// Throws DataError on inconsistent dimensions or non-finite entries.
    void validate() const;
};

/// Impulse response blocks: k = 0 gives D, k >= 1 gives C A^(k-1) B.
std::vector<Eigen::MatrixXd> markov_parameters(const StateSpaceModel& m, int count);

/// [C; CA; ...; CA^(rows-1)]
Eigen::MatrixXd observability_matrix(const StateSpaceModel& m, Eigen::Index block_rows);

/// [B, AB, ..., A^(cols-1) B]
Eigen::MatrixXd controllability_matrix(const StateSpaceModel& m, Eigen::Index block_cols);

/// Numerical rank from singular values relative to the largest.
Eigen::Index numerical_rank(const Eigen::MatrixXd& M, double rel_tol = 1e-10);

double spectral_radius(const Eigen::MatrixXd& A);

/// Free response y_0..y_{m-1} for inputs U (m x p) from x0.
Eigen::MatrixXd simulate_state_space(const StateSpaceModel& m, const Eigen::MatrixXd& U,
                                     const Eigen::VectorXd& x0);

/// Least-squares initial state from the first `window` samples of (U, Y).
Eigen::VectorXd estimate_initial_state(const StateSpaceModel& m, const Eigen::MatrixXd& U,
                                       const Eigen::MatrixXd& Y, Eigen::Index window = 20);

}  // namespace tendonid
