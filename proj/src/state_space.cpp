#include "tendonid/state_space.hpp"

#include <cmath>

#include "tendonid/errors.hpp"

namespace tendonid {

void StateSpaceModel::validate() const {
    const auto n = A.rows();
    if (A.cols() != n) throw DataError("A must be square");
    if (B.rows() != n) throw DataError("B row count must equal state dimension");
    if (C.cols() != n) throw DataError("C column count must equal state dimension");
    if (D.rows() != C.rows() || D.cols() != B.cols()) throw DataError("D must be outputs x inputs");
    if (!(A.allFinite() && B.allFinite() && C.allFinite() && D.allFinite())) {
        throw DataError("state-space matrices contain non-finite entries");
    }
    if (u_offset.size() != 0 && u_offset.size() != B.cols()) throw DataError("u_offset must have one entry per input");
    if (y_offset.size() != 0 && y_offset.size() != C.rows()) throw DataError("y_offset must have one entry per output");
    if (!(u_offset.allFinite() && y_offset.allFinite())) throw DataError("operating point is not finite");
    if (!(sample_time_s > 0.0)) throw DataError("sample time must be positive");
}

std::vector<Eigen::MatrixXd> markov_parameters(const StateSpaceModel& m, int count) {
    std::vector<Eigen::MatrixXd> out;
    if (count <= 0) return out;
    out.push_back(m.D);
    Eigen::MatrixXd AkB = m.B;
    for (int k = 1; k < count; ++k) {
        out.push_back(m.C * AkB);
        AkB = m.A * AkB;
    }
    return out;
}

Eigen::MatrixXd observability_matrix(const StateSpaceModel& m, Eigen::Index block_rows) {
    const auto q = m.outputs();
    Eigen::MatrixXd O(q * block_rows, m.states());
    Eigen::MatrixXd CAk = m.C;
    for (Eigen::Index k = 0; k < block_rows; ++k) {
        O.middleRows(k * q, q) = CAk;
        CAk = CAk * m.A;
    }
    return O;
}

Eigen::MatrixXd controllability_matrix(const StateSpaceModel& m, Eigen::Index block_cols) {
    const auto p = m.inputs();
    Eigen::MatrixXd K(m.states(), p * block_cols);
    Eigen::MatrixXd AkB = m.B;
    for (Eigen::Index k = 0; k < block_cols; ++k) {
        K.middleCols(k * p, p) = AkB;
        AkB = m.A * AkB;
    }
    return K;
}

Eigen::Index numerical_rank(const Eigen::MatrixXd& M, double rel_tol) {
    if (M.size() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > rel_tol * s(0)) ++r;
    }
    return r;
}

double spectral_radius(const Eigen::MatrixXd& A) {
    if (A.size() == 0) return 0.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::MatrixXd simulate_state_space(const StateSpaceModel& m, const Eigen::MatrixXd& U,
                                     const Eigen::VectorXd& x0) {
    if (U.cols() != m.inputs()) throw DataError("input channel count does not match model");
    if (x0.size() != m.states()) throw DataError("initial state dimension does not match model");
    Eigen::MatrixXd Y(U.rows(), m.outputs());
    const Eigen::VectorXd u0 = m.input_offset();
    const Eigen::VectorXd y0 = m.output_offset();
    Eigen::VectorXd x = x0;
    for (Eigen::Index k = 0; k < U.rows(); ++k) {
        const Eigen::VectorXd u = U.row(k).transpose() - u0;
        Y.row(k) = (m.C * x + m.D * u + y0).transpose();
        x = m.A * x + m.B * u;
        if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e6 || Y.row(k).cwiseAbs().maxCoeff() > 1e6) {
            throw DivergenceError("state-space simulation diverged at sample " + std::to_string(k));
        }
    }
    return Y;
}

Eigen::VectorXd estimate_initial_state(const StateSpaceModel& m, const Eigen::MatrixXd& U,
                                       const Eigen::MatrixXd& Y, Eigen::Index window) {
    window = std::min<Eigen::Index>(window, Y.rows());
    const auto n = m.states();
    const auto q = m.outputs();
    if (n == 0) return Eigen::VectorXd();
    // y_k - (forced response from zero state) = C A^k x0
    const Eigen::MatrixXd forced = simulate_state_space(m, U.topRows(window), Eigen::VectorXd::Zero(n));
    const Eigen::MatrixXd O = observability_matrix(m, window);
    Eigen::VectorXd rhs(window * q);
    for (Eigen::Index k = 0; k < window; ++k) {
        rhs.segment(k * q, q) = (Y.row(k) - forced.row(k)).transpose();
    }
    return O.completeOrthogonalDecomposition().solve(rhs);
}

}  // namespace tendonid
