#pragma once

#include <Eigen/Dense>
#include <string>

namespace tendonid {

/// min 1/2 x'Hx + g'x  subject to  C x <= d
struct QpProblem {
    Eigen::MatrixXd H;
    Eigen::VectorXd g;
    Eigen::MatrixXd C;
    Eigen::VectorXd d;

    Eigen::Index variables() const { return H.rows(); }
    Eigen::Index constraints() const { return C.rows(); }
    double objective(const Eigen::VectorXd& x) const { return 0.5 * x.dot(H * x) + g.dot(x); }
};

enum class QpStatus { Optimal, Infeasible, IterationLimit, NotConvex };

std::string qp_status_name(QpStatus status);

struct KktResiduals {
    double stationarity = 0.0;     // max |Hx + g + C'lambda|
    double primal = 0.0;           // max(0, Cx - d)
    double dual = 0.0;             // max(0, -lambda)
    double complementarity = 0.0;  // max |lambda_i (Cx - d)_i|

    double max() const;
};

struct QpResult {
    Eigen::VectorXd x;
    Eigen::VectorXd lambda;  // one multiplier per row of C
    QpStatus status = QpStatus::Optimal;
    int iterations = 0;
    double objective = 0.0;
    KktResiduals kkt;
};

KktResiduals kkt_residuals(const QpProblem& qp, const Eigen::VectorXd& x, const Eigen::VectorXd& lambda);

/// Dual active-set method of Goldfarb and Idnani: starts from the unconstrained
/// minimizer and adds violated constraints one at a time; an empty feasible set
/// is reported as infeasible. Requires H positive definite.
/// Infeasibility and iteration limits are reported through the status.
QpResult solve_qp(const QpProblem& qp, int max_iterations = 0);

}  // namespace tendonid
