#include "tendonid/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "tendonid/errors.hpp"

namespace tendonid {

std::string qp_status_name(QpStatus status) {
    switch (status) {
        case QpStatus::Optimal: return "optimal";
        case QpStatus::Infeasible: return "infeasible";
        case QpStatus::IterationLimit: return "iteration_limit";
        case QpStatus::NotConvex: return "not_convex";
    }
    return "unknown";
}

double KktResiduals::max() const { return std::max({stationarity, primal, dual, complementarity}); }

KktResiduals kkt_residuals(const QpProblem& qp, const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) {
    KktResiduals r;
    Eigen::VectorXd grad = qp.H * x + qp.g;
    if (qp.constraints() > 0) grad += qp.C.transpose() * lambda;
    r.stationarity = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
    if (qp.constraints() > 0) {
        const Eigen::VectorXd slack = qp.C * x - qp.d;
        r.primal = std::max(0.0, slack.maxCoeff());
        r.dual = std::max(0.0, -lambda.minCoeff());
        r.complementarity = lambda.cwiseProduct(slack).cwiseAbs().maxCoeff();
    }
    return r;
}

namespace {

struct ActiveSetSolver {
    const QpProblem& qp;
    Eigen::MatrixXd Hinv;
    std::vector<Eigen::Index> active;

    Eigen::MatrixXd active_rows() const {
        Eigen::MatrixXd N(static_cast<Eigen::Index>(active.size()), qp.variables());
        for (std::size_t k = 0; k < active.size(); ++k) N.row(static_cast<Eigen::Index>(k)) = qp.C.row(active[k]);
        return N;
    }

    // Equality-constrained minimizer on the active set, with one refinement pass.
    void polish(Eigen::VectorXd& x, Eigen::VectorXd& lambda) const {
        lambda.setZero(qp.constraints());
        if (active.empty()) {
            x = -Hinv * qp.g;
            x -= Hinv * (qp.H * x + qp.g);
            return;
        }
        const Eigen::MatrixXd N = active_rows();
        Eigen::VectorXd dA(N.rows());
        for (std::size_t k = 0; k < active.size(); ++k) dA(static_cast<Eigen::Index>(k)) = qp.d(active[k]);
        const Eigen::MatrixXd M = N * Hinv * N.transpose();
        const auto lu = M.fullPivLu();
        Eigen::VectorXd la = -lu.solve(dA + N * Hinv * qp.g);
        x = -Hinv * (qp.g + N.transpose() * la);
        // Residual correction of the KKT system.
        const Eigen::VectorXd r1 = qp.H * x + qp.g + N.transpose() * la;
        const Eigen::VectorXd r2 = N * x - dA;
        const Eigen::VectorXd dl = lu.solve(r2 - N * Hinv * r1);
        la += dl;
        x -= Hinv * (r1 + N.transpose() * dl);
        for (std::size_t k = 0; k < active.size(); ++k) lambda(active[k]) = la(static_cast<Eigen::Index>(k));
    }
};

}  // namespace

QpResult solve_qp(const QpProblem& qp, int max_iterations) {
    const Eigen::Index n = qp.variables();
    const Eigen::Index mc = qp.constraints();
    if (qp.H.cols() != n || qp.g.size() != n || (mc > 0 && qp.C.cols() != n) || qp.d.size() != mc) {
        throw DataError("QP dimensions are inconsistent");
    }
    if (!qp.H.allFinite() || !qp.g.allFinite() || !qp.C.allFinite() || !qp.d.allFinite()) {
        throw NumericError("QP data are not finite");
    }
    if (max_iterations <= 0) max_iterations = static_cast<int>(10 * (n + mc) + 100);

    QpResult result;
    result.x = Eigen::VectorXd::Zero(n);
    result.lambda = Eigen::VectorXd::Zero(mc);

    const Eigen::MatrixXd Hs = 0.5 * (qp.H + qp.H.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(Hs);
    if (llt.info() != Eigen::Success) {
        result.status = QpStatus::NotConvex;
        return result;
    }
    ActiveSetSolver solver{qp, llt.solve(Eigen::MatrixXd::Identity(n, n)), {}};
    const Eigen::MatrixXd& Hinv = solver.Hinv;

    // Internally constraints are written n_j'x >= b_j with n_j = -C_j, b_j = -d_j.
    Eigen::VectorXd x = -Hinv * qp.g;
    Eigen::VectorXd u;  // multipliers of the active set
    const double scale = 1.0 + (mc > 0 ? qp.d.cwiseAbs().maxCoeff() : 0.0);
    const double viol_tol = 1e-12 * scale;
    std::vector<char> in_active(static_cast<std::size_t>(mc), 0);

    int it = 0;
    for (;;) {
        Eigen::Index p = -1;
        double worst = -viol_tol;
        for (Eigen::Index j = 0; j < mc; ++j) {
            if (in_active[static_cast<std::size_t>(j)]) continue;
            const double s = qp.d(j) - qp.C.row(j).dot(x);
            if (s < worst) {
                worst = s;
                p = j;
            }
        }
        if (p < 0) break;

        const Eigen::VectorXd np = -qp.C.row(p).transpose();
        const double bp = -qp.d(p);
        Eigen::VectorXd uplus(u.size() + 1);
        uplus << u, 0.0;

        bool added = false;
        while (!added) {
            if (++it > max_iterations) {
                result.status = QpStatus::IterationLimit;
                result.iterations = it - 1;
                result.x = x;
                result.objective = qp.objective(x);
                return result;
            }
            const Eigen::Index na = static_cast<Eigen::Index>(solver.active.size());
            const Eigen::VectorXd Hnp = Hinv * np;
            Eigen::VectorXd z = Hnp;
            Eigen::VectorXd r;
            if (na > 0) {
                const Eigen::MatrixXd N = -solver.active_rows().transpose();  // columns n_j
                const Eigen::MatrixXd M = N.transpose() * Hinv * N;
                r = M.fullPivLu().solve(N.transpose() * Hnp);
                z -= Hinv * (N * r);
            }
            const double znp = z.dot(np);
            const bool z_zero = z.norm() <= 1e-12 * std::max(1.0, Hnp.norm()) || znp <= 1e-14 * Hnp.norm() * np.norm();

            double t1 = std::numeric_limits<double>::infinity();
            Eigen::Index drop = -1;
            for (Eigen::Index k = 0; k < na; ++k) {
                if (r(k) > 1e-14) {
                    const double t = uplus(k) / r(k);
                    if (t < t1) {
                        t1 = t;
                        drop = k;
                    }
                }
            }
            const double t2 = z_zero ? std::numeric_limits<double>::infinity() : -(np.dot(x) - bp) / znp;
            const double t = std::min(t1, t2);
            if (!std::isfinite(t)) {
                result.status = QpStatus::Infeasible;
                result.iterations = it;
                result.x = x;
                result.objective = qp.objective(x);
                return result;
            }
            if (na > 0) uplus.head(na) -= t * r;
            uplus(na) += t;
            if (!z_zero) x += t * z;

            if (t2 <= t1) {
                solver.active.push_back(p);
                in_active[static_cast<std::size_t>(p)] = 1;
                u = uplus;
                added = true;
            } else {
                in_active[static_cast<std::size_t>(solver.active[static_cast<std::size_t>(drop)])] = 0;
                solver.active.erase(solver.active.begin() + drop);
                Eigen::VectorXd shrunk(uplus.size() - 1);
                shrunk << uplus.head(drop), uplus.tail(uplus.size() - drop - 1);
                uplus = shrunk;
            }
        }
    }

    solver.polish(x, result.lambda);
    result.x = x;
    result.iterations = it;
    result.objective = qp.objective(x);
    result.kkt = kkt_residuals(qp, x, result.lambda);
    result.status = QpStatus::Optimal;
    return result;
}

}  // namespace tendonid
