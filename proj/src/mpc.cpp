#include "tendonid/mpc.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include "tendonid/errors.hpp"

namespace tendonid {

void MpcConfig::validate(Eigen::Index p, Eigen::Index q) const {
    if (horizon_N < 1) throw ConfigError("mpc horizon_N must be >= 1");
    const Eigen::Index np = R.rows();
    const Eigen::Index nq = Q.rows();
    if (R.cols() != np || Q.cols() != nq || Qf.rows() != nq || Qf.cols() != nq) {
        throw ConfigError("mpc weights must be square with matching output dimension");
    }
    if (u_min.size() != np || u_max.size() != np) throw ConfigError("mpc input bounds must have p entries");
    if (x_min.size() != nq || x_max.size() != nq) throw ConfigError("mpc state bounds must have q entries");
    if (p > 0 && np != p) throw ConfigError("mpc R dimension does not match the model's input count");
    if (q > 0 && nq != q) throw ConfigError("mpc Q dimension does not match the model's output count");
    if ((u_min.array() >= u_max.array()).any()) throw ConfigError("mpc requires u_min < u_max");
    if ((x_min.array() >= x_max.array()).any()) throw ConfigError("mpc requires x_min < x_max");
    auto psd = [](const Eigen::MatrixXd& M, double floor) {
        if (!M.isApprox(M.transpose(), 1e-12)) return false;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
        return es.eigenvalues().minCoeff() >= floor;
    };
    if (!psd(Q, -1e-12) || !psd(Qf, -1e-12)) throw ConfigError("mpc Q and Qf must be symmetric positive semidefinite");
    if (!psd(R, 1e-12)) throw ConfigError("mpc R must be symmetric positive definite");
    if (!(sample_time_s > 0.0)) throw ConfigError("mpc sample_time_s must be > 0");
    if (!(slack_weight > 0.0)) throw ConfigError("mpc slack_weight must be > 0");
    if (nmpc_max_iterations < 1 || !(nmpc_tolerance > 0.0)) throw ConfigError("invalid nmpc iteration settings");
}

AffinePrediction time_invariant_prediction(const StateSpaceModel& model, int horizon) {
    AffinePrediction pred;
    pred.A.assign(static_cast<std::size_t>(horizon), model.A);
    pred.B.assign(static_cast<std::size_t>(horizon), model.B);
    const Eigen::VectorXd u0 = model.input_offset();
    pred.c.assign(static_cast<std::size_t>(horizon), -model.B * u0);
    pred.C = model.C;
    pred.D = model.D;
    pred.e = model.output_offset() - model.D * u0;
    return pred;
}

MpcQp build_qp(const AffinePrediction& pred, const MpcConfig& cfg, const Eigen::VectorXd& x0,
               const Eigen::VectorXd& u_prev, const Eigen::MatrixXd& ref) {
    const Eigen::Index p = cfg.inputs();
    const Eigen::Index q = cfg.outputs();
    const Eigen::Index n = x0.size();
    const int N = cfg.horizon_N;
    const auto Ns = static_cast<std::size_t>(N);
    if (pred.A.size() < Ns || pred.B.size() < Ns || pred.c.size() < Ns) throw DataError("prediction shorter than horizon");
    if (pred.C.rows() != q || pred.C.cols() != n || pred.D.rows() != q || pred.D.cols() != p) {
        throw DataError("prediction output matrices do not match the MPC dimensions");
    }
    for (std::size_t k = 0; k < Ns; ++k) {
        if (pred.A[k].rows() != n || pred.A[k].cols() != n || pred.B[k].rows() != n || pred.B[k].cols() != p ||
            pred.c[k].size() != n) {
            throw DataError("prediction matrices do not match the state dimension");
        }
    }
    if (pred.e.size() != 0 && pred.e.size() != q) throw DataError("prediction output offset has the wrong length");
    if (u_prev.size() != p) throw DataError("u_prev dimension does not match the MPC input count");
    const Eigen::VectorXd e_out = pred.e.size() ? pred.e : Eigen::VectorXd::Zero(q);
    if (ref.rows() < N + 1 || ref.cols() != q) throw DataError("reference must cover horizon_N + 1 samples of q outputs");

    const Eigen::Index nd = N * p;
    MpcQp out;
    out.num_du = nd;
    out.num_slack = q;
    out.G = Eigen::MatrixXd::Zero((N + 1) * q, nd);
    out.y_free.resize((N + 1) * q);
    out.ref.resize((N + 1) * q);

    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n, nd);
    Eigen::VectorXd f = x0;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, nd);
    for (int k = 0; k < N; ++k) {
        S.block(0, k * p, p, p).setIdentity();
        out.G.middleRows(k * q, q) = pred.C * F + pred.D * S;
        out.y_free.segment(k * q, q) = pred.C * f + pred.D * u_prev + e_out;
        const auto ks = static_cast<std::size_t>(k);
        F = pred.A[ks] * F + pred.B[ks] * S;
        f = pred.A[ks] * f + pred.B[ks] * u_prev + pred.c[ks];
    }
    out.G.middleRows(N * q, q) = pred.C * F + pred.D * S;
    out.y_free.segment(N * q, q) = pred.C * f + pred.D * u_prev + e_out;
    for (int k = 0; k <= N; ++k) out.ref.segment(k * q, q) = ref.row(k).transpose();

    Eigen::MatrixXd Qbar = Eigen::MatrixXd::Zero((N + 1) * q, (N + 1) * q);
    for (int k = 0; k < N; ++k) Qbar.block(k * q, k * q, q, q) = cfg.Q;
    Qbar.block(N * q, N * q, q, q) = cfg.Qf;
    const Eigen::VectorXd e = out.y_free - out.ref;

    const Eigen::Index nz = nd + q;
    QpProblem& qp = out.qp;
    qp.H = Eigen::MatrixXd::Zero(nz, nz);
    qp.g = Eigen::VectorXd::Zero(nz);
    const Eigen::MatrixXd QG = Qbar * out.G;
    qp.H.topLeftCorner(nd, nd) = 2.0 * out.G.transpose() * QG;
    for (int k = 0; k < N; ++k) qp.H.block(k * p, k * p, p, p) += 2.0 * cfg.R;
    qp.H.bottomRightCorner(q, q) = 2.0 * cfg.slack_weight * Eigen::MatrixXd::Identity(q, q);
    qp.H = 0.5 * (qp.H + qp.H.transpose()).eval();
    qp.g.head(nd) = 2.0 * QG.transpose() * e;
    out.constant = e.dot(Qbar * e);

    // Hard input bounds on cumulative inputs, soft output bounds for k = 1..N, slack >= 0.
    const Eigen::Index rows = 2 * N * p + 2 * N * q + q;
    qp.C = Eigen::MatrixXd::Zero(rows, nz);
    qp.d = Eigen::VectorXd::Zero(rows);
    Eigen::Index r = 0;
    for (int k = 0; k < N; ++k) {
        for (Eigen::Index i = 0; i < p; ++i) {
            for (int j = 0; j <= k; ++j) {
                qp.C(r, j * p + i) = 1.0;
                qp.C(r + 1, j * p + i) = -1.0;
            }
            qp.d(r) = cfg.u_max(i) - u_prev(i);
            qp.d(r + 1) = u_prev(i) - cfg.u_min(i);
            r += 2;
        }
    }
    for (int k = 1; k <= N; ++k) {
        for (Eigen::Index i = 0; i < q; ++i) {
            const Eigen::Index gi = k * q + i;
            qp.C.row(r).head(nd) = out.G.row(gi);
            qp.C(r, nd + i) = -1.0;
            qp.d(r) = cfg.x_max(i) - out.y_free(gi);
            qp.C.row(r + 1).head(nd) = -out.G.row(gi);
            qp.C(r + 1, nd + i) = -1.0;
            qp.d(r + 1) = out.y_free(gi) - cfg.x_min(i);
            r += 2;
        }
    }
    for (Eigen::Index i = 0; i < q; ++i, ++r) qp.C(r, nd + i) = -1.0;
    return out;
}

MpcQp build_qp(const StateSpaceModel& model, const MpcConfig& cfg, const Eigen::VectorXd& x0,
               const Eigen::VectorXd& u_prev, const Eigen::MatrixXd& ref) {
    if (x0.size() != model.states()) throw DataError("x0 dimension does not match the model");
    cfg.validate(model.inputs(), model.outputs());
    return build_qp(time_invariant_prediction(model, cfg.horizon_N), cfg, x0, u_prev, ref);
}

MpcSolution solve_mpc(const MpcQp& mqp, const MpcConfig& cfg, const Eigen::VectorXd& u_prev) {
    const Eigen::Index p = cfg.inputs();
    const Eigen::Index q = cfg.outputs();
    const int N = cfg.horizon_N;
    MpcSolution sol;
    sol.qp = solve_qp(mqp.qp);
    sol.status = qp_status_name(sol.qp.status);
    sol.iterations = 1;
    if (sol.qp.status != QpStatus::Optimal) {
        sol.du = Eigen::VectorXd::Zero(mqp.num_du);
        sol.u_first = u_prev;
        sol.u_sequence = u_prev.transpose().replicate(N, 1);
        sol.y_pred = Eigen::Map<const Eigen::MatrixXd>(mqp.y_free.data(), q, N + 1).transpose();
        sol.cost = std::numeric_limits<double>::infinity();
        return sol;
    }
    sol.du = sol.qp.x.head(mqp.num_du);
    sol.slack_norm = sol.qp.x.tail(mqp.num_slack).norm();
    sol.u_sequence.resize(N, p);
    Eigen::VectorXd u = u_prev;
    for (int k = 0; k < N; ++k) {
        u += sol.du.segment(k * p, p);
        sol.u_sequence.row(k) = u.transpose();
    }
    sol.u_first = sol.u_sequence.row(0).transpose();
    const Eigen::VectorXd y = mqp.G * sol.du + mqp.y_free;
    sol.y_pred = Eigen::Map<const Eigen::MatrixXd>(y.data(), q, N + 1).transpose();
    sol.cost = sol.qp.objective + mqp.constant;
    return sol;
}

MpcSolution mpc_step(const StateSpaceModel& model, const MpcConfig& cfg, const Eigen::VectorXd& x0,
                     const Eigen::VectorXd& u_prev, const Eigen::MatrixXd& ref) {
    return solve_mpc(build_qp(model, cfg, x0, u_prev, ref), cfg, u_prev);
}

MpcSolution nmpc_step(const SindyModel& model, const MpcConfig& cfg, const Eigen::VectorXd& x0,
                      const Eigen::VectorXd& u_prev, const Eigen::MatrixXd& ref) {
    cfg.validate(model.inputs(), model.outputs());
    const Eigen::Index p = model.inputs();
    const Eigen::Index q = model.outputs();
    const int N = cfg.horizon_N;
    if (x0.size() != q) throw DataError("x0 dimension does not match the SINDy model");
    if (u_prev.size() != p) throw DataError("u_prev dimension does not match the SINDy model");

    Eigen::MatrixXd U = u_prev.transpose().replicate(N, 1);
    Eigen::VectorXd du_prev = Eigen::VectorXd::Zero(N * p);
    AffinePrediction pred;
    pred.A.resize(static_cast<std::size_t>(N));
    pred.B.resize(static_cast<std::size_t>(N));
    pred.c.resize(static_cast<std::size_t>(N));
    pred.C = Eigen::MatrixXd::Identity(q, q);
    pred.D = Eigen::MatrixXd::Zero(q, p);

    MpcSolution best;
    bool have_feasible = false;
    for (int it = 1; it <= cfg.nmpc_max_iterations; ++it) {
        Eigen::VectorXd x = x0;
        bool finite = true;
        for (int k = 0; k < N; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            const Eigen::VectorXd u = U.row(k).transpose();
            model.jacobians(x, u, pred.A[ks], pred.B[ks]);
            const Eigen::VectorXd next = model.step(x, u);
            pred.c[ks] = next - pred.A[ks] * x - pred.B[ks] * u;
            x = next;
            if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e6) {
                finite = false;
                break;
            }
        }
        if (!finite) break;
        MpcSolution sol = solve_mpc(build_qp(pred, cfg, x0, u_prev, ref), cfg, u_prev);
        if (sol.qp.status != QpStatus::Optimal) {
            if (!have_feasible) return sol;
            break;
        }
        sol.iterations = it;
        const double change = (sol.du - du_prev).norm();
        du_prev = sol.du;
        U = sol.u_sequence;
        best = std::move(sol);
        have_feasible = true;
        if (change < cfg.nmpc_tolerance) {
            best.status = "optimal";
            best.cost = sindy_plan_cost(model, cfg, x0, u_prev, U, ref);
            return best;
        }
    }
    if (!have_feasible) {
        MpcSolution hold;
        hold.status = "infeasible";
        hold.u_first = u_prev;
        hold.u_sequence = u_prev.transpose().replicate(N, 1);
        hold.du = Eigen::VectorXd::Zero(N * p);
        hold.cost = std::numeric_limits<double>::infinity();
        return hold;
    }
    best.status = "not_converged";
    best.cost = sindy_plan_cost(model, cfg, x0, u_prev, best.u_sequence, ref);
    return best;
}

double sindy_plan_cost(const SindyModel& model, const MpcConfig& cfg, const Eigen::VectorXd& x0,
                       const Eigen::VectorXd& u_prev, const Eigen::MatrixXd& u_seq, const Eigen::MatrixXd& ref) {
    const int N = cfg.horizon_N;
    if (u_seq.rows() < N || ref.rows() < N + 1) throw DataError("plan or reference shorter than the horizon");
    double J = 0.0;
    Eigen::VectorXd x = x0;
    Eigen::VectorXd last = u_prev;
    for (int k = 0; k < N; ++k) {
        const Eigen::VectorXd e = x - ref.row(k).transpose();
        J += e.dot(cfg.Q * e);
        const Eigen::VectorXd u = u_seq.row(k).transpose();
        J += (u - last).dot(cfg.R * (u - last));
        last = u;
        x = model.step(x, u);
    }
    const Eigen::VectorXd e = x - ref.row(N).transpose();
    return J + e.dot(cfg.Qf * e);
}

std::string observer_kind_name(ObserverConfig::Kind kind) {
    return kind == ObserverConfig::Kind::Kalman ? "kalman" : "direct";
}

ObserverConfig::Kind parse_observer_kind(const std::string& name) {
    if (name == "kalman") return ObserverConfig::Kind::Kalman;
    if (name == "direct") return ObserverConfig::Kind::Direct;
    throw ConfigError("unknown observer kind '" + name + "'");
}

KalmanObserver::KalmanObserver(StateSpaceModel model, const ObserverConfig& cfg, Eigen::VectorXd x0)
    : model_(std::move(model)), x_(std::move(x0)) {
    if (!(cfg.process_noise >= 0.0 && cfg.measurement_noise >= 0.0 && cfg.initial_covariance >= 0.0)) {
        throw ConfigError("observer covariances must be nonnegative");
    }
    const Eigen::Index n = model_.states();
    if (x_.size() != n) throw DataError("observer initial state dimension mismatch");
    Qn_ = cfg.process_noise * Eigen::MatrixXd::Identity(n, n);
    Rn_ = cfg.measurement_noise * Eigen::MatrixXd::Identity(model_.outputs(), model_.outputs());
    P_ = cfg.initial_covariance * Eigen::MatrixXd::Identity(n, n);
}

void KalmanObserver::predict(const Eigen::VectorXd& u) {
    x_ = model_.A * x_ + model_.B * (u - model_.input_offset());
    P_ = model_.A * P_ * model_.A.transpose() + Qn_;
    P_ = 0.5 * (P_ + P_.transpose()).eval();
}

void KalmanObserver::update(const Eigen::VectorXd& y, const Eigen::VectorXd& u) {
    const Eigen::MatrixXd& C = model_.C;
    const Eigen::MatrixXd S = C * P_ * C.transpose() + Rn_;
    const Eigen::MatrixXd PCt = P_ * C.transpose();
    const Eigen::MatrixXd K = S.completeOrthogonalDecomposition().solve(PCt.transpose()).transpose();
    x_ += K * (y - model_.output_offset() - C * x_ - model_.D * (u - model_.input_offset()));
    const Eigen::MatrixXd IKC = Eigen::MatrixXd::Identity(P_.rows(), P_.cols()) - K * C;
    P_ = IKC * P_ * IKC.transpose() + K * Rn_ * K.transpose();
    P_ = 0.5 * (P_ + P_.transpose()).eval();
}

Eigen::VectorXd steady_state(const StateSpaceModel& model, const Eigen::VectorXd& u) {
    const Eigen::Index n = model.states();
    const Eigen::MatrixXd IA = Eigen::MatrixXd::Identity(n, n) - model.A;
    return IA.colPivHouseholderQr().solve(model.B * (u - model.input_offset()));
}

Eigen::VectorXd estimate_state_direct(const StateSpaceModel& model, const Eigen::MatrixXd& U,
                                      const Eigen::MatrixXd& Y, Eigen::Index window) {
    const Eigen::Index n = model.states();
    const Eigen::Index q = model.outputs();
    if (U.rows() != Y.rows() || U.cols() != model.inputs() || Y.cols() != q) {
        throw DataError("observer history does not match the model dimensions");
    }
    if (window < 0) throw ConfigError("direct observer window must be >= 0");
    const Eigen::Index w = window == 0 ? n : window;
    if (Y.rows() < w) throw DataError("direct state estimation needs at least " + std::to_string(w) + " samples");
    const Eigen::MatrixXd O = observability_matrix(model, w);
    if (numerical_rank(O, 1e-10) < n) {
        throw NumericError("model is unobservable over a " + std::to_string(w) + "-sample window");
    }

    const Eigen::Index s = Y.rows() - w;
    const Eigen::VectorXd u0 = model.input_offset();
    const Eigen::VectorXd y0 = model.output_offset();
    // y_{s+j} - (forced response) = C A^j x_s
    Eigen::VectorXd rhs(w * q);
    for (Eigen::Index j = 0; j < w; ++j) {
        Eigen::VectorXd forced = model.D * (U.row(s + j).transpose() - u0) + y0;
        Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < j; ++i) z = model.A * z + model.B * (U.row(s + i).transpose() - u0);
        forced += model.C * z;
        rhs.segment(j * q, q) = Y.row(s + j).transpose() - forced;
    }
    Eigen::VectorXd x = O.colPivHouseholderQr().solve(rhs);
    for (Eigen::Index j = 0; j + 1 < w; ++j) x = model.A * x + model.B * (U.row(s + j).transpose() - u0);
    return x;
}

Eigen::VectorXd estimate_state(const ObserverConfig& obs, const StateSpaceModel& model, const Eigen::MatrixXd& U,
                               const Eigen::MatrixXd& Y) {
    if (obs.kind == ObserverConfig::Kind::Direct) return estimate_state_direct(model, U, Y, obs.direct_window);
    if (U.rows() != Y.rows() || U.rows() < 1) throw DataError("observer history must be non-empty and aligned");
    if (numerical_rank(observability_matrix(model, model.states()), 1e-10) < model.states()) {
        throw NumericError("model is unobservable; the state cannot be estimated");
    }
    KalmanObserver kf(model, obs, steady_state(model, U.row(0).transpose()));
    kf.update(Y.row(0).transpose(), U.row(0).transpose());
    for (Eigen::Index k = 1; k < U.rows(); ++k) {
        kf.predict(U.row(k - 1).transpose());
        kf.update(Y.row(k).transpose(), U.row(k).transpose());
    }
    return kf.state();
}

LinearMpcController::LinearMpcController(StateSpaceModel model, MpcConfig cfg, ObserverConfig observer)
    : model_(std::move(model)), cfg_(std::move(cfg)), obs_cfg_(observer) {
    model_.validate();
    cfg_.validate(model_.inputs(), model_.outputs());
    if (numerical_rank(observability_matrix(model_, model_.states()), 1e-10) < model_.states()) {
        throw NumericError("model is unobservable; the state cannot be estimated");
    }
}

void LinearMpcController::reset(const Eigen::VectorXd&, const Eigen::VectorXd& u0) {
    first_ = true;
    u_hist_.clear();
    y_hist_.clear();
    kalman_.reset();
    if (obs_cfg_.kind == ObserverConfig::Kind::Kalman) {
        kalman_ = std::make_unique<KalmanObserver>(model_, obs_cfg_, steady_state(model_, u0));
    }
}

ControlDecision LinearMpcController::step(const Eigen::VectorXd& y, const Eigen::VectorXd& u_prev,
                                          const Eigen::MatrixXd& ref_window) {
    // The input for the current sample is not known yet; u_prev stands in for it in D u.
    Eigen::VectorXd x;
    if (obs_cfg_.kind == ObserverConfig::Kind::Kalman) {
        if (!kalman_) kalman_ = std::make_unique<KalmanObserver>(model_, obs_cfg_, steady_state(model_, u_prev));
        if (!first_) kalman_->predict(u_prev);
        kalman_->update(y, u_prev);
        x = kalman_->state();
    } else {
        if (!first_) u_hist_.push_back(u_prev);
        y_hist_.push_back(y);
        const auto n = static_cast<std::size_t>(obs_cfg_.direct_window > 0 ? obs_cfg_.direct_window : model_.states());
        while (y_hist_.size() > n) {
            y_hist_.erase(y_hist_.begin());
            u_hist_.erase(u_hist_.begin());
        }
        if (y_hist_.size() < n) {
            x = steady_state(model_, u_prev);
        } else {
            Eigen::MatrixXd U(static_cast<Eigen::Index>(n), model_.inputs());
            Eigen::MatrixXd Y(static_cast<Eigen::Index>(n), model_.outputs());
            for (std::size_t j = 0; j < n; ++j) {
                U.row(static_cast<Eigen::Index>(j)) = (j < u_hist_.size() ? u_hist_[j] : u_prev).transpose();
                Y.row(static_cast<Eigen::Index>(j)) = y_hist_[j].transpose();
            }
            x = estimate_state_direct(model_, U, Y, obs_cfg_.direct_window);
        }
    }
    first_ = false;
    const MpcSolution sol = mpc_step(model_, cfg_, x, u_prev, ref_window);
    return {sol.u_first, sol.status, sol.qp.iterations};
}

NonlinearMpcController::NonlinearMpcController(SindyModel model, MpcConfig cfg)
    : model_(std::move(model)), cfg_(std::move(cfg)) {
    model_.validate();
    cfg_.validate(model_.inputs(), model_.outputs());
}

ControlDecision NonlinearMpcController::step(const Eigen::VectorXd& y, const Eigen::VectorXd& u_prev,
                                             const Eigen::MatrixXd& ref_window) {
    const MpcSolution sol = nmpc_step(model_, cfg_, y, u_prev, ref_window);
    return {sol.u_first, sol.status, sol.iterations};
}

double ClosedLoopLog::rms_error() const {
    if (records.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& r : records) acc += (r.q - r.ref).squaredNorm();
    return std::sqrt(acc / (2.0 * static_cast<double>(records.size())));
}

double ClosedLoopLog::max_abs_error() const {
    double m = 0.0;
    for (const auto& r : records) m = std::max(m, (r.q - r.ref).cwiseAbs().maxCoeff());
    return m;
}

double ClosedLoopLog::max_solve_ms() const {
    double m = 0.0;
    for (const auto& r : records) m = std::max(m, r.solve_ms);
    return m;
}

double ClosedLoopLog::max_abs_state() const {
    double m = 0.0;
    for (const auto& r : records) m = std::max(m, r.q.cwiseAbs().maxCoeff());
    return m;
}

bool ClosedLoopLog::inputs_within(double lo, double hi) const {
    for (const auto& r : records) {
        if (r.f.minCoeff() < lo || r.f.maxCoeff() > hi) return false;
    }
    return true;
}

void ClosedLoopLog::write_csv(std::ostream& os) const {
    os.precision(std::numeric_limits<double>::max_digits10);
    os << "t,ref1,ref2,q1,q2,f1,f2,f3,f4,status,solve_ms\n";
    for (const auto& r : records) {
        os << r.t << ',' << r.ref(0) << ',' << r.ref(1) << ',' << r.q(0) << ',' << r.q(1);
        for (int i = 0; i < 4; ++i) os << ',' << r.f(i);
        os << ',' << r.status << ',' << r.solve_ms << '\n';
    }
}

void ClosedLoopLog::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    write_csv(out);
    if (!out) throw DataError("failed writing '" + path + "'");
}

ClosedLoopLog run_closed_loop(const SnakePlantConfig& plant, Controller& controller, const MpcConfig& cfg,
                              const Eigen::MatrixXd& ref, double duration_s, const PlantState& initial) {
    plant.validate();
    cfg.validate(4, 2);
    if (controller.inputs() != 4 || controller.outputs() != 2) {
        throw ConfigError("closed loop needs a controller with 4 inputs and 2 outputs");
    }
    const double dt = cfg.sample_time_s;
    const auto steps = static_cast<Eigen::Index>(std::llround(duration_s / dt));
    const int N = controller.horizon();
    if (ref.cols() != 2 || ref.rows() < steps + N + 1) {
        throw DataError("reference must have 2 columns and cover duration + horizon samples");
    }

    ClosedLoopLog log;
    log.records.reserve(static_cast<std::size_t>(steps));
    Eigen::VectorXd u_prev = Eigen::VectorXd::Constant(4, plant.force_bias_N);
    PlantState state = initial;
    controller.reset(state.q, u_prev);
    for (Eigen::Index k = 0; k < steps; ++k) {
        ClosedLoopRecord rec;
        rec.t = static_cast<double>(k) * dt;
        rec.ref = ref.row(k).transpose();
        rec.q = state.q;

        const auto t0 = std::chrono::steady_clock::now();
        ControlDecision dec = controller.step(state.q, u_prev, ref.middleRows(k, N + 1));
        const auto t1 = std::chrono::steady_clock::now();
        rec.solve_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        rec.status = dec.status;

        const bool usable = (dec.status == "optimal" || dec.status == "not_converged") && dec.u.size() == 4 &&
                            dec.u.allFinite();
        Eigen::VectorXd u = usable ? dec.u : u_prev;
        if (!usable) ++log.solver_failures;
        const Eigen::VectorXd clipped = u.cwiseMax(cfg.u_min).cwiseMin(cfg.u_max);
        if ((clipped - u).cwiseAbs().maxCoeff() > 1e-9) {
            rec.clipped = true;
            ++log.clipping_events;
        }
        rec.f = clipped;
        log.records.push_back(rec);

        state = plant_advance(state, clipped, dt, plant);
        u_prev = clipped;
    }
    return log;
}

}  // namespace tendonid
