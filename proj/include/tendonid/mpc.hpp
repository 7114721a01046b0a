#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "tendonid/plantsim.hpp"
#include "tendonid/qp.hpp"
#include "tendonid/sindyc.hpp"
#include "tendonid/state_space.hpp"

namespace tendonid {

/// Tracking cost over outputs y_0..y_N with input-rate penalty:
///   J = sum_{k<N} |y_k - r_k|^2_Q + |y_N - r_N|^2_Qf + sum_{k<N} |u_k - u_{k-1}|^2_R + w |s|^2
/// with hard input bounds and output bounds softened by one slack per output.
struct MpcConfig {
    int horizon_N = 10;
    Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(2, 2);
    Eigen::MatrixXd Qf = Eigen::MatrixXd::Identity(2, 2);
    Eigen::MatrixXd R = 0.1 * Eigen::MatrixXd::Identity(4, 4);
    Eigen::VectorXd u_min = Eigen::VectorXd::Constant(4, 20.0);
    Eigen::VectorXd u_max = Eigen::VectorXd::Constant(4, 190.0);
    Eigen::VectorXd x_min = Eigen::VectorXd::Constant(2, -1.0);
    Eigen::VectorXd x_max = Eigen::VectorXd::Constant(2, 1.0);
    double sample_time_s = 0.03;
    double slack_weight = 1e4;
    int nmpc_max_iterations = 5;
    double nmpc_tolerance = 1e-6;

    Eigen::Index inputs() const { return R.rows(); }
    Eigen::Index outputs() const { return Q.rows(); }
    /// Throws ConfigError; checks shapes against (p, q) when they are positive.
    void validate(Eigen::Index p = 0, Eigen::Index q = 0) const;
};

/// x_{k+1} = A_k x_k + B_k u_k + c_k,  y_k = C x_k + D u_k + e,  k = 0..N-1.
struct AffinePrediction {
    std::vector<Eigen::MatrixXd> A, B;
    std::vector<Eigen::VectorXd> c;
    Eigen::MatrixXd C, D;
    Eigen::VectorXd e;  // empty means zero
};

AffinePrediction time_invariant_prediction(const StateSpaceModel& model, int horizon);

/// Condensed QP in z = [du_0; ...; du_{N-1}; s].
struct MpcQp {
    QpProblem qp;
    Eigen::MatrixXd G;        // stacked outputs y_0..y_N = G du + y_free
    Eigen::VectorXd y_free;
    Eigen::VectorXd ref;      // stacked reference r_0..r_N
    double constant = 0.0;    // J = 1/2 z'Hz + g'z + constant
    Eigen::Index num_du = 0;
    Eigen::Index num_slack = 0;
};

/// `ref` holds at least horizon_N + 1 rows of q outputs.
MpcQp build_qp(const AffinePrediction& pred, const MpcConfig& cfg, const Eigen::VectorXd& x0,
               const Eigen::VectorXd& u_prev, const Eigen::MatrixXd& ref);
MpcQp build_qp(const StateSpaceModel& model, const MpcConfig& cfg, const Eigen::VectorXd& x0,
               const Eigen::VectorXd& u_prev, const Eigen::MatrixXd& ref);

struct MpcSolution {
    Eigen::VectorXd du;        // N p increments
    Eigen::VectorXd u_first;   // u_prev + du_0
    Eigen::MatrixXd u_sequence;  // N x p absolute inputs
    Eigen::MatrixXd y_pred;    // (N+1) x q
    double slack_norm = 0.0;
    double cost = 0.0;
    std::string status;
    int iterations = 0;
    QpResult qp;
};

MpcSolution solve_mpc(const MpcQp& mqp, const MpcConfig& cfg, const Eigen::VectorXd& u_prev);

MpcSolution mpc_step(const StateSpaceModel& model, const MpcConfig& cfg, const Eigen::VectorXd& x0,
                     const Eigen::VectorXd& u_prev, const Eigen::MatrixXd& ref);

/// Successive linearization of the SINDy map about the predicted trajectory,
/// starting from u_prev held over the horizon.
MpcSolution nmpc_step(const SindyModel& model, const MpcConfig& cfg, const Eigen::VectorXd& x0,
                      const Eigen::VectorXd& u_prev, const Eigen::MatrixXd& ref);

/// Evaluates the MPC cost of an absolute input sequence (N x p) by simulating the
/// SINDy map; used to compare candidate plans.
double sindy_plan_cost(const SindyModel& model, const MpcConfig& cfg, const Eigen::VectorXd& x0,
                       const Eigen::VectorXd& u_prev, const Eigen::MatrixXd& u_seq, const Eigen::MatrixXd& ref);

struct ObserverConfig {
    enum class Kind { Kalman, Direct };
    Kind kind = Kind::Direct;
    double process_noise = 1e-3;
    double measurement_noise = 1e-6;
    double initial_covariance = 1.0;
    /// Direct observer: trailing input/output pairs used per estimate; 0 means the model order.
    int direct_window = 0;
};

std::string observer_kind_name(ObserverConfig::Kind kind);
ObserverConfig::Kind parse_observer_kind(const std::string& name);

/// Kalman filter for x+ = A x + B u, y = C x + D u + v, covariance in Joseph form.
class KalmanObserver {
public:
    KalmanObserver(StateSpaceModel model, const ObserverConfig& cfg, Eigen::VectorXd x0);

    /// Propagates with the input applied over the last interval.
    void predict(const Eigen::VectorXd& u);
    /// Corrects with measurement y taken while input u is applied.
    void update(const Eigen::VectorXd& y, const Eigen::VectorXd& u);

    const Eigen::VectorXd& state() const { return x_; }
    const Eigen::MatrixXd& covariance() const { return P_; }

private:
    StateSpaceModel model_;
    Eigen::MatrixXd Qn_, Rn_, P_;
    Eigen::VectorXd x_;
};

/// State at the last row of (U, Y) fitted, in least squares, to the trailing
/// `window` input/output pairs (0 means the model order n). Throws NumericError
/// if the state is unobservable over that window.
Eigen::VectorXd estimate_state_direct(const StateSpaceModel& model, const Eigen::MatrixXd& U,
                                      const Eigen::MatrixXd& Y, Eigen::Index window = 0);

/// State at the last row of the history using the configured observer. The
/// Kalman variant starts from the steady state of the first input.
Eigen::VectorXd estimate_state(const ObserverConfig& obs, const StateSpaceModel& model,
                               const Eigen::MatrixXd& U, const Eigen::MatrixXd& Y);

/// Steady state x = (I - A)^-1 B (u - u0).
Eigen::VectorXd steady_state(const StateSpaceModel& model, const Eigen::VectorXd& u);

struct ControlDecision {
    Eigen::VectorXd u;
    std::string status;
    int iterations = 0;
};

class Controller {
public:
    virtual ~Controller() = default;
    virtual Eigen::Index inputs() const = 0;
    virtual Eigen::Index outputs() const = 0;
    virtual int horizon() const = 0;
    virtual void reset(const Eigen::VectorXd& y0, const Eigen::VectorXd& u0) = 0;
    /// Measurement y_k, previously applied input, reference rows k..k+N.
    virtual ControlDecision step(const Eigen::VectorXd& y, const Eigen::VectorXd& u_prev,
                                 const Eigen::MatrixXd& ref_window) = 0;
};

class LinearMpcController : public Controller {
public:
    LinearMpcController(StateSpaceModel model, MpcConfig cfg, ObserverConfig observer = {});
    Eigen::Index inputs() const override { return model_.inputs(); }
    Eigen::Index outputs() const override { return model_.outputs(); }
    int horizon() const override { return cfg_.horizon_N; }
    void reset(const Eigen::VectorXd& y0, const Eigen::VectorXd& u0) override;
    ControlDecision step(const Eigen::VectorXd& y, const Eigen::VectorXd& u_prev,
                         const Eigen::MatrixXd& ref_window) override;

private:
    StateSpaceModel model_;
    MpcConfig cfg_;
    ObserverConfig obs_cfg_;
    std::unique_ptr<KalmanObserver> kalman_;
    std::vector<Eigen::VectorXd> u_hist_, y_hist_;
    bool first_ = true;
};

class NonlinearMpcController : public Controller {
public:
    NonlinearMpcController(SindyModel model, MpcConfig cfg);
    Eigen::Index inputs() const override { return model_.inputs(); }
    Eigen::Index outputs() const override { return model_.outputs(); }
    int horizon() const override { return cfg_.horizon_N; }
    void reset(const Eigen::VectorXd&, const Eigen::VectorXd&) override {}
    ControlDecision step(const Eigen::VectorXd& y, const Eigen::VectorXd& u_prev,
                         const Eigen::MatrixXd& ref_window) override;

private:
    SindyModel model_;
    MpcConfig cfg_;
};

struct ClosedLoopRecord {
    double t = 0.0;
    Eigen::Vector2d ref = Eigen::Vector2d::Zero();
    Eigen::Vector2d q = Eigen::Vector2d::Zero();
    Eigen::Vector4d f = Eigen::Vector4d::Zero();
    std::string status;
    double solve_ms = 0.0;
    bool clipped = false;
};

struct ClosedLoopLog {
    std::vector<ClosedLoopRecord> records;
    int clipping_events = 0;
    int solver_failures = 0;

    double rms_error() const;
    double max_abs_error() const;
    double max_solve_ms() const;
    double max_abs_state() const;
    bool inputs_within(double lo, double hi) const;

    /// Columns t, ref1, ref2, q1, q2, f1..f4, status, solve_ms.
    void write_csv(std::ostream& os) const;
    void save_csv(const std::string& path) const;
};

/// One control step per sample: measure q, estimate and solve, clip to the
/// input bounds, apply to the plant for one sample. `ref` needs
/// round(duration / dt) + horizon + 1 rows. Infeasible solves hold the previous input.
ClosedLoopLog run_closed_loop(const SnakePlantConfig& plant, Controller& controller, const MpcConfig& cfg,
                              const Eigen::MatrixXd& ref, double duration_s,
                              const PlantState& initial = {});

}  // namespace tendonid
