// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "tendonid/arx.hpp"
#include "tendonid/errors.hpp"
#include "tendonid/kinematics.hpp"
#include "tendonid/model.hpp"
#include "tendonid/n4sid.hpp"
#include "tendonid/pipeline.hpp"
#include "tendonid/plantsim.hpp"
#include "tendonid/qp.hpp"
#include "tendonid/random.hpp"
#include "tendonid/sindyc.hpp"

using namespace tendonid;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

Outcome a1_n4sid() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const StateSpaceModel truth = make_random_lti(1, 4, 2, 2);
    auto data = [&](std::uint64_t seed, Eigen::Index m) {
        const Eigen::MatrixXd U = random_binary_signal(seed, m, 2, 1.0, 1, 4);
        const Eigen::MatrixXd Y = simulate_state_space(truth, U, Eigen::VectorXd::Zero(4));
        return Dataset(TimeSeries(1.0, U), TimeSeries(1.0, Y));
    };
    N4sidConfig cfg;
    cfg.order.reset();
    cfg.sv_threshold = 1e-6;
    cfg.block_rows_i = 10;
    N4sidDiagnostics diag;
    const StateSpaceModel id = identify_n4sid(data(101, 2000), cfg, &diag);
    const Dataset val = data(102, 1000);
    const ModelKind mk = id;
    const TimeSeries y = simulate(mk, val.inputs, initial_condition_from_data(mk, val));
    const double min_fit = fit_percent(val.outputs.values, y.values).per_channel_fit.minCoeff();
    const auto mt = markov_parameters(truth, 9), mi = markov_parameters(id, 9);
    double markov = 0.0;
    for (int k = 0; k <= 8; ++k) markov = std::max(markov, (mt[k] - mi[k]).cwiseAbs().maxCoeff());
    const double secs = seconds_since(t0);
    o.detail << "order=" << diag.order << " min_fit=" << min_fit << "% markov_err=" << markov << " time=" << secs
             << "s";
    o.check(diag.order == 4, "order == 4");
    o.check(min_fit >= 99.0, "fit >= 99%");
    o.check(markov <= 1e-6, "Markov error <= 1e-6");
    o.check(secs < 10.0, "runtime < 10 s");
    return o;
}

Outcome a2_arx() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const ArxModel truth = make_random_arx(seed, 2, 4, 8);
        const Eigen::MatrixXd U = random_binary_signal(700 + seed, 1500, 4, 1.0, 1, 3);
        const Eigen::MatrixXd Y = simulate_arx(truth, U, Eigen::MatrixXd::Zero(truth.max_lag(), 2));
        const ArxModel id = identify_arx(Dataset(TimeSeries(1.0, U), TimeSeries(1.0, Y)), truth);
        for (std::size_t i = 0; i < truth.a.size(); ++i) {
            for (std::size_t j = 0; j < truth.a[i].size(); ++j)
                for (std::size_t l = 0; l < truth.a[i][j].size(); ++l)
                    worst = std::max(worst, std::abs(truth.a[i][j][l] - id.a[i][j][l]));
            for (std::size_t j = 0; j < truth.b[i].size(); ++j)
                for (std::size_t l = 0; l < truth.b[i][j].size(); ++l)
                    worst = std::max(worst, std::abs(truth.b[i][j][l] - id.b[i][j][l]));
        }
    }
    const double secs = seconds_since(t0);
    o.detail << "truths=20 max_coef_err=" << worst << " time=" << secs << "s";
    o.check(worst <= 1e-6, "coefficients within 1e-6");
    o.check(secs < 10.0, "runtime < 10 s");
    return o;
}

Outcome a3_sindyc() {
    Outcome o;
    int exact = 0, good_noisy = 0;
    double worst_coef = 0.0, lambda_lo = 1.0, lambda_hi = 0.0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        const SindyModel truth = make_sparse_nonlinear_truth(seed);
        const Eigen::MatrixXd U = random_binary_signal(900 + seed, 600, truth.num_inputs, 1.0, 1, 5);
        const Eigen::MatrixXd X = simulate_sindy(truth, U, Eigen::VectorXd::Zero(truth.num_states));
        // lambda: a quarter of the smallest true |xi| times its column RMS, at most 0.05.
        const Library lib = build_library(X.topRows(X.rows() - 1), U.topRows(X.rows() - 1), truth.library);
        const double lambda = std::min(0.05, oracle::quarter_smallest_normalized(lib.theta, truth.xi));
        lambda_lo = std::min(lambda_lo, lambda);
        lambda_hi = std::max(lambda_hi, lambda);
        const SindyModel id = identify_sindyc(Dataset(TimeSeries(1.0, U), TimeSeries(1.0, X)), truth.library, lambda);
        if (((id.xi.array() != 0.0) == (truth.xi.array() != 0.0)).all()) ++exact;
        worst_coef = std::max(worst_coef, (id.xi - truth.xi).cwiseAbs().maxCoeff());

        // 1% relative output noise on both the training and the validation record.
        auto noisy = [&](const Eigen::MatrixXd& clean, std::uint64_t s) {
            Rng rng(s);
            Eigen::MatrixXd Y = clean;
            for (Eigen::Index c = 0; c < Y.cols(); ++c) {
                const double rms = std::sqrt(clean.col(c).squaredNorm() / static_cast<double>(clean.rows()));
                for (Eigen::Index k = 0; k < Y.rows(); ++k) Y(k, c) += 0.01 * rms * rng.normal();
            }
            return Y;
        };
        const Eigen::MatrixXd Uv = random_binary_signal(1900 + seed, 400, truth.num_inputs, 1.0, 1, 5);
        const Eigen::MatrixXd Xv = noisy(simulate_sindy(truth, Uv, Eigen::VectorXd::Zero(truth.num_states)), 3900 + seed);
        try {
            const SindyModel idn = identify_sindyc(
                Dataset(TimeSeries(1.0, U), TimeSeries(1.0, noisy(X, 2900 + seed))), truth.library, lambda);
            const Eigen::MatrixXd Xs = simulate_sindy(idn, Uv, Xv.row(0).transpose());
            if (fit_percent(Xv, Xs).mean_fit >= 90.0) ++good_noisy;
        } catch (const Error&) {
        }
    }
    o.detail << "exact_support=" << exact << "/50 max_coef_err=" << worst_coef << " noisy_fit>=90%: " << good_noisy
             << "/50 lambda=[" << lambda_lo << ", " << lambda_hi << "]";
    o.check(exact == 50, "100% exact support");
    o.check(worst_coef <= 1e-8, "coefficients within 1e-8");
    o.check(good_noisy >= 45, "noisy fit >= 90% on 45/50");
    return o;
}

Outcome a4_fit() {
    Outcome o;
    Rng rng(4);
    Eigen::MatrixXd Y(50, 3);
    for (Eigen::Index i = 0; i < Y.size(); ++i) Y.data()[i] = rng.normal();
    const double self = fit_percent(Y, Y).mean_fit;
    const Eigen::MatrixXd M = Y.colwise().mean().replicate(Y.rows(), 1);
    const double mean = fit_percent(Y, M).per_channel_fit.cwiseAbs().maxCoeff();
    Eigen::MatrixXd y(3, 1), yh(3, 1);
    y << 0, 1, 2;
    yh << 0, 1, 3;
    const double hand = fit_percent(y, yh).mean_fit;
    o.detail << "fit(Y,Y)=" << self << " |fit(Y,mean)|=" << mean << " hand=" << hand;
    o.check(std::abs(self - 100.0) <= 1e-12, "fit(Y,Y) = 100");
    o.check(mean <= 1e-12, "fit(Y,mean) = 0");
    o.check(std::abs(hand - 29.289) <= 1e-3, "hand case 29.289");
    return o;
}

Outcome a5_kinematics() {
    Outcome o;
    Rng rng(5);
    double ratio_err = 0.0, straight = 0.0, reach = 0.0, mirror = 0.0;
    const ChainGeometry geom;
    const double L = geom.num_joints * geom.link_length_m;
    for (int t = 0; t < 1000; ++t) {
        const double q1 = rng.uniform(-1.5, 1.5), q2 = rng.uniform(-1.5, 1.5);
        const Vector6d q = reconstruct_joints(q1, q2);
        Vector6d expected;
        expected << q1, q2, 0.6493 * q1, 0.6442 * q2, 0.2053 * q1, 0.2291 * q2;
        ratio_err = std::max(ratio_err, (q - expected).cwiseAbs().maxCoeff());
        const Eigen::Vector3d p = forward_kinematics(q, geom);
        reach = std::max(reach, p.norm() - L);
        const Eigen::Vector3d pm = forward_kinematics(-q, geom);
        mirror = std::max(mirror, (pm - Eigen::Vector3d(-p.x(), -p.y(), p.z())).cwiseAbs().maxCoeff());
    }
    straight = (forward_kinematics(Vector6d::Zero(), geom) - Eigen::Vector3d(0, 0, L)).cwiseAbs().maxCoeff();
    o.detail << "ratio_err=" << ratio_err << " straight_err=" << straight << " reach_excess=" << reach
             << " mirror_err=" << mirror;
    o.check(ratio_err == 0.0, "ratios exact");
    o.check(straight <= 1e-12, "straight chain");
    o.check(reach <= 1e-12, "reach bound");
    o.check(mirror <= 1e-12, "mirror symmetry");
    return o;
}

Outcome a6_trend(const fs::path& run) {
    Outcome o;
    double fit[3] = {0, 0, 0};
    bool present[3] = {false, false, false};
    const std::vector<ReportRow> rows = cmd_report(run);
    for (const ReportRow& r : rows) {
        const int i = static_cast<int>(parse_method(r.method));
        present[i] = r.present;
        fit[i] = r.present ? r.mean_fit : -std::numeric_limits<double>::infinity();
    }
    const double n4 = fit[static_cast<int>(Method::N4sid)], arx = fit[static_cast<int>(Method::Arx)],
                 sy = fit[static_cast<int>(Method::Sindyc)];
    o.detail << "sindyc=" << sy << "% arx=" << arx << "% n4sid=" << n4 << "% gap=" << sy - std::max(arx, n4);
    o.check(present[static_cast<int>(Method::Sindyc)], "SINDYc validated");
    o.check(sy >= 60.0, "SINDYc >= 60%");
    o.check(sy - arx >= 5.0, "SINDYc - ARX >= 5 points");
    o.check(sy - n4 >= 5.0, "SINDYc - N4SID >= 5 points");
    return o;
}

Outcome a7_mpc(const fs::path& run) {
    Outcome o;
    if (!fs::exists(run / "mpc_sindyc.json") || !fs::exists(run / "mpc_n4sid.json")) {
        o.check(false, "both closed-loop runs completed");
        return o;
    }
    const json nl = read_json(run / "mpc_sindyc.json"), lin = read_json(run / "mpc_n4sid.json");
    const double rms = nl.at("rms_error_rad"), ms = nl.at("max_solve_ms"), lrms = lin.at("rms_error_rad");
    const int steps = nl.at("steps");
    o.detail << "nmpc_rms=" << rms << "rad max_solve=" << ms << "ms steps=" << steps
             << " max|q|=" << nl.at("max_abs_state_rad").get<double>() << " linear_rms=" << lrms << "rad";
    o.check(steps == 1000, "30 s run");
    o.check(rms <= 0.05, "NMPC RMS <= 0.05 rad");
    o.check(nl.at("inputs_within_bounds").get<bool>(), "inputs in [20, 190] N");
    o.check(nl.at("states_within_bounds").get<bool>(), "states in [-1, 1] rad");
    o.check(ms < 30.0, "solve < 30 ms");
    o.check(nl.at("solver_failures").get<int>() == 0, "no solver failures");
    o.check(lin.at("solver_failures").get<int>() == 0 && lin.at("steps").get<int>() == steps, "linear run completes");
    o.check(lrms <= 0.10, "linear RMS <= 0.10 rad");
    return o;
}

Outcome a8_qp() {
    Outcome o;
    Rng rng(8);
    double worst_obj = 0.0, worst_kkt = 0.0;
    int failures = 0;
    for (int t = 0; t < 200; ++t) {
        const int n = 1 + static_cast<int>(rng.uniform() * 40.0) % 40;
        Eigen::MatrixXd M(n, n);
        for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = rng.normal();
        const Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
        const Eigen::MatrixXd Qm = qr.householderQ();
        Eigen::VectorXd ev(n);
        for (int i = 0; i < n; ++i) ev(i) = rng.uniform(1.0, 10.0);
        QpProblem qp;
        qp.H = Qm * ev.asDiagonal() * Qm.transpose();
        qp.H = 0.5 * (qp.H + qp.H.transpose()).eval();
        qp.g.resize(n);
        Eigen::VectorXd lo(n), hi(n);
        for (int i = 0; i < n; ++i) {
            qp.g(i) = 5.0 * rng.normal();
            lo(i) = rng.uniform(-2.0, 0.0);
            hi(i) = lo(i) + rng.uniform(0.1, 2.0);
        }
        qp.C.resize(2 * n, n);
        qp.C << Eigen::MatrixXd::Identity(n, n), -Eigen::MatrixXd::Identity(n, n);
        qp.d.resize(2 * n);
        qp.d << hi, -lo;
        const QpResult r = solve_qp(qp);
        if (r.status != QpStatus::Optimal) {
            ++failures;
            continue;
        }
        const Eigen::VectorXd ref = oracle::projected_gradient(qp.H, qp.g, lo, hi);
        worst_obj = std::max(worst_obj, std::abs(qp.objective(r.x) - qp.objective(ref)));
        worst_kkt = std::max(worst_kkt, r.kkt.max());
    }
    o.detail << "problems=200 failures=" << failures << " max_obj_gap=" << worst_obj << " max_kkt=" << worst_kkt;
    o.check(failures == 0, "all optimal");
    o.check(worst_obj <= 1e-6, "objective within 1e-6");
    o.check(worst_kkt <= 1e-8, "KKT <= 1e-8");
    return o;
}

/// CSV text with the solve_ms column of closed-loop logs removed.
std::string masked_csv(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    const bool mpc_log = p.filename().string().rfind("mpc_", 0) == 0;
    std::string line;
    while (std::getline(in, line)) {
        if (mpc_log) line = line.substr(0, line.rfind(','));
        os << line << '\n';
    }
    return os.str();
}

Outcome a9_determinism(const fs::path& first, const fs::path& second) {
    Outcome o;
    int files = 0, differing = 0;
    for (const auto& entry : fs::directory_iterator(first)) {
        if (entry.path().extension() != ".csv") continue;
        ++files;
        const fs::path other = second / entry.path().filename();
        if (!fs::exists(other) || masked_csv(entry.path()) != masked_csv(other)) {
            ++differing;
            o.detail << " differs:" << entry.path().filename().string();
        }
    }
    o.detail << " csv_files=" << files << " differing=" << differing << " (solve_ms masked)";
    o.check(files > 0, "CSV files written");
    o.check(differing == 0, "byte-identical CSVs");
    return o;
}

}  // namespace

int main() {
    int failed = 0;
    auto report = [&](const char* id, const char* title, const std::function<Outcome()>& fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        std::cout << id << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << title << ": " << o.detail.str() << std::endl;
        if (!o.pass) ++failed;
    };

    const fs::path base = fs::temp_directory_path() / "tendonid_acceptance";
    fs::remove_all(base);
    const fs::path run1 = base / "run1", run2 = base / "run2";
    bool ran = true;
    try {
        cmd_run_all(default_run_config(), run1);
        cmd_run_all(default_run_config(), run2);
    } catch (const std::exception& e) {
        std::cerr << "run-all failed: " << e.what() << "\n";
        ran = false;
    }

    report("A1", "N4SID oracle recovery", a1_n4sid);
    report("A2", "ARX exact recovery", a2_arx);
    report("A3", "SINDYc support recovery", a3_sindyc);
    report("A4", "fit metric identities", a4_fit);
    report("A5", "joint reconstruction and FK invariants", a5_kinematics);
    report("A6", "method ranking on the synthetic plant", [&] { return ran ? a6_trend(run1) : Outcome{false, {}}; });
    report("A7", "closed-loop MPC", [&] { return ran ? a7_mpc(run1) : Outcome{false, {}}; });
    report("A8", "QP solver vs projected gradient", a8_qp);
    report("A9", "run-all determinism", [&] { return ran ? a9_determinism(run1, run2) : Outcome{false, {}}; });

    std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << std::endl;
    return failed == 0 ? 0 : 1;
}
