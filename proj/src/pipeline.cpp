#include "tendonid/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "tendonid/arx.hpp"
#include "tendonid/errors.hpp"
#include "tendonid/kinematics.hpp"
#include "tendonid/mpc.hpp"
#include "tendonid/n4sid.hpp"
#include "tendonid/plantsim.hpp"
#include "tendonid/random.hpp"
#include "tendonid/sindyc.hpp"

namespace tendonid {

using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

TimeSeries concatenated_excitation(const std::vector<ExcitationSpec>& segments, double dt) {
    std::vector<TimeSeries> parts;
    Eigen::Index total = 0;
    for (const auto& s : segments) {
        parts.push_back(generate_excitation(s, dt));
        total += parts.back().samples();
    }
    Eigen::MatrixXd U(total, 4);
    Eigen::Index row = 0;
    for (const auto& p : parts) {
        U.middleRows(row, p.samples()) = p.values;
        row += p.samples();
    }
    return TimeSeries(dt, std::move(U), default_channel_names("u", 4));
}

Dataset record_experiment(const RunConfig& cfg, const std::vector<ExcitationSpec>& segments, bool validation) {
    if (segments.empty()) throw ConfigError("excitation segment list is empty");
    Dataset ds = simulate_plant(cfg.plant, concatenated_excitation(segments, cfg.sample_time_s));
    if (cfg.data.output_noise_std_rad > 0.0) {
        Rng rng(cfg.seed * 7919 + (validation ? 2 : 1));
        for (Eigen::Index k = 0; k < ds.outputs.values.rows(); ++k)
            for (Eigen::Index c = 0; c < ds.outputs.values.cols(); ++c)
                ds.outputs.values(k, c) += cfg.data.output_noise_std_rad * rng.normal();
    }
    if (cfg.data.lowpass_cutoff_rad_per_sample) {
        ds.outputs = lowpass_filter(ds.outputs, *cfg.data.lowpass_cutoff_rad_per_sample);
    }
    return ds;
}

// (t, q1, q2) columns of a trajectory file: y1/y2, else q1/q2, else the first two after t.
Eigen::MatrixXd trajectory_columns(const Table& t, Eigen::VectorXd& time) {
    auto has = [&](const std::string& name) {
        for (const auto& h : t.header)
            if (h == name) return true;
        return false;
    };
    if (!has("t")) throw DataError("trajectory file needs a 't' column");
    time = t.values.col(t.column("t"));
    Eigen::Index c1 = -1, c2 = -1;
    if (has("y1") && has("y2")) {
        c1 = t.column("y1");
        c2 = t.column("y2");
    } else if (has("q1") && has("q2")) {
        c1 = t.column("q1");
        c2 = t.column("q2");
    } else {
        std::vector<Eigen::Index> others;
        for (std::size_t c = 0; c < t.header.size(); ++c)
            if (t.header[c] != "t") others.push_back(static_cast<Eigen::Index>(c));
        if (others.size() < 2) throw DataError("trajectory file needs two joint-angle columns");
        c1 = others[0];
        c2 = others[1];
    }
    Eigen::MatrixXd Q(t.values.rows(), 2);
    Q.col(0) = t.values.col(c1);
    Q.col(1) = t.values.col(c2);
    if (Q.rows() < 1) throw DataError("trajectory file has no rows");
    return Q;
}

// Number of rows with at least one angle outside [-pi/2, pi/2], which are clamped in place.
Eigen::Index clamp_to_joint_range(Eigen::MatrixXd& q) {
    Eigen::Index rows = 0;
    for (Eigen::Index k = 0; k < q.rows(); ++k) {
        if (q.row(k).cwiseAbs().maxCoeff() > kJointLimit) {
            ++rows;
            q.row(k) = q.row(k).cwiseMax(-kJointLimit).cwiseMin(kJointLimit);
        }
    }
    return rows;
}

std::string initial_condition_note(const ModelKind& model) {
    switch (model.index()) {
        case 0: return "least-squares x0 from the first 20 samples";
        case 1: return "lag window seeded with measured outputs";
        default: return "first measured output";
    }
}

}  // namespace

std::string method_name(Method m) {
    switch (m) {
        case Method::N4sid: return "n4sid";
        case Method::Arx: return "arx";
        case Method::Sindyc: return "sindyc";
    }
    return "unknown";
}

Method parse_method(const std::string& name) {
    if (name == "n4sid") return Method::N4sid;
    if (name == "arx") return Method::Arx;
    if (name == "sindyc") return Method::Sindyc;
    throw ConfigError("unknown method '" + name + "' (expected n4sid, arx or sindyc)");
}

Method method_of(const ModelKind& model) {
    switch (model.index()) {
        case 0: return Method::N4sid;
        case 1: return Method::Arx;
        default: return Method::Sindyc;
    }
}

void cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir) {
    ensure_dir(out_dir);
    const Dataset train = record_experiment(cfg, cfg.data.train, false);
    const Dataset val = record_experiment(cfg, cfg.data.validation, true);
    save_csv(train, out_dir / "train.csv");
    save_csv(val, out_dir / "val.csv");
    json prov;
    prov["generator"] = "tendonid gen-data";
    prov["seed"] = cfg.seed;
    prov["train_samples"] = train.samples();
    prov["val_samples"] = val.samples();
    prov["sample_time_s"] = cfg.sample_time_s;
    prov["config"] = json::parse(run_config_to_json(cfg));
    write_text(out_dir / "provenance.json", prov.dump(2) + "\n");
}

void cmd_preprocess(const fs::path& input, std::optional<double> cutoff, double train_fraction,
                    bool filter_after_split, const fs::path& out_dir) {
    Dataset ds = load_csv(input);
    auto filter = [&](Dataset& d) {
        if (cutoff) d.outputs = lowpass_filter(d.outputs, *cutoff);
    };
    if (!filter_after_split) filter(ds);
    auto [train, val] = split(ds, train_fraction);
    if (filter_after_split) {
        filter(train);
        filter(val);
    }
    ensure_dir(out_dir);
    save_csv(train, out_dir / "train.csv");
    save_csv(val, out_dir / "val.csv");
}

ModelKind cmd_identify(Method method, const fs::path& train_csv, const IdentificationConfig& cfg,
                       std::optional<double> lambda, const fs::path& model_out) {
    const Dataset ds = load_csv(train_csv);
    ModelKind model;
    switch (method) {
        case Method::N4sid: model = identify_n4sid(ds, cfg.n4sid); break;
        case Method::Arx: model = identify_arx(ds, cfg.arx.na, cfg.arx.nb, cfg.arx.nk); break;
        case Method::Sindyc: {
            StlsResult diag;
            model = identify_sindyc(ds, cfg.library, lambda.value_or(cfg.lambda), &diag);
            for (const auto& w : diag.warnings) std::cerr << "warning: " << w << "\n";
            break;
        }
    }
    if (model_out.has_parent_path()) ensure_dir(model_out.parent_path());
    save_model(model, model_out);
    return model;
}

FitReport cmd_validate(const fs::path& model_file, const fs::path& val_csv, const fs::path& out_dir) {
    const ModelKind model = load_model(model_file);
    const Dataset ds = load_csv(val_csv);
    if (model_inputs(model) != ds.num_inputs() || model_outputs(model) != ds.num_outputs()) {
        throw DataError("model expects " + std::to_string(model_inputs(model)) + " inputs and " +
                        std::to_string(model_outputs(model)) + " outputs; dataset has " +
                        std::to_string(ds.num_inputs()) + " and " + std::to_string(ds.num_outputs()));
    }
    const TimeSeries y = simulate(model, ds.inputs, initial_condition_from_data(model, ds));
    const FitReport fit = fit_percent(ds.outputs.values, y.values);

    const std::string name = method_name(method_of(model));
    ensure_dir(out_dir);
    Table sim;
    sim.header = {"t"};
    for (Eigen::Index c = 0; c < y.channels(); ++c) sim.header.push_back("y" + std::to_string(c + 1));
    sim.values.resize(y.samples(), y.channels() + 1);
    for (Eigen::Index k = 0; k < y.samples(); ++k) sim.values(k, 0) = static_cast<double>(k) * ds.sample_time_s();
    sim.values.rightCols(y.channels()) = y.values;
    write_table(sim, out_dir / ("sim_" + name + ".csv"));

    json rep;
    rep["method"] = name;
    rep["kind"] = model_kind_name(model);
    rep["model_file"] = model_file.filename().string();
    rep["validation_file"] = val_csv.filename().string();
    rep["samples"] = ds.samples();
    rep["per_channel_fit"] = to_vector(fit.per_channel_fit);
    rep["mean_fit"] = fit.mean_fit;
    rep["simulation"] = "free run";
    rep["initial_condition"] = initial_condition_note(model);
    write_text(out_dir / ("validate_" + name + ".json"), rep.dump(2) + "\n");
    return fit;
}

ReconstructSummary cmd_reconstruct(const fs::path& trajectory_csv, const std::optional<fs::path>& measured_csv,
                                   const fs::path& out_dir, const std::string& label) {
    Eigen::VectorXd t;
    Eigen::MatrixXd q12 = trajectory_columns(read_table(trajectory_csv), t);
    // Model simulations can overshoot the mechanical stops; the arm itself cannot.
    const Eigen::Index clamped = clamp_to_joint_range(q12);
    const Eigen::MatrixXd tip = tip_trajectory(q12);
    ensure_dir(out_dir);

    Table joints;
    joints.header = {"t", "q1", "q2", "q3", "q4", "q5", "q6"};
    joints.values.resize(q12.rows(), 7);
    for (Eigen::Index k = 0; k < q12.rows(); ++k) {
        joints.values(k, 0) = t(k);
        joints.values.row(k).tail(6) = reconstruct_joints(q12(k, 0), q12(k, 1)).transpose();
    }
    write_table(joints, out_dir / ("joints_" + label + ".csv"));

    auto tip_table = [&](const Eigen::MatrixXd& P) {
        Table tt;
        tt.header = {"t", "x", "y", "z"};
        tt.values.resize(P.rows(), 4);
        tt.values.col(0) = t;
        tt.values.rightCols(3) = P;
        return tt;
    };
    write_table(tip_table(tip), out_dir / ("tip_" + label + ".csv"));

    ReconstructSummary summary;
    summary.samples = q12.rows();
    summary.clamped_samples = clamped;
    json rep;
    rep["label"] = label;
    rep["samples"] = summary.samples;
    rep["link_length_m"] = ChainGeometry{}.link_length_m;
    rep["clamped_samples"] = clamped;
    if (measured_csv) {
        Eigen::VectorXd tm;
        Eigen::MatrixXd qm = trajectory_columns(read_table(*measured_csv), tm);
        clamp_to_joint_range(qm);
        if (qm.rows() != q12.rows()) throw DataError("trajectory and measured files have different lengths");
        const Eigen::MatrixXd tip_m = tip_trajectory(qm);
        write_table(tip_table(tip_m), out_dir / "tip_measured.csv");
        summary.mean_euclidean_error_m = mean_euclidean_error(tip_m, tip);
        rep["mean_euclidean_error_m"] = *summary.mean_euclidean_error_m;
    }
    write_text(out_dir / ("reconstruct_" + label + ".json"), rep.dump(2) + "\n");
    return summary;
}

MpcRunSummary cmd_mpc(const fs::path& model_file, const RunConfig& cfg, const fs::path& out_dir,
                      const std::string& label) {
    const ModelKind model = load_model(model_file);
    const MpcConfig& mc = cfg.control.mpc;
    if (std::abs(model_sample_time(model) - mc.sample_time_s) > 1e-9 * mc.sample_time_s) {
        throw ConfigError("model sample time differs from the controller sample time");
    }
    std::unique_ptr<Controller> controller;
    MpcRunSummary summary;
    if (const auto* ss = std::get_if<StateSpaceModel>(&model)) {
        controller = std::make_unique<LinearMpcController>(*ss, mc, cfg.control.observer);
        summary.controller = "linear";
    } else if (const auto* sy = std::get_if<SindyModel>(&model)) {
        controller = std::make_unique<NonlinearMpcController>(*sy, mc);
        summary.controller = "nonlinear";
    } else {
        throw ConfigError("mpc needs a state_space or sindy model");
    }
    const Eigen::MatrixXd ref = build_reference(cfg.control.reference, mc.sample_time_s, mc.horizon_N);
    const ClosedLoopLog log = run_closed_loop(cfg.plant, *controller, mc, ref, cfg.control.reference.duration_s);

    summary.rms_error_rad = log.rms_error();
    summary.max_abs_error_rad = log.max_abs_error();
    summary.max_solve_ms = log.max_solve_ms();
    summary.max_abs_state_rad = log.max_abs_state();
    summary.clipping_events = log.clipping_events;
    summary.solver_failures = log.solver_failures;
    summary.inputs_within_bounds = log.inputs_within(mc.u_min.minCoeff(), mc.u_max.maxCoeff());
    for (const auto& r : log.records) {
        for (Eigen::Index i = 0; i < 2; ++i) {
            if (r.q(i) < mc.x_min(i) || r.q(i) > mc.x_max(i)) summary.states_within_bounds = false;
            if (r.f(i) < mc.u_min(i) || r.f(i) > mc.u_max(i)) summary.inputs_within_bounds = false;
        }
    }
    summary.steps = static_cast<Eigen::Index>(log.records.size());

    ensure_dir(out_dir);
    log.save_csv((out_dir / ("mpc_" + label + ".csv")).string());
    json rep;
    rep["label"] = label;
    rep["controller"] = summary.controller;
    rep["reference"] = reference_kind_name(cfg.control.reference.kind);
    rep["steps"] = summary.steps;
    rep["horizon_N"] = mc.horizon_N;
    rep["rms_error_rad"] = summary.rms_error_rad;
    rep["max_abs_error_rad"] = summary.max_abs_error_rad;
    rep["max_abs_state_rad"] = summary.max_abs_state_rad;
    rep["max_solve_ms"] = summary.max_solve_ms;
    rep["clipping_events"] = summary.clipping_events;
    rep["solver_failures"] = summary.solver_failures;
    rep["inputs_within_bounds"] = summary.inputs_within_bounds;
    rep["states_within_bounds"] = summary.states_within_bounds;
    write_text(out_dir / ("mpc_" + label + ".json"), rep.dump(2) + "\n");
    return summary;
}

std::vector<ReportRow> cmd_report(const fs::path& out_dir) {
    std::vector<ReportRow> rows;
    Eigen::Index channels = 0;
    for (Method m : {Method::N4sid, Method::Arx, Method::Sindyc}) {
        ReportRow row;
        row.method = method_name(m);
        const fs::path file = out_dir / ("validate_" + row.method + ".json");
        if (fs::exists(file)) {
            const json j = read_json(file);
            try {
                row.mean_fit = j.at("mean_fit").get<double>();
                const auto v = j.at("per_channel_fit").get<std::vector<double>>();
                row.per_channel_fit = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
            } catch (const json::exception&) {
                throw DataError("malformed validation report " + file.string());
            }
            row.present = true;
            channels = std::max(channels, row.per_channel_fit.size());
        }
        rows.push_back(row);
    }

    std::ostringstream csv, txt;
    csv << std::setprecision(std::numeric_limits<double>::max_digits10);
    csv << "method,status,mean_fit";
    for (Eigen::Index c = 0; c < channels; ++c) csv << ",fit_y" << c + 1;
    csv << "\n";
    txt << "Free-run validation fit (%), 100 = perfect, 0 = mean predictor\n\n";
    txt << std::left << std::setw(10) << "method" << std::right << std::setw(10) << "mean";
    for (Eigen::Index c = 0; c < channels; ++c) txt << std::setw(10) << ("y" + std::to_string(c + 1));
    txt << "\n";
    for (const auto& r : rows) {
        csv << r.method << ',' << (r.present ? "ok" : "absent") << ',';
        txt << std::left << std::setw(10) << r.method << std::right;
        if (r.present) {
            csv << r.mean_fit;
            txt << std::setw(10) << std::fixed << std::setprecision(2) << r.mean_fit;
        } else {
            txt << std::setw(10) << "absent";
        }
        for (Eigen::Index c = 0; c < channels; ++c) {
            csv << ',';
            if (r.present && c < r.per_channel_fit.size()) {
                csv << r.per_channel_fit(c);
                txt << std::setw(10) << r.per_channel_fit(c);
            }
        }
        csv << "\n";
        txt << "\n";
    }
    write_text(out_dir / "report.csv", csv.str());
    write_text(out_dir / "report.txt", txt.str());

    // Long-format traces for plotting: measured outputs, then each simulation.
    std::ostringstream tr;
    tr << std::setprecision(std::numeric_limits<double>::max_digits10);
    tr << "series,t,value\n";
    auto emit = [&](const std::string& prefix, const Table& t, const std::vector<std::string>& cols) {
        const Eigen::Index tc = t.column("t");
        for (const auto& c : cols) {
            const Eigen::Index idx = t.column(c);
            for (Eigen::Index k = 0; k < t.values.rows(); ++k) {
                tr << prefix << c << ',' << t.values(k, tc) << ',' << t.values(k, idx) << '\n';
            }
        }
    };
    if (fs::exists(out_dir / "val.csv")) {
        const Table val = read_table(out_dir / "val.csv");
        std::vector<std::string> ys;
        for (const auto& h : val.header)
            if (!h.empty() && h.front() == 'y') ys.push_back(h);
        emit("measured_", val, ys);
    }
    for (const auto& r : rows) {
        const fs::path sim = out_dir / ("sim_" + r.method + ".csv");
        if (!r.present || !fs::exists(sim)) continue;
        const Table t = read_table(sim);
        std::vector<std::string> ys(t.header.begin() + 1, t.header.end());
        emit(r.method + "_", t, ys);
    }
    write_text(out_dir / "traces.csv", tr.str());
    return rows;
}

std::vector<ReportRow> cmd_run_all(const RunConfig& cfg, const fs::path& out_dir) {
    ensure_dir(out_dir);
    cmd_gen_data(cfg, out_dir);
    const fs::path train = out_dir / "train.csv";
    const fs::path val = out_dir / "val.csv";
    for (Method m : {Method::N4sid, Method::Arx, Method::Sindyc}) {
        const std::string name = method_name(m);
        const fs::path model = out_dir / ("model_" + name + ".json");
        try {
            cmd_identify(m, train, cfg.identification, std::nullopt, model);
            cmd_validate(model, val, out_dir);
        } catch (const Error& e) {
            // One failing method should not hide the others; the report lists it as absent.
            std::cerr << "warning: " << name << " failed: " << e.what() << "\n";
        }
    }
    if (fs::exists(out_dir / "sim_sindyc.csv")) {
        cmd_reconstruct(out_dir / "sim_sindyc.csv", val, out_dir, "sindyc");
    }
    for (const std::string name : {"sindyc", "n4sid"}) {
        const fs::path model = out_dir / ("model_" + name + ".json");
        if (!fs::exists(model)) continue;
        try {
            cmd_mpc(model, cfg, out_dir, name);
        } catch (const Error& e) {
            std::cerr << "warning: mpc with " << name << " model failed: " << e.what() << "\n";
        }
    }
    return cmd_report(out_dir);
}

}  // namespace tendonid
