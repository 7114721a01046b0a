#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "oracles.hpp"
#include "tendonid/dataset.hpp"
#include "tendonid/errors.hpp"
#include "tendonid/kinematics.hpp"
#include "tendonid/pipeline.hpp"

using namespace tendonid;
using nlohmann::json;

namespace {

json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

RunConfig short_config() {
    RunConfig cfg = default_run_config();
    for (auto& s : cfg.data.train) s.duration_s = 20.0;
    for (auto& s : cfg.data.validation) s.duration_s = 10.0;
    cfg.control.reference.duration_s = 3.0;
    return cfg;
}

/// Full default run shared by the read-only tests below.
const fs::path& run_all_dir() {
    static const fs::path dir = [] {
        const fs::path d = oracle::temp_dir("pipeline_run_all");
        cmd_run_all(default_run_config(), d);
        return d;
    }();
    return dir;
}

int run_cli(const std::string& args, const fs::path& stderr_file) {
    const std::string cmd = std::string(TENDONID_CLI) + " " + args + " >/dev/null 2>" + stderr_file.string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(GenData, DeterministicForFixedSeed) {
    const RunConfig cfg = short_config();
    const fs::path a = oracle::temp_dir("gen_a"), b = oracle::temp_dir("gen_b");
    cmd_gen_data(cfg, a);
    cmd_gen_data(cfg, b);
    EXPECT_EQ(slurp(a / "train.csv"), slurp(b / "train.csv"));
    EXPECT_EQ(slurp(a / "val.csv"), slurp(b / "val.csv"));
    EXPECT_EQ(slurp(a / "provenance.json"), slurp(b / "provenance.json"));
}

TEST(GenData, SeedChangesData) {
    // Segment seeds are derived from the global seed when the config is parsed.
    const fs::path a = oracle::temp_dir("gen_s1"), b = oracle::temp_dir("gen_s2");
    cmd_gen_data(parse_run_config(R"({"plant": {}, "seed": 1})"), a);
    cmd_gen_data(parse_run_config(R"({"plant": {}, "seed": 2})"), b);
    EXPECT_NE(slurp(a / "train.csv"), slurp(b / "train.csv"));
    const RunConfig c1 = parse_run_config(R"({"plant": {}, "seed": 1})");
    const RunConfig c2 = parse_run_config(R"({"plant": {}, "seed": 2})");
    EXPECT_NE(c1.data.train[0].seed, c2.data.train[0].seed);
    EXPECT_NE(c1.data.train[0].seed, c1.data.validation[0].seed);
    const RunConfig pinned = parse_run_config(R"({"plant": {}, "seed": 2, "data": {"train": [{"kind": "prbs", "seed": 42}]}})");
    EXPECT_EQ(pinned.data.train[0].seed, 42u);
}

TEST(GenData, DurationsAndProvenance) {
    const RunConfig cfg = short_config();
    const fs::path d = oracle::temp_dir("gen_dur");
    cmd_gen_data(cfg, d);
    const Dataset tr = load_csv(d / "train.csv"), va = load_csv(d / "val.csv");
    EXPECT_EQ(tr.samples(), 2 * static_cast<Eigen::Index>(std::lround(20.0 / cfg.sample_time_s)));
    EXPECT_EQ(va.samples(), 2 * static_cast<Eigen::Index>(std::lround(10.0 / cfg.sample_time_s)));
    EXPECT_EQ(tr.num_inputs(), 4);
    EXPECT_EQ(tr.num_outputs(), 2);
    EXPECT_NEAR(tr.sample_time_s(), cfg.sample_time_s, 1e-12);
    const json prov = read_json(d / "provenance.json");
    EXPECT_EQ(prov.at("seed").get<std::uint64_t>(), cfg.seed);
    EXPECT_EQ(prov.at("train_samples").get<Eigen::Index>(), tr.samples());
    // The recorded config reproduces the run.
    const RunConfig again = parse_run_config(prov.at("config").dump());
    const fs::path e = oracle::temp_dir("gen_dur_again");
    cmd_gen_data(again, e);
    EXPECT_EQ(slurp(d / "train.csv"), slurp(e / "train.csv"));
}

TEST(Config, MissingPlantSectionIsConfigError) {
    EXPECT_THROW(parse_run_config(R"({"seed": 3})"), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"plant": {}, "bogus": 1})"), ConfigError);
    EXPECT_THROW(parse_run_config("not json"), ConfigError);
    EXPECT_NO_THROW(parse_run_config(R"({"plant": {}})"));
}

TEST(Config, ResolvedJsonRoundTrips) {
    const RunConfig cfg = default_run_config();
    const std::string text = run_config_to_json(cfg);
    EXPECT_EQ(run_config_to_json(parse_run_config(text)), text);
    RunConfig mod = cfg;
    mod.seed = 17;
    mod.control.mpc.horizon_N = 7;
    mod.control.observer.direct_window = 3;
    mod.identification.lambda = 0.01;
    const RunConfig back = parse_run_config(run_config_to_json(mod));
    EXPECT_EQ(back.seed, 17u);
    EXPECT_EQ(back.control.mpc.horizon_N, 7);
    EXPECT_EQ(back.control.observer.direct_window, 3);
    EXPECT_DOUBLE_EQ(back.identification.lambda, 0.01);
}

TEST(Preprocess, SplitAndFilterOrder) {
    const RunConfig cfg = short_config();
    const fs::path d = oracle::temp_dir("preprocess");
    cmd_gen_data(cfg, d);
    const Dataset rec = load_csv(d / "train.csv");

    cmd_preprocess(d / "train.csv", std::nullopt, 0.7, false, d / "plain");
    const Dataset tr = load_csv(d / "plain" / "train.csv"), va = load_csv(d / "plain" / "val.csv");
    const auto n = static_cast<Eigen::Index>(std::floor(0.7 * static_cast<double>(rec.samples())));
    EXPECT_EQ(tr.samples(), n);
    EXPECT_EQ(va.samples(), rec.samples() - n);
    EXPECT_EQ(tr.outputs.values, rec.outputs.values.topRows(n));
    EXPECT_EQ(va.inputs.values, rec.inputs.values.bottomRows(rec.samples() - n));

    const double wc = 0.3;
    cmd_preprocess(d / "train.csv", wc, 0.7, false, d / "before");
    cmd_preprocess(d / "train.csv", wc, 0.7, true, d / "after");
    const Dataset before = load_csv(d / "before" / "val.csv"), after = load_csv(d / "after" / "val.csv");
    const TimeSeries whole = lowpass_filter(rec.outputs, wc);
    EXPECT_LE((before.outputs.values - whole.values.bottomRows(rec.samples() - n)).cwiseAbs().maxCoeff(), 1e-15);
    const TimeSeries part = lowpass_filter(rec.outputs.slice(n, rec.samples() - n), wc);
    EXPECT_LE((after.outputs.values - part.values).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(after.inputs.values, before.inputs.values);  // inputs are never filtered
}

TEST(Identify, EveryMethodSavesALoadableModel) {
    const RunConfig cfg = short_config();
    const fs::path d = oracle::temp_dir("identify_all");
    cmd_gen_data(cfg, d);
    for (Method m : {Method::N4sid, Method::Arx, Method::Sindyc}) {
        const fs::path file = d / ("model_" + method_name(m) + ".json");
        const ModelKind model = cmd_identify(m, d / "train.csv", cfg.identification, std::nullopt, file);
        const ModelKind loaded = load_model(file);
        EXPECT_EQ(method_of(loaded), m);
        EXPECT_EQ(model_to_json_string(loaded), model_to_json_string(model));
        EXPECT_EQ(model_inputs(loaded), 4);
        EXPECT_EQ(model_outputs(loaded), 2);
    }
}

TEST(Identify, UnknownMethodAndLambdaOverride) {
    EXPECT_THROW(parse_method("pem"), ConfigError);
    for (Method m : {Method::N4sid, Method::Arx, Method::Sindyc}) EXPECT_EQ(parse_method(method_name(m)), m);
    const RunConfig cfg = short_config();
    const fs::path d = oracle::temp_dir("identify_lambda");
    cmd_gen_data(cfg, d);
    const auto loose = std::get<SindyModel>(
        cmd_identify(Method::Sindyc, d / "train.csv", cfg.identification, 1e-5, d / "a.json"));
    const auto tight = std::get<SindyModel>(
        cmd_identify(Method::Sindyc, d / "train.csv", cfg.identification, 0.05, d / "b.json"));
    EXPECT_DOUBLE_EQ(loose.lambda, 1e-5);
    EXPECT_DOUBLE_EQ(tight.lambda, 0.05);
    EXPECT_GT(loose.active_terms(), tight.active_terms());
}

TEST(Validate, ModelAgainstItsOwnSimulationIsPerfect) {
    const fs::path d = run_all_dir();
    // Replace the measured outputs with the model's own free run.
    Dataset val = load_csv(d / "val.csv");
    const Table sim = read_table(d / "sim_sindyc.csv");
    val.outputs.values = sim.values.rightCols(2);
    const fs::path e = oracle::temp_dir("validate_self");
    save_csv(val, e / "val_self.csv");
    const FitReport fit = cmd_validate(d / "model_sindyc.json", e / "val_self.csv", e);
    EXPECT_GE(fit.mean_fit, 99.9);
}

TEST(Validate, ReportFieldsAndShapeMismatch) {
    const fs::path d = run_all_dir();
    const json rep = read_json(d / "validate_arx.json");
    for (const char* key : {"method", "kind", "model_file", "validation_file", "samples", "per_channel_fit",
                            "mean_fit", "simulation", "initial_condition"}) {
        EXPECT_TRUE(rep.contains(key)) << key;
    }
    EXPECT_EQ(rep.at("method"), "arx");
    EXPECT_EQ(rep.at("per_channel_fit").size(), 2u);
    const Table sim = read_table(d / "sim_arx.csv");
    EXPECT_EQ(sim.header, (std::vector<std::string>{"t", "y1", "y2"}));
    EXPECT_EQ(sim.values.rows(), rep.at("samples").get<Eigen::Index>());

    Dataset val = load_csv(d / "val.csv");
    val.inputs.values = val.inputs.values.leftCols(3).eval();
    val.inputs.channel_names.resize(3);
    const fs::path e = oracle::temp_dir("validate_shape");
    save_csv(val, e / "bad.csv");
    EXPECT_THROW(cmd_validate(d / "model_arx.json", e / "bad.csv", e), DataError);
}

TEST(Reconstruct, ZeroTrajectoryIsStraightChain) {
    const fs::path d = oracle::temp_dir("reconstruct_zero");
    Table t;
    t.header = {"t", "q1", "q2"};
    t.values = Eigen::MatrixXd::Zero(5, 3);
    for (int k = 0; k < 5; ++k) t.values(k, 0) = 0.03 * k;
    write_table(t, d / "traj.csv");
    const ReconstructSummary s = cmd_reconstruct(d / "traj.csv", d / "traj.csv", d, "zero");
    ASSERT_TRUE(s.mean_euclidean_error_m.has_value());
    EXPECT_NEAR(*s.mean_euclidean_error_m, 0.0, 1e-15);
    EXPECT_EQ(s.samples, 5);
    const Table tip = read_table(d / "tip_zero.csv");
    const double L = 6.0 * ChainGeometry{}.link_length_m;
    for (int k = 0; k < 5; ++k) {
        EXPECT_NEAR(tip.values(k, 1), 0.0, 1e-15);
        EXPECT_NEAR(tip.values(k, 2), 0.0, 1e-15);
        EXPECT_NEAR(tip.values(k, 3), L, 1e-15);
    }
    const Table joints = read_table(d / "joints_zero.csv");
    EXPECT_EQ(joints.values.cols(), 7);
    EXPECT_EQ(joints.values.rightCols(6).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Reconstruct, JointRatiosSurviveTheCsvRoundTrip) {
    const fs::path d = run_all_dir();
    const Table joints = read_table(d / "joints_sindyc.csv");
    for (Eigen::Index k = 0; k < joints.values.rows(); ++k) {
        const double q1 = joints.values(k, 1), q2 = joints.values(k, 2);
        ASSERT_EQ(joints.values(k, 3), 0.6493 * q1);
        ASSERT_EQ(joints.values(k, 4), 0.6442 * q2);
        ASSERT_EQ(joints.values(k, 5), 0.2053 * q1);
        ASSERT_EQ(joints.values(k, 6), 0.2291 * q2);
    }
}

TEST(Reconstruct, ErrorMatchesRecomputedTipDistance) {
    const fs::path d = run_all_dir();
    const json rep = read_json(d / "reconstruct_sindyc.json");
    const Table sim = read_table(d / "tip_sindyc.csv"), meas = read_table(d / "tip_measured.csv");
    const double mee = mean_euclidean_error(sim.values.rightCols(3), meas.values.rightCols(3));
    EXPECT_NEAR(rep.at("mean_euclidean_error_m").get<double>(), mee, 1e-12);
    EXPECT_EQ(rep.at("clamped_samples").get<int>(), 0);
}

TEST(Mpc, EquilibriumReferenceAndSchema) {
    const fs::path d = run_all_dir();
    RunConfig cfg = default_run_config();
    cfg.control.reference.kind = ReferenceConfig::Kind::Step;
    cfg.control.reference.step_target = Eigen::Vector2d::Zero();
    cfg.control.reference.duration_s = 3.0;
    const fs::path e = oracle::temp_dir("mpc_eq");
    const MpcRunSummary s = cmd_mpc(d / "model_sindyc.json", cfg, e, "eq");
    EXPECT_EQ(s.controller, "nonlinear");
    EXPECT_EQ(s.steps, 100);
    EXPECT_LT(s.max_abs_state_rad, 0.01);
    EXPECT_EQ(s.solver_failures, 0);
    EXPECT_LT(s.max_solve_ms, 30.0);
    std::ifstream in(e / "mpc_eq.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "t,ref1,ref2,q1,q2,f1,f2,f3,f4,status,solve_ms");
    const json rep = read_json(e / "mpc_eq.json");
    EXPECT_EQ(rep.at("steps").get<int>(), 100);
    EXPECT_EQ(rep.at("controller"), "nonlinear");
}

TEST(Mpc, ArxModelAndSampleTimeMismatchAreConfigErrors) {
    const fs::path d = run_all_dir();
    RunConfig cfg = default_run_config();
    cfg.control.reference.duration_s = 1.0;
    const fs::path e = oracle::temp_dir("mpc_err");
    EXPECT_THROW(cmd_mpc(d / "model_arx.json", cfg, e, "arx"), ConfigError);
    cfg.control.mpc.sample_time_s = 0.05;
    EXPECT_THROW(cmd_mpc(d / "model_sindyc.json", cfg, e, "dt"), ConfigError);
}

TEST(Mpc, LinearControllerRunsOnN4sidModel) {
    const fs::path d = run_all_dir();
    const json rep = read_json(d / "mpc_n4sid.json");
    EXPECT_EQ(rep.at("controller"), "linear");
    EXPECT_EQ(rep.at("solver_failures").get<int>(), 0);
    EXPECT_TRUE(rep.at("inputs_within_bounds").get<bool>());
}

TEST(Report, RowsMatchValidationFiles) {
    const fs::path d = run_all_dir();
    const std::vector<ReportRow> rows = cmd_report(d);
    ASSERT_EQ(rows.size(), 3u);
    for (const ReportRow& r : rows) {
        ASSERT_TRUE(r.present) << r.method;
        const json v = read_json(d / ("validate_" + r.method + ".json"));
        EXPECT_NEAR(r.mean_fit, v.at("mean_fit").get<double>(), 0.01);
    }
    const Table traces_header = [&] {
        std::ifstream in(d / "traces.csv");
        std::string h;
        std::getline(in, h);
        Table t;
        t.header = {h};
        return t;
    }();
    EXPECT_EQ(traces_header.header[0], "series,t,value");
}

TEST(Report, MissingMethodsAreAbsent) {
    const fs::path src = run_all_dir();
    const fs::path d = oracle::temp_dir("report_absent");
    fs::copy_file(src / "validate_arx.json", d / "validate_arx.json");
    fs::copy_file(src / "sim_arx.csv", d / "sim_arx.csv");
    fs::copy_file(src / "val.csv", d / "val.csv");
    const std::vector<ReportRow> rows = cmd_report(d);
    ASSERT_EQ(rows.size(), 3u);
    int present = 0;
    for (const ReportRow& r : rows) present += r.present ? 1 : 0;
    EXPECT_EQ(present, 1);
    const std::string csv = slurp(d / "report.csv");
    EXPECT_NE(csv.find("n4sid,absent"), std::string::npos);
    EXPECT_NE(csv.find("sindyc,absent"), std::string::npos);
}

TEST(RunAll, ReportsAllThreeMethods) {
    const std::string csv = slurp(run_all_dir() / "report.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,status,mean_fit,fit_y1,fit_y2");
    for (const char* m : {"n4sid,ok", "arx,ok", "sindyc,ok"}) EXPECT_NE(csv.find(m), std::string::npos) << m;
}

TEST(Cli, ExitCodesAndErrorPrefix) {
    const fs::path d = oracle::temp_dir("cli_codes");
    const fs::path err = d / "stderr.txt";

    EXPECT_EQ(run_cli("--no-such-flag", err), 2);

    std::ofstream(d / "noplant.json") << R"({"seed": 1})";
    EXPECT_EQ(run_cli("gen-data -c " + (d / "noplant.json").string() + " -o " + d.string(), err), 2);
    EXPECT_EQ(slurp(err).rfind("error[config]", 0), 0u) << slurp(err);

    std::ofstream(d / "cfg.json") << R"({"plant": {}, "data": {"train": [{"kind": "prbs", "duration_s": 20}],
        "validation": [{"kind": "prbs", "duration_s": 10}]}})";
    EXPECT_EQ(run_cli("gen-data -c " + (d / "cfg.json").string() + " --seed 4 -o " + d.string(), err), 0);
    EXPECT_TRUE(fs::exists(d / "train.csv"));
    EXPECT_EQ(read_json(d / "provenance.json").at("seed").get<int>(), 4);
    EXPECT_EQ(run_cli("identify -m arx -t " + (d / "train.csv").string() + " -o " + (d / "m.json").string(), err), 0);
    EXPECT_EQ(run_cli("validate -m " + (d / "m.json").string() + " -v " + (d / "val.csv").string() + " -o " +
                          d.string(),
                      err),
              0);
    EXPECT_TRUE(fs::exists(d / "validate_arx.json"));

    EXPECT_EQ(run_cli("identify -m pem -t " + (d / "train.csv").string() + " -o " + (d / "p.json").string(), err), 2);
    EXPECT_EQ(slurp(err).rfind("error[config]", 0), 0u) << slurp(err);

    std::ofstream(d / "bad.csv") << "t,u1,y1\n0,1\n";
    EXPECT_EQ(run_cli("validate -m " + (d / "m.json").string() + " -v " + (d / "bad.csv").string() + " -o " +
                          d.string(),
                      err),
              3);
    EXPECT_EQ(slurp(err).rfind("error[data]", 0), 0u) << slurp(err);
}
