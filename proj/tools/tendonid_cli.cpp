// tendonid: data generation, identification, validation, reconstruction,
// closed-loop MPC and reporting for the tendon-driven snake plant.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>

#include "tendonid/errors.hpp"
#include "tendonid/pipeline.hpp"

using namespace tendonid;
using nlohmann::json;

namespace {

struct ConfigArgs {
    std::string file;
    std::optional<std::uint64_t> seed;
    std::optional<int> horizon;
    std::optional<std::string> reference;
    std::optional<std::string> reference_file;
    std::optional<double> duration;
    std::optional<std::string> observer;
};

void add_config_option(CLI::App* cmd, ConfigArgs& a) {
    cmd->add_option("-c,--config", a.file, "JSON run config (defaults apply to omitted sections)")
        ->check(CLI::ExistingFile);
}

// Command-line overrides are written into the JSON before it is parsed.
RunConfig resolve_config(const ConfigArgs& a) {
    json j = json::object();
    if (!a.file.empty()) {
        std::ifstream in(a.file);
        if (!in) throw ConfigError("cannot open config " + a.file);
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError("malformed config " + a.file + ": " + e.what());
        }
    } else {
        j["plant"] = json::object();
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    if (a.seed) j["seed"] = *a.seed;
    if (a.horizon) j["mpc"]["horizon_N"] = *a.horizon;
    if (a.reference) j["mpc"]["reference"]["kind"] = *a.reference;
    if (a.reference_file) j["mpc"]["reference"]["file"] = *a.reference_file;
    if (a.duration) j["mpc"]["reference"]["duration_s"] = *a.duration;
    if (a.observer) j["mpc"]["observer"]["kind"] = *a.observer;
    return parse_run_config(j.dump());
}

fs::path output_dir(const std::string& flag, const RunConfig& cfg) {
    return flag.empty() ? fs::path(cfg.output_dir) : fs::path(flag);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"System identification and MPC toolkit for a two-segment tendon-driven snake arm"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "tendonid 1.0.0");

    ConfigArgs cargs;
    std::string out;
    std::string input, train, val, model, trajectory, measured, label;
    std::string method;
    std::optional<double> lambda, cutoff;
    std::optional<int> order;
    double train_fraction = 0.7;
    bool filter_after = false;
    int exit_code = 0;

    auto* gen = app.add_subcommand("gen-data", "Simulate the plant under the configured excitation");
    add_config_option(gen, cargs);
    gen->add_option("--seed", cargs.seed, "Global seed (overrides the config)");
    gen->add_option("-o,--out", out, "Output directory (default: config output_dir)");

    auto* pre = app.add_subcommand("preprocess", "Optional low-pass filtering and a train/validation split");
    pre->add_option("-i,--input", input, "Recording CSV (t, u*, y*)")->required()->check(CLI::ExistingFile);
    pre->add_option("--cutoff", cutoff, "Low-pass cutoff in rad/sample, in (0, pi); omit for no filtering");
    pre->add_option("--train-fraction", train_fraction, "Fraction of samples used for training")
        ->check(CLI::Range(0.0, 1.0));
    pre->add_flag("--filter-after-split", filter_after, "Filter train and validation separately");
    pre->add_option("-o,--out", out, "Output directory")->required();

    auto* ident = app.add_subcommand("identify", "Fit an N4SID, ARX or SINDYc model");
    ident->add_option("-m,--method", method, "n4sid | arx | sindyc")->required();
    ident->add_option("-t,--train", train, "Training CSV")->required()->check(CLI::ExistingFile);
    add_config_option(ident, cargs);
    ident->add_option("--lambda", lambda, "SINDYc sparsity threshold (normalized units)");
    ident->add_option("--order", order, "N4SID model order");
    ident->add_option("-o,--out", out, "Model file to write")->required();

    auto* valid = app.add_subcommand("validate", "Free-run validation of a model");
    valid->add_option("-m,--model", model, "Model file")->required()->check(CLI::ExistingFile);
    valid->add_option("-v,--val", val, "Validation CSV")->required()->check(CLI::ExistingFile);
    valid->add_option("-o,--out", out, "Output directory")->required();

    auto* recon = app.add_subcommand("reconstruct", "Six-joint reconstruction and tip positions");
    recon->add_option("-t,--trajectory", trajectory, "CSV with t and two joint angles")
        ->required()
        ->check(CLI::ExistingFile);
    recon->add_option("--measured", measured, "Measured trajectory for the tip-error summary")
        ->check(CLI::ExistingFile);
    recon->add_option("-l,--label", label, "Output file label")->default_val("sim");
    recon->add_option("-o,--out", out, "Output directory")->required();

    auto* mpc = app.add_subcommand("mpc", "Closed-loop MPC on the simulated plant");
    mpc->add_option("-m,--model", model, "SINDy or state-space model file")->required()->check(CLI::ExistingFile);
    add_config_option(mpc, cargs);
    mpc->add_option("--reference", cargs.reference, "petal | step | file");
    mpc->add_option("--reference-file", cargs.reference_file, "CSV with t, ref1, ref2")->check(CLI::ExistingFile);
    mpc->add_option("--horizon", cargs.horizon, "Prediction horizon in samples");
    mpc->add_option("--duration", cargs.duration, "Run length in seconds");
    mpc->add_option("--observer", cargs.observer, "direct | kalman (linear MPC only)");
    mpc->add_option("-l,--label", label, "Output file label")->default_val("run");
    mpc->add_option("-o,--out", out, "Output directory (default: config output_dir)");

    auto* rep = app.add_subcommand("report", "Comparison table from validate_*.json files");
    rep->add_option("-o,--out", out, "Directory holding the validation reports")->required();

    auto* all = app.add_subcommand("run-all", "gen-data, identify, validate, reconstruct, mpc, report");
    add_config_option(all, cargs);
    all->add_option("--seed", cargs.seed, "Global seed (overrides the config)");
    all->add_option("-o,--out", out, "Output directory (default: config output_dir)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ErrorCode::Config);
    }

    try {
        if (*gen) {
            const RunConfig cfg = resolve_config(cargs);
            const fs::path dir = output_dir(out, cfg);
            cmd_gen_data(cfg, dir);
            std::cout << "wrote " << (dir / "train.csv").string() << ", " << (dir / "val.csv").string() << "\n";
        } else if (*pre) {
            cmd_preprocess(input, cutoff, train_fraction, filter_after, out);
            std::cout << "wrote " << (fs::path(out) / "train.csv").string() << ", "
                      << (fs::path(out) / "val.csv").string() << "\n";
        } else if (*ident) {
            const Method m = parse_method(method);
            RunConfig cfg = resolve_config(cargs);
            if (order) {
                cfg.identification.n4sid.order = *order;
                cfg.identification.n4sid.validate();
            }
            cmd_identify(m, train, cfg.identification, lambda, out);
            std::cout << "wrote " << out << "\n";
        } else if (*valid) {
            const FitReport fit = cmd_validate(model, val, out);
            std::cout << "mean fit " << fit.mean_fit << " %\n";
        } else if (*recon) {
            std::optional<fs::path> m;
            if (!measured.empty()) m = measured;
            const ReconstructSummary s = cmd_reconstruct(trajectory, m, out, label);
            std::cout << s.samples << " samples";
            if (s.mean_euclidean_error_m) std::cout << ", mean tip error " << *s.mean_euclidean_error_m << " m";
            std::cout << "\n";
        } else if (*mpc) {
            const RunConfig cfg = resolve_config(cargs);
            const MpcRunSummary s = cmd_mpc(model, cfg, output_dir(out, cfg), label);
            std::cout << s.controller << " mpc: rms " << s.rms_error_rad << " rad, max solve " << s.max_solve_ms
                      << " ms, clipping " << s.clipping_events << ", solver failures " << s.solver_failures << "\n";
            if (s.solver_failures > 0) {
                std::cerr << "error[infeasible]: " << s.solver_failures << " control steps had no usable solution\n";
                exit_code = static_cast<int>(ErrorCode::Infeasible);
            }
        } else if (*rep) {
            for (const auto& r : cmd_report(out)) {
                std::cout << r.method << ": " << (r.present ? std::to_string(r.mean_fit) : std::string("absent"))
                          << "\n";
            }
        } else if (*all) {
            const RunConfig cfg = resolve_config(cargs);
            const fs::path dir = output_dir(out, cfg);
            for (const auto& r : cmd_run_all(cfg, dir)) {
                std::cout << r.method << ": " << (r.present ? std::to_string(r.mean_fit) : std::string("absent"))
                          << "\n";
            }
            std::cout << "outputs in " << dir.string() << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "error[" << error_code_name(e.code()) << "]: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error[data]: " << e.what() << "\n";
        return static_cast<int>(ErrorCode::Data);
    }
    return exit_code;
}
