#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "tendonid/config.hpp"
#include "tendonid/model.hpp"

namespace tendonid {

namespace fs = std::filesystem;

enum class Method { N4sid, Arx, Sindyc };

std::string method_name(Method m);
/// Throws ConfigError for anything other than n4sid, arx, sindyc.
Method parse_method(const std::string& name);
/// Method that produces models of this kind.
Method method_of(const ModelKind& model);

/// Simulates the plant under the configured excitation, writes train.csv,
/// val.csv and provenance.json (resolved config and seed).
void cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir);

/// Optional zero-phase filtering and a contiguous split of one recording into
/// train.csv / val.csv. Filtering happens before the split unless
/// `filter_after_split` is set.
void cmd_preprocess(const fs::path& input, std::optional<double> cutoff, double train_fraction,
                    bool filter_after_split, const fs::path& out_dir);

/// Identifies and saves a model; `lambda` overrides the configured SINDYc threshold.
ModelKind cmd_identify(Method method, const fs::path& train_csv, const IdentificationConfig& cfg,
                       std::optional<double> lambda, const fs::path& model_out);

/// Free-run validation. Writes sim_<method>.csv (t, y1..yq) and
/// validate_<method>.json (per-channel and mean fit) into out_dir.
FitReport cmd_validate(const fs::path& model_file, const fs::path& val_csv, const fs::path& out_dir);

struct ReconstructSummary {
    std::optional<double> mean_euclidean_error_m;
    Eigen::Index samples = 0;
    Eigen::Index clamped_samples = 0;  // rows clamped to the joint range before kinematics
};

/// Six-joint reconstruction and tip positions for a (t, q1, q2) trajectory;
/// with `measured_csv`, also the measured tip path and the mean tip error.
ReconstructSummary cmd_reconstruct(const fs::path& trajectory_csv, const std::optional<fs::path>& measured_csv,
                                   const fs::path& out_dir, const std::string& label);

struct MpcRunSummary {
    std::string controller;
    double rms_error_rad = 0.0;
    double max_abs_error_rad = 0.0;
    double max_solve_ms = 0.0;
    double max_abs_state_rad = 0.0;
    int clipping_events = 0;
    int solver_failures = 0;
    bool inputs_within_bounds = true;
    bool states_within_bounds = true;
    Eigen::Index steps = 0;
};

/// Closed loop on the configured plant: SINDy models run nonlinear MPC,
/// state-space models run linear MPC. Writes mpc_<label>.csv and mpc_<label>.json.
MpcRunSummary cmd_mpc(const fs::path& model_file, const RunConfig& cfg, const fs::path& out_dir,
                      const std::string& label);

struct ReportRow {
    std::string method;
    bool present = false;
    double mean_fit = 0.0;
    Eigen::VectorXd per_channel_fit;
};

/// Collects validate_<method>.json files into report.txt / report.csv and the
/// long-format traces.csv. Missing methods are listed as absent.
std::vector<ReportRow> cmd_report(const fs::path& out_dir);

/// gen-data, identify x3, validate x3, reconstruct, mpc (SINDYc and N4SID), report.
std::vector<ReportRow> cmd_run_all(const RunConfig& cfg, const fs::path& out_dir);

}  // namespace tendonid
