#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <variant>

#include "tendonid/arx.hpp"
#include "tendonid/dataset.hpp"
#include "tendonid/sindyc.hpp"
#include "tendonid/state_space.hpp"

namespace tendonid {

using ModelKind = std::variant<StateSpaceModel, ArxModel, SindyModel>;

inline constexpr const char* kModelSchemaVersion = "tendonid-model-v1";

std::string model_kind_name(const ModelKind& model);
Eigen::Index model_inputs(const ModelKind& model);
Eigen::Index model_outputs(const ModelKind& model);
double model_sample_time(const ModelKind& model);

/// Free-run simulation over the rows of U.
///
/// `init` is interpreted per variant: state-space takes x0 (n x 1), SINDy takes
/// x0 (q x 1), ARX takes the first max_lag() output samples (max_lag x q).
TimeSeries simulate(const ModelKind& model, const TimeSeries& U, const Eigen::MatrixXd& init);

/// Validation initial condition taken from measured data: least-squares x0 over
/// the first 20 samples (state-space), measured lag window (ARX), or the first
/// measured output (SINDy).
Eigen::MatrixXd initial_condition_from_data(const ModelKind& model, const Dataset& ds);

struct FitReport {
    Eigen::VectorXd per_channel_fit;  // percent
    double mean_fit = 0.0;
};

/// 100 * (1 - ||y - yhat|| / ||y - mean(y)||) per channel, Euclidean over time.
FitReport fit_percent(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Yhat);

/// JSON text, matrices as row-major nested arrays.
void save_model(const ModelKind& model, const std::filesystem::path& path);
ModelKind load_model(const std::filesystem::path& path);

std::string model_to_json_string(const ModelKind& model);
ModelKind model_from_json_string(const std::string& text);

}  // namespace tendonid
