#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tendonid/kinematics.hpp"
#include "tendonid/mpc.hpp"
#include "tendonid/n4sid.hpp"
#include "tendonid/plantsim.hpp"
#include "tendonid/sindyc.hpp"

namespace tendonid {

struct DataConfig {
    /// Segments are generated back to back from rest; each segment without an
    /// explicit seed gets one derived from the global seed.
    std::vector<ExcitationSpec> train;
    std::vector<ExcitationSpec> validation;
    std::optional<double> lowpass_cutoff_rad_per_sample;
    double output_noise_std_rad = 0.0;
};

struct ArxOrders {
    int na = 8;
    int nb = 8;
    int nk = 1;
};

struct IdentificationConfig {
    N4sidConfig n4sid;
    ArxOrders arx;
    LibrarySpec library;
    double lambda = kDefaultSindyLambda;
};

struct ReferenceConfig {
    enum class Kind { Petal, Step, File };
    Kind kind = Kind::Petal;
    PetalSpec petal;
    Eigen::Vector2d step_target{0.3, -0.2};
    double step_time_s = 1.0;
    std::string file;  // CSV with columns t, ref1, ref2 (or any two trailing columns)
    double duration_s = 30.0;
};

std::string reference_kind_name(ReferenceConfig::Kind kind);
ReferenceConfig::Kind parse_reference_kind(const std::string& name);

struct ControlConfig {
    MpcConfig mpc;
    ObserverConfig observer;
    ReferenceConfig reference;
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    double sample_time_s = 0.03;
    SnakePlantConfig plant;
    DataConfig data;
    IdentificationConfig identification;
    ControlConfig control;
};

/// Defaults used when a section is omitted, with the standard data protocol:
/// circle sweep followed by pseudo-random segments for both train and validation.
RunConfig default_run_config();

/// Parses JSON text. The "plant" section is required (it may be empty);
/// unknown keys are rejected. Throws ConfigError.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully resolved config (all defaults and derived seeds filled in) as JSON text.
std::string run_config_to_json(const RunConfig& cfg);

/// Reference rows for round(duration / dt) + horizon + 1 samples.
Eigen::MatrixXd build_reference(const ReferenceConfig& ref, double sample_time_s, int horizon);

}  // namespace tendonid
