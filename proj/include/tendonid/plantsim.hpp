#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "tendonid/arx.hpp"
#include "tendonid/dataset.hpp"
#include "tendonid/sindyc.hpp"
#include "tendonid/state_space.hpp"

namespace tendonid {

/// Reduced two-joint tendon-driven plant
///
///   B q'' = tau - gravity_gain .* sin(q) - viscous .* q' - coulomb .* tanh(q' / coulomb_eps)
///
/// with tau = moment_arm * (f1 - f3, f2 - f4) and constant symmetric inertia
/// B = [[I1, c], [c, I2]], c = coupling_eps * sqrt(I1 * I2).
struct SnakePlantConfig {
    Eigen::Vector2d inertia_diag{0.002, 0.002};   // kg m^2
    Eigen::Vector2d gravity_gain{1.5, 1.5};       // N m
    Eigen::Vector2d viscous_coeff{0.3, 0.3};      // N m s / rad
    Eigen::Vector2d coulomb_coeff{0.02, 0.02};    // N m
    double moment_arm_m = 0.1;
    double coupling_eps = 0.1;
    double force_bias_N = 105.0;
    double coulomb_eps = 1e-3;                    // rad/s, tanh smoothing width
    double max_substep_s = 1e-3;
    /// Replaces gravity_gain .* sin(q) by the linear spring gravity_gain .* q.
    bool linear_gravity = false;

    Eigen::Matrix2d inertia() const;
    Eigen::Vector2d gravity_torque(const Eigen::Vector2d& q) const;
    void validate() const;
};

struct PlantState {
    Eigen::Vector2d q = Eigen::Vector2d::Zero();
    Eigen::Vector2d qdot = Eigen::Vector2d::Zero();
};

inline constexpr double kJointLimit = 1.5707963267948966;  // pi / 2

/// Antagonistic pairs (1,3) and (2,4) through a constant moment arm.
Eigen::Vector2d tendon_to_torque(const Eigen::Vector4d& forces, const SnakePlantConfig& cfg);

/// One semi-implicit Euler step. Viscous and Coulomb terms are implicit in the
/// new velocity, gravity is explicit; joints clamp at +-pi/2 with velocity zeroed.
PlantState plant_step(const PlantState& state, const Eigen::Vector4d& forces, double dt,
                      const SnakePlantConfig& cfg);

/// Holds `forces` for `duration` seconds using substeps no longer than cfg.max_substep_s.
PlantState plant_advance(const PlantState& state, const Eigen::Vector4d& forces, double duration,
                         const SnakePlantConfig& cfg);

/// Kinetic plus gravity potential energy (1 - cos q, or q^2 / 2 for the linear spring).
double plant_energy(const PlantState& state, const SnakePlantConfig& cfg);

/// Samples q at the input rate, starting from rest at q = 0 unless `initial` is given.
Dataset simulate_plant(const SnakePlantConfig& cfg, const TimeSeries& U, const PlantState& initial = {});

struct ExcitationSpec {
    enum class Kind { Multisine, Prbs, CircleSweep };

    Kind kind = Kind::Prbs;
    double duration_s = 60.0;
    double amplitude_N = 8.5;
    std::uint64_t seed = 1;
    double bias_N = 105.0;
    /// Amplitude of a slow random pretension shared by both tendons of a pair.
    /// It produces no torque but keeps the four input channels linearly independent.
    double common_mode_N = 1.0;
    /// Prbs: hold times drawn uniformly from [min_hold, max_hold] samples.
    int min_hold_samples = 3;
    int max_hold_samples = 60;
    /// Prbs: number of equally spaced levels in [-A, A]; 2 gives a binary sequence.
    int prbs_levels = 11;
    /// CircleSweep: radii step from A/rings to A, one ring per period.
    int circle_rings = 12;
    double circle_period_s = 8.0;
    /// Multisine: number of harmonics and the highest frequency as a fraction of Nyquist.
    int multisine_harmonics = 12;
    double multisine_max_fraction = 0.2;

    void validate() const;
};

std::string excitation_kind_name(ExcitationSpec::Kind kind);
ExcitationSpec::Kind parse_excitation_kind(const std::string& name);

/// Four nonnegative tendon forces: bias + common mode +- differential excitation.
TimeSeries generate_excitation(const ExcitationSpec& spec, double sample_time_s);

/// Random stable (A,B,C,D): spectral radius <= 0.95, controllable and observable.
StateSpaceModel make_random_lti(std::uint64_t seed, Eigen::Index n, Eigen::Index p, Eigen::Index q,
                                double sample_time_s = 1.0);

/// Random stable ARX truth with every order in [1, max_order] and nk = 1.
ArxModel make_random_arx(std::uint64_t seed, Eigen::Index q, Eigen::Index p, int max_order,
                         double sample_time_s = 1.0);

/// Library used by make_sparse_nonlinear_truth: x, u, x^2 monomials, x*u, sin/cos(x), no constant.
LibrarySpec sparse_truth_library();

/// Two-state, two-input discrete map with at most 6 active terms drawn from
/// {x, x^2, x*u, sin(x), u}; coefficient magnitudes in [0.2, 0.5]; Jacobian at
/// the origin has largest singular value below 1; the library evaluated on a
/// random binary probe response has full column rank.
SindyModel make_sparse_nonlinear_truth(std::uint64_t seed);

/// Random binary sequence in {-amplitude, +amplitude} with random hold times.
Eigen::MatrixXd random_binary_signal(std::uint64_t seed, Eigen::Index samples, Eigen::Index channels,
                                     double amplitude, int min_hold = 1, int max_hold = 5);

}  // namespace tendonid
