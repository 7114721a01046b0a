#pragma once

#include <Eigen/Dense>

namespace tendonid {

using Vector6d = Eigen::Matrix<double, 6, 1>;

/// Fixed multiples of the first joint in each bending plane.
struct JointRatios {
    Eigen::Vector2d pan{0.6493, 0.2053};   // q3 / q1, q5 / q1
    Eigen::Vector2d tilt{0.6442, 0.2291};  // q4 / q2, q6 / q2

    void validate() const;
};

/// Idealized revolute chain: odd joints (1-based) pan about the local y axis,
/// even joints tilt about the local x axis, each followed by a link along local z.
struct ChainGeometry {
    int num_joints = 6;
    double link_length_m = 0.05;

    void validate() const;
};

/// (q1, q2, r3 q1, r4 q2, r5 q1, r6 q2)
Vector6d reconstruct_joints(double q1, double q2, const JointRatios& ratios = {});

/// Tip position with the base at the origin and the straight arm along +z.
Eigen::Vector3d forward_kinematics(const Eigen::VectorXd& q, const ChainGeometry& geom = {});

/// Mean pointwise distance between two m x 3 trajectories.
double mean_euclidean_error(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Phat);

/// Tip positions (m x 3) for a trajectory of (q1, q2) rows, through reconstruct_joints.
Eigen::MatrixXd tip_trajectory(const Eigen::MatrixXd& q12, const JointRatios& ratios = {},
                               const ChainGeometry& geom = {});

/// Small-angle tip sensitivities (dx/dq1, dy/dq2) at the straight configuration.
Eigen::Vector2d tip_gains(const JointRatios& ratios = {}, const ChainGeometry& geom = {});

struct PetalSpec {
    double period_s = 20.0;     // one full turn of the polar angle (four petals)
    double max_joint_rad = 0.6; // largest |q_i| reached at a petal tip
};

/// Four-petal rose r = R |cos 2 theta| traced by the tip, mapped back to (q1, q2)
/// through tip_gains. Starts at the centre (theta = pi / 4), continuous from rest. Returns `samples` x 2.
Eigen::MatrixXd petal_reference(const PetalSpec& spec, double sample_time_s, Eigen::Index samples,
                                const JointRatios& ratios = {}, const ChainGeometry& geom = {});

}  // namespace tendonid
