#include "tendonid/kinematics.hpp"

#include <cmath>

#include "tendonid/errors.hpp"

namespace tendonid {

void JointRatios::validate() const {
    for (double r : {pan(0), pan(1), tilt(0), tilt(1)}) {
        if (!(r > 0.0 && r < 1.0)) throw ConfigError("joint ratios must lie in (0, 1)");
    }
}

void ChainGeometry::validate() const {
    if (num_joints < 2 || num_joints % 2 != 0) throw ConfigError("num_joints must be even and >= 2");
    if (!(link_length_m > 0.0)) throw ConfigError("link_length_m must be > 0");
}

Vector6d reconstruct_joints(double q1, double q2, const JointRatios& ratios) {
    Vector6d q;
    q << q1, q2, ratios.pan(0) * q1, ratios.tilt(0) * q2, ratios.pan(1) * q1, ratios.tilt(1) * q2;
    return q;
}

Eigen::Vector3d forward_kinematics(const Eigen::VectorXd& q, const ChainGeometry& geom) {
    geom.validate();
    if (q.size() != geom.num_joints) throw DataError("joint vector length does not match the chain");
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    for (Eigen::Index k = 0; k < q.size(); ++k) {
        if (!std::isfinite(q(k)) || std::abs(q(k)) > M_PI / 2 + 1e-12) {
            throw DataError("joint angle out of range [-pi/2, pi/2]");
        }
        const Eigen::Vector3d axis = (k % 2 == 0) ? Eigen::Vector3d::UnitY() : Eigen::Vector3d::UnitX();
        R = R * Eigen::AngleAxisd(q(k), axis).toRotationMatrix();
        p += R * Eigen::Vector3d(0.0, 0.0, geom.link_length_m);
    }
    return p;
}

double mean_euclidean_error(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Phat) {
    if (P.rows() != Phat.rows() || P.cols() != Phat.cols()) throw DataError("trajectory shapes differ");
    if (P.rows() < 1) throw DataError("trajectories must contain at least one sample");
    return (P - Phat).rowwise().norm().mean();
}

Eigen::MatrixXd tip_trajectory(const Eigen::MatrixXd& q12, const JointRatios& ratios, const ChainGeometry& geom) {
    if (q12.cols() != 2) throw DataError("joint trajectory must have two columns (q1, q2)");
    if (geom.num_joints != 6) throw DataError("constant-ratio reconstruction needs a six-joint chain");
    Eigen::MatrixXd P(q12.rows(), 3);
    for (Eigen::Index k = 0; k < q12.rows(); ++k) {
        P.row(k) = forward_kinematics(reconstruct_joints(q12(k, 0), q12(k, 1), ratios), geom).transpose();
    }
    return P;
}

Eigen::Vector2d tip_gains(const JointRatios& ratios, const ChainGeometry& geom) {
    // A joint rotation moves the tip by angle times the remaining chain length.
    const double L = geom.link_length_m;
    const double gx = L * (6.0 + 4.0 * ratios.pan(0) + 2.0 * ratios.pan(1));
    const double gy = -L * (5.0 + 3.0 * ratios.tilt(0) + 1.0 * ratios.tilt(1));
    return {gx, gy};
}

Eigen::MatrixXd petal_reference(const PetalSpec& spec, double sample_time_s, Eigen::Index samples,
                                const JointRatios& ratios, const ChainGeometry& geom) {
    if (!(spec.period_s > 0.0)) throw ConfigError("petal period_s must be > 0");
    if (!(spec.max_joint_rad > 0.0 && spec.max_joint_rad < M_PI / 2)) {
        throw ConfigError("petal max_joint_rad must lie in (0, pi/2)");
    }
    if (!(sample_time_s > 0.0) || samples < 1) throw ConfigError("petal reference needs dt > 0 and samples >= 1");
    const Eigen::Vector2d g = tip_gains(ratios, geom);
    const double radius = spec.max_joint_rad * std::min(std::abs(g(0)), std::abs(g(1)));
    Eigen::MatrixXd ref(samples, 2);
    for (Eigen::Index k = 0; k < samples; ++k) {
        const double theta = M_PI / 4 + 2.0 * M_PI * static_cast<double>(k) * sample_time_s / spec.period_s;
        const double r = radius * std::abs(std::cos(2.0 * theta));
        ref(k, 0) = r * std::cos(theta) / g(0);
        ref(k, 1) = r * std::sin(theta) / g(1);
    }
    return ref;
}

}  // namespace tendonid
