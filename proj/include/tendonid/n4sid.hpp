#pragma once

#include <Eigen/Dense>
#include <optional>

#include "tendonid/dataset.hpp"
#include "tendonid/state_space.hpp"

namespace tendonid {

struct N4sidConfig {
    /// Block rows i of the past/future Hankel matrices; 0 selects max(2 * order, 20).
    int block_rows_i = 0;
    /// Requested state dimension; empty means estimate it from the singular values.
    std::optional<int> order = 8;
    /// Relative singular-value cutoff used when `order` is empty.
    double sv_threshold = 1e-6;
    /// Identify on deviations from the sample means and store the means as the
    /// model's operating point.
    bool remove_means = false;

    int effective_block_rows() const;
    void validate() const;
};

/// Column j stacks samples j .. j+rows-1 of `series` (m x c), each sample's
/// channels contiguous. Result is (rows * c) x (m - 2 rows + 1).
Eigen::MatrixXd block_hankel(const Eigen::MatrixXd& series, Eigen::Index rows);

/// Smallest n with sv(n) / sv(0) < threshold (0-based sv), at least 1; the
/// full length when no such gap exists.
int estimate_order(const Eigen::VectorXd& singular_values, double threshold);

struct N4sidDiagnostics {
    Eigen::VectorXd singular_values;
    int order = 0;
    int block_rows = 0;
};

/// Oblique-projection subspace identification with identity weighting.
StateSpaceModel identify_n4sid(const Dataset& ds, const N4sidConfig& cfg = {},
                               N4sidDiagnostics* diagnostics = nullptr);

}  // namespace tendonid
