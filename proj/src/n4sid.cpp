#include "tendonid/n4sid.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "tendonid/errors.hpp"

namespace tendonid {

namespace {

// Minimum-norm solution of Theta * Z = T (Z is k x r, T is t x r).
Eigen::MatrixXd solve_right(const Eigen::MatrixXd& T, const Eigen::MatrixXd& Z) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Z.transpose());
    cod.setThreshold(1e-11);
    return cod.solve(T.transpose()).transpose();
}

// Selects the listed rows of M.
Eigen::MatrixXd take_rows(const Eigen::MatrixXd& M, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), M.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = M.row(rows[k]);
    return out;
}

}  // namespace

int N4sidConfig::effective_block_rows() const {
    if (block_rows_i > 0) return block_rows_i;
    return std::max(2 * order.value_or(0), 20);
}

void N4sidConfig::validate() const {
    if (block_rows_i < 0) throw ConfigError("n4sid block_rows_i must be >= 0 (0 = automatic)");
    if (order && *order < 1) throw ConfigError("n4sid order must be >= 1");
    if (order && effective_block_rows() < *order + 1) throw ConfigError("n4sid block_rows_i must be >= order + 1");
    if (!(sv_threshold > 0.0 && sv_threshold < 1.0)) throw ConfigError("n4sid sv_threshold must lie in (0, 1)");
}

Eigen::MatrixXd block_hankel(const Eigen::MatrixXd& series, Eigen::Index rows) {
    const Eigen::Index m = series.rows();
    const Eigen::Index c = series.cols();
    if (rows < 1) throw DataError("block_hankel needs at least one block row");
    if (m < 2 * rows) {
        throw DataError("block_hankel needs at least " + std::to_string(2 * rows) + " samples, got " +
                        std::to_string(m));
    }
    const Eigen::Index cols = m - 2 * rows + 1;
    Eigen::MatrixXd H(rows * c, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index r = 0; r < rows; ++r) H.block(r * c, j, c, 1) = series.row(j + r).transpose();
    return H;
}

int estimate_order(const Eigen::VectorXd& sv, double threshold) {
    if (sv.size() == 0) throw DataError("estimate_order needs at least one singular value");
    if ((sv.array() < 0.0).any()) throw DataError("singular values must be nonnegative");
    for (Eigen::Index k = 1; k < sv.size(); ++k) {
        if (sv(k) > sv(k - 1)) throw DataError("singular values must be sorted in descending order");
    }
    if (sv(0) == 0.0) return 1;
    for (Eigen::Index n = 1; n < sv.size(); ++n) {
        if (sv(n) / sv(0) < threshold) return static_cast<int>(n);
    }
    return static_cast<int>(sv.size());
}

StateSpaceModel identify_n4sid(const Dataset& ds, const N4sidConfig& cfg, N4sidDiagnostics* diagnostics) {
    cfg.validate();
    ds.validate();
    const Eigen::Index p = ds.num_inputs();
    const Eigen::Index q = ds.num_outputs();
    const Eigen::Index m = ds.samples();
    const Eigen::Index i = cfg.effective_block_rows();
    Eigen::VectorXd u_mean = Eigen::VectorXd::Zero(p), y_mean = Eigen::VectorXd::Zero(q);
    if (cfg.remove_means) {
        u_mean = ds.inputs.values.colwise().mean().transpose();
        y_mean = ds.outputs.values.colwise().mean().transpose();
    }
    const Eigen::MatrixXd Ud = ds.inputs.values.rowwise() - u_mean.transpose();
    const Eigen::MatrixXd Yd = ds.outputs.values.rowwise() - y_mean.transpose();
    if (m < 4 * i) {
        throw DataError("n4sid needs at least 4 * block_rows = " + std::to_string(4 * i) + " samples, got " +
                        std::to_string(m));
    }

    // Rows of H: input block rows 0..2i-1 (p each) followed by output block rows 0..2i-1 (q each).
    const Eigen::Index cols = m - 2 * i + 1;
    Eigen::MatrixXd H(2 * i * (p + q), cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index r = 0; r < 2 * i; ++r) {
            H.block(r * p, j, p, 1) = Ud.row(j + r).transpose();
            H.block(2 * i * p + r * q, j, q, 1) = Yd.row(j + r).transpose();
        }
    }
    const Eigen::MatrixXd Uhank = H.topRows(2 * i * p);
    if (numerical_rank(Uhank, 1e-10) < Uhank.rows()) {
        throw DataError("n4sid: inputs are not persistently exciting (rank-deficient input Hankel matrix)");
    }

    // H = L Q' with orthonormal Q; every projection below acts on rows of L alone.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(H.transpose());
    const Eigen::Index r = std::min(H.rows(), H.cols());
    const Eigen::MatrixXd L =
        qr.matrixQR().topRows(r).triangularView<Eigen::Upper>().toDenseMatrix().transpose();

    auto u_rows = [&](Eigen::Index first, Eigen::Index count) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index b = first; b < first + count; ++b)
            for (Eigen::Index c = 0; c < p; ++c) idx.push_back(b * p + c);
        return idx;
    };
    auto y_rows = [&](Eigen::Index first, Eigen::Index count) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index b = first; b < first + count; ++b)
            for (Eigen::Index c = 0; c < q; ++c) idx.push_back(2 * i * p + b * q + c);
        return idx;
    };
    auto concat = [](std::vector<Eigen::Index> a, const std::vector<Eigen::Index>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };

    // Oblique projection of future outputs along future inputs onto past data.
    auto oblique = [&](Eigen::Index split) {
        const Eigen::MatrixXd Wp = take_rows(L, concat(u_rows(0, split), y_rows(0, split)));
        const Eigen::MatrixXd Uf = take_rows(L, u_rows(split, 2 * i - split));
        const Eigen::MatrixXd Yf = take_rows(L, y_rows(split, 2 * i - split));
        Eigen::MatrixXd Z(Wp.rows() + Uf.rows(), L.cols());
        Z << Wp, Uf;
        const Eigen::MatrixXd theta = solve_right(Yf, Z);
        return Eigen::MatrixXd(theta.leftCols(Wp.rows()) * Wp);
    };
    const Eigen::MatrixXd Oi = oblique(i);
    const Eigen::MatrixXd Oim1 = oblique(i + 1);
    if (!Oi.allFinite() || !Oim1.allFinite()) throw NumericError("n4sid: projection produced non-finite values");

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Oi, Eigen::ComputeThinU);
    if (svd.info() != Eigen::Success) throw NumericError("n4sid: SVD failed");
    Eigen::MatrixXd Us = svd.matrixU();
    const Eigen::VectorXd sv = svd.singularValues();
    for (Eigen::Index c = 0; c < Us.cols(); ++c) {
        Eigen::Index arg = 0;
        Us.col(c).cwiseAbs().maxCoeff(&arg);
        if (Us(arg, c) < 0.0) Us.col(c) *= -1.0;
    }

    const int n = cfg.order ? *cfg.order : estimate_order(sv, cfg.sv_threshold);
    if (n > (i - 1) * q) {
        throw DataError("n4sid: order " + std::to_string(n) + " exceeds (block_rows - 1) * outputs = " +
                        std::to_string((i - 1) * q));
    }
    if (sv(n - 1) <= 0.0) throw NumericError("n4sid: requested order exceeds the rank of the projection");

    const Eigen::MatrixXd Gamma = Us.leftCols(n) * sv.head(n).cwiseSqrt().asDiagonal();
    const Eigen::MatrixXd Gamma_short = Gamma.topRows((i - 1) * q);
    const Eigen::MatrixXd Xi = Gamma.completeOrthogonalDecomposition().solve(Oi);
    const Eigen::MatrixXd Xi1 = Gamma_short.completeOrthogonalDecomposition().solve(Oim1);

    // [X_{i+1}; Y_i] = [A B; C D] [X_i; U_i], solved jointly in least squares.
    const Eigen::MatrixXd Ui = take_rows(L, u_rows(i, 1));
    const Eigen::MatrixXd Yi = take_rows(L, y_rows(i, 1));
    Eigen::MatrixXd lhs(n + q, L.cols()), rhs(n + p, L.cols());
    lhs << Xi1, Yi;
    rhs << Xi, Ui;
    const Eigen::MatrixXd theta = rhs.transpose().colPivHouseholderQr().solve(lhs.transpose()).transpose();
    if (!theta.allFinite()) throw NumericError("n4sid: system matrices are not finite");

    StateSpaceModel model;
    model.A = theta.topLeftCorner(n, n);
    model.B = theta.topRightCorner(n, p);
    model.C = theta.bottomLeftCorner(q, n);
    model.D = theta.bottomRightCorner(q, p);
    model.sample_time_s = ds.sample_time_s();
    if (cfg.remove_means) {
        model.u_offset = u_mean;
        model.y_offset = y_mean;
    }
    if (diagnostics) {
        diagnostics->singular_values = sv;
        diagnostics->order = n;
        diagnostics->block_rows = static_cast<int>(i);
    }
    return model;
}

}  // namespace tendonid
