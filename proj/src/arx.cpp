#include "tendonid/arx.hpp"

#include <algorithm>
#include <cmath>

#include "tendonid/errors.hpp"

namespace tendonid {

int ArxModel::max_lag() const {
    int lag = 0;
    if (na.size() > 0) lag = na.maxCoeff();
    for (Eigen::Index i = 0; i < nb.rows(); ++i) {
        for (Eigen::Index j = 0; j < nb.cols(); ++j) {
            if (nb(i, j) > 0) lag = std::max(lag, nk(i, j) + nb(i, j) - 1);
        }
    }
    return lag;
}

int ArxModel::row_parameter_count(Eigen::Index i) const { return na.row(i).sum() + nb.row(i).sum(); }

void ArxModel::validate() const {
    const auto q = na.rows();
    const auto p = nb.cols();
    if (q < 1 || na.cols() != q) throw DataError("ARX na must be a non-empty square q x q matrix");
    if (nb.rows() != q || nk.rows() != q || nk.cols() != p || p < 1) {
        throw DataError("ARX nb and nk must both be q x p");
    }
    if ((na.array() < 0).any() || (nb.array() < 0).any()) throw DataError("ARX orders must be >= 0");
    if ((nk.array() < 1).any()) throw DataError("ARX input delay nk must be >= 1");
    if (a.size() != static_cast<std::size_t>(q) || b.size() != static_cast<std::size_t>(q)) {
        throw DataError("ARX coefficient arrays do not match output count");
    }
    for (Eigen::Index i = 0; i < q; ++i) {
        if (a[i].size() != static_cast<std::size_t>(q) || b[i].size() != static_cast<std::size_t>(p)) {
            throw DataError("ARX coefficient arrays do not match declared structure");
        }
        for (Eigen::Index j = 0; j < q; ++j) {
            if (a[i][j].size() != static_cast<std::size_t>(na(i, j))) {
                throw DataError("ARX a-coefficient length does not match na");
            }
        }
        for (Eigen::Index j = 0; j < p; ++j) {
            if (b[i][j].size() != static_cast<std::size_t>(nb(i, j))) {
                throw DataError("ARX b-coefficient length does not match nb");
            }
        }
    }
    for (const auto& row : a)
        for (const auto& poly : row)
            for (double v : poly)
                if (!std::isfinite(v)) throw DataError("ARX coefficient is not finite");
    for (const auto& row : b)
        for (const auto& poly : row)
            for (double v : poly)
                if (!std::isfinite(v)) throw DataError("ARX coefficient is not finite");
    if (!(sample_time_s > 0.0)) throw DataError("sample time must be positive");
}

ArxModel make_arx_structure(Eigen::Index q, Eigen::Index p, int na, int nb, int nk, double sample_time_s) {
    ArxModel m;
    m.na = Eigen::MatrixXi::Constant(q, q, na);
    m.nb = Eigen::MatrixXi::Constant(q, p, nb);
    m.nk = Eigen::MatrixXi::Constant(q, p, nk);
    m.a.assign(q, std::vector<std::vector<double>>(q, std::vector<double>(std::max(na, 0), 0.0)));
    m.b.assign(q, std::vector<std::vector<double>>(p, std::vector<double>(std::max(nb, 0), 0.0)));
    m.sample_time_s = sample_time_s;
    return m;
}

Eigen::RowVectorXd arx_regressor(const ArxModel& s, Eigen::Index i, const Eigen::MatrixXd& Y,
                                 const Eigen::MatrixXd& U, Eigen::Index k) {
    Eigen::RowVectorXd phi(s.row_parameter_count(i));
    Eigen::Index c = 0;
    for (Eigen::Index j = 0; j < s.outputs(); ++j) {
        for (int l = 1; l <= s.na(i, j); ++l) phi(c++) = -Y(k - l, j);
    }
    for (Eigen::Index j = 0; j < s.inputs(); ++j) {
        for (int l = 1; l <= s.nb(i, j); ++l) phi(c++) = U(k - s.nk(i, j) - l + 1, j);
    }
    return phi;
}

ArxModel identify_arx(const Dataset& ds, const ArxModel& structure) {
    ds.validate();
    structure.validate();
    if (ds.num_outputs() != structure.outputs() || ds.num_inputs() != structure.inputs()) {
        throw DataError("ARX structure does not match dataset channel counts");
    }
    ArxModel model = structure;
    model.sample_time_s = ds.sample_time_s();
    const Eigen::MatrixXd& Y = ds.outputs.values;
    const Eigen::MatrixXd& U = ds.inputs.values;
    const int L = model.max_lag();
    const Eigen::Index m = ds.samples();
    if (m <= L + 10) throw DataError("too few samples for the requested ARX orders");

    const Eigen::Index rows = m - L;
    for (Eigen::Index i = 0; i < model.outputs(); ++i) {
        const int npar = model.row_parameter_count(i);
        if (npar == 0) continue;
        if (rows <= npar) throw DataError("too few samples for the requested ARX orders");
        Eigen::MatrixXd Phi(rows, npar);
        Eigen::VectorXd target(rows);
        for (Eigen::Index r = 0; r < rows; ++r) {
            Phi.row(r) = arx_regressor(model, i, Y, U, L + r);
            target(r) = Y(L + r, i);
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Phi);
        qr.setThreshold(1e-10);
        if (qr.rank() < npar) {
            throw DataError("ARX regressor is rank deficient (insufficient excitation) for output " +
                            std::to_string(i + 1));
        }
        const Eigen::VectorXd theta = qr.solve(target);
        Eigen::Index c = 0;
        for (Eigen::Index j = 0; j < model.outputs(); ++j) {
            for (int l = 0; l < model.na(i, j); ++l) model.a[i][j][l] = theta(c++);
        }
        for (Eigen::Index j = 0; j < model.inputs(); ++j) {
            for (int l = 0; l < model.nb(i, j); ++l) model.b[i][j][l] = theta(c++);
        }
    }
    return model;
}

ArxModel identify_arx(const Dataset& ds, int na, int nb, int nk) {
    return identify_arx(ds, make_arx_structure(ds.num_outputs(), ds.num_inputs(), na, nb, nk, ds.sample_time_s()));
}

Eigen::VectorXd arx_one_step(const ArxModel& model, const Eigen::MatrixXd& y_history,
                             const Eigen::MatrixXd& u_history) {
    const int L = model.max_lag();
    if (y_history.rows() < L || u_history.rows() < L) throw DataError("ARX history shorter than max lag");
    if (y_history.cols() != model.outputs() || u_history.cols() != model.inputs()) {
        throw DataError("ARX history channel count mismatch");
    }
    // Row (ny - l) is y(k - l).
    const Eigen::Index ny = y_history.rows();
    const Eigen::Index nu = u_history.rows();
    Eigen::VectorXd y(model.outputs());
    for (Eigen::Index i = 0; i < model.outputs(); ++i) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < model.outputs(); ++j) {
            for (int l = 1; l <= model.na(i, j); ++l) acc -= model.a[i][j][l - 1] * y_history(ny - l, j);
        }
        for (Eigen::Index j = 0; j < model.inputs(); ++j) {
            for (int l = 1; l <= model.nb(i, j); ++l) {
                acc += model.b[i][j][l - 1] * u_history(nu - (model.nk(i, j) + l - 1), j);
            }
        }
        y(i) = acc;
    }
    return y;
}

Eigen::MatrixXd simulate_arx(const ArxModel& model, const Eigen::MatrixXd& U, const Eigen::MatrixXd& y_init) {
    if (U.cols() != model.inputs()) throw DataError("input channel count does not match model");
    const int L = model.max_lag();
    if (y_init.rows() < L || y_init.cols() != model.outputs()) {
        throw DataError("ARX initial window must hold max_lag rows of outputs");
    }
    const Eigen::Index m = U.rows();
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(m, model.outputs());
    const Eigen::Index seed = std::min<Eigen::Index>(L, m);
    Y.topRows(seed) = y_init.topRows(seed);
    for (Eigen::Index k = L; k < m; ++k) {
        for (Eigen::Index i = 0; i < model.outputs(); ++i) {
            double acc = 0.0;
            for (Eigen::Index j = 0; j < model.outputs(); ++j) {
                const auto& coeffs = model.a[i][j];
                for (int l = 1; l <= model.na(i, j); ++l) acc -= coeffs[l - 1] * Y(k - l, j);
            }
            for (Eigen::Index j = 0; j < model.inputs(); ++j) {
                const auto& coeffs = model.b[i][j];
                for (int l = 1; l <= model.nb(i, j); ++l) acc += coeffs[l - 1] * U(k - model.nk(i, j) - l + 1, j);
            }
            Y(k, i) = acc;
        }
        if (!Y.row(k).allFinite() || Y.row(k).cwiseAbs().maxCoeff() > 1e6) {
            throw DivergenceError("ARX simulation diverged at sample " + std::to_string(k));
        }
    }
    return Y;
}

}  // namespace tendonid
