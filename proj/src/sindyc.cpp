#include "tendonid/sindyc.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "tendonid/errors.hpp"

namespace tendonid {

namespace {

/// Exponent vectors of total degree `degree` over `vars` variables, graded-lex
/// (x1^2, x1*x2, x2^2 for two variables).
std::vector<std::vector<int>> monomials_of_degree(Eigen::Index vars, int degree) {
    std::vector<std::vector<int>> out;
    std::vector<int> powers(static_cast<std::size_t>(vars), 0);
    std::function<void(Eigen::Index, int)> rec = [&](Eigen::Index var, int remaining) {
        if (var == vars - 1) {
            powers[var] = remaining;
            out.push_back(powers);
            return;
        }
        for (int e = remaining; e >= 0; --e) {
            powers[var] = e;
            rec(var + 1, remaining - e);
        }
        powers[var] = 0;
    };
    if (vars > 0) rec(0, degree);
    return out;
}

LibraryTerm monomial(std::vector<int> xp, std::vector<int> up) {
    LibraryTerm t;
    t.kind = LibraryTerm::Kind::Monomial;
    t.state_powers = std::move(xp);
    t.input_powers = std::move(up);
    return t;
}

double ipow(double v, int e) {
    double r = 1.0;
    for (int i = 0; i < e; ++i) r *= v;
    return r;
}

}  // namespace

void LibrarySpec::validate() const {
    if (poly_degree_state < 0 || poly_degree_input < 0) throw ConfigError("library degrees must be >= 0");
    if (!include_constant && poly_degree_state == 0 && poly_degree_input == 0 && !include_state_input_products &&
        !include_trig) {
        throw ConfigError("library spec enables no term class");
    }
}

std::string LibraryTerm::name() const {
    switch (kind) {
        case Kind::Sin: return "sin(x" + std::to_string(state_index + 1) + ")";
        case Kind::Cos: return "cos(x" + std::to_string(state_index + 1) + ")";
        case Kind::Monomial: break;
    }
    std::ostringstream os;
    bool first = true;
    auto emit = [&](char sym, const std::vector<int>& powers) {
        for (std::size_t i = 0; i < powers.size(); ++i) {
            if (powers[i] == 0) continue;
            if (!first) os << '*';
            first = false;
            os << sym << (i + 1);
            if (powers[i] > 1) os << '^' << powers[i];
        }
    };
    emit('x', state_powers);
    emit('u', input_powers);
    if (first) return "1";
    return os.str();
}

double LibraryTerm::evaluate(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    switch (kind) {
        case Kind::Sin: return std::sin(x(state_index));
        case Kind::Cos: return std::cos(x(state_index));
        case Kind::Monomial: break;
    }
    double v = 1.0;
    for (std::size_t i = 0; i < state_powers.size(); ++i) v *= ipow(x(static_cast<Eigen::Index>(i)), state_powers[i]);
    for (std::size_t j = 0; j < input_powers.size(); ++j) v *= ipow(u(static_cast<Eigen::Index>(j)), input_powers[j]);
    return v;
}

std::vector<LibraryTerm> library_terms(const LibrarySpec& spec, Eigen::Index q, Eigen::Index p) {
    spec.validate();
    const std::vector<int> zx(static_cast<std::size_t>(q), 0);
    const std::vector<int> zu(static_cast<std::size_t>(p), 0);
    std::vector<LibraryTerm> terms;
    if (spec.include_constant) terms.push_back(monomial(zx, zu));
    if (spec.poly_degree_state >= 1) {
        for (Eigen::Index i = 0; i < q; ++i) {
            auto xp = zx;
            xp[i] = 1;
            terms.push_back(monomial(xp, zu));
        }
    }
    if (spec.poly_degree_input >= 1) {
        for (Eigen::Index j = 0; j < p; ++j) {
            auto up = zu;
            up[j] = 1;
            terms.push_back(monomial(zx, up));
        }
    }
    for (int d = 2; d <= spec.poly_degree_state; ++d) {
        for (auto& xp : monomials_of_degree(q, d)) terms.push_back(monomial(xp, zu));
    }
    for (int d = 2; d <= spec.poly_degree_input; ++d) {
        for (auto& up : monomials_of_degree(p, d)) terms.push_back(monomial(zx, up));
    }
    if (spec.include_state_input_products) {
        for (Eigen::Index i = 0; i < q; ++i) {
            for (Eigen::Index j = 0; j < p; ++j) {
                auto xp = zx;
                auto up = zu;
                xp[i] = 1;
                up[j] = 1;
                terms.push_back(monomial(xp, up));
            }
        }
    }
    if (spec.include_trig) {
        for (Eigen::Index i = 0; i < q; ++i) {
            LibraryTerm t;
            t.kind = LibraryTerm::Kind::Sin;
            t.state_index = static_cast<int>(i);
            terms.push_back(t);
        }
        for (Eigen::Index i = 0; i < q; ++i) {
            LibraryTerm t;
            t.kind = LibraryTerm::Kind::Cos;
            t.state_index = static_cast<int>(i);
            terms.push_back(t);
        }
    }
    return terms;
}

LibraryTerm parse_library_term(const std::string& name, Eigen::Index q, Eigen::Index p) {
    auto bad = [&]() { return DataError("unrecognized library term '" + name + "'"); };
    auto parse_index = [&](const std::string& s, Eigen::Index limit) {
        if (s.empty() || !std::all_of(s.begin(), s.end(), ::isdigit)) throw bad();
        const int idx = std::stoi(s) - 1;
        if (idx < 0 || idx >= limit) throw bad();
        return idx;
    };
    for (const auto& [prefix, kind] : {std::pair{"sin(x", LibraryTerm::Kind::Sin},
                                       std::pair{"cos(x", LibraryTerm::Kind::Cos}}) {
        const std::string pre = prefix;
        if (name.rfind(pre, 0) == 0) {
            if (name.back() != ')') throw bad();
            LibraryTerm t;
            t.kind = kind;
            t.state_index = parse_index(name.substr(pre.size(), name.size() - pre.size() - 1), q);
            return t;
        }
    }
    std::vector<int> xp(static_cast<std::size_t>(q), 0), up(static_cast<std::size_t>(p), 0);
    if (name == "1") return monomial(xp, up);
    std::istringstream in(name);
    std::string factor;
    while (std::getline(in, factor, '*')) {
        if (factor.size() < 2 || (factor[0] != 'x' && factor[0] != 'u')) throw bad();
        int power = 1;
        std::string idx = factor.substr(1);
        if (const auto caret = idx.find('^'); caret != std::string::npos) {
            const std::string ps = idx.substr(caret + 1);
            if (ps.empty() || !std::all_of(ps.begin(), ps.end(), ::isdigit)) throw bad();
            power = std::stoi(ps);
            idx = idx.substr(0, caret);
        }
        if (factor[0] == 'x') xp[parse_index(idx, q)] += power;
        else up[parse_index(idx, p)] += power;
    }
    return monomial(xp, up);
}

Eigen::RowVectorXd evaluate_terms(const std::vector<LibraryTerm>& terms, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& u) {
    Eigen::RowVectorXd row(static_cast<Eigen::Index>(terms.size()));
    for (std::size_t t = 0; t < terms.size(); ++t) row(static_cast<Eigen::Index>(t)) = terms[t].evaluate(x, u);
    return row;
}

void term_jacobians(const std::vector<LibraryTerm>& terms, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                    Eigen::MatrixXd& dx, Eigen::MatrixXd& du) {
    const auto T = static_cast<Eigen::Index>(terms.size());
    dx.setZero(T, x.size());
    du.setZero(T, u.size());
    for (Eigen::Index t = 0; t < T; ++t) {
        const auto& term = terms[static_cast<std::size_t>(t)];
        if (term.kind == LibraryTerm::Kind::Sin) {
            dx(t, term.state_index) = std::cos(x(term.state_index));
            continue;
        }
        if (term.kind == LibraryTerm::Kind::Cos) {
            dx(t, term.state_index) = -std::sin(x(term.state_index));
            continue;
        }
        // Product rule over the monomial factors.
        auto partial = [&](bool wrt_state, Eigen::Index var) {
            double v = 1.0;
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                const int e = term.state_powers[static_cast<std::size_t>(i)];
                if (wrt_state && i == var) {
                    if (e == 0) return 0.0;
                    v *= e * ipow(x(i), e - 1);
                } else {
                    v *= ipow(x(i), e);
                }
            }
            for (Eigen::Index j = 0; j < u.size(); ++j) {
                const int e = term.input_powers[static_cast<std::size_t>(j)];
                if (!wrt_state && j == var) {
                    if (e == 0) return 0.0;
                    v *= e * ipow(u(j), e - 1);
                } else {
                    v *= ipow(u(j), e);
                }
            }
            return v;
        };
        for (Eigen::Index i = 0; i < x.size(); ++i) dx(t, i) = partial(true, i);
        for (Eigen::Index j = 0; j < u.size(); ++j) du(t, j) = partial(false, j);
    }
}

Library build_library(const Eigen::MatrixXd& X, const Eigen::MatrixXd& U, const LibrarySpec& spec) {
    if (X.rows() != U.rows()) throw DataError("library inputs X and U must have the same row count");
    Library lib;
    lib.terms = library_terms(spec, X.cols(), U.cols());
    const auto m = X.rows();
    const auto T = static_cast<Eigen::Index>(lib.terms.size());
    if (T >= m) {
        throw DataError("library has " + std::to_string(T) + " terms but only " + std::to_string(m) +
                        " samples (underdetermined)");
    }
    lib.theta.resize(m, T);
    for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::VectorXd x = X.row(k).transpose();
        const Eigen::VectorXd u = U.row(k).transpose();
        lib.theta.row(k) = evaluate_terms(lib.terms, x, u);
    }
    return lib;
}

namespace {

/// Least squares on the listed columns. Columns found linearly dependent are
/// removed from `cols` and appended to `dropped`.
Eigen::VectorXd solve_active(const Eigen::MatrixXd& theta, const Eigen::VectorXd& target, std::vector<int>& cols,
                             std::vector<int>& dropped, double rank_tol) {
    if (cols.empty()) return Eigen::VectorXd();
    Eigen::MatrixXd sub(theta.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = theta.col(cols[c]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
    qr.setThreshold(rank_tol);
    const auto rank = qr.rank();
    if (rank < sub.cols()) {
        // Keep the first `rank` pivots; the rest are dependent on them.
        std::vector<int> keep;
        const auto& perm = qr.colsPermutation().indices();
        std::vector<bool> kept(cols.size(), false);
        for (Eigen::Index r = 0; r < rank; ++r) kept[static_cast<std::size_t>(perm(r))] = true;
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (kept[c]) keep.push_back(cols[c]);
            else dropped.push_back(cols[c]);
        }
        cols = std::move(keep);
        return solve_active(theta, target, cols, dropped, rank_tol);
    }
    return qr.solve(target);
}

}  // namespace

StlsResult stls(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& xprime, double lambda,
                const StlsOptions& options) {
    const auto m = theta.rows();
    const auto T = theta.cols();
    if (xprime.rows() != m) throw DataError("Theta and X' must have the same row count");
    if (m <= T) throw DataError("STLS needs more samples than library terms");
    if (!(lambda >= 0.0)) throw DataError("STLS threshold must be >= 0");

    StlsResult res;
    res.column_scale = Eigen::VectorXd::Ones(T);
    if (options.normalize) {
        for (Eigen::Index j = 0; j < T; ++j) {
            const double rms = theta.col(j).norm() / std::sqrt(static_cast<double>(m));
            if (rms > 0.0) res.column_scale(j) = rms;
        }
    }
    const Eigen::MatrixXd scaled = theta * res.column_scale.cwiseInverse().asDiagonal();
    res.xi = Eigen::MatrixXd::Zero(T, xprime.cols());

    std::vector<bool> ever_dropped(static_cast<std::size_t>(T), false);
    for (Eigen::Index c = 0; c < xprime.cols(); ++c) {
        const Eigen::VectorXd target = xprime.col(c);
        std::vector<int> active;
        for (Eigen::Index j = 0; j < T; ++j) {
            if (theta.col(j).squaredNorm() > 0.0) active.push_back(static_cast<int>(j));
            else ever_dropped[static_cast<std::size_t>(j)] = true;
        }
        std::vector<int> dropped;
        Eigen::VectorXd coef;
        int it = 0;
        bool fixed_point = false;
        auto threshold = [&](const std::vector<int>& cols, const Eigen::VectorXd& v) {
            std::vector<int> keep;
            for (std::size_t k = 0; k < cols.size(); ++k) {
                if (std::abs(v(static_cast<Eigen::Index>(k))) >= lambda) keep.push_back(cols[k]);
            }
            return keep;
        };
        while (it < options.max_iterations) {
            ++it;
            coef = solve_active(scaled, target, active, dropped, options.rank_tolerance);
            auto next = threshold(active, coef);
            if (next == active) {
                fixed_point = true;
                break;
            }
            active = std::move(next);
        }
        if (!fixed_point) {
            res.converged = false;
            // Iteration cap: refit and re-threshold until every survivor clears lambda.
            for (;;) {
                coef = solve_active(scaled, target, active, dropped, options.rank_tolerance);
                auto next = threshold(active, coef);
                if (next == active) break;
                active = std::move(next);
            }
        }
        res.iterations = std::max(res.iterations, it);
        for (int d : dropped) ever_dropped[static_cast<std::size_t>(d)] = true;
        for (std::size_t k = 0; k < active.size(); ++k) {
            res.xi(active[k], c) = coef(static_cast<Eigen::Index>(k)) / res.column_scale(active[k]);
        }
        if (active.empty()) {
            res.empty_outputs.push_back(static_cast<int>(c));
            res.warnings.push_back("output " + std::to_string(c + 1) + " has an empty active set");
        }
    }
    for (Eigen::Index j = 0; j < T; ++j) {
        if (ever_dropped[static_cast<std::size_t>(j)]) {
            res.rank_dropped.push_back(static_cast<int>(j));
            res.warnings.push_back("library column " + std::to_string(j) + " dropped as linearly dependent");
        }
    }
    return res;
}

Eigen::Index SindyModel::active_terms() const { return (xi.array() != 0.0).count(); }

Eigen::VectorXd SindyModel::step(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    return (evaluate_terms(terms, x, u) * xi).transpose();
}

void SindyModel::jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::MatrixXd& A,
                           Eigen::MatrixXd& B) const {
    Eigen::MatrixXd dx, du;
    term_jacobians(terms, x, u, dx, du);
    A = xi.transpose() * dx;
    B = xi.transpose() * du;
}

void SindyModel::validate() const {
    const auto T = static_cast<Eigen::Index>(terms.size());
    if (num_states < 1 || num_inputs < 0) throw DataError("SINDy model needs >= 1 state");
    if (xi.rows() != T || xi.cols() != num_states) throw DataError("SINDy coefficient matrix must be T x q");
    if (column_scale.size() != T) throw DataError("SINDy column scale must have one entry per term");
    if (!xi.allFinite() || !column_scale.allFinite()) throw DataError("SINDy coefficients are not finite");
    for (const auto& t : terms) {
        if (t.kind == LibraryTerm::Kind::Monomial) {
            if (static_cast<Eigen::Index>(t.state_powers.size()) != num_states ||
                static_cast<Eigen::Index>(t.input_powers.size()) != num_inputs) {
                throw DataError("SINDy term dimension mismatch");
            }
        } else if (t.state_index < 0 || t.state_index >= num_states) {
            throw DataError("SINDy trig term references a missing state");
        }
    }
    if (!(sample_time_s > 0.0)) throw DataError("sample time must be positive");
}

Eigen::MatrixXd simulate_sindy(const SindyModel& model, const Eigen::MatrixXd& U, const Eigen::VectorXd& x0) {
    if (U.cols() != model.num_inputs) throw DataError("input channel count does not match model");
    if (x0.size() != model.num_states) throw DataError("initial state dimension does not match model");
    const Eigen::Index m = U.rows();
    Eigen::MatrixXd X(m, model.num_states);
    Eigen::VectorXd x = x0;
    for (Eigen::Index k = 0; k < m; ++k) {
        X.row(k) = x.transpose();
        if (k + 1 < m) {
            x = model.step(x, U.row(k).transpose());
            if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e6) {
                throw DivergenceError("SINDy simulation diverged at sample " + std::to_string(k + 1));
            }
        }
    }
    return X;
}

SindyModel identify_sindyc(const Dataset& ds, const LibrarySpec& spec, double lambda, StlsResult* diagnostics) {
    ds.validate();
    const auto m = ds.samples();
    const Eigen::MatrixXd X = ds.outputs.values.topRows(m - 1);
    const Eigen::MatrixXd Xp = ds.outputs.values.bottomRows(m - 1);
    const Eigen::MatrixXd U = ds.inputs.values.topRows(m - 1);
    const Library lib = build_library(X, U, spec);
    StlsResult res = stls(lib.theta, Xp, lambda);

    SindyModel model;
    model.library = spec;
    model.terms = lib.terms;
    model.xi = res.xi;
    model.column_scale = res.column_scale;
    model.lambda = lambda;
    model.sample_time_s = ds.sample_time_s();
    model.num_states = ds.num_outputs();
    model.num_inputs = ds.num_inputs();
    if (diagnostics) *diagnostics = std::move(res);
    return model;
}

}  // namespace tendonid
