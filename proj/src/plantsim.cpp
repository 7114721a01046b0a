#include "tendonid/plantsim.hpp"

#include <algorithm>
#include <cmath>

#include "tendonid/errors.hpp"
#include "tendonid/random.hpp"

namespace tendonid {

namespace {

double log_cosh(double x) {
    const double a = std::abs(x);
    return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

double sech2(double x) {
    const double a = std::abs(x);
    if (a > 350.0) return 0.0;
    const double c = std::cosh(a);
    return 1.0 / (c * c);
}

}  // namespace

Eigen::Matrix2d SnakePlantConfig::inertia() const {
    const double c = coupling_eps * std::sqrt(inertia_diag(0) * inertia_diag(1));
    Eigen::Matrix2d B;
    B << inertia_diag(0), c, c, inertia_diag(1);
    return B;
}

Eigen::Vector2d SnakePlantConfig::gravity_torque(const Eigen::Vector2d& q) const {
    if (linear_gravity) return gravity_gain.cwiseProduct(q);
    return gravity_gain.cwiseProduct(q.array().sin().matrix());
}

void SnakePlantConfig::validate() const {
    if ((inertia_diag.array() <= 0.0).any()) throw ConfigError("plant inertia_diag must be > 0");
    if ((gravity_gain.array() < 0.0).any()) throw ConfigError("plant gravity_gain must be >= 0");
    if ((viscous_coeff.array() < 0.0).any()) throw ConfigError("plant viscous_coeff must be >= 0");
    if ((coulomb_coeff.array() < 0.0).any()) throw ConfigError("plant coulomb_coeff must be >= 0");
    if (!(moment_arm_m > 0.0)) throw ConfigError("plant moment_arm_m must be > 0");
    if (!(coupling_eps >= 0.0 && coupling_eps < 0.5)) throw ConfigError("plant coupling_eps must lie in [0, 0.5)");
    if (!(force_bias_N >= 0.0)) throw ConfigError("plant force_bias_N must be >= 0");
    if (!(coulomb_eps > 0.0)) throw ConfigError("plant coulomb_eps must be > 0");
    if (!(max_substep_s > 0.0 && max_substep_s <= 0.05)) throw ConfigError("plant max_substep_s must lie in (0, 0.05]");
}

Eigen::Vector2d tendon_to_torque(const Eigen::Vector4d& forces, const SnakePlantConfig& cfg) {
    if ((forces.array() < 0.0).any()) throw DataError("tendon forces must be nonnegative");
    return cfg.moment_arm_m * Eigen::Vector2d(forces(0) - forces(2), forces(1) - forces(3));
}

PlantState plant_step(const PlantState& state, const Eigen::Vector4d& forces, double dt,
                      const SnakePlantConfig& cfg) {
    if (!(dt > 0.0 && dt <= 0.05)) throw DataError("plant step dt must lie in (0, 0.05] s");
    if (!state.q.allFinite() || !state.qdot.allFinite()) throw NumericError("plant state is not finite");
    const Eigen::Vector2d tau = tendon_to_torque(forces, cfg);
    const Eigen::Matrix2d B = cfg.inertia();
    const Eigen::Vector2d drive = tau - cfg.gravity_torque(state.q);
    const Eigen::Vector2d& v0 = state.qdot;
    const double eps = cfg.coulomb_eps;

    // New velocity minimizes the strictly convex
    //   phi(v) = 1/2 (v-v0)' B (v-v0) - dt drive'v + dt sum(cv v^2/2 + cc eps logcosh(v/eps)),
    // whose gradient is the implicit momentum balance.
    auto phi = [&](const Eigen::Vector2d& v) {
        double val = 0.5 * (v - v0).dot(B * (v - v0)) - dt * drive.dot(v);
        for (int i = 0; i < 2; ++i) {
            val += dt * (0.5 * cfg.viscous_coeff(i) * v(i) * v(i) + cfg.coulomb_coeff(i) * eps * log_cosh(v(i) / eps));
        }
        return val;
    };
    auto grad = [&](const Eigen::Vector2d& v) {
        Eigen::Vector2d g = B * (v - v0) - dt * drive;
        for (int i = 0; i < 2; ++i) {
            g(i) += dt * (cfg.viscous_coeff(i) * v(i) + cfg.coulomb_coeff(i) * std::tanh(v(i) / eps));
        }
        return g;
    };

    Eigen::Vector2d v = v0;
    Eigen::Vector2d g = grad(v);
    const double scale = std::max({1.0, (B * v0).norm(), dt * drive.norm()});
    for (int it = 0; it < 200 && g.norm() > 1e-14 * scale; ++it) {
        Eigen::Matrix2d H = B;
        for (int i = 0; i < 2; ++i) {
            H(i, i) += dt * (cfg.viscous_coeff(i) + cfg.coulomb_coeff(i) / eps * sech2(v(i) / eps));
        }
        const Eigen::Vector2d d = -H.llt().solve(g);
        double t = 1.0;
        const double f0 = phi(v);
        const double slope = g.dot(d);
        Eigen::Vector2d trial = v + d;
        while (phi(trial) > f0 + 1e-4 * t * slope && t > 1e-12) {
            t *= 0.5;
            trial = v + t * d;
        }
        if ((trial - v).norm() <= 1e-16 * std::max(1.0, v.norm())) {
            v = trial;
            break;
        }
        v = trial;
        g = grad(v);
    }

    PlantState next;
    next.qdot = v;
    next.q = state.q + dt * v;
    for (int i = 0; i < 2; ++i) {
        if (next.q(i) > kJointLimit) {
            next.q(i) = kJointLimit;
            next.qdot(i) = 0.0;
        } else if (next.q(i) < -kJointLimit) {
            next.q(i) = -kJointLimit;
            next.qdot(i) = 0.0;
        }
    }
    if (!next.q.allFinite() || !next.qdot.allFinite()) throw NumericError("plant state became non-finite");
    return next;
}

PlantState plant_advance(const PlantState& state, const Eigen::Vector4d& forces, double duration,
                         const SnakePlantConfig& cfg) {
    const int substeps = std::max(1, static_cast<int>(std::ceil(duration / cfg.max_substep_s - 1e-9)));
    const double h = duration / substeps;
    PlantState s = state;
    for (int i = 0; i < substeps; ++i) s = plant_step(s, forces, h, cfg);
    return s;
}

double plant_energy(const PlantState& state, const SnakePlantConfig& cfg) {
    const double kinetic = 0.5 * state.qdot.dot(cfg.inertia() * state.qdot);
    const double potential = cfg.linear_gravity
                                 ? 0.5 * cfg.gravity_gain.dot(state.q.cwiseProduct(state.q))
                                 : cfg.gravity_gain.dot((1.0 - state.q.array().cos()).matrix());
    return kinetic + potential;
}

Dataset simulate_plant(const SnakePlantConfig& cfg, const TimeSeries& U, const PlantState& initial) {
    cfg.validate();
    U.validate();
    if (U.channels() != 4) throw DataError("plant input must have 4 tendon-force channels");
    const Eigen::Index m = U.samples();
    Eigen::MatrixXd Y(m, 2);
    PlantState s = initial;
    for (Eigen::Index k = 0; k < m; ++k) {
        Y.row(k) = s.q.transpose();
        if (k + 1 < m) s = plant_advance(s, U.values.row(k).transpose(), U.sample_time_s, cfg);
    }
    return Dataset(U, TimeSeries(U.sample_time_s, std::move(Y), {"y1", "y2"}));
}

void ExcitationSpec::validate() const {
    if (!(duration_s > 0.0)) throw ConfigError("excitation duration_s must be > 0");
    if (!(amplitude_N >= 0.0)) throw ConfigError("excitation amplitude_N must be >= 0");
    if (!(bias_N >= 0.0)) throw ConfigError("excitation bias_N must be >= 0");
    if (amplitude_N > bias_N) throw ConfigError("excitation amplitude exceeds bias; forces would go negative");
    if (!(common_mode_N >= 0.0)) throw ConfigError("excitation common_mode_N must be >= 0");
    if (min_hold_samples < 1 || max_hold_samples < min_hold_samples) throw ConfigError("invalid prbs hold range");
    if (prbs_levels < 2) throw ConfigError("prbs_levels must be >= 2");
    if (circle_rings < 1 || !(circle_period_s > 0.0)) throw ConfigError("invalid circle sweep parameters");
    if (multisine_harmonics < 1 || !(multisine_max_fraction > 0.0 && multisine_max_fraction <= 1.0)) {
        throw ConfigError("invalid multisine parameters");
    }
}

std::string excitation_kind_name(ExcitationSpec::Kind kind) {
    switch (kind) {
        case ExcitationSpec::Kind::Multisine: return "multisine";
        case ExcitationSpec::Kind::Prbs: return "prbs";
        case ExcitationSpec::Kind::CircleSweep: return "circle_sweep";
    }
    return "unknown";
}

ExcitationSpec::Kind parse_excitation_kind(const std::string& name) {
    if (name == "multisine") return ExcitationSpec::Kind::Multisine;
    if (name == "prbs") return ExcitationSpec::Kind::Prbs;
    if (name == "circle_sweep") return ExcitationSpec::Kind::CircleSweep;
    throw ConfigError("unknown excitation kind '" + name + "'");
}

TimeSeries generate_excitation(const ExcitationSpec& spec, double sample_time_s) {
    spec.validate();
    if (!(sample_time_s > 0.0)) throw ConfigError("sample time must be > 0");
    const auto m = std::max<Eigen::Index>(2, std::llround(spec.duration_s / sample_time_s));
    Rng rng(spec.seed);

    // Common mode and differential share the amplitude budget: every force stays in [bias - A, bias + A].
    const double common = std::min(spec.common_mode_N, 0.5 * spec.amplitude_N);
    const double diff_amp = spec.amplitude_N - common;

    Eigen::MatrixXd diff = Eigen::MatrixXd::Zero(m, 2);
    switch (spec.kind) {
        case ExcitationSpec::Kind::Prbs: {
            for (int c = 0; c < 2; ++c) {
                Eigen::Index k = 0;
                while (k < m) {
                    const auto hold = rng.integer(spec.min_hold_samples, spec.max_hold_samples);
                    const auto level = rng.integer(0, spec.prbs_levels - 1);
                    const double value = diff_amp * (-1.0 + 2.0 * static_cast<double>(level) / (spec.prbs_levels - 1));
                    for (Eigen::Index j = 0; j < hold && k < m; ++j, ++k) diff(k, c) = value;
                }
            }
            break;
        }
        case ExcitationSpec::Kind::CircleSweep: {
            const double w = 2.0 * M_PI / spec.circle_period_s;
            for (Eigen::Index k = 0; k < m; ++k) {
                const auto ring = std::min<Eigen::Index>(spec.circle_rings - 1, k * spec.circle_rings / m);
                const double radius = diff_amp * static_cast<double>(ring + 1) / spec.circle_rings;
                const double t = static_cast<double>(k) * sample_time_s;
                diff(k, 0) = radius * std::cos(w * t);
                diff(k, 1) = radius * std::sin(w * t);
            }
            break;
        }
        case ExcitationSpec::Kind::Multisine: {
            const double f_max = spec.multisine_max_fraction / (2.0 * sample_time_s);
            for (int c = 0; c < 2; ++c) {
                std::vector<double> phase(static_cast<std::size_t>(spec.multisine_harmonics));
                for (auto& ph : phase) ph = rng.uniform(0.0, 2.0 * M_PI);
                for (Eigen::Index k = 0; k < m; ++k) {
                    const double t = static_cast<double>(k) * sample_time_s;
                    double acc = 0.0;
                    for (int h = 0; h < spec.multisine_harmonics; ++h) {
                        const double f = f_max * (h + 1) / spec.multisine_harmonics;
                        acc += std::cos(2.0 * M_PI * f * t + phase[static_cast<std::size_t>(h)]);
                    }
                    diff(k, c) = acc;
                }
                const double peak = diff.col(c).cwiseAbs().maxCoeff();
                if (peak > 0.0) diff.col(c) *= diff_amp / peak;
            }
            break;
        }
    }

    // Slow pretension drift: linear interpolation between random knots every 1.5 s.
    Eigen::MatrixXd cm = Eigen::MatrixXd::Zero(m, 2);
    if (common > 0.0) {
        const auto knot_every = std::max<Eigen::Index>(2, std::llround(1.5 / sample_time_s));
        for (int c = 0; c < 2; ++c) {
            double left = rng.uniform(-common, common);
            for (Eigen::Index k0 = 0; k0 < m; k0 += knot_every) {
                const double right = rng.uniform(-common, common);
                for (Eigen::Index j = 0; j < knot_every && k0 + j < m; ++j) {
                    const double s = static_cast<double>(j) / static_cast<double>(knot_every);
                    cm(k0 + j, c) = (1.0 - s) * left + s * right;
                }
                left = right;
            }
        }
    }

    Eigen::MatrixXd F(m, 4);
    for (Eigen::Index k = 0; k < m; ++k) {
        F(k, 0) = spec.bias_N + cm(k, 0) + diff(k, 0);
        F(k, 2) = spec.bias_N + cm(k, 0) - diff(k, 0);
        F(k, 1) = spec.bias_N + cm(k, 1) + diff(k, 1);
        F(k, 3) = spec.bias_N + cm(k, 1) - diff(k, 1);
    }
    return TimeSeries(sample_time_s, std::move(F), {"u1", "u2", "u3", "u4"});
}

StateSpaceModel make_random_lti(std::uint64_t seed, Eigen::Index n, Eigen::Index p, Eigen::Index q,
                                double sample_time_s) {
    if (n < 1 || p < 1 || q < 1) throw ConfigError("random LTI dimensions must be >= 1");
    Rng rng(seed);
    auto randn = [&](Eigen::Index r, Eigen::Index c) {
        Eigen::MatrixXd M(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) M(i, j) = rng.normal();
        return M;
    };
    for (int attempt = 0; attempt < 100; ++attempt) {
        StateSpaceModel m;
        m.A = randn(n, n);
        const double rho = spectral_radius(m.A);
        if (!(rho > 0.0)) continue;
        m.A *= rng.uniform(0.5, 0.95) / rho;
        m.B = randn(n, p);
        m.C = randn(q, n);
        m.D = randn(q, p);
        m.sample_time_s = sample_time_s;
        if (spectral_radius(m.A) > 0.95) continue;
        Eigen::JacobiSVD<Eigen::MatrixXd> sc(controllability_matrix(m, n));
        Eigen::JacobiSVD<Eigen::MatrixXd> so(observability_matrix(m, n));
        const auto& svc = sc.singularValues();
        const auto& svo = so.singularValues();
        if (svc(n - 1) < 1e-3 * svc(0) || svo(n - 1) < 1e-3 * svo(0)) continue;
        return m;
    }
    throw NumericError("make_random_lti: no controllable/observable sample in 100 attempts");
}

ArxModel make_random_arx(std::uint64_t seed, Eigen::Index q, Eigen::Index p, int max_order,
                         double sample_time_s) {
    if (q < 1 || p < 1 || max_order < 1) throw ConfigError("random ARX dimensions must be >= 1");
    Rng rng(seed);
    ArxModel m;
    m.na.resize(q, q);
    m.nb.resize(q, p);
    m.nk = Eigen::MatrixXi::Ones(q, p);
    for (Eigen::Index i = 0; i < q; ++i) {
        for (Eigen::Index j = 0; j < q; ++j) m.na(i, j) = static_cast<int>(rng.integer(1, max_order));
        for (Eigen::Index j = 0; j < p; ++j) m.nb(i, j) = static_cast<int>(rng.integer(1, max_order));
    }
    m.a.assign(q, std::vector<std::vector<double>>(q));
    m.b.assign(q, std::vector<std::vector<double>>(p));
    for (Eigen::Index i = 0; i < q; ++i) {
        for (Eigen::Index j = 0; j < q; ++j) {
            m.a[i][j].resize(m.na(i, j));
            for (auto& v : m.a[i][j]) v = 0.3 * rng.normal();
        }
        for (Eigen::Index j = 0; j < p; ++j) {
            m.b[i][j].resize(m.nb(i, j));
            for (auto& v : m.b[i][j]) v = rng.normal();
        }
    }
    // Companion matrix of y_k = -sum_l A_l y_{k-l}; scaling A_l by s^l scales every root by s.
    const int La = m.na.maxCoeff();
    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(q * La, q * La);
    for (int l = 1; l <= La; ++l) {
        for (Eigen::Index i = 0; i < q; ++i)
            for (Eigen::Index j = 0; j < q; ++j)
                if (l <= m.na(i, j)) comp(i, (l - 1) * q + j) = -m.a[i][j][l - 1];
    }
    if (La > 1) comp.bottomLeftCorner(q * (La - 1), q * (La - 1)).setIdentity();
    const double rho = spectral_radius(comp);
    const double target = rng.uniform(0.5, 0.9);
    if (rho > target) {
        const double s = target / rho;
        for (Eigen::Index i = 0; i < q; ++i)
            for (Eigen::Index j = 0; j < q; ++j)
                for (int l = 1; l <= m.na(i, j); ++l) m.a[i][j][l - 1] *= std::pow(s, l);
    }
    m.sample_time_s = sample_time_s;
    return m;
}

LibrarySpec sparse_truth_library() {
    LibrarySpec spec;
    spec.include_constant = false;
    spec.poly_degree_state = 2;
    spec.include_state_input_products = true;
    spec.poly_degree_input = 1;
    spec.include_trig = true;
    return spec;
}

Eigen::MatrixXd random_binary_signal(std::uint64_t seed, Eigen::Index samples, Eigen::Index channels,
                                     double amplitude, int min_hold, int max_hold) {
    Rng rng(seed);
    Eigen::MatrixXd S(samples, channels);
    for (Eigen::Index c = 0; c < channels; ++c) {
        Eigen::Index k = 0;
        while (k < samples) {
            const auto hold = rng.integer(min_hold, max_hold);
            const double v = amplitude * rng.sign();
            for (Eigen::Index j = 0; j < hold && k < samples; ++j, ++k) S(k, c) = v;
        }
    }
    return S;
}

SindyModel make_sparse_nonlinear_truth(std::uint64_t seed) {
    constexpr Eigen::Index q = 2, p = 2;
    const LibrarySpec spec = sparse_truth_library();
    const auto terms = library_terms(spec, q, p);
    const auto T = static_cast<Eigen::Index>(terms.size());

    std::vector<Eigen::Index> input_terms, candidate_terms;
    for (Eigen::Index t = 0; t < T; ++t) {
        const auto& term = terms[static_cast<std::size_t>(t)];
        if (term.kind == LibraryTerm::Kind::Cos) continue;
        const bool pure_input = term.kind == LibraryTerm::Kind::Monomial &&
                                std::all_of(term.state_powers.begin(), term.state_powers.end(),
                                            [](int e) { return e == 0; });
        if (pure_input) input_terms.push_back(t);
        candidate_terms.push_back(t);
    }

    Rng rng(seed);
    for (int attempt = 0; attempt < 100; ++attempt) {
        SindyModel m;
        m.library = spec;
        m.terms = terms;
        m.num_states = q;
        m.num_inputs = p;
        m.xi = Eigen::MatrixXd::Zero(T, q);
        m.column_scale = Eigen::VectorXd::Ones(T);
        m.lambda = 0.0;
        m.sample_time_s = 1.0;
        auto coefficient = [&]() { return rng.sign() * rng.uniform(0.2, 0.5); };
        // Every state is driven by at least one pure input term.
        for (Eigen::Index s = 0; s < q; ++s) {
            const auto t = input_terms[static_cast<std::size_t>(rng.integer(0, input_terms.size() - 1))];
            m.xi(t, s) = coefficient();
        }
        const auto extra = rng.integer(1, 4);
        for (std::int64_t e = 0; e < extra; ++e) {
            const auto t = candidate_terms[static_cast<std::size_t>(rng.integer(0, candidate_terms.size() - 1))];
            const auto s = rng.integer(0, q - 1);
            if (m.xi(t, s) == 0.0) m.xi(t, s) = coefficient();
        }

        Eigen::MatrixXd A0, B0;
        m.jacobians(Eigen::VectorXd::Zero(q), Eigen::VectorXd::Zero(p), A0, B0);
        if (Eigen::JacobiSVD<Eigen::MatrixXd>(A0).singularValues()(0) >= 1.0) continue;

        // Bounded, excited response to a unit random binary probe.
        const Eigen::MatrixXd probe = random_binary_signal(seed ^ 0x9e3779b97f4a7c15ULL, 400, p, 1.0, 1, 5);
        Eigen::MatrixXd X;
        try {
            X = simulate_sindy(m, probe, Eigen::VectorXd::Zero(q));
        } catch (const DivergenceError&) {
            continue;
        }
        if (X.cwiseAbs().maxCoeff() > 5.0) continue;
        // Library must have full column rank along the probe trajectory.
        const Library lib = build_library(X.topRows(X.rows() - 1), probe.topRows(X.rows() - 1), spec);
        if (numerical_rank(lib.theta, 1e-8) < T) continue;
        return m;
    }
    throw NumericError("make_sparse_nonlinear_truth: no admissible sample in 100 attempts");
}

}  // namespace tendonid
