#include "tendonid/model.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "tendonid/errors.hpp"

namespace tendonid {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

json matrix_to_json(const Eigen::MatrixXd& M) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

json int_matrix_to_json(const Eigen::MatrixXi& M) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> json_to_matrix(const json& j, Eigen::Index rows,
                                                                      Eigen::Index cols, const char* what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
        throw DataError(std::string("dimension mismatch in '") + what + "': expected " + std::to_string(rows) +
                        " rows");
    }
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> M(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw DataError(std::string("dimension mismatch in '") + what + "': expected " + std::to_string(cols) +
                            " columns");
        }
        for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = row[static_cast<std::size_t>(c)].get<Scalar>();
    }
    return M;
}

Eigen::Index rows_of(const json& j, const char* what) {
    if (!j.is_array()) throw DataError(std::string("field '") + what + "' must be a matrix");
    return static_cast<Eigen::Index>(j.size());
}

json library_to_json(const LibrarySpec& s) {
    return {{"include_constant", s.include_constant},
            {"poly_degree_state", s.poly_degree_state},
            {"include_state_input_products", s.include_state_input_products},
            {"poly_degree_input", s.poly_degree_input},
            {"include_trig", s.include_trig}};
}

LibrarySpec library_from_json(const json& j) {
    LibrarySpec s;
    s.include_constant = j.at("include_constant").get<bool>();
    s.poly_degree_state = j.at("poly_degree_state").get<int>();
    s.include_state_input_products = j.at("include_state_input_products").get<bool>();
    s.poly_degree_input = j.at("poly_degree_input").get<int>();
    s.include_trig = j.at("include_trig").get<bool>();
    return s;
}

json payload_of(const StateSpaceModel& m) {
    const Eigen::VectorXd u0 = m.input_offset(), y0 = m.output_offset();
    return {{"n", m.states()},
            {"A", matrix_to_json(m.A)},
            {"B", matrix_to_json(m.B)},
            {"C", matrix_to_json(m.C)},
            {"D", matrix_to_json(m.D)},
            {"u_offset", std::vector<double>(u0.data(), u0.data() + u0.size())},
            {"y_offset", std::vector<double>(y0.data(), y0.data() + y0.size())}};
}

json payload_of(const ArxModel& m) {
    json a = json::array(), b = json::array();
    for (const auto& row : m.a) a.push_back(row);
    for (const auto& row : m.b) b.push_back(row);
    return {{"na", int_matrix_to_json(m.na)},
            {"nb", int_matrix_to_json(m.nb)},
            {"nk", int_matrix_to_json(m.nk)},
            {"a", a},
            {"b", b}};
}

json payload_of(const SindyModel& m) {
    json names = json::array();
    for (const auto& t : m.terms) names.push_back(t.name());
    std::vector<double> scale(m.column_scale.data(), m.column_scale.data() + m.column_scale.size());
    return {{"library", library_to_json(m.library)},
            {"lambda", m.lambda},
            {"threshold_units", "coefficient * column_rms"},
            {"terms", names},
            {"column_scale", scale},
            {"xi", matrix_to_json(m.xi)}};
}

StateSpaceModel state_space_from(const json& pl, Eigen::Index p, Eigen::Index q, double dt) {
    StateSpaceModel m;
    const Eigen::Index n = pl.at("n").get<Eigen::Index>();
    if (n < 0) throw DataError("state dimension must be >= 0");
    // Declared shapes are checked against every matrix.
    m.A = json_to_matrix<double>(pl.at("A"), n, n, "A");
    m.B = json_to_matrix<double>(pl.at("B"), n, p, "B");
    m.C = json_to_matrix<double>(pl.at("C"), q, n, "C");
    m.D = json_to_matrix<double>(pl.at("D"), q, p, "D");
    auto offset = [&](const char* key, Eigen::Index size) -> Eigen::VectorXd {
        if (!pl.contains(key)) return Eigen::VectorXd::Zero(size);
        const auto v = pl.at(key).get<std::vector<double>>();
        if (static_cast<Eigen::Index>(v.size()) != size) throw DataError(std::string(key) + " has the wrong length");
        return Eigen::Map<const Eigen::VectorXd>(v.data(), size);
    };
    m.u_offset = offset("u_offset", p);
    m.y_offset = offset("y_offset", q);
    m.sample_time_s = dt;
    return m;
}

ArxModel arx_from(const json& pl, Eigen::Index p, Eigen::Index q, double dt) {
    ArxModel m;
    m.na = json_to_matrix<int>(pl.at("na"), q, q, "na");
    m.nb = json_to_matrix<int>(pl.at("nb"), q, p, "nb");
    m.nk = json_to_matrix<int>(pl.at("nk"), q, p, "nk");
    const auto& a = pl.at("a");
    const auto& b = pl.at("b");
    if (rows_of(a, "a") != q || rows_of(b, "b") != q) throw DataError("dimension mismatch in ARX coefficients");
    m.a.resize(static_cast<std::size_t>(q));
    m.b.resize(static_cast<std::size_t>(q));
    for (Eigen::Index i = 0; i < q; ++i) {
        m.a[i] = a[static_cast<std::size_t>(i)].get<std::vector<std::vector<double>>>();
        m.b[i] = b[static_cast<std::size_t>(i)].get<std::vector<std::vector<double>>>();
    }
    m.sample_time_s = dt;
    return m;
}

SindyModel sindy_from(const json& pl, Eigen::Index p, Eigen::Index q, double dt) {
    SindyModel m;
    m.library = library_from_json(pl.at("library"));
    m.lambda = pl.at("lambda").get<double>();
    m.num_states = q;
    m.num_inputs = p;
    m.sample_time_s = dt;
    for (const auto& name : pl.at("terms")) m.terms.push_back(parse_library_term(name.get<std::string>(), q, p));
    const auto T = static_cast<Eigen::Index>(m.terms.size());
    const auto scale = pl.at("column_scale").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(scale.size()) != T) throw DataError("dimension mismatch in 'column_scale'");
    m.column_scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), T);
    m.xi = json_to_matrix<double>(pl.at("xi"), T, q, "xi");
    return m;
}

}  // namespace

std::string model_kind_name(const ModelKind& model) {
    return std::visit(overloaded{[](const StateSpaceModel&) { return std::string("state_space"); },
                                 [](const ArxModel&) { return std::string("arx"); },
                                 [](const SindyModel&) { return std::string("sindy"); }},
                      model);
}

Eigen::Index model_inputs(const ModelKind& model) {
    return std::visit([](const auto& m) { return m.inputs(); }, model);
}

Eigen::Index model_outputs(const ModelKind& model) {
    return std::visit([](const auto& m) { return m.outputs(); }, model);
}

double model_sample_time(const ModelKind& model) {
    return std::visit([](const auto& m) { return m.sample_time_s; }, model);
}

TimeSeries simulate(const ModelKind& model, const TimeSeries& U, const Eigen::MatrixXd& init) {
    if (U.channels() != model_inputs(model)) {
        throw DataError("input has " + std::to_string(U.channels()) + " channels, model expects " +
                        std::to_string(model_inputs(model)));
    }
    Eigen::MatrixXd Y = std::visit(
        overloaded{[&](const StateSpaceModel& m) {
                       if (init.cols() != 1 || init.rows() != m.states())
                           throw DataError("state-space init must be an n x 1 state");
                       return simulate_state_space(m, U.values, init.col(0));
                   },
                   [&](const ArxModel& m) { return simulate_arx(m, U.values, init); },
                   [&](const SindyModel& m) {
                       if (init.cols() != 1 || init.rows() != m.num_states)
                           throw DataError("SINDy init must be a q x 1 state");
                       return simulate_sindy(m, U.values, init.col(0));
                   }},
        model);
    return TimeSeries(U.sample_time_s, std::move(Y), default_channel_names("y", model_outputs(model)));
}

Eigen::MatrixXd initial_condition_from_data(const ModelKind& model, const Dataset& ds) {
    return std::visit(overloaded{[&](const StateSpaceModel& m) -> Eigen::MatrixXd {
                                     return estimate_initial_state(m, ds.inputs.values, ds.outputs.values, 20);
                                 },
                                 [&](const ArxModel& m) -> Eigen::MatrixXd {
                                     const int L = m.max_lag();
                                     if (ds.samples() < L) throw DataError("dataset shorter than ARX lag window");
                                     return ds.outputs.values.topRows(L);
                                 },
                                 [&](const SindyModel&) -> Eigen::MatrixXd {
                                     return ds.outputs.values.row(0).transpose();
                                 }},
                      model);
}

FitReport fit_percent(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Yhat) {
    if (Y.rows() != Yhat.rows() || Y.cols() != Yhat.cols()) throw DataError("fit: shape mismatch");
    if (Y.rows() < 1 || Y.cols() < 1) throw DataError("fit: empty data");
    FitReport r;
    r.per_channel_fit.resize(Y.cols());
    for (Eigen::Index c = 0; c < Y.cols(); ++c) {
        const double mean = Y.col(c).mean();
        const double spread = (Y.col(c).array() - mean).matrix().norm();
        if (!(spread > 0.0)) {
            throw NumericError("fit undefined: measured channel " + std::to_string(c + 1) + " is constant");
        }
        r.per_channel_fit(c) = 100.0 * (1.0 - (Y.col(c) - Yhat.col(c)).norm() / spread);
    }
    r.mean_fit = r.per_channel_fit.mean();
    return r;
}

std::string model_to_json_string(const ModelKind& model) {
    std::visit([](const auto& m) { m.validate(); }, model);
    json j;
    j["version"] = kModelSchemaVersion;
    j["kind"] = model_kind_name(model);
    j["p"] = model_inputs(model);
    j["q"] = model_outputs(model);
    j["sample_time_s"] = model_sample_time(model);
    j["payload"] = std::visit([](const auto& m) { return payload_of(m); }, model);
    return j.dump(2) + "\n";
}

ModelKind model_from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        const auto version = j.at("version").get<std::string>();
        if (version != kModelSchemaVersion) {
            throw DataError("unsupported model schema version '" + version + "' (expected " + kModelSchemaVersion +
                            ")");
        }
        const auto kind = j.at("kind").get<std::string>();
        const auto p = j.at("p").get<Eigen::Index>();
        const auto q = j.at("q").get<Eigen::Index>();
        const auto dt = j.at("sample_time_s").get<double>();
        const auto& pl = j.at("payload");
        ModelKind model;
        if (kind == "state_space") model = state_space_from(pl, p, q, dt);
        else if (kind == "arx") model = arx_from(pl, p, q, dt);
        else if (kind == "sindy") model = sindy_from(pl, p, q, dt);
        else throw DataError("unknown model kind '" + kind + "'");
        std::visit([](const auto& m) { m.validate(); }, model);
        return model;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed model file: ") + e.what());
    }
}

void save_model(const ModelKind& model, const std::filesystem::path& path) {
    const std::string text = model_to_json_string(model);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    out.flush();
    if (!out) throw DataError("write failed for " + path.string());
}

ModelKind load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return model_from_json_string(buf.str());
}

}  // namespace tendonid
