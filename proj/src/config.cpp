#include "tendonid/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "tendonid/errors.hpp"

namespace tendonid {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("invalid value for '" + std::string(key) + "' in " + where);
    }
}

Eigen::VectorXd vector_from(const json& v, Eigen::Index expected, const std::string& what) {
    if (!v.is_array()) throw ConfigError(what + " must be an array");
    std::vector<double> data;
    try {
        data = v.get<std::vector<double>>();
    } catch (const json::exception&) {
        throw ConfigError(what + " must contain numbers");
    }
    if (expected > 0 && static_cast<Eigen::Index>(data.size()) != expected) {
        throw ConfigError(what + " must have " + std::to_string(expected) + " entries");
    }
    return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

void read_vec2(const json& j, const char* key, Eigen::Vector2d& out, const std::string& where) {
    if (j.contains(key)) out = vector_from(j.at(key), 2, where + "." + key);
}

void read_vec(const json& j, const char* key, Eigen::VectorXd& out, const std::string& where) {
    if (j.contains(key)) out = vector_from(j.at(key), 0, where + "." + key);
}

Eigen::MatrixXd matrix_from(const json& v, const std::string& what) {
    if (!v.is_array() || v.empty()) throw ConfigError(what + " must be a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(v.size());
    const Eigen::VectorXd first = vector_from(v.at(0), 0, what);
    Eigen::MatrixXd M(rows, first.size());
    for (Eigen::Index r = 0; r < rows; ++r) M.row(r) = vector_from(v.at(r), first.size(), what).transpose();
    return M;
}

// A weight given either as a full matrix under `key` or as its diagonal under `key_diag`.
void read_weight(const json& j, const std::string& key, Eigen::MatrixXd& out, const std::string& where) {
    if (j.contains(key)) out = matrix_from(j.at(key), where + "." + key);
    const std::string dkey = key + "_diag";
    if (j.contains(dkey)) out = vector_from(j.at(dkey), 0, where + "." + dkey).asDiagonal();
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat_json(const Eigen::MatrixXd& M) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) rows.push_back(vec_json(M.row(r).transpose()));
    return rows;
}

SnakePlantConfig parse_plant(const json& j) {
    const std::string where = "plant";
    check_keys(j, {"inertia_diag", "gravity_gain", "viscous_coeff", "coulomb_coeff", "moment_arm_m", "coupling_eps",
                   "force_bias_N", "coulomb_eps", "max_substep_s", "linear_gravity"},
               where);
    SnakePlantConfig p;
    read_vec2(j, "inertia_diag", p.inertia_diag, where);
    read_vec2(j, "gravity_gain", p.gravity_gain, where);
    read_vec2(j, "viscous_coeff", p.viscous_coeff, where);
    read_vec2(j, "coulomb_coeff", p.coulomb_coeff, where);
    read(j, "moment_arm_m", p.moment_arm_m, where);
    read(j, "coupling_eps", p.coupling_eps, where);
    read(j, "force_bias_N", p.force_bias_N, where);
    read(j, "coulomb_eps", p.coulomb_eps, where);
    read(j, "max_substep_s", p.max_substep_s, where);
    read(j, "linear_gravity", p.linear_gravity, where);
    p.validate();
    return p;
}

json plant_json(const SnakePlantConfig& p) {
    return {{"inertia_diag", vec_json(p.inertia_diag)},
            {"gravity_gain", vec_json(p.gravity_gain)},
            {"viscous_coeff", vec_json(p.viscous_coeff)},
            {"coulomb_coeff", vec_json(p.coulomb_coeff)},
            {"moment_arm_m", p.moment_arm_m},
            {"coupling_eps", p.coupling_eps},
            {"force_bias_N", p.force_bias_N},
            {"coulomb_eps", p.coulomb_eps},
            {"max_substep_s", p.max_substep_s},
            {"linear_gravity", p.linear_gravity}};
}

ExcitationSpec parse_segment(const json& j, const ExcitationSpec& base, const std::string& where) {
    check_keys(j, {"kind", "duration_s", "amplitude_N", "seed", "bias_N", "common_mode_N", "min_hold_samples",
                   "max_hold_samples", "prbs_levels", "circle_rings", "circle_period_s", "multisine_harmonics",
                   "multisine_max_fraction"},
               where);
    ExcitationSpec s = base;
    if (!j.contains("kind")) throw ConfigError(where + " needs a 'kind'");
    s.kind = parse_excitation_kind(j.at("kind").get<std::string>());
    read(j, "duration_s", s.duration_s, where);
    read(j, "amplitude_N", s.amplitude_N, where);
    read(j, "seed", s.seed, where);
    read(j, "bias_N", s.bias_N, where);
    read(j, "common_mode_N", s.common_mode_N, where);
    read(j, "min_hold_samples", s.min_hold_samples, where);
    read(j, "max_hold_samples", s.max_hold_samples, where);
    read(j, "prbs_levels", s.prbs_levels, where);
    read(j, "circle_rings", s.circle_rings, where);
    read(j, "circle_period_s", s.circle_period_s, where);
    read(j, "multisine_harmonics", s.multisine_harmonics, where);
    read(j, "multisine_max_fraction", s.multisine_max_fraction, where);
    s.validate();
    return s;
}

json segment_json(const ExcitationSpec& s) {
    return {{"kind", excitation_kind_name(s.kind)},
            {"duration_s", s.duration_s},
            {"amplitude_N", s.amplitude_N},
            {"seed", s.seed},
            {"bias_N", s.bias_N},
            {"common_mode_N", s.common_mode_N},
            {"min_hold_samples", s.min_hold_samples},
            {"max_hold_samples", s.max_hold_samples},
            {"prbs_levels", s.prbs_levels},
            {"circle_rings", s.circle_rings},
            {"circle_period_s", s.circle_period_s},
            {"multisine_harmonics", s.multisine_harmonics},
            {"multisine_max_fraction", s.multisine_max_fraction}};
}

std::uint64_t derived_seed(std::uint64_t global, bool validation, std::size_t index) {
    return global * 1000 + (validation ? 500 : 0) + index + 1;
}

void assign_seeds(std::vector<ExcitationSpec>& segments, const json* raw, std::uint64_t global, bool validation) {
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const bool explicit_seed = raw && raw->at(i).contains("seed");
        if (!explicit_seed) segments[i].seed = derived_seed(global, validation, i);
    }
}

}  // namespace

std::string reference_kind_name(ReferenceConfig::Kind kind) {
    switch (kind) {
        case ReferenceConfig::Kind::Petal: return "petal";
        case ReferenceConfig::Kind::Step: return "step";
        case ReferenceConfig::Kind::File: return "file";
    }
    return "unknown";
}

ReferenceConfig::Kind parse_reference_kind(const std::string& name) {
    if (name == "petal") return ReferenceConfig::Kind::Petal;
    if (name == "step") return ReferenceConfig::Kind::Step;
    if (name == "file") return ReferenceConfig::Kind::File;
    throw ConfigError("unknown reference kind '" + name + "' (expected petal, step or file)");
}

RunConfig default_run_config() {
    RunConfig cfg;
    ExcitationSpec circle;
    circle.kind = ExcitationSpec::Kind::CircleSweep;
    ExcitationSpec prbs;
    prbs.kind = ExcitationSpec::Kind::Prbs;
    cfg.data.train = {circle, prbs};
    ExcitationSpec vcircle = circle;
    vcircle.circle_period_s = 6.5;
    vcircle.circle_rings = 9;
    cfg.data.validation = {vcircle, prbs};
    assign_seeds(cfg.data.train, nullptr, cfg.seed, false);
    assign_seeds(cfg.data.validation, nullptr, cfg.seed, true);
    cfg.identification.n4sid.remove_means = true;
    return cfg;
}

RunConfig parse_run_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(root, {"seed", "output_dir", "sample_time_s", "plant", "data", "identification", "mpc"}, "config");
    if (!root.contains("plant")) throw ConfigError("config is missing the 'plant' section");

    RunConfig cfg = default_run_config();
    read(root, "seed", cfg.seed, "config");
    read(root, "output_dir", cfg.output_dir, "config");
    read(root, "sample_time_s", cfg.sample_time_s, "config");
    if (!(cfg.sample_time_s > 0.0 && cfg.sample_time_s <= 1.0)) throw ConfigError("sample_time_s must lie in (0, 1]");
    cfg.plant = parse_plant(root.at("plant"));

    const json* raw_train = nullptr;
    const json* raw_val = nullptr;
    if (root.contains("data")) {
        const json& d = root.at("data");
        check_keys(d, {"train", "validation", "lowpass_cutoff_rad_per_sample", "output_noise_std_rad"}, "data");
        ExcitationSpec base;
        base.bias_N = cfg.plant.force_bias_N;
        auto segments = [&](const char* key, std::vector<ExcitationSpec>& out, const json*& raw) {
            if (!d.contains(key)) return;
            const json& arr = d.at(key);
            if (!arr.is_array() || arr.empty()) throw ConfigError(std::string("data.") + key + " must be a non-empty array");
            out.clear();
            for (std::size_t i = 0; i < arr.size(); ++i) {
                out.push_back(parse_segment(arr.at(i), base, std::string("data.") + key + "[" + std::to_string(i) + "]"));
            }
            raw = &arr;
        };
        segments("train", cfg.data.train, raw_train);
        segments("validation", cfg.data.validation, raw_val);
        if (d.contains("lowpass_cutoff_rad_per_sample") && !d.at("lowpass_cutoff_rad_per_sample").is_null()) {
            double c = 0.0;
            read(d, "lowpass_cutoff_rad_per_sample", c, "data");
            if (!(c > 0.0 && c < M_PI)) throw ConfigError("data.lowpass_cutoff_rad_per_sample must lie in (0, pi)");
            cfg.data.lowpass_cutoff_rad_per_sample = c;
        }
        read(d, "output_noise_std_rad", cfg.data.output_noise_std_rad, "data");
        if (!(cfg.data.output_noise_std_rad >= 0.0)) throw ConfigError("data.output_noise_std_rad must be >= 0");
    }
    for (auto* segs : {&cfg.data.train, &cfg.data.validation})
        for (auto& s : *segs) {
            if (s.amplitude_N > s.bias_N) throw ConfigError("excitation amplitude exceeds bias; forces would go negative");
        }
    assign_seeds(cfg.data.train, raw_train, cfg.seed, false);
    assign_seeds(cfg.data.validation, raw_val, cfg.seed, true);

    if (root.contains("identification")) {
        const json& id = root.at("identification");
        check_keys(id, {"n4sid", "arx", "sindyc"}, "identification");
        if (id.contains("n4sid")) {
            const json& n = id.at("n4sid");
            const std::string w = "identification.n4sid";
            check_keys(n, {"order", "block_rows", "sv_threshold", "remove_means"}, w);
            if (n.contains("order")) {
                const json& o = n.at("order");
                if (o.is_string() && o.get<std::string>() == "auto") {
                    cfg.identification.n4sid.order.reset();
                } else if (o.is_number_integer()) {
                    cfg.identification.n4sid.order = o.get<int>();
                } else {
                    throw ConfigError(w + ".order must be an integer or \"auto\"");
                }
            }
            read(n, "block_rows", cfg.identification.n4sid.block_rows_i, w);
            read(n, "sv_threshold", cfg.identification.n4sid.sv_threshold, w);
            read(n, "remove_means", cfg.identification.n4sid.remove_means, w);
            cfg.identification.n4sid.validate();
        }
        if (id.contains("arx")) {
            const json& a = id.at("arx");
            check_keys(a, {"na", "nb", "nk"}, "identification.arx");
            read(a, "na", cfg.identification.arx.na, "identification.arx");
            read(a, "nb", cfg.identification.arx.nb, "identification.arx");
            read(a, "nk", cfg.identification.arx.nk, "identification.arx");
            if (cfg.identification.arx.na < 0 || cfg.identification.arx.nb < 0 || cfg.identification.arx.nk < 1) {
                throw ConfigError("identification.arx needs na >= 0, nb >= 0, nk >= 1");
            }
        }
        if (id.contains("sindyc")) {
            const json& s = id.at("sindyc");
            const std::string w = "identification.sindyc";
            check_keys(s, {"lambda", "include_constant", "poly_degree_state", "include_state_input_products",
                           "poly_degree_input", "include_trig"},
                       w);
            read(s, "lambda", cfg.identification.lambda, w);
            if (!(cfg.identification.lambda >= 0.0)) throw ConfigError(w + ".lambda must be >= 0");
            LibrarySpec& l = cfg.identification.library;
            read(s, "include_constant", l.include_constant, w);
            read(s, "poly_degree_state", l.poly_degree_state, w);
            read(s, "include_state_input_products", l.include_state_input_products, w);
            read(s, "poly_degree_input", l.poly_degree_input, w);
            read(s, "include_trig", l.include_trig, w);
            try {
                l.validate();
            } catch (const Error& e) {
                throw ConfigError(e.what());
            }
        }
    }

    if (root.contains("mpc")) {
        const json& m = root.at("mpc");
        const std::string w = "mpc";
        check_keys(m, {"horizon_N", "Q", "Q_diag", "Qf", "Qf_diag", "R", "R_diag", "u_min", "u_max", "x_min", "x_max",
                       "slack_weight", "nmpc_max_iterations", "nmpc_tolerance", "observer", "reference"},
                   w);
        MpcConfig& c = cfg.control.mpc;
        read(m, "horizon_N", c.horizon_N, w);
        read_weight(m, "Q", c.Q, w);
        read_weight(m, "Qf", c.Qf, w);
        read_weight(m, "R", c.R, w);
        read_vec(m, "u_min", c.u_min, w);
        read_vec(m, "u_max", c.u_max, w);
        read_vec(m, "x_min", c.x_min, w);
        read_vec(m, "x_max", c.x_max, w);
        read(m, "slack_weight", c.slack_weight, w);
        read(m, "nmpc_max_iterations", c.nmpc_max_iterations, w);
        read(m, "nmpc_tolerance", c.nmpc_tolerance, w);
        if (m.contains("observer")) {
            const json& o = m.at("observer");
            check_keys(o, {"kind", "process_noise", "measurement_noise", "initial_covariance", "direct_window"},
                       "mpc.observer");
            if (o.contains("kind")) cfg.control.observer.kind = parse_observer_kind(o.at("kind").get<std::string>());
            read(o, "process_noise", cfg.control.observer.process_noise, "mpc.observer");
            read(o, "measurement_noise", cfg.control.observer.measurement_noise, "mpc.observer");
            read(o, "initial_covariance", cfg.control.observer.initial_covariance, "mpc.observer");
            read(o, "direct_window", cfg.control.observer.direct_window, "mpc.observer");
            if (cfg.control.observer.direct_window < 0) throw ConfigError("mpc.observer.direct_window must be >= 0");
        }
        if (m.contains("reference")) {
            const json& r = m.at("reference");
            const std::string rw = "mpc.reference";
            check_keys(r, {"kind", "duration_s", "period_s", "max_joint_rad", "step_target", "step_time_s", "file"}, rw);
            ReferenceConfig& ref = cfg.control.reference;
            if (r.contains("kind")) ref.kind = parse_reference_kind(r.at("kind").get<std::string>());
            read(r, "duration_s", ref.duration_s, rw);
            read(r, "period_s", ref.petal.period_s, rw);
            read(r, "max_joint_rad", ref.petal.max_joint_rad, rw);
            read_vec2(r, "step_target", ref.step_target, rw);
            read(r, "step_time_s", ref.step_time_s, rw);
            read(r, "file", ref.file, rw);
            if (!(ref.duration_s > 0.0)) throw ConfigError("mpc.reference.duration_s must be > 0");
        }
    }
    cfg.control.mpc.sample_time_s = cfg.sample_time_s;
    cfg.control.mpc.validate(4, 2);
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string run_config_to_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir;
    j["sample_time_s"] = cfg.sample_time_s;
    j["plant"] = plant_json(cfg.plant);
    json train = json::array(), val = json::array();
    for (const auto& s : cfg.data.train) train.push_back(segment_json(s));
    for (const auto& s : cfg.data.validation) val.push_back(segment_json(s));
    j["data"] = {{"train", train},
                 {"validation", val},
                 {"lowpass_cutoff_rad_per_sample",
                  cfg.data.lowpass_cutoff_rad_per_sample ? json(*cfg.data.lowpass_cutoff_rad_per_sample) : json(nullptr)},
                 {"output_noise_std_rad", cfg.data.output_noise_std_rad}};
    const auto& id = cfg.identification;
    j["identification"] = {
        {"n4sid",
         {{"order", id.n4sid.order ? json(*id.n4sid.order) : json("auto")},
          {"block_rows", id.n4sid.block_rows_i},
          {"sv_threshold", id.n4sid.sv_threshold},
          {"remove_means", id.n4sid.remove_means}}},
        {"arx", {{"na", id.arx.na}, {"nb", id.arx.nb}, {"nk", id.arx.nk}}},
        {"sindyc",
         {{"lambda", id.lambda},
          {"include_constant", id.library.include_constant},
          {"poly_degree_state", id.library.poly_degree_state},
          {"include_state_input_products", id.library.include_state_input_products},
          {"poly_degree_input", id.library.poly_degree_input},
          {"include_trig", id.library.include_trig}}}};
    const auto& c = cfg.control;
    j["mpc"] = {{"horizon_N", c.mpc.horizon_N},
                {"Q", mat_json(c.mpc.Q)},
                {"Qf", mat_json(c.mpc.Qf)},
                {"R", mat_json(c.mpc.R)},
                {"u_min", vec_json(c.mpc.u_min)},
                {"u_max", vec_json(c.mpc.u_max)},
                {"x_min", vec_json(c.mpc.x_min)},
                {"x_max", vec_json(c.mpc.x_max)},
                {"slack_weight", c.mpc.slack_weight},
                {"nmpc_max_iterations", c.mpc.nmpc_max_iterations},
                {"nmpc_tolerance", c.mpc.nmpc_tolerance},
                {"observer",
                 {{"kind", observer_kind_name(c.observer.kind)},
                  {"process_noise", c.observer.process_noise},
                  {"measurement_noise", c.observer.measurement_noise},
                  {"initial_covariance", c.observer.initial_covariance},
                  {"direct_window", c.observer.direct_window}}},
                {"reference",
                 {{"kind", reference_kind_name(c.reference.kind)},
                  {"duration_s", c.reference.duration_s},
                  {"period_s", c.reference.petal.period_s},
                  {"max_joint_rad", c.reference.petal.max_joint_rad},
                  {"step_target", vec_json(c.reference.step_target)},
                  {"step_time_s", c.reference.step_time_s},
                  {"file", c.reference.file}}}};
    return j.dump(2) + "\n";
}

Eigen::MatrixXd build_reference(const ReferenceConfig& ref, double dt, int horizon) {
    const auto steps = static_cast<Eigen::Index>(std::llround(ref.duration_s / dt));
    const Eigen::Index rows = steps + horizon + 1;
    switch (ref.kind) {
        case ReferenceConfig::Kind::Petal: return petal_reference(ref.petal, dt, rows);
        case ReferenceConfig::Kind::Step: {
            Eigen::MatrixXd R = Eigen::MatrixXd::Zero(rows, 2);
            for (Eigen::Index k = 0; k < rows; ++k) {
                if (static_cast<double>(k) * dt >= ref.step_time_s) R.row(k) = ref.step_target.transpose();
            }
            return R;
        }
        case ReferenceConfig::Kind::File: {
            if (ref.file.empty()) throw ConfigError("reference kind 'file' needs mpc.reference.file");
            const Table t = read_table(ref.file);
            if (t.values.cols() < 2) throw DataError("reference file needs at least two columns");
            Eigen::Index c1 = t.values.cols() - 2, c2 = t.values.cols() - 1;
            try {
                c1 = t.column("ref1");
                c2 = t.column("ref2");
            } catch (const DataError&) {
            }
            if (t.values.rows() < 1) throw DataError("reference file has no rows");
            // Shorter files hold their last row.
            Eigen::MatrixXd R(rows, 2);
            for (Eigen::Index k = 0; k < rows; ++k) {
                const Eigen::Index src = std::min(k, t.values.rows() - 1);
                R(k, 0) = t.values(src, c1);
                R(k, 1) = t.values(src, c2);
            }
            return R;
        }
    }
    return {};
}

}  // namespace tendonid
