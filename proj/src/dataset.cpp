#include "tendonid/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "tendonid/errors.hpp"

namespace tendonid {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_double(const std::string& cell, std::size_t row, std::size_t col) {
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (cell.empty() || ec != std::errc() || ptr != last) {
        throw DataError("non-numeric cell '" + cell + "' at row " + std::to_string(row) + ", column " +
                        std::to_string(col));
    }
    if (!std::isfinite(value)) {
        throw DataError("non-finite value at row " + std::to_string(row) + ", column " + std::to_string(col));
    }
    return value;
}

}  // namespace

TimeSeries::TimeSeries(double sample_time, Eigen::MatrixXd data, std::vector<std::string> names)
    : sample_time_s(sample_time), values(std::move(data)), channel_names(std::move(names)) {
    if (channel_names.empty()) channel_names = default_channel_names("c", values.cols());
}

TimeSeries TimeSeries::slice(Eigen::Index first, Eigen::Index count) const {
    if (first < 0 || count < 0 || first + count > samples()) {
        throw DataError("time-series slice out of range");
    }
    return TimeSeries(sample_time_s, values.middleRows(first, count), channel_names);
}

void TimeSeries::validate() const {
    if (!(sample_time_s > 0.0) || !std::isfinite(sample_time_s)) {
        throw DataError("sample time must be positive");
    }
    if (samples() < 2) throw DataError("time series needs at least 2 samples");
    if (!values.allFinite()) throw DataError("time series contains NaN or Inf");
    if (static_cast<Eigen::Index>(channel_names.size()) != channels()) {
        throw DataError("channel name count does not match channel count");
    }
}

std::vector<std::string> default_channel_names(const std::string& prefix, Eigen::Index count) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(count));
    for (Eigen::Index i = 0; i < count; ++i) names.push_back(prefix + std::to_string(i + 1));
    return names;
}

Dataset::Dataset(TimeSeries u, TimeSeries y) : inputs(std::move(u)), outputs(std::move(y)) {}

Dataset Dataset::slice(Eigen::Index first, Eigen::Index count) const {
    return Dataset(inputs.slice(first, count), outputs.slice(first, count));
}

void Dataset::validate() const {
    inputs.validate();
    outputs.validate();
    if (inputs.samples() != outputs.samples()) throw DataError("input and output sample counts differ");
    if (inputs.sample_time_s != outputs.sample_time_s) throw DataError("input and output sample times differ");
    if (inputs.channels() < 1 || outputs.channels() < 1) throw DataError("dataset needs >= 1 input and output");
}

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty file " + path.string());
    const auto header = split_line(line);
    if (header.empty() || header.front() != "t") throw DataError("first header column must be 't'");

    std::vector<std::size_t> u_cols, y_cols;
    std::vector<std::string> u_names, y_names;
    for (std::size_t c = 1; c < header.size(); ++c) {
        const auto& name = header[c];
        if (!name.empty() && name.front() == 'u') {
            u_cols.push_back(c);
            u_names.push_back(name);
        } else if (!name.empty() && name.front() == 'y') {
            y_cols.push_back(c);
            y_names.push_back(name);
        } else {
            throw DataError("header column '" + name + "' is neither u* nor y*");
        }
    }
    if (u_cols.empty() || y_cols.empty()) throw DataError("CSV needs at least one u* and one y* column");

    std::vector<std::vector<double>> rows;
    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size()) {
            throw DataError("row " + std::to_string(row_no) + " has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(header.size()));
        }
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) row[c] = parse_double(cells[c], row_no, c + 1);
        rows.push_back(std::move(row));
    }
    const auto m = static_cast<Eigen::Index>(rows.size());
    if (m < 2) throw DataError("CSV needs at least 2 data rows");

    const double t0 = rows.front()[0];
    const double dt = (rows.back()[0] - t0) / static_cast<double>(m - 1);
    if (!(dt > 0.0)) throw DataError("time column must be strictly increasing");
    for (Eigen::Index k = 1; k < m; ++k) {
        const double step = rows[k][0] - rows[k - 1][0];
        if (!(step > 0.0)) throw DataError("time column must be strictly increasing");
        if (std::abs(step - dt) > 0.01 * dt) {
            throw DataError("non-uniform time grid at row " + std::to_string(k + 2));
        }
    }

    Eigen::MatrixXd u(m, static_cast<Eigen::Index>(u_cols.size()));
    Eigen::MatrixXd y(m, static_cast<Eigen::Index>(y_cols.size()));
    for (Eigen::Index k = 0; k < m; ++k) {
        for (std::size_t j = 0; j < u_cols.size(); ++j) u(k, static_cast<Eigen::Index>(j)) = rows[k][u_cols[j]];
        for (std::size_t j = 0; j < y_cols.size(); ++j) y(k, static_cast<Eigen::Index>(j)) = rows[k][y_cols[j]];
    }
    Dataset ds(TimeSeries(dt, std::move(u), std::move(u_names)), TimeSeries(dt, std::move(y), std::move(y_names)));
    ds.validate();
    return ds;
}

Eigen::Index Table::column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == name) return static_cast<Eigen::Index>(c);
    }
    throw DataError("missing column '" + name + "'");
}

Table read_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    Table table;
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty file " + path.string());
    table.header = split_line(line);
    std::vector<std::vector<double>> rows;
    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_line(line);
        if (cells.size() != table.header.size()) {
            throw DataError("row " + std::to_string(row_no) + " of " + path.string() + " has " +
                            std::to_string(cells.size()) + " cells, expected " + std::to_string(table.header.size()));
        }
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) row[c] = parse_double(cells[c], row_no, c + 1);
        rows.push_back(std::move(row));
    }
    table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.header.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return table;
}

void write_table(const Table& table, const std::filesystem::path& path) {
    if (static_cast<Eigen::Index>(table.header.size()) != table.values.cols()) {
        throw DataError("table header does not match the column count");
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t c = 0; c < table.header.size(); ++c) out << (c ? "," : "") << table.header[c];
    out << '\n';
    for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < table.values.cols(); ++c) out << (c ? "," : "") << table.values(r, c);
        out << '\n';
    }
    out.flush();
    if (!out) throw DataError("write failed for " + path.string());
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
    ds.validate();
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << 't';
    for (const auto& n : ds.inputs.channel_names) out << ',' << n;
    for (const auto& n : ds.outputs.channel_names) out << ',' << n;
    out << '\n';
    const double dt = ds.sample_time_s();
    for (Eigen::Index k = 0; k < ds.samples(); ++k) {
        out << static_cast<double>(k) * dt;
        for (Eigen::Index j = 0; j < ds.num_inputs(); ++j) out << ',' << ds.inputs.values(k, j);
        for (Eigen::Index j = 0; j < ds.num_outputs(); ++j) out << ',' << ds.outputs.values(k, j);
        out << '\n';
    }
    out.flush();
    if (!out) throw DataError("write failed for " + path.string());
}

double lowpass_pole(double cutoff) {
    if (!(cutoff > 0.0) || !(cutoff < M_PI)) {
        throw DataError("low-pass cutoff must lie in (0, pi) rad/sample");
    }
    // |(1-a)/(1 - a e^{-jw})|^2 = 1/2  <=>  a^2 - 2a(2 - cos w) + 1 = 0, smaller root.
    const double c = 2.0 - std::cos(cutoff);
    return c - std::sqrt(c * c - 1.0);
}

TimeSeries lowpass_filter(const TimeSeries& ts, double cutoff_rad_per_sample) {
    const double a = lowpass_pole(cutoff_rad_per_sample);
    const double b = 1.0 - a;
    TimeSeries out = ts;
    const Eigen::Index m = ts.samples();
    if (m == 0) return out;
    for (Eigen::Index c = 0; c < ts.channels(); ++c) {
        auto col = out.values.col(c);
        // Each pass starts from steady state at its first sample.
        double state = col(0);
        for (Eigen::Index k = 0; k < m; ++k) {
            state = a * state + b * col(k);
            col(k) = state;
        }
        state = col(m - 1);
        for (Eigen::Index k = m - 1; k >= 0; --k) {
            state = a * state + b * col(k);
            col(k) = state;
        }
    }
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw DataError("train fraction must lie in (0, 1)");
    }
    const Eigen::Index m = ds.samples();
    const auto n_train = static_cast<Eigen::Index>(std::floor(train_fraction * static_cast<double>(m)));
    if (n_train < 2 || m - n_train < 2) {
        throw DataError("split leaves a part with fewer than 2 samples");
    }
    return {ds.slice(0, n_train), ds.slice(n_train, m - n_train)};
}

Dataset concatenate(const Dataset& a, const Dataset& b) {
    if (a.num_inputs() != b.num_inputs() || a.num_outputs() != b.num_outputs()) {
        throw DataError("cannot concatenate datasets with different channel counts");
    }
    if (std::abs(a.sample_time_s() - b.sample_time_s()) > 1e-12 * a.sample_time_s()) {
        throw DataError("cannot concatenate datasets with different sample times");
    }
    Eigen::MatrixXd u(a.samples() + b.samples(), a.num_inputs());
    u << a.inputs.values, b.inputs.values;
    Eigen::MatrixXd y(a.samples() + b.samples(), a.num_outputs());
    y << a.outputs.values, b.outputs.values;
    return Dataset(TimeSeries(a.sample_time_s(), std::move(u), a.inputs.channel_names),
                   TimeSeries(a.sample_time_s(), std::move(y), a.outputs.channel_names));
}

}  // namespace tendonid
