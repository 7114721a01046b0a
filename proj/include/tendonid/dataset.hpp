#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace tendonid {

/// Uniformly sampled multichannel signal. Rows are samples, columns channels.
struct TimeSeries {
    double sample_time_s = 0.0;
    Eigen::MatrixXd values;
    std::vector<std::string> channel_names;

    TimeSeries() = default;
    TimeSeries(double sample_time, Eigen::MatrixXd data, std::vector<std::string> names = {});

    Eigen::Index samples() const { return values.rows(); }
    Eigen::Index channels() const { return values.cols(); }

    /// Rows [first, first + count).
    TimeSeries slice(Eigen::Index first, Eigen::Index count) const;

    /// Throws DataError if any invariant (dt > 0, m >= 2, finite, name count) fails.
    void validate() const;
};

/// Default channel names: prefix + 1-based index.
std::vector<std::string> default_channel_names(const std::string& prefix, Eigen::Index count);

/// Paired input/output record sharing sample count and sample time.
struct Dataset {
    TimeSeries inputs;
    TimeSeries outputs;

    Dataset() = default;
    Dataset(TimeSeries u, TimeSeries y);

    Eigen::Index samples() const { return outputs.samples(); }
    Eigen::Index num_inputs() const { return inputs.channels(); }
    Eigen::Index num_outputs() const { return outputs.channels(); }
    double sample_time_s() const { return outputs.sample_time_s; }

    Dataset slice(Eigen::Index first, Eigen::Index count) const;
    void validate() const;
};

/// Reads `t,u*,y*` CSV. The sample time is inferred from the time column.
Dataset load_csv(const std::filesystem::path& path);

/// Writes `t,u*,y*` CSV with 17 significant digits (exact double round-trip).
void save_csv(const Dataset& ds, const std::filesystem::path& path);

/// Zero-phase first-order low-pass: forward pass, then the same recursion on
/// the reversed signal. The single-pass -3 dB point is at `cutoff_rad_per_sample`.
TimeSeries lowpass_filter(const TimeSeries& ts, double cutoff_rad_per_sample);

/// Pole of the first-order section whose -3 dB point is at `cutoff_rad_per_sample`.
double lowpass_pole(double cutoff_rad_per_sample);

/// Contiguous prefix/suffix split; the prefix holds floor(fraction * m) samples.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction);

/// Numeric CSV with a header row.
struct Table {
    std::vector<std::string> header;
    Eigen::MatrixXd values;

    /// Column index by name; throws DataError if missing.
    Eigen::Index column(const std::string& name) const;
};

Table read_table(const std::filesystem::path& path);
/// Writes with 17 significant digits.
void write_table(const Table& table, const std::filesystem::path& path);

/// Appends `b` after `a`. Channel counts and sample times must agree.
Dataset concatenate(const Dataset& a, const Dataset& b);

}  // namespace tendonid
