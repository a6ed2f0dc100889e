#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graphlstm/autodiff.hpp"

namespace glstm {

using Date = std::chrono::sys_days;

Date make_date(int year, unsigned month, unsigned day);
std::string format_date(Date d);                 // YYYY-MM-DD
Date parse_iso_date(const std::string& text);    // YYYY-MM-DD
Date parse_jhu_date(const std::string& text);    // M/D/YY
std::string format_jhu_date(Date d);

/// Cumulative case counts per country on consecutive days.
struct CumulativeCases {
    std::vector<Date> dates;
    std::vector<std::string> countries;
    std::vector<std::vector<double>> series;  // [country][day]
};

/// Parses a JHU CSSE wide time-series CSV
/// (`Province/State,Country/Region,Lat,Long,<M/D/YY>...`). Rows of one country are summed;
/// only `countries` are kept, in the given order.
CumulativeCases ingest_cases(std::istream& in, const std::vector<std::string>& countries);
CumulativeCases read_cases(const std::filesystem::path& path, const std::vector<std::string>& countries);

/// Writes the same wide format (one row per country, empty province).
void write_jhu_csv(std::ostream& out, const CumulativeCases& cases);

/// First difference with negative corrections clamped to zero; length T-1.
std::vector<double> to_new_cases(std::span<const double> cumulative);

/// Trailing moving average over `window` days, using a shorter window at the start.
std::vector<double> smooth(std::span<const double> series, std::size_t window = 7);

enum class Split { train, validation, test };
const char* to_string(Split split);
Split parse_split(const std::string& text);

struct SplitLengths {
    std::size_t train = 377;
    std::size_t validation = 47;
    std::size_t test = 48;

    std::size_t total() const { return train + validation + test; }
};

/// Features X in R^{K_X x N x T} on consecutive dates, split chronologically.
class TimeSeriesDataset {
public:
    TimeSeriesDataset() = default;
    TimeSeriesDataset(std::vector<std::string> nodes, std::vector<Date> dates, std::size_t feature_count,
                      std::vector<double> values, SplitLengths split);

    std::size_t feature_count() const noexcept { return features_; }
    std::size_t node_count() const noexcept { return nodes_.size(); }
    std::size_t day_count() const noexcept { return dates_.size(); }

    const std::vector<std::string>& nodes() const noexcept { return nodes_; }
    const std::vector<Date>& dates() const noexcept { return dates_; }
    const SplitLengths& split() const noexcept { return split_; }

    double at(std::size_t feature, std::size_t node, std::size_t day) const {
        return values_[(feature * nodes_.size() + node) * dates_.size() + day];
    }
    /// Feature `feature` of `node` over all days.
    std::span<const double> series(std::size_t node, std::size_t feature = 0) const;

    Split split_of(std::size_t day) const;

private:
    std::vector<std::string> nodes_;
    std::vector<Date> dates_;
    std::size_t features_ = 0;
    std::vector<double> values_;
    SplitLengths split_;
};

struct DatasetOptions {
    std::optional<Date> start;  // first day of new cases; cumulative must cover the day before
    std::optional<Date> end;    // last day (inclusive)
    SplitLengths split;
    std::size_t smoothing = 7;
};

/// Cumulative counts -> smoothed daily new cases (K_X = 1) over [start, end].
TimeSeriesDataset build_dataset(const CumulativeCases& cases, const DatasetOptions& options);

/// Where the L input days sit relative to the target day t.
enum class WindowPlacement {
    horizon,   // inputs [t-M-L+1, t-M]: last input exactly M days before the target
    legacy28,  // inputs [t-M-L, t-M-1]: first input L+M days before the target
};
WindowPlacement parse_window_placement(const std::string& text);
const char* to_string(WindowPlacement placement);

struct Sample {
    ad::Tensor input;            // [L x N x K_X]
    std::vector<double> target;  // [N], feature 0 on the target day
    std::size_t target_day = 0;
    Date target_date{};
    Split split = Split::train;
};

/// Offset between the last input day and the target day.
std::size_t target_gap(std::size_t horizon, WindowPlacement placement);

/// Number of samples make_windows produces.
std::size_t window_count(std::size_t days, std::size_t window, std::size_t horizon,
                         WindowPlacement placement = WindowPlacement::horizon);

/// One sample per valid target day, in chronological order; each is assigned to the
/// split containing its target day.
std::vector<Sample> make_windows(const TimeSeriesDataset& data, std::size_t window, std::size_t horizon,
                                 WindowPlacement placement = WindowPlacement::horizon);

std::vector<const Sample*> samples_in(const std::vector<Sample>& samples, Split split);

/// `target_date,node,input_0..input_{L-1},target` (feature 0).
void write_samples_csv(std::ostream& out, const std::vector<Sample>& samples, const std::vector<std::string>& nodes);

/// Per-node scaling by the node's maximum over the training split (floor 1.0).
class Normalizer {
public:
    Normalizer() = default;
    explicit Normalizer(std::vector<double> scales);

    static Normalizer fit(const TimeSeriesDataset& data);

    bool fitted() const noexcept { return !scales_.empty(); }
    const std::vector<double>& scales() const noexcept { return scales_; }

    std::vector<double> normalize(std::span<const double> values) const;
    std::vector<double> denormalize(std::span<const double> values) const;
    /// Scales an [L x N x K] window node-wise.
    ad::Tensor normalize_window(const ad::Tensor& window) const;

    bool operator==(const Normalizer&) const = default;

private:
    void require_fitted(std::size_t nodes) const;
    std::vector<double> scales_;
};

}  // namespace glstm
