#include "graphlstm/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "graphlstm/csv.hpp"
#include "graphlstm/errors.hpp"

namespace glstm {

using namespace std::chrono;

Date make_date(int y, unsigned m, unsigned d) {
    const year_month_day ymd{year{y}, month{m}, day{d}};
    if (!ymd.ok()) throw DataError("invalid calendar date");
    return sys_days{ymd};
}

std::string format_date(Date d) {
    const year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

Date parse_iso_date(const std::string& text) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    if (std::sscanf(text.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
        throw DataError("expected a YYYY-MM-DD date, got '" + text + "'");
    }
    return make_date(y, m, d);
}

Date parse_jhu_date(const std::string& text) {
    unsigned m = 0, d = 0, y = 0;
    char tail = 0;
    if (std::sscanf(text.c_str(), "%u/%u/%u%c", &m, &d, &y, &tail) != 3 || y > 99) {
        throw DataError("expected an M/D/YY date column, got '" + text + "'");
    }
    return make_date(2000 + static_cast<int>(y), m, d);
}

std::string format_jhu_date(Date d) {
    const year_month_day ymd{d};
    return std::to_string(static_cast<unsigned>(ymd.month())) + "/" + std::to_string(static_cast<unsigned>(ymd.day())) +
           "/" + std::to_string(static_cast<int>(ymd.year()) % 100);
}

// ---------------------------------------------------------------------------
// Ingestion

CumulativeCases ingest_cases(std::istream& in, const std::vector<std::string>& countries) {
    const auto rows = csv::read(in);
    if (rows.empty()) throw DataError("case CSV is empty");
    const csv::Row& header = rows[0];
    if (header.size() < 5 || header[0] != "Province/State" || header[1] != "Country/Region" || header[2] != "Lat" ||
        header[3] != "Long") {
        throw DataError("case CSV header must start with Province/State,Country/Region,Lat,Long");
    }
    CumulativeCases out;
    for (std::size_t c = 4; c < header.size(); ++c) {
        const Date d = parse_jhu_date(header[c]);
        if (!out.dates.empty() && d != out.dates.back() + days{1}) {
            throw DataError("date columns are not consecutive days at '" + header[c] + "'");
        }
        out.dates.push_back(d);
    }

    std::map<std::string, std::size_t> wanted;
    for (std::size_t i = 0; i < countries.size(); ++i) {
        if (!wanted.emplace(countries[i], i).second) throw DataError("country listed twice: " + countries[i]);
    }
    out.countries = countries;
    out.series.assign(countries.size(), std::vector<double>(out.dates.size(), 0.0));
    std::vector<bool> seen(countries.size(), false);

    for (std::size_t r = 1; r < rows.size(); ++r) {
        const csv::Row& row = rows[r];
        if (row.size() != header.size()) {
            throw DataError("case CSV row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                            " fields, header has " + std::to_string(header.size()));
        }
        const auto it = wanted.find(row[1]);
        if (it == wanted.end()) continue;
        seen[it->second] = true;
        auto& series = out.series[it->second];
        for (std::size_t c = 4; c < row.size(); ++c) series[c - 4] += csv::parse_double(row[c], row[1] + " on " + header[c]);
    }

    std::string missing;
    for (std::size_t i = 0; i < countries.size(); ++i)
        if (!seen[i]) missing += (missing.empty() ? "" : ", ") + countries[i];
    if (!missing.empty()) throw DataError("countries absent from case CSV: " + missing);
    return out;
}

CumulativeCases read_cases(const std::filesystem::path& path, const std::vector<std::string>& countries) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open case CSV " + path.string());
    return ingest_cases(in, countries);
}

void write_jhu_csv(std::ostream& out, const CumulativeCases& cases) {
    out << "Province/State,Country/Region,Lat,Long";
    for (Date d : cases.dates) out << ',' << format_jhu_date(d);
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < cases.countries.size(); ++i) {
        out << ',' << csv::escape(cases.countries[i]) << ",0,0";
        for (double v : cases.series[i]) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << ',' << buf;
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Series transforms

std::vector<double> to_new_cases(std::span<const double> cumulative) {
    if (cumulative.size() < 2) throw DataError("differencing needs at least 2 cumulative values");
    std::vector<double> out(cumulative.size() - 1);
    for (std::size_t t = 1; t < cumulative.size(); ++t) out[t - 1] = std::max(0.0, cumulative[t] - cumulative[t - 1]);
    return out;
}

std::vector<double> smooth(std::span<const double> series, std::size_t window) {
    if (window < 1) throw DataError("smoothing window must be at least 1");
    std::vector<double> out(series.size());
    for (std::size_t t = 0; t < series.size(); ++t) {
        const std::size_t first = t + 1 >= window ? t + 1 - window : 0;
        double total = 0.0;
        for (std::size_t s = first; s <= t; ++s) total += series[s];
        out[t] = total / static_cast<double>(t - first + 1);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset

const char* to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

Split parse_split(const std::string& text) {
    if (text == "train") return Split::train;
    if (text == "validation" || text == "val") return Split::validation;
    if (text == "test") return Split::test;
    throw UsageError("unknown split '" + text + "' (train, validation, test)");
}

TimeSeriesDataset::TimeSeriesDataset(std::vector<std::string> nodes, std::vector<Date> dates, std::size_t feature_count,
                                     std::vector<double> values, SplitLengths split)
    : nodes_(std::move(nodes)), dates_(std::move(dates)), features_(feature_count), values_(std::move(values)),
      split_(split) {
    if (values_.size() != features_ * nodes_.size() * dates_.size()) throw DataError("dataset value count mismatch");
    for (std::size_t t = 1; t < dates_.size(); ++t) {
        if (dates_[t] != dates_[t - 1] + days{1}) throw DataError("dataset dates must be consecutive days");
    }
    for (double v : values_) {
        if (!(v >= 0.0)) throw DataError("dataset values must be finite and non-negative");
    }
    if (split_.total() != dates_.size()) {
        throw DataError("split lengths " + std::to_string(split_.train) + "/" + std::to_string(split_.validation) +
                        "/" + std::to_string(split_.test) + " do not sum to " + std::to_string(dates_.size()) +
                        " days");
    }
}

std::span<const double> TimeSeriesDataset::series(std::size_t node, std::size_t feature) const {
    return std::span<const double>(values_).subspan((feature * nodes_.size() + node) * dates_.size(), dates_.size());
}

Split TimeSeriesDataset::split_of(std::size_t day) const {
    if (day < split_.train) return Split::train;
    if (day < split_.train + split_.validation) return Split::validation;
    return Split::test;
}

TimeSeriesDataset build_dataset(const CumulativeCases& cases, const DatasetOptions& options) {
    if (cases.dates.size() < 2) throw DataError("case data covers fewer than 2 days");
    const Date start = options.start.value_or(cases.dates[1]);
    const Date end = options.end.value_or(cases.dates.back());
    if (end < start) throw DataError("end date precedes start date");
    if (start - days{1} < cases.dates.front() || end > cases.dates.back()) {
        throw DataError("case data " + format_date(cases.dates.front()) + ".." + format_date(cases.dates.back()) +
                        " does not cover " + format_date(start - days{1}) + ".." + format_date(end));
    }
    const auto first = static_cast<std::size_t>((start - cases.dates.front()).count());  // index into new-case series + 1
    const auto count = static_cast<std::size_t>((end - start).count()) + 1;
    const std::size_t last_cum = first + count - 1;

    std::vector<Date> dates;
    for (std::size_t t = 0; t < count; ++t) dates.push_back(start + days{static_cast<int>(t)});

    std::vector<double> values;
    values.reserve(cases.countries.size() * count);
    for (const auto& cumulative : cases.series) {
        std::span<const double> upto(cumulative.data(), last_cum + 1);
        const std::vector<double> smoothed = smooth(to_new_cases(upto), options.smoothing);
        // new-case index t corresponds to cumulative day t+1
        values.insert(values.end(), smoothed.begin() + static_cast<std::ptrdiff_t>(first - 1), smoothed.end());
    }
    return TimeSeriesDataset(cases.countries, std::move(dates), 1, std::move(values), options.split);
}

// ---------------------------------------------------------------------------
// Windows

WindowPlacement parse_window_placement(const std::string& text) {
    if (text == "horizon") return WindowPlacement::horizon;
    if (text == "legacy28") return WindowPlacement::legacy28;
    throw UsageError("unknown window placement '" + text + "' (horizon, legacy28)");
}

const char* to_string(WindowPlacement placement) {
    return placement == WindowPlacement::horizon ? "horizon" : "legacy28";
}

std::size_t target_gap(std::size_t horizon, WindowPlacement placement) {
    return placement == WindowPlacement::horizon ? horizon : horizon + 1;
}

std::size_t window_count(std::size_t days, std::size_t window, std::size_t horizon, WindowPlacement placement) {
    const std::size_t span = window + target_gap(horizon, placement);
    return days >= span ? days - span + 1 : 0;
}

std::vector<Sample> make_windows(const TimeSeriesDataset& data, std::size_t window, std::size_t horizon,
                                 WindowPlacement placement) {
    if (window < 1 || horizon < 1) throw std::invalid_argument("window and horizon must be at least 1");
    const std::size_t gap = target_gap(horizon, placement);
    const std::size_t T = data.day_count(), N = data.node_count(), K = data.feature_count();
    if (T < window + gap) {
        throw DataError(std::to_string(T) + " days cannot hold a window of " + std::to_string(window) +
                        " plus a gap of " + std::to_string(gap));
    }
    std::vector<Sample> samples;
    samples.reserve(window_count(T, window, horizon, placement));
    for (std::size_t t = window + gap - 1; t < T; ++t) {
        Sample s;
        s.input = ad::Tensor({window, N, K});
        const std::size_t first = t - gap - window + 1;
        for (std::size_t l = 0; l < window; ++l)
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t k = 0; k < K; ++k) s.input[(l * N + n) * K + k] = data.at(k, n, first + l);
        s.target.resize(N);
        for (std::size_t n = 0; n < N; ++n) s.target[n] = data.at(0, n, t);
        s.target_day = t;
        s.target_date = data.dates()[t];
        s.split = data.split_of(t);
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<const Sample*> samples_in(const std::vector<Sample>& samples, Split split) {
    std::vector<const Sample*> out;
    for (const Sample& s : samples)
        if (s.split == split) out.push_back(&s);
    return out;
}

void write_samples_csv(std::ostream& out, const std::vector<Sample>& samples, const std::vector<std::string>& nodes) {
    if (samples.empty()) return;
    const std::size_t L = samples.front().input.shape()[0];
    const std::size_t N = samples.front().input.shape()[1];
    const std::size_t K = samples.front().input.shape()[2];
    out << "target_date,node";
    for (std::size_t l = 0; l < L; ++l) out << ",input_" << l;
    out << ",target\n";
    char buf[32];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    };
    for (const Sample& s : samples) {
        for (std::size_t n = 0; n < N; ++n) {
            out << format_date(s.target_date) << ',' << csv::escape(nodes.at(n));
            for (std::size_t l = 0; l < L; ++l) out << ',' << num(s.input[(l * N + n) * K]);
            out << ',' << num(s.target[n]) << '\n';
        }
    }
}

// ---------------------------------------------------------------------------
// Normalizer

Normalizer::Normalizer(std::vector<double> scales) : scales_(std::move(scales)) {
    for (double s : scales_) {
        if (!(s >= 1.0)) throw DataError("normalizer scales must be >= 1");
    }
}

Normalizer Normalizer::fit(const TimeSeriesDataset& data) {
    if (data.split().train == 0) throw DataError("cannot fit a normalizer on an empty training split");
    std::vector<double> scales(data.node_count(), 1.0);
    for (std::size_t n = 0; n < data.node_count(); ++n)
        for (std::size_t k = 0; k < data.feature_count(); ++k)
            for (std::size_t t = 0; t < data.split().train; ++t) scales[n] = std::max(scales[n], data.at(k, n, t));
    return Normalizer(std::move(scales));
}

void Normalizer::require_fitted(std::size_t nodes) const {
    if (!fitted()) throw std::logic_error("normalizer used before fit");
    if (nodes != scales_.size()) {
        throw DimensionError("normalizer fitted on " + std::to_string(scales_.size()) + " nodes, got " +
                             std::to_string(nodes));
    }
}

std::vector<double> Normalizer::normalize(std::span<const double> values) const {
    require_fitted(values.size());
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] / scales_[i];
    return out;
}

std::vector<double> Normalizer::denormalize(std::span<const double> values) const {
    require_fitted(values.size());
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * scales_[i];
    return out;
}

ad::Tensor Normalizer::normalize_window(const ad::Tensor& window) const {
    if (window.rank() != 3) throw DimensionError("window must be [L x N x K], got " + ad::to_string(window.shape()));
    const std::size_t L = window.shape()[0], N = window.shape()[1], K = window.shape()[2];
    require_fitted(N);
    ad::Tensor out = window;
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t k = 0; k < K; ++k) out[(l * N + n) * K + k] /= scales_[n];
    return out;
}

}  // namespace glstm
