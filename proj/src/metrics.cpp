#include "graphlstm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "graphlstm/csv.hpp"
#include "graphlstm/errors.hpp"

namespace glstm {

const char* to_string(LossMode mode) { return mode == LossMode::verbatim ? "verbatim" : "strict"; }

LossMode parse_loss_mode(const std::string& text) {
    if (text == "verbatim") return LossMode::verbatim;
    if (text == "strict") return LossMode::strict;
    throw UsageError("unknown loss mode '" + text + "' (verbatim, strict)");
}

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw DimensionError(std::string(what) + ": " + std::to_string(a) + " predictions for " +
                                     std::to_string(b) + " actuals");
}

double total(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace

double per_person_mase(std::span<const double> pred, std::span<const double> actual, LossMode mode) {
    require_same_length(pred.size(), actual.size(), "per_person_mase");
    const double denom = total(actual);
    if (!(denom > 0.0)) throw NumericError("per_person_mase: total actual cases is zero");
    double err = 0.0;
    if (mode == LossMode::verbatim) {
        for (std::size_t i = 0; i < pred.size(); ++i) err += pred[i] - actual[i];
        err = std::fabs(err);
    } else {
        for (std::size_t i = 0; i < pred.size(); ++i) err += std::fabs(pred[i] - actual[i]);
    }
    return err / denom;
}

double per_country_mase(std::span<const double> pred, std::span<const double> actual) {
    require_same_length(pred.size(), actual.size(), "per_country_mase");
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!(actual[i] > 0.0)) continue;
        sum += std::fabs(pred[i] - actual[i]) / actual[i];
        ++counted;
    }
    if (counted == 0) throw NumericError("per_country_mase: no node has positive actual cases");
    return sum / static_cast<double>(counted);
}

std::vector<std::optional<double>> missed_fraction(const std::vector<std::vector<double>>& preds,
                                                   const std::vector<std::vector<double>>& actuals) {
    require_same_length(preds.size(), actuals.size(), "missed_fraction");
    if (actuals.empty()) return {};
    const std::size_t n = actuals.front().size();
    std::vector<double> missed(n, 0.0), totals(n, 0.0);
    for (std::size_t t = 0; t < actuals.size(); ++t) {
        require_same_length(preds[t].size(), actuals[t].size(), "missed_fraction");
        if (actuals[t].size() != n) throw DimensionError("missed_fraction: ragged actuals");
        for (std::size_t i = 0; i < n; ++i) {
            missed[i] += std::max(0.0, actuals[t][i] - preds[t][i]);
            totals[i] += actuals[t][i];
        }
    }
    std::vector<std::optional<double>> out(n);
    for (std::size_t i = 0; i < n; ++i)
        if (totals[i] > 0.0) out[i] = missed[i] / totals[i];
    return out;
}

std::vector<double> lag_baseline(const ad::Tensor& window) {
    if (window.rank() != 3) throw DimensionError("lag_baseline: window must be [L x N x K]");
    const std::size_t L = window.shape()[0], N = window.shape()[1], K = window.shape()[2];
    if (L == 0) throw DimensionError("lag_baseline: empty window");
    std::vector<double> out(N);
    for (std::size_t n = 0; n < N; ++n) out[n] = window[((L - 1) * N + n) * K];
    return out;
}

ad::Var per_person_loss(ad::Var pred, std::span<const double> actual, LossMode mode) {
    require_same_length(pred.value().size(), actual.size(), "per_person_loss");
    const double denom = total(actual);
    if (!(denom > 0.0)) throw NumericError("per_person_loss: total actual cases is zero");
    ad::Tape& tape = *pred.tape();
    ad::Var target = tape.constant(ad::Tensor(pred.shape(), std::vector<double>(actual.begin(), actual.end())));
    ad::Var diff = ad::sub(pred, target);
    ad::Var err = mode == LossMode::verbatim ? ad::abs(ad::sum(diff)) : ad::sum(ad::abs(diff));
    return ad::scale(err, 1.0 / denom);
}

MetricSummary summarize(const std::vector<std::vector<double>>& preds, const std::vector<std::vector<double>>& actuals,
                        LossMode mode) {
    require_same_length(preds.size(), actuals.size(), "summarize");
    if (actuals.empty()) throw DataError("cannot summarize an empty evaluation window");
    MetricSummary s;
    for (std::size_t t = 0; t < actuals.size(); ++t) {
        s.daily_per_person.push_back(per_person_mase(preds[t], actuals[t], mode));
        s.daily_per_country.push_back(per_country_mase(preds[t], actuals[t]));
    }
    const double days = static_cast<double>(actuals.size());
    for (double v : s.daily_per_person) s.per_person += v;
    for (double v : s.daily_per_country) s.per_country += v;
    s.per_person /= days;
    s.per_country /= days;
    s.missed = missed_fraction(preds, actuals);
    return s;
}

std::optional<double> EvalReport::model_to_lag_ratio() const {
    if (!model || !(lag.per_person > 0.0)) return std::nullopt;
    return model->per_person / lag.per_person;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json summary_json(const MetricSummary& s) {
    nlohmann::json missed = nlohmann::json::array();
    for (const auto& m : s.missed) missed.push_back(m ? nlohmann::json(*m) : nlohmann::json(nullptr));
    return {{"per_person_mase", s.per_person},
            {"per_country_mase", s.per_country},
            {"daily_per_person_mase", s.daily_per_person},
            {"daily_per_country_mase", s.daily_per_country},
            {"missed_fraction", std::move(missed)}};
}

std::string number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class F>
void for_each_forecaster(const EvalReport& r, F f) {
    if (r.model) f("model", *r.model);
    f("lag", r.lag);
}

}  // namespace

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json dates = nlohmann::json::array();
    for (Date d : report.dates) dates.push_back(format_date(d));
    nlohmann::json header = {
        {"split", to_string(report.split)},
        {"per_person_mode", to_string(report.mode)},
        {"per_person_definition", report.mode == LossMode::verbatim ? "|sum(pred - actual)| / sum(actual)"
                                                                    : "sum(|pred - actual|) / sum(actual)"},
        {"per_country_definition", "reconstructed: mean over nodes with actual > 0 of |pred - actual| / actual"},
        {"aggregation", "arithmetic mean of daily values"},
    };
    for (const auto& [k, v] : report.meta.items()) header[k] = v;
    nlohmann::json j = {{"header", std::move(header)},
                        {"nodes", report.nodes},
                        {"dates", std::move(dates)},
                        {"lag", summary_json(report.lag)}};
    if (report.model) j["model"] = summary_json(*report.model);
    if (const auto ratio = report.model_to_lag_ratio()) j["model_to_lag_ratio"] = *ratio;
    return j;
}

void write_daily_csv(std::ostream& out, const EvalReport& report) {
    out << "date,forecaster,metric,value\n";
    for (std::size_t t = 0; t < report.dates.size(); ++t) {
        const std::string date = format_date(report.dates[t]);
        for_each_forecaster(report, [&](const char* name, const MetricSummary& s) {
            out << date << ',' << name << ",per_person_mase," << number(s.daily_per_person.at(t)) << '\n';
            out << date << ',' << name << ",per_country_mase," << number(s.daily_per_country.at(t)) << '\n';
        });
    }
}

void write_missed_csv(std::ostream& out, const EvalReport& report) {
    out << "node,forecaster,missed_fraction\n";
    for_each_forecaster(report, [&](const char* name, const MetricSummary& s) {
        for (std::size_t i = 0; i < report.nodes.size(); ++i) {
            out << csv::escape(report.nodes[i]) << ',' << name << ','
                << (s.missed.at(i) ? number(*s.missed[i]) : std::string("NA")) << '\n';
        }
    });
}

void write_table_csv(std::ostream& out, const EvalReport& report) {
    out << "forecaster,per_person_mase,per_country_mase\n";
    for_each_forecaster(report, [&](const char* name, const MetricSummary& s) {
        out << name << ',' << number(s.per_person) << ',' << number(s.per_country) << '\n';
    });
}

}  // namespace glstm
