#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphlstm/autodiff.hpp"
#include "graphlstm/dataset.hpp"

namespace glstm {

/// How per-person MASE combines node errors.
enum class LossMode {
    verbatim,  // |sum_i (pred_i - actual_i)| / sum_i actual_i
    strict,    // sum_i |pred_i - actual_i| / sum_i actual_i
};
const char* to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& text);

double per_person_mase(std::span<const double> pred, std::span<const double> actual, LossMode mode = LossMode::verbatim);

/// Mean over nodes with actual > 0 of |pred - actual| / actual.
double per_country_mase(std::span<const double> pred, std::span<const double> actual);

/// Per node: sum_t max(0, actual - pred) / sum_t actual. Nodes whose actual total is zero
/// have no defined fraction and yield nullopt. Both inputs are [T][N].
std::vector<std::optional<double>> missed_fraction(const std::vector<std::vector<double>>& preds,
                                                   const std::vector<std::vector<double>>& actuals);

/// Last input day's values of feature 0; window is [L x N x K].
std::vector<double> lag_baseline(const ad::Tensor& window);

/// Differentiable per-person MASE of a prediction vector against fixed targets.
ad::Var per_person_loss(ad::Var pred, std::span<const double> actual, LossMode mode = LossMode::verbatim);

/// Daily and aggregate metrics for one forecaster over one evaluation window.
struct MetricSummary {
    std::vector<double> daily_per_person;
    std::vector<double> daily_per_country;
    double per_person = 0.0;   // mean of daily values
    double per_country = 0.0;  // mean of daily values
    std::vector<std::optional<double>> missed;
};

/// Predictions and actuals are [T][N] in case units.
MetricSummary summarize(const std::vector<std::vector<double>>& preds, const std::vector<std::vector<double>>& actuals,
                        LossMode mode = LossMode::verbatim);

struct EvalReport {
    Split split = Split::test;
    LossMode mode = LossMode::verbatim;
    std::vector<std::string> nodes;
    std::vector<Date> dates;
    std::optional<MetricSummary> model;  // absent in lag-only evaluations
    MetricSummary lag;
    nlohmann::json meta = nlohmann::json::object();  // copied into the JSON header

    /// Model per-person MASE divided by lag per-person MASE.
    std::optional<double> model_to_lag_ratio() const;
};

nlohmann::json report_to_json(const EvalReport& report);
/// `date,forecaster,metric,value`
void write_daily_csv(std::ostream& out, const EvalReport& report);
/// `node,forecaster,missed_fraction` with `NA` for undefined fractions.
void write_missed_csv(std::ostream& out, const EvalReport& report);
/// `forecaster,per_person_mase,per_country_mase`
void write_table_csv(std::ostream& out, const EvalReport& report);

}  // namespace glstm
