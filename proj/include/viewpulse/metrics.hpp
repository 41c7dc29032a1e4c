#pragma once

#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "viewpulse/num.hpp"

namespace viewpulse::metrics {

struct MetricReport {
  Eigen::Index n = 0;
  double mae = 0;
  double rmse = 0;
  double rmsle = 0;
  double srcc = 0;
  double composite = 0;
  long rmsle_clamps = 0;  // how often 1+x fell below the log floor
};

double mae(const Vec& pred, const Vec& truth);
double rmse(const Vec& pred, const Vec& truth);

/// Log-scale error with 1+x clamped at 1e-9 so standardized (negative)
/// values stay finite. clamp_count, when given, reports how many entries hit
/// the clamp.
double rmsle(const Vec& pred, const Vec& truth, long* clamp_count = nullptr);

double pcc(const Vec& a, const Vec& b);
double cosine(const Vec& a, const Vec& b);

/// Spearman: Pearson over fractional (average) ranks; ties share the mean of
/// their rank positions.
double srcc(const Vec& a, const Vec& b);

double composite(double srcc_value, double mae_value, double rmse_value,
                 double rmsle_value);
double composite(const MetricReport& report);

MetricReport report(const Vec& pred, const Vec& truth);

struct CorrelationRow {
  std::string name;
  double pcc = 0;
  double cs = 0;
  double srcc = 0;
  bool defined = true;
};

struct CorrelationTable {
  std::vector<CorrelationRow> rows;
};

/// One row per indicator against the attractiveness series. Inputs are
/// expected to be standardized already. An undefined correlation marks the
/// row instead of failing the table.
CorrelationTable correlation_table(
    const Vec& attractiveness,
    std::span<const std::pair<std::string, Vec>> indicators);

// CSV surfaces, fixed column orders.
void write_correlation_csv(const CorrelationTable& table, std::ostream& out);
void write_metric_csv_header(std::ostream& out);
void write_metric_csv_row(const MetricReport& report, std::ostream& out);

}  // namespace viewpulse::metrics
