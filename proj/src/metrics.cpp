#include "viewpulse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace viewpulse::metrics {

namespace {

constexpr double kLogFloor = 1e-9;

void require_pair(const char* op, const Vec& a, const Vec& b,
                  Eigen::Index min_len) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": length mismatch " +
                     std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  if (a.size() < min_len) {
    throw ShapeError(std::string(op) + ": need at least " +
                     std::to_string(min_len) + " samples, got " +
                     std::to_string(a.size()));
  }
}

std::string format_coeff(double v, bool defined) {
  if (!defined) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double mae(const Vec& pred, const Vec& truth) {
  require_pair("mae", pred, truth, 1);
  return (pred - truth).cwiseAbs().mean();
}

double rmse(const Vec& pred, const Vec& truth) {
  require_pair("rmse", pred, truth, 1);
  return std::sqrt((pred - truth).squaredNorm() / double(pred.size()));
}

double rmsle(const Vec& pred, const Vec& truth, long* clamp_count) {
  require_pair("rmsle", pred, truth, 1);
  long clamps = 0;
  double acc = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    double p = 1.0 + pred[i];
    double y = 1.0 + truth[i];
    if (p < kLogFloor) { p = kLogFloor; ++clamps; }
    if (y < kLogFloor) { y = kLogFloor; ++clamps; }
    const double d = std::log(p) - std::log(y);
    acc += d * d;
  }
  if (clamp_count) *clamp_count = clamps;
  return std::sqrt(acc / double(pred.size()));
}

double pcc(const Vec& a, const Vec& b) {
  require_pair("pcc", a, b, 2);
  const double n = double(a.size());
  const Vec ca = a.array() - a.mean();
  const Vec cb = b.array() - b.mean();
  const double sa = std::sqrt(ca.squaredNorm() / n);
  const double sb = std::sqrt(cb.squaredNorm() / n);
  if (sa == 0.0 || sb == 0.0) {
    throw UndefinedCorrelationError("pcc: constant series");
  }
  const double cov = ca.dot(cb) / n;
  return std::clamp(cov / (sa * sb), -1.0, 1.0);
}

double cosine(const Vec& a, const Vec& b) {
  require_pair("cosine", a, b, 2);
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    throw UndefinedCorrelationError("cosine: zero series");
  }
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

namespace {

Vec fractional_ranks(const Vec& v) {
  const Eigen::Index n = v.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::sort(order.begin(), order.end(),
            [&v](Eigen::Index l, Eigen::Index r) { return v[l] < v[r]; });
  Vec ranks(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    // Tied block occupies 1-based positions [i+1, j+1]; everyone gets the mean.
    const double mean_rank = double(i + j) / 2.0 + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double srcc(const Vec& a, const Vec& b) {
  require_pair("srcc", a, b, 2);
  try {
    return pcc(fractional_ranks(a), fractional_ranks(b));
  } catch (const UndefinedCorrelationError&) {
    throw UndefinedCorrelationError("srcc: all-tied series");
  }
}

double composite(double srcc_value, double mae_value, double rmse_value,
                 double rmsle_value) {
  return 3.0 * srcc_value - mae_value - rmse_value - rmsle_value;
}

double composite(const MetricReport& r) {
  return composite(r.srcc, r.mae, r.rmse, r.rmsle);
}

MetricReport report(const Vec& pred, const Vec& truth) {
  MetricReport r;
  r.n = pred.size();
  r.mae = mae(pred, truth);
  r.rmse = rmse(pred, truth);
  r.rmsle = rmsle(pred, truth, &r.rmsle_clamps);
  r.srcc = srcc(pred, truth);
  r.composite = composite(r);
  return r;
}

CorrelationTable correlation_table(
    const Vec& attractiveness,
    std::span<const std::pair<std::string, Vec>> indicators) {
  CorrelationTable table;
  table.rows.reserve(indicators.size());
  for (const auto& [name, series] : indicators) {
    require_pair("correlation_table", attractiveness, series, 2);
    CorrelationRow row;
    row.name = name;
    try {
      row.pcc = pcc(series, attractiveness);
      row.cs = cosine(series, attractiveness);
      row.srcc = srcc(series, attractiveness);
    } catch (const UndefinedCorrelationError&) {
      row.defined = false;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_correlation_csv(const CorrelationTable& table, std::ostream& out) {
  out << "name,pcc,cs,srcc\n";
  for (const CorrelationRow& row : table.rows) {
    out << row.name << ',' << format_coeff(row.pcc, row.defined) << ','
        << format_coeff(row.cs, row.defined) << ','
        << format_coeff(row.srcc, row.defined) << '\n';
  }
}

void write_metric_csv_header(std::ostream& out) {
  out << "n,mae,rmse,rmsle,srcc,composite\n";
}

void write_metric_csv_row(const MetricReport& r, std::ostream& out) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                static_cast<long long>(r.n), r.mae, r.rmse, r.rmsle, r.srcc,
                r.composite);
  out << buf;
}

}  // namespace viewpulse::metrics
