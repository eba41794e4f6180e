#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chfkit/errors.hpp"

namespace chfkit {

/// Mean and population standard deviation over repeated predictions at one
/// condition (CVAE latent samples or DNN ensemble members), physical units.
struct SampleStats {
  double mu_samples = 0.0;     // kW/m^2
  double sigma_samples = 0.0;  // kW/m^2
  int n = 0;
};

inline SampleStats sample_stats(std::span<const double> samples) {
  if (samples.empty()) throw DataError("sample_stats: empty sample set");
  double lo = samples[0], hi = samples[0], sum = 0.0;
  for (double s : samples) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
    sum += s;
  }
  const int n = static_cast<int>(samples.size());
  if (lo == hi) return {lo, 0.0, n};  // identical samples: sigma is exactly 0
  const double mu = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double s : samples) ss += (s - mu) * (s - mu);
  return {mu, std::sqrt(ss / static_cast<double>(n)), n};
}

/// sigma/mu as a percentage.
inline double relative_std(const SampleStats& stats) {
  if (stats.mu_samples == 0.0)
    throw DataError("relative_std: undefined for zero sample mean");
  return stats.sigma_samples / stats.mu_samples * 100.0;
}

/// Absolute-relative-error summary of a prediction vector against truth.
/// All error fields are percentages; the exceedance fraction uses a strict
/// > 10% rule and the std is the population convention (divide by n).
struct ErrorReport {
  double mean_abs_rel_error_pct = 0.0;
  double max_abs_rel_error_pct = 0.0;
  double std_abs_rel_error_pct = 0.0;
  double frac_above_10pct = 0.0;  // percentage of points, 0..100
  double r_squared = 0.0;
  long n = 0;
};

inline ErrorReport error_report(std::span<const double> predicted,
                                std::span<const double> truth) {
  if (predicted.size() != truth.size())
    throw DataError("error_report: length mismatch");
  if (predicted.empty()) throw DataError("error_report: empty input");
  const std::size_t n = truth.size();

  std::vector<double> err(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (truth[i] == 0.0)
      throw DataError("error_report: zero truth value at index " + std::to_string(i));
    err[i] = std::abs(predicted[i] - truth[i]) / std::abs(truth[i]) * 100.0;
  }

  ErrorReport r;
  r.n = static_cast<long>(n);
  double sum = 0.0, mx = 0.0;
  long above = 0;
  for (double e : err) {
    sum += e;
    if (e > mx) mx = e;
    if (e > 10.0) ++above;
  }
  r.mean_abs_rel_error_pct = sum / static_cast<double>(n);
  r.max_abs_rel_error_pct = mx;
  double ss = 0.0;
  for (double e : err) ss += (e - r.mean_abs_rel_error_pct) * (e - r.mean_abs_rel_error_pct);
  r.std_abs_rel_error_pct = std::sqrt(ss / static_cast<double>(n));
  r.frac_above_10pct = static_cast<double>(above) / static_cast<double>(n) * 100.0;

  double tmean = 0.0;
  for (double t : truth) tmean += t;
  tmean /= static_cast<double>(n);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ss_res += (predicted[i] - truth[i]) * (predicted[i] - truth[i]);
    ss_tot += (truth[i] - tmean) * (truth[i] - tmean);
  }
  if (!(ss_tot > 0.0)) throw DataError("error_report: zero variance in truth");
  r.r_squared = 1.0 - ss_res / ss_tot;
  return r;
}

/// Product-moment correlation.
inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DataError("pearson: length mismatch");
  if (xs.size() < 2) throw DataError("pearson: need at least 2 points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw DataError("pearson: zero variance in first argument");
  if (!(syy > 0.0)) throw DataError("pearson: zero variance in second argument");
  return sxy / std::sqrt(sxx * syy);
}

/// Correlation of each of the 7 condition columns against a CHF vector.
inline std::array<double, 7> correlation_table(const Eigen::MatrixXd& conditions,
                                               std::span<const double> chf) {
  if (conditions.cols() != 7) throw DataError("correlation_table: expected 7 columns");
  if (static_cast<std::size_t>(conditions.rows()) != chf.size())
    throw DataError("correlation_table: row count mismatch");
  std::array<double, 7> out{};
  std::vector<double> col(static_cast<std::size_t>(conditions.rows()));
  for (int c = 0; c < 7; ++c) {
    for (Eigen::Index i = 0; i < conditions.rows(); ++i)
      col[static_cast<std::size_t>(i)] = conditions(i, c);
    out[static_cast<std::size_t>(c)] = pearson(col, chf);
  }
  return out;
}

}  // namespace chfkit
