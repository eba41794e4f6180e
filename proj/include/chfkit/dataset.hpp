#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "chfkit/errors.hpp"
#include "chfkit/rng.hpp"

namespace chfkit {

inline constexpr int kNumConditions = 7;
inline constexpr int kNumColumns = 8;  // 7 conditions + CHF

/// Canonical column order: D, L, P, G, Tin, X, dHin, CHF. Unit-bearing names
/// so a file in the wrong units fails loudly at the schema level.
inline constexpr std::array<const char*, kNumColumns> kColumnNames = {
    "D_m", "L_m", "P_kPa", "G_kgm2s", "Tin_C", "X_out", "dHin_kJkg", "CHF_kWm2"};

/// One CHF measurement: seven thermal-hydraulic conditions plus the measured
/// critical heat flux.
struct ChfRecord {
  double diameter_m = 0.0;       // test section diameter [m]
  double heated_length_m = 0.0;  // heated length [m]
  double pressure_kpa = 0.0;     // pressure [kPa]
  double mass_flux = 0.0;        // mass flux [kg/(m^2 s)]
  double inlet_temp_c = 0.0;     // inlet temperature [C]
  double outlet_quality = 0.0;   // outlet equilibrium quality [-]
  double inlet_enthalpy = 0.0;   // inlet enthalpy [kJ/kg]
  double chf = 0.0;              // critical heat flux [kW/m^2]

  friend bool operator==(const ChfRecord&, const ChfRecord&) = default;
};

inline double get_column(const ChfRecord& r, int c) {
  switch (c) {
    case 0: return r.diameter_m;
    case 1: return r.heated_length_m;
    case 2: return r.pressure_kpa;
    case 3: return r.mass_flux;
    case 4: return r.inlet_temp_c;
    case 5: return r.outlet_quality;
    case 6: return r.inlet_enthalpy;
    case 7: return r.chf;
    default: throw DataError("column index out of range: " + std::to_string(c));
  }
}

inline void set_column(ChfRecord& r, int c, double v) {
  switch (c) {
    case 0: r.diameter_m = v; break;
    case 1: r.heated_length_m = v; break;
    case 2: r.pressure_kpa = v; break;
    case 3: r.mass_flux = v; break;
    case 4: r.inlet_temp_c = v; break;
    case 5: r.outlet_quality = v; break;
    case 6: r.inlet_enthalpy = v; break;
    case 7: r.chf = v; break;
    default: throw DataError("column index out of range: " + std::to_string(c));
  }
}

/// Returns the name of the first violated record invariant, or nullptr.
inline const char* record_violation(const ChfRecord& r) {
  for (int c = 0; c < kNumColumns; ++c) {
    if (!std::isfinite(get_column(r, c))) return "non-finite value";
  }
  if (!(r.diameter_m > 0.0)) return "D_m must be > 0";
  if (!(r.heated_length_m > 0.0)) return "L_m must be > 0";
  if (!(r.pressure_kpa > 0.0)) return "P_kPa must be > 0";
  if (!(r.mass_flux >= 0.0)) return "G_kgm2s must be >= 0";
  if (!(r.chf > 0.0)) return "CHF_kWm2 must be > 0";
  return nullptr;
}

/// Ordered collection of records with a provenance label.
struct Dataset {
  std::vector<ChfRecord> records;
  std::string source_tag;

  std::size_t size() const { return records.size(); }
};

/// Per-column z-score parameters, fit with the population std (divide by n).
struct ScalerParams {
  std::array<double, kNumColumns> mean{};
  std::array<double, kNumColumns> stddev{};

  friend bool operator==(const ScalerParams&, const ScalerParams&) = default;
};

struct SplitSpec {
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t shuffle_seed = 0;
};

struct SplitResult {
  Dataset train, val, test;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last && !s.empty();
}

}  // namespace detail

/// Loads a CHF CSV. The header must name all eight canonical columns (any
/// order); unknown columns are ignored; lines starting with '#' and blank
/// lines are skipped. Any malformed or invariant-violating row aborts the
/// load -- silently dropped rows would corrupt downstream split sizes.
inline Dataset load_chf_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path.string());

  std::string line;
  // Header: first non-comment, non-blank line.
  bool have_header = false;
  std::vector<std::string_view> header_fields;
  std::string header_line;
  while (std::getline(in, line)) {
    std::string_view t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    header_line = std::string(t);
    have_header = true;
    break;
  }
  if (!have_header) throw DataError("empty dataset file: " + path.string());

  header_fields = detail::split_fields(header_line);
  std::array<int, kNumColumns> col_of{};  // canonical column -> file field index
  col_of.fill(-1);
  for (std::size_t f = 0; f < header_fields.size(); ++f) {
    for (int c = 0; c < kNumColumns; ++c) {
      if (header_fields[f] == kColumnNames[c]) {
        if (col_of[c] != -1)
          throw DataError(std::string("duplicate column in header: ") + kColumnNames[c]);
        col_of[c] = static_cast<int>(f);
      }
    }
  }
  for (int c = 0; c < kNumColumns; ++c) {
    if (col_of[c] == -1)
      throw DataError(std::string("missing column in header: ") + kColumnNames[c]);
  }

  Dataset ds;
  ds.source_tag = path.string();
  std::size_t row = 0;  // 1-based data-row index, header and comments excluded
  while (std::getline(in, line)) {
    std::string_view t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    ++row;
    auto fields = detail::split_fields(t);
    if (fields.size() < header_fields.size()) {
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(header_fields.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    ChfRecord rec;
    for (int c = 0; c < kNumColumns; ++c) {
      double v = 0.0;
      std::string_view cell = fields[static_cast<std::size_t>(col_of[c])];
      if (!detail::parse_double(cell, v)) {
        throw DataError("row " + std::to_string(row) + ": non-numeric value '" +
                        std::string(cell) + "' in column " + kColumnNames[c]);
      }
      if (!std::isfinite(v)) {
        throw DataError("row " + std::to_string(row) + ": non-finite value in column " +
                        std::string(kColumnNames[c]));
      }
      set_column(rec, c, v);
    }
    if (const char* why = record_violation(rec)) {
      throw DataError("row " + std::to_string(row) + ": " + why);
    }
    ds.records.push_back(rec);
  }
  if (ds.records.empty()) throw DataError("dataset has no data rows: " + path.string());
  return ds;
}

/// Writes a dataset in the canonical column order. Values are printed with
/// 17 significant digits so a load/write round trip is bit-exact.
inline void write_chf_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path.string());
  if (!ds.source_tag.empty()) out << "# source: " << ds.source_tag << "\n";
  for (int c = 0; c < kNumColumns; ++c) out << (c ? "," : "") << kColumnNames[c];
  out << "\n";
  char buf[32];
  for (const ChfRecord& r : ds.records) {
    for (int c = 0; c < kNumColumns; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", get_column(r, c));
      out << (c ? "," : "") << buf;
    }
    out << "\n";
  }
  if (!out) throw DataError("write failed: " + path.string());
}

/// Dataset as an n x 8 matrix, columns in canonical order (CHF last).
inline Eigen::MatrixXd to_matrix(const Dataset& ds) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(ds.size()), kNumColumns);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (int c = 0; c < kNumColumns; ++c)
      m(i, c) = get_column(ds.records[static_cast<std::size_t>(i)], c);
  return m;
}

/// Fits per-column z-score parameters on `ds` (population std, divide by n).
inline ScalerParams fit_scaler(const Dataset& ds) {
  if (ds.records.empty()) throw DataError("cannot fit scaler on empty dataset");
  const double n = static_cast<double>(ds.size());
  ScalerParams p;
  for (int c = 0; c < kNumColumns; ++c) {
    double sum = 0.0;
    for (const ChfRecord& r : ds.records) sum += get_column(r, c);
    const double mean = sum / n;
    double ss = 0.0;
    for (const ChfRecord& r : ds.records) {
      const double d = get_column(r, c) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / n);
    if (!(sd > 0.0)) {
      throw DataError(std::string("zero-variance column: ") + kColumnNames[c]);
    }
    p.mean[static_cast<std::size_t>(c)] = mean;
    p.stddev[static_cast<std::size_t>(c)] = sd;
  }
  return p;
}

/// Applies an already-fit scaler; returns an n x 8 standardized table.
inline Eigen::MatrixXd apply_scaler(const Dataset& ds, const ScalerParams& p) {
  Eigen::MatrixXd m = to_matrix(ds);
  for (int c = 0; c < kNumColumns; ++c) {
    m.col(c) = (m.col(c).array() - p.mean[static_cast<std::size_t>(c)]) /
               p.stddev[static_cast<std::size_t>(c)];
  }
  return m;
}

/// Fit-and-transform in one step.
inline std::pair<Eigen::MatrixXd, ScalerParams> standardize(const Dataset& ds) {
  ScalerParams p = fit_scaler(ds);
  return {apply_scaler(ds, p), p};
}

inline Eigen::MatrixXd destandardize(const Eigen::MatrixXd& table, const ScalerParams& p) {
  Eigen::MatrixXd m = table;
  for (int c = 0; c < kNumColumns && c < m.cols(); ++c) {
    m.col(c) = m.col(c).array() * p.stddev[static_cast<std::size_t>(c)] +
               p.mean[static_cast<std::size_t>(c)];
  }
  return m;
}

inline double destandardize_chf(double standardized, const ScalerParams& p) {
  return standardized * p.stddev[kNumColumns - 1] + p.mean[kNumColumns - 1];
}

/// Standardizes a physical 7-vector of conditions (canonical order).
inline Eigen::VectorXd standardize_conditions(const Eigen::VectorXd& c, const ScalerParams& p) {
  if (c.size() != kNumConditions)
    throw DataError("expected 7 conditions, got " + std::to_string(c.size()));
  Eigen::VectorXd out(kNumConditions);
  for (int i = 0; i < kNumConditions; ++i) {
    if (!std::isfinite(c[i])) throw DataError("non-finite condition value");
    out[i] = (c[i] - p.mean[static_cast<std::size_t>(i)]) / p.stddev[static_cast<std::size_t>(i)];
  }
  return out;
}

/// Deterministic shuffled split. Sizes are floor(n * fraction) for val and
/// test with the remainder assigned to train; partitions are disjoint and
/// exhaustive in shuffled order (train block first, then val, then test).
inline SplitResult split(const Dataset& ds, const SplitSpec& spec) {
  const double sum = spec.train_fraction + spec.val_fraction + spec.test_fraction;
  if (!(spec.train_fraction > 0.0 && spec.val_fraction > 0.0 && spec.test_fraction > 0.0))
    throw DataError("split fractions must be positive");
  if (std::abs(sum - 1.0) > 1e-12)
    throw DataError("split fractions must sum to 1");
  const std::size_t n = ds.size();
  if (n < 10) throw DataError("dataset too small to split (need >= 10 records)");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(spec.shuffle_seed);
  for (std::size_t i = n - 1; i > 0; --i) {  // Fisher-Yates
    const std::size_t j = rng.below(i + 1);
    std::swap(order[i], order[j]);
  }

  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.val_fraction));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.test_fraction));
  const std::size_t n_train = n - n_val - n_test;

  SplitResult out;
  out.train.source_tag = ds.source_tag + " [train]";
  out.val.source_tag = ds.source_tag + " [val]";
  out.test.source_tag = ds.source_tag + " [test]";
  out.train.records.reserve(n_train);
  out.val.records.reserve(n_val);
  out.test.records.reserve(n_test);
  for (std::size_t i = 0; i < n_train; ++i) out.train.records.push_back(ds.records[order[i]]);
  for (std::size_t i = 0; i < n_val; ++i) out.val.records.push_back(ds.records[order[n_train + i]]);
  for (std::size_t i = 0; i < n_test; ++i) out.test.records.push_back(ds.records[order[n_train + n_val + i]]);
  return out;
}

/// Closed-form CHF used by the synthetic generator. Monotone in G, P, dHin
/// (increasing) and in L, X (decreasing); constant in D and Tin. Constants:
/// a = 30 kW s^0.5 / (m kg^0.5), b = 0.5, c = 4 m, d = 2 m^2/s.
inline double synthetic_chf_value(double /*diameter_m*/, double heated_length_m,
                                  double pressure_kpa, double mass_flux,
                                  double /*inlet_temp_c*/, double outlet_quality,
                                  double inlet_enthalpy) {
  return 30.0 * std::sqrt(mass_flux) * (1.0 + 0.5 * pressure_kpa / 10000.0) *
             (1.0 - outlet_quality) * std::exp(-heated_length_m / 4.0) +
         2.0 * inlet_enthalpy;
}

/// Desk-scale stand-in for the real measurement set. Conditions are drawn
/// uniformly from the documented ranges below; CHF follows
/// synthetic_chf_value plus optional Gaussian noise (noise_std in kW/m^2,
/// redrawn if it would push CHF nonpositive). Deterministic given seed.
///
/// Ranges: D [0.002, 0.02] m, L [0.1, 5] m, P [100, 20000] kPa,
/// G [500, 8000] kg/(m^2 s), Tin [10, 340] C, X [-0.5, 0.9], dHin [5, 400] kJ/kg.
inline Dataset synthetic_chf(int n, std::uint64_t seed, double noise_std = 0.0) {
  if (n < 1) throw DataError("synthetic dataset size must be >= 1");
  Dataset ds;
  ds.source_tag = "synthetic(n=" + std::to_string(n) + ",seed=" + std::to_string(seed) + ")";
  ds.records.reserve(static_cast<std::size_t>(n));
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    ChfRecord r;
    r.diameter_m = rng.uniform(0.002, 0.02);
    r.heated_length_m = rng.uniform(0.1, 5.0);
    r.pressure_kpa = rng.uniform(100.0, 20000.0);
    r.mass_flux = rng.uniform(500.0, 8000.0);
    r.inlet_temp_c = rng.uniform(10.0, 340.0);
    r.outlet_quality = rng.uniform(-0.5, 0.9);
    r.inlet_enthalpy = rng.uniform(5.0, 400.0);
    const double base = synthetic_chf_value(r.diameter_m, r.heated_length_m, r.pressure_kpa,
                                            r.mass_flux, r.inlet_temp_c, r.outlet_quality,
                                            r.inlet_enthalpy);
    double chf = base;
    if (noise_std > 0.0) {
      chf = base + noise_std * rng.normal();
      while (chf <= 0.0) chf = base + noise_std * rng.normal();
    }
    r.chf = chf;
    if (const char* why = record_violation(r)) {
      throw NumericError(std::string("synthetic record violates invariant: ") + why);
    }
    ds.records.push_back(r);
  }
  return ds;
}

}  // namespace chfkit
