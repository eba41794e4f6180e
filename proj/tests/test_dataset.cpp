#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "chfkit/dataset.hpp"
#include "oracles.hpp"

using namespace chfkit;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / name;
}

void write_text(const fs::path& p, const std::string& body) {
  std::ofstream f(p);
  f << body;
}

}  // namespace

TEST_CASE("load_chf_csv parses a minimal well-formed file") {
  const auto p = temp_file("chfkit_min.csv");
  write_text(p,
             "D_m,L_m,P_kPa,G_kgm2s,Tin_C,X_out,dHin_kJkg,CHF_kWm2\n"
             "0.008,2.0,10000,3000,200,0.2,150,1500\n");
  Dataset ds = load_chf_csv(p);
  REQUIRE(ds.size() == 1);
  CHECK(ds.records[0].pressure_kpa == 10000.0);
  CHECK(ds.records[0].chf == 1500.0);
}

TEST_CASE("load_chf_csv maps columns by header name in any order") {
  const auto p = temp_file("chfkit_reorder.csv");
  write_text(p,
             "# comment line\n"
             "CHF_kWm2,D_m,L_m,P_kPa,G_kgm2s,Tin_C,X_out,dHin_kJkg\n"
             "1500,0.008,2.0,10000,3000,200,0.2,150\n");
  Dataset ds = load_chf_csv(p);
  REQUIRE(ds.size() == 1);
  CHECK(ds.records[0].chf == 1500.0);
  CHECK(ds.records[0].diameter_m == 0.008);
}

TEST_CASE("load_chf_csv rejects NaN cells with the 1-based row index") {
  const auto p = temp_file("chfkit_nan.csv");
  write_text(p,
             "D_m,L_m,P_kPa,G_kgm2s,Tin_C,X_out,dHin_kJkg,CHF_kWm2\n"
             "0.008,2.0,10000,3000,200,0.2,150,1500\n"
             "0.008,2.0,10000,3000,200,0.2,150,NaN\n");
  try {
    load_chf_csv(p);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("load_chf_csv names the missing column") {
  const auto p = temp_file("chfkit_missing.csv");
  write_text(p,
             "D_m,L_m,P_kPa,G_kgm2s,Tin_C,dHin_kJkg,CHF_kWm2\n"
             "0.008,2.0,10000,3000,200,150,1500\n");
  try {
    load_chf_csv(p);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("X_out") != std::string::npos);
  }
}

TEST_CASE("load_chf_csv rejects empty files and invariant violations") {
  const auto p = temp_file("chfkit_empty.csv");
  write_text(p, "");
  CHECK_THROWS_AS(load_chf_csv(p), DataError);

  write_text(p,
             "D_m,L_m,P_kPa,G_kgm2s,Tin_C,X_out,dHin_kJkg,CHF_kWm2\n"
             "0.008,2.0,10000,3000,200,0.2,150,-5\n");
  CHECK_THROWS_AS(load_chf_csv(p), DataError);  // chf must be > 0
}

TEST_CASE("csv round trip reproduces records bit-exactly") {
  Dataset ds = synthetic_chf(200, 99, 3.0);
  const auto p = temp_file("chfkit_roundtrip.csv");
  write_chf_csv(ds, p);
  Dataset back = load_chf_csv(p);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) CHECK(back.records[i] == ds.records[i]);
}

TEST_CASE("standardize matches the hand case [1,3] -> [-1,1]") {
  Dataset ds;
  // Build a 2-record set whose CHF column is {1, 3}; other columns vary too.
  for (int i = 0; i < 2; ++i) {
    ChfRecord r{0.008 + 0.001 * i, 2.0 + i, 10000.0 + i, 3000.0 + i,
                200.0 + i, 0.2 + 0.1 * i, 150.0 + i, 1.0 + 2.0 * i};
    ds.records.push_back(r);
  }
  auto [table, scaler] = standardize(ds);
  CHECK(scaler.mean[7] == Catch::Approx(2.0));
  CHECK(scaler.stddev[7] == Catch::Approx(1.0));  // population convention
  CHECK(table(0, 7) == Catch::Approx(-1.0));
  CHECK(table(1, 7) == Catch::Approx(1.0));
}

TEST_CASE("standardize output has mean 0 and std 1, and round-trips") {
  Dataset ds = synthetic_chf(500, 3);
  auto [table, scaler] = standardize(ds);
  for (int c = 0; c < kNumColumns; ++c) {
    const double mean = table.col(c).mean();
    const double sd = std::sqrt(table.col(c).array().square().mean() - mean * mean);
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(sd - 1.0) < 1e-9);
  }
  Eigen::MatrixXd back = destandardize(table, scaler);
  Eigen::MatrixXd orig = to_matrix(ds);
  for (Eigen::Index i = 0; i < orig.rows(); ++i)
    for (Eigen::Index c = 0; c < orig.cols(); ++c)
      CHECK(std::abs(back(i, c) - orig(i, c)) <= 1e-9 * std::abs(orig(i, c)));
}

TEST_CASE("standardizing an already-standardized column is a no-op") {
  Dataset ds = synthetic_chf(300, 4);
  auto [table, scaler] = standardize(ds);
  // Re-fit on the standardized values via a second pass over column 7.
  const double mean = table.col(7).mean();
  const double sd = std::sqrt(table.col(7).array().square().mean() - mean * mean);
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    const double again = (table(i, 7) - mean) / sd;
    CHECK(again == Catch::Approx(table(i, 7)).margin(1e-9));
  }
}

TEST_CASE("standardize rejects zero-variance columns by name") {
  Dataset ds;
  for (int i = 0; i < 5; ++i) {
    ChfRecord r{0.008, 2.0 + i, 10000.0 + i, 3000.0 + i, 200.0 + i,
                0.1 * i, 150.0 + i, 1000.0 + i};
    ds.records.push_back(r);  // D_m constant
  }
  try {
    standardize(ds);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("D_m") != std::string::npos);
  }
}

TEST_CASE("split gives floor sizes with the remainder in train") {
  Dataset ds = synthetic_chf(10, 5);
  SplitResult parts = split(ds, {0.8, 0.1, 0.1, 123});
  CHECK(parts.train.size() == 8);
  CHECK(parts.val.size() == 1);
  CHECK(parts.test.size() == 1);

  Dataset big = synthetic_chf(24580, 6);
  SplitResult big_parts = split(big, {0.8, 0.1, 0.1, 123});
  CHECK(big_parts.test.size() == 2458);
  CHECK(big_parts.val.size() == 2458);
  CHECK(big_parts.train.size() == 24580 - 2 * 2458);
}

TEST_CASE("split is deterministic and partitions the input") {
  Dataset ds = synthetic_chf(137, 8);
  SplitSpec spec{0.7, 0.15, 0.15, 77};
  SplitResult a = split(ds, spec);
  SplitResult b = split(ds, spec);
  CHECK(a.train.records == b.train.records);
  CHECK(a.val.records == b.val.records);
  CHECK(a.test.records == b.test.records);

  // Disjoint and exhaustive: multiset of all parts equals the input.
  std::vector<ChfRecord> all;
  for (const auto* part : {&a.train, &a.val, &a.test})
    all.insert(all.end(), part->records.begin(), part->records.end());
  REQUIRE(all.size() == ds.size());
  auto key = [](const ChfRecord& r) {
    return std::make_tuple(r.diameter_m, r.heated_length_m, r.pressure_kpa, r.mass_flux,
                           r.inlet_temp_c, r.outlet_quality, r.inlet_enthalpy, r.chf);
  };
  std::sort(all.begin(), all.end(), [&](auto& x, auto& y) { return key(x) < key(y); });
  std::vector<ChfRecord> orig = ds.records;
  std::sort(orig.begin(), orig.end(), [&](auto& x, auto& y) { return key(x) < key(y); });
  CHECK(all == orig);
}

TEST_CASE("split rejects fractions that do not sum to 1") {
  Dataset ds = synthetic_chf(20, 9);
  CHECK_THROWS_AS(split(ds, {0.8, 0.1, 0.2, 1}), DataError);
}

TEST_CASE("synthetic_chf is deterministic and honors the closed form") {
  Dataset a = synthetic_chf(5, 7);
  Dataset b = synthetic_chf(5, 7);
  CHECK(a.records == b.records);

  Dataset c = synthetic_chf(5, 8);
  CHECK(a.records != c.records);

  // Noise-free CHF equals an independent evaluation of the documented form.
  for (const ChfRecord& r : a.records) {
    const double expected = oracles::synthetic_chf_reference(
        r.heated_length_m, r.pressure_kpa, r.mass_flux, r.outlet_quality, r.inlet_enthalpy);
    CHECK(r.chf == Catch::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("synthetic_chf records satisfy every invariant") {
  Dataset ds = synthetic_chf(1000, 11, 5.0);
  for (const ChfRecord& r : ds.records) CHECK(record_violation(r) == nullptr);
  CHECK_THROWS_AS(synthetic_chf(0, 1), DataError);
}
