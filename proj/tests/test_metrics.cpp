#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <vector>

#include "chfkit/dataset.hpp"
#include "chfkit/metrics.hpp"
#include "chfkit/rng.hpp"
#include "oracles.hpp"

using namespace chfkit;

TEST_CASE("relative_std: hand cases") {
  CHECK(relative_std({150.0, 0.0, 3}) == 0.0);
  CHECK(relative_std({200.0, 1.0, 5}) == Catch::Approx(0.5));
  CHECK_THROWS_AS(relative_std({0.0, 1.0, 5}), DataError);
}

TEST_CASE("relative_std is invariant under positive rescaling") {
  std::vector<double> samples = {90.0, 100.0, 115.0, 104.0};
  const double base = relative_std(sample_stats(samples));
  for (double scale : {0.25, 3.0, 1e4}) {
    std::vector<double> scaled = samples;
    for (double& v : scaled) v *= scale;
    CHECK(relative_std(sample_stats(scaled)) == Catch::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("sample_stats of identical values has sigma exactly zero") {
  std::vector<double> same(17, 123.456);
  SampleStats s = sample_stats(same);
  CHECK(s.mu_samples == 123.456);
  CHECK(s.sigma_samples == 0.0);
  CHECK(s.n == 17);
}

TEST_CASE("error_report: perfect prediction") {
  std::vector<double> truth = {100.0, 250.0, 97.0};
  ErrorReport r = error_report(truth, truth);
  CHECK(r.mean_abs_rel_error_pct == 0.0);
  CHECK(r.max_abs_rel_error_pct == 0.0);
  CHECK(r.std_abs_rel_error_pct == 0.0);
  CHECK(r.frac_above_10pct == 0.0);
  CHECK(r.r_squared == 1.0);
}

TEST_CASE("error_report: hand case with the strict tie rule") {
  std::vector<double> truth = {100.0, 200.0};
  std::vector<double> pred = {110.0, 190.0};
  ErrorReport r = error_report(pred, truth);
  CHECK(r.mean_abs_rel_error_pct == Catch::Approx(7.5));
  CHECK(r.max_abs_rel_error_pct == Catch::Approx(10.0));
  CHECK(r.std_abs_rel_error_pct == Catch::Approx(2.5));
  CHECK(r.frac_above_10pct == 0.0);  // 10% is not > 10%
  CHECK(r.r_squared == Catch::Approx(0.96));
}

TEST_CASE("error_report errors on zero truth entries with the index") {
  std::vector<double> truth = {100.0, 0.0};
  std::vector<double> pred = {100.0, 5.0};
  try {
    error_report(pred, truth);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("index 1") != std::string::npos);
  }
}

TEST_CASE("error_report is permutation-invariant over paired entries") {
  Rng rng(41);
  std::vector<double> truth(40), pred(40);
  for (int i = 0; i < 40; ++i) {
    truth[static_cast<std::size_t>(i)] = 100.0 + 50.0 * rng.uniform();
    pred[static_cast<std::size_t>(i)] =
        truth[static_cast<std::size_t>(i)] * (1.0 + 0.2 * rng.normal());
  }
  ErrorReport base = error_report(pred, truth);

  std::vector<std::size_t> perm(40);
  for (std::size_t i = 0; i < 40; ++i) perm[i] = i;
  std::mt19937 shuffler(7);
  std::shuffle(perm.begin(), perm.end(), shuffler);
  std::vector<double> t2(40), p2(40);
  for (std::size_t i = 0; i < 40; ++i) {
    t2[i] = truth[perm[i]];
    p2[i] = pred[perm[i]];
  }
  ErrorReport shuffled = error_report(p2, t2);
  CHECK(shuffled.mean_abs_rel_error_pct ==
        Catch::Approx(base.mean_abs_rel_error_pct).epsilon(1e-12));
  CHECK(shuffled.max_abs_rel_error_pct == base.max_abs_rel_error_pct);
  CHECK(shuffled.std_abs_rel_error_pct ==
        Catch::Approx(base.std_abs_rel_error_pct).epsilon(1e-12));
  CHECK(shuffled.frac_above_10pct == base.frac_above_10pct);
  CHECK(shuffled.r_squared == Catch::Approx(base.r_squared).epsilon(1e-12));
}

TEST_CASE("error_report is invariant under a common positive rescaling") {
  Rng rng(43);
  std::vector<double> truth(25), pred(25);
  for (std::size_t i = 0; i < 25; ++i) {
    truth[i] = 500.0 + 400.0 * rng.uniform();
    pred[i] = truth[i] * (1.0 + 0.15 * rng.normal());
  }
  ErrorReport base = error_report(pred, truth);
  std::vector<double> t2 = truth, p2 = pred;
  for (std::size_t i = 0; i < 25; ++i) {
    t2[i] *= 7.25;
    p2[i] *= 7.25;
  }
  ErrorReport scaled = error_report(p2, t2);
  CHECK(scaled.mean_abs_rel_error_pct ==
        Catch::Approx(base.mean_abs_rel_error_pct).epsilon(1e-12));
  CHECK(scaled.max_abs_rel_error_pct ==
        Catch::Approx(base.max_abs_rel_error_pct).epsilon(1e-12));
  CHECK(scaled.std_abs_rel_error_pct ==
        Catch::Approx(base.std_abs_rel_error_pct).epsilon(1e-12));
  CHECK(scaled.frac_above_10pct == base.frac_above_10pct);
  CHECK(scaled.r_squared == Catch::Approx(base.r_squared).epsilon(1e-12));
}

TEST_CASE("pearson: self, anti, and independent recomputation") {
  Rng rng(11);
  std::vector<double> xs(60), ys(60), neg(60);
  for (std::size_t i = 0; i < 60; ++i) {
    xs[i] = rng.normal();
    ys[i] = 0.4 * xs[i] + rng.normal();
    neg[i] = -xs[i];
  }
  CHECK(pearson(xs, xs) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(pearson(xs, neg) == Catch::Approx(-1.0).epsilon(1e-12));

  // Re-evaluate the product-moment formula with long double accumulators.
  long double sx = 0, sy = 0;
  for (std::size_t i = 0; i < 60; ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const long double mx = sx / 60, my = sy / 60;
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < 60; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const double expected = static_cast<double>(sxy / std::sqrt(sxx * syy));
  CHECK(pearson(xs, ys) == Catch::Approx(expected).margin(1e-12));

  std::vector<double> flat(60, 3.0);
  CHECK_THROWS_AS(pearson(flat, ys), DataError);
}

TEST_CASE("correlation_table: perfect dependence and oracle monotonicity signs") {
  Dataset ds = synthetic_chf(4000, 123);
  Eigen::MatrixXd m = to_matrix(ds);
  Eigen::MatrixXd conditions = m.leftCols(7);
  std::vector<double> chf(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) chf[static_cast<std::size_t>(i)] = m(i, 7);

  // CHF equal to one condition column correlates perfectly with it.
  std::vector<double> fake(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) fake[static_cast<std::size_t>(i)] = m(i, 3);
  CHECK(correlation_table(conditions, fake)[3] == Catch::Approx(1.0).epsilon(1e-12));

  // Signs of the generator's documented monotone dependencies: L down,
  // P up, G up, X down, dHin up.
  auto corr = correlation_table(conditions, chf);
  CHECK(corr[1] < 0.0);
  CHECK(corr[2] > 0.0);
  CHECK(corr[3] > 0.0);
  CHECK(corr[5] < 0.0);
  CHECK(corr[6] > 0.0);
}
