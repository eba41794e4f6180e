#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "chfkit/cvae.hpp"
#include "chfkit/dataset.hpp"
#include "chfkit/metrics.hpp"
#include "oracles.hpp"

using namespace chfkit;

namespace {

ScalerParams identity_scaler() {
  ScalerParams s;
  s.mean.fill(0.0);
  s.stddev.fill(1.0);
  return s;
}

CvaeModel random_model(int latent_dim, int hidden, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Activation> acts = {Activation::kTanh, Activation::kTanh, Activation::kTanh,
                                  Activation::kIdentity};
  CvaeModel m;
  m.latent_dim = latent_dim;
  m.encoder = init_network({8, hidden, hidden, hidden, 2 * latent_dim}, acts, rng);
  m.decoder = init_network({latent_dim + 7, hidden, hidden, hidden, 1}, acts, rng);
  m.scaler = identity_scaler();
  return m;
}

CvaeModel zero_model(int latent_dim) {
  CvaeModel m = random_model(latent_dim, 3, 0);
  for (auto* net : {&m.encoder, &m.decoder})
    for (auto& layer : net->layers) {
      layer.weights.setZero();
      layer.biases.setZero();
    }
  return m;
}

}  // namespace

TEST_CASE("encode: shape contract, determinism, zero-weight model") {
  CvaeModel m = random_model(3, 6, 21);
  Vector c = Vector::LinSpaced(7, -0.5, 0.5);
  LatentParams a = encode(m, 0.3, c);
  LatentParams b = encode(m, 0.3, c);
  REQUIRE(a.mean.size() == 3);
  REQUIRE(a.log_variance.size() == 3);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.log_variance - b.log_variance).cwiseAbs().maxCoeff() == 0.0);

  LatentParams z = encode(zero_model(2), 1.0, c);
  CHECK(z.mean.cwiseAbs().maxCoeff() == 0.0);
  CHECK(z.log_variance.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reparameterize: clamped floor collapses to the mean") {
  LatentParams lat;
  lat.mean = Vector::Constant(4, 2.5);
  lat.log_variance = Vector::Constant(4, -1e9);  // clamped to -10 -> std ~ 6.7e-3
  Rng rng(17);
  Vector z = reparameterize(lat, rng);
  CHECK((z - lat.mean).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("reparameterize: empirical moments match (0, 1) over 1e5 draws") {
  LatentParams lat;
  lat.mean = Vector::Zero(1);
  lat.log_variance = Vector::Zero(1);
  Rng rng(2024);
  const int kDraws = 100000;
  double sum = 0.0, ss = 0.0;
  for (int i = 0; i < kDraws; ++i) {
    const double z = reparameterize(lat, rng)[0];
    sum += z;
    ss += z * z;
  }
  const double mean = sum / kDraws;
  const double var = ss / kDraws - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.01);
}

TEST_CASE("reparameterize: same rng state gives the same draw") {
  LatentParams lat;
  lat.mean = Vector::Constant(3, 0.7);
  lat.log_variance = Vector::Constant(3, -0.5);
  Rng a(5), b(5);
  CHECK((reparameterize(lat, a) - reparameterize(lat, b)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kl_divergence closed-form values") {
  LatentParams zero{Vector::Zero(1), Vector::Zero(1)};
  CHECK(kl_divergence(zero) == 0.0);

  LatentParams unit_mean{Vector::Constant(1, 1.0), Vector::Zero(1)};
  CHECK(kl_divergence(unit_mean) == Catch::Approx(0.5).epsilon(1e-14));

  // mean 0, log-variance 1 -> (e - 2) / 2, evaluated independently.
  LatentParams lv1{Vector::Zero(1), Vector::Constant(1, 1.0)};
  CHECK(kl_divergence(lv1) == Catch::Approx(0.3591409142295226).epsilon(1e-14));
}

TEST_CASE("kl_divergence is nonnegative and zero only at the prior") {
  Rng rng(99);
  for (int trial = 0; trial < 20000; ++trial) {
    const int dim = 1 + static_cast<int>(rng.below(4));
    LatentParams lat;
    lat.mean.resize(dim);
    lat.log_variance.resize(dim);
    for (int i = 0; i < dim; ++i) {
      lat.mean[i] = 4.0 * rng.normal();
      lat.log_variance[i] = 4.0 * rng.normal();
    }
    const double kl = kl_divergence(lat);
    CHECK(kl >= 0.0);
    if (lat.mean.cwiseAbs().maxCoeff() > 1e-8 || lat.log_variance.cwiseAbs().maxCoeff() > 1e-8)
      CHECK(kl > 0.0);
  }
}

TEST_CASE("cvae_loss: vanishes when the decoder reproduces x and posterior is the prior") {
  CvaeModel m = zero_model(2);
  Vector xs = Vector::Zero(3);
  Matrix cs = Matrix::Random(7, 3);
  Rng rng(1);
  CvaeLossResult r = cvae_loss(m, xs, cs, rng, 1.0);
  CHECK(r.loss == 0.0);
  CHECK(r.reconstruction == 0.0);
  CHECK(r.kl == 0.0);
}

TEST_CASE("cvae_loss: kl_weight 0 isolates the reconstruction term") {
  CvaeModel m = random_model(2, 5, 33);
  Rng data(3);
  Vector xs(4);
  Matrix cs(7, 4);
  for (int i = 0; i < 4; ++i) {
    xs[i] = data.normal();
    for (int j = 0; j < 7; ++j) cs(j, i) = data.normal();
  }
  Matrix eps(2, 4);
  for (int i = 0; i < eps.size(); ++i) eps(i) = data.normal();
  CvaeLossResult r = cvae_loss_with_noise(m, xs, cs, eps, 0.0);
  CHECK(r.loss == Catch::Approx(r.reconstruction).epsilon(1e-15));
  CHECK(r.kl > 0.0);  // still reported, just unweighted
}

TEST_CASE("cvae_loss with kl_weight 0 and a floored latent is plain autoencoder MSE") {
  CvaeModel m = random_model(2, 5, 44);
  // Force the log-variance head to a deep constant: zero its rows, bias -30
  // (clamped to the floor), so z collapses to the posterior mean.
  DenseLayer& head = m.encoder.layers.back();
  head.weights.bottomRows(m.latent_dim).setZero();
  head.biases.tail(m.latent_dim).setConstant(-30.0);

  Rng data(8);
  const int batch = 6;
  Vector xs(batch);
  Matrix cs(7, batch);
  for (int i = 0; i < batch; ++i) {
    xs[i] = data.normal();
    for (int j = 0; j < 7; ++j) cs(j, i) = data.normal();
  }
  // Noise pinned to zero: z is exactly the posterior mean.
  CvaeLossResult r = cvae_loss_with_noise(m, xs, cs, Matrix::Zero(2, batch), 0.0);

  // Plain autoencoder: decode the posterior mean directly.
  Matrix u(8, batch);
  u.row(0) = xs.transpose();
  u.bottomRows(7) = cs;
  Matrix mu = forward(m.encoder, u).topRows(2);
  Matrix v(9, batch);
  v.topRows(2) = mu;
  v.bottomRows(7) = cs;
  Vector xhat = forward(m.decoder, v).row(0).transpose();
  const double plain_mse = mse_loss(xhat, xs).value;
  CHECK(r.loss == Catch::Approx(plain_mse).margin(1e-12));
}

TEST_CASE("cvae_loss gradients match finite differences with frozen noise") {
  Rng meta(777);
  for (int trial = 0; trial < 8; ++trial) {
    CvaeModel m = random_model(2, 4, 4000 + static_cast<std::uint64_t>(trial));
    Rng data(100 + static_cast<std::uint64_t>(trial));
    const int batch = 3;
    Vector xs(batch);
    Matrix cs(7, batch);
    Matrix eps(2, batch);
    for (int i = 0; i < batch; ++i) {
      xs[i] = data.normal();
      for (int j = 0; j < 7; ++j) cs(j, i) = data.normal();
      for (int k = 0; k < 2; ++k) eps(k, i) = data.normal();
    }
    const double w = 0.7;
    CvaeLossResult analytic = cvae_loss_with_noise(m, xs, cs, eps, w);

    auto enc_loss = [&](const DenseNetwork& enc) {
      CvaeModel probe = m;
      probe.encoder = enc;
      return cvae_loss_with_noise(probe, xs, cs, eps, w).loss;
    };
    auto dec_loss = [&](const DenseNetwork& dec) {
      CvaeModel probe = m;
      probe.decoder = dec;
      return cvae_loss_with_noise(probe, xs, cs, eps, w).loss;
    };
    Gradients enc_fd = oracles::finite_difference_gradients(m.encoder, enc_loss, 1e-5);
    Gradients dec_fd = oracles::finite_difference_gradients(m.decoder, dec_loss, 1e-5);
    CHECK(oracles::max_gradient_discrepancy(analytic.grads.encoder, enc_fd) < 1e-5);
    CHECK(oracles::max_gradient_discrepancy(analytic.grads.decoder, dec_fd) < 1e-5);
  }
}

TEST_CASE("train_cvae learns on synthetic data and is deterministic") {
  Dataset data = synthetic_chf(1200, 50);
  SplitResult parts = split(data, {0.8, 0.1, 0.1, 9});
  ScalerParams scaler = fit_scaler(parts.train);
  Eigen::MatrixXd train = apply_scaler(parts.train, scaler);
  Eigen::MatrixXd val = apply_scaler(parts.val, scaler);

  CvaeConfig cfg;
  cfg.latent_dim = 2;
  cfg.encoder_hidden = {24, 24, 24};
  cfg.decoder_hidden = {24, 24, 24};
  cfg.epochs = 60;
  cfg.batch_size = 76;
  cfg.seed = 14;
  TrainedCvae a = train_cvae(cfg, train, val, scaler);
  REQUIRE(a.history.val_reconstruction.size() == 60);
  CHECK(a.history.val_reconstruction.back() < a.history.val_reconstruction.front());

  TrainedCvae b = train_cvae(cfg, train, val, scaler);
  for (std::size_t l = 0; l < a.model.encoder.layers.size(); ++l) {
    CHECK((a.model.encoder.layers[l].weights - b.model.encoder.layers[l].weights)
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK((a.model.decoder.layers[l].weights - b.model.decoder.layers[l].weights)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }

  // Trained-model generation spread is finite and small relative to the mean.
  Vector cond(7);
  for (int c = 0; c < 7; ++c) cond[c] = get_column(parts.test.records.front(), c);
  Rng gen_rng(99);
  SampleStats stats = sample_stats(generate(a.model, cond, 200, gen_rng));
  CHECK(std::isfinite(stats.sigma_samples));
  CHECK(std::abs(relative_std(stats)) < 50.0);
}

TEST_CASE("generate: sample count, determinism, and z-blind decoder") {
  CvaeModel m = random_model(2, 6, 8);
  Vector cond = Vector::LinSpaced(7, 0.1, 0.7);

  Rng r1(40), r2(40);
  std::vector<double> s1 = generate(m, cond, 200, r1);
  std::vector<double> s2 = generate(m, cond, 200, r2);
  REQUIRE(s1.size() == 200);
  CHECK(s1 == s2);

  // Zeroing the decoder weight columns that read z makes every sample equal.
  CvaeModel blind = m;
  blind.decoder.layers[0].weights.leftCols(blind.latent_dim).setZero();
  std::vector<double> s3 = generate(blind, cond, 50, r1);
  for (double v : s3) CHECK(v == s3.front());

  CHECK_THROWS_AS(generate(m, cond, 0, r1), DataError);
  Vector bad = cond;
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(generate(m, bad, 5, r1), DataError);
}
