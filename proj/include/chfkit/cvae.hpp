#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "chfkit/dataset.hpp"
#include "chfkit/errors.hpp"
#include "chfkit/nn.hpp"
#include "chfkit/rng.hpp"

namespace chfkit {

/// Diagonal-Gaussian posterior parameters produced by the encoder.
struct LatentParams {
  Vector mean;
  Vector log_variance;
};

/// Log-variances are clamped to this band before exponentiation, both in
/// sampling and in the KL term, as a guard against overflow. Reproductions
/// must apply the same clamp to match.
inline constexpr double kLogVarFloor = -10.0;
inline constexpr double kLogVarCeil = 10.0;

/// Conditional VAE over a scalar standardized CHF: the encoder maps
/// (chf, 7 conditions) to a latent Gaussian, the decoder maps
/// (latent, 7 conditions) back to chf. The latent prior is standard normal,
/// independent of the conditions.
struct CvaeModel {
  DenseNetwork encoder;  // input 1+7, output 2*latent_dim (mean, log-variance)
  DenseNetwork decoder;  // input latent_dim+7, output 1
  int latent_dim = 0;
  ScalerParams scaler;
};

inline void validate_cvae_model(const CvaeModel& m) {
  if (m.latent_dim < 1) throw DataError("cvae: latent_dim must be >= 1");
  validate_network(m.encoder);
  validate_network(m.decoder);
  if (m.encoder.input_dim() != 1 + kNumConditions)
    throw DataError("cvae: encoder input dim must be 1+7");
  if (m.encoder.output_dim() != 2 * m.latent_dim)
    throw DataError("cvae: encoder output dim must be 2*latent_dim");
  if (m.decoder.input_dim() != m.latent_dim + kNumConditions)
    throw DataError("cvae: decoder input dim must be latent_dim+7");
  if (m.decoder.output_dim() != 1) throw DataError("cvae: decoder output dim must be 1");
  if (m.encoder.layers.size() != 4 || m.decoder.layers.size() != 4)
    throw DataError("cvae: encoder and decoder must each have four fully connected layers");
}

struct CvaeConfig {
  int latent_dim = 2;
  std::vector<int> encoder_hidden = {128, 128, 128};
  std::vector<int> decoder_hidden = {128, 128, 128};
  int epochs = 230;
  int batch_size = 76;
  double initial_lr = 1e-3;
  double lr_decay = 1.0;
  double kl_weight = 1.0;
  std::uint64_t seed = 0;
};

inline void validate_cvae_config(const CvaeConfig& c) {
  if (c.latent_dim < 1) throw DataError("cvae config: latent_dim must be >= 1");
  if (c.encoder_hidden.size() != 3 || c.decoder_hidden.size() != 3)
    throw DataError("cvae config: encoder and decoder take exactly 3 hidden widths "
                    "(four fully connected layers)");
  if (c.epochs < 1) throw DataError("cvae config: epochs must be >= 1");
  if (c.batch_size < 1) throw DataError("cvae config: batch_size must be >= 1");
  if (!(c.kl_weight > 0.0)) throw DataError("cvae config: kl_weight must be > 0");
  if (!(c.lr_decay > 0.0 && c.lr_decay <= 1.0))
    throw DataError("cvae config: lr_decay must be in (0, 1]");
}

namespace detail {

inline Matrix clamp_logvar(const Matrix& lv) {
  return lv.array().min(kLogVarCeil).max(kLogVarFloor).matrix();
}

}  // namespace detail

/// Batched encode: xs is a length-B vector of standardized CHF values, cs is
/// 7 x B. Returns the mean and log-variance heads (latent_dim x B each),
/// unclamped.
inline std::pair<Matrix, Matrix> encode_batch(const CvaeModel& m, const Vector& xs,
                                              const Matrix& cs) {
  if (cs.rows() != kNumConditions) throw DataError("encode: conditions must have 7 rows");
  if (xs.size() != cs.cols()) throw DataError("encode: batch size mismatch");
  Matrix u(1 + kNumConditions, xs.size());
  u.row(0) = xs.transpose();
  u.bottomRows(kNumConditions) = cs;
  Matrix e = forward(m.encoder, u);
  return {e.topRows(m.latent_dim), e.bottomRows(m.latent_dim)};
}

/// Deterministic map from one (standardized CHF, standardized conditions)
/// pair to its posterior parameters.
inline LatentParams encode(const CvaeModel& m, double x_std, const Vector& c_std) {
  auto [mu, lv] = encode_batch(m, Vector::Constant(1, x_std), Matrix(c_std));
  return {mu.col(0), lv.col(0)};
}

/// z = mean + exp(log_variance / 2) * eps with eps ~ N(0, I) from the stream.
/// The same rng state always yields the same z.
inline Vector reparameterize(const LatentParams& lat, Rng& rng) {
  if (lat.mean.size() != lat.log_variance.size())
    throw DataError("reparameterize: mean/log_variance length mismatch");
  Vector z(lat.mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double lv = std::clamp(lat.log_variance[i], kLogVarFloor, kLogVarCeil);
    z[i] = lat.mean[i] + std::exp(0.5 * lv) * rng.normal();
  }
  return z;
}

/// Closed-form KL divergence from the posterior to the standard normal
/// prior: 1/2 sum(mean^2 + var - 1 - log var). Nonnegative; zero exactly at
/// (mean, log_variance) = (0, 0).
inline double kl_divergence(const LatentParams& lat) {
  if (lat.mean.size() != lat.log_variance.size())
    throw DataError("kl_divergence: mean/log_variance length mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < lat.mean.size(); ++i) {
    const double lv = std::clamp(lat.log_variance[i], kLogVarFloor, kLogVarCeil);
    acc += lat.mean[i] * lat.mean[i] + std::exp(lv) - 1.0 - lv;
  }
  return 0.5 * acc;
}

struct CvaeGradients {
  Gradients encoder;
  Gradients decoder;
};

struct CvaeLossResult {
  double loss = 0.0;            // reconstruction + kl_weight * kl
  double reconstruction = 0.0;  // mean over batch of (xhat - x)^2
  double kl = 0.0;              // mean over batch of KL to the prior
  CvaeGradients grads;
};

/// Loss and exact gradients with the noise draws pinned (eps is
/// latent_dim x B). Pinning eps makes the whole map differentiable and
/// checkable against finite differences; cvae_loss below draws eps from an
/// rng and delegates here. One Monte Carlo sample per datum estimates the
/// reconstruction expectation.
inline CvaeLossResult cvae_loss_with_noise(const CvaeModel& m, const Vector& xs,
                                           const Matrix& cs, const Matrix& eps,
                                           double kl_weight) {
  const Eigen::Index batch = xs.size();
  if (batch == 0) throw DataError("cvae_loss: empty batch");
  if (cs.rows() != kNumConditions || cs.cols() != batch)
    throw DataError("cvae_loss: conditions shape mismatch");
  if (eps.rows() != m.latent_dim || eps.cols() != batch)
    throw DataError("cvae_loss: eps shape mismatch");
  const double bn = static_cast<double>(batch);
  const int latent = m.latent_dim;

  // Encoder forward.
  Matrix u(1 + kNumConditions, batch);
  u.row(0) = xs.transpose();
  u.bottomRows(kNumConditions) = cs;
  ForwardTrace enc_trace = forward_trace(m.encoder, u);
  Matrix mu = enc_trace.output().topRows(latent);
  Matrix lv_raw = enc_trace.output().bottomRows(latent);
  Matrix lv = detail::clamp_logvar(lv_raw);
  // Zero the gradient where the clamp is active.
  Matrix clamp_mask =
      ((lv_raw.array() > kLogVarFloor) && (lv_raw.array() < kLogVarCeil)).cast<double>();

  Matrix sd = (0.5 * lv.array()).exp().matrix();
  Matrix z = mu + sd.cwiseProduct(eps);

  // Decoder forward.
  Matrix v(latent + kNumConditions, batch);
  v.topRows(latent) = z;
  v.bottomRows(kNumConditions) = cs;
  ForwardTrace dec_trace = forward_trace(m.decoder, v);
  Matrix xhat = dec_trace.output();  // 1 x B

  CvaeLossResult res;
  Matrix diff = xhat.row(0) - xs.transpose();
  res.reconstruction = diff.array().square().sum() / bn;
  Matrix var = lv.array().exp().matrix();
  res.kl = 0.5 * (mu.array().square() + var.array() - 1.0 - lv.array()).sum() / bn;
  res.loss = res.reconstruction + kl_weight * res.kl;
  if (!std::isfinite(res.loss)) throw NumericError("cvae_loss: non-finite loss");

  // Decoder backward: d(recon)/d(xhat) = 2 (xhat - x) / B.
  Matrix dxhat = (2.0 / bn) * diff;
  BackwardResult dec_back = backward_from_trace(m.decoder, dec_trace, dxhat);
  res.grads.decoder = std::move(dec_back.grads);
  Matrix dz = dec_back.input_grad.topRows(latent);

  // Pathwise plus KL contributions to the posterior parameters.
  Matrix dmu = dz + (kl_weight / bn) * mu;
  Matrix dlv = 0.5 * dz.cwiseProduct(eps).cwiseProduct(sd) +
               (0.5 * kl_weight / bn) * (var.array() - 1.0).matrix();
  dlv = dlv.cwiseProduct(clamp_mask);

  Matrix enc_upstream(2 * latent, batch);
  enc_upstream.topRows(latent) = dmu;
  enc_upstream.bottomRows(latent) = dlv;
  BackwardResult enc_back = backward_from_trace(m.encoder, enc_trace, enc_upstream);
  res.grads.encoder = std::move(enc_back.grads);
  return res;
}

inline CvaeLossResult cvae_loss(const CvaeModel& m, const Vector& xs, const Matrix& cs,
                                Rng& rng, double kl_weight) {
  Matrix eps(m.latent_dim, xs.size());
  for (Eigen::Index c = 0; c < eps.cols(); ++c)
    for (Eigen::Index r = 0; r < eps.rows(); ++r) eps(r, c) = rng.normal();
  return cvae_loss_with_noise(m, xs, cs, eps, kl_weight);
}

struct CvaeTrainHistory {
  std::vector<double> train_reconstruction;
  std::vector<double> train_kl;
  std::vector<double> val_reconstruction;
  std::vector<double> val_kl;
};

struct TrainedCvae {
  CvaeModel model;
  CvaeTrainHistory history;
};

/// Trains on standardized n x 8 tables (conditions in columns 0..6, CHF in
/// column 7). Deterministic given config.seed: init, epoch shuffles and
/// latent noise all come from streams derived from it.
inline TrainedCvae train_cvae(const CvaeConfig& config, const Eigen::MatrixXd& train_table,
                              const Eigen::MatrixXd& val_table, const ScalerParams& scaler) {
  validate_cvae_config(config);
  if (train_table.rows() == 0) throw DataError("train_cvae: empty training table");
  if (train_table.cols() != kNumColumns || val_table.cols() != kNumColumns)
    throw DataError("train_cvae: tables must have 8 columns");

  const Eigen::Index n = train_table.rows();
  Matrix train_c = train_table.leftCols(kNumConditions).transpose();
  Vector train_x = train_table.col(kNumColumns - 1);
  Matrix val_c = val_table.leftCols(kNumConditions).transpose();
  Vector val_x = val_table.col(kNumColumns - 1);

  Rng init_rng(derive_seed(config.seed, 0));
  Rng train_rng(derive_seed(config.seed, 1));
  Rng val_rng(derive_seed(config.seed, 2));

  TrainedCvae out;
  out.model.latent_dim = config.latent_dim;
  out.model.scaler = scaler;
  {
    std::vector<int> enc_dims = {1 + kNumConditions};
    enc_dims.insert(enc_dims.end(), config.encoder_hidden.begin(), config.encoder_hidden.end());
    enc_dims.push_back(2 * config.latent_dim);
    std::vector<int> dec_dims = {config.latent_dim + kNumConditions};
    dec_dims.insert(dec_dims.end(), config.decoder_hidden.begin(), config.decoder_hidden.end());
    dec_dims.push_back(1);
    std::vector<Activation> acts = {Activation::kRelu, Activation::kRelu, Activation::kRelu,
                                    Activation::kIdentity};
    out.model.encoder = init_network(enc_dims, acts, init_rng);
    out.model.decoder = init_network(dec_dims, acts, init_rng);
  }
  validate_cvae_model(out.model);

  AdamState enc_state = make_adam_state(out.model.encoder, config.initial_lr);
  AdamState dec_state = make_adam_state(out.model.decoder, config.initial_lr);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_schedule(config.initial_lr, config.lr_decay, epoch);
    enc_state.learning_rate = lr;
    dec_state.learning_rate = lr;

    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[train_rng.below(i + 1)]);

    double recon_acc = 0.0, kl_acc = 0.0;
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(config.batch_size, n - start);
      Vector xb(b);
      Matrix cb(kNumConditions, b);
      for (Eigen::Index k = 0; k < b; ++k) {
        const Eigen::Index idx = order[static_cast<std::size_t>(start + k)];
        xb[k] = train_x[idx];
        cb.col(k) = train_c.col(idx);
      }
      CvaeLossResult r;
      try {
        r = cvae_loss(out.model, xb, cb, train_rng, config.kl_weight);
      } catch (const NumericError& e) {
        throw NumericError("train_cvae: diverged at epoch " + std::to_string(epoch) + ": " +
                           e.what());
      }
      recon_acc += r.reconstruction * static_cast<double>(b);
      kl_acc += r.kl * static_cast<double>(b);
      adam_step(out.model.encoder, r.grads.encoder, enc_state);
      adam_step(out.model.decoder, r.grads.decoder, dec_state);
    }
    out.history.train_reconstruction.push_back(recon_acc / static_cast<double>(n));
    out.history.train_kl.push_back(kl_acc / static_cast<double>(n));

    Matrix val_eps(config.latent_dim, val_x.size());
    for (Eigen::Index c = 0; c < val_eps.cols(); ++c)
      for (Eigen::Index r = 0; r < val_eps.rows(); ++r) val_eps(r, c) = val_rng.normal();
    CvaeLossResult vr = cvae_loss_with_noise(out.model, val_x, val_c, val_eps, config.kl_weight);
    out.history.val_reconstruction.push_back(vr.reconstruction);
    out.history.val_kl.push_back(vr.kl);
  }
  return out;
}

/// Draws n_samples CHF values at one physical condition vector: z from the
/// standard normal prior, decode (z, standardized conditions), destandardize.
/// Samples are decoded one at a time so the value of sample i never depends
/// on how many samples were requested alongside it.
inline std::vector<double> generate(const CvaeModel& m, const Vector& conditions_physical,
                                    int n_samples, Rng& rng) {
  if (n_samples < 1) throw DataError("generate: n_samples must be >= 1");
  Vector c_std = standardize_conditions(conditions_physical, m.scaler);
  Vector v(m.latent_dim + kNumConditions);
  v.tail(kNumConditions) = c_std;
  std::vector<double> out(static_cast<std::size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) {
    for (int k = 0; k < m.latent_dim; ++k) v[k] = rng.normal();
    out[static_cast<std::size_t>(s)] = destandardize_chf(forward(m.decoder, v)[0], m.scaler);
  }
  return out;
}

}  // namespace chfkit
