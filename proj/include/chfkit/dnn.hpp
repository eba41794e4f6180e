#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "chfkit/dataset.hpp"
#include "chfkit/errors.hpp"
#include "chfkit/metrics.hpp"
#include "chfkit/nn.hpp"
#include "chfkit/rng.hpp"

namespace chfkit {

struct DnnConfig {
  std::vector<int> hidden_widths = {256, 256, 256, 256, 256, 256, 256, 256};
  int epochs = 500;
  double initial_lr = 1e-3;
  double lr_decay = 0.96;
  int batch_size = 256;
  std::uint64_t seed = 0;
};

inline void validate_dnn_config(const DnnConfig& c) {
  if (c.hidden_widths.empty()) throw DataError("dnn config: need at least one hidden layer");
  for (int w : c.hidden_widths)
    if (w < 1) throw DataError("dnn config: hidden widths must be >= 1");
  if (c.epochs < 1) throw DataError("dnn config: epochs must be >= 1");
  if (c.batch_size < 1) throw DataError("dnn config: batch_size must be >= 1");
  if (!(c.lr_decay > 0.0 && c.lr_decay <= 1.0))
    throw DataError("dnn config: lr_decay must be in (0, 1]");
}

struct DnnTrainHistory {
  std::vector<double> train_loss;  // per-epoch minibatch-weighted train MSE
  std::vector<double> val_loss;    // full validation MSE after each epoch
};

struct TrainedDnn {
  DenseNetwork net;
  DnnTrainHistory history;
};

/// Supervised regression on standardized n x 8 tables (conditions in columns
/// 0..6, CHF in column 7). Rectifier hidden layers, identity output, Adam
/// with per-epoch exponential learning-rate decay. Deterministic given
/// config.seed.
inline TrainedDnn train_dnn(const DnnConfig& config, const Eigen::MatrixXd& train_table,
                            const Eigen::MatrixXd& val_table) {
  validate_dnn_config(config);
  if (train_table.rows() == 0) throw DataError("train_dnn: empty training table");
  if (train_table.cols() != kNumColumns || val_table.cols() != kNumColumns)
    throw DataError("train_dnn: tables must have 8 columns");

  const Eigen::Index n = train_table.rows();
  Matrix train_c = train_table.leftCols(kNumConditions).transpose();
  Vector train_x = train_table.col(kNumColumns - 1);
  Matrix val_c = val_table.leftCols(kNumConditions).transpose();
  Vector val_x = val_table.col(kNumColumns - 1);

  Rng rng(config.seed);
  std::vector<int> dims = {kNumConditions};
  dims.insert(dims.end(), config.hidden_widths.begin(), config.hidden_widths.end());
  dims.push_back(1);
  std::vector<Activation> acts(dims.size() - 1, Activation::kRelu);
  acts.back() = Activation::kIdentity;

  TrainedDnn out;
  out.net = init_network(dims, acts, rng);
  AdamState state = make_adam_state(out.net, config.initial_lr);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    state.learning_rate = lr_schedule(config.initial_lr, config.lr_decay, epoch);
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[rng.below(i + 1)]);

    double loss_acc = 0.0;
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(config.batch_size, n - start);
      Matrix cb(kNumConditions, b);
      Vector xb(b);
      for (Eigen::Index k = 0; k < b; ++k) {
        const Eigen::Index idx = order[static_cast<std::size_t>(start + k)];
        cb.col(k) = train_c.col(idx);
        xb[k] = train_x[idx];
      }
      ForwardTrace trace = forward_trace(out.net, cb);
      MseResult mse = mse_loss(trace.output().row(0).transpose(), xb);
      loss_acc += mse.value * static_cast<double>(b);
      BackwardResult back = backward_from_trace(out.net, trace, mse.grad.transpose());
      adam_step(out.net, back.grads, state);
    }
    const double epoch_loss = loss_acc / static_cast<double>(n);
    if (!std::isfinite(epoch_loss))
      throw NumericError("train_dnn: diverged at epoch " + std::to_string(epoch));
    out.history.train_loss.push_back(epoch_loss);
    out.history.val_loss.push_back(
        mse_loss(forward(out.net, val_c).row(0).transpose(), val_x).value);
  }
  return out;
}

/// Single prediction at a physical condition vector, destandardized to kW/m^2.
inline double predict(const DenseNetwork& net, const Vector& conditions_physical,
                      const ScalerParams& scaler) {
  Vector c_std = standardize_conditions(conditions_physical, scaler);
  return destandardize_chf(forward(net, c_std)[0], scaler);
}

/// Batched prediction; conditions_physical is n x 7 (rows are points).
inline std::vector<double> predict(const DenseNetwork& net, const Matrix& conditions_physical,
                                   const ScalerParams& scaler) {
  if (conditions_physical.cols() != kNumConditions)
    throw DataError("predict: expected 7 condition columns");
  Matrix c_std(kNumConditions, conditions_physical.rows());
  for (Eigen::Index i = 0; i < conditions_physical.rows(); ++i)
    c_std.col(i) = standardize_conditions(conditions_physical.row(i).transpose(), scaler);
  Matrix y = forward(net, c_std);
  std::vector<double> out(static_cast<std::size_t>(y.cols()));
  for (Eigen::Index i = 0; i < y.cols(); ++i)
    out[static_cast<std::size_t>(i)] = destandardize_chf(y(0, i), scaler);
  return out;
}

/// Identically configured networks differing only in initialization seed.
struct Ensemble {
  std::vector<DenseNetwork> members;
  std::vector<std::uint64_t> seeds;
};

inline void validate_ensemble(const Ensemble& e) {
  if (e.members.size() < 2) throw DataError("ensemble: need at least 2 members");
  if (e.members.size() != e.seeds.size())
    throw DataError("ensemble: member/seed count mismatch");
  std::set<std::uint64_t> uniq(e.seeds.begin(), e.seeds.end());
  if (uniq.size() != e.seeds.size()) throw DataError("ensemble: duplicate seeds");
  for (const DenseNetwork& m : e.members) {
    validate_network(m);
    if (m.layers.size() != e.members.front().layers.size())
      throw DataError("ensemble: members differ in architecture");
    for (std::size_t l = 0; l < m.layers.size(); ++l)
      if (m.layers[l].fan_in() != e.members.front().layers[l].fan_in() ||
          m.layers[l].fan_out() != e.members.front().layers[l].fan_out())
        throw DataError("ensemble: members differ in architecture");
  }
}

/// Trains n_members copies of the config, member i seeded with base_seed+i.
/// Members are independent, so they train concurrently on up to `workers`
/// threads; the result is identical for any worker count.
inline Ensemble train_ensemble(const DnnConfig& config, int n_members, std::uint64_t base_seed,
                               const Eigen::MatrixXd& train_table,
                               const Eigen::MatrixXd& val_table, int workers = 1) {
  if (n_members < 2) throw DataError("train_ensemble: need at least 2 members");
  Ensemble ens;
  ens.members.resize(static_cast<std::size_t>(n_members));
  ens.seeds.resize(static_cast<std::size_t>(n_members));
  for (int i = 0; i < n_members; ++i)
    ens.seeds[static_cast<std::size_t>(i)] = base_seed + static_cast<std::uint64_t>(i);

  workers = std::max(1, workers);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::atomic<int> next{0};
  auto worker_fn = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= n_members) return;
      try {
        DnnConfig member_cfg = config;
        member_cfg.seed = ens.seeds[static_cast<std::size_t>(i)];
        ens.members[static_cast<std::size_t>(i)] =
            train_dnn(member_cfg, train_table, val_table).net;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min(workers, n_members); ++w) pool.emplace_back(worker_fn);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  validate_ensemble(ens);
  return ens;
}

/// Mean and population std over the members' destandardized predictions.
inline SampleStats ensemble_predict(const Ensemble& ens, const Vector& conditions_physical,
                                    const ScalerParams& scaler) {
  std::vector<double> preds;
  preds.reserve(ens.members.size());
  for (const DenseNetwork& m : ens.members)
    preds.push_back(predict(m, conditions_physical, scaler));
  return sample_stats(preds);
}

}  // namespace chfkit
