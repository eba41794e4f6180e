#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "chfkit/checkpoint.hpp"
#include "chfkit/cvae.hpp"
#include "chfkit/dataset.hpp"
#include "chfkit/dnn.hpp"
#include "chfkit/errors.hpp"
#include "chfkit/hull.hpp"
#include "chfkit/metrics.hpp"
#include "chfkit/nn.hpp"
#include "chfkit/rng.hpp"
#include "chfkit/svg.hpp"
#include "chfkit/version.hpp"

namespace chfkit {

/// Synthetic data request; used when no dataset file is configured.
struct SyntheticSpec {
  int n = 0;
  double noise_std = 0.0;
};

/// Everything one run needs. One global seed determines the shuffle, every
/// initialization, and every latent draw; stage seeds are derived from it
/// with fixed stream tags (0 synthetic data, 1 split, 2 cvae, 3 dnn,
/// 4 ensemble, 5 generation).
struct RunConfig {
  std::string dataset_path;  // CSV path; empty -> synthetic.n must be set
  SyntheticSpec synthetic;
  std::string output_dir = "chfkit-out";
  SplitSpec split;  // shuffle_seed is derived from `seed`
  DnnConfig dnn;
  CvaeConfig cvae;
  int ensemble_members = 20;
  int cvae_samples = 200;
  double hull_tolerance = 1e-8;
  std::uint64_t seed = 42;
  int workers = 0;  // 0 -> hardware concurrency
  std::string reference_metrics_path;  // optional comparison column in tables.txt
};

inline void resolve_seeds(RunConfig& c) {
  c.split.shuffle_seed = derive_seed(c.seed, 1);
  c.cvae.seed = derive_seed(c.seed, 2);
  c.dnn.seed = derive_seed(c.seed, 3);
}

inline int resolved_workers(const RunConfig& c) {
  if (c.workers > 0) return c.workers;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

inline void validate_run_config(const RunConfig& c) {
  if (c.dataset_path.empty() && c.synthetic.n < 1)
    throw DataError("config: either a dataset path or a synthetic block is required");
  if (c.output_dir.empty()) throw DataError("config: output_dir is required");
  validate_dnn_config(c.dnn);
  validate_cvae_config(c.cvae);
  if (c.ensemble_members < 2) throw DataError("config: ensemble_members must be >= 2");
  if (c.cvae_samples < 1) throw DataError("config: cvae_samples must be >= 1");
  if (!(c.hull_tolerance >= 0.0)) throw DataError("config: hull_tolerance must be >= 0");
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  c.dataset_path = j.value("dataset", "");
  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    c.synthetic.n = s.value("n", 0);
    c.synthetic.noise_std = s.value("noise_std", 0.0);
  }
  c.output_dir = j.value("output_dir", c.output_dir);
  c.seed = j.value("seed", c.seed);
  c.workers = j.value("workers", c.workers);
  if (j.contains("split")) {
    const auto& s = j.at("split");
    c.split.train_fraction = s.value("train", c.split.train_fraction);
    c.split.val_fraction = s.value("val", c.split.val_fraction);
    c.split.test_fraction = s.value("test", c.split.test_fraction);
  }
  if (j.contains("dnn")) {
    const auto& d = j.at("dnn");
    c.dnn.hidden_widths = d.value("hidden_widths", c.dnn.hidden_widths);
    c.dnn.epochs = d.value("epochs", c.dnn.epochs);
    c.dnn.batch_size = d.value("batch_size", c.dnn.batch_size);
    c.dnn.initial_lr = d.value("initial_lr", c.dnn.initial_lr);
    c.dnn.lr_decay = d.value("lr_decay", c.dnn.lr_decay);
  }
  if (j.contains("cvae")) {
    const auto& v = j.at("cvae");
    c.cvae.latent_dim = v.value("latent_dim", c.cvae.latent_dim);
    c.cvae.encoder_hidden = v.value("encoder_hidden", c.cvae.encoder_hidden);
    c.cvae.decoder_hidden = v.value("decoder_hidden", c.cvae.decoder_hidden);
    c.cvae.epochs = v.value("epochs", c.cvae.epochs);
    c.cvae.batch_size = v.value("batch_size", c.cvae.batch_size);
    c.cvae.initial_lr = v.value("initial_lr", c.cvae.initial_lr);
    c.cvae.lr_decay = v.value("lr_decay", c.cvae.lr_decay);
    c.cvae.kl_weight = v.value("kl_weight", c.cvae.kl_weight);
  }
  c.ensemble_members = j.value("ensemble_members", c.ensemble_members);
  c.cvae_samples = j.value("cvae_samples", c.cvae_samples);
  c.hull_tolerance = j.value("hull_tolerance", c.hull_tolerance);
  c.reference_metrics_path = j.value("reference_metrics", "");
  return c;
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  return {{"dataset", c.dataset_path},
          {"synthetic", {{"n", c.synthetic.n}, {"noise_std", c.synthetic.noise_std}}},
          {"output_dir", c.output_dir},
          {"seed", c.seed},
          {"workers", c.workers},
          {"split",
           {{"train", c.split.train_fraction},
            {"val", c.split.val_fraction},
            {"test", c.split.test_fraction}}},
          {"dnn",
           {{"hidden_widths", c.dnn.hidden_widths},
            {"epochs", c.dnn.epochs},
            {"batch_size", c.dnn.batch_size},
            {"initial_lr", c.dnn.initial_lr},
            {"lr_decay", c.dnn.lr_decay}}},
          {"cvae",
           {{"latent_dim", c.cvae.latent_dim},
            {"encoder_hidden", c.cvae.encoder_hidden},
            {"decoder_hidden", c.cvae.decoder_hidden},
            {"epochs", c.cvae.epochs},
            {"batch_size", c.cvae.batch_size},
            {"initial_lr", c.cvae.initial_lr},
            {"lr_decay", c.cvae.lr_decay},
            {"kl_weight", c.cvae.kl_weight}}},
          {"ensemble_members", c.ensemble_members},
          {"cvae_samples", c.cvae_samples},
          {"hull_tolerance", c.hull_tolerance},
          {"reference_metrics", c.reference_metrics_path}};
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig c = run_config_from_json(detail::read_json_file(path));
  validate_run_config(c);
  return c;
}

/// Well-known file layout under output_dir.
struct RunPaths {
  std::filesystem::path root;

  explicit RunPaths(const std::filesystem::path& out) : root(out) {}
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path dnn_ckpt() const { return checkpoints() / "dnn.json"; }
  std::filesystem::path cvae_ckpt() const { return checkpoints() / "cvae.json"; }
  std::filesystem::path ensemble_dir() const { return checkpoints() / "ensemble"; }
  std::filesystem::path ensemble_manifest() const { return checkpoints() / "ensemble.json"; }
  std::filesystem::path member_ckpt(int i) const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "member_%02d.json", i);
    return ensemble_dir() / buf;
  }
  std::filesystem::path history_dnn() const { return checkpoints() / "history_dnn.csv"; }
  std::filesystem::path history_cvae() const { return checkpoints() / "history_cvae.csv"; }
  std::filesystem::path metrics() const { return root / "metrics"; }
  std::filesystem::path metrics_plain() const { return metrics() / "metrics_plain.json"; }
  std::filesystem::path metrics_uq() const { return metrics() / "metrics_uq.json"; }
  std::filesystem::path metrics_hull() const { return metrics() / "metrics_hull.json"; }
  std::filesystem::path correlations() const { return metrics() / "correlations.json"; }
  std::filesystem::path tables() const { return metrics() / "tables.txt"; }
  std::filesystem::path parity_csv() const { return metrics() / "parity.csv"; }
  std::filesystem::path samples_dnn() const { return metrics() / "samples_dnn.csv"; }
  std::filesystem::path samples_cvae() const { return metrics() / "samples_cvae.csv"; }
  std::filesystem::path hull_split_csv() const { return metrics() / "hull_split.csv"; }
  std::filesystem::path plots() const { return root / "plots"; }
  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path report() const { return root / "report.txt"; }
};

/// Record of one run: config echo, version, per-stage timings, and every
/// file the run produced (paths relative to the manifest's directory).
struct RunManifest {
  nlohmann::json config_echo;
  std::string version = kVersion;
  std::map<std::string, double> timings_sec;
  std::map<std::string, std::string> files;
};

inline void manifest_add_file(RunManifest& m, const std::string& key,
                              const std::filesystem::path& path,
                              const std::filesystem::path& root) {
  m.files[key] = std::filesystem::relative(path, root).string();
}

/// Writes manifest.json, refusing to record files that do not exist.
inline void save_manifest(const RunManifest& m, const std::filesystem::path& out_dir) {
  for (const auto& [key, rel] : m.files) {
    if (!std::filesystem::exists(out_dir / rel))
      throw DataError("manifest refers to missing file: " + rel + " (" + key + ")");
  }
  nlohmann::json j = {{"format", "chfkit-run-manifest"},
                      {"version", m.version},
                      {"config", m.config_echo},
                      {"timings_sec", m.timings_sec},
                      {"files", m.files}};
  detail::write_json_file(j, out_dir / "manifest.json");
}

/// Re-opens a manifest and checks every referenced file still exists.
inline RunManifest load_and_validate_manifest(const std::filesystem::path& out_dir) {
  nlohmann::json j = detail::read_json_file(out_dir / "manifest.json");
  if (j.value("format", "") != "chfkit-run-manifest")
    throw DataError("not a run manifest: " + (out_dir / "manifest.json").string());
  RunManifest m;
  m.version = j.value("version", "");
  m.config_echo = j.value("config", nlohmann::json::object());
  if (j.contains("timings_sec"))
    m.timings_sec = j.at("timings_sec").get<std::map<std::string, double>>();
  if (j.contains("files")) m.files = j.at("files").get<std::map<std::string, std::string>>();
  for (const auto& [key, rel] : m.files) {
    if (!std::filesystem::exists(out_dir / rel))
      throw DataError("manifest file missing on disk: " + rel + " (" + key + ")");
  }
  return m;
}

namespace detail {

class StageTimer {
 public:
  explicit StageTimer(RunManifest& m, std::string name)
      : manifest_(m), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    const auto dt = std::chrono::steady_clock::now() - start_;
    manifest_.timings_sec[name_] =
        std::chrono::duration_cast<std::chrono::duration<double>>(dt).count();
  }

 private:
  RunManifest& manifest_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

inline std::string fmt4(double v) {  // 4 significant figures, table format
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

inline std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline Dataset stage_ingest(const RunConfig& config) {
  if (!config.dataset_path.empty()) return load_chf_csv(config.dataset_path);
  return synthetic_chf(config.synthetic.n, derive_seed(config.seed, 0),
                       config.synthetic.noise_std);
}

inline nlohmann::json error_report_to_json(const ErrorReport& r) {
  return {{"mean_abs_rel_error_pct", r.mean_abs_rel_error_pct},
          {"max_abs_rel_error_pct", r.max_abs_rel_error_pct},
          {"std_abs_rel_error_pct", r.std_abs_rel_error_pct},
          {"frac_above_10pct", r.frac_above_10pct},
          {"r_squared", r.r_squared},
          {"n", r.n}};
}

inline nlohmann::json conventions_json(const RunConfig& config) {
  return {{"version", kVersion},
          {"seed", config.seed},
          {"std_convention", "population (divide by n)"},
          {"exceedance_rule", "strict > 10%"},
          {"r_squared_units", "physical kW/m^2"},
          {"cvae_latent_sampling", "standard normal prior"}};
}

/// Trains the CVAE, the single DNN and the seed ensemble, then writes
/// checkpoints, loss histories and the run manifest under output_dir.
inline RunManifest run_train(const RunConfig& config_in) {
  RunConfig config = config_in;
  resolve_seeds(config);
  validate_run_config(config);
  RunPaths paths{config.output_dir};
  std::filesystem::create_directories(paths.checkpoints());
  std::filesystem::create_directories(paths.ensemble_dir());

  RunManifest manifest;
  manifest.config_echo = run_config_to_json(config);

  Dataset data;
  {
    detail::StageTimer t(manifest, "ingest");
    data = stage_ingest(config);
  }
  SplitResult parts;
  ScalerParams scaler;
  Eigen::MatrixXd train_table, val_table;
  {
    detail::StageTimer t(manifest, "split");
    parts = split(data, config.split);
    scaler = fit_scaler(parts.train);
    train_table = apply_scaler(parts.train, scaler);
    val_table = apply_scaler(parts.val, scaler);
  }

  {
    detail::StageTimer t(manifest, "train_cvae");
    TrainedCvae cvae = train_cvae(config.cvae, train_table, val_table, scaler);
    save_cvae_checkpoint({cvae.model, config.cvae.seed}, paths.cvae_ckpt());
    std::ofstream hist(paths.history_cvae());
    hist << "epoch,train_reconstruction,train_kl,val_reconstruction,val_kl\n";
    for (std::size_t e = 0; e < cvae.history.train_reconstruction.size(); ++e)
      hist << e << ',' << detail::fmt_full(cvae.history.train_reconstruction[e]) << ','
           << detail::fmt_full(cvae.history.train_kl[e]) << ','
           << detail::fmt_full(cvae.history.val_reconstruction[e]) << ','
           << detail::fmt_full(cvae.history.val_kl[e]) << "\n";
  }
  {
    detail::StageTimer t(manifest, "train_dnn");
    TrainedDnn dnn = train_dnn(config.dnn, train_table, val_table);
    save_dnn_checkpoint({dnn.net, scaler, config.dnn.seed}, paths.dnn_ckpt());
    std::ofstream hist(paths.history_dnn());
    hist << "epoch,train_mse,val_mse\n";
    for (std::size_t e = 0; e < dnn.history.train_loss.size(); ++e)
      hist << e << ',' << detail::fmt_full(dnn.history.train_loss[e]) << ','
           << detail::fmt_full(dnn.history.val_loss[e]) << "\n";
  }
  {
    detail::StageTimer t(manifest, "train_ensemble");
    const std::uint64_t base = derive_seed(config.seed, 4);
    Ensemble ens = train_ensemble(config.dnn, config.ensemble_members, base, train_table,
                                  val_table, resolved_workers(config));
    EnsembleManifest em;
    for (std::size_t i = 0; i < ens.members.size(); ++i) {
      const auto member_path = paths.member_ckpt(static_cast<int>(i));
      save_dnn_checkpoint({ens.members[i], scaler, ens.seeds[i]}, member_path);
      em.member_paths.push_back(
          std::filesystem::relative(member_path, paths.checkpoints()).string());
      em.seeds.push_back(ens.seeds[i]);
      manifest_add_file(manifest, "ensemble_member_" + std::to_string(i), member_path,
                        paths.root);
    }
    save_ensemble_manifest(em, paths.ensemble_manifest());
  }

  manifest_add_file(manifest, "cvae_checkpoint", paths.cvae_ckpt(), paths.root);
  manifest_add_file(manifest, "dnn_checkpoint", paths.dnn_ckpt(), paths.root);
  manifest_add_file(manifest, "ensemble_manifest", paths.ensemble_manifest(), paths.root);
  manifest_add_file(manifest, "history_cvae", paths.history_cvae(), paths.root);
  manifest_add_file(manifest, "history_dnn", paths.history_dnn(), paths.root);
  save_manifest(manifest, paths.root);
  return manifest;
}

/// Everything run_evaluate computes, for in-process callers; the same values
/// are what the metric files carry.
struct EvalOutputs {
  ErrorReport dnn_plain, cvae_plain;  // single model / single draw
  ErrorReport dnn_uq, cvae_uq;        // ensemble mean / 200-sample mean
  double dnn_mean_rel_std = 0.0, dnn_max_rel_std = 0.0;
  double cvae_mean_rel_std = 0.0, cvae_max_rel_std = 0.0;
  SubsetReports dnn_hull, cvae_hull;
  std::size_t inside_count = 0, outside_count = 0;
  std::array<double, 7> corr_true{}, corr_dnn{}, corr_cvae{};
};

namespace detail {

inline const nlohmann::json* ref_lookup(const nlohmann::json& refs,
                                        std::initializer_list<const char*> path) {
  const nlohmann::json* cur = &refs;
  for (const char* key : path) {
    if (!cur->is_object() || !cur->contains(key)) return nullptr;
    cur = &cur->at(key);
  }
  return cur;
}

}  // namespace detail

/// Loads the checkpoints written by run_train, evaluates both models on the
/// test partition, and writes metric tables (JSON + aligned text), per-row
/// sample statistics, the hull split and the parity data.
inline EvalOutputs run_evaluate(const RunConfig& config_in) {
  RunConfig config = config_in;
  resolve_seeds(config);
  validate_run_config(config);
  RunPaths paths{config.output_dir};
  std::filesystem::create_directories(paths.metrics());

  DnnCheckpoint dnn = load_dnn_checkpoint(paths.dnn_ckpt());
  CvaeCheckpoint cvae = load_cvae_checkpoint(paths.cvae_ckpt());
  if (!(dnn.scaler == cvae.model.scaler))
    throw DataError("checkpoint/scaler mismatch between dnn.json and cvae.json");
  const ScalerParams& scaler = dnn.scaler;

  EnsembleManifest em = load_ensemble_manifest(paths.ensemble_manifest());
  Ensemble ensemble;
  for (std::size_t i = 0; i < em.member_paths.size(); ++i) {
    DnnCheckpoint member = load_dnn_checkpoint(paths.checkpoints() / em.member_paths[i]);
    if (!(member.scaler == scaler))
      throw DataError("checkpoint/scaler mismatch in ensemble member " + em.member_paths[i]);
    ensemble.members.push_back(std::move(member.net));
    ensemble.seeds.push_back(em.seeds[i]);
  }
  validate_ensemble(ensemble);

  Dataset data = stage_ingest(config);
  SplitResult parts = split(data, config.split);
  const Eigen::Index n_test = static_cast<Eigen::Index>(parts.test.size());

  Eigen::MatrixXd test_conditions(n_test, kNumConditions);
  std::vector<double> truth(static_cast<std::size_t>(n_test));
  for (Eigen::Index i = 0; i < n_test; ++i) {
    const ChfRecord& r = parts.test.records[static_cast<std::size_t>(i)];
    for (int c = 0; c < kNumConditions; ++c) test_conditions(i, c) = get_column(r, c);
    truth[static_cast<std::size_t>(i)] = r.chf;
  }

  RunManifest manifest = load_and_validate_manifest(paths.root);
  EvalOutputs out;

  // Single-model predictions and per-member batched ensemble predictions.
  std::vector<double> dnn_pred;
  std::vector<std::vector<double>> member_preds;
  {
    detail::StageTimer t(manifest, "evaluate_dnn");
    dnn_pred = predict(dnn.net, test_conditions, scaler);
    member_preds.reserve(ensemble.members.size());
    for (const DenseNetwork& m : ensemble.members)
      member_preds.push_back(predict(m, test_conditions, scaler));
  }

  // CVAE sampling: one rng stream per test row, derived from (seed, 5, row),
  // so results do not depend on the worker count.
  std::vector<double> cvae_single(static_cast<std::size_t>(n_test));
  std::vector<SampleStats> cvae_stats(static_cast<std::size_t>(n_test));
  {
    detail::StageTimer t(manifest, "evaluate_cvae");
    const std::uint64_t gen_base = derive_seed(config.seed, 5);
    std::atomic<Eigen::Index> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker_fn = [&]() {
      while (true) {
        const Eigen::Index i = next.fetch_add(1);
        if (i >= n_test) return;
        try {
          Rng row_rng(derive_seed(gen_base, static_cast<std::uint64_t>(i)));
          std::vector<double> samples = generate(
              cvae.model, test_conditions.row(i).transpose(), config.cvae_samples, row_rng);
          cvae_single[static_cast<std::size_t>(i)] = samples.front();
          cvae_stats[static_cast<std::size_t>(i)] = sample_stats(samples);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < resolved_workers(config); ++w) pool.emplace_back(worker_fn);
    for (std::thread& t2 : pool) t2.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  std::vector<SampleStats> dnn_stats(static_cast<std::size_t>(n_test));
  std::vector<double> dnn_mean(static_cast<std::size_t>(n_test));
  std::vector<double> cvae_mean(static_cast<std::size_t>(n_test));
  {
    std::vector<double> tmp(ensemble.members.size());
    for (Eigen::Index i = 0; i < n_test; ++i) {
      for (std::size_t m = 0; m < ensemble.members.size(); ++m)
        tmp[m] = member_preds[m][static_cast<std::size_t>(i)];
      dnn_stats[static_cast<std::size_t>(i)] = sample_stats(tmp);
      dnn_mean[static_cast<std::size_t>(i)] = dnn_stats[static_cast<std::size_t>(i)].mu_samples;
      cvae_mean[static_cast<std::size_t>(i)] = cvae_stats[static_cast<std::size_t>(i)].mu_samples;
    }
  }

  out.dnn_plain = error_report(dnn_pred, truth);
  out.cvae_plain = error_report(cvae_single, truth);
  out.dnn_uq = error_report(dnn_mean, truth);
  out.cvae_uq = error_report(cvae_mean, truth);

  auto rel_std_stats = [](const std::vector<SampleStats>& stats, double& mean_out,
                          double& max_out) {
    double sum = 0.0, mx = 0.0;
    for (const SampleStats& s : stats) {
      const double rs = relative_std(s);
      sum += rs;
      mx = std::max(mx, rs);
    }
    mean_out = sum / static_cast<double>(stats.size());
    max_out = mx;
  };
  rel_std_stats(dnn_stats, out.dnn_mean_rel_std, out.dnn_max_rel_std);
  rel_std_stats(cvae_stats, out.cvae_mean_rel_std, out.cvae_max_rel_std);

  // Hull split on standardized coordinates, UQ-mean errors per subset.
  HullSplit hull_split;
  {
    detail::StageTimer t(manifest, "hull_split");
    Eigen::MatrixXd train_std =
        apply_scaler(parts.train, scaler).leftCols(kNumConditions).eval();
    Eigen::MatrixXd test_std =
        apply_scaler(parts.test, scaler).leftCols(kNumConditions).eval();
    hull_split = split_by_hull(train_std, test_std, config.hull_tolerance,
                               resolved_workers(config));
  }
  out.inside_count = hull_split.inside_indices.size();
  out.outside_count = hull_split.outside_indices.size();
  out.dnn_hull = split_error_report(hull_split, dnn_mean, truth);
  out.cvae_hull = split_error_report(hull_split, cvae_mean, truth);

  // Pairwise correlations of conditions against true / predicted / generated.
  out.corr_true = correlation_table(test_conditions, truth);
  out.corr_dnn = correlation_table(test_conditions, dnn_pred);
  out.corr_cvae = correlation_table(test_conditions, cvae_single);

  // ---- Emit metric files ----
  const nlohmann::json conventions = conventions_json(config);
  detail::write_json_file(
      {{"conventions", conventions},
       {"dnn", error_report_to_json(out.dnn_plain)},
       {"cvae", error_report_to_json(out.cvae_plain)}},
      paths.metrics_plain());
  detail::write_json_file(
      {{"conventions", conventions},
       {"dnn",
        {{"report", error_report_to_json(out.dnn_uq)},
         {"mean_relative_std_pct", out.dnn_mean_rel_std},
         {"max_relative_std_pct", out.dnn_max_rel_std},
         {"samples", static_cast<int>(ensemble.members.size())}}},
       {"cvae",
        {{"report", error_report_to_json(out.cvae_uq)},
         {"mean_relative_std_pct", out.cvae_mean_rel_std},
         {"max_relative_std_pct", out.cvae_max_rel_std},
         {"samples", config.cvae_samples}}}},
      paths.metrics_uq());
  {
    auto subset_json = [](const std::optional<ErrorReport>& r) -> nlohmann::json {
      return r ? error_report_to_json(*r) : nlohmann::json(nullptr);
    };
    detail::write_json_file(
        {{"conventions", conventions},
         {"inside_count", out.inside_count},
         {"outside_count", out.outside_count},
         {"dnn", {{"inside", subset_json(out.dnn_hull.inside)},
                  {"outside", subset_json(out.dnn_hull.outside)}}},
         {"cvae", {{"inside", subset_json(out.cvae_hull.inside)},
                   {"outside", subset_json(out.cvae_hull.outside)}}}},
        paths.metrics_hull());
  }
  {
    nlohmann::json names = nlohmann::json::array();
    for (int c = 0; c < kNumConditions; ++c) names.push_back(kColumnNames[c]);
    detail::write_json_file({{"conventions", conventions},
                             {"parameters", names},
                             {"true", out.corr_true},
                             {"dnn", out.corr_dnn},
                             {"cvae", out.corr_cvae}},
                            paths.correlations());
  }
  {
    std::ofstream f(paths.parity_csv());
    f << "row,truth,dnn,cvae,dnn_ens_mean,cvae_mean\n";
    for (Eigen::Index i = 0; i < n_test; ++i) {
      const auto k = static_cast<std::size_t>(i);
      f << i << ',' << detail::fmt_full(truth[k]) << ',' << detail::fmt_full(dnn_pred[k]) << ','
        << detail::fmt_full(cvae_single[k]) << ',' << detail::fmt_full(dnn_mean[k]) << ','
        << detail::fmt_full(cvae_mean[k]) << "\n";
    }
  }
  auto write_samples_csv = [](const std::filesystem::path& p,
                              const std::vector<SampleStats>& stats) {
    std::ofstream f(p);
    f << "row,mu_samples,sigma_samples,relative_std_pct\n";
    for (std::size_t i = 0; i < stats.size(); ++i)
      f << i << ',' << detail::fmt_full(stats[i].mu_samples) << ','
        << detail::fmt_full(stats[i].sigma_samples) << ','
        << detail::fmt_full(relative_std(stats[i])) << "\n";
  };
  write_samples_csv(paths.samples_dnn(), dnn_stats);
  write_samples_csv(paths.samples_cvae(), cvae_stats);
  {
    std::ofstream f(paths.hull_split_csv());
    f << "row,label\n";
    std::vector<const char*> label(static_cast<std::size_t>(n_test), "outside");
    for (int i : hull_split.inside_indices) label[static_cast<std::size_t>(i)] = "inside";
    for (Eigen::Index i = 0; i < n_test; ++i)
      f << i << ',' << label[static_cast<std::size_t>(i)] << "\n";
  }

  // ---- Aligned text tables ----
  nlohmann::json refs = nlohmann::json::object();
  if (!config.reference_metrics_path.empty())
    refs = detail::read_json_file(config.reference_metrics_path);
  {
    std::string t;
    t += "# chfkit " + std::string(kVersion) + "  seed=" + std::to_string(config.seed) + "\n";
    t += "# conventions: population std (divide by n); strict > rule for the 10% "
         "exceedance fraction;\n";
    t += "#   R^2 on physical kW/m^2; CVAE generation samples the standard-normal latent "
         "prior.\n";
    auto join_widths = [](const std::vector<int>& widths) {
      std::string s = "[";
      for (std::size_t i = 0; i < widths.size(); ++i)
        s += (i ? "," : "") + std::to_string(widths[i]);
      return s + "]";
    };
    t += "# dnn: hidden=" + join_widths(config.dnn.hidden_widths) +
         " epochs=" + std::to_string(config.dnn.epochs) +
         " batch=" + std::to_string(config.dnn.batch_size) +
         " lr=" + detail::fmt4(config.dnn.initial_lr) +
         " decay=" + detail::fmt4(config.dnn.lr_decay) + "\n";
    t += "# cvae: latent=" + std::to_string(config.cvae.latent_dim) +
         " hidden=" + join_widths(config.cvae.encoder_hidden) +
         " epochs=" + std::to_string(config.cvae.epochs) +
         " batch=" + std::to_string(config.cvae.batch_size) +
         " kl_weight=" + detail::fmt4(config.cvae.kl_weight) + "\n";
    t += "# ensemble members=" + std::to_string(config.ensemble_members) +
         "; cvae samples per condition=" + std::to_string(config.cvae_samples) + "\n\n";

    auto row = [&](const char* label, double dnn_v, double cvae_v, const char* ref_field,
                   const char* table_key) {
      char buf[160];
      std::string rd = "-", rc = "-";
      if (const auto* p = detail::ref_lookup(refs, {table_key, "dnn"}))
        if (p->contains(ref_field)) rd = detail::fmt4(p->at(ref_field).get<double>());
      if (const auto* p = detail::ref_lookup(refs, {table_key, "cvae"}))
        if (p->contains(ref_field)) rc = detail::fmt4(p->at(ref_field).get<double>());
      std::snprintf(buf, sizeof(buf), "%-22s %10s %10s %12s %12s\n", label,
                    detail::fmt4(dnn_v).c_str(), detail::fmt4(cvae_v).c_str(), rd.c_str(),
                    rc.c_str());
      t += buf;
    };

    t += "Absolute relative errors (single DNN / single CVAE draw)\n";
    char hdr[160];
    std::snprintf(hdr, sizeof(hdr), "%-22s %10s %10s %12s %12s\n", "Metric", "DNN", "CVAE",
                  "ref DNN", "ref CVAE");
    t += hdr;
    row("mu_error (%)", out.dnn_plain.mean_abs_rel_error_pct,
        out.cvae_plain.mean_abs_rel_error_pct, "mean_abs_rel_error_pct", "plain");
    row("Max_error (%)", out.dnn_plain.max_abs_rel_error_pct,
        out.cvae_plain.max_abs_rel_error_pct, "max_abs_rel_error_pct", "plain");
    row("Std_error (%)", out.dnn_plain.std_abs_rel_error_pct,
        out.cvae_plain.std_abs_rel_error_pct, "std_abs_rel_error_pct", "plain");
    row("F_error>10% (%)", out.dnn_plain.frac_above_10pct, out.cvae_plain.frac_above_10pct,
        "frac_above_10pct", "plain");
    row("R^2", out.dnn_plain.r_squared, out.cvae_plain.r_squared, "r_squared", "plain");

    t += "\nAbsolute relative errors with UQ (ensemble mean / sample mean)\n";
    t += hdr;
    row("mu_error (%)", out.dnn_uq.mean_abs_rel_error_pct, out.cvae_uq.mean_abs_rel_error_pct,
        "mean_abs_rel_error_pct", "uq");
    row("Max_error (%)", out.dnn_uq.max_abs_rel_error_pct, out.cvae_uq.max_abs_rel_error_pct,
        "max_abs_rel_error_pct", "uq");
    row("Std_error (%)", out.dnn_uq.std_abs_rel_error_pct, out.cvae_uq.std_abs_rel_error_pct,
        "std_abs_rel_error_pct", "uq");
    row("Mean relative std (%)", out.dnn_mean_rel_std, out.cvae_mean_rel_std,
        "mean_relative_std_pct", "uq");
    row("Max relative std (%)", out.dnn_max_rel_std, out.cvae_max_rel_std,
        "max_relative_std_pct", "uq");
    row("F_error>10% (%)", out.dnn_uq.frac_above_10pct, out.cvae_uq.frac_above_10pct,
        "frac_above_10pct", "uq");

    t += "\nDomain generalization (UQ means, inside vs outside the training hull)\n";
    t += "inside n=" + std::to_string(out.inside_count) +
         "  outside n=" + std::to_string(out.outside_count) + "\n";
    auto hull_row = [&](const char* label, auto getter) {
      auto cell = [&](const std::optional<ErrorReport>& r) -> std::string {
        return r ? detail::fmt4(getter(*r)) : std::string("(empty)");
      };
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%-22s %12s %12s %12s %12s\n", label,
                    cell(out.cvae_hull.inside).c_str(), cell(out.cvae_hull.outside).c_str(),
                    cell(out.dnn_hull.inside).c_str(), cell(out.dnn_hull.outside).c_str());
      t += buf;
    };
    char hdr2[160];
    std::snprintf(hdr2, sizeof(hdr2), "%-22s %12s %12s %12s %12s\n", "Metric", "CVAE in",
                  "CVAE out", "DNN in", "DNN out");
    t += hdr2;
    hull_row("mu_error (%)", [](const ErrorReport& r) { return r.mean_abs_rel_error_pct; });
    hull_row("Max_error (%)", [](const ErrorReport& r) { return r.max_abs_rel_error_pct; });
    hull_row("Std_error (%)", [](const ErrorReport& r) { return r.std_abs_rel_error_pct; });
    hull_row("F_error>10% (%)", [](const ErrorReport& r) { return r.frac_above_10pct; });

    std::ofstream f(paths.tables());
    f << t;
    if (!f) throw DataError("write failed: " + paths.tables().string());
  }

  manifest_add_file(manifest, "metrics_plain", paths.metrics_plain(), paths.root);
  manifest_add_file(manifest, "metrics_uq", paths.metrics_uq(), paths.root);
  manifest_add_file(manifest, "metrics_hull", paths.metrics_hull(), paths.root);
  manifest_add_file(manifest, "correlations", paths.correlations(), paths.root);
  manifest_add_file(manifest, "tables", paths.tables(), paths.root);
  manifest_add_file(manifest, "parity_csv", paths.parity_csv(), paths.root);
  manifest_add_file(manifest, "samples_dnn", paths.samples_dnn(), paths.root);
  manifest_add_file(manifest, "samples_cvae", paths.samples_cvae(), paths.root);
  manifest_add_file(manifest, "hull_split_csv", paths.hull_split_csv(), paths.root);
  save_manifest(manifest, paths.root);
  return out;
}

/// Standalone hull classification (no models involved): split the dataset,
/// fit the scaler on the train partition, classify the test points, and
/// write the two-column split file.
inline HullSplit run_hull_split(const RunConfig& config_in) {
  RunConfig config = config_in;
  resolve_seeds(config);
  validate_run_config(config);
  RunPaths paths{config.output_dir};
  std::filesystem::create_directories(paths.metrics());

  Dataset data = stage_ingest(config);
  SplitResult parts = split(data, config.split);
  ScalerParams scaler = fit_scaler(parts.train);
  Eigen::MatrixXd train_std = apply_scaler(parts.train, scaler).leftCols(kNumConditions).eval();
  Eigen::MatrixXd test_std = apply_scaler(parts.test, scaler).leftCols(kNumConditions).eval();
  HullSplit hs =
      split_by_hull(train_std, test_std, config.hull_tolerance, resolved_workers(config));

  std::ofstream f(paths.hull_split_csv());
  f << "row,label\n";
  std::vector<const char*> label(parts.test.size(), "outside");
  for (int i : hs.inside_indices) label[static_cast<std::size_t>(i)] = "inside";
  for (std::size_t i = 0; i < parts.test.size(); ++i) f << i << ',' << label[i] << "\n";
  if (!f) throw DataError("write failed: " + paths.hull_split_csv().string());
  return hs;
}

/// Renders the standard figures from a run's metric files: parity scatter
/// with +-10% bounds, relative-error histograms, and inside/outside error
/// histograms per model.
inline void run_plot(const RunConfig& config_in) {
  RunPaths paths{config_in.output_dir};
  std::filesystem::create_directories(paths.plots());

  std::ifstream parity(paths.parity_csv());
  if (!parity) throw DataError("missing metric file (run evaluate first): " +
                               paths.parity_csv().string());
  std::string line;
  std::getline(parity, line);  // header
  std::vector<double> truth, dnn, cvae, dnn_mean, cvae_mean;
  while (std::getline(parity, line)) {
    if (line.empty()) continue;
    double row, t, d, c, dm, cm;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf", &row, &t, &d, &c, &dm, &cm) != 6)
      throw DataError("malformed parity.csv line: " + line);
    truth.push_back(t);
    dnn.push_back(d);
    cvae.push_back(c);
    dnn_mean.push_back(dm);
    cvae_mean.push_back(cm);
  }
  if (truth.empty()) throw DataError("parity.csv has no data rows");

  svg::write_parity_plot(paths.plots() / "parity.svg", truth,
                         {{"DNN", "#1f77b4", dnn}, {"CVAE", "#d62728", cvae}},
                         "True vs generated and predicted CHF (with +-10% bounds)");

  auto signed_rel_errors = [&](const std::vector<double>& pred) {
    std::vector<double> e(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
      e[i] = (pred[i] - truth[i]) / truth[i] * 100.0;
    return e;
  };
  svg::write_histogram(paths.plots() / "error_hist.svg",
                       {{"DNN", "#1f77b4", signed_rel_errors(dnn)},
                        {"CVAE", "#d62728", signed_rel_errors(cvae)}},
                       60, "Relative error distribution", "relative error (%)");

  // Inside/outside histograms need the hull labels.
  std::ifstream hull(paths.hull_split_csv());
  if (!hull) throw DataError("missing metric file (run evaluate first): " +
                             paths.hull_split_csv().string());
  std::getline(hull, line);
  std::vector<bool> inside;
  while (std::getline(hull, line)) {
    if (line.empty()) continue;
    inside.push_back(line.find("inside") != std::string::npos);
  }
  if (inside.size() != truth.size())
    throw DataError("hull_split.csv and parity.csv row counts differ");

  auto split_errors = [&](const std::vector<double>& pred, bool want_inside) {
    std::vector<double> e;
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (inside[i] == want_inside) e.push_back((pred[i] - truth[i]) / truth[i] * 100.0);
    return e;
  };
  svg::write_histogram(paths.plots() / "hull_error_hist_dnn.svg",
                       {{"inside hull", "#2ca02c", split_errors(dnn_mean, true)},
                        {"outside hull", "#9467bd", split_errors(dnn_mean, false)}},
                       60, "DNN ensemble-mean relative error by domain", "relative error (%)");
  svg::write_histogram(paths.plots() / "hull_error_hist_cvae.svg",
                       {{"inside hull", "#2ca02c", split_errors(cvae_mean, true)},
                        {"outside hull", "#9467bd", split_errors(cvae_mean, false)}},
                       60, "CVAE sample-mean relative error by domain", "relative error (%)");

  RunManifest manifest = load_and_validate_manifest(paths.root);
  manifest_add_file(manifest, "plot_parity", paths.plots() / "parity.svg", paths.root);
  manifest_add_file(manifest, "plot_error_hist", paths.plots() / "error_hist.svg", paths.root);
  manifest_add_file(manifest, "plot_hull_dnn", paths.plots() / "hull_error_hist_dnn.svg",
                    paths.root);
  manifest_add_file(manifest, "plot_hull_cvae", paths.plots() / "hull_error_hist_cvae.svg",
                    paths.root);
  save_manifest(manifest, paths.root);
}

/// True when the output directory already holds checkpoints trained under
/// the same training-relevant configuration (dataset, seed, split, model and
/// ensemble settings). A stale or foreign checkpoint set must not be reused:
/// it would be evaluated against a different split than it was trained on.
inline bool checkpoints_match_config(const RunConfig& config_in) {
  RunPaths paths{config_in.output_dir};
  if (!std::filesystem::exists(paths.dnn_ckpt()) ||
      !std::filesystem::exists(paths.cvae_ckpt()) ||
      !std::filesystem::exists(paths.ensemble_manifest()))
    return false;
  try {
    RunManifest m = load_and_validate_manifest(paths.root);
    RunConfig resolved = config_in;
    resolve_seeds(resolved);
    const nlohmann::json current = run_config_to_json(resolved);
    for (const char* key :
         {"dataset", "synthetic", "seed", "split", "dnn", "cvae", "ensemble_members"}) {
      if (m.config_echo.value(key, nlohmann::json{}) != current.value(key, nlohmann::json{}))
        return false;
    }
    return true;
  } catch (const Error&) {
    return false;
  }
}

/// Full pipeline: train (unless matching checkpoints already exist),
/// evaluate, plot, and drop a consolidated report.txt.
inline EvalOutputs run_report(const RunConfig& config) {
  RunPaths paths{config.output_dir};
  if (!checkpoints_match_config(config)) run_train(config);
  EvalOutputs out = run_evaluate(config);
  run_plot(config);

  std::ifstream tables(paths.tables());
  std::string tables_text((std::istreambuf_iterator<char>(tables)),
                          std::istreambuf_iterator<char>());
  std::ofstream report(paths.report());
  report << "chfkit run report\n=================\n\n" << tables_text << "\nArtifacts:\n";
  RunManifest manifest = load_and_validate_manifest(paths.root);
  for (const auto& [key, rel] : manifest.files) report << "  " << rel << "\n";
  if (!report) throw DataError("write failed: " + paths.report().string());
  report.close();
  manifest_add_file(manifest, "report", paths.report(), paths.root);
  save_manifest(manifest, paths.root);
  return out;
}

}  // namespace chfkit
