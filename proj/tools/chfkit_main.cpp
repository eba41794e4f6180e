// chfkit command-line front end: ingest -> split -> train -> generate/predict
// -> UQ -> hull split -> tables and plots. Exit codes: 0 success, 1 usage,
// 2 data error, 3 numerical failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chfkit/chfkit.hpp"

namespace {

using namespace chfkit;

struct CommonOpts {
  std::string config_path;
  std::string data_path;
  std::string out_dir;
  std::int64_t seed = -1;
  int workers = -1;
  int synthetic_n = 0;
  double synthetic_noise = 0.0;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_synthetic = true) {
  cmd->add_option("--config", o.config_path, "JSON run configuration file");
  cmd->add_option("--data", o.data_path, "CHF dataset CSV (overrides config)");
  cmd->add_option("--out", o.out_dir, "output directory (overrides config)");
  cmd->add_option("--seed", o.seed, "global seed (overrides config)");
  cmd->add_option("--workers", o.workers, "worker thread count (overrides config)");
  if (with_synthetic) {
    cmd->add_option("--synthetic", o.synthetic_n,
                    "use a synthetic dataset of this size instead of a CSV");
    cmd->add_option("--noise", o.synthetic_noise,
                    "Gaussian noise std for the synthetic dataset [kW/m^2]");
  }
}

RunConfig build_config(const CommonOpts& o) {
  RunConfig c;
  if (!o.config_path.empty()) c = load_run_config(o.config_path);
  if (!o.data_path.empty()) c.dataset_path = o.data_path;
  if (!o.out_dir.empty()) c.output_dir = o.out_dir;
  if (o.seed >= 0) c.seed = static_cast<std::uint64_t>(o.seed);
  if (o.workers >= 0) c.workers = o.workers;
  if (o.synthetic_n > 0) {
    c.dataset_path.clear();
    c.synthetic.n = o.synthetic_n;
    c.synthetic.noise_std = o.synthetic_noise;
  }
  return c;
}

void print_dataset_summary(const Dataset& ds) {
  std::printf("records: %zu   source: %s\n", ds.size(), ds.source_tag.c_str());
  std::printf("%-11s %14s %14s %14s\n", "column", "min", "mean", "max");
  for (int c = 0; c < kNumColumns; ++c) {
    double lo = get_column(ds.records.front(), c), hi = lo, sum = 0.0;
    for (const ChfRecord& r : ds.records) {
      const double v = get_column(r, c);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    std::printf("%-11s %14.6g %14.6g %14.6g\n", kColumnNames[c], lo,
                sum / static_cast<double>(ds.size()), hi);
  }
}

int cmd_ingest(const CommonOpts& o) {
  RunConfig c = build_config(o);
  if (c.dataset_path.empty() && c.synthetic.n < 1)
    throw CLI::ValidationError("ingest", "need --data or --synthetic");
  Dataset ds = stage_ingest(c);
  print_dataset_summary(ds);
  if (c.synthetic.n > 0 && !c.output_dir.empty()) {
    std::filesystem::create_directories(c.output_dir);
    const auto path = std::filesystem::path(c.output_dir) / "synthetic.csv";
    write_chf_csv(ds, path);
    std::printf("wrote %s\n", path.string().c_str());
  }
  return 0;
}

int cmd_train(const CommonOpts& o) {
  RunConfig c = build_config(o);
  RunManifest m = run_train(c);
  std::printf("training complete; checkpoints under %s\n", c.output_dir.c_str());
  for (const auto& [stage, sec] : m.timings_sec)
    std::printf("  %-16s %8.2f s\n", stage.c_str(), sec);
  return 0;
}

int cmd_evaluate(const CommonOpts& o) {
  RunConfig c = build_config(o);
  EvalOutputs e = run_evaluate(c);
  std::ifstream tables(RunPaths{c.output_dir}.tables());
  std::cout << tables.rdbuf();
  std::printf("inside hull: %zu   outside hull: %zu\n", e.inside_count, e.outside_count);
  return 0;
}

int cmd_hull_split(const CommonOpts& o) {
  RunConfig c = build_config(o);
  HullSplit hs = run_hull_split(c);
  std::printf("inside: %zu   outside: %zu\n", hs.inside_indices.size(),
              hs.outside_indices.size());
  std::printf("wrote %s\n", RunPaths{c.output_dir}.hull_split_csv().string().c_str());
  return 0;
}

int cmd_generate(const CommonOpts& o, const std::string& checkpoint,
                 const std::vector<std::string>& at, int n_samples, std::int64_t gen_seed) {
  RunConfig c = build_config(o);
  std::vector<Vector> conditions;
  for (const std::string& spec : at) {
    Vector v(kNumConditions);
    if (std::sscanf(spec.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2], &v[3],
                    &v[4], &v[5], &v[6]) != kNumConditions)
      throw CLI::ValidationError("--at", "expected 7 comma-separated values: " + spec);
    conditions.push_back(v);
  }
  if (conditions.empty() && c.dataset_path.empty() && c.synthetic.n < 1)
    throw CLI::ValidationError("generate", "no conditions given (use --at or --data)");

  const std::string ckpt_path =
      checkpoint.empty() ? RunPaths{c.output_dir}.cvae_ckpt().string() : checkpoint;
  CvaeCheckpoint ckpt = load_cvae_checkpoint(ckpt_path);

  if (!c.dataset_path.empty() || c.synthetic.n > 0) {
    Dataset ds = stage_ingest(c);
    for (const ChfRecord& r : ds.records) {
      Vector v(kNumConditions);
      for (int i = 0; i < kNumConditions; ++i) v[i] = get_column(r, i);
      conditions.push_back(v);
    }
  }

  std::filesystem::create_directories(c.output_dir);
  const auto out_path = std::filesystem::path(c.output_dir) / "generated.csv";
  std::ofstream f(out_path);
  f << "condition_index,sample_index,chf_kWm2\n";
  const std::uint64_t base =
      gen_seed >= 0 ? static_cast<std::uint64_t>(gen_seed) : derive_seed(c.seed, 5);
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    Rng rng(derive_seed(base, i));
    std::vector<double> samples = generate(ckpt.model, conditions[i], n_samples, rng);
    SampleStats stats = sample_stats(samples);
    for (std::size_t s = 0; s < samples.size(); ++s) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", samples[s]);
      f << i << ',' << s << ',' << buf << "\n";
    }
    std::printf("condition %zu: mu=%.6g kW/m^2  sigma=%.6g  rel_std=%.4g%%\n", i,
                stats.mu_samples, stats.sigma_samples, relative_std(stats));
  }
  std::printf("wrote %s\n", out_path.string().c_str());
  return 0;
}

int cmd_plot(const CommonOpts& o) {
  RunConfig c = build_config(o);
  run_plot(c);
  std::printf("plots written under %s\n", RunPaths{c.output_dir}.plots().string().c_str());
  return 0;
}

int cmd_report(const CommonOpts& o) {
  RunConfig c = build_config(o);
  EvalOutputs e = run_report(c);
  std::ifstream report(RunPaths{c.output_dir}.report());
  std::cout << report.rdbuf();
  (void)e;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chfkit: CHF surrogate models with uncertainty and domain diagnostics"};
  app.require_subcommand(1);

  CommonOpts o;
  std::string gen_checkpoint;
  std::vector<std::string> gen_at;
  int gen_samples = 200;
  std::int64_t gen_seed = -1;

  CLI::App* ingest = app.add_subcommand("ingest", "validate and summarize a dataset");
  add_common(ingest, o);
  CLI::App* train = app.add_subcommand("train", "train the CVAE, DNN and seed ensemble");
  add_common(train, o);
  CLI::App* evaluate = app.add_subcommand("evaluate", "compute metric tables from checkpoints");
  add_common(evaluate, o);
  CLI::App* hull = app.add_subcommand("hull-split", "classify test points by hull membership");
  add_common(hull, o);
  CLI::App* gen = app.add_subcommand("generate", "sample CHF values from a trained CVAE");
  add_common(gen, o);
  gen->add_option("--checkpoint", gen_checkpoint, "CVAE checkpoint (default: <out>/checkpoints/cvae.json)");
  gen->add_option("--at", gen_at, "condition vector 'D,L,P,G,Tin,X,dHin' (repeatable)");
  gen->add_option("--samples", gen_samples, "samples per condition");
  gen->add_option("--gen-seed", gen_seed, "seed for the generation stream");
  CLI::App* plot = app.add_subcommand("plot", "render figures from metric files");
  add_common(plot, o);
  CLI::App* report = app.add_subcommand("report", "full pipeline: train, evaluate, plot");
  add_common(report, o);

  try {
    app.parse(argc, argv);
    if (ingest->parsed()) return cmd_ingest(o);
    if (train->parsed()) return cmd_train(o);
    if (evaluate->parsed()) return cmd_evaluate(o);
    if (hull->parsed()) return cmd_hull_split(o);
    if (gen->parsed()) return cmd_generate(o, gen_checkpoint, gen_at, gen_samples, gen_seed);
    if (plot->parsed()) return cmd_plot(o);
    if (report->parsed()) return cmd_report(o);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const chfkit::NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const chfkit::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
