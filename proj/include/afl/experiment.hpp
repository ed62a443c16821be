#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "afl/losses.hpp"
#include "afl/metrics.hpp"
#include "afl/synthgen.hpp"
#include "afl/trainer.hpp"

namespace afl {

struct Arm {
  std::string name;
  LossSpec loss;
};

/// Arms share the dataset and training settings; only the loss differs.
/// Seed s generates its own dataset (dataset seed = s) and trains with seed s.
struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  TrainConfig train;
  std::vector<Arm> arms;
  std::filesystem::path out_dir = "afl_out";

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

// Layout under out_dir:
//   data/seed_<s>/             generated phantoms and manifest
//   runs/<arm>/seed_<s>/       one training run
//   experiment.json            resolved configuration of the last command
//   <report>.csv, <report>.md  reports
std::filesystem::path data_dir(const std::filesystem::path& out, std::uint64_t seed);
std::filesystem::path run_dir(const std::filesystem::path& out, const std::string& arm, std::uint64_t seed);

/// Generates the dataset for `seed` unless an identical one already exists.
Manifest ensure_dataset(const ExperimentConfig& cfg, std::uint64_t seed);

/// Resolved training configuration of `arm` under `seed`.
TrainConfig arm_train_config(const ExperimentConfig& cfg, const Arm& arm, std::uint64_t seed);

/// Trains every (arm, seed) pair whose run directory is missing or was
/// produced by a different configuration.
void run_arms(const ExperimentConfig& cfg, const std::vector<Arm>& arms);

/// Six rows: none, a, a_gv, a_gm, a_gv_gm, gv_gm (AFL kind with those flags).
std::vector<Arm> ablation_arms(const LossSpec& base = {});
/// One arm per loss kind, named after the kind.
std::vector<Arm> comparison_arms(const LossSpec& base = {});
/// Arms for the bin report: focal (baseline) and afl (all flags).
std::vector<Arm> bin_arms(const LossSpec& base = {});

struct PerSample {
  std::string name;
  SampleMetrics metrics;
};

/// Reads `val_eval.csv` of a finished run.
std::vector<PerSample> read_eval_csv(const std::filesystem::path& file);

/// Metrics recomputed from the saved predictions of a run against the masks
/// of `manifest`'s validation split.
std::vector<PerSample> evaluate_predictions(const Manifest& manifest, const std::filesystem::path& pred_dir,
                                            double threshold);

/// Pairs every `<id>_mask.vol.json` in `mask_dir` with `<id>_pred.vol.json`
/// in `pred_dir`; rows are sorted by id.
std::vector<PerSample> evaluate_directories(const std::filesystem::path& pred_dir,
                                            const std::filesystem::path& mask_dir, double threshold);

struct ArmSummary {
  std::string name;
  std::vector<SampleMetrics> per_seed;  // mean over validation samples, one per seed
  SampleMetrics mean;                   // mean over seeds
  SampleMetrics stddev;                 // sample standard deviation over seeds (0 for one seed)
};

ArmSummary summarize_arm(const std::filesystem::path& out, const std::string& arm,
                         const std::vector<std::uint64_t>& seeds);

struct BinRow {
  std::string group;  // "volume" or "smoothness"
  std::string bin;
  std::size_t count = 0;  // validation samples pooled over seeds
  double dsc_baseline = 0.0;
  double dsc_adaptive = 0.0;
  double improvement = 0.0;           // dsc_adaptive - dsc_baseline
  double relative_improvement = 0.0;  // percent of dsc_baseline
};

/// Per-bin mean DSC over validation samples pooled across seeds.
std::vector<BinRow> bin_rows(const std::filesystem::path& out, const std::string& baseline_arm,
                             const std::string& adaptive_arm, const std::vector<std::uint64_t>& seeds);

struct Report {
  std::string csv;
  std::string markdown;
};

Report ablation_report(const std::vector<ArmSummary>& rows);
Report comparison_report(const std::vector<ArmSummary>& rows);
Report bin_report(const std::vector<BinRow>& rows);

/// Runs the arms (skipping finished ones) and writes `<name>.csv` and `<name>.md`.
Report ablate(const ExperimentConfig& cfg);
Report compare_losses(const ExperimentConfig& cfg);
Report bins(const ExperimentConfig& cfg, const std::string& baseline_arm = "focal",
            const std::string& adaptive_arm = "afl");

/// Rewrites every report whose runs are all present, reading only run
/// artifacts and `experiment.json`. Returns the names of the reports written.
std::vector<std::string> regenerate_reports(const std::filesystem::path& out);

}  // namespace afl
