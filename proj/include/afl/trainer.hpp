#pragma once

#include <cstdint>
#include <filesystem>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "afl/adaptive_params.hpp"
#include "afl/losses.hpp"
#include "afl/metrics.hpp"
#include "afl/synthgen.hpp"
#include "afl/tinyseg.hpp"

namespace afl {

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  int epochs = 40;
  int batch_size = 1;
  std::uint64_t seed = 0;
  double clamp_eps = kProbabilityEps;
  double threshold = 0.5;
  bool save_predictions = true;
  LossSpec loss;

  void validate() const;
  SgdConfig sgd() const { return {lr, momentum, weight_decay}; }
};

struct Sample {
  std::size_t id = 0;
  std::string name;
  VolumeBin volume_bin = VolumeBin::Large;
  SmoothnessBin smoothness_bin = SmoothnessBin::Good;
  Volume3D image;
  MaskVolume mask;
};

std::vector<Sample> load_samples(const Manifest& manifest, bool train);

/// Memoizes compute_adaptive_params by mask content.
class AdaptiveParamsCache {
 public:
  const AdaptiveParams& get(const MaskVolume& mask);
  std::size_t size() const { return size_; }

 private:
  struct Entry {
    MaskVolume mask;
    AdaptiveParams params;
  };
  std::map<std::uint64_t, std::deque<Entry>> buckets_;
  std::size_t size_ = 0;
};

/// FNV-1a over the dims and mask bytes.
std::uint64_t mask_hash(const MaskVolume& mask);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  SampleMetrics val;
};

struct SampleEval {
  std::string name;
  SampleMetrics metrics;
};

struct TrainResult {
  TinySeg3D model;
  std::vector<EpochRecord> history;
  std::vector<SampleEval> final_val;
  std::vector<Volume3D> val_predictions;  // final model, validation order
};

/// Mean per-sample metrics of `model` on `samples`.
SampleMetrics evaluate_model(const TinySeg3D& model, const std::vector<Sample>& samples, double threshold,
                             std::vector<SampleEval>* per_sample = nullptr,
                             std::vector<Volume3D>* predictions = nullptr);

/// Deterministic in (train, val, cfg). One SGD step per sample visit; the
/// visit order is reshuffled every epoch. Throws NumericalError on a
/// non-finite loss.
TrainResult train_model(const std::vector<Sample>& train, const std::vector<Sample>& val, const TrainConfig& cfg);

/// Trains on the manifest's train split and writes `history.csv`,
/// `model.bin`, `config.echo.json`, `val_eval.csv` and (optionally)
/// `predictions/<name>_pred.vol.*` into `run_dir`.
TrainResult run_training(const Manifest& manifest, const TrainConfig& cfg, const std::filesystem::path& run_dir);

std::string history_csv(const std::vector<EpochRecord>& history);
std::string eval_csv(const std::vector<SampleEval>& rows);

}  // namespace afl
