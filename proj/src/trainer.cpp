#include "afl/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "afl/config.hpp"
#include "afl/errors.hpp"
#include "afl/log.hpp"
#include "afl/rng.hpp"
#include "afl/summation.hpp"
#include "afl/volume_io.hpp"

namespace afl {
namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw InvalidInput("lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw InvalidInput("weight_decay must be >= 0");
  if (epochs < 1) throw InvalidInput("epochs must be >= 1");
  if (batch_size != 1) throw InvalidInput("only batch_size 1 is supported");
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidInput("threshold must lie in (0,1)");
  loss.validate();
}

std::vector<Sample> load_samples(const Manifest& manifest, bool train) {
  std::vector<Sample> out;
  for (const auto& e : manifest.split(train)) {
    Sample s;
    s.id = e.id;
    s.name = sample_name(e.id);
    s.volume_bin = e.volume_bin;
    s.smoothness_bin = e.smoothness_bin;
    s.image = read_image(manifest.dir / e.image);
    s.mask = read_mask(manifest.dir / e.mask);
    require_same_dims(s.image.dims(), s.mask.dims(), s.name.c_str());
    out.push_back(std::move(s));
  }
  return out;
}

std::uint64_t mask_hash(const MaskVolume& mask) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t byte) {
    h ^= byte;
    h *= 0x100000001b3ULL;
  };
  for (std::size_t e : {mask.dims().nz, mask.dims().ny, mask.dims().nx}) {
    for (int b = 0; b < 8; ++b) mix((e >> (8 * b)) & 0xff);
  }
  for (auto v : mask.values()) mix(v);
  return h;
}

const AdaptiveParams& AdaptiveParamsCache::get(const MaskVolume& mask) {
  auto& bucket = buckets_[mask_hash(mask)];
  for (const auto& e : bucket) {
    if (e.mask == mask) return e.params;
  }
  bucket.push_back({mask, compute_adaptive_params(mask)});
  ++size_;
  return bucket.back().params;
}

SampleMetrics evaluate_model(const TinySeg3D& model, const std::vector<Sample>& samples, double threshold,
                             std::vector<SampleEval>* per_sample, std::vector<Volume3D>* predictions) {
  CompensatedSum iou_s, dsc_s, sen_s, spe_s;
  for (const auto& s : samples) {
    Volume3D pred = model.forward(s.image);
    const SampleMetrics m = evaluate(confusion(pred, s.mask, threshold));
    iou_s.add(m.iou);
    dsc_s.add(m.dsc);
    sen_s.add(m.sensitivity);
    spe_s.add(m.specificity);
    if (per_sample) per_sample->push_back({s.name, m});
    if (predictions) predictions->push_back(std::move(pred));
  }
  const double n = samples.empty() ? 1.0 : static_cast<double>(samples.size());
  return {iou_s.value() / n, dsc_s.value() / n, sen_s.value() / n, spe_s.value() / n};
}

TrainResult train_model(const std::vector<Sample>& train, const std::vector<Sample>& val, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw InvalidInput("training set is empty");
  LossSpec spec = cfg.loss;
  spec.clamp_eps = cfg.clamp_eps;

  TrainResult result;
  result.model = TinySeg3D::initialized(derive_seed(cfg.seed, 0));
  Rng order_rng(derive_seed(cfg.seed, 1));

  AdaptiveParamsCache cache;
  for (const auto& s : train) {
    if (cache.get(s.mask).counts.p_fg == 0) {
      log::warn(s.name + " has an empty mask; A-FL treats it as pure background");
    }
  }

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);

    CompensatedSum loss_sum;
    for (std::size_t idx : order) {
      const Sample& s = train[idx];
      const auto step = result.model.backward(s.image, s.mask, spec, &cache.get(s.mask));
      if (!std::isfinite(step.loss)) throw NumericalError("non-finite loss on " + s.name);
      loss_sum.add(step.loss);
      sgd_step(result.model, cfg.sgd());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum.value() / static_cast<double>(train.size());
    rec.val = evaluate_model(result.model, val, cfg.threshold);
    result.history.push_back(rec);

    std::ostringstream msg;
    msg << "epoch " << epoch << "/" << cfg.epochs << " loss " << rec.train_loss << " val dsc " << rec.val.dsc;
    log::info(msg.str());
  }
  evaluate_model(result.model, val, cfg.threshold, &result.final_val, &result.val_predictions);
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_iou,val_dsc,val_sensitivity,val_specificity\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," + format_double(r.val.iou) + "," +
           format_double(r.val.dsc) + "," + format_double(r.val.sensitivity) + "," +
           format_double(r.val.specificity) + "\n";
  }
  return out;
}

std::string eval_csv(const std::vector<SampleEval>& rows) {
  std::string out = "id,iou,dsc,sensitivity,specificity\n";
  CompensatedSum a, b, c, d;
  for (const auto& r : rows) {
    out += r.name + "," + format_double(r.metrics.iou) + "," + format_double(r.metrics.dsc) + "," +
           format_double(r.metrics.sensitivity) + "," + format_double(r.metrics.specificity) + "\n";
    a.add(r.metrics.iou);
    b.add(r.metrics.dsc);
    c.add(r.metrics.sensitivity);
    d.add(r.metrics.specificity);
  }
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  out += "mean," + format_double(a.value() / n) + "," + format_double(b.value() / n) + "," +
         format_double(c.value() / n) + "," + format_double(d.value() / n) + "\n";
  return out;
}

namespace {
void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out << text;
}
}  // namespace

TrainResult run_training(const Manifest& manifest, const TrainConfig& cfg, const fs::path& run_dir) {
  cfg.validate();
  const auto train = load_samples(manifest, true);
  const auto val = load_samples(manifest, false);
  if (train.empty()) throw DataError("manifest has no training samples");

  std::error_code ec;
  fs::create_directories(run_dir, ec);
  if (ec) throw DataError("cannot create " + run_dir.string() + ": " + ec.message());

  nlohmann::json echo = {{"train", to_json(cfg)},
                         {"dataset", to_json(manifest.spec)},
                         {"manifest", fs::absolute(manifest.dir / "manifest.json").lexically_normal().string()}};
  write_json_file(echo, run_dir / "config.echo.json");

  TrainResult result = train_model(train, val, cfg);
  write_text(run_dir / "history.csv", history_csv(result.history));
  write_text(run_dir / "val_eval.csv", eval_csv(result.final_val));
  result.model.save(run_dir / "model.bin");
  if (cfg.save_predictions) {
    fs::create_directories(run_dir / "predictions");
    for (std::size_t i = 0; i < val.size(); ++i) {
      write_volume(result.val_predictions[i], run_dir / "predictions" / (val[i].name + "_pred.vol.json"));
    }
  }
  return result;
}

}  // namespace afl
