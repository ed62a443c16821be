#include "afl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "afl/config.hpp"
#include "afl/errors.hpp"
#include "afl/log.hpp"
#include "afl/summation.hpp"
#include "afl/volume_io.hpp"

namespace afl {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kCompleteMarker = ".complete";

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out << text;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

double sample_stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  CompensatedSum sum;
  for (double x : xs) sum.add(x);
  const double mean = sum.value() / static_cast<double>(xs.size());
  CompensatedSum sq;
  for (double x : xs) sq.add((x - mean) * (x - mean));
  return std::sqrt(sq.value() / static_cast<double>(xs.size() - 1));
}

SampleMetrics mean_of(const std::vector<SampleMetrics>& ms) {
  CompensatedSum a, b, c, d;
  for (const auto& m : ms) {
    a.add(m.iou);
    b.add(m.dsc);
    c.add(m.sensitivity);
    d.add(m.specificity);
  }
  const double n = ms.empty() ? 1.0 : static_cast<double>(ms.size());
  return {a.value() / n, b.value() / n, c.value() / n, d.value() / n};
}

struct Reference {
  double iou, dsc;
};

// Full-scale prostate MRI figures for the same configurations.
const std::map<std::string, Reference>& ablation_reference() {
  static const std::map<std::string, Reference> r{
      {"none", {0.641, 0.715}},    {"a", {0.656, 0.733}},       {"a_gv", {0.677, 0.748}},
      {"a_gm", {0.687, 0.756}},    {"a_gv_gm", {0.696, 0.769}}, {"gv_gm", {0.677, 0.746}}};
  return r;
}

const std::map<std::string, Reference>& comparison_reference() {
  static const std::map<std::string, Reference> r{
      {"focal", {0.641, 0.715}}, {"afl", {0.696, 0.769}},     {"dice", {0.665, 0.739}},
      {"ce", {0.630, 0.705}},    {"iou", {0.654, 0.727}},     {"tversky", {0.654, 0.726}},
      {"dice_ce", {0.670, 0.742}}, {"dice_focal", {0.685, 0.757}}};
  return r;
}

// Relative DSC gain of the adaptive loss per bin, in percent.
const std::map<std::string, double>& bin_reference() {
  static const std::map<std::string, double> r{{"volume/large", 4.41},  {"volume/medium", 6.23},
                                               {"volume/small", 7.77},  {"smoothness/good", 5.22},
                                               {"smoothness/medium", 7.69}, {"smoothness/poor", 13.69}};
  return r;
}

std::string reference_cell(const std::map<std::string, Reference>& table, const std::string& key) {
  const auto it = table.find(key);
  if (it == table.end()) return "n/a";
  return fmt(it->second.iou, 3) + " / " + fmt(it->second.dsc, 3);
}

const char* kReferenceLabel = "reference (full scale, not reproduced)";

bool run_complete(const fs::path& dir, const json& expected_echo) {
  if (!fs::exists(dir / kCompleteMarker)) return false;
  for (const char* f : {"history.csv", "model.bin", "val_eval.csv", "config.echo.json"}) {
    if (!fs::exists(dir / f)) return false;
  }
  const json echo = read_json_file(dir / "config.echo.json");
  return echo.value("train", json()) == expected_echo["train"] &&
         echo.value("dataset", json()) == expected_echo["dataset"];
}

void save_experiment(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const fs::path file = cfg.out_dir / "experiment.json";
  json j = to_json(cfg);
  // Keep arms recorded by earlier commands so `report` can find every run.
  if (fs::exists(file)) {
    const json old = read_json_file(file);
    if (old.contains("arms") && old["arms"].is_array()) {
      std::set<std::string> names;
      for (const auto& a : j["arms"]) names.insert(a["name"].get<std::string>());
      for (const auto& a : old["arms"]) {
        if (!names.count(a.value("name", ""))) j["arms"].push_back(a);
      }
    }
  }
  j.erase("out_dir");
  write_json_file(j, file);
}

ExperimentConfig with_arms(ExperimentConfig cfg, std::vector<Arm> arms) {
  cfg.arms = std::move(arms);
  return cfg;
}

Report emit(const ExperimentConfig& cfg, const std::string& name, Report r) {
  write_text(cfg.out_dir / (name + ".csv"), r.csv);
  write_text(cfg.out_dir / (name + ".md"), r.markdown);
  return r;
}

std::vector<ArmSummary> summaries(const ExperimentConfig& cfg, const std::vector<Arm>& arms) {
  std::vector<ArmSummary> out;
  for (const auto& a : arms) out.push_back(summarize_arm(cfg.out_dir, a.name, cfg.seeds));
  return out;
}

}  // namespace

// --- configuration -----------------------------------------------------------

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw InvalidInput("experiment needs at least one seed");
  std::set<std::uint64_t> unique_seeds(seeds.begin(), seeds.end());
  if (unique_seeds.size() != seeds.size()) throw InvalidInput("experiment seeds must be distinct");
  train.validate();
  std::set<std::string> names;
  for (const auto& a : arms) {
    if (a.name.empty() || a.name.find_first_of("/\\ ") != std::string::npos || a.name == "." || a.name == "..") {
      throw InvalidInput("invalid arm name '" + a.name + "'");
    }
    if (!names.insert(a.name).second) throw InvalidInput("duplicate arm name '" + a.name + "'");
    a.loss.validate();
  }
}

json to_json(const ExperimentConfig& cfg) {
  json arms = json::array();
  for (const auto& a : cfg.arms) arms.push_back({{"name", a.name}, {"loss", to_json(a.loss)}});
  return {{"dataset", to_json(cfg.dataset)},
          {"seeds", cfg.seeds},
          {"train", to_json(cfg.train)},
          {"arms", arms},
          {"out_dir", cfg.out_dir.string()}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  reject_unknown(j, {"dataset", "seeds", "train", "arms", "out_dir"}, "experiment config");
  ExperimentConfig cfg;
  try {
    if (j.contains("dataset")) cfg.dataset = dataset_spec_from_json(j.at("dataset"));
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("arms")) {
      if (!j.at("arms").is_array()) throw InvalidInput("arms must be an array");
      for (const auto& a : j.at("arms")) {
        reject_unknown(a, {"name", "loss"}, "arm");
        Arm arm;
        arm.loss = a.contains("loss") ? loss_spec_from_json(a.at("loss")) : LossSpec{};
        arm.loss.clamp_eps = cfg.train.clamp_eps;
        arm.name = a.contains("name") ? a.at("name").get<std::string>() : std::string(to_string(arm.loss.kind));
        cfg.arms.push_back(std::move(arm));
      }
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("experiment config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

fs::path data_dir(const fs::path& out, std::uint64_t seed) { return out / "data" / ("seed_" + std::to_string(seed)); }

fs::path run_dir(const fs::path& out, const std::string& arm, std::uint64_t seed) {
  return out / "runs" / arm / ("seed_" + std::to_string(seed));
}

Manifest ensure_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
  DatasetSpec spec = cfg.dataset;
  spec.seed = seed;
  const fs::path dir = data_dir(cfg.out_dir, seed);
  if (fs::exists(dir / "manifest.json")) {
    try {
      Manifest m = load_manifest(dir);
      bool intact = to_json(m.spec) == to_json(spec) && m.samples.size() == spec.n;
      for (const auto& e : m.samples) {
        intact = intact && fs::exists(payload_path(dir / e.image)) && fs::exists(payload_path(dir / e.mask));
      }
      if (intact) return m;
    } catch (const std::exception&) {
      // regenerate below
    }
  }
  log::info("generating dataset " + dir.string());
  return make_dataset(spec, dir);
}

TrainConfig arm_train_config(const ExperimentConfig& cfg, const Arm& arm, std::uint64_t seed) {
  TrainConfig t = cfg.train;
  t.seed = seed;
  t.loss = arm.loss;
  t.loss.clamp_eps = t.clamp_eps;
  return t;
}

void run_arms(const ExperimentConfig& cfg, const std::vector<Arm>& arms) {
  with_arms(cfg, arms).validate();
  save_experiment(with_arms(cfg, arms));
  for (std::uint64_t seed : cfg.seeds) {
    const Manifest manifest = ensure_dataset(cfg, seed);
    for (const auto& arm : arms) {
      const fs::path dir = run_dir(cfg.out_dir, arm.name, seed);
      const TrainConfig t = arm_train_config(cfg, arm, seed);
      const json expected = {{"train", to_json(t)}, {"dataset", to_json(manifest.spec)}};
      if (run_complete(dir, expected)) {
        log::info("reusing " + dir.string());
        continue;
      }
      log::info("training " + arm.name + " seed " + std::to_string(seed));
      fs::remove(dir / kCompleteMarker);
      run_training(manifest, t, dir);
      write_text(dir / kCompleteMarker, "");
    }
  }
}

std::vector<Arm> ablation_arms(const LossSpec& base) {
  const std::pair<const char*, AblationFlags> rows[] = {
      {"none", {false, false, false}},  {"a", {true, false, false}},      {"a_gv", {true, true, false}},
      {"a_gm", {true, false, true}},    {"a_gv_gm", {true, true, true}}, {"gv_gm", {false, true, true}}};
  std::vector<Arm> out;
  for (const auto& [name, flags] : rows) {
    LossSpec s = base;
    s.kind = LossKind::AFL;
    s.ablation = flags;
    out.push_back({name, s});
  }
  return out;
}

std::vector<Arm> comparison_arms(const LossSpec& base) {
  std::vector<Arm> out;
  for (LossKind k : kAllLossKinds) {
    LossSpec s = base;
    s.kind = k;
    out.push_back({std::string(to_string(k)), s});
  }
  return out;
}

std::vector<Arm> bin_arms(const LossSpec& base) {
  LossSpec fl = base, adaptive = base;
  fl.kind = LossKind::FocalBaseline;
  adaptive.kind = LossKind::AFL;
  adaptive.ablation = {true, true, true};
  return {{"focal", fl}, {"afl", adaptive}};
}

// --- run artifacts -------------------------------------------------------------

std::vector<PerSample> read_eval_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("missing " + file.string());
  std::string line;
  std::getline(in, line);
  if (line != "id,iou,dsc,sensitivity,specificity") throw DataError("unexpected header in " + file.string());
  std::vector<PerSample> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell[5];
    for (auto& c : cell) {
      if (!std::getline(row, c, ',')) throw DataError("short row in " + file.string());
    }
    if (cell[0] == "mean") continue;
    PerSample p;
    p.name = cell[0];
    try {
      p.metrics = {std::stod(cell[1]), std::stod(cell[2]), std::stod(cell[3]), std::stod(cell[4])};
    } catch (const std::exception&) {
      throw DataError("bad number in " + file.string());
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PerSample> evaluate_predictions(const Manifest& manifest, const fs::path& pred_dir, double threshold) {
  std::vector<PerSample> out;
  for (const auto& e : manifest.split(false)) {
    const std::string name = sample_name(e.id);
    const Volume3D pred = read_image(pred_dir / (name + "_pred.vol.json"));
    const MaskVolume mask = read_mask(manifest.dir / e.mask);
    require_same_dims(pred.dims(), mask.dims(), name.c_str());
    out.push_back({name, evaluate(confusion(pred, mask, threshold))});
  }
  return out;
}

std::vector<PerSample> evaluate_directories(const fs::path& pred_dir, const fs::path& mask_dir, double threshold) {
  const std::string suffix = "_mask.vol.json";
  if (!fs::is_directory(mask_dir)) throw DataError("not a directory: " + mask_dir.string());
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(mask_dir)) {
    const std::string f = e.path().filename().string();
    if (f.size() > suffix.size() && f.compare(f.size() - suffix.size(), suffix.size(), suffix) == 0) {
      ids.push_back(f.substr(0, f.size() - suffix.size()));
    }
  }
  if (ids.empty()) throw DataError("no *" + suffix + " files in " + mask_dir.string());
  std::sort(ids.begin(), ids.end());
  std::vector<PerSample> out;
  for (const auto& id : ids) {
    const Volume3D pred = read_image(pred_dir / (id + "_pred.vol.json"));
    const MaskVolume mask = read_mask(mask_dir / (id + suffix));
    require_same_dims(pred.dims(), mask.dims(), id.c_str());
    out.push_back({id, evaluate(confusion(pred, mask, threshold))});
  }
  return out;
}

ArmSummary summarize_arm(const fs::path& out, const std::string& arm, const std::vector<std::uint64_t>& seeds) {
  ArmSummary s;
  s.name = arm;
  for (std::uint64_t seed : seeds) {
    const auto rows = read_eval_csv(run_dir(out, arm, seed) / "val_eval.csv");
    std::vector<SampleMetrics> ms;
    for (const auto& r : rows) ms.push_back(r.metrics);
    s.per_seed.push_back(mean_of(ms));
  }
  s.mean = mean_of(s.per_seed);
  auto column = [&](double SampleMetrics::*field) {
    std::vector<double> xs;
    for (const auto& m : s.per_seed) xs.push_back(m.*field);
    return sample_stddev(xs);
  };
  s.stddev = {column(&SampleMetrics::iou), column(&SampleMetrics::dsc), column(&SampleMetrics::sensitivity),
              column(&SampleMetrics::specificity)};
  return s;
}

std::vector<BinRow> bin_rows(const fs::path& out, const std::string& baseline_arm, const std::string& adaptive_arm,
                             const std::vector<std::uint64_t>& seeds) {
  // key "group/bin" -> pooled DSC values
  std::map<std::string, std::vector<double>> base, adapt;
  for (std::uint64_t seed : seeds) {
    const Manifest m = load_manifest(data_dir(out, seed));
    std::map<std::string, const ManifestEntry*> by_name;
    for (const auto& e : m.samples) by_name[sample_name(e.id)] = &e;
    for (const auto& [arm, dest] : {std::pair{&baseline_arm, &base}, std::pair{&adaptive_arm, &adapt}}) {
      for (const auto& r : read_eval_csv(run_dir(out, *arm, seed) / "val_eval.csv")) {
        const auto it = by_name.find(r.name);
        if (it == by_name.end()) throw DataError("sample " + r.name + " not in manifest for seed " + std::to_string(seed));
        (*dest)["volume/" + std::string(to_string(it->second->volume_bin))].push_back(r.metrics.dsc);
        (*dest)["smoothness/" + std::string(to_string(it->second->smoothness_bin))].push_back(r.metrics.dsc);
      }
    }
  }
  auto mean = [](const std::vector<double>& xs) {
    CompensatedSum s;
    for (double x : xs) s.add(x);
    return xs.empty() ? 0.0 : s.value() / static_cast<double>(xs.size());
  };
  std::vector<BinRow> rows;
  auto add = [&](const char* group, std::string_view bin) {
    const std::string key = std::string(group) + "/" + std::string(bin);
    BinRow r;
    r.group = group;
    r.bin = bin;
    r.count = base[key].size();
    if (adapt[key].size() != r.count) throw DataError("arms disagree on the samples in bin " + key);
    r.dsc_baseline = mean(base[key]);
    r.dsc_adaptive = mean(adapt[key]);
    r.improvement = r.dsc_adaptive - r.dsc_baseline;
    r.relative_improvement = r.dsc_baseline > 0.0 ? 100.0 * r.improvement / r.dsc_baseline : 0.0;
    rows.push_back(r);
  };
  for (VolumeBin b : kVolumeBins) add("volume", to_string(b));
  for (SmoothnessBin b : kSmoothnessBins) add("smoothness", to_string(b));
  return rows;
}

// --- reports -------------------------------------------------------------------

Report ablation_report(const std::vector<ArmSummary>& rows) {
  static const std::map<std::string, std::array<bool, 3>> flags{
      {"none", {false, false, false}}, {"a", {true, false, false}},      {"a_gv", {true, true, false}},
      {"a_gm", {true, false, true}},   {"a_gv_gm", {true, true, true}}, {"gv_gm", {false, true, true}}};
  Report r;
  r.csv = "row,alpha_va,gamma_va,gamma_msa,seeds,iou_mean,iou_std,dsc_mean,dsc_std\n";
  r.markdown = "| alpha_va | gamma_va | gamma_msa | IoU | DSC | " + std::string(kReferenceLabel) +
               " IoU / DSC |\n|---|---|---|---|---|---|\n";
  for (const auto& a : rows) {
    const auto it = flags.find(a.name);
    const std::array<bool, 3> f = it == flags.end() ? std::array<bool, 3>{} : it->second;
    r.csv += a.name + "," + std::to_string(f[0]) + "," + std::to_string(f[1]) + "," + std::to_string(f[2]) + "," +
             std::to_string(a.per_seed.size()) + "," + format_double(a.mean.iou) + "," + format_double(a.stddev.iou) +
             "," + format_double(a.mean.dsc) + "," + format_double(a.stddev.dsc) + "\n";
    auto mark = [](bool b) { return b ? "x" : "-"; };
    r.markdown += std::string("| ") + mark(f[0]) + " | " + mark(f[1]) + " | " + mark(f[2]) + " | " +
                  fmt(a.mean.iou) + " ± " + fmt(a.stddev.iou) + " | " + fmt(a.mean.dsc) + " ± " + fmt(a.stddev.dsc) +
                  " | " + reference_cell(ablation_reference(), a.name) + " |\n";
  }
  return r;
}

Report comparison_report(const std::vector<ArmSummary>& rows) {
  Report r;
  r.csv = "loss,seeds,iou,dsc,sensitivity,specificity,iou_std,dsc_std\n";
  r.markdown = "| loss | IoU | DSC | sensitivity | specificity | " + std::string(kReferenceLabel) +
               " IoU / DSC |\n|---|---|---|---|---|---|\n";
  for (const auto& a : rows) {
    r.csv += a.name + "," + std::to_string(a.per_seed.size()) + "," + format_double(a.mean.iou) + "," +
             format_double(a.mean.dsc) + "," + format_double(a.mean.sensitivity) + "," +
             format_double(a.mean.specificity) + "," + format_double(a.stddev.iou) + "," +
             format_double(a.stddev.dsc) + "\n";
    r.markdown += "| " + a.name + " | " + fmt(a.mean.iou) + " | " + fmt(a.mean.dsc) + " | " +
                  fmt(a.mean.sensitivity) + " | " + fmt(a.mean.specificity) + " | " +
                  reference_cell(comparison_reference(), a.name) + " |\n";
  }
  return r;
}

Report bin_report(const std::vector<BinRow>& rows) {
  Report r;
  r.csv = "group,bin,count,dsc_baseline,dsc_adaptive,improvement,relative_improvement_pct\n";
  r.markdown = "| group | bin | n | DSC FL | DSC A-FL | gain | gain % | " + std::string(kReferenceLabel) +
               " gain % |\n|---|---|---|---|---|---|---|---|\n";
  for (const auto& b : rows) {
    r.csv += b.group + "," + b.bin + "," + std::to_string(b.count) + "," + format_double(b.dsc_baseline) + "," +
             format_double(b.dsc_adaptive) + "," + format_double(b.improvement) + "," +
             format_double(b.relative_improvement) + "\n";
    const auto it = bin_reference().find(b.group + "/" + b.bin);
    r.markdown += "| " + b.group + " | " + b.bin + " | " + std::to_string(b.count) + " | " + fmt(b.dsc_baseline) +
                  " | " + fmt(b.dsc_adaptive) + " | " + fmt(b.improvement) + " | " + fmt(b.relative_improvement, 2) +
                  " | " + (it == bin_reference().end() ? "n/a" : fmt(it->second, 2)) + " |\n";
  }
  return r;
}

Report ablate(const ExperimentConfig& cfg) {
  const auto arms = ablation_arms(cfg.train.loss);
  run_arms(cfg, arms);
  return emit(cfg, "ablation", ablation_report(summaries(cfg, arms)));
}

Report compare_losses(const ExperimentConfig& cfg) {
  const auto arms = cfg.arms.empty() ? comparison_arms(cfg.train.loss) : cfg.arms;
  run_arms(cfg, arms);
  return emit(cfg, "comparison", comparison_report(summaries(cfg, arms)));
}

Report bins(const ExperimentConfig& cfg, const std::string& baseline_arm, const std::string& adaptive_arm) {
  auto find_arm = [&](const std::string& name) {
    for (const auto& pool : {cfg.arms, bin_arms(cfg.train.loss), ablation_arms(cfg.train.loss)}) {
      for (const auto& a : pool) {
        if (a.name == name) return a;
      }
    }
    throw InvalidInput("unknown arm '" + name + "'");
  };
  const std::vector<Arm> arms{find_arm(baseline_arm), find_arm(adaptive_arm)};
  run_arms(cfg, arms);
  return emit(cfg, "bins", bin_report(bin_rows(cfg.out_dir, baseline_arm, adaptive_arm, cfg.seeds)));
}

std::vector<std::string> regenerate_reports(const fs::path& out) {
  const fs::path file = out / "experiment.json";
  if (!fs::exists(file)) throw DataError("no experiment.json in " + out.string());
  json j = read_json_file(file);
  j["out_dir"] = out.string();
  const ExperimentConfig cfg = experiment_config_from_json(j);

  auto finished = [&](const std::string& arm) {
    for (std::uint64_t s : cfg.seeds) {
      if (!fs::exists(run_dir(out, arm, s) / kCompleteMarker)) return false;
    }
    return true;
  };
  auto all_finished = [&](const std::vector<Arm>& arms) {
    return std::all_of(arms.begin(), arms.end(), [&](const Arm& a) { return finished(a.name); });
  };

  std::vector<std::string> written;
  if (const auto arms = ablation_arms(); all_finished(arms)) {
    emit(cfg, "ablation", ablation_report(summaries(cfg, arms)));
    written.push_back("ablation");
  }
  // Comparison over the recorded arms that are not ablation rows.
  std::vector<Arm> compared;
  std::set<std::string> ablation_names;
  for (const auto& a : ablation_arms()) ablation_names.insert(a.name);
  for (const auto& a : cfg.arms) {
    if (!ablation_names.count(a.name) && finished(a.name)) compared.push_back(a);
  }
  if (!compared.empty()) {
    emit(cfg, "comparison", comparison_report(summaries(cfg, compared)));
    written.push_back("comparison");
  }
  for (const auto& [b, a] : {std::pair<std::string, std::string>{"focal", "afl"}, {"none", "a_gv_gm"}}) {
    if (finished(b) && finished(a)) {
      emit(cfg, "bins", bin_report(bin_rows(out, b, a, cfg.seeds)));
      written.push_back("bins");
      break;
    }
  }
  return written;
}

}  // namespace afl
