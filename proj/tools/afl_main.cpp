#include <algorithm>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "afl/adaptive_params.hpp"
#include "afl/config.hpp"
#include "afl/errors.hpp"
#include "afl/experiment.hpp"
#include "afl/log.hpp"
#include "afl/losses.hpp"
#include "afl/metrics.hpp"
#include "afl/synthgen.hpp"
#include "afl/tinyseg.hpp"
#include "afl/trainer.hpp"
#include "afl/volume_io.hpp"

namespace fs = std::filesystem;
using namespace afl;

namespace {

enum Exit { kOk = 0, kFailure = 1, kInvalid = 2, kData = 3, kNumerical = 4 };

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  bool quiet = false;
};

ExperimentConfig load_config(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : experiment_config_from_json(read_json_file(g.config));
  if (g.seed) {
    cfg.seeds = {*g.seed};
    cfg.dataset.seed = *g.seed;
    cfg.train.seed = *g.seed;
  }
  if (!g.out.empty()) cfg.out_dir = g.out;
  return cfg;
}

void print_report(const Report& r) {
  if (!log::quiet()) std::cout << r.markdown;
}

std::string fmt12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive focal loss experiments on synthetic 3D phantoms"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed; overrides the config's seeds");
  app.add_option("--config", g.config, "Experiment config (JSON)");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a phantom dataset");
  std::optional<std::size_t> gen_n;
  std::vector<std::size_t> gen_dims;
  std::vector<double> gen_mix;
  gen->add_option("--n", gen_n, "Number of phantoms");
  gen->add_option("--dims", gen_dims, "Volume extent nz,ny,nx")->delimiter(',')->expected(3);
  gen->add_option("--mix", gen_mix, "Nine bin weights, volume-major")->delimiter(',')->expected(9);

  // params
  auto* params = app.add_subcommand("params", "Adaptive parameters of a mask");
  std::string params_mask;
  params->add_option("mask", params_mask, "Mask volume header")->required();

  // loss
  auto* loss = app.add_subcommand("loss", "Evaluate a loss on a prediction/mask pair");
  std::string loss_pred, loss_mask, loss_kind, loss_ablation, loss_grad;
  std::optional<double> loss_offset;
  loss->add_option("--pred", loss_pred, "Probability volume header")->required();
  loss->add_option("--mask", loss_mask, "Mask volume header")->required();
  loss->add_option("--kind", loss_kind, "Loss kind");
  loss->add_option("--ablation", loss_ablation, "Enabled adaptive terms, e.g. a,gv,gm or none");
  loss->add_option("--gamma-offset", loss_offset, "Added to the adaptive focusing exponent");
  loss->add_option("--grad-out", loss_grad, "Write d(loss)/d(pred) to this volume header");

  // train
  auto* train = app.add_subcommand("train", "Train TinySeg3D on a dataset");
  std::string train_data, train_kind;
  train->add_option("--data", train_data, "Dataset directory or manifest")->required();
  train->add_option("--loss", train_kind, "Loss kind; overrides the config");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a model or saved predictions on a dataset split");
  std::string eval_data, eval_model, eval_preds, eval_split = "val", eval_pred_dir, eval_mask_dir;
  std::optional<double> eval_threshold;
  auto* data_opt = eval->add_option("--data", eval_data, "Dataset directory or manifest");
  auto* model_opt = eval->add_option("--model", eval_model, "Model file (with --data)");
  auto* pred_opt = eval->add_option("--predictions", eval_preds, "Saved predictions of the val split (with --data)");
  auto* pred_dir_opt = eval->add_option("--pred-dir", eval_pred_dir, "Directory of <id>_pred.vol.json files");
  auto* mask_dir_opt = eval->add_option("--mask-dir", eval_mask_dir, "Directory of <id>_mask.vol.json files");
  model_opt->excludes(pred_opt)->needs(data_opt);
  pred_opt->needs(data_opt);
  pred_dir_opt->needs(mask_dir_opt)->excludes(data_opt);
  mask_dir_opt->needs(pred_dir_opt);
  eval->add_option("--split", eval_split, "val or train")->check(CLI::IsMember({"val", "train"}));
  eval->add_option("--threshold", eval_threshold, "Foreground threshold on p");

  auto* ablate_cmd = app.add_subcommand("ablate", "Run the six-row ablation grid");
  auto* compare_cmd = app.add_subcommand("compare", "Compare loss functions");
  auto* bins_cmd = app.add_subcommand("bins", "Per-bin DSC of FL against A-FL");
  std::string bins_base = "focal", bins_adapt = "afl";
  bins_cmd->add_option("--baseline", bins_base, "Baseline arm name");
  bins_cmd->add_option("--adaptive", bins_adapt, "Adaptive arm name");
  auto* report_cmd = app.add_subcommand("report", "Regenerate reports from run artifacts");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    log::set_quiet(g.quiet);

    if (*gen) {
      ExperimentConfig cfg = load_config(g);
      DatasetSpec spec = cfg.dataset;
      if (gen_n) spec.n = *gen_n;
      if (!gen_dims.empty()) spec.dims = {gen_dims[0], gen_dims[1], gen_dims[2]};
      if (!gen_mix.empty()) std::copy(gen_mix.begin(), gen_mix.end(), spec.mix.begin());
      if (spec.n < 1) throw InvalidInput("--n must be >= 1");
      const Manifest m = make_dataset(spec, cfg.out_dir);
      log::info("wrote " + std::to_string(m.samples.size()) + " phantoms to " + cfg.out_dir.string());
    } else if (*params) {
      const AdaptiveParams p = compute_adaptive_params(read_mask(params_mask));
      std::cout << p.counts.p_fg << " " << p.counts.p_bg << " " << fmt12(p.alpha_va) << " " << fmt12(p.gamma_va) << " "
                << fmt12(p.gamma_msa) << " " << fmt12(p.gamma_adaptive) << "\n";
    } else if (*loss) {
      ExperimentConfig cfg = load_config(g);
      LossSpec spec = cfg.train.loss;
      if (!loss_kind.empty()) spec.kind = parse_loss_kind(loss_kind);
      if (!loss_ablation.empty()) spec.ablation = parse_ablation(loss_ablation);
      if (loss_offset) spec.gamma_offset = *loss_offset;
      spec.validate();
      const Volume3D pred = read_image(loss_pred);
      const MaskVolume mask = read_mask(loss_mask);
      require_same_dims(pred.dims(), mask.dims(), "loss");
      const LossValue lv = evaluate_loss(pred, mask, spec);
      if (!std::isfinite(lv.value)) throw NumericalError("loss is not finite");
      if (!loss_grad.empty()) write_volume(lv.grad, loss_grad);
      std::cout << fmt12(lv.value) << "\n";
    } else if (*train) {
      ExperimentConfig cfg = load_config(g);
      TrainConfig t = cfg.train;
      if (!train_kind.empty()) t.loss.kind = parse_loss_kind(train_kind);
      const Manifest m = load_manifest(train_data);
      const TrainResult r = run_training(m, t, cfg.out_dir);
      const auto& last = r.history.back();
      log::info("final train loss " + fmt12(last.train_loss) + ", val DSC " + fmt12(last.val.dsc));
    } else if (*eval) {
      ExperimentConfig cfg = load_config(g);
      const double threshold = eval_threshold.value_or(cfg.train.threshold);
      if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidInput("threshold must lie in (0,1)");
      std::vector<SampleEval> rows;
      if (!eval_pred_dir.empty()) {
        for (auto& p : evaluate_directories(eval_pred_dir, eval_mask_dir, threshold)) rows.push_back({p.name, p.metrics});
      } else if (eval_data.empty()) {
        throw InvalidInput("eval needs --data with --model or --predictions, or --pred-dir with --mask-dir");
      } else if (!eval_preds.empty()) {
        if (eval_split != "val") throw InvalidInput("saved predictions cover the val split only");
        for (auto& p : evaluate_predictions(load_manifest(eval_data), eval_preds, threshold)) {
          rows.push_back({p.name, p.metrics});
        }
      } else if (!eval_model.empty()) {
        const TinySeg3D model = TinySeg3D::load(eval_model);
        evaluate_model(model, load_samples(load_manifest(eval_data), eval_split == "train"), threshold, &rows);
      } else {
        throw InvalidInput("eval needs --model or --predictions");
      }
      const std::string csv = eval_csv(rows);
      if (!g.out.empty()) {
        fs::create_directories(g.out);
        std::ofstream(fs::path(g.out) / "eval.csv", std::ios::binary) << csv;
      }
      std::cout << csv;
    } else if (*ablate_cmd) {
      print_report(ablate(load_config(g)));
    } else if (*compare_cmd) {
      print_report(compare_losses(load_config(g)));
    } else if (*bins_cmd) {
      print_report(bins(load_config(g), bins_base, bins_adapt));
    } else if (*report_cmd) {
      const fs::path out = g.out.empty() ? load_config(g).out_dir : fs::path(g.out);
      for (const auto& name : regenerate_reports(out)) log::info("wrote " + (out / (name + ".md")).string());
    }
  } catch (const InvalidInput& e) {
    log::warn(std::string("invalid input: ") + e.what());
    return kInvalid;
  } catch (const DataError& e) {
    log::warn(std::string("data error: ") + e.what());
    return kData;
  } catch (const NumericalError& e) {
    log::warn(std::string("numerical failure: ") + e.what());
    return kNumerical;
  } catch (const fs::filesystem_error& e) {
    log::warn(std::string("data error: ") + e.what());
    return kData;
  } catch (const std::exception& e) {
    log::warn(std::string("error: ") + e.what());
    return kFailure;
  }
  return kOk;
}
