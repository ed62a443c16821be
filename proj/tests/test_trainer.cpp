#include <cmath>
#include <filesystem>
#include <fstream>

#include "afl/errors.hpp"
#include "afl/log.hpp"
#include "afl/metrics.hpp"
#include "afl/trainer.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using namespace afl;

namespace {

Sample phantom_sample(std::size_t id, Dims dims, VolumeBin vb, SmoothnessBin sb, std::uint64_t seed) {
  PhantomSpec ps;
  ps.dims = dims;
  ps.volume_bin = vb;
  ps.smoothness_bin = sb;
  ps.seed = seed;
  Phantom ph = make_phantom(ps);
  return {id, sample_name(id), vb, sb, std::move(ph.image), std::move(ph.mask)};
}

std::vector<Sample> small_set(std::size_t n, std::uint64_t seed) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(phantom_sample(i, {20, 20, 20}, i % 2 ? VolumeBin::Medium : VolumeBin::Large,
                                 (i / 2) % 2 ? SmoothnessBin::Medium : SmoothnessBin::Good, seed + i));
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("smoke: one sample, one epoch") {
    log::set_quiet(true);
    TrainConfig cfg;
    cfg.epochs = 1;
    const auto train = small_set(1, 1);
    const TrainResult r = train_model(train, train, cfg);
    REQUIRE(r.history.size() == 1);
    CHECK(std::isfinite(r.history[0].train_loss));
    CHECK(r.final_val.size() == 1);
    CHECK(r.val_predictions.size() == 1);
  }

  TEST_CASE("lr = 0 freezes the model") {
    log::set_quiet(true);
    TrainConfig cfg;
    cfg.lr = 0.0;
    cfg.epochs = 3;
    cfg.seed = 5;
    const auto set = small_set(2, 3);
    const TrainResult r = train_model(set, set, cfg);
    const TinySeg3D init = TinySeg3D::initialized(derive_seed(cfg.seed, 0));
    for (std::size_t i = 0; i < TinySeg3D::kParamCount; ++i) CHECK(r.model.params()[i] == init.params()[i]);
    for (const auto& h : r.history) {
      CHECK(h.val.dsc == r.history[0].val.dsc);
      CHECK(h.val.iou == r.history[0].val.iou);
    }
  }

  TEST_CASE("identical config and seed give identical history and parameters") {
    log::set_quiet(true);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 11;
    const auto set = small_set(4, 9);
    const TrainResult a = train_model(set, set, cfg), b = train_model(set, set, cfg);
    CHECK(history_csv(a.history) == history_csv(b.history));
    for (std::size_t i = 0; i < TinySeg3D::kParamCount; ++i) CHECK(a.model.params()[i] == b.model.params()[i]);
    cfg.seed = 12;
    const TrainResult c = train_model(set, set, cfg);
    CHECK(history_csv(a.history) != history_csv(c.history));
  }

  TEST_CASE("adaptive-parameter cache agrees with direct computation") {
    const auto set = small_set(4, 21);
    AdaptiveParamsCache cache;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& s : set) CHECK(cache.get(s.mask) == compute_adaptive_params(s.mask));
    }
    CHECK(cache.size() == 4);
    CHECK(mask_hash(set[0].mask) != mask_hash(set[1].mask));
  }

  TEST_CASE("invalid configurations") {
    TrainConfig cfg;
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidInput);
    cfg = TrainConfig{};
    cfg.batch_size = 2;
    CHECK_THROWS_AS(cfg.validate(), InvalidInput);
    CHECK_THROWS_AS(train_model({}, {}, TrainConfig{}), InvalidInput);
  }

  TEST_CASE("run_training writes the run directory") {
    log::set_quiet(true);
    const fs::path root = fs::temp_directory_path() / "afl_tests" / "run";
    fs::remove_all(root);
    DatasetSpec ds;
    ds.n = 4;
    ds.dims = {20, 20, 20};
    ds.mix = {1, 1, 0, 1, 1, 0, 0, 0, 0};
    ds.seed = 2;
    const Manifest m = make_dataset(ds, root / "data");
    TrainConfig cfg;
    cfg.epochs = 2;
    run_training(m, cfg, root / "r1");
    run_training(m, cfg, root / "r2");
    for (const char* f : {"history.csv", "model.bin", "config.echo.json", "val_eval.csv"}) {
      CHECK(fs::exists(root / "r1" / f));
    }
    CHECK(fs::exists(root / "r1" / "predictions" / "case_0001_pred.vol.json"));
    CHECK(slurp(root / "r1" / "history.csv") == slurp(root / "r2" / "history.csv"));
    CHECK(slurp(root / "r1" / "model.bin") == slurp(root / "r2" / "model.bin"));
    const std::string hist = slurp(root / "r1" / "history.csv");
    CHECK(hist.rfind("epoch,train_loss,val_iou,val_dsc,val_sensitivity,val_specificity\n", 0) == 0);
    CHECK(std::count(hist.begin(), hist.end(), '\n') == 3);
  }

  TEST_CASE("overfits a single large smooth phantom within 200 steps") {
    log::set_quiet(true);
    const Sample s = phantom_sample(0, {32, 32, 32}, VolumeBin::Large, SmoothnessBin::Good, 17);
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.seed = 3;
    cfg.lr = 0.3;
    const TrainResult r = train_model({s}, {s}, cfg);
    const double train_dsc = dsc(confusion(r.model.forward(s.image), s.mask, cfg.threshold));
    CAPTURE(train_dsc);
    CHECK(train_dsc >= 0.95);
  }
}
