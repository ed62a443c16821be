#include "afl/config.hpp"

#include <charconv>
#include <fstream>
#include <initializer_list>

#include "afl/errors.hpp"

namespace afl {
using nlohmann::json;

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* where) {
  if (!j.is_object()) throw InvalidInput(std::string(where) + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw InvalidInput(std::string("unknown key '") + k + "' in " + where);
  }
}

namespace {

template <class T>
void read_opt(const json& j, const char* key, T& out, const char* where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidInput(std::string(where) + "." + key + ": " + e.what());
  }
}

}  // namespace

json to_json(const LossSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"alpha_fixed", s.alpha_fixed},
          {"gamma_fixed", s.gamma_fixed},
          {"tversky_alpha", s.tversky_alpha},
          {"tversky_beta", s.tversky_beta},
          {"smooth_eps", s.smooth_eps},
          {"ablation",
           {{"alpha_va", s.ablation.use_alpha_va},
            {"gamma_va", s.ablation.use_gamma_va},
            {"gamma_msa", s.ablation.use_gamma_msa}}},
          {"gamma_offset", s.gamma_offset},
          {"alpha_mode", to_string(s.alpha_mode)},
          {"clamp_eps", s.clamp_eps}};
}

LossSpec loss_spec_from_json(const json& j) {
  constexpr const char* where = "loss";
  reject_unknown(j,
                 {"kind", "alpha_fixed", "gamma_fixed", "tversky_alpha", "tversky_beta", "smooth_eps", "ablation",
                  "gamma_offset", "alpha_mode", "clamp_eps"},
                 where);
  LossSpec s;
  std::string kind = std::string(to_string(s.kind));
  std::string mode = std::string(to_string(s.alpha_mode));
  read_opt(j, "kind", kind, where);
  read_opt(j, "alpha_fixed", s.alpha_fixed, where);
  read_opt(j, "gamma_fixed", s.gamma_fixed, where);
  read_opt(j, "tversky_alpha", s.tversky_alpha, where);
  read_opt(j, "tversky_beta", s.tversky_beta, where);
  read_opt(j, "smooth_eps", s.smooth_eps, where);
  read_opt(j, "gamma_offset", s.gamma_offset, where);
  read_opt(j, "alpha_mode", mode, where);
  read_opt(j, "clamp_eps", s.clamp_eps, where);
  s.kind = parse_loss_kind(kind);
  s.alpha_mode = parse_alpha_mode(mode);
  if (j.contains("ablation")) {
    const auto& a = j.at("ablation");
    if (a.is_string()) {
      s.ablation = parse_ablation(a.get<std::string>());
    } else {
      reject_unknown(a, {"alpha_va", "gamma_va", "gamma_msa"}, "loss.ablation");
      read_opt(a, "alpha_va", s.ablation.use_alpha_va, "loss.ablation");
      read_opt(a, "gamma_va", s.ablation.use_gamma_va, "loss.ablation");
      read_opt(a, "gamma_msa", s.ablation.use_gamma_msa, "loss.ablation");
    }
  }
  s.validate();
  return s;
}

json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"clamp_eps", c.clamp_eps},
          {"threshold", c.threshold},
          {"save_predictions", c.save_predictions},
          {"loss", to_json(c.loss)}};
}

TrainConfig train_config_from_json(const json& j) {
  constexpr const char* where = "train config";
  reject_unknown(j,
                 {"lr", "momentum", "weight_decay", "epochs", "batch_size", "seed", "clamp_eps", "threshold",
                  "save_predictions", "loss"},
                 where);
  TrainConfig c;
  read_opt(j, "lr", c.lr, where);
  read_opt(j, "momentum", c.momentum, where);
  read_opt(j, "weight_decay", c.weight_decay, where);
  read_opt(j, "epochs", c.epochs, where);
  read_opt(j, "batch_size", c.batch_size, where);
  read_opt(j, "seed", c.seed, where);
  read_opt(j, "clamp_eps", c.clamp_eps, where);
  read_opt(j, "threshold", c.threshold, where);
  read_opt(j, "save_predictions", c.save_predictions, where);
  if (j.contains("loss")) c.loss = loss_spec_from_json(j.at("loss"));
  c.loss.clamp_eps = c.clamp_eps;
  c.validate();
  return c;
}

json to_json(const DatasetSpec& s) {
  return {{"n", s.n}, {"dims", {s.dims.nz, s.dims.ny, s.dims.nx}}, {"mix", s.mix}, {"noise_sigma", s.noise_sigma},
          {"seed", s.seed}};
}

DatasetSpec dataset_spec_from_json(const json& j) {
  constexpr const char* where = "dataset";
  reject_unknown(j, {"n", "dims", "mix", "noise_sigma", "seed"}, where);
  DatasetSpec s;
  read_opt(j, "n", s.n, where);
  read_opt(j, "noise_sigma", s.noise_sigma, where);
  read_opt(j, "seed", s.seed, where);
  read_opt(j, "mix", s.mix, where);
  if (j.contains("dims")) {
    std::array<std::size_t, 3> d{};
    read_opt(j, "dims", d, where);
    s.dims = {d[0], d[1], d[2]};
  }
  if (s.n < 1) throw InvalidInput("dataset.n must be >= 1");
  return s;
}

json read_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInput("malformed JSON in " + file.string() + ": " + e.what());
  }
}

void write_json_file(const json& j, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out << j.dump(2) << "\n";
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace afl
