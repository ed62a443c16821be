#include "afl/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>

#include "afl/errors.hpp"
#include "afl/volume_io.hpp"

namespace afl {
namespace fs = std::filesystem;
using nlohmann::json;

double target_fraction(VolumeBin bin) {
  switch (bin) {
    case VolumeBin::Large: return 0.05;
    case VolumeBin::Medium: return 0.01;
    case VolumeBin::Small: return 0.002;
  }
  return 0.0;
}

double perturbation_amplitude(SmoothnessBin bin) {
  switch (bin) {
    case SmoothnessBin::Good: return 0.0;
    case SmoothnessBin::Medium: return 0.2;
    case SmoothnessBin::Poor: return 0.5;
  }
  return 0.0;
}

std::string_view to_string(VolumeBin bin) {
  switch (bin) {
    case VolumeBin::Large: return "large";
    case VolumeBin::Medium: return "medium";
    case VolumeBin::Small: return "small";
  }
  return "?";
}

std::string_view to_string(SmoothnessBin bin) {
  switch (bin) {
    case SmoothnessBin::Good: return "good";
    case SmoothnessBin::Medium: return "medium";
    case SmoothnessBin::Poor: return "poor";
  }
  return "?";
}

VolumeBin parse_volume_bin(std::string_view name) {
  for (auto b : kVolumeBins) {
    if (to_string(b) == name) return b;
  }
  throw InvalidInput("unknown volume bin '" + std::string(name) + "'");
}

SmoothnessBin parse_smoothness_bin(std::string_view name) {
  for (auto b : kSmoothnessBins) {
    if (to_string(b) == name) return b;
  }
  throw InvalidInput("unknown smoothness bin '" + std::string(name) + "'");
}

// --- angular field -----------------------------------------------------------

namespace {

double chebyshev(int degree, double t) {
  double prev = 1.0, cur = t;
  if (degree == 0) return prev;
  for (int k = 1; k < degree; ++k) {
    const double next = 2.0 * t * cur - prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

// Point i of an n-point Fibonacci sphere, as (z, y, x).
std::array<double, 3> fibonacci_point(int i, int n) {
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const double z = 1.0 - (2.0 * i + 1.0) / n;
  const double r = std::sqrt(1.0 - z * z);
  const double phi = golden * i;
  return {z, r * std::sin(phi), r * std::cos(phi)};
}

}  // namespace

AngularField AngularField::random(Rng& rng) {
  AngularField f;
  for (auto& t : f.terms_) {
    double dz = rng.normal(), dy = rng.normal(), dx = rng.normal();
    const double norm = std::sqrt(dz * dz + dy * dy + dx * dx);
    t = {dz / norm, dy / norm, dx / norm, 2 + static_cast<int>(rng.below(5)), rng.uniform(0.5, 1.0)};
  }
  // Zero mean and unit peak over the sphere grid.
  double mean = 0.0;
  for (int i = 0; i < kGridPoints; ++i) {
    const auto p = fibonacci_point(i, kGridPoints);
    mean += f.raw(p[0], p[1], p[2]);
  }
  f.offset_ = mean / kGridPoints;
  double peak = 0.0;
  for (int i = 0; i < kGridPoints; ++i) {
    const auto p = fibonacci_point(i, kGridPoints);
    peak = std::max(peak, std::fabs(f.raw(p[0], p[1], p[2]) - f.offset_));
  }
  f.scale_ = peak > 0.0 ? 1.0 / peak : 1.0;
  return f;
}

double AngularField::raw(double uz, double uy, double ux) const {
  double sum = 0.0;
  for (const auto& t : terms_) sum += t.weight * chebyshev(t.degree, uz * t.dz + uy * t.dy + ux * t.dx);
  return sum;
}

double AngularField::operator()(double uz, double uy, double ux) const { return scale_ * (raw(uz, uy, ux) - offset_); }

double AngularField::mean_cubed_radius_factor(double amplitude) const {
  double sum = 0.0;
  for (int i = 0; i < kGridPoints; ++i) {
    const auto p = fibonacci_point(i, kGridPoints);
    sum += std::pow(1.0 + amplitude * (*this)(p[0], p[1], p[2]), 3);
  }
  return sum / kGridPoints;
}

// --- phantoms ----------------------------------------------------------------

namespace {

// Off-grid values of eta may slightly exceed the grid maximum.
constexpr double kEtaBound = 1.05;

std::size_t count_blob(const Dims& dims, const std::array<double, 3>& c, double r0, double a,
                       const AngularField& eta) {
  const auto m = voxelize_blob(dims, c, r0, a, eta);
  std::size_t n = 0;
  for (auto v : m.values()) n += v;
  return n;
}

}  // namespace

MaskVolume voxelize_blob(const Dims& dims, const std::array<double, 3>& center, double r0, double amplitude,
                         const AngularField& eta) {
  std::vector<std::uint8_t> data(dims.size(), 0);
  const double reach = r0 * (1.0 + amplitude * kEtaBound) + 1.0;
  const std::size_t ext[3] = {dims.nz, dims.ny, dims.nx};
  std::size_t lo[3], hi[3];
  for (int k = 0; k < 3; ++k) {
    lo[k] = static_cast<std::size_t>(std::max(0.0, std::floor(center[k] - reach)));
    hi[k] = static_cast<std::size_t>(std::clamp(std::ceil(center[k] + reach) + 1.0, 0.0, double(ext[k])));
  }
  for (std::size_t z = lo[0]; z < hi[0]; ++z) {
    for (std::size_t y = lo[1]; y < hi[1]; ++y) {
      for (std::size_t x = lo[2]; x < hi[2]; ++x) {
        const double rz = z - center[0], ry = y - center[1], rx = x - center[2];
        const double r = std::sqrt(rz * rz + ry * ry + rx * rx);
        bool inside;
        if (r < 1e-12) {
          inside = true;
        } else {
          inside = r <= r0 * (1.0 + amplitude * eta(rz / r, ry / r, rx / r));
        }
        data[dims.index(z, y, x)] = inside ? 1 : 0;
      }
    }
  }
  return MaskVolume(dims, std::move(data));
}

Phantom make_phantom(const PhantomSpec& spec) {
  const Dims& d = spec.dims;
  if (d.nz < 2 || d.ny < 2 || d.nx < 2) throw InvalidInput("phantom dims must all be >= 2");
  if (!(spec.noise_sigma >= 0.0)) throw InvalidInput("noise_sigma must be >= 0");

  Rng rng(spec.seed);
  const AngularField eta = AngularField::random(rng);
  const std::array<double, 3> u{rng.uniform(), rng.uniform(), rng.uniform()};

  const double a = perturbation_amplitude(spec.smoothness_bin);
  const double target = target_fraction(spec.volume_bin) * static_cast<double>(d.size());
  const double r_est = std::cbrt(3.0 * target / (4.0 * std::numbers::pi * eta.mean_cubed_radius_factor(a)));

  // Radius search bracket; the centre is placed so the largest blob in the
  // bracket is contained, which keeps the voxel count monotone in r0.
  double r_lo = 0.85 * r_est, r_hi = 1.15 * r_est;
  const double reach = r_hi * (1.0 + a * kEtaBound);
  std::array<double, 3> center{};
  const std::size_t ext[3] = {d.nz, d.ny, d.nx};
  for (int k = 0; k < 3; ++k) {
    const double span = static_cast<double>(ext[k] - 1) - 2.0 * reach;
    if (span < 0.0) {
      throw InvalidInput("phantom with volume bin '" + std::string(to_string(spec.volume_bin)) +
                         "' does not fit in " + d.str());
    }
    center[k] = reach + u[k] * span;
  }

  const auto want = static_cast<std::size_t>(std::llround(target));
  std::size_t n_lo = count_blob(d, center, r_lo, a, eta);
  std::size_t n_hi = count_blob(d, center, r_hi, a, eta);
  for (int it = 0; it < 40 && n_lo < want && n_hi > want; ++it) {
    const double mid = 0.5 * (r_lo + r_hi);
    const std::size_t n_mid = count_blob(d, center, mid, a, eta);
    if (n_mid >= want) {
      r_hi = mid;
      n_hi = n_mid;
    } else {
      r_lo = mid;
      n_lo = n_mid;
    }
  }
  const auto gap = [&](std::size_t n) { return n > want ? n - want : want - n; };
  const double r0 = gap(n_hi) <= gap(n_lo) ? r_hi : r_lo;
  if (r0 < 2.0) {
    throw InvalidInput("volume bin '" + std::string(to_string(spec.volume_bin)) + "' needs base radius " +
                       std::to_string(r0) + " < 2 voxels in " + d.str());
  }

  MaskVolume mask = voxelize_blob(d, center, r0, a, eta);
  std::vector<double> img(d.size());
  const auto m = mask.values();
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double base = m[i] ? spec.fg_intensity : spec.bg_intensity;
    img[i] = base + spec.noise_sigma * rng.normal();
  }
  return {Volume3D(d, std::move(img)), std::move(mask), r0, center};
}

// --- datasets ----------------------------------------------------------------

std::vector<std::size_t> assign_bins(std::size_t n, const std::array<double, 9>& mix) {
  double total = 0.0;
  for (double w : mix) {
    if (!(w >= 0.0)) throw InvalidInput("mix weights must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw InvalidInput("mix weights must not all be zero");
  std::array<std::size_t, 9> count{};
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_deficit = -1e300;
    for (std::size_t k = 0; k < 9; ++k) {
      if (mix[k] == 0.0) continue;
      const double deficit = mix[k] * static_cast<double>(i + 1) / total - static_cast<double>(count[k]);
      if (deficit > best_deficit + 1e-12) {
        best = k;
        best_deficit = deficit;
      }
    }
    ++count[best];
    out[i] = best;
  }
  return out;
}

std::string sample_name(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%04zu", id);
  return buf;
}

std::vector<ManifestEntry> Manifest::split(bool train) const {
  std::vector<ManifestEntry> out;
  for (const auto& s : samples) {
    if (s.train == train) out.push_back(s);
  }
  return out;
}

Manifest make_dataset(const DatasetSpec& spec, const fs::path& out_dir) {
  if (spec.n < 1) throw InvalidInput("dataset needs n >= 1");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());

  Manifest m;
  m.spec = spec;
  m.dir = out_dir;
  const auto bins = assign_bins(spec.n, spec.mix);
  for (std::size_t id = 0; id < spec.n; ++id) {
    PhantomSpec ps;
    ps.dims = spec.dims;
    ps.volume_bin = kVolumeBins[bins[id] / 3];
    ps.smoothness_bin = kSmoothnessBins[bins[id] % 3];
    ps.noise_sigma = spec.noise_sigma;
    ps.seed = derive_seed(spec.seed, id);
    const Phantom ph = make_phantom(ps);

    ManifestEntry e;
    e.id = id;
    e.image = sample_name(id) + "_image.vol.json";
    e.mask = sample_name(id) + "_mask.vol.json";
    e.volume_bin = ps.volume_bin;
    e.smoothness_bin = ps.smoothness_bin;
    e.seed = ps.seed;
    std::size_t fg = 0;
    for (auto v : ph.mask.values()) fg += v;
    e.realized_fg_fraction = static_cast<double>(fg) / static_cast<double>(ph.mask.size());
    e.train = is_train_index(id);
    write_volume(ph.image, out_dir / e.image);
    write_volume(ph.mask, out_dir / e.mask);
    m.samples.push_back(std::move(e));
  }
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

void save_manifest(const Manifest& m, const fs::path& file) {
  json samples = json::array();
  for (const auto& s : m.samples) {
    samples.push_back({{"id", s.id},
                       {"name", sample_name(s.id)},
                       {"image", s.image},
                       {"mask", s.mask},
                       {"volume_bin", to_string(s.volume_bin)},
                       {"smoothness_bin", to_string(s.smoothness_bin)},
                       {"seed", s.seed},
                       {"realized_fg_fraction", s.realized_fg_fraction},
                       {"split", s.train ? "train" : "val"}});
  }
  json j = {{"seed", m.spec.seed},
            {"n", m.spec.n},
            {"dims", {m.spec.dims.nz, m.spec.dims.ny, m.spec.dims.nx}},
            {"mix", m.spec.mix},
            {"noise_sigma", m.spec.noise_sigma},
            {"split_rule", "even id -> train, odd id -> val"},
            {"samples", samples}};
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out << j.dump(2) << "\n";
}

Manifest load_manifest(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "manifest.json" : path;
  std::ifstream in(file);
  if (!in) throw DataError("cannot open manifest " + file.string());
  Manifest m;
  m.dir = file.parent_path();
  try {
    const json j = json::parse(in);
    m.spec.seed = j.at("seed").get<std::uint64_t>();
    m.spec.n = j.at("n").get<std::size_t>();
    const auto& d = j.at("dims");
    m.spec.dims = {d.at(0).get<std::size_t>(), d.at(1).get<std::size_t>(), d.at(2).get<std::size_t>()};
    m.spec.mix = j.at("mix").get<std::array<double, 9>>();
    m.spec.noise_sigma = j.at("noise_sigma").get<double>();
    for (const auto& s : j.at("samples")) {
      ManifestEntry e;
      e.id = s.at("id").get<std::size_t>();
      e.image = s.at("image").get<std::string>();
      e.mask = s.at("mask").get<std::string>();
      e.volume_bin = parse_volume_bin(s.at("volume_bin").get<std::string>());
      e.smoothness_bin = parse_smoothness_bin(s.at("smoothness_bin").get<std::string>());
      e.seed = s.at("seed").get<std::uint64_t>();
      e.realized_fg_fraction = s.at("realized_fg_fraction").get<double>();
      e.train = s.at("split").get<std::string>() == "train";
      m.samples.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + file.string() + ": " + e.what());
  }
  if (m.samples.empty()) throw DataError("manifest " + file.string() + " lists no samples");
  return m;
}

}  // namespace afl
