#include <cmath>

#include "afl/adaptive_params.hpp"
#include "afl/errors.hpp"
#include "afl/synthgen.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace afl;

namespace {

MaskVolume block_mask(Dims d, Dims lo, Dims hi) {
  std::vector<std::uint8_t> v(d.size(), 0);
  for (std::size_t z = lo.nz; z < hi.nz; ++z)
    for (std::size_t y = lo.ny; y < hi.ny; ++y)
      for (std::size_t x = lo.nx; x < hi.nx; ++x) v[d.index(z, y, x)] = 1;
  return MaskVolume(d, std::move(v));
}

}  // namespace

TEST_SUITE("adaptive-params") {
  TEST_CASE("count_pixels") {
    const Dims d{4, 4, 4};
    CHECK(count_pixels(block_mask(d, {0, 0, 0}, {2, 2, 2})) == PixelCounts{8, 56});
    CHECK(count_pixels(MaskVolume(d, std::vector<std::uint8_t>(64, 0))) == PixelCounts{0, 64});

    Rng rng(11);
    const MaskVolume m = oracle::random_mask(rng, {16, 16, 16});
    std::uint64_t ones = 0, zeros = 0;
    for (std::size_t z = 0; z < 16; ++z)
      for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) (m.at(z, y, x) ? ones : zeros) += 1;
    CHECK(count_pixels(m) == PixelCounts{ones, zeros});
  }

  TEST_CASE("alpha_va and gamma_va") {
    CHECK(alpha_va({8, 56}) == 0.875);
    CHECK(gamma_va({8, 56}) == 0.125);
    CHECK(alpha_va({0, 64}) == 1.0);
    CHECK(gamma_va({64, 0}) == 1.0);
    CHECK_THROWS_AS(alpha_va({0, 0}), InvalidInput);
    CHECK_THROWS_AS(gamma_va({0, 0}), InvalidInput);

    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
      const PixelCounts c{rng.below(100000), rng.below(100000) + 1};
      CHECK(std::fabs(alpha_va(c) + gamma_va(c) - 1.0) <= 1e-12);
      CHECK(std::fabs(alpha_va(c) - (1.0 - gamma_va(c))) <= 1e-12);
    }
  }

  TEST_CASE("spatial_gradients: constants, ramps, and the stencil oracle") {
    const GradientField c = spatial_gradients(Volume3D::filled({3, 4, 5}, 2.5));
    for (double v : c.gx.values()) CHECK(v == 0.0);
    for (double v : c.gy.values()) CHECK(v == 0.0);
    for (double v : c.gz.values()) CHECK(v == 0.0);

    const Dims d{4, 4, 4};
    std::vector<double> ramp(d.size());
    for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i % 4);
    const GradientField r = spatial_gradients(Volume3D(d, ramp));
    for (std::size_t i = 0; i < d.size(); ++i) {
      CHECK(r.gx[i] == 1.0);
      CHECK(r.gy[i] == 0.0);
      CHECK(r.gz[i] == 0.0);
    }

    Rng rng(21);
    const Volume3D v = oracle::random_volume(rng, {8, 8, 8});
    const auto g = oracle::from(v);
    const GradientField f = spatial_gradients(v);
    for (int z = 0; z < 8; ++z)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          CHECK(f.gz.at(z, y, x) == oracle::stencil(g, z, y, x, 0));
          CHECK(f.gy.at(z, y, x) == oracle::stencil(g, z, y, x, 1));
          CHECK(f.gx.at(z, y, x) == oracle::stencil(g, z, y, x, 2));
        }

    CHECK_THROWS_AS(spatial_gradients(Volume3D::filled({1, 4, 4}, 0.0)), InvalidInput);
  }

  TEST_CASE("gradient_magnitude") {
    const Dims d{2, 2, 2};
    CHECK(gradient_magnitude({Volume3D::filled(d, 0), Volume3D::filled(d, 0), Volume3D::filled(d, 0)}) ==
          Volume3D::filled(d, 0.0));
    const Volume3D m = gradient_magnitude({Volume3D::filled(d, 3), Volume3D::filled(d, 4), Volume3D::filled(d, 0)});
    CHECK(m[5] == 5.0);

    Rng rng(4);
    const GradientField g{oracle::random_volume(rng, {3, 5, 4}), oracle::random_volume(rng, {3, 5, 4}),
                          oracle::random_volume(rng, {3, 5, 4})};
    const Volume3D mag = gradient_magnitude(g);
    for (std::size_t i = 0; i < mag.size(); ++i) {
      CHECK(mag[i] == std::sqrt(g.gx[i] * g.gx[i] + g.gy[i] * g.gy[i] + g.gz[i] * g.gz[i]));
    }
    CHECK_THROWS_AS(gradient_magnitude({Volume3D::filled(d, 0), Volume3D::filled({2, 2, 3}, 0), Volume3D::filled(d, 0)}),
                    InvalidInput);
  }

  TEST_CASE("mean_smoothness on constant masks and a single voxel") {
    const Dims d{4, 4, 4};
    CHECK(mean_smoothness(MaskVolume(d, std::vector<std::uint8_t>(64, 0))) == 0.0);
    CHECK(mean_smoothness(MaskVolume(d, std::vector<std::uint8_t>(64, 1))) == 0.0);

    const MaskVolume single = block_mask({5, 5, 5}, {2, 2, 2}, {3, 3, 3});
    const double expected = oracle::mean_magnitude(oracle::from(single.as_volume()));
    CHECK(mean_smoothness(single) == doctest::Approx(expected).epsilon(1e-14));
    // Six face neighbours each see a half-unit central difference: 6 * 0.5 / 125.
    CHECK(mean_smoothness(single) == doctest::Approx(0.024).epsilon(1e-14));
  }

  TEST_CASE("compute_adaptive_params") {
    const Dims d{4, 4, 4};
    const AdaptiveParams empty = compute_adaptive_params(MaskVolume(d, std::vector<std::uint8_t>(64, 0)));
    CHECK(empty.alpha_va == 1.0);
    CHECK(empty.gamma_va == 0.0);
    CHECK(empty.gamma_msa == 0.0);
    CHECK(empty.gamma_adaptive == 0.0);

    // Solid 2x2x2 block centred in 4^3; value cross-checked against an
    // independent array-gradient implementation: 0.4832531754730548.
    const MaskVolume block = block_mask(d, {1, 1, 1}, {3, 3, 3});
    const AdaptiveParams p = compute_adaptive_params(block);
    CHECK(p.gamma_va == 0.125);
    CHECK(p.alpha_va == 0.875);
    const double msa = oracle::mean_magnitude(oracle::from(block.as_volume()));
    CHECK(p.gamma_msa == doctest::Approx(msa).epsilon(1e-14));
    CHECK(p.gamma_msa == doctest::Approx(0.4832531754730548).epsilon(1e-14));
    CHECK(p.gamma_adaptive == doctest::Approx(0.6082531754730548).epsilon(1e-14));

    Rng rng(8);
    for (int i = 0; i < 20; ++i) {
      const MaskVolume m = oracle::random_mask(rng, {6, 7, 5}, rng.uniform());
      const AdaptiveParams q = compute_adaptive_params(m);
      CHECK(q.gamma_adaptive - q.gamma_va == doctest::Approx(mean_smoothness(m)).epsilon(1e-12));
      CHECK(q.gamma_msa >= 0.0);
      CHECK(q.gamma_msa <= std::sqrt(3.0));
    }
  }

  TEST_CASE("translation invariance of a contained blob") {
    const Dims d{12, 12, 12};
    const MaskVolume a = block_mask(d, {2, 3, 2}, {6, 5, 7});
    const MaskVolume b = block_mask(d, {5, 6, 4}, {9, 8, 9});
    const AdaptiveParams pa = compute_adaptive_params(a), pb = compute_adaptive_params(b);
    CHECK(pa.gamma_va == pb.gamma_va);
    CHECK(std::fabs(pa.gamma_msa - pb.gamma_msa) <= 1e-12);
  }

  TEST_CASE("roughness monotonicity over phantom seeds") {
    for (VolumeBin vb : kVolumeBins) {
      double mean[3] = {0, 0, 0};
      for (int s = 0; s < 10; ++s) {
        for (int k = 0; k < 3; ++k) {
          PhantomSpec ps;
          ps.volume_bin = vb;
          ps.smoothness_bin = kSmoothnessBins[k];
          ps.seed = 1000 + s;
          mean[k] += mean_smoothness(make_phantom(ps).mask) / 10.0;
        }
      }
      CAPTURE(to_string(vb));
      CHECK(mean[0] < mean[1]);
      CHECK(mean[1] < mean[2]);
    }
  }
}
