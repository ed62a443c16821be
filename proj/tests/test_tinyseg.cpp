#include <cmath>
#include <filesystem>

#include "afl/errors.hpp"
#include "afl/tinyseg.hpp"
#include "doctest.h"
#include "grad_check.hpp"
#include "oracles.hpp"

using namespace afl;

TEST_SUITE("tinyseg") {
  TEST_CASE("parameter layout") {
    CHECK(TinySeg3D::kParamCount == 8 * 27 + 8 + 8 * 8 * 27 + 8 + 8 + 1);
    TinySeg3D m;
    CHECK(m.params().size() == 1969);
    CHECK(m.grads().size() == 1969);
    CHECK(m.velocity().size() == 1969);
  }

  TEST_CASE("zero network outputs one half; bias-only network outputs logistic(b)") {
    Rng rng(1);
    const Volume3D img = oracle::random_volume(rng, {5, 6, 7});
    TinySeg3D m;
    const Volume3D out = m.forward(img);
    CHECK(out.dims() == img.dims());
    for (double v : out.values()) CHECK(v == 0.5);

    m.params()[TinySeg3D::kB3] = 1.3;
    for (std::size_t i = TinySeg3D::kB1; i < TinySeg3D::kW2; ++i) m.params()[i] = 0.7;
    const double expected = 1.0 / (1.0 + std::exp(-1.3));
    const Volume3D biased = m.forward(img);
    for (double v : biased.values()) CHECK(v == doctest::Approx(expected).epsilon(1e-15));
  }

  TEST_CASE("forward matches direct nested-loop convolution") {
    Rng rng(2);
    const Volume3D img = oracle::random_volume(rng, {8, 8, 8});
    const TinySeg3D m = gradcheck::random_model(3);
    const Volume3D out = m.forward(img);
    const auto ref = oracle::tinyseg_forward({m.params().begin(), m.params().end()}, oracle::from(img));
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }

  TEST_CASE("too-small input") {
    TinySeg3D m;
    CHECK_THROWS_AS(m.forward(Volume3D::filled({2, 8, 8}, 0.0)), InvalidInput);
  }

  TEST_CASE("every parameter gradient matches finite differences (A-FL, 6^3)") {
    Rng rng(4);
    const Volume3D img = oracle::random_volume(rng, {6, 6, 6}, 0.0, 1.0);
    const MaskVolume mask = oracle::random_mask(rng, {6, 6, 6}, 0.25);
    LossSpec spec;
    std::size_t refined = 0;
    for (std::uint64_t seed : {4, 5, 6}) {
      CAPTURE(seed);
      const auto r = gradcheck::check_model(gradcheck::random_model(seed), img, mask, spec);
      refined += r.refined;
      CAPTURE(r.worst_rel);
      CAPTURE(r.worst_index);
      CAPTURE(r.refined);
      CHECK(r.checked + r.skipped == 1969);
      CHECK(r.skipped <= 5);
      CHECK(r.failures == 0);
    }
    // Model 5 has pre-activations within 1e-4 of zero on this input.
    CHECK(refined > 0);
  }

  TEST_CASE("conv building blocks agree with the adjoint identity") {
    // <conv(in), g> == <in, input_grad(g)> and weight_grad is its derivative in w.
    Rng rng(6);
    const Dims d{4, 5, 6};
    const Volume3D in = oracle::random_volume(rng, d), g = oracle::random_volume(rng, d);
    double w[27];
    for (double& x : w) x = rng.uniform(-1, 1);
    std::vector<double> out(d.size(), 0.0), back(d.size(), 0.0);
    conv::accumulate(in.values().data(), out.data(), d, w);
    conv::input_grad(g.values().data(), back.data(), d, w);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      lhs += out[i] * g[i];
      rhs += in[i] * back[i];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    double wg[27] = {};
    conv::weight_grad(in.values().data(), g.values().data(), d, wg);
    double via_w = 0;
    for (int k = 0; k < 27; ++k) via_w += wg[k] * w[k];
    CHECK(via_w == doctest::Approx(lhs).epsilon(1e-12));
  }

  TEST_CASE("multi-channel conv equals looped single-channel calls bitwise") {
    Rng rng(11);
    const Dims d{5, 4, 7};
    const std::size_t n = d.size(), channels = 3, stride = 40;
    std::vector<double> in(channels * n), g(channels * n), w(channels * stride);
    for (double& x : in) x = rng.uniform(-1, 1);
    for (double& x : g) x = rng.uniform(-1, 1);
    for (double& x : w) x = rng.uniform(-1, 1);
    w[5] = 0.0;

    std::vector<double> out_multi(n, 0.25), out_loop(n, 0.25);
    conv::accumulate(in.data(), channels, out_multi.data(), d, w.data(), stride);
    for (std::size_t c = 0; c < channels; ++c) conv::accumulate(in.data() + c * n, out_loop.data(), d, w.data() + c * stride);
    CHECK(out_multi == out_loop);

    std::vector<double> back_multi(n, 0.0), back_loop(n, 0.0);
    conv::input_grad(g.data(), channels, back_multi.data(), d, w.data(), stride);
    for (std::size_t c = 0; c < channels; ++c) conv::input_grad(g.data() + c * n, back_loop.data(), d, w.data() + c * stride);
    CHECK(back_multi == back_loop);

    std::vector<double> wg_multi(channels * stride, 0.5), wg_loop(channels * stride, 0.5);
    conv::weight_grad(in.data(), channels, g.data(), d, wg_multi.data(), stride);
    for (std::size_t c = 0; c < channels; ++c) conv::weight_grad(in.data() + c * n, g.data(), d, wg_loop.data() + c * stride);
    CHECK(wg_multi == wg_loop);
  }

  TEST_CASE("near-perfect prediction has vanishing gradients") {
    Rng rng(7);
    const MaskVolume mask = oracle::random_mask(rng, {6, 6, 6}, 0.3);
    const Volume3D img = mask.as_volume();
    TinySeg3D m;
    auto p = m.params();
    p[TinySeg3D::kW1 + 13] = 1.0;                                    // centre tap, channel 0
    p[TinySeg3D::kW2 + 13] = 1.0;                                    // centre tap, 0 -> 0
    p[TinySeg3D::kW3] = 40.0;
    p[TinySeg3D::kB3] = -20.0;
    const auto step = m.backward(img, mask, LossSpec{});
    CHECK(step.loss < 1e-6);
    for (double g : m.grads()) CHECK(std::fabs(g) <= 1e-5);
  }

  TEST_CASE("zero image: first-layer weight gradients vanish, biases do not") {
    Rng rng(8);
    const MaskVolume mask = oracle::random_mask(rng, {6, 6, 6}, 0.3);
    TinySeg3D m = gradcheck::random_model(9);
    for (std::size_t i = TinySeg3D::kB1; i < TinySeg3D::kW2; ++i) m.params()[i] = 0.2;
    for (std::size_t i = TinySeg3D::kB2; i < TinySeg3D::kW3; ++i) m.params()[i] = 0.2;
    m.backward(Volume3D::filled({6, 6, 6}, 0.0), mask, LossSpec{});
    for (std::size_t i = TinySeg3D::kW1; i < TinySeg3D::kB1; ++i) CHECK(m.grads()[i] == 0.0);
    bool any_bias = false;
    for (std::size_t i = TinySeg3D::kB1; i < TinySeg3D::kW2; ++i) any_bias = any_bias || m.grads()[i] != 0.0;
    CHECK(any_bias);
  }

  TEST_CASE("sgd_step") {
    SUBCASE("vanilla SGD without momentum or decay") {
      std::vector<double> w{1.0, -2.0}, g{0.5, 0.25}, v{0.0, 0.0};
      sgd_step(w, g, v, {0.1, 0.0, 0.0});
      CHECK(w[0] == 1.0 - 0.1 * 0.5);
      CHECK(w[1] == -2.0 - 0.1 * 0.25);
    }
    SUBCASE("velocity decays geometrically when gradients vanish") {
      std::vector<double> w{1.0}, g{2.0}, v{0.0};
      sgd_step(w, g, v, {0.1, 0.9, 0.0});
      g[0] = 0.0;
      for (int k = 1; k <= 5; ++k) {
        sgd_step(w, g, v, {0.1, 0.9, 0.0});
        CHECK(v[0] == doctest::Approx(2.0 * std::pow(0.9, k)).epsilon(1e-14));
      }
    }
    SUBCASE("two steps on f(w) = w^2 / 2 match the unrolled recurrence") {
      const double lr = 0.01, mu = 0.9, wd = 1e-4, w0 = 3.0;
      std::vector<double> w{w0}, g{w0}, v{0.0};
      sgd_step(w, g, v, {lr, mu, wd});
      g[0] = w[0];
      sgd_step(w, g, v, {lr, mu, wd});
      const double v1 = w0 + wd * w0;
      const double w1 = w0 - lr * v1;
      const double v2 = mu * v1 + (w1 + wd * w1);
      const double w2 = w1 - lr * v2;
      CHECK(w[0] == doctest::Approx(w2).epsilon(1e-15));
    }
    std::vector<double> a{1.0}, b{1.0, 2.0}, c{0.0};
    CHECK_THROWS_AS(sgd_step(a, b, c, {}), InvalidInput);
  }

  TEST_CASE("model file round trip and corruption") {
    const auto dir = std::filesystem::temp_directory_path() / "afl_tests" / "model";
    std::filesystem::create_directories(dir);
    const TinySeg3D m = gradcheck::random_model(10);
    m.save(dir / "model.bin");
    CHECK(std::filesystem::file_size(dir / "model.bin") == 8 + 4 + 4 + (4 + 20) * 3 + (4 + 4) * 3 + 1969 * 8);
    const TinySeg3D back = TinySeg3D::load(dir / "model.bin");
    for (std::size_t i = 0; i < 1969; ++i) CHECK(back.params()[i] == m.params()[i]);
    std::filesystem::resize_file(dir / "model.bin", 100);
    CHECK_THROWS_AS(TinySeg3D::load(dir / "model.bin"), DataError);
  }
}
