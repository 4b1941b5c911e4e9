// Copyright 2026 The AICT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "aict/scale_adaptation.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "aict/errors.hpp"
#include "test_util.hpp"

namespace aict {
namespace {

using testing::max_abs_diff;

// Pixel-space source coordinate of a normalized grid value.
double to_pixel(double g, int64_t src) { return ((g + 1.0) * static_cast<double>(src) - 1.0) / 2.0; }

TEST(ResizeFactorTest, FixedPointRoundTripWithinOneUlp) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(kMinResizeFactor, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const ResizeFactor m{u(rng)};
    EXPECT_LE(std::fabs(m.quantized().m - m.m), std::ldexp(1.0, -kResizeFractionBits));
  }
  EXPECT_EQ(ResizeFactor{1.0}.to_fixed(), 1 << 14);
  EXPECT_EQ(ResizeFactor{0.5}.to_fixed(), 1 << 13);
  EXPECT_EQ(ResizeFactor::from_fixed(12288).m, 0.75);
}

TEST(DownscaledEdgeTest, RoundsAndRespectsFloor) {
  EXPECT_EQ(downscaled_edge(0.9, 256), 230);
  EXPECT_EQ(downscaled_edge(0.9, 100), 90);
  EXPECT_EQ(downscaled_edge(0.5, 100), 64);
  EXPECT_EQ(downscaled_edge(0.5, 64), 64);
  EXPECT_EQ(downscaled_edge(0.5, 4, 1), 2);
  for (int64_t e = 64; e < 600; e += 7) {
    for (double m = 0.5; m <= 1.0; m += 0.01) {
      const auto d = downscaled_edge(m, e);
      EXPECT_GE(d, 64);
      EXPECT_LE(d, e);
    }
  }
}

TEST(MakeGridTest, HalfScaleFourByFourHitsPlusMinusHalf) {
  const auto g = make_grid(ResizeFactor{0.5}, 4, 4, ResampleDirection::kDown, 1);
  ASSERT_EQ(g.height(), 2);
  ASSERT_EQ(g.width(), 2);
  EXPECT_EQ(g.src_height, 4);
  auto expected = torch::tensor({-0.5, 0.5}, torch::kDouble);
  EXPECT_LT(max_abs_diff(g.coords.select(2, 0)[0], expected), 1e-12);
  EXPECT_LT(max_abs_diff(g.coords.select(2, 1).select(1, 0), expected), 1e-12);
}

TEST(MakeGridTest, CoordinatesAreMonotone) {
  for (double m : {0.5, 0.63, 0.8, 0.97}) {
    for (auto dir : {ResampleDirection::kDown, ResampleDirection::kUp}) {
      const auto g = make_grid(ResizeFactor{m}, 130, 97, dir);
      auto gx = g.coords.select(2, 0)[0];
      auto gy = g.coords.select(2, 1).select(1, 0);
      EXPECT_GT((gx.slice(0, 1) - gx.slice(0, 0, -1)).min().item<double>(), 0.0);
      EXPECT_GT((gy.slice(0, 1) - gy.slice(0, 0, -1)).min().item<double>(), 0.0);
    }
  }
}

// Output pixel -> up-grid source position in the small image -> down-grid
// position in the original; must land within one pixel of where it started.
TEST(MakeGridTest, DownThenUpComposesToNearIdentity) {
  for (double m : {0.5, 0.71, 0.9}) {
    const int64_t h = 150, w = 201;
    const auto down = make_grid(ResizeFactor{m}, h, w, ResampleDirection::kDown);
    const auto up = make_grid(ResizeFactor{m}, h, w, ResampleDirection::kUp);
    const int64_t hs = down.height(), ws = down.width();
    auto dx = down.coords.select(2, 0)[0];
    for (int64_t j = 0; j < w; ++j) {
      const double s = to_pixel(up.coords[0][j][0].item<double>(), ws);
      // Linear interpolation of the down grid at fractional position s.
      const double sc = std::clamp(s, 0.0, static_cast<double>(ws - 1));
      const auto i0 = static_cast<int64_t>(std::floor(sc));
      const auto i1 = std::min(i0 + 1, ws - 1);
      const double f = sc - static_cast<double>(i0);
      const double g = (1 - f) * dx[i0].item<double>() + f * dx[i1].item<double>();
      EXPECT_LE(std::fabs(to_pixel(g, w) - static_cast<double>(j)), 1.0) << m << " " << j;
    }
    EXPECT_EQ(hs, downscaled_edge(m, h));
  }
}

TEST(BicubicTest, KernelValues) {
  EXPECT_EQ(cubic_kernel(0.0), 1.0);
  EXPECT_EQ(cubic_kernel(1.0), 0.0);
  EXPECT_EQ(cubic_kernel(2.0), 0.0);
  EXPECT_DOUBLE_EQ(cubic_kernel(0.5), 0.5625);
  EXPECT_DOUBLE_EQ(cubic_kernel(-1.5), -0.0625);
  for (double t = 0.0; t < 1.0; t += 0.01) {
    EXPECT_NEAR(cubic_kernel(t + 1) + cubic_kernel(t) + cubic_kernel(1 - t) + cubic_kernel(2 - t),
                1.0, 1e-12);
  }
}

TEST(BicubicTest, IdentityGridReproducesInput) {
  torch::manual_seed(22);
  for (auto dtype : {torch::kFloat, torch::kDouble}) {
    auto x = torch::rand({2, 67, 93, 3}, dtype);
    const auto g = make_grid(ResizeFactor{1.0}, 67, 93, ResampleDirection::kDown);
    EXPECT_LE(max_abs_diff(bicubic_sample(x, g), x), 1e-6);
  }
}

TEST(BicubicTest, ConstantImageStaysConstantOnAnyGrid) {
  torch::manual_seed(23);
  auto x = torch::full({1, 20, 30, 3}, 0.3717f);
  SamplingGrid g{torch::rand({17, 41, 2}, torch::kDouble) * 2.6 - 1.3, 20, 30};
  EXPECT_TRUE(bicubic_sample(x, g).eq(0.3717f).all().item<bool>());
  const auto down = make_grid(ResizeFactor{0.61}, 20, 30, ResampleDirection::kDown, 1);
  EXPECT_TRUE(bicubic_sample(x, down).eq(0.3717f).all().item<bool>());
}

// At m = 0.5 every sample sits halfway between two pixels, so the grid
// sampler equals separable convolution with the half-offset Catmull-Rom taps
// followed by 2x subsampling.
TEST(BicubicTest, HalfScaleMatchesConvolveThenSubsample) {
  torch::manual_seed(24);
  auto x = torch::rand({1, 8, 8, 1}, torch::kDouble);
  const auto g = make_grid(ResizeFactor{0.5}, 8, 8, ResampleDirection::kDown, 1);
  auto out = bicubic_sample(x, g);
  ASSERT_EQ(out.size(1), 4);
  const double taps[4] = {cubic_kernel(1.5), cubic_kernel(0.5), cubic_kernel(0.5),
                          cubic_kernel(1.5)};
  auto px = [&](int64_t r, int64_t c) {
    r = std::clamp<int64_t>(r, 0, 7);
    c = std::clamp<int64_t>(c, 0, 7);
    return x[0][r][c][0].item<double>();
  };
  for (int64_t i = 0; i < 4; ++i) {
    for (int64_t j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) acc += taps[a] * taps[b] * px(2 * i - 1 + a, 2 * j - 1 + b);
      }
      EXPECT_NEAR(out[0][i][j][0].item<double>(), acc, 1e-5);
    }
  }
}

TEST(BicubicTest, RejectsMismatchedSource) {
  const auto g = make_grid(ResizeFactor{0.5}, 100, 100, ResampleDirection::kDown);
  EXPECT_THROW(bicubic_sample(torch::rand({1, 90, 100, 3}), g), ConfigError);
}

TEST(BicubicTest, GradientReachesScaleFactor) {
  auto m = torch::tensor(0.8, torch::kDouble).requires_grad_(true);
  auto x = torch::linspace(0, 1, 100 * 100, torch::kDouble).view({1, 100, 100, 1});
  auto g = make_grid(m, m, 80, 80, 100, 100, ResampleDirection::kDown);
  bicubic_sample(x, g).sum().backward();
  ASSERT_TRUE(m.grad().defined());
  EXPECT_NE(m.grad().item<double>(), 0.0);
}

class ScaleAdaptationTest : public ::testing::Test {
 protected:
  void SetUp() override {
    torch::manual_seed(25);
    sa_ = ScaleAdaptation(ScaleAdaptConfig{});
  }
  ScaleAdaptation sa_{nullptr};
};

TEST_F(ScaleAdaptationTest, ResizeFactorInRangeAndDeterministic) {
  torch::NoGradGuard ng;
  for (int i = 0; i < 5; ++i) {
    auto x = torch::rand({1, 64 + 17 * i, 80 + 9 * i, 3});
    const auto m = sa_->estimate_resize_factor(x);
    EXPECT_GE(m.m, 0.5);
    EXPECT_LE(m.m, 1.0);
    EXPECT_EQ(m.m, sa_->estimate_resize_factor(x.clone()).m);
  }
}

TEST_F(ScaleAdaptationTest, SaturatedHeadGivesOne) {
  torch::NoGradGuard ng;
  sa_->rpn->head->bias.fill_(1e3);
  const auto m = sa_->estimate_resize_factor(torch::rand({1, 96, 96, 3}));
  EXPECT_NEAR(m.m, 1.0, 1e-6);
  sa_->rpn->head->bias.fill_(-1e3);
  EXPECT_NEAR(sa_->estimate_resize_factor(torch::rand({1, 96, 96, 3})).m, 0.5, 1e-6);
}

TEST_F(ScaleAdaptationTest, ProcessorsStartAsPassthrough) {
  torch::NoGradGuard ng;
  auto x = torch::rand({1, 256, 256, 3});
  auto pre = sa_->preprocess(x);
  EXPECT_EQ(pre.sizes(), x.sizes());
  EXPECT_LE(max_abs_diff(pre, x), 1e-7);
  EXPECT_LE(max_abs_diff(sa_->postprocess(x), x), 1e-7);
}

TEST_F(ScaleAdaptationTest, GradientReachesConvNeXtWeights) {
  ResamplingProcessor proc(4);
  proc->to(torch::kDouble);
  {
    torch::NoGradGuard ng;
    proc->projection->weight.normal_(0.0, 0.5);
    for (auto& b : proc->blocks) b->gamma.fill_(0.5);
  }
  auto x = torch::rand({1, 12, 12, 3}, torch::kDouble);
  auto probe = torch::randn({1, 12, 12, 3}, torch::kDouble);
  (proc(x) * probe).sum().backward();
  auto& w = proc->blocks[1]->dwconv->weight;
  const double analytic = w.grad().view(-1)[5].item<double>();
  torch::NoGradGuard ng;
  const double h = 1e-6;
  auto flat = w.view(-1);
  const double orig = flat[5].item<double>();
  flat[5] = orig + h;
  const double lp = (proc(x) * probe).sum().item<double>();
  flat[5] = orig - h;
  const double lm = (proc(x) * probe).sum().item<double>();
  flat[5] = orig;
  const double fd = (lp - lm) / (2 * h);
  EXPECT_NE(fd, 0.0);
  EXPECT_NEAR(analytic, fd, 1e-6 * std::max(1.0, std::fabs(fd)));
}

TEST_F(ScaleAdaptationTest, BypassNearOne) {
  torch::NoGradGuard ng;
  auto x = torch::rand({1, 100, 120, 3});
  auto [out, applied] = sa_->maybe_rescale(x, ResizeFactor{0.999});
  EXPECT_FALSE(applied);
  EXPECT_TRUE(out.equal(x));
  EXPECT_TRUE(sa_->should_bypass(ResizeFactor{1.0}));
  EXPECT_TRUE(sa_->should_bypass(ResizeFactor{0.981}));
  EXPECT_FALSE(sa_->should_bypass(ResizeFactor{0.98}));
}

TEST_F(ScaleAdaptationTest, RescaleProducesRoundedEdges) {
  torch::NoGradGuard ng;
  auto x = torch::rand({1, 256, 150, 3});
  auto [out, applied] = sa_->maybe_rescale(x, ResizeFactor{0.9});
  EXPECT_TRUE(applied);
  EXPECT_EQ(out.size(1), 230);
  EXPECT_EQ(out.size(2), 135);
  auto back = sa_->restore(out, ResizeFactor{0.9}, 256, 150);
  EXPECT_EQ(back.sizes(), x.sizes());
  auto [small, s_applied] = sa_->maybe_rescale(torch::rand({1, 70, 300, 3}), ResizeFactor{0.5});
  EXPECT_TRUE(s_applied);
  EXPECT_EQ(small.size(1), 64);
  EXPECT_EQ(small.size(2), 150);
}

}  // namespace
}  // namespace aict
