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

#include "aict/evaluation.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "aict/errors.hpp"
#include "aict/synthetic.hpp"
#include "param_tally.hpp"
#include "test_util.hpp"

namespace aict {
namespace {

using testing::TempDir;

TEST(PsnrTest, ClosedFormValues) {
  auto x = torch::rand({16, 16, 3});
  EXPECT_EQ(psnr(x, x), kMaxPsnrDb);
  EXPECT_NEAR(psnr(torch::zeros({4, 4, 3}), torch::ones({4, 4, 3})), 0.0, 1e-12);
  auto off = x.to(torch::kDouble) + 1.0 / 255.0;
  EXPECT_NEAR(psnr(x.to(torch::kDouble), off), 48.1308, 1e-4);
  EXPECT_THROW(psnr(x, torch::rand({16, 15, 3})), InputError);
}

std::vector<RDPoint> curve(std::initializer_list<std::pair<double, double>> pts) {
  std::vector<RDPoint> out;
  for (auto [b, p] : pts) out.push_back({b, p});
  return out;
}

// Piecewise-linear log-rate interpolation integrated with 10^5 trapezoids.
double dense_trapezoid_bd(std::vector<RDPoint> a, std::vector<RDPoint> t) {
  auto by_psnr = [](const RDPoint& l, const RDPoint& r) { return l.psnr_db < r.psnr_db; };
  std::sort(a.begin(), a.end(), by_psnr);
  std::sort(t.begin(), t.end(), by_psnr);
  auto interp = [](const std::vector<RDPoint>& c, double p) {
    size_t i = 1;
    while (i + 1 < c.size() && c[i].psnr_db < p) ++i;
    const double u = (p - c[i - 1].psnr_db) / (c[i].psnr_db - c[i - 1].psnr_db);
    return (1 - u) * std::log10(c[i - 1].bpp) + u * std::log10(c[i].bpp);
  };
  const double lo = std::max(a.front().psnr_db, t.front().psnr_db);
  const double hi = std::min(a.back().psnr_db, t.back().psnr_db);
  const int n = 100000;
  const double h = (hi - lo) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    const double p = lo + h * i;
    s += w * (interp(t, p) - interp(a, p));
  }
  return (std::pow(10.0, s * h / (hi - lo)) - 1.0) * 100.0;
}

// Exact cubic through four points (Lagrange form) integrated with 10^5
// trapezoids.
double lagrange_bd(const std::vector<RDPoint>& a, const std::vector<RDPoint>& t) {
  auto lagrange = [](const std::vector<RDPoint>& c, double p) {
    double s = 0.0;
    for (size_t i = 0; i < 4; ++i) {
      double l = 1.0;
      for (size_t j = 0; j < 4; ++j) {
        if (j != i) l *= (p - c[j].psnr_db) / (c[i].psnr_db - c[j].psnr_db);
      }
      s += l * std::log10(c[i].bpp);
    }
    return s;
  };
  double lo = -1e300, hi = 1e300;
  for (const auto* c : {&a, &t}) {
    double cmin = 1e300, cmax = -1e300;
    for (const auto& p : *c) {
      cmin = std::min(cmin, p.psnr_db);
      cmax = std::max(cmax, p.psnr_db);
    }
    lo = std::max(lo, cmin);
    hi = std::min(hi, cmax);
  }
  const int n = 100000;
  const double h = (hi - lo) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    s += w * (lagrange(t, lo + h * i) - lagrange(a, lo + h * i));
  }
  return (std::pow(10.0, s * h / (hi - lo)) - 1.0) * 100.0;
}

TEST(BdRateTest, SelfComparisonIsZero) {
  const auto a = curve({{0.1, 29.0}, {0.3, 32.5}, {0.8, 35.1}, {1.9, 38.7}, {3.0, 40.2}});
  EXPECT_NEAR(bd_rate(a, a), 0.0, 1e-9);
}

TEST(BdRateTest, DoubledRateIsPlusHundredPercent) {
  const auto a = curve({{0.1, 29.0}, {0.3, 32.5}, {0.8, 35.1}, {1.9, 38.7}});
  auto t = a;
  for (auto& p : t) p.bpp *= 2.0;
  EXPECT_NEAR(bd_rate(a, t), 100.0, 0.01);
  EXPECT_NEAR(bd_rate(t, a), -50.0, 0.01);
}

TEST(BdRateTest, FourPointExampleMatchesDenseOracle) {
  const auto a = curve({{0.25, 30}, {0.5, 33}, {1.0, 36}, {2.0, 39}});
  const auto t = curve({{0.2, 30}, {0.4, 33}, {0.8, 36}, {1.6, 39}});
  const double oracle = dense_trapezoid_bd(a, t);
  EXPECT_NEAR(oracle, -20.0, 1e-6);
  EXPECT_NEAR(bd_rate(a, t), oracle, 0.1);
}

TEST(BdRateTest, CurvedCurvesMatchLagrangeOracle) {
  const auto a = curve({{0.12, 28.1}, {0.31, 31.0}, {0.74, 34.4}, {1.52, 37.2}});
  const auto t = curve({{0.09, 28.6}, {0.27, 31.6}, {0.61, 34.1}, {1.31, 36.9}});
  EXPECT_NEAR(bd_rate(a, t), lagrange_bd(a, t), 1e-4);
}

TEST(BdRateTest, PointOrderDoesNotMatter) {
  const auto a = curve({{0.12, 28.1}, {0.31, 31.0}, {0.74, 34.4}, {1.52, 37.2}, {2.1, 38.0}});
  const auto t = curve({{0.09, 28.6}, {0.27, 31.6}, {0.61, 34.1}, {1.31, 36.9}});
  auto ar = a, tr = t;
  std::reverse(ar.begin(), ar.end());
  std::swap(tr[0], tr[2]);
  EXPECT_DOUBLE_EQ(bd_rate(a, t), bd_rate(ar, tr));
}

TEST(BdRateTest, ProtocolViolations) {
  const auto a = curve({{0.1, 20}, {0.2, 21}, {0.3, 22}, {0.4, 23}});
  const auto far = curve({{0.1, 30}, {0.2, 31}, {0.3, 32}, {0.4, 33}});
  EXPECT_THROW(bd_rate(a, far), ProtocolError);
  EXPECT_THROW(bd_rate(a, curve({{0.1, 20}, {0.2, 21}, {0.3, 22}})), ProtocolError);
  EXPECT_THROW(bd_rate(a, curve({{0.0, 20}, {0.2, 21}, {0.3, 22}, {0.4, 23}})), InputError);
}

TEST(BdRateTest, PerImageAveragesSharedImages) {
  const double base[][2] = {{0.25, 30}, {0.5, 33}, {1.0, 36}, {2.0, 39}};
  std::vector<RDRow> anchor, test;
  for (int q = 0; q < 4; ++q) {
    anchor.push_back({"a.png", q, 0.0, base[q][0], base[q][1]});
    anchor.push_back({"b.png", q, 0.0, base[q][0] * 3, base[q][1] + 1});
    anchor.push_back({"only_anchor.png", q, 0.0, base[q][0], base[q][1]});
    // a.png costs twice as much in the test set, b.png costs half.
    test.push_back({"a.png", q, 0.0, base[q][0] * 2, base[q][1]});
    test.push_back({"b.png", q, 0.0, base[q][0] * 1.5, base[q][1] + 1});
    test.push_back({kMeanRow, q, 0.0, 9.0, 99.0});
  }
  EXPECT_NEAR(bd_rate_per_image(anchor, test), (100.0 - 50.0) / 2, 1e-6);
  std::vector<RDRow> other{{"c.png", 0, 0.0, 0.1, 20}};
  EXPECT_THROW(bd_rate_per_image(anchor, other), ProtocolError);
}

TEST(CropTest, CentersLargestMultiple) {
  auto img = torch::arange(600 * 520 * 3, torch::kFloat).reshape({600, 520, 3});
  auto c = crop_to_multiple(img, 256);
  ASSERT_TRUE(c.has_value());
  EXPECT_EQ(c->sizes(), (std::vector<int64_t>{512, 512, 3}));
  EXPECT_TRUE(c->equal(img.slice(0, 44, 556).slice(1, 4, 516)));
  EXPECT_FALSE(crop_to_multiple(torch::zeros({255, 900, 3}), 256).has_value());
  auto exact = torch::rand({256, 256, 3});
  EXPECT_TRUE(crop_to_multiple(exact, 256)->equal(exact));
}

TEST(ParameterCountTest, SingleLinearLayer) {
  torch::nn::Linear layer(5, 6);
  EXPECT_EQ(count_parameters(*layer), 36);
}

TEST(ParameterCountTest, TinyMatchesHandTally) {
  for (const auto& cfg : {tiny_config(), micro_config(), base_config()}) {
    Codec model(cfg);
    EXPECT_EQ(count_parameters(*model), testing::hand_tally(cfg)) << cfg.name;
  }
}

TEST(FlopsTest, PatchMergeHandCount) {
  PatchMerge merge(3, 32);
  EXPECT_EQ(merge->flops(256, 256), 2LL * 128 * 128 * 12 * 32);
}

TEST(FlopsTest, DoublingAreaDoublesFlops) {
  Codec model(tiny_config());
  for (bool adapt : {false, true}) {
    const double f1 = static_cast<double>(count_flops(model, 256, 256, adapt));
    const double f2 = static_cast<double>(count_flops(model, 256, 512, adapt));
    EXPECT_NEAR(f2 / f1, 2.0, 0.02) << adapt;
  }
  EXPECT_GT(count_flops(model, 256, 256, true), count_flops(model, 256, 256, false));
}

TEST(TimingTest, SleepStubMeanMatchesDuration) {
  int calls = 0;
  const auto stats = time_decode(
      3,
      [&](size_t) {
        ++calls;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
      },
      "cpu stub", 1, 4);
  EXPECT_EQ(calls, 3 * 5);
  ASSERT_EQ(stats.samples_ms.size(), 4u);
  for (double s : stats.samples_ms) EXPECT_TRUE(std::isfinite(s) && s >= 0.0);
  EXPECT_NEAR(stats.mean_ms, 20.0, 2.0);
  EXPECT_NEAR(stats.median_ms, 20.0, 2.0);
  EXPECT_EQ(stats.label, "cpu stub");
  EXPECT_THROW(time_decode(0, [](size_t) {}, "x"), InputError);
}

TEST(RdCsvTest, RoundTripAndMeanCurve) {
  TempDir dir("rdcsv");
  std::vector<RDRow> rows = {{"a.png", 1, 2e-3, 0.5, 31.25},
                             {"b.png", 1, 2e-3, 0.7, 30.75},
                             {"a.png", 0, 1e-2, 0.2, 28.0},
                             {kMeanRow, 1, 2e-3, 0.6, 31.0},
                             {kMeanRow, 0, 1e-2, 0.2, 28.0}};
  write_rd_csv(dir.file("rd.csv"), rows);
  const auto back = read_rd_csv(dir.file("rd.csv"));
  ASSERT_EQ(back.size(), rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].image, rows[i].image);
    EXPECT_EQ(back[i].quality_id, rows[i].quality_id);
    EXPECT_DOUBLE_EQ(back[i].lambda, rows[i].lambda);
    EXPECT_DOUBLE_EQ(back[i].bpp, rows[i].bpp);
    EXPECT_DOUBLE_EQ(back[i].psnr_db, rows[i].psnr_db);
  }
  const auto mc = mean_curve(back);
  ASSERT_EQ(mc.size(), 2u);
  EXPECT_DOUBLE_EQ(mc[0].bpp, 0.2);
  EXPECT_DOUBLE_EQ(mc[1].psnr_db, 31.0);
  const auto fallback = mean_curve(std::span<const RDRow>(rows.data(), 3));
  ASSERT_EQ(fallback.size(), 2u);
  EXPECT_NEAR(fallback[1].bpp, 0.6, 1e-12);

  std::ofstream(dir.file("bad.csv")) << "img,q\n";
  EXPECT_THROW(read_rd_csv(dir.file("bad.csv")), FormatError);
}

TEST(RdPlotTest, EscapesNamesAndDrawsEveryPoint) {
  const auto svg = rd_plot_svg({{"a<b>&", {{0.1, 30}, {0.5, 34}}}, {"ref", {{0.2, 31}}}});
  EXPECT_NE(svg.find("a&lt;b&gt;&amp;"), std::string::npos);
  size_t circles = 0;
  for (size_t p = svg.find("<circle"); p != std::string::npos; p = svg.find("<circle", p + 1)) ++circles;
  EXPECT_EQ(circles, 3u);
  EXPECT_THROW(rd_plot_svg({}), InputError);
}

TEST(ExportRdTest, PerImageRowsThenMeans) {
  TempDir dir("export");
  const auto images = dir.path() / "images";
  write_synthetic_dataset(images.string(), 2, 64, 80, 3);
  write_png((images / "small.png").string(), synthesize_image(32, 32, 9));
  torch::manual_seed(8);
  Codec model(tiny_config());
  save_checkpoint(dir.file("q2.pt"), model, {"tiny", 2, 20e-5, 0});
  std::ostringstream warn;
  ExportOptions opts;
  opts.warn = &warn;
  const std::vector<std::string> ckpts = {dir.file("q2.pt")};
  const auto rows = export_rd(ckpts, images.string(), opts);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].image, "img_0000.png");
  EXPECT_EQ(rows[2].image, kMeanRow);
  EXPECT_EQ(rows[2].quality_id, 2);
  EXPECT_NEAR(rows[2].bpp, 0.5 * (rows[0].bpp + rows[1].bpp), 1e-12);
  EXPECT_NEAR(rows[2].psnr_db, 0.5 * (rows[0].psnr_db + rows[1].psnr_db), 1e-12);
  for (const auto& r : rows) EXPECT_GT(r.bpp, 0.0);
  EXPECT_NE(warn.str().find("small.png"), std::string::npos);
}

}  // namespace
}  // namespace aict
