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

#include "aict/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <vector>

namespace aict {

namespace {

using Color = std::array<double, 3>;

Color random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  return {u(rng), u(rng), u(rng)};
}

double smoothstep(double edge, double softness, double v) {
  const double t = std::clamp((v - edge) / softness + 0.5, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace

Rgb8Image synthesize_image(int64_t height, int64_t width, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto h = static_cast<double>(height);
  const auto w = static_cast<double>(width);
  std::vector<double> canvas(static_cast<size_t>(height * width * 3));
  auto at = [&](int64_t y, int64_t x, int c) -> double& {
    return canvas[static_cast<size_t>((y * width + x) * 3 + c)];
  };

  // Background: bilinear blend of four corner colors.
  const Color c00 = random_color(rng), c01 = random_color(rng);
  const Color c10 = random_color(rng), c11 = random_color(rng);
  for (int64_t y = 0; y < height; ++y) {
    for (int64_t x = 0; x < width; ++x) {
      const double fy = static_cast<double>(y) / h, fx = static_cast<double>(x) / w;
      for (int c = 0; c < 3; ++c) {
        at(y, x, c) = (1 - fy) * ((1 - fx) * c00[c] + fx * c01[c]) +
                      fy * ((1 - fx) * c10[c] + fx * c11[c]);
      }
    }
  }

  const int shapes = 4 + static_cast<int>(u(rng) * 10);
  for (int s = 0; s < shapes; ++s) {
    const Color color = random_color(rng);
    const double cy = u(rng) * h, cx = u(rng) * w;
    const double ry = (0.05 + 0.3 * u(rng)) * h, rx = (0.05 + 0.3 * u(rng)) * w;
    const double angle = u(rng) * std::numbers::pi;
    const double softness = 0.5 + 3.0 * u(rng);
    const bool ellipse = u(rng) < 0.5;
    const double ca = std::cos(angle), sa = std::sin(angle);
    // Optional grating inside the shape.
    const bool textured = u(rng) < 0.4;
    const double freq = 0.05 + 0.4 * u(rng), tangle = u(rng) * std::numbers::pi;
    const double amp = 0.05 + 0.15 * u(rng);
    for (int64_t y = 0; y < height; ++y) {
      for (int64_t x = 0; x < width; ++x) {
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        const double v = dx * ca + dy * sa, q = -dx * sa + dy * ca;
        double dist;
        if (ellipse) {
          dist = (std::sqrt((v / rx) * (v / rx) + (q / ry) * (q / ry)) - 1.0) * std::min(rx, ry);
        } else {
          dist = std::max(std::fabs(v) - rx, std::fabs(q) - ry);
        }
        const double alpha = 1.0 - smoothstep(0.0, softness, dist);
        if (alpha <= 0.0) continue;
        double tex = 0.0;
        if (textured) {
          tex = amp * std::sin(freq * (static_cast<double>(x) * std::cos(tangle) +
                                       static_cast<double>(y) * std::sin(tangle)));
        }
        for (int c = 0; c < 3; ++c) {
          at(y, x, c) = (1 - alpha) * at(y, x, c) + alpha * (color[c] + tex);
        }
      }
    }
  }

  std::normal_distribution<double> noise(0.0, 0.01 + 0.02 * u(rng));
  Rgb8Image img;
  img.height = height;
  img.width = width;
  img.pixels.resize(canvas.size());
  for (size_t i = 0; i < canvas.size(); ++i) {
    const double v = std::clamp(canvas[i] + noise(rng), 0.0, 1.0);
    img.pixels[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  return img;
}

void write_synthetic_dataset(const std::string& dir, int count, int64_t height, int64_t width,
                             uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%04d.png", i);
    write_png((std::filesystem::path(dir) / name).string(),
              synthesize_image(height, width, seed * 1000003ULL + static_cast<uint64_t>(i)));
  }
}

}  // namespace aict
