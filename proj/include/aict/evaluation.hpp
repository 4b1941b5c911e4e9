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

#pragma once

// Quality and rate metrics, Bjøntegaard delta rate, complexity counters and
// rate-distortion export.

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aict/model.hpp"

namespace aict {

// Cap for identical images.
inline constexpr double kMaxPsnrDb = 100.0;

// PSNR in dB of (H, W, 3) tensors in [0, 1], peak 1, MSE over all channels.
double psnr(const torch::Tensor& x, const torch::Tensor& x_hat);

struct RDPoint {
  double bpp = 0.0;
  double psnr_db = 0.0;
};

// Average bitrate difference (percent) of `test` against `anchor` over the
// overlapping PSNR range. Cubic least-squares fit of log10(bpp) against PSNR,
// integrated with a 1000-interval trapezoid rule. Needs >= 4 points per curve;
// throws ProtocolError when the PSNR ranges do not overlap.
double bd_rate(std::span<const RDPoint> anchor, std::span<const RDPoint> test);

// Largest centered crop whose edges are multiples of `multiple`; nullopt when
// an edge is shorter than `multiple`.
std::optional<torch::Tensor> crop_to_multiple(const torch::Tensor& image, int64_t multiple = 256);

int64_t count_flops(const Codec& model, int64_t height, int64_t width,
                    bool with_adaptation = true);

struct TimingStats {
  std::string label;  // e.g. "cpu fp32"
  std::vector<double> samples_ms;  // per-image mean of each timed pass
  double mean_ms = 0.0;
  double median_ms = 0.0;
};

// Runs `decode` over every stream `warmup` times untimed, then `repeats` timed
// passes. Each sample is the mean per-stream wall time of one pass.
TimingStats time_decode(size_t stream_count, const std::function<void(size_t)>& decode,
                        const std::string& label, int warmup = 1, int repeats = 5);

struct RDRow {
  std::string image;  // file name, or kMeanRow for per-quality aggregates
  int64_t quality_id = 0;
  double lambda = 0.0;
  double bpp = 0.0;
  double psnr_db = 0.0;
};

inline constexpr const char* kMeanRow = "mean";

struct ExportOptions {
  bool allow_adaptation = true;
  int64_t crop_multiple = 0;  // > 0 center-crops every image to this multiple
  std::ostream* warn = nullptr;
};

// Encodes and decodes every image in `image_dir` with every checkpoint.
// Returns per-image rows followed by one mean row per checkpoint.
std::vector<RDRow> export_rd(std::span<const std::string> checkpoints,
                             const std::string& image_dir, const ExportOptions& opts = {});

// Header: image,quality_id,lambda,bpp,psnr_db
void write_rd_csv(const std::string& path, std::span<const RDRow> rows);
std::vector<RDRow> read_rd_csv(const std::string& path);

// Mean rows sorted by bpp; falls back to averaging per-image rows by quality
// when the file has no mean rows.
std::vector<RDPoint> mean_curve(std::span<const RDRow> rows);

// Mean of bd_rate over the images present (as per-image rows) in both
// files. Throws ProtocolError when no image is shared.
double bd_rate_per_image(std::span<const RDRow> anchor, std::span<const RDRow> test);

// Standalone SVG plot of PSNR against bpp for named curves.
std::string rd_plot_svg(const std::vector<std::pair<std::string, std::vector<RDPoint>>>& curves);

}  // namespace aict
