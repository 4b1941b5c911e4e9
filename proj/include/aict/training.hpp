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

// Rate-distortion training: L = D + lambda * R with D the RGB MSE on [0, 1]
// and R in bits per pixel.

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "aict/image_io.hpp"
#include "aict/model.hpp"

namespace aict {

// quality_id -> lambda; the largest lambda is quality 0.
inline constexpr std::array<double, 4> kLambdaSweep = {1000e-5, 200e-5, 20e-5, 3e-5};

struct TrainConfig {
  std::string model = "tiny";
  double lambda = kLambdaSweep[0];
  int64_t quality_id = 0;
  int64_t total_steps = 50000;
  double lr_initial = 1e-4;
  double lr_final = 1e-5;
  double final_phase_fraction = 0.1;
  int64_t batch_size = 8;
  int64_t crop = 256;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  uint64_t seed = 0;
  double grad_clip = 1.0;
  bool scale_adaptation = true;
  bool noise_quantization = false;
  int64_t log_every = 10;
  int64_t checkpoint_every = 1000;

  void validate() const;
};

// `key = value` lines; '#' starts a comment. Unknown keys throw ConfigError.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);
std::string format_train_config(const TrainConfig& cfg);

struct RDLossBreakdown {
  torch::Tensor loss;  // differentiable D + lambda * R
  double d_mse = 0.0;
  double r_bpp = 0.0;
  double total = 0.0;  // d_mse + lambda * r_bpp
};

// x, x_hat: (B, H, W, 3) or (H, W, 3); bits are summed over everything and
// divided by B * H * W.
RDLossBreakdown rd_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                        const torch::Tensor& bits_y, const torch::Tensor& bits_z, double lambda,
                        int64_t height, int64_t width);

// Piecewise constant: lr_initial, then lr_final for the last
// final_phase_fraction of the run.
double lr_schedule(int64_t step, const TrainConfig& cfg);

class ImageDataset {
 public:
  // Loads every PNG in `dir`; images with an edge below `min_edge` are skipped
  // with a warning on `warn`.
  static ImageDataset load(const std::string& dir, int64_t min_edge, std::ostream* warn = nullptr);

  size_t size() const { return images_.size(); }
  const Rgb8Image& image(size_t i) const { return images_[i]; }
  const std::string& path(size_t i) const { return paths_[i]; }

 private:
  std::vector<Rgb8Image> images_;
  std::vector<std::string> paths_;
};

struct CropLocation {
  size_t image = 0;
  int64_t top = 0;
  int64_t left = 0;
};

struct Batch {
  torch::Tensor images;  // (B, crop, crop, 3) float32 in [0, 1]
  std::vector<CropLocation> locations;
};

// Uniform image choice and uniform crop position per sample.
Batch sample_batch(const ImageDataset& data, const TrainConfig& cfg, std::mt19937_64& rng);

struct LogRow {
  int64_t step = 0;
  double loss = 0.0;
  double d_mse = 0.0;
  double r_bpp = 0.0;
  double lr = 0.0;
};

struct TrainOptions {
  bool resume = false;           // continue from out_dir/checkpoint.pt when present
  int64_t stop_after = -1;       // stop (and checkpoint) once this many steps are done
  std::ostream* progress = nullptr;
};

struct TrainResult {
  std::string checkpoint_path;
  std::vector<LogRow> log;  // rows produced by this call
  int64_t steps_done = 0;
};

// One run per lambda. Writes checkpoint.pt, metrics.csv
// (step,loss,d_mse,r_bpp,lr) and config.txt into out_dir. Throws NumericError
// with batch statistics if the loss becomes non-finite.
TrainResult train(Codec& model, const TrainConfig& cfg, const std::string& dataset_dir,
                  const std::string& out_dir, const TrainOptions& opts = {});

std::vector<LogRow> read_metrics_csv(const std::string& path);

}  // namespace aict
