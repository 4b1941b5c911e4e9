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

// The complete codec network: Swin transforms, hyperprior, ChARM and the
// scale-adaptation sandwich, plus named configurations and checkpoints.

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aict/entropy.hpp"
#include "aict/scale_adaptation.hpp"
#include "aict/transforms.hpp"

namespace aict {

struct ModelConfig {
  std::string name;
  std::vector<SwinStageConfig> analysis;  // g_a stages; g_s mirrors them
  std::vector<SwinStageConfig> hyper;     // h_a stages; h_s mirrors them
  int64_t hyper_feature_channels = 128;   // C_h
  int64_t num_slices = 4;
  int64_t slice_heads = 3;
  double sigma_min = 0.11;
  ScaleAdaptConfig adapt;

  int64_t latent_channels() const { return analysis.back().embed_dim; }
  int64_t hyper_latent_channels() const { return hyper.back().embed_dim; }
  // Spatial factor between the coded image and z.
  int64_t total_downscale() const {
    return int64_t{1} << (analysis.size() + hyper.size());
  }
  CharmConfig charm() const;
  void validate() const;
};

// dims [32,48,64,96], one block per stage, window 4: tests and desk training.
ModelConfig tiny_config();
// dims [128,192,256,320], depths [2,2,6,2], window 8: a parameter-count
// matched reconstruction of the full-size model.
ModelConfig base_config();
// All widths <= 8; used for finite-difference gradient checks.
ModelConfig micro_config();
// "tiny" | "base" | "micro"; throws ConfigError otherwise.
ModelConfig config_by_name(const std::string& name);

struct LatentForward {
  torch::Tensor x_hat;   // (B, H, W, 3), unclipped
  torch::Tensor y;
  torch::Tensor z;
  torch::Tensor y_hat;
  torch::Tensor z_hat;
  torch::Tensor bits_y;  // per element
  torch::Tensor bits_z;  // per element
};

struct ForwardOptions {
  QuantMode mode = QuantMode::kStraightThrough;
  bool scale_adaptation = true;
};

struct CodecForward {
  torch::Tensor x_hat;   // (B, H, W, 3) at the input resolution, unclipped
  torch::Tensor bits_y;  // (B) total bits per image
  torch::Tensor bits_z;  // (B)
  std::vector<double> resize_factors;  // realized m per image (1 when bypassed)
};

class CodecImpl : public torch::nn::Module {
 public:
  explicit CodecImpl(const ModelConfig& cfg);

  // Codes an already padded batch (edges multiple of 64) without adaptation.
  LatentForward forward_latent(const torch::Tensor& x, QuantMode mode);

  // Full training-time pipeline, including the scale-adaptation sandwich
  // (per image, since every image gets its own factor).
  CodecForward forward(const torch::Tensor& x, const ForwardOptions& opts = {});

  // Differentiable rate estimate (bits_y, bits_z) of pre-quantization latents.
  std::pair<torch::Tensor, torch::Tensor> total_rate(const torch::Tensor& y,
                                                     const torch::Tensor& z, QuantMode mode);

  // 2 * multiply-accumulates of the full codec (encoder and decoder) at H x W.
  int64_t flops(int64_t height, int64_t width, bool with_adaptation = true) const;

  const ModelConfig& config() const { return cfg_; }
  torch::Dtype dtype() const;
  torch::Device device() const;

  DownTransform analysis{nullptr};
  UpTransform synthesis{nullptr};
  DownTransform hyper_analysis{nullptr};
  UpTransform hyper_synthesis{nullptr};
  FactorizedPrior prior{nullptr};
  Charm charm{nullptr};
  ScaleAdaptation adapt{nullptr};

 private:
  ModelConfig cfg_;
};
TORCH_MODULE(Codec);

struct CheckpointMeta {
  std::string config_name = "tiny";
  int64_t quality_id = 0;
  double lambda = 0.0;
  int64_t step = 0;
};

// Single archive: module path -> tensor, plus meta/* entries and an optional
// nested optimizer state.
void save_checkpoint(const std::string& path, Codec& model, const CheckpointMeta& meta,
                     torch::optim::Optimizer* optimizer = nullptr);

struct LoadedCheckpoint {
  Codec model{nullptr};
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);
CheckpointMeta read_checkpoint_meta(const std::string& path);
// Returns false when the checkpoint has no optimizer state.
bool load_optimizer_state(const std::string& path, torch::optim::Optimizer& optimizer);

// Parameter totals (buffers excluded).
int64_t count_parameters(const torch::nn::Module& module);

}  // namespace aict
