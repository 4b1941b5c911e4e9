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

// Quantization, the factorized prior over z-hat, and the channel-wise
// autoregressive model (ChARM) whose Swin slice transforms predict the
// conditional Gaussian of each y-hat slice.

#include <torch/torch.h>

#include <cstdint>
#include <span>
#include <vector>

#include "aict/transforms.hpp"

namespace aict {

// How rounding behaves in the forward pass during training.
enum class QuantMode {
  kStraightThrough,  // round(v - mu) + mu forward, identity gradient
  kUniformNoise,     // v + U(-0.5, 0.5)
  kIdentity,         // smooth stub used by gradient checks
};

// Round half away from zero.
torch::Tensor round_half_away(const torch::Tensor& v);
double round_half_away(double v);

// round(v - mu) + mu with the selected gradient rule. `mu` may be undefined
// (treated as zero). Throws NumericError on non-finite input.
torch::Tensor quantize(const torch::Tensor& v, const torch::Tensor& mu,
                       QuantMode mode = QuantMode::kStraightThrough);

// Channel-contiguous even split of a (B, H, W, C) tensor.
std::vector<torch::Tensor> split_slices(const torch::Tensor& y, int64_t num_slices);
torch::Tensor concat_slices(std::span<const torch::Tensor> slices);

// Standard normal CDF, elementwise.
torch::Tensor standard_normal_cdf(const torch::Tensor& t);

// -log2 P(y_hat) under N(mu, sigma^2) integrated over [y_hat - 0.5, y_hat + 0.5].
torch::Tensor gaussian_bits(const torch::Tensor& y_hat, const torch::Tensor& mu,
                            const torch::Tensor& sigma);

// Deep factorized density (monotone per-channel network) over z-hat.
class FactorizedPriorImpl : public torch::nn::Module {
 public:
  explicit FactorizedPriorImpl(int64_t channels, std::vector<int64_t> filters = {3, 3, 3},
                               double init_scale = 10.0);

  // Logits of the cumulative at each value; x is (C, N) and the result (C, N).
  torch::Tensor logits_cdf(const torch::Tensor& x) const;

  // Probability mass of [v - 0.5, v + 0.5] for channels-last v (..., C).
  torch::Tensor likelihood(const torch::Tensor& v) const;

  // -log2 likelihood, channels-last.
  torch::Tensor bits(const torch::Tensor& v) const;

  int64_t channels() const { return channels_; }

  std::vector<torch::Tensor> matrices;
  std::vector<torch::Tensor> biases;
  std::vector<torch::Tensor> factors;

 private:
  int64_t channels_;
  std::vector<int64_t> filters_;
};
TORCH_MODULE(FactorizedPrior);

torch::Tensor factorized_bits(const torch::Tensor& z_hat, const FactorizedPrior& prior);

struct SliceParams {
  torch::Tensor mu;     // (B, h, w, c_s)
  torch::Tensor sigma;  // (B, h, w, c_s), >= sigma_min
  int64_t slice_index = 0;
};

struct CharmConfig {
  int64_t hyper_channels = 128;  // C_h
  int64_t latent_channels = 96;  // C_y
  int64_t num_slices = 4;        // S
  int64_t window_size = 4;
  int64_t num_heads = 3;         // heads of the 2*c_s-wide slice transform
  double sigma_min = 0.11;

  int64_t slice_channels() const { return latent_channels / num_slices; }
  void validate() const;
};

// Projection of [hyper, y_hat_0..y_hat_{i-1}] to 2*c_s channels followed by a
// regular and a shifted Swin block; the result splits into (mu, raw sigma).
class SliceTransformImpl : public torch::nn::Module {
 public:
  SliceTransformImpl(const CharmConfig& cfg, int64_t slice_index);
  torch::Tensor forward(const torch::Tensor& context);
  int64_t flops(int64_t h, int64_t w) const;

  torch::nn::Linear projection{nullptr};
  SwinBlock block0{nullptr};
  SwinBlock block1{nullptr};

 private:
  int64_t in_dim_;
  int64_t out_dim_;
};
TORCH_MODULE(SliceTransform);

struct CharmOutput {
  torch::Tensor y_hat;  // quantized latent, (B, h, w, C_y)
  torch::Tensor bits;   // per-element bits, (B, h, w, C_y)
  std::vector<SliceParams> params;
};

class CharmImpl : public torch::nn::Module {
 public:
  explicit CharmImpl(const CharmConfig& cfg);

  // Distribution parameters for slice i given hyper features and exactly i
  // previously quantized slices. Throws ProtocolError otherwise.
  SliceParams params(const torch::Tensor& hyper, std::span<const torch::Tensor> decoded,
                     int64_t i);

  // Runs the full autoregressive chain on a pre-quantization latent.
  CharmOutput forward(const torch::Tensor& hyper, const torch::Tensor& y, QuantMode mode);

  int64_t flops(int64_t h, int64_t w) const;
  const CharmConfig& config() const { return cfg_; }

 private:
  CharmConfig cfg_;
  std::vector<SliceTransform> slices_;
};
TORCH_MODULE(Charm);

}  // namespace aict
