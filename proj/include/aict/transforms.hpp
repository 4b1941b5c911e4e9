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

// Swin-Transformer analysis/synthesis transforms.
//
// Feature maps are channels-last tensors of shape (B, H, W, C). Images enter
// the analysis transform as (B, H, W, 3) with values in [0, 1].

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace aict {

struct SwinStageConfig {
  int64_t depth = 1;
  int64_t embed_dim = 32;
  int64_t window_size = 4;
  int64_t num_heads = 2;

  // Throws ConfigError when the invariants do not hold.
  void validate() const;
};

// Replicate-pads the bottom/right edges of a (B, H, W, C) map to multiples of
// `multiple`. Returns the input unchanged when already aligned.
torch::Tensor replicate_pad_hw(const torch::Tensor& x, int64_t multiple);

// Windowed multi-head self-attention with a learned relative position bias.
class WindowAttentionImpl : public torch::nn::Module {
 public:
  WindowAttentionImpl(int64_t dim, int64_t window_size, int64_t num_heads);

  // windows: (N, w*w, C). mask: (nW, w*w, w*w) additive mask or undefined.
  torch::Tensor forward(const torch::Tensor& windows, const torch::Tensor& mask);

  int64_t dim() const { return dim_; }
  int64_t window_size() const { return window_; }
  int64_t num_heads() const { return heads_; }

  torch::nn::Linear qkv{nullptr};
  torch::nn::Linear proj{nullptr};
  torch::Tensor relative_position_bias_table;

 private:
  int64_t dim_;
  int64_t window_;
  int64_t heads_;
  torch::Tensor relative_position_index_;
};
TORCH_MODULE(WindowAttention);

// Pre-norm Swin block: (S)W-MSA + residual, then a GELU MLP (ratio 4) +
// residual. Edges are replicate-padded to window multiples before attention
// and cropped afterwards.
class SwinBlockImpl : public torch::nn::Module {
 public:
  SwinBlockImpl(const SwinStageConfig& cfg, bool shift);

  torch::Tensor forward(const torch::Tensor& x);

  // 2 * multiply-accumulates for an h x w input.
  int64_t flops(int64_t h, int64_t w) const;

  bool shifted() const { return shift_; }

  torch::nn::LayerNorm norm1{nullptr};
  WindowAttention attn{nullptr};
  torch::nn::LayerNorm norm2{nullptr};
  torch::nn::Linear fc1{nullptr};
  torch::nn::Linear fc2{nullptr};

 private:
  SwinStageConfig cfg_;
  bool shift_;
};
TORCH_MODULE(SwinBlock);

// 2x2 space-to-depth (channel order dy, dx, c) then a linear projection.
// Odd edges are replicate-padded first.
class PatchMergeImpl : public torch::nn::Module {
 public:
  PatchMergeImpl(int64_t in_dim, int64_t out_dim);
  torch::Tensor forward(const torch::Tensor& x);
  int64_t flops(int64_t h, int64_t w) const;

  torch::nn::Linear reduction{nullptr};

 private:
  int64_t in_dim_;
  int64_t out_dim_;
};
TORCH_MODULE(PatchMerge);

// Linear projection to 4*out_dim then 2x2 depth-to-space; the shape inverse
// of PatchMerge.
class PatchExpandImpl : public torch::nn::Module {
 public:
  PatchExpandImpl(int64_t in_dim, int64_t out_dim);
  torch::Tensor forward(const torch::Tensor& x);
  int64_t flops(int64_t h, int64_t w) const;

  torch::nn::Linear expansion{nullptr};

 private:
  int64_t in_dim_;
  int64_t out_dim_;
};
TORCH_MODULE(PatchExpand);

// `depth` Swin blocks, odd-indexed blocks shifted.
class SwinStageImpl : public torch::nn::Module {
 public:
  explicit SwinStageImpl(const SwinStageConfig& cfg);
  torch::Tensor forward(torch::Tensor x);
  int64_t flops(int64_t h, int64_t w) const;

 private:
  std::vector<SwinBlock> blocks_;
};
TORCH_MODULE(SwinStage);

// Stack of (patch merge -> Swin stage) pairs. Used for g_a and h_a.
class DownTransformImpl : public torch::nn::Module {
 public:
  DownTransformImpl(int64_t in_dim, std::vector<SwinStageConfig> stages,
                    int64_t required_multiple);

  torch::Tensor forward(const torch::Tensor& x);
  int64_t flops(int64_t h, int64_t w) const;
  int64_t out_dim() const { return stages_.back().embed_dim; }
  int64_t downscale() const { return int64_t{1} << stages_.size(); }

 private:
  std::vector<SwinStageConfig> stages_;
  int64_t required_multiple_;
  std::vector<PatchMerge> merges_;
  std::vector<SwinStage> blocks_;
};
TORCH_MODULE(DownTransform);

// Mirror of DownTransform: (Swin stage -> patch expand) pairs walking the
// stage list backwards. Used for g_s and h_s.
class UpTransformImpl : public torch::nn::Module {
 public:
  UpTransformImpl(std::vector<SwinStageConfig> stages, int64_t out_dim);

  torch::Tensor forward(const torch::Tensor& x);
  int64_t flops(int64_t h, int64_t w) const;
  int64_t in_dim() const { return stages_.back().embed_dim; }

 private:
  std::vector<SwinStageConfig> stages_;
  int64_t out_dim_;
  std::vector<SwinStage> blocks_;
  std::vector<PatchExpand> expands_;
};
TORCH_MODULE(UpTransform);

// Truncated-normal(0.02) init for linear weights and relative bias tables,
// zero biases, unit LayerNorm. Patch merge/expand projections instead get
// truncated-normal(1/sqrt(fan_in)). Applied recursively.
void init_transformer_weights(torch::nn::Module& module);

}  // namespace aict
