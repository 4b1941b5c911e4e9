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

// Content-adaptive resizing around the codec: a resize-parameter network
// (RPN) estimates a global factor m, a Catmull-Rom grid sampler rescales, and
// ConvNeXt pre/post processors soften the resampling loss. Images are
// channels-last (B, H, W, 3).

#include <torch/torch.h>

#include <cstdint>
#include <utility>
#include <vector>

namespace aict {

inline constexpr double kMinResizeFactor = 0.5;
inline constexpr int kResizeFractionBits = 14;
inline constexpr int64_t kMinCodedEdge = 64;

// Isotropic resize factor in [kMinResizeFactor, 1].
struct ResizeFactor {
  double m = 1.0;

  // round(m * 2^14), the form carried in the bitstream header.
  uint16_t to_fixed() const;
  static ResizeFactor from_fixed(uint16_t fixed);
  // Value after a trip through the 14-bit fixed point representation.
  ResizeFactor quantized() const { return from_fixed(to_fixed()); }
};

enum class ResampleDirection { kDown, kUp };

// Source coordinates per output pixel, normalized to [-1, 1] with the
// align-corners-false convention. coords is (H_out, W_out, 2) holding (x, y).
struct SamplingGrid {
  torch::Tensor coords;
  int64_t src_height = 0;
  int64_t src_width = 0;

  int64_t height() const { return coords.size(0); }
  int64_t width() const { return coords.size(1); }
};

// max(min_edge, round(m * edge)), never above edge.
int64_t downscaled_edge(double m, int64_t edge, int64_t min_edge = kMinCodedEdge);

// Affine scaling grid. For kDown the source is H x W and the target is the
// downscaled size; for kUp the source is the downscaled size and the target
// H x W. The per-axis scale is the realized edge ratio so the grid always
// spans the whole source.
SamplingGrid make_grid(ResizeFactor m, int64_t height, int64_t width, ResampleDirection dir,
                       int64_t min_edge = kMinCodedEdge);

// Differentiable variant: `scale_h`/`scale_w` are 0-dim tensors holding the
// target/source (kDown) or source/target (kUp) edge ratio.
SamplingGrid make_grid(const torch::Tensor& scale_h, const torch::Tensor& scale_w,
                       int64_t out_h, int64_t out_w, int64_t src_h, int64_t src_w,
                       ResampleDirection dir);

// Catmull-Rom (a = -0.5) sampling with replicate boundary handling.
// x: (B, H, W, C) with H, W matching the grid source size.
torch::Tensor bicubic_sample(const torch::Tensor& x, const SamplingGrid& grid);

// Cubic convolution kernel weight at offset d (a = -0.5).
double cubic_kernel(double d);

struct ScaleAdaptConfig {
  std::vector<int64_t> rpn_widths = {16, 32, 64};
  int64_t processor_width = 16;
  double min_factor = kMinResizeFactor;
  double skip_epsilon = 0.02;
  int64_t min_edge = kMinCodedEdge;
};

// conv3x3 -> LeakyReLU -> conv3x3, plus identity.
class ResBlockImpl : public torch::nn::Module {
 public:
  explicit ResBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);  // NCHW
  int64_t flops(int64_t h, int64_t w) const;

  torch::nn::Conv2d conv1{nullptr};
  torch::nn::Conv2d conv2{nullptr};

 private:
  int64_t channels_;
};
TORCH_MODULE(ResBlock);

// Three (strided conv -> ResBlock) stages, global average pool and a scalar
// head squashed into [min_factor, 1].
class ResizeParameterNetImpl : public torch::nn::Module {
 public:
  explicit ResizeParameterNetImpl(const ScaleAdaptConfig& cfg);

  // x: (B, H, W, 3) -> (B) factors.
  torch::Tensor forward(const torch::Tensor& x);
  int64_t flops(int64_t h, int64_t w) const;

  torch::nn::Linear head{nullptr};

 private:
  double min_factor_;
  std::vector<int64_t> widths_;
  std::vector<torch::nn::Conv2d> downs_;
  std::vector<ResBlock> blocks_;
};
TORCH_MODULE(ResizeParameterNet);

// Depthwise 7x7 -> LayerNorm -> Linear(4C) -> GELU -> Linear(C), layer scale,
// residual.
class ConvNeXtBlockImpl : public torch::nn::Module {
 public:
  explicit ConvNeXtBlockImpl(int64_t channels, double layer_scale_init = 1e-6);
  torch::Tensor forward(const torch::Tensor& x);  // NCHW
  int64_t flops(int64_t h, int64_t w) const;

  torch::nn::Conv2d dwconv{nullptr};
  torch::nn::LayerNorm norm{nullptr};
  torch::nn::Linear pwconv1{nullptr};
  torch::nn::Linear pwconv2{nullptr};
  torch::Tensor gamma;

 private:
  int64_t channels_;
};
TORCH_MODULE(ConvNeXtBlock);

// Input concatenated with the output of three ConvNeXt blocks, projected back
// to 3 channels by a 1x1 conv. The projection starts as a passthrough of the
// input channels with the ConvNeXt branch zeroed.
class ResamplingProcessorImpl : public torch::nn::Module {
 public:
  explicit ResamplingProcessorImpl(int64_t width);
  torch::Tensor forward(const torch::Tensor& x);  // (B, H, W, 3)
  int64_t flops(int64_t h, int64_t w) const;

  torch::nn::Conv2d stem{nullptr};
  std::vector<ConvNeXtBlock> blocks;
  torch::nn::Conv2d projection{nullptr};

 private:
  int64_t width_;
};
TORCH_MODULE(ResamplingProcessor);

class ScaleAdaptationImpl : public torch::nn::Module {
 public:
  explicit ScaleAdaptationImpl(const ScaleAdaptConfig& cfg = {});

  // Deterministic factor for a single image (1, H, W, 3).
  ResizeFactor estimate_resize_factor(const torch::Tensor& x);

  torch::Tensor preprocess(const torch::Tensor& x) { return pre(x); }
  torch::Tensor postprocess(const torch::Tensor& x) { return post(x); }

  bool should_bypass(ResizeFactor m) const;

  // Bypass when |m - 1| < skip_epsilon, otherwise preprocess then bicubic
  // downscale. Returns the (possibly) rescaled image and whether it was.
  std::pair<torch::Tensor, bool> maybe_rescale(const torch::Tensor& x, ResizeFactor m);

  // Bicubic upscale to (height, width) followed by the post-processor.
  torch::Tensor restore(const torch::Tensor& x_d, ResizeFactor m, int64_t height, int64_t width);

  int64_t flops(int64_t h, int64_t w) const;
  const ScaleAdaptConfig& config() const { return cfg_; }

  ResizeParameterNet rpn{nullptr};
  ResamplingProcessor pre{nullptr};
  ResamplingProcessor post{nullptr};

 private:
  ScaleAdaptConfig cfg_;
};
TORCH_MODULE(ScaleAdaptation);

}  // namespace aict
