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

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "aict/errors.hpp"

namespace aict {

namespace F = torch::nn::functional;
using torch::indexing::Slice;

namespace {

constexpr double kCubicA = -0.5;

torch::Tensor cubic_weight(const torch::Tensor& d) {
  auto ad = torch::abs(d);
  auto ad2 = ad * ad;
  auto ad3 = ad2 * ad;
  auto near = (kCubicA + 2.0) * ad3 - (kCubicA + 3.0) * ad2 + 1.0;
  auto far = kCubicA * ad3 - 5.0 * kCubicA * ad2 + 8.0 * kCubicA * ad - 4.0 * kCubicA;
  return torch::where(ad <= 1.0, near, torch::where(ad < 2.0, far, torch::zeros_like(ad)));
}

// Normalized coordinates of every output sample along one axis.
torch::Tensor axis_coords(const torch::Tensor& scale, int64_t out_len, int64_t src_len,
                          ResampleDirection dir) {
  auto idx = torch::arange(out_len, scale.options()) + 0.5;
  auto pixel = dir == ResampleDirection::kDown ? idx / scale - 0.5 : idx * scale - 0.5;
  return (2.0 * pixel + 1.0) / static_cast<double>(src_len) - 1.0;
}

torch::Tensor to_nchw(const torch::Tensor& x) { return x.permute({0, 3, 1, 2}); }
torch::Tensor to_nhwc(const torch::Tensor& x) { return x.permute({0, 2, 3, 1}); }

}  // namespace

uint16_t ResizeFactor::to_fixed() const {
  const double clamped = std::clamp(m, 0.0, 1.0);
  return static_cast<uint16_t>(std::lround(clamped * (1 << kResizeFractionBits)));
}

ResizeFactor ResizeFactor::from_fixed(uint16_t fixed) {
  return ResizeFactor{static_cast<double>(fixed) / (1 << kResizeFractionBits)};
}

double cubic_kernel(double d) {
  const double ad = std::fabs(d);
  if (ad <= 1.0) return (kCubicA + 2.0) * ad * ad * ad - (kCubicA + 3.0) * ad * ad + 1.0;
  if (ad < 2.0) {
    return kCubicA * ad * ad * ad - 5.0 * kCubicA * ad * ad + 8.0 * kCubicA * ad - 4.0 * kCubicA;
  }
  return 0.0;
}

int64_t downscaled_edge(double m, int64_t edge, int64_t min_edge) {
  const int64_t scaled = std::lround(m * static_cast<double>(edge));
  return std::min(edge, std::max(min_edge, scaled));
}

SamplingGrid make_grid(const torch::Tensor& scale_h, const torch::Tensor& scale_w,
                       int64_t out_h, int64_t out_w, int64_t src_h, int64_t src_w,
                       ResampleDirection dir) {
  auto gy = axis_coords(scale_h, out_h, src_h, dir);
  auto gx = axis_coords(scale_w, out_w, src_w, dir);
  auto coords = torch::stack({gx.unsqueeze(0).expand({out_h, out_w}),
                              gy.unsqueeze(1).expand({out_h, out_w})},
                             -1);
  return SamplingGrid{coords, src_h, src_w};
}

SamplingGrid make_grid(ResizeFactor m, int64_t height, int64_t width, ResampleDirection dir,
                       int64_t min_edge) {
  const int64_t h_small = downscaled_edge(m.m, height, min_edge);
  const int64_t w_small = downscaled_edge(m.m, width, min_edge);
  auto opts = torch::TensorOptions().dtype(torch::kDouble);
  auto sh = torch::tensor(static_cast<double>(h_small) / static_cast<double>(height), opts);
  auto sw = torch::tensor(static_cast<double>(w_small) / static_cast<double>(width), opts);
  if (dir == ResampleDirection::kDown) {
    return make_grid(sh, sw, h_small, w_small, height, width, dir);
  }
  return make_grid(sh, sw, height, width, h_small, w_small, dir);
}

torch::Tensor bicubic_sample(const torch::Tensor& x, const SamplingGrid& grid) {
  if (x.dim() != 4 || x.size(1) != grid.src_height || x.size(2) != grid.src_width) {
    throw ConfigError("bicubic_sample: input does not match the grid source size");
  }
  const int64_t b = x.size(0), h = x.size(1), w = x.size(2), c = x.size(3);
  const int64_t ho = grid.height(), wo = grid.width();

  // Pixel-space source positions; integer parts are computed in double so
  // exact-grid samples land on their pixel.
  auto coords = grid.coords;
  auto px = ((coords.index({"...", 0}) + 1.0) * static_cast<double>(w) - 1.0) * 0.5;
  auto py = ((coords.index({"...", 1}) + 1.0) * static_cast<double>(h) - 1.0) * 0.5;
  auto x0 = torch::floor(px.detach().to(torch::kDouble) + 1e-9).to(torch::kLong);
  auto y0 = torch::floor(py.detach().to(torch::kDouble) + 1e-9).to(torch::kLong);
  auto tx = (px - x0.to(px.scalar_type())).to(x.scalar_type());
  auto ty = (py - y0.to(py.scalar_type())).to(x.scalar_type());

  std::array<torch::Tensor, 4> wx, wy, ix, iy;
  for (int k = 0; k < 4; ++k) {
    const double offset = static_cast<double>(k - 1);
    wx[k] = cubic_weight(tx - offset);
    wy[k] = cubic_weight(ty - offset);
    ix[k] = (x0 + (k - 1)).clamp(0, w - 1);
    iy[k] = (y0 + (k - 1)).clamp(0, h - 1);
  }

  // Taps are accumulated as differences from the (y0, x0) tap. The weights sum
  // to one, so this is the same interpolant, but constants come out exact.
  auto flat = x.reshape({b, h * w, c});
  auto base = flat.index_select(1, (iy[1] * w + ix[1]).reshape({-1}));
  auto out = base;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      auto index = (iy[i] * w + ix[j]).reshape({-1});
      auto weight = (wy[i] * wx[j]).reshape({1, -1, 1});
      out = out + (flat.index_select(1, index) - base) * weight;
    }
  }
  return out.view({b, ho, wo, c});
}

ResBlockImpl::ResBlockImpl(int64_t channels) : channels_(channels) {
  conv1 = register_module(
      "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
  conv2 = register_module(
      "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
  return x + conv2(F::leaky_relu(conv1(x), F::LeakyReLUFuncOptions().negative_slope(0.2)));
}

int64_t ResBlockImpl::flops(int64_t h, int64_t w) const {
  return 2 * 2 * h * w * 9 * channels_ * channels_;
}

ResizeParameterNetImpl::ResizeParameterNetImpl(const ScaleAdaptConfig& cfg)
    : min_factor_(cfg.min_factor), widths_(cfg.rpn_widths) {
  int64_t prev = 3;
  for (size_t i = 0; i < widths_.size(); ++i) {
    downs_.push_back(register_module(
        "down" + std::to_string(i),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(prev, widths_[i], 3).stride(2).padding(1))));
    blocks_.push_back(register_module("res" + std::to_string(i), ResBlock(widths_[i])));
    prev = widths_[i];
  }
  head = register_module("head", torch::nn::Linear(prev, 1));
  torch::NoGradGuard guard;
  head->weight.mul_(0.1);
  head->bias.zero_();
}

torch::Tensor ResizeParameterNetImpl::forward(const torch::Tensor& x) {
  auto t = to_nchw(x);
  for (size_t i = 0; i < downs_.size(); ++i) {
    t = F::leaky_relu(downs_[i](t), F::LeakyReLUFuncOptions().negative_slope(0.2));
    t = blocks_[i](t);
  }
  auto pooled = t.mean({2, 3});
  auto logit = head(pooled).squeeze(-1);
  return min_factor_ + (1.0 - min_factor_) * torch::sigmoid(logit);
}

int64_t ResizeParameterNetImpl::flops(int64_t h, int64_t w) const {
  int64_t total = 0;
  int64_t prev = 3;
  for (size_t i = 0; i < widths_.size(); ++i) {
    h = (h + 1) / 2;
    w = (w + 1) / 2;
    total += 2 * h * w * 9 * prev * widths_[i];
    total += blocks_[i]->flops(h, w);
    prev = widths_[i];
  }
  return total + 2 * prev;
}

ConvNeXtBlockImpl::ConvNeXtBlockImpl(int64_t channels, double layer_scale_init)
    : channels_(channels) {
  dwconv = register_module(
      "dwconv",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 7).padding(3).groups(channels)));
  norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({channels})));
  pwconv1 = register_module("pwconv1", torch::nn::Linear(channels, 4 * channels));
  pwconv2 = register_module("pwconv2", torch::nn::Linear(4 * channels, channels));
  gamma = register_parameter("gamma", torch::full({channels}, layer_scale_init));
}

torch::Tensor ConvNeXtBlockImpl::forward(const torch::Tensor& x) {
  auto t = to_nhwc(dwconv(x));
  t = pwconv2(F::gelu(pwconv1(norm(t)))) * gamma;
  return x + to_nchw(t);
}

int64_t ConvNeXtBlockImpl::flops(int64_t h, int64_t w) const {
  return 2 * h * w * (49 * channels_ + 8 * channels_ * channels_);
}

ResamplingProcessorImpl::ResamplingProcessorImpl(int64_t width) : width_(width) {
  stem = register_module("stem",
                         torch::nn::Conv2d(torch::nn::Conv2dOptions(3, width, 3).padding(1)));
  for (int i = 0; i < 3; ++i) {
    blocks.push_back(register_module("block" + std::to_string(i), ConvNeXtBlock(width)));
  }
  projection = register_module("projection",
                               torch::nn::Conv2d(torch::nn::Conv2dOptions(3 + width, 3, 1)));
  torch::NoGradGuard guard;
  projection->weight.zero_();
  projection->bias.zero_();
  for (int64_t ch = 0; ch < 3; ++ch) projection->weight.index_put_({ch, ch, 0, 0}, 1.0);
}

torch::Tensor ResamplingProcessorImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(3) != 3) {
    throw ConfigError("resampling processor expects a (B,H,W,3) image");
  }
  auto in = to_nchw(x);
  auto t = stem(in);
  for (auto& block : blocks) t = block(t);
  return to_nhwc(projection(torch::cat({in, t}, 1)));
}

int64_t ResamplingProcessorImpl::flops(int64_t h, int64_t w) const {
  int64_t total = 2 * h * w * 9 * 3 * width_;
  for (const auto& block : blocks) total += block->flops(h, w);
  return total + 2 * h * w * (3 + width_) * 3;
}

ScaleAdaptationImpl::ScaleAdaptationImpl(const ScaleAdaptConfig& cfg) : cfg_(cfg) {
  rpn = register_module("rpn", ResizeParameterNet(cfg));
  pre = register_module("pre", ResamplingProcessor(cfg.processor_width));
  post = register_module("post", ResamplingProcessor(cfg.processor_width));
}

ResizeFactor ScaleAdaptationImpl::estimate_resize_factor(const torch::Tensor& x) {
  torch::NoGradGuard guard;
  auto m = rpn(x.dim() == 3 ? x.unsqueeze(0) : x);
  return ResizeFactor{m[0].item<double>()};
}

bool ScaleAdaptationImpl::should_bypass(ResizeFactor m) const {
  return std::fabs(m.m - 1.0) < cfg_.skip_epsilon;
}

std::pair<torch::Tensor, bool> ScaleAdaptationImpl::maybe_rescale(const torch::Tensor& x,
                                                                  ResizeFactor m) {
  if (should_bypass(m)) return {x, false};
  const auto grid =
      make_grid(m, x.size(1), x.size(2), ResampleDirection::kDown, cfg_.min_edge);
  return {bicubic_sample(pre(x), grid), true};
}

torch::Tensor ScaleAdaptationImpl::restore(const torch::Tensor& x_d, ResizeFactor m,
                                           int64_t height, int64_t width) {
  const auto grid = make_grid(m, height, width, ResampleDirection::kUp, cfg_.min_edge);
  return post(bicubic_sample(x_d, grid));
}

int64_t ScaleAdaptationImpl::flops(int64_t h, int64_t w) const {
  return rpn->flops(h, w) + pre->flops(h, w) + post->flops(h, w);
}

}  // namespace aict
