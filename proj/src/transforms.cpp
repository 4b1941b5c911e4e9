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

#include "aict/transforms.hpp"

#include <cmath>
#include <string>

#include "aict/errors.hpp"

namespace aict {

namespace F = torch::nn::functional;
using torch::indexing::Slice;

void SwinStageConfig::validate() const {
  if (depth < 1 || embed_dim < 1 || num_heads < 1) {
    throw ConfigError("swin stage: depth, embed_dim and num_heads must be positive");
  }
  if (embed_dim % num_heads != 0) {
    throw ConfigError("swin stage: embed_dim " + std::to_string(embed_dim) +
                      " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (window_size < 2) {
    throw ConfigError("swin stage: window_size must be >= 2");
  }
}

torch::Tensor replicate_pad_hw(const torch::Tensor& x, int64_t multiple) {
  const int64_t h = x.size(1);
  const int64_t w = x.size(2);
  const int64_t hp = (h + multiple - 1) / multiple * multiple;
  const int64_t wp = (w + multiple - 1) / multiple * multiple;
  if (hp == h && wp == w) return x;
  auto opts = torch::TensorOptions().dtype(torch::kLong).device(x.device());
  auto rows = torch::arange(hp, opts).clamp_max(h - 1);
  auto cols = torch::arange(wp, opts).clamp_max(w - 1);
  return x.index_select(1, rows).index_select(2, cols);
}

namespace {

void trunc_normal_(torch::Tensor& t, double std) {
  torch::NoGradGuard guard;
  t.normal_(0.0, std);
  // Redraw anything beyond two standard deviations.
  for (int iter = 0; iter < 16; ++iter) {
    auto outside = t.abs() > 2.0 * std;
    if (!outside.any().item<bool>()) break;
    auto redraw = torch::empty_like(t).normal_(0.0, std);
    t.copy_(torch::where(outside, redraw, t));
  }
  t.clamp_(-2.0 * std, 2.0 * std);
}

torch::Tensor window_partition(const torch::Tensor& x, int64_t w) {
  const int64_t b = x.size(0), h = x.size(1), wd = x.size(2), c = x.size(3);
  return x.view({b, h / w, w, wd / w, w, c})
      .permute({0, 1, 3, 2, 4, 5})
      .reshape({-1, w * w, c});
}

torch::Tensor window_reverse(const torch::Tensor& windows, int64_t w, int64_t b,
                             int64_t h, int64_t wd) {
  const int64_t c = windows.size(-1);
  return windows.view({b, h / w, wd / w, w, w, c})
      .permute({0, 1, 3, 2, 4, 5})
      .reshape({b, h, wd, c});
}

// Additive mask keeping attention inside the regions that were contiguous
// before the cyclic shift.
torch::Tensor shifted_window_mask(int64_t hp, int64_t wp, int64_t w, int64_t s,
                                  const torch::TensorOptions& opts) {
  auto img = torch::zeros({1, hp, wp, 1}, opts);
  const int64_t hb[4] = {0, hp - w, hp - s, hp};
  const int64_t wb[4] = {0, wp - w, wp - s, wp};
  double id = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      img.index_put_({Slice(), Slice(hb[i], hb[i + 1]), Slice(wb[j], wb[j + 1]), Slice()},
                     id);
      id += 1.0;
    }
  }
  auto mw = window_partition(img, w).squeeze(-1);  // (nW, w*w)
  auto diff = mw.unsqueeze(1) - mw.unsqueeze(2);
  return torch::where(diff != 0, torch::full_like(diff, -100.0), torch::zeros_like(diff));
}

}  // namespace

WindowAttentionImpl::WindowAttentionImpl(int64_t dim, int64_t window_size, int64_t num_heads)
    : dim_(dim), window_(window_size), heads_(num_heads) {
  qkv = register_module("qkv", torch::nn::Linear(dim, 3 * dim));
  proj = register_module("proj", torch::nn::Linear(dim, dim));
  const int64_t span = 2 * window_size - 1;
  relative_position_bias_table =
      register_parameter("relative_position_bias_table", torch::zeros({span * span, num_heads}));
  trunc_normal_(relative_position_bias_table, 0.02);

  auto coords = torch::arange(window_size, torch::kLong);
  auto grid = torch::meshgrid({coords, coords}, "ij");
  auto flat = torch::stack({grid[0].flatten(), grid[1].flatten()});  // (2, N)
  auto rel = flat.unsqueeze(2) - flat.unsqueeze(1);                   // (2, N, N)
  auto index = (rel[0] + window_size - 1) * span + (rel[1] + window_size - 1);
  // Kept out of the buffer list so dtype casts of the module leave it integral.
  relative_position_index_ = index.flatten();
}

torch::Tensor WindowAttentionImpl::forward(const torch::Tensor& windows,
                                           const torch::Tensor& mask) {
  const int64_t n = windows.size(0);
  const int64_t len = windows.size(1);
  const int64_t head_dim = dim_ / heads_;
  auto qkv_out = qkv(windows).view({n, len, 3, heads_, head_dim}).permute({2, 0, 3, 1, 4});
  auto q = qkv_out[0] * (1.0 / std::sqrt(static_cast<double>(head_dim)));
  auto k = qkv_out[1];
  auto v = qkv_out[2];
  auto attn = torch::matmul(q, k.transpose(-2, -1));  // (n, heads, len, len)

  auto bias = relative_position_bias_table
                  .index_select(0, relative_position_index_.to(relative_position_bias_table.device()))
                  .view({len, len, heads_})
                  .permute({2, 0, 1});
  attn = attn + bias.unsqueeze(0);
  if (mask.defined()) {
    const int64_t nw = mask.size(0);
    attn = attn.view({n / nw, nw, heads_, len, len}) + mask.unsqueeze(1).unsqueeze(0);
    attn = attn.view({n, heads_, len, len});
  }
  attn = torch::softmax(attn, -1);
  auto out = torch::matmul(attn, v).transpose(1, 2).reshape({n, len, dim_});
  return proj(out);
}

SwinBlockImpl::SwinBlockImpl(const SwinStageConfig& cfg, bool shift) : cfg_(cfg), shift_(shift) {
  cfg_.validate();
  const int64_t c = cfg.embed_dim;
  norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({c})));
  attn = register_module("attn", WindowAttention(c, cfg.window_size, cfg.num_heads));
  norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({c})));
  fc1 = register_module("fc1", torch::nn::Linear(c, 4 * c));
  fc2 = register_module("fc2", torch::nn::Linear(4 * c, c));
}

torch::Tensor SwinBlockImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(3) != cfg_.embed_dim) {
    throw ConfigError("swin block: expected (B,H,W," + std::to_string(cfg_.embed_dim) +
                      ") input, got " + std::to_string(x.size(-1)) + " channels");
  }
  const int64_t b = x.size(0), h = x.size(1), w = x.size(2);
  const int64_t win = cfg_.window_size;

  auto t = replicate_pad_hw(norm1(x), win);
  const int64_t hp = t.size(1), wp = t.size(2);
  const bool do_shift = shift_ && (hp > win || wp > win);
  const int64_t s = win / 2;

  torch::Tensor mask;
  if (do_shift) {
    t = torch::roll(t, {-s, -s}, {1, 2});
    mask = shifted_window_mask(hp, wp, win, s, t.options());
  }
  auto windows = attn(window_partition(t, win), mask);
  t = window_reverse(windows, win, b, hp, wp);
  if (do_shift) t = torch::roll(t, {s, s}, {1, 2});
  if (hp != h || wp != w) t = t.index({Slice(), Slice(0, h), Slice(0, w), Slice()});

  auto out = x + t;
  return out + fc2(F::gelu(fc1(norm2(out))));
}

int64_t SwinBlockImpl::flops(int64_t h, int64_t w) const {
  const int64_t win = cfg_.window_size;
  const int64_t hp = (h + win - 1) / win * win;
  const int64_t wp = (w + win - 1) / win * win;
  const int64_t tokens = hp * wp;
  const int64_t c = cfg_.embed_dim;
  const int64_t n = win * win;
  int64_t macs = tokens * c * 3 * c;  // qkv
  macs += 2 * tokens * n * c;          // q k^T and attn v
  macs += tokens * c * c;              // output projection
  macs += 2 * tokens * c * 4 * c;      // MLP
  return 2 * macs;
}

PatchMergeImpl::PatchMergeImpl(int64_t in_dim, int64_t out_dim)
    : in_dim_(in_dim), out_dim_(out_dim) {
  reduction = register_module("reduction", torch::nn::Linear(4 * in_dim, out_dim));
}

torch::Tensor PatchMergeImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(3) != in_dim_) {
    throw ConfigError("patch merge: expected " + std::to_string(in_dim_) + " input channels");
  }
  auto t = replicate_pad_hw(x, 2);
  const int64_t b = t.size(0), h = t.size(1), w = t.size(2);
  t = t.reshape({b, h / 2, 2, w / 2, 2, in_dim_})
          .permute({0, 1, 3, 2, 4, 5})
          .reshape({b, h / 2, w / 2, 4 * in_dim_});
  return reduction(t);
}

int64_t PatchMergeImpl::flops(int64_t h, int64_t w) const {
  return 2 * ((h + 1) / 2) * ((w + 1) / 2) * 4 * in_dim_ * out_dim_;
}

PatchExpandImpl::PatchExpandImpl(int64_t in_dim, int64_t out_dim)
    : in_dim_(in_dim), out_dim_(out_dim) {
  expansion = register_module("expansion", torch::nn::Linear(in_dim, 4 * out_dim));
}

torch::Tensor PatchExpandImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(3) != in_dim_) {
    throw ConfigError("patch expand: expected " + std::to_string(in_dim_) + " input channels");
  }
  const int64_t b = x.size(0), h = x.size(1), w = x.size(2);
  return expansion(x)
      .view({b, h, w, 2, 2, out_dim_})
      .permute({0, 1, 3, 2, 4, 5})
      .reshape({b, 2 * h, 2 * w, out_dim_});
}

int64_t PatchExpandImpl::flops(int64_t h, int64_t w) const {
  return 2 * h * w * in_dim_ * 4 * out_dim_;
}

SwinStageImpl::SwinStageImpl(const SwinStageConfig& cfg) {
  cfg.validate();
  for (int64_t i = 0; i < cfg.depth; ++i) {
    blocks_.push_back(register_module("block" + std::to_string(i), SwinBlock(cfg, i % 2 == 1)));
  }
}

torch::Tensor SwinStageImpl::forward(torch::Tensor x) {
  for (auto& block : blocks_) x = block(x);
  return x;
}

int64_t SwinStageImpl::flops(int64_t h, int64_t w) const {
  int64_t total = 0;
  for (const auto& block : blocks_) total += block->flops(h, w);
  return total;
}

DownTransformImpl::DownTransformImpl(int64_t in_dim, std::vector<SwinStageConfig> stages,
                                     int64_t required_multiple)
    : stages_(std::move(stages)), required_multiple_(required_multiple) {
  if (stages_.empty()) throw ConfigError("down transform needs at least one stage");
  int64_t prev = in_dim;
  for (size_t i = 0; i < stages_.size(); ++i) {
    const auto& cfg = stages_[i];
    merges_.push_back(
        register_module("merge" + std::to_string(i), PatchMerge(prev, cfg.embed_dim)));
    blocks_.push_back(register_module("stage" + std::to_string(i), SwinStage(cfg)));
    prev = cfg.embed_dim;
  }
}

torch::Tensor DownTransformImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4) throw ConfigError("down transform expects a (B,H,W,C) tensor");
  if (x.size(1) % required_multiple_ != 0 || x.size(2) % required_multiple_ != 0) {
    throw InputError("input edges " + std::to_string(x.size(1)) + "x" + std::to_string(x.size(2)) +
                     " are not multiples of " + std::to_string(required_multiple_) +
                     "; pad the input first");
  }
  auto t = x;
  for (size_t i = 0; i < merges_.size(); ++i) {
    t = merges_[i](t);
    t = blocks_[i](t);
  }
  return t;
}

int64_t DownTransformImpl::flops(int64_t h, int64_t w) const {
  int64_t total = 0;
  for (size_t i = 0; i < merges_.size(); ++i) {
    total += merges_[i]->flops(h, w);
    h = (h + 1) / 2;
    w = (w + 1) / 2;
    total += blocks_[i]->flops(h, w);
  }
  return total;
}

UpTransformImpl::UpTransformImpl(std::vector<SwinStageConfig> stages, int64_t out_dim)
    : stages_(std::move(stages)), out_dim_(out_dim) {
  if (stages_.empty()) throw ConfigError("up transform needs at least one stage");
  const auto n = static_cast<int64_t>(stages_.size());
  for (int64_t k = n - 1; k >= 0; --k) {
    const auto& cfg = stages_[static_cast<size_t>(k)];
    const int64_t next = k > 0 ? stages_[static_cast<size_t>(k - 1)].embed_dim : out_dim_;
    const auto idx = std::to_string(n - 1 - k);
    blocks_.push_back(register_module("stage" + idx, SwinStage(cfg)));
    expands_.push_back(register_module("expand" + idx, PatchExpand(cfg.embed_dim, next)));
  }
}

torch::Tensor UpTransformImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(3) != in_dim()) {
    throw ConfigError("up transform: expected " + std::to_string(in_dim()) + " input channels");
  }
  auto t = x;
  for (size_t i = 0; i < blocks_.size(); ++i) {
    t = blocks_[i](t);
    t = expands_[i](t);
  }
  return t;
}

int64_t UpTransformImpl::flops(int64_t h, int64_t w) const {
  int64_t total = 0;
  for (size_t i = 0; i < blocks_.size(); ++i) {
    total += blocks_[i]->flops(h, w);
    total += expands_[i]->flops(h, w);
    h *= 2;
    w *= 2;
  }
  return total;
}

void init_transformer_weights(torch::nn::Module& module) {
  torch::NoGradGuard guard;
  for (auto& child : module.modules(/*include_self=*/true)) {
    if (auto* linear = child->as<torch::nn::Linear>()) {
      trunc_normal_(linear->weight, 0.02);
      if (linear->bias.defined()) linear->bias.zero_();
    } else if (auto* norm = child->as<torch::nn::LayerNorm>()) {
      norm->weight.fill_(1.0);
      norm->bias.zero_();
    }
  }
  // Resolution changes carry the signal between stages; fan-in scaling keeps
  // its magnitude so untrained latents are not all rounded to zero.
  for (auto& child : module.modules(/*include_self=*/true)) {
    torch::nn::Linear* proj = nullptr;
    if (auto* merge = child->as<PatchMergeImpl>()) proj = &merge->reduction;
    if (auto* expand = child->as<PatchExpandImpl>()) proj = &expand->expansion;
    if (proj == nullptr) continue;
    const auto fan_in = static_cast<double>((*proj)->weight.size(1));
    trunc_normal_((*proj)->weight, 1.0 / std::sqrt(fan_in));
  }
}

}  // namespace aict
