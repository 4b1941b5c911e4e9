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

#include "aict/entropy.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "aict/errors.hpp"

namespace aict {

namespace F = torch::nn::functional;
using torch::indexing::Slice;

torch::Tensor round_half_away(const torch::Tensor& v) {
  return torch::sign(v) * torch::floor(torch::abs(v) + 0.5);
}

double round_half_away(double v) { return std::copysign(std::floor(std::fabs(v) + 0.5), v); }

torch::Tensor quantize(const torch::Tensor& v, const torch::Tensor& mu, QuantMode mode) {
  if (!torch::isfinite(v).all().item<bool>()) {
    throw NumericError("quantize: non-finite latent values");
  }
  switch (mode) {
    case QuantMode::kIdentity:
      return v;
    case QuantMode::kUniformNoise:
      return v + torch::rand_like(v) - 0.5;
    case QuantMode::kStraightThrough:
      break;
  }
  auto rounded = mu.defined() ? round_half_away(v - mu) + mu : round_half_away(v);
  // Forward value is exactly `rounded`; the gradient passes straight through.
  return rounded.detach() + (v - v.detach());
}

std::vector<torch::Tensor> split_slices(const torch::Tensor& y, int64_t num_slices) {
  const int64_t c = y.size(-1);
  if (num_slices < 1 || c % num_slices != 0) {
    throw ConfigError("cannot split " + std::to_string(c) + " channels into " +
                      std::to_string(num_slices) + " equal slices");
  }
  auto parts = y.split(c / num_slices, -1);
  return {parts.begin(), parts.end()};
}

torch::Tensor concat_slices(std::span<const torch::Tensor> slices) {
  return torch::cat(std::vector<torch::Tensor>(slices.begin(), slices.end()), -1);
}

torch::Tensor standard_normal_cdf(const torch::Tensor& t) {
  return 0.5 * torch::erfc(t * (-1.0 / std::numbers::sqrt2));
}

torch::Tensor gaussian_bits(const torch::Tensor& y_hat, const torch::Tensor& mu,
                            const torch::Tensor& sigma) {
  // The bin mass is even in (y_hat - mu); evaluating on the lower tail keeps
  // precision for far-out values.
  auto values = torch::abs(y_hat - mu);
  auto upper = standard_normal_cdf((0.5 - values) / sigma);
  auto lower = standard_normal_cdf((-0.5 - values) / sigma);
  auto likelihood = (upper - lower).clamp_min(1e-9);
  return -torch::log2(likelihood);
}

FactorizedPriorImpl::FactorizedPriorImpl(int64_t channels, std::vector<int64_t> filters,
                                         double init_scale)
    : channels_(channels), filters_(std::move(filters)) {
  std::vector<int64_t> dims = {1};
  dims.insert(dims.end(), filters_.begin(), filters_.end());
  dims.push_back(1);
  const auto layers = dims.size() - 1;
  const double scale = std::pow(init_scale, 1.0 / static_cast<double>(layers));
  for (size_t i = 0; i < layers; ++i) {
    const double init = std::log(std::expm1(1.0 / scale / static_cast<double>(dims[i + 1])));
    matrices.push_back(register_parameter("matrix" + std::to_string(i),
                                          torch::full({channels, dims[i + 1], dims[i]}, init)));
    biases.push_back(register_parameter(
        "bias" + std::to_string(i), torch::rand({channels, dims[i + 1], 1}) - 0.5));
    if (i + 1 < layers) {
      factors.push_back(register_parameter("factor" + std::to_string(i),
                                           torch::zeros({channels, dims[i + 1], 1})));
    }
  }
}

torch::Tensor FactorizedPriorImpl::logits_cdf(const torch::Tensor& x) const {
  auto t = x.unsqueeze(1);  // (C, 1, N)
  for (size_t i = 0; i < matrices.size(); ++i) {
    // Parameters follow the query dtype so tables can be built in double.
    const auto dt = x.scalar_type();
    t = torch::matmul(F::softplus(matrices[i].to(dt)), t) + biases[i].to(dt);
    if (i < factors.size()) t = t + torch::tanh(factors[i].to(dt)) * torch::tanh(t);
  }
  return t.squeeze(1);
}

torch::Tensor FactorizedPriorImpl::likelihood(const torch::Tensor& v) const {
  if (v.size(-1) != channels_) {
    throw ConfigError("factorized prior: expected " + std::to_string(channels_) + " channels");
  }
  auto shape = v.sizes().vec();
  auto flat = v.reshape({-1, channels_}).t();  // (C, N)
  auto lower = logits_cdf(flat - 0.5);
  auto upper = logits_cdf(flat + 0.5);
  auto sign = -torch::sign(lower + upper).detach();
  auto lik = torch::abs(torch::sigmoid(sign * upper) - torch::sigmoid(sign * lower));
  return lik.t().reshape(shape);
}

torch::Tensor FactorizedPriorImpl::bits(const torch::Tensor& v) const {
  return -torch::log2(likelihood(v).clamp_min(1e-9));
}

torch::Tensor factorized_bits(const torch::Tensor& z_hat, const FactorizedPrior& prior) {
  return prior->bits(z_hat);
}

void CharmConfig::validate() const {
  if (num_slices < 1 || latent_channels % num_slices != 0) {
    throw ConfigError("ChARM: num_slices " + std::to_string(num_slices) +
                      " must divide latent channels " + std::to_string(latent_channels));
  }
  if ((2 * slice_channels()) % num_heads != 0) {
    throw ConfigError("ChARM: slice transform width not divisible by heads");
  }
  if (sigma_min <= 0.0) throw ConfigError("ChARM: sigma_min must be positive");
}

SliceTransformImpl::SliceTransformImpl(const CharmConfig& cfg, int64_t slice_index)
    : in_dim_(cfg.hyper_channels + slice_index * cfg.slice_channels()),
      out_dim_(2 * cfg.slice_channels()) {
  SwinStageConfig block_cfg{1, out_dim_, cfg.window_size, cfg.num_heads};
  projection = register_module("projection", torch::nn::Linear(in_dim_, out_dim_));
  block0 = register_module("block0", SwinBlock(block_cfg, false));
  block1 = register_module("block1", SwinBlock(block_cfg, true));
}

torch::Tensor SliceTransformImpl::forward(const torch::Tensor& context) {
  return block1(block0(projection(context)));
}

int64_t SliceTransformImpl::flops(int64_t h, int64_t w) const {
  return 2 * h * w * in_dim_ * out_dim_ + block0->flops(h, w) + block1->flops(h, w);
}

CharmImpl::CharmImpl(const CharmConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  for (int64_t i = 0; i < cfg_.num_slices; ++i) {
    slices_.push_back(register_module("slice" + std::to_string(i), SliceTransform(cfg_, i)));
  }
}

SliceParams CharmImpl::params(const torch::Tensor& hyper, std::span<const torch::Tensor> decoded,
                              int64_t i) {
  if (i < 0 || i >= cfg_.num_slices) {
    throw ProtocolError("slice index " + std::to_string(i) + " out of range");
  }
  if (static_cast<int64_t>(decoded.size()) != i) {
    throw ProtocolError("slice " + std::to_string(i) + " needs exactly " + std::to_string(i) +
                        " decoded slices, got " + std::to_string(decoded.size()));
  }
  if (hyper.size(-1) != cfg_.hyper_channels) {
    throw ConfigError("ChARM: expected " + std::to_string(cfg_.hyper_channels) +
                      " hyper feature channels");
  }
  std::vector<torch::Tensor> context = {hyper};
  context.insert(context.end(), decoded.begin(), decoded.end());
  auto out = slices_[static_cast<size_t>(i)](torch::cat(context, -1));
  const int64_t cs = cfg_.slice_channels();
  SliceParams p;
  p.mu = out.index({"...", Slice(0, cs)});
  p.sigma = F::softplus(out.index({"...", Slice(cs, 2 * cs)})) + cfg_.sigma_min;
  p.slice_index = i;
  return p;
}

CharmOutput CharmImpl::forward(const torch::Tensor& hyper, const torch::Tensor& y,
                               QuantMode mode) {
  auto slices = split_slices(y, cfg_.num_slices);
  std::vector<torch::Tensor> decoded;
  std::vector<torch::Tensor> bits;
  CharmOutput out;
  for (int64_t i = 0; i < cfg_.num_slices; ++i) {
    auto p = params(hyper, decoded, i);
    auto y_hat = quantize(slices[static_cast<size_t>(i)], p.mu, mode);
    bits.push_back(gaussian_bits(y_hat, p.mu, p.sigma));
    decoded.push_back(y_hat);
    out.params.push_back(std::move(p));
  }
  out.y_hat = concat_slices(decoded);
  out.bits = torch::cat(bits, -1);
  return out;
}

int64_t CharmImpl::flops(int64_t h, int64_t w) const {
  int64_t total = 0;
  for (const auto& s : slices_) total += s->flops(h, w);
  return total;
}

}  // namespace aict
