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

#include "aict/model.hpp"

#include <cmath>
#include <filesystem>

#include "aict/coder.hpp"
#include "aict/errors.hpp"

namespace aict {

using torch::indexing::Slice;

CharmConfig ModelConfig::charm() const {
  CharmConfig c;
  c.hyper_channels = hyper_feature_channels;
  c.latent_channels = latent_channels();
  c.num_slices = num_slices;
  c.window_size = analysis.front().window_size;
  c.num_heads = slice_heads;
  c.sigma_min = sigma_min;
  return c;
}

void ModelConfig::validate() const {
  if (analysis.empty() || hyper.empty()) throw ConfigError("model needs analysis and hyper stages");
  for (const auto& s : analysis) s.validate();
  for (const auto& s : hyper) s.validate();
  charm().validate();
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.name = "tiny";
  c.analysis = {{1, 32, 4, 2}, {1, 48, 4, 3}, {1, 64, 4, 4}, {1, 96, 4, 6}};
  c.hyper = {{1, 64, 4, 4}, {1, 64, 4, 4}};
  c.hyper_feature_channels = 128;
  c.num_slices = 4;
  c.slice_heads = 3;
  c.adapt.rpn_widths = {16, 32, 64};
  c.adapt.processor_width = 16;
  return c;
}

ModelConfig base_config() {
  ModelConfig c;
  c.name = "base";
  c.analysis = {{2, 128, 8, 4}, {2, 192, 8, 6}, {6, 256, 8, 8}, {2, 320, 8, 10}};
  c.hyper = {{2, 192, 8, 6}, {2, 192, 8, 6}};
  c.hyper_feature_channels = 640;
  c.num_slices = 10;
  c.slice_heads = 4;
  c.adapt.rpn_widths = {16, 32, 64};
  c.adapt.processor_width = 16;
  return c;
}

ModelConfig micro_config() {
  ModelConfig c;
  c.name = "micro";
  c.analysis = {{1, 8, 2, 2}, {1, 8, 2, 2}, {1, 8, 2, 2}, {1, 8, 2, 2}};
  c.hyper = {{1, 8, 2, 2}, {1, 8, 2, 2}};
  c.hyper_feature_channels = 8;
  c.num_slices = 2;
  c.slice_heads = 2;
  c.adapt.rpn_widths = {4, 4, 4};
  c.adapt.processor_width = 4;
  return c;
}

ModelConfig config_by_name(const std::string& name) {
  if (name == "tiny") return tiny_config();
  if (name == "base") return base_config();
  if (name == "micro") return micro_config();
  throw ConfigError("unknown model config '" + name + "' (expected tiny, base or micro)");
}

CodecImpl::CodecImpl(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  analysis = register_module("analysis", DownTransform(3, cfg_.analysis, kMinCodedEdge));
  synthesis = register_module("synthesis", UpTransform(cfg_.analysis, 3));
  hyper_analysis = register_module(
      "hyper_analysis", DownTransform(cfg_.latent_channels(), cfg_.hyper, int64_t{1} << cfg_.hyper.size()));
  hyper_synthesis =
      register_module("hyper_synthesis", UpTransform(cfg_.hyper, cfg_.hyper_feature_channels));
  prior = register_module("prior", FactorizedPrior(cfg_.hyper_latent_channels()));
  charm = register_module("charm", Charm(cfg_.charm()));
  adapt = register_module("adapt", ScaleAdaptation(cfg_.adapt));

  init_transformer_weights(*analysis);
  init_transformer_weights(*synthesis);
  init_transformer_weights(*hyper_analysis);
  init_transformer_weights(*hyper_synthesis);
  init_transformer_weights(*charm);
}

torch::Dtype CodecImpl::dtype() const {
  return parameters().front().scalar_type();
}

torch::Device CodecImpl::device() const { return parameters().front().device(); }

LatentForward CodecImpl::forward_latent(const torch::Tensor& x, QuantMode mode) {
  LatentForward out;
  out.y = analysis(x);
  out.z = hyper_analysis(out.y);
  out.z_hat = quantize(out.z, torch::Tensor(), mode);
  out.bits_z = prior->bits(out.z_hat);
  auto hyper = hyper_synthesis(out.z_hat);
  auto chain = charm(hyper, out.y, mode);
  out.y_hat = chain.y_hat;
  out.bits_y = chain.bits;
  out.x_hat = synthesis(out.y_hat);
  return out;
}

std::pair<torch::Tensor, torch::Tensor> CodecImpl::total_rate(const torch::Tensor& y,
                                                              const torch::Tensor& z,
                                                              QuantMode mode) {
  auto z_hat = quantize(z, torch::Tensor(), mode);
  auto hyper = hyper_synthesis(z_hat);
  auto chain = charm(hyper, y, mode);
  return {chain.bits.sum(), prior->bits(z_hat).sum()};
}

CodecForward CodecImpl::forward(const torch::Tensor& x, const ForwardOptions& opts) {
  const int64_t b = x.size(0), h = x.size(1), w = x.size(2);
  CodecForward out;
  if (!opts.scale_adaptation) {
    auto [padded, edges] = pad_input(x);
    auto lat = forward_latent(padded, opts.mode);
    out.x_hat = crop_to(lat.x_hat, h, w);
    out.bits_y = lat.bits_y.sum({1, 2, 3});
    out.bits_z = lat.bits_z.sum({1, 2, 3});
    out.resize_factors.assign(static_cast<size_t>(b), 1.0);
    return out;
  }

  std::vector<torch::Tensor> x_hats, bits_y, bits_z;
  for (int64_t i = 0; i < b; ++i) {
    auto xi = x.index({Slice(i, i + 1)});
    auto m = adapt->rpn(xi).squeeze(0);
    const double mv = m.item<double>();
    if (adapt->should_bypass(ResizeFactor{mv})) {
      auto [padded, edges] = pad_input(xi);
      auto lat = forward_latent(padded, opts.mode);
      x_hats.push_back(crop_to(lat.x_hat, h, w));
      bits_y.push_back(lat.bits_y.sum());
      bits_z.push_back(lat.bits_z.sum());
      out.resize_factors.push_back(1.0);
      continue;
    }
    const int64_t hd = downscaled_edge(mv, h, cfg_.adapt.min_edge);
    const int64_t wd = downscaled_edge(mv, w, cfg_.adapt.min_edge);
    // Forward uses the realized edge ratio; the gradient reaches m unchanged.
    auto sh = m + (static_cast<double>(hd) / static_cast<double>(h) - m).detach();
    auto sw = m + (static_cast<double>(wd) / static_cast<double>(w) - m).detach();
    auto down = make_grid(sh, sw, hd, wd, h, w, ResampleDirection::kDown);
    auto xd = bicubic_sample(adapt->preprocess(xi), down);
    auto [padded, edges] = pad_input(xd);
    auto lat = forward_latent(padded, opts.mode);
    auto up = make_grid(sh, sw, h, w, hd, wd, ResampleDirection::kUp);
    x_hats.push_back(adapt->postprocess(bicubic_sample(crop_to(lat.x_hat, hd, wd), up)));
    bits_y.push_back(lat.bits_y.sum());
    bits_z.push_back(lat.bits_z.sum());
    out.resize_factors.push_back(static_cast<double>(hd) / static_cast<double>(h));
  }
  out.x_hat = torch::cat(x_hats, 0);
  out.bits_y = torch::stack(bits_y);
  out.bits_z = torch::stack(bits_z);
  return out;
}

int64_t CodecImpl::flops(int64_t height, int64_t width, bool with_adaptation) const {
  const int64_t hp = (height + 63) / 64 * 64;
  const int64_t wp = (width + 63) / 64 * 64;
  const int64_t yh = hp / 16, yw = wp / 16;
  const int64_t zh = yh / 4, zw = yw / 4;
  int64_t total = analysis->flops(hp, wp) + synthesis->flops(yh, yw);
  total += hyper_analysis->flops(yh, yw) + hyper_synthesis->flops(zh, zw);
  total += charm->flops(yh, yw);
  if (with_adaptation) total += adapt->flops(height, width);
  return total;
}

void save_checkpoint(const std::string& path, Codec& model, const CheckpointMeta& meta,
                     torch::optim::Optimizer* optimizer) {
  torch::serialize::OutputArchive archive;
  model->save(archive);
  archive.write("meta/config_name", c10::IValue(meta.config_name));
  archive.write("meta/quality_id", c10::IValue(meta.quality_id));
  archive.write("meta/lambda", c10::IValue(meta.lambda));
  archive.write("meta/step", c10::IValue(meta.step));
  if (optimizer != nullptr) {
    torch::serialize::OutputArchive opt_archive;
    optimizer->save(opt_archive);
    archive.write("optimizer", opt_archive);
  }
  const auto tmp = path + ".tmp";
  archive.save_to(tmp);
  std::filesystem::rename(tmp, path);
}

namespace {

torch::serialize::InputArchive open_archive(const std::string& path) {
  if (!std::filesystem::exists(path)) throw InputError("checkpoint not found: " + path);
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path);
  } catch (const c10::Error& e) {
    throw InputError("cannot read checkpoint " + path);
  }
  return archive;
}

CheckpointMeta read_meta(torch::serialize::InputArchive& archive) {
  CheckpointMeta meta;
  c10::IValue v;
  if (!archive.try_read("meta/config_name", v)) throw InputError("checkpoint has no metadata");
  meta.config_name = v.toStringRef();
  archive.read("meta/quality_id", v);
  meta.quality_id = v.toInt();
  archive.read("meta/lambda", v);
  meta.lambda = v.toDouble();
  archive.read("meta/step", v);
  meta.step = v.toInt();
  return meta;
}

}  // namespace

CheckpointMeta read_checkpoint_meta(const std::string& path) {
  auto archive = open_archive(path);
  return read_meta(archive);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  auto archive = open_archive(path);
  LoadedCheckpoint out;
  out.meta = read_meta(archive);
  out.model = Codec(config_by_name(out.meta.config_name));
  out.model->load(archive);
  return out;
}

bool load_optimizer_state(const std::string& path, torch::optim::Optimizer& optimizer) {
  auto archive = open_archive(path);
  torch::serialize::InputArchive opt_archive;
  if (!archive.try_read("optimizer", opt_archive)) return false;
  optimizer.load(opt_archive);
  return true;
}

int64_t count_parameters(const torch::nn::Module& module) {
  int64_t total = 0;
  for (const auto& p : module.parameters()) total += p.numel();
  return total;
}

}  // namespace aict
