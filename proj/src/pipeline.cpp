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

#include "aict/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "aict/errors.hpp"

namespace aict {

namespace {

constexpr size_t kNumSymbols = static_cast<size_t>(kSymbolMax - kSymbolMin + 1);

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// Folded bin masses of every z channel over [kSymbolMin, kSymbolMax].
std::vector<std::vector<double>> factorized_pmfs(const FactorizedPrior& prior) {
  torch::NoGradGuard guard;
  const int64_t channels = prior->channels();
  auto edges = torch::arange(kSymbolMin, kSymbolMax + 2, torch::kDouble) - 0.5;
  auto logits = prior->logits_cdf(edges.unsqueeze(0).expand({channels, edges.size(0)}).contiguous())
                    .to(torch::kCPU)
                    .contiguous();
  auto acc = logits.accessor<double, 2>();
  std::vector<std::vector<double>> pmfs(static_cast<size_t>(channels),
                                        std::vector<double>(kNumSymbols));
  for (int64_t c = 0; c < channels; ++c) {
    for (size_t k = 0; k < kNumSymbols; ++k) {
      const double lower = acc[c][static_cast<int64_t>(k)];
      const double upper = acc[c][static_cast<int64_t>(k) + 1];
      double p;
      if (k == 0) {
        p = sigmoid(upper);
      } else if (k + 1 == kNumSymbols) {
        p = sigmoid(-lower);
      } else if (lower + upper > 0.0) {
        p = sigmoid(-lower) - sigmoid(-upper);
      } else {
        p = sigmoid(upper) - sigmoid(lower);
      }
      pmfs[static_cast<size_t>(c)][k] = std::max(p, 0.0);
    }
  }
  return pmfs;
}

int32_t clamp_symbol(double residual, int64_t& clipped) {
  const double r = round_half_away(residual);
  if (r < kSymbolMin || r > kSymbolMax) {
    ++clipped;
    return static_cast<int32_t>(std::clamp(r, double{kSymbolMin}, double{kSymbolMax}));
  }
  return static_cast<int32_t>(r);
}

torch::Tensor snap16(const torch::Tensor& t) {
  return (torch::round(t.to(torch::kDouble) * 65536.0) / 65536.0).to(torch::kCPU).contiguous();
}

// Symbols for one slice given its snapped parameters, (1, h, w, c_s) doubles.
using SliceCoder =
    std::function<std::vector<int32_t>(int64_t, const torch::Tensor&, const torch::Tensor&)>;

// The autoregressive chain shared by encoder and decoder, so both build the
// conditioning context with identical arithmetic.
torch::Tensor run_slice_chain(Codec& model, const torch::Tensor& hyper, const SliceCoder& coder) {
  std::vector<torch::Tensor> decoded;
  const int64_t slices = model->config().num_slices;
  for (int64_t i = 0; i < slices; ++i) {
    auto p = model->charm->params(hyper, decoded, i);
    auto mu = snap16(p.mu);
    auto sigma = snap16(p.sigma);
    auto symbols = coder(i, mu, sigma);
    auto sym = torch::tensor(symbols, torch::kInt).view(mu.sizes()).to(torch::kDouble);
    decoded.push_back((sym + mu).to(model->device(), model->dtype()));
  }
  return concat_slices(decoded);
}

torch::Tensor reconstruct(Codec& model, const torch::Tensor& y_hat, const Header& header,
                          int64_t coded_h, int64_t coded_w) {
  auto x = crop_to(model->synthesis(y_hat), coded_h, coded_w);
  if (header.scale_adapted()) {
    x = model->adapt->restore(x, ResizeFactor::from_fixed(header.m_fixed), header.height,
                              header.width);
  }
  return x.clamp(0.0, 1.0).squeeze(0);
}

void check_image(const torch::Tensor& x) {
  if (x.dim() != 3 || x.size(2) != 3) throw InputError("expected an (H, W, 3) image tensor");
  if (x.size(0) < kMinCodedEdge || x.size(1) < kMinCodedEdge) {
    throw InputError("image too small: " + std::to_string(x.size(0)) + "x" +
                     std::to_string(x.size(1)) + " (both edges must be >= 64)");
  }
  if (!torch::isfinite(x).all().item<bool>()) throw InputError("image has non-finite pixels");
}

}  // namespace

std::vector<CdfTable> factorized_tables(const FactorizedPrior& prior) {
  std::vector<CdfTable> tables;
  for (const auto& pmf : factorized_pmfs(prior)) {
    tables.push_back(build_cdf_table_from_pmf(pmf, kSymbolMin));
  }
  return tables;
}

double bits_per_pixel(size_t total_bytes, int64_t height, int64_t width) {
  return 8.0 * static_cast<double>(total_bytes) / static_cast<double>(height * width);
}

Container encode_image(const torch::Tensor& x, Codec& model, const EncodeOptions& opts,
                       CodingTrace* trace) {
  check_image(x);
  torch::NoGradGuard guard;
  model->eval();
  auto xb = x.to(model->device(), model->dtype()).unsqueeze(0).contiguous();

  Container out;
  out.header.height = static_cast<uint32_t>(x.size(0));
  out.header.width = static_cast<uint32_t>(x.size(1));
  out.header.quality_id = opts.quality_id;

  ResizeFactor m{1.0};
  auto xd = xb;
  if (opts.allow_adaptation) {
    m = model->adapt->estimate_resize_factor(xb).quantized();
    if (!model->adapt->should_bypass(m)) {
      xd = model->adapt->maybe_rescale(xb, m).first;
      out.header.flags |= kFlagScaleAdapted;
    }
  }
  out.header.m_fixed = m.to_fixed();
  const int64_t coded_h = coded_edge(out.header.height, out.header);
  const int64_t coded_w = coded_edge(out.header.width, out.header);
  if (xd.size(1) != coded_h || xd.size(2) != coded_w) {
    throw ConfigError("rescaled image does not match the header-derived size");
  }

  auto [padded, edges] = pad_input(xd);
  auto y = model->analysis(padded);
  auto z = model->hyper_analysis(y);

  // z: one table per channel, elements in (h, w, c) order.
  const auto z_tables = factorized_tables(model->prior);
  const auto z_pmfs = factorized_pmfs(model->prior);
  auto z_values = z.to(torch::kCPU, torch::kDouble).contiguous();
  const int64_t cz = z.size(-1);
  const double* zp = z_values.data_ptr<double>();
  std::vector<int32_t> z_symbols(static_cast<size_t>(z_values.numel()));
  int64_t clipped = 0;
  double z_bits = 0.0;
  RangeEncoder z_enc;
  for (size_t k = 0; k < z_symbols.size(); ++k) {
    const auto c = k % static_cast<size_t>(cz);
    z_symbols[k] = clamp_symbol(zp[k], clipped);
    z_enc.encode(z_tables[c], z_symbols[k]);
    z_bits -= std::log2(z_pmfs[c][static_cast<size_t>(z_symbols[k] - kSymbolMin)]);
  }
  out.z_payload = z_enc.finish();
  auto z_hat = torch::tensor(z_symbols, torch::kInt)
                   .view(z.sizes())
                   .to(model->device(), model->dtype());
  auto hyper = model->hyper_synthesis(z_hat);

  auto y_slices = split_slices(y.to(torch::kCPU, torch::kDouble), model->config().num_slices);
  std::vector<int32_t> y_symbols;
  double y_bits = 0.0;
  RangeEncoder y_enc;
  auto encoder = [&](int64_t i, const torch::Tensor& mu, const torch::Tensor& sigma) {
    auto values = y_slices[static_cast<size_t>(i)].contiguous();
    const double* v = values.data_ptr<double>();
    const double* mp = mu.data_ptr<double>();
    const double* sp = sigma.data_ptr<double>();
    std::vector<int32_t> symbols(static_cast<size_t>(values.numel()));
    for (size_t k = 0; k < symbols.size(); ++k) {
      symbols[k] = clamp_symbol(v[k] - mp[k], clipped);
      y_enc.encode(build_cdf_table(mp[k], sp[k]), symbols[k]);
      y_bits -= std::log2(
          gaussian_bin_probability(symbols[k], mp[k], sp[k], kSymbolMin, kSymbolMax));
    }
    y_symbols.insert(y_symbols.end(), symbols.begin(), symbols.end());
    return symbols;
  };
  auto y_hat = run_slice_chain(model, hyper, encoder);
  out.y_payload = y_enc.finish();

  if (trace != nullptr) {
    trace->z_symbols = std::move(z_symbols);
    trace->y_symbols = std::move(y_symbols);
    trace->z_estimated_bits = z_bits;
    trace->y_estimated_bits = y_bits;
    trace->clipped_symbols = clipped;
    trace->resize_factor = m;
    trace->scale_adapted = out.header.scale_adapted();
    trace->z_hat = z_hat;
    trace->y_hat = y_hat;
    trace->reconstruction = reconstruct(model, y_hat, out.header, coded_h, coded_w);
  }
  return out;
}

torch::Tensor decode_image(const Container& container, Codec& model, CodingTrace* trace) {
  const auto& header = container.header;
  if (header.height < kMinCodedEdge || header.width < kMinCodedEdge) {
    throw FormatError("header dimensions below the 64-pixel minimum");
  }
  torch::NoGradGuard guard;
  model->eval();
  const auto& cfg = model->config();
  const int64_t coded_h = coded_edge(header.height, header);
  const int64_t coded_w = coded_edge(header.width, header);
  const int64_t pad_h = (coded_h + 63) / 64 * 64;
  const int64_t pad_w = (coded_w + 63) / 64 * 64;
  const int64_t yh = pad_h / 16, yw = pad_w / 16;
  const int64_t zh = pad_h / cfg.total_downscale(), zw = pad_w / cfg.total_downscale();
  const int64_t cz = cfg.hyper_latent_channels();

  const auto z_tables = factorized_tables(model->prior);
  RangeDecoder z_dec(container.z_payload);
  std::vector<int32_t> z_symbols(static_cast<size_t>(zh * zw * cz));
  for (size_t k = 0; k < z_symbols.size(); ++k) {
    z_symbols[k] = z_dec.decode(z_tables[k % static_cast<size_t>(cz)]);
  }
  z_dec.finish();
  auto z_hat = torch::tensor(z_symbols, torch::kInt)
                   .view({1, zh, zw, cz})
                   .to(model->device(), model->dtype());
  auto hyper = model->hyper_synthesis(z_hat);
  if (hyper.size(1) != yh || hyper.size(2) != yw) {
    throw ConfigError("hyper features do not match the latent grid");
  }

  RangeDecoder y_dec(container.y_payload);
  std::vector<int32_t> y_symbols;
  auto decoder = [&](int64_t, const torch::Tensor& mu, const torch::Tensor& sigma) {
    const double* mp = mu.data_ptr<double>();
    const double* sp = sigma.data_ptr<double>();
    std::vector<int32_t> symbols(static_cast<size_t>(mu.numel()));
    for (size_t k = 0; k < symbols.size(); ++k) {
      symbols[k] = y_dec.decode(build_cdf_table(mp[k], sp[k]));
    }
    y_symbols.insert(y_symbols.end(), symbols.begin(), symbols.end());
    return symbols;
  };
  auto y_hat = run_slice_chain(model, hyper, decoder);
  y_dec.finish();

  auto image = reconstruct(model, y_hat, header, coded_h, coded_w);
  if (trace != nullptr) {
    trace->z_symbols = std::move(z_symbols);
    trace->y_symbols = std::move(y_symbols);
    trace->resize_factor = ResizeFactor::from_fixed(header.m_fixed);
    trace->scale_adapted = header.scale_adapted();
    trace->z_hat = z_hat;
    trace->y_hat = y_hat;
    trace->reconstruction = image;
  }
  return image;
}

}  // namespace aict
