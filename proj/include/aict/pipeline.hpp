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

// End-to-end image coding: image -> .aict container -> image.

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "aict/coder.hpp"
#include "aict/model.hpp"

namespace aict {

struct EncodeOptions {
  uint8_t quality_id = 0;
  bool allow_adaptation = true;  // false forces the scale-adaptation bypass
};

// Side information exposed for tests and diagnostics.
struct CodingTrace {
  std::vector<int32_t> z_symbols;
  std::vector<int32_t> y_symbols;
  double z_estimated_bits = 0.0;  // -log2 of the folded model masses
  double y_estimated_bits = 0.0;  // same, at the fixed-point (mu, sigma)
  int64_t clipped_symbols = 0;    // residuals outside [-64, 63]
  ResizeFactor resize_factor;
  bool scale_adapted = false;
  torch::Tensor z_hat;           // (1, zh, zw, C_z)
  torch::Tensor y_hat;           // (1, yh, yw, C_y)
  torch::Tensor reconstruction;  // (H, W, 3) in [0, 1]
};

// x: (H, W, 3) in [0, 1] with both edges >= 64.
Container encode_image(const torch::Tensor& x, Codec& model, const EncodeOptions& opts = {},
                       CodingTrace* trace = nullptr);

// Returns the (H, W, 3) reconstruction clipped to [0, 1].
torch::Tensor decode_image(const Container& container, Codec& model,
                           CodingTrace* trace = nullptr);

// Per-channel z tables derived from the factorized prior.
std::vector<CdfTable> factorized_tables(const FactorizedPrior& prior);

// bits per pixel of a serialized container for an H x W image.
double bits_per_pixel(size_t total_bytes, int64_t height, int64_t width);

}  // namespace aict
