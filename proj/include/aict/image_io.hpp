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

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace aict {

// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct Rgb8Image {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> pixels;
};

// Reads any PNG (palette, gray, alpha and 16-bit are converted to RGB8).
// Throws InputError when the file cannot be read.
Rgb8Image read_png(const std::string& path);
void write_png(const std::string& path, const Rgb8Image& image);

// (H, W, 3) float32 in [0, 1].
torch::Tensor to_tensor(const Rgb8Image& image);
// Rounds to the nearest 8-bit level after clipping to [0, 1].
Rgb8Image from_tensor(const torch::Tensor& image);

torch::Tensor load_image(const std::string& path);
void save_image(const std::string& path, const torch::Tensor& image);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<uint8_t>& bytes);

// Sorted list of *.png files directly inside `dir`.
std::vector<std::string> list_png_files(const std::string& dir);

}  // namespace aict
