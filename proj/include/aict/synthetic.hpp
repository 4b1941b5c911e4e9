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

#include <cstdint>
#include <string>

#include "aict/image_io.hpp"

namespace aict {

// Procedural test content: smooth gradients, soft-edged shapes, oriented
// gratings and mild sensor noise. Deterministic in `seed`.
Rgb8Image synthesize_image(int64_t height, int64_t width, uint64_t seed);

// Writes `count` images named img_0000.png ... into `dir` (created if needed).
void write_synthetic_dataset(const std::string& dir, int count, int64_t height, int64_t width,
                             uint64_t seed);

}  // namespace aict
