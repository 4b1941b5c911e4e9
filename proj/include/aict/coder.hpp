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

// Entropy coding primitives: quantized CDF tables, a byte-oriented range
// coder, and the .aict container.

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace aict {

inline constexpr int kCdfPrecision = 16;
inline constexpr int32_t kSymbolMin = -64;
inline constexpr int32_t kSymbolMax = 63;

// Cumulative counts over the symbols lo .. lo + n - 1 at 2^precision total.
struct CdfTable {
  int32_t lo = 0;
  int precision = kCdfPrecision;
  std::vector<uint32_t> cdf;  // n + 1 entries, cdf[0] = 0, cdf[n] = 2^precision

  int32_t num_symbols() const { return static_cast<int32_t>(cdf.size()) - 1; }
  int32_t hi() const { return lo + num_symbols() - 1; }
  uint32_t frequency(int32_t symbol) const {
    const auto k = static_cast<size_t>(symbol - lo);
    return cdf[k + 1] - cdf[k];
  }
  double probability(int32_t symbol) const {
    return static_cast<double>(frequency(symbol)) / static_cast<double>(1u << precision);
  }
  // Throws ConfigError when the table is not strictly increasing from 0 to 2^precision.
  void validate() const;
};

// Rounds to 16 fractional bits; both coder sides see the same values.
double to_fixed16(double v);

// Floors probabilities to integer counts, lifts empty bins to one count and
// settles the remainder on the most probable symbol.
CdfTable build_cdf_table_from_pmf(std::span<const double> pmf, int32_t lo,
                                  int precision = kCdfPrecision);

// Gaussian bin masses over [lo, hi] with the tails folded into the edge
// symbols. mu and sigma are snapped with to_fixed16 first.
CdfTable build_cdf_table(double mu, double sigma, int32_t lo = kSymbolMin,
                         int32_t hi = kSymbolMax, int precision = kCdfPrecision);

// Exact folded Gaussian bin mass, the quantity the table approximates.
double gaussian_bin_probability(int32_t symbol, double mu, double sigma, int32_t lo, int32_t hi);

// 32-bit range, 64-bit low with carry propagation (LZMA-style byte output).
class RangeEncoder {
 public:
  void encode(const CdfTable& table, int32_t symbol);
  std::vector<uint8_t> finish();

 private:
  void shift_low();

  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint8_t cache_ = 0;
  uint64_t cache_size_ = 1;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> bytes);

  // Throws DecodeError when the stream is inconsistent with the table.
  int32_t decode(const CdfTable& table);

  // Verifies the whole stream was consumed; throws DecodeError otherwise.
  void finish() const;

 private:
  uint8_t next_byte();

  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
  uint32_t code_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
};

std::vector<uint8_t> range_encode(std::span<const int32_t> symbols,
                                  std::span<const CdfTable> tables);

// `table_for(k)` supplies the table of the k-th symbol once symbols 0..k-1
// are known.
std::vector<int32_t> range_decode(std::span<const uint8_t> bytes, size_t count,
                                  const std::function<const CdfTable&(size_t)>& table_for);

inline constexpr std::array<uint8_t, 4> kMagic = {'A', 'I', 'C', 'T'};
inline constexpr uint8_t kContainerVersion = 1;
inline constexpr uint8_t kFlagScaleAdapted = 0x01;
inline constexpr size_t kHeaderBytes = 25;

struct Header {
  uint8_t version = kContainerVersion;
  uint8_t flags = 0;
  uint32_t height = 0;
  uint32_t width = 0;
  uint16_t m_fixed = 1 << 14;
  uint8_t quality_id = 0;

  bool scale_adapted() const { return (flags & kFlagScaleAdapted) != 0; }
  bool operator==(const Header&) const = default;
};

struct Container {
  Header header;
  std::vector<uint8_t> z_payload;
  std::vector<uint8_t> y_payload;

  size_t total_bytes() const { return kHeaderBytes + z_payload.size() + y_payload.size(); }
  bool operator==(const Container&) const = default;
};

// Big-endian layout: magic, version, flags, height u32, width u32, m_fixed
// u16, quality_id u8, z_len u32, z payload, y_len u32, y payload.
std::vector<uint8_t> serialize(const Container& c);
// Throws FormatError on bad magic/version, DecodeError on truncation.
Container parse_container(std::span<const uint8_t> bytes);

// Edge the decoder codes at, derived from the header alone.
int64_t coded_edge(uint32_t edge, const Header& header);

// Replicate-pads (B, H, W, C) up to multiples of 64; returns the original (H, W).
std::pair<torch::Tensor, std::pair<int64_t, int64_t>> pad_input(const torch::Tensor& x,
                                                               int64_t multiple = 64);
torch::Tensor crop_to(const torch::Tensor& x, int64_t height, int64_t width);

}  // namespace aict
