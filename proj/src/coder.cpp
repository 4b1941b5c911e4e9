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

#include "aict/coder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "aict/errors.hpp"
#include "aict/scale_adaptation.hpp"
#include "aict/transforms.hpp"

namespace aict {

using torch::indexing::Slice;

namespace {

constexpr uint32_t kTopValue = 1u << 24;

// Lower tail P(N(0,1) <= t) and upper tail P(N(0,1) > t), both without
// cancellation.
double lower_tail(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }
double upper_tail(double t) { return 0.5 * std::erfc(t / std::numbers::sqrt2); }

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<uint8_t>(v >> shift));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

  void need(size_t n) const {
    if (bytes_.size() - pos_ < n) throw DecodeError("container truncated");
  }
  uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  uint16_t u16() {
    need(2);
    const auto v = static_cast<uint16_t>((bytes_[pos_] << 8) | bytes_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + static_cast<size_t>(i)];
    pos_ += 4;
    return v;
  }
  std::vector<uint8_t> take(size_t n) {
    need(n);
    std::vector<uint8_t> v(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                           bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return v;
  }
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

}  // namespace

void CdfTable::validate() const {
  if (cdf.size() < 2) throw ConfigError("cdf table needs at least one symbol");
  if (cdf.front() != 0 || cdf.back() != (1u << precision)) {
    throw ConfigError("cdf table must span [0, 2^precision]");
  }
  for (size_t i = 1; i < cdf.size(); ++i) {
    if (cdf[i] <= cdf[i - 1]) throw ConfigError("cdf table not strictly increasing");
  }
}

double to_fixed16(double v) { return std::nearbyint(v * 65536.0) / 65536.0; }

CdfTable build_cdf_table_from_pmf(std::span<const double> pmf, int32_t lo, int precision) {
  if (pmf.empty()) throw ConfigError("empty pmf");
  if (precision < 1 || precision > 16) throw ConfigError("cdf precision must be in [1, 16]");
  const auto n = pmf.size();
  const int64_t total = int64_t{1} << precision;
  if (static_cast<int64_t>(n) > total) throw ConfigError("more symbols than cdf counts");

  double mass = 0.0;
  for (double p : pmf) mass += std::max(p, 0.0);
  if (!(mass > 0.0) || !std::isfinite(mass)) throw NumericError("pmf has no finite mass");

  std::vector<int64_t> counts(n);
  int64_t assigned = 0;
  size_t argmax = 0;
  for (size_t i = 0; i < n; ++i) {
    const double p = std::max(pmf[i], 0.0) / mass;
    counts[i] = std::max<int64_t>(1, static_cast<int64_t>(std::floor(p * static_cast<double>(total))));
    assigned += counts[i];
    if (counts[i] > counts[argmax]) argmax = i;
  }
  counts[argmax] += total - assigned;
  if (counts[argmax] < 1) throw NumericError("cdf table redistribution failed");

  CdfTable table;
  table.lo = lo;
  table.precision = precision;
  table.cdf.resize(n + 1);
  table.cdf[0] = 0;
  for (size_t i = 0; i < n; ++i) {
    table.cdf[i + 1] = table.cdf[i] + static_cast<uint32_t>(counts[i]);
  }
  return table;
}

double gaussian_bin_probability(int32_t symbol, double mu, double sigma, int32_t lo, int32_t hi) {
  const double a = (static_cast<double>(symbol) - 0.5 - mu) / sigma;
  const double b = (static_cast<double>(symbol) + 0.5 - mu) / sigma;
  if (symbol <= lo) return lower_tail(b);
  if (symbol >= hi) return upper_tail(a);
  // Difference taken on whichever tail is smaller.
  if (a > 0.0) return upper_tail(a) - upper_tail(b);
  return lower_tail(b) - lower_tail(a);
}

CdfTable build_cdf_table(double mu, double sigma, int32_t lo, int32_t hi, int precision) {
  if (!(lo < hi)) throw ConfigError("symbol range must satisfy lo < hi");
  if (!(sigma > 0.0) || !std::isfinite(mu)) throw NumericError("invalid Gaussian parameters");
  const double m = to_fixed16(mu);
  const double s = to_fixed16(sigma);
  std::vector<double> pmf(static_cast<size_t>(hi - lo + 1));
  for (int32_t k = lo; k <= hi; ++k) {
    pmf[static_cast<size_t>(k - lo)] = gaussian_bin_probability(k, m, s, lo, hi);
  }
  return build_cdf_table_from_pmf(pmf, lo, precision);
}

void RangeEncoder::shift_low() {
  if (static_cast<uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<uint8_t>(low_ >> 32);
    uint8_t pending = cache_;
    do {
      out_.push_back(static_cast<uint8_t>(pending + carry));
      pending = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

void RangeEncoder::encode(const CdfTable& table, int32_t symbol) {
  if (symbol < table.lo || symbol > table.hi()) {
    throw InputError("symbol " + std::to_string(symbol) + " outside table range");
  }
  const auto k = static_cast<size_t>(symbol - table.lo);
  const uint32_t r = range_ >> table.precision;
  low_ += static_cast<uint64_t>(r) * table.cdf[k];
  range_ = r * (table.cdf[k + 1] - table.cdf[k]);
  while (range_ < kTopValue) {
    range_ <<= 8;
    shift_low();
  }
}

std::vector<uint8_t> RangeEncoder::finish() {
  // Pick the point of [low, low + range) with the most trailing zero bits; the
  // decoder reads missing bytes as zero, so those need not be written.
  const uint64_t last = low_ + range_ - 1;
  for (int bits = 32; bits >= 0; --bits) {
    const uint64_t mask = (uint64_t{1} << bits) - 1;
    const uint64_t candidate = (low_ + mask) & ~mask;
    if (candidate <= last) {
      low_ = candidate;
      break;
    }
  }
  const size_t before_flush = out_.size();
  for (int i = 0; i < 5; ++i) shift_low();

  // The first byte carries the (always zero) overflow of the initial window.
  std::vector<uint8_t> bytes(out_.begin() + 1, out_.end());
  // range_ >= 2^24 here, so the last four bytes carry at most 8 bits beyond
  // the final interval's width. Keeping at least one of them means the stream
  // is never shorter than -log2 of the coded masses.
  size_t strip = 0;
  const size_t flush_bytes = out_.size() - before_flush;
  while (strip < 3 && strip < flush_bytes && !bytes.empty() && bytes.back() == 0) {
    bytes.pop_back();
    ++strip;
  }
  out_.clear();
  low_ = 0;
  range_ = 0xFFFFFFFFu;
  cache_ = 0;
  cache_size_ = 1;
  return bytes;
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : bytes_(bytes) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
  if (pos_ < bytes_.size()) return bytes_[pos_++];
  ++pos_;
  if (pos_ > bytes_.size() + 4) throw DecodeError("range decoder: stream exhausted");
  return 0;
}

int32_t RangeDecoder::decode(const CdfTable& table) {
  const uint32_t r = range_ >> table.precision;
  const uint32_t target = code_ / r;
  if (target >= (1u << table.precision)) throw DecodeError("range decoder: corrupt stream");
  // Last cdf entry <= target.
  auto it = std::upper_bound(table.cdf.begin(), table.cdf.end(), target);
  const auto k = static_cast<size_t>(std::distance(table.cdf.begin(), it) - 1);
  code_ -= r * table.cdf[k];
  range_ = r * (table.cdf[k + 1] - table.cdf[k]);
  if (code_ >= range_) throw DecodeError("range decoder: corrupt stream");
  while (range_ < kTopValue) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
  return table.lo + static_cast<int32_t>(k);
}

void RangeDecoder::finish() const {
  if (pos_ < bytes_.size()) throw DecodeError("range decoder: trailing bytes after last symbol");
}

std::vector<uint8_t> range_encode(std::span<const int32_t> symbols,
                                  std::span<const CdfTable> tables) {
  if (symbols.size() != tables.size()) throw ConfigError("one cdf table per symbol required");
  RangeEncoder enc;
  for (size_t i = 0; i < symbols.size(); ++i) enc.encode(tables[i], symbols[i]);
  return enc.finish();
}

std::vector<int32_t> range_decode(std::span<const uint8_t> bytes, size_t count,
                                  const std::function<const CdfTable&(size_t)>& table_for) {
  RangeDecoder dec(bytes);
  std::vector<int32_t> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) out.push_back(dec.decode(table_for(i)));
  dec.finish();
  return out;
}

std::vector<uint8_t> serialize(const Container& c) {
  std::vector<uint8_t> out;
  out.reserve(c.total_bytes());
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  out.push_back(c.header.version);
  out.push_back(c.header.flags);
  put_u32(out, c.header.height);
  put_u32(out, c.header.width);
  put_u16(out, c.header.m_fixed);
  out.push_back(c.header.quality_id);
  put_u32(out, static_cast<uint32_t>(c.z_payload.size()));
  out.insert(out.end(), c.z_payload.begin(), c.z_payload.end());
  put_u32(out, static_cast<uint32_t>(c.y_payload.size()));
  out.insert(out.end(), c.y_payload.begin(), c.y_payload.end());
  return out;
}

Container parse_container(std::span<const uint8_t> bytes) {
  ByteReader in(bytes);
  if (bytes.size() < kMagic.size() ||
      !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw FormatError("not an AICT stream (bad magic)");
  }
  in.take(kMagic.size());
  Container c;
  c.header.version = in.u8();
  if (c.header.version != kContainerVersion) {
    throw FormatError("unsupported AICT version " + std::to_string(c.header.version));
  }
  c.header.flags = in.u8();
  c.header.height = in.u32();
  c.header.width = in.u32();
  c.header.m_fixed = in.u16();
  c.header.quality_id = in.u8();
  c.z_payload = in.take(in.u32());
  c.y_payload = in.take(in.u32());
  if (in.remaining() != 0) throw DecodeError("trailing bytes after y payload");
  return c;
}

int64_t coded_edge(uint32_t edge, const Header& header) {
  if (!header.scale_adapted()) return edge;
  return downscaled_edge(ResizeFactor::from_fixed(header.m_fixed).m, edge, kMinCodedEdge);
}

std::pair<torch::Tensor, std::pair<int64_t, int64_t>> pad_input(const torch::Tensor& x,
                                                               int64_t multiple) {
  if (x.dim() != 4) throw ConfigError("pad_input expects a (B,H,W,C) tensor");
  const int64_t h = x.size(1), w = x.size(2);
  if (h < kMinCodedEdge || w < kMinCodedEdge) {
    throw InputError("image edges must be >= 64, got " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  return {replicate_pad_hw(x, multiple), {h, w}};
}

torch::Tensor crop_to(const torch::Tensor& x, int64_t height, int64_t width) {
  return x.index({Slice(), Slice(0, height), Slice(0, width), Slice()});
}

}  // namespace aict
