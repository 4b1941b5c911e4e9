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

#include "aict/evaluation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "aict/errors.hpp"
#include "aict/image_io.hpp"
#include "aict/pipeline.hpp"

namespace aict {

double psnr(const torch::Tensor& x, const torch::Tensor& x_hat) {
  if (x.sizes() != x_hat.sizes()) throw InputError("psnr: shape mismatch");
  const double mse = (x.to(torch::kDouble) - x_hat.to(torch::kDouble)).square().mean().item<double>();
  if (!std::isfinite(mse)) throw NumericError("psnr: non-finite input");
  if (mse == 0.0) return kMaxPsnrDb;
  return std::min(kMaxPsnrDb, -10.0 * std::log10(mse));
}

namespace {

struct Cubic {
  double center = 0.0;
  Eigen::Vector4d coef;

  double operator()(double p) const {
    const double t = p - center;
    return coef[0] + t * (coef[1] + t * (coef[2] + t * coef[3]));
  }
};

std::vector<RDPoint> sorted_curve(std::span<const RDPoint> curve, const char* name) {
  if (curve.size() < 4) {
    throw ProtocolError(std::string("bd_rate: ") + name + " curve needs at least 4 points");
  }
  std::vector<RDPoint> pts(curve.begin(), curve.end());
  for (const auto& p : pts) {
    if (!(p.bpp > 0.0) || !std::isfinite(p.bpp) || !std::isfinite(p.psnr_db)) {
      throw InputError(std::string("bd_rate: invalid point in ") + name + " curve");
    }
  }
  std::sort(pts.begin(), pts.end(), [](const RDPoint& a, const RDPoint& b) {
    return a.psnr_db != b.psnr_db ? a.psnr_db < b.psnr_db : a.bpp < b.bpp;
  });
  return pts;
}

Cubic fit_log_rate(const std::vector<RDPoint>& pts) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  Cubic f;
  for (const auto& p : pts) f.center += p.psnr_db;
  f.center /= static_cast<double>(pts.size());
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = pts[static_cast<size_t>(i)].psnr_db - f.center;
    a(i, 0) = 1.0;
    a(i, 1) = t;
    a(i, 2) = t * t;
    a(i, 3) = t * t * t;
    b(i) = std::log10(pts[static_cast<size_t>(i)].bpp);
  }
  f.coef = a.colPivHouseholderQr().solve(b);
  return f;
}

double trapezoid(const Cubic& f, double lo, double hi) {
  constexpr int kIntervals = 1000;
  const double h = (hi - lo) / kIntervals;
  double s = 0.5 * (f(lo) + f(hi));
  for (int i = 1; i < kIntervals; ++i) s += f(lo + h * i);
  return s * h;
}

}  // namespace

double bd_rate(std::span<const RDPoint> anchor, std::span<const RDPoint> test) {
  const auto a = sorted_curve(anchor, "anchor");
  const auto t = sorted_curve(test, "test");
  const double lo = std::max(a.front().psnr_db, t.front().psnr_db);
  const double hi = std::min(a.back().psnr_db, t.back().psnr_db);
  if (!(hi > lo)) throw ProtocolError("bd_rate: PSNR ranges do not overlap");
  const auto fa = fit_log_rate(a);
  const auto ft = fit_log_rate(t);
  const double avg = (trapezoid(ft, lo, hi) - trapezoid(fa, lo, hi)) / (hi - lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

std::optional<torch::Tensor> crop_to_multiple(const torch::Tensor& image, int64_t multiple) {
  if (image.dim() != 3) throw InputError("crop_to_multiple expects (H, W, C)");
  if (multiple <= 0) throw ConfigError("crop multiple must be positive");
  const int64_t h = image.size(0), w = image.size(1);
  if (h < multiple || w < multiple) return std::nullopt;
  const int64_t hc = h / multiple * multiple, wc = w / multiple * multiple;
  const int64_t top = (h - hc) / 2, left = (w - wc) / 2;
  using torch::indexing::Slice;
  return image.index({Slice(top, top + hc), Slice(left, left + wc)});
}

int64_t count_flops(const Codec& model, int64_t height, int64_t width, bool with_adaptation) {
  return model->flops(height, width, with_adaptation);
}

TimingStats time_decode(size_t stream_count, const std::function<void(size_t)>& decode,
                        const std::string& label, int warmup, int repeats) {
  if (stream_count == 0) throw InputError("time_decode: no streams");
  if (repeats <= 0 || warmup < 0) throw ConfigError("time_decode: invalid warmup or repeats");
  for (int r = 0; r < warmup; ++r) {
    for (size_t i = 0; i < stream_count; ++i) decode(i);
  }
  TimingStats stats;
  stats.label = label;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    for (size_t i = 0; i < stream_count; ++i) decode(i);
    const std::chrono::duration<double, std::milli> dt = std::chrono::steady_clock::now() - t0;
    stats.samples_ms.push_back(dt.count() / static_cast<double>(stream_count));
  }
  double sum = 0.0;
  for (double s : stats.samples_ms) sum += s;
  stats.mean_ms = sum / static_cast<double>(repeats);
  auto sorted = stats.samples_ms;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  stats.median_ms = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return stats;
}

std::vector<RDRow> export_rd(std::span<const std::string> checkpoints,
                             const std::string& image_dir, const ExportOptions& opts) {
  namespace fs = std::filesystem;
  torch::NoGradGuard no_grad;
  // Load images once.
  std::vector<std::pair<std::string, torch::Tensor>> images;
  for (const auto& path : list_png_files(image_dir)) {
    auto img = load_image(path);
    if (opts.crop_multiple > 0) {
      auto cropped = crop_to_multiple(img, opts.crop_multiple);
      if (!cropped) {
        if (opts.warn != nullptr) {
          *opts.warn << "warning: skipping " << path << " (smaller than " << opts.crop_multiple
                     << ")\n";
        }
        continue;
      }
      img = cropped->contiguous();
    }
    if (img.size(0) < kMinCodedEdge || img.size(1) < kMinCodedEdge) {
      if (opts.warn != nullptr) *opts.warn << "warning: skipping " << path << " (too small)\n";
      continue;
    }
    images.emplace_back(fs::path(path).filename().string(), img);
  }
  if (images.empty()) throw InputError("no usable images in " + image_dir);

  std::vector<RDRow> rows, means;
  for (const auto& ckpt : checkpoints) {
    auto loaded = load_checkpoint(ckpt);
    loaded.model->eval();
    RDRow mean{kMeanRow, loaded.meta.quality_id, loaded.meta.lambda, 0.0, 0.0};
    for (const auto& [name, img] : images) {
      EncodeOptions eo;
      eo.quality_id = static_cast<uint8_t>(loaded.meta.quality_id);
      eo.allow_adaptation = opts.allow_adaptation;
      const auto bytes = serialize(encode_image(img, loaded.model, eo));
      auto rec = decode_image(parse_container(bytes), loaded.model);
      RDRow r{name, loaded.meta.quality_id, loaded.meta.lambda,
              bits_per_pixel(bytes.size(), img.size(0), img.size(1)), psnr(img, rec)};
      mean.bpp += r.bpp;
      mean.psnr_db += r.psnr_db;
      rows.push_back(r);
    }
    mean.bpp /= static_cast<double>(images.size());
    mean.psnr_db /= static_cast<double>(images.size());
    means.push_back(mean);
  }
  rows.insert(rows.end(), means.begin(), means.end());
  return rows;
}

void write_rd_csv(const std::string& path, std::span<const RDRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path);
  out << "image,quality_id,lambda,bpp,psnr_db\n" << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.image << ',' << r.quality_id << ',' << r.lambda << ',' << r.bpp << ','
        << r.psnr_db << '\n';
  }
}

std::vector<RDRow> read_rd_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "image,quality_id,lambda,bpp,psnr_db") {
    throw FormatError("unexpected RD header in " + path);
  }
  std::vector<RDRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 5) throw FormatError("malformed RD row: " + line);
    try {
      rows.push_back({f[0], std::stoll(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
    } catch (const std::exception&) {
      throw FormatError("malformed RD row: " + line);
    }
  }
  return rows;
}

std::vector<RDPoint> mean_curve(std::span<const RDRow> rows) {
  std::vector<RDPoint> out;
  for (const auto& r : rows) {
    if (r.image == kMeanRow) out.push_back({r.bpp, r.psnr_db});
  }
  if (out.empty()) {
    std::map<int64_t, std::pair<RDPoint, int>> acc;
    for (const auto& r : rows) {
      auto& [p, n] = acc[r.quality_id];
      p.bpp += r.bpp;
      p.psnr_db += r.psnr_db;
      ++n;
    }
    for (const auto& [q, pn] : acc) {
      out.push_back({pn.first.bpp / pn.second, pn.first.psnr_db / pn.second});
    }
  }
  std::sort(out.begin(), out.end(), [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
  return out;
}

double bd_rate_per_image(std::span<const RDRow> anchor, std::span<const RDRow> test) {
  const auto by_image = [](std::span<const RDRow> rows) {
    std::map<std::string, std::vector<RDPoint>> curves;
    for (const auto& r : rows) {
      if (r.image != kMeanRow) curves[r.image].push_back({r.bpp, r.psnr_db});
    }
    for (auto& [name, pts] : curves) {
      std::sort(pts.begin(), pts.end(),
                [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
    }
    return curves;
  };
  const auto a = by_image(anchor);
  const auto t = by_image(test);
  double sum = 0.0;
  int n = 0;
  for (const auto& [name, pts] : a) {
    const auto it = t.find(name);
    if (it == t.end()) continue;
    sum += bd_rate(pts, it->second);
    ++n;
  }
  if (n == 0) throw ProtocolError("the two RD files share no per-image rows");
  return sum / n;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string rd_plot_svg(const std::vector<std::pair<std::string, std::vector<RDPoint>>>& curves) {
  constexpr double kW = 640, kH = 480, kMargin = 60;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& [name, pts] : curves) {
    for (const auto& p : pts) {
      x0 = std::min(x0, p.bpp);
      x1 = std::max(x1, p.bpp);
      y0 = std::min(y0, p.psnr_db);
      y1 = std::max(y1, p.psnr_db);
    }
  }
  if (x0 > x1) throw InputError("rd_plot_svg: no points");
  if (x1 - x0 < 1e-9) { x0 -= 0.5; x1 += 0.5; }
  if (y1 - y0 < 1e-9) { y0 -= 0.5; y1 += 0.5; }
  auto sx = [&](double v) { return kMargin + (v - x0) / (x1 - x0) * (kW - 2 * kMargin); };
  auto sy = [&](double v) { return kH - kMargin - (v - y0) / (y1 - y0) * (kH - 2 * kMargin); };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << kMargin << "\" y1=\"" << kH - kMargin << "\" x2=\"" << kW - kMargin
     << "\" y2=\"" << kH - kMargin << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin << "\" y2=\""
     << kH - kMargin << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    os << "<text x=\"" << sx(xv) << "\" y=\"" << kH - kMargin + 16
       << "\" text-anchor=\"middle\">" << std::setprecision(3) << xv << "</text>\n";
    os << "<text x=\"" << kMargin - 6 << "\" y=\"" << sy(yv) + 4
       << "\" text-anchor=\"end\">" << std::setprecision(2) << yv << "</text>\n";
  }
  os << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 15 << "\" text-anchor=\"middle\">bpp</text>\n";
  os << "<text x=\"15\" y=\"" << kH / 2 << "\" transform=\"rotate(-90 15 " << kH / 2
     << ")\" text-anchor=\"middle\">PSNR (dB)</text>\n";
  size_t ci = 0;
  for (const auto& [name, pts] : curves) {
    const char* color = kColors[ci % std::size(kColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : pts) os << sx(p.bpp) << ',' << sy(p.psnr_db) << ' ';
    os << "\"/>\n";
    for (const auto& p : pts) {
      os << "<circle cx=\"" << sx(p.bpp) << "\" cy=\"" << sy(p.psnr_db) << "\" r=\"3\" fill=\""
         << color << "\"/>\n";
    }
    os << "<text x=\"" << kMargin + 10 << "\" y=\"" << kMargin + 16 * (ci + 1) << "\" fill=\""
       << color << "\">" << xml_escape(name) << "</text>\n";
    ++ci;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace aict
