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

#include "aict/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "aict/errors.hpp"

namespace aict {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  config_by_name(model);
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be positive");
  if (total_steps <= 0) throw ConfigError("total_steps must be positive");
  if (!(lr_initial > 0.0) || !(lr_final > 0.0)) throw ConfigError("learning rates must be positive");
  if (final_phase_fraction < 0.0 || final_phase_fraction > 1.0) {
    throw ConfigError("final_phase_fraction must be in [0, 1]");
  }
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (crop < kMinCodedEdge) {
    throw ConfigError("crop must be at least " + std::to_string(kMinCodedEdge));
  }
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0) {
    throw ConfigError("adam betas must be in [0, 1)");
  }
  if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  if (log_every <= 0 || checkpoint_every <= 0) {
    throw ConfigError("log_every and checkpoint_every must be positive");
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("invalid number for " + key + ": '" + v + "'");
  }
}

int64_t to_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("invalid integer for " + key + ": '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + v + "'");
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  bool lambda_set = false;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto val = trim(line.substr(eq + 1));
    if (key == "model") cfg.model = val;
    else if (key == "lambda") { cfg.lambda = to_double(key, val); lambda_set = true; }
    else if (key == "quality_id") cfg.quality_id = to_int(key, val);
    else if (key == "total_steps") cfg.total_steps = to_int(key, val);
    else if (key == "lr_initial") cfg.lr_initial = to_double(key, val);
    else if (key == "lr_final") cfg.lr_final = to_double(key, val);
    else if (key == "final_phase_fraction") cfg.final_phase_fraction = to_double(key, val);
    else if (key == "batch_size") cfg.batch_size = to_int(key, val);
    else if (key == "crop") cfg.crop = to_int(key, val);
    else if (key == "adam_beta1") cfg.adam_beta1 = to_double(key, val);
    else if (key == "adam_beta2") cfg.adam_beta2 = to_double(key, val);
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(to_int(key, val));
    else if (key == "grad_clip") cfg.grad_clip = to_double(key, val);
    else if (key == "scale_adaptation") cfg.scale_adaptation = to_bool(key, val);
    else if (key == "noise_quantization") cfg.noise_quantization = to_bool(key, val);
    else if (key == "log_every") cfg.log_every = to_int(key, val);
    else if (key == "checkpoint_every") cfg.checkpoint_every = to_int(key, val);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  // A quality id alone selects its lambda from the sweep.
  if (!lambda_set) {
    if (cfg.quality_id < 0 || cfg.quality_id >= static_cast<int64_t>(kLambdaSweep.size())) {
      throw ConfigError("quality_id outside the lambda sweep and no lambda given");
    }
    cfg.lambda = kLambdaSweep[static_cast<size_t>(cfg.quality_id)];
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

std::string format_train_config(const TrainConfig& cfg) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "model = " << cfg.model << "\n"
     << "lambda = " << cfg.lambda << "\n"
     << "quality_id = " << cfg.quality_id << "\n"
     << "total_steps = " << cfg.total_steps << "\n"
     << "lr_initial = " << cfg.lr_initial << "\n"
     << "lr_final = " << cfg.lr_final << "\n"
     << "final_phase_fraction = " << cfg.final_phase_fraction << "\n"
     << "batch_size = " << cfg.batch_size << "\n"
     << "crop = " << cfg.crop << "\n"
     << "adam_beta1 = " << cfg.adam_beta1 << "\n"
     << "adam_beta2 = " << cfg.adam_beta2 << "\n"
     << "seed = " << cfg.seed << "\n"
     << "grad_clip = " << cfg.grad_clip << "\n"
     << "scale_adaptation = " << (cfg.scale_adaptation ? "true" : "false") << "\n"
     << "noise_quantization = " << (cfg.noise_quantization ? "true" : "false") << "\n"
     << "log_every = " << cfg.log_every << "\n"
     << "checkpoint_every = " << cfg.checkpoint_every << "\n";
  return os.str();
}

RDLossBreakdown rd_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                        const torch::Tensor& bits_y, const torch::Tensor& bits_z, double lambda,
                        int64_t height, int64_t width) {
  if (x.sizes() != x_hat.sizes()) throw InputError("rd_loss: x and x_hat shapes differ");
  if (height <= 0 || width <= 0) throw InputError("rd_loss: empty image");
  const int64_t batch = x.dim() == 4 ? x.size(0) : 1;
  auto d = (x - x_hat).square().mean();
  auto r = (bits_y.sum() + bits_z.sum()) / static_cast<double>(batch * height * width);
  RDLossBreakdown out;
  out.loss = d + lambda * r;
  out.d_mse = d.item<double>();
  out.r_bpp = r.item<double>();
  out.total = out.d_mse + lambda * out.r_bpp;
  return out;
}

double lr_schedule(int64_t step, const TrainConfig& cfg) {
  const int64_t final_steps =
      std::llround(cfg.final_phase_fraction * static_cast<double>(cfg.total_steps));
  return step < cfg.total_steps - final_steps ? cfg.lr_initial : cfg.lr_final;
}

ImageDataset ImageDataset::load(const std::string& dir, int64_t min_edge, std::ostream* warn) {
  ImageDataset ds;
  for (const auto& path : list_png_files(dir)) {
    auto img = read_png(path);
    if (img.height < min_edge || img.width < min_edge) {
      if (warn != nullptr) {
        *warn << "warning: skipping " << path << " (" << img.height << "x" << img.width
              << " is smaller than " << min_edge << ")\n";
      }
      continue;
    }
    ds.images_.push_back(std::move(img));
    ds.paths_.push_back(path);
  }
  if (ds.images_.empty()) throw InputError("no usable PNG images in " + dir);
  return ds;
}

Batch sample_batch(const ImageDataset& data, const TrainConfig& cfg, std::mt19937_64& rng) {
  const int64_t c = cfg.crop;
  auto images = torch::empty({cfg.batch_size, c, c, 3}, torch::kUInt8);
  auto* dst = images.data_ptr<uint8_t>();
  Batch batch;
  std::uniform_int_distribution<size_t> pick(0, data.size() - 1);
  for (int64_t b = 0; b < cfg.batch_size; ++b) {
    CropLocation loc;
    loc.image = pick(rng);
    const auto& img = data.image(loc.image);
    if (img.height < c || img.width < c) {
      throw InputError("image " + data.path(loc.image) + " is smaller than the crop");
    }
    loc.top = std::uniform_int_distribution<int64_t>(0, img.height - c)(rng);
    loc.left = std::uniform_int_distribution<int64_t>(0, img.width - c)(rng);
    for (int64_t y = 0; y < c; ++y) {
      const uint8_t* src = img.pixels.data() + ((loc.top + y) * img.width + loc.left) * 3;
      std::copy(src, src + c * 3, dst + ((b * c + y) * c) * 3);
    }
    batch.locations.push_back(loc);
  }
  batch.images = images.to(torch::kFloat32).div(255.0);
  return batch;
}

namespace {

constexpr const char* kMetricsHeader = "step,loss,d_mse,r_bpp,lr";

std::string format_row(const LogRow& r) {
  std::ostringstream os;
  os << std::setprecision(10) << r.step << ',' << r.loss << ',' << r.d_mse << ',' << r.r_bpp
     << ',' << r.lr;
  return os.str();
}

// Keeps rows with step <= last_step (used when resuming).
void truncate_metrics(const std::string& path, int64_t last_step) {
  std::vector<LogRow> keep;
  if (fs::exists(path)) {
    for (const auto& r : read_metrics_csv(path)) {
      if (r.step <= last_step) keep.push_back(r);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  out << kMetricsHeader << "\n";
  for (const auto& r : keep) out << format_row(r) << "\n";
}

// Independent per-step stream so a resumed run sees the same batches.
std::mt19937_64 step_rng(uint64_t seed, int64_t step) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(step), static_cast<uint32_t>(step >> 32)};
  return std::mt19937_64(seq);
}

void load_weights(const std::string& path, Codec& model) {
  torch::serialize::InputArchive archive;
  archive.load_from(path);
  model->load(archive);
}

std::string batch_stats(const torch::Tensor& x) {
  std::ostringstream os;
  os << "batch mean " << x.mean().item<double>() << ", min " << x.min().item<double>()
     << ", max " << x.max().item<double>();
  return os.str();
}

}  // namespace

TrainResult train(Codec& model, const TrainConfig& cfg, const std::string& dataset_dir,
                  const std::string& out_dir, const TrainOptions& opts) {
  cfg.validate();
  if (model->config().name != cfg.model) {
    throw ConfigError("model config '" + model->config().name + "' does not match '" +
                      cfg.model + "'");
  }
  fs::create_directories(out_dir);
  const auto ckpt = (fs::path(out_dir) / "checkpoint.pt").string();
  const auto metrics = (fs::path(out_dir) / "metrics.csv").string();
  {
    std::ofstream c((fs::path(out_dir) / "config.txt").string(), std::ios::trunc);
    c << format_train_config(cfg);
  }

  auto data = ImageDataset::load(dataset_dir, cfg.crop, opts.progress);
  torch::optim::Adam optimizer(
      model->parameters(),
      torch::optim::AdamOptions(cfg.lr_initial).betas({cfg.adam_beta1, cfg.adam_beta2}));

  int64_t step = 0;
  if (opts.resume && fs::exists(ckpt)) {
    const auto meta = read_checkpoint_meta(ckpt);
    if (meta.config_name != cfg.model) throw ConfigError("checkpoint config mismatch");
    load_weights(ckpt, model);
    if (!load_optimizer_state(ckpt, optimizer)) {
      throw InputError("checkpoint " + ckpt + " has no optimizer state");
    }
    step = meta.step;
    truncate_metrics(metrics, step);
  } else {
    truncate_metrics(metrics, -1);
  }

  CheckpointMeta meta{cfg.model, cfg.quality_id, cfg.lambda, step};
  auto checkpoint = [&](int64_t done) {
    meta.step = done;
    save_checkpoint(ckpt, model, meta, &optimizer);
  };

  TrainResult result;
  result.checkpoint_path = ckpt;
  std::ofstream log(metrics, std::ios::app);
  const auto device = model->device();
  const ForwardOptions fwd{cfg.noise_quantization ? QuantMode::kUniformNoise
                                                  : QuantMode::kStraightThrough,
                           cfg.scale_adaptation};
  model->train();
  const int64_t end = opts.stop_after >= 0 ? std::min(opts.stop_after, cfg.total_steps)
                                           : cfg.total_steps;
  for (; step < end; ++step) {
    const double lr = lr_schedule(step, cfg);
    for (auto& group : optimizer.param_groups()) {
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }
    auto rng = step_rng(cfg.seed, step);
    torch::manual_seed(cfg.seed * 1000003ULL + static_cast<uint64_t>(step));
    auto batch = sample_batch(data, cfg, rng);
    auto x = batch.images.to(device, model->dtype());

    optimizer.zero_grad();
    auto fw = model->forward(x, fwd);
    auto rd = rd_loss(x, fw.x_hat, fw.bits_y, fw.bits_z, cfg.lambda, x.size(1), x.size(2));
    if (!std::isfinite(rd.total)) {
      throw NumericError("non-finite loss at step " + std::to_string(step) + " (" +
                         batch_stats(x) + ", d_mse " + std::to_string(rd.d_mse) + ", r_bpp " +
                         std::to_string(rd.r_bpp) + ")");
    }
    rd.loss.backward();
    torch::nn::utils::clip_grad_norm_(model->parameters(), cfg.grad_clip);
    optimizer.step();

    const LogRow row{step, rd.total, rd.d_mse, rd.r_bpp, lr};
    result.log.push_back(row);
    const int64_t done = step + 1;
    if (done % cfg.log_every == 0 || done == cfg.total_steps || done == end) {
      log << format_row(row) << "\n" << std::flush;
      if (opts.progress != nullptr) *opts.progress << format_row(row) << "\n";
    }
    if (done % cfg.checkpoint_every == 0 && done != end) checkpoint(done);
  }
  checkpoint(step);
  result.steps_done = step;
  return result;
}

std::vector<LogRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (trim(line) != kMetricsHeader) throw FormatError("unexpected metrics header in " + path);
  std::vector<LogRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    LogRow r;
    char c1, c2, c3, c4;
    std::istringstream ls(line);
    if (!(ls >> r.step >> c1 >> r.loss >> c2 >> r.d_mse >> c3 >> r.r_bpp >> c4 >> r.lr)) {
      throw FormatError("malformed metrics row: " + line);
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace aict
