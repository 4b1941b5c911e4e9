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

#include "aict/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <glob.h>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "aict/errors.hpp"
#include "aict/evaluation.hpp"
#include "aict/image_io.hpp"
#include "aict/pipeline.hpp"
#include "aict/synthetic.hpp"
#include "aict/training.hpp"

namespace aict {

namespace {

torch::Device device_from_env() {
  const char* env = std::getenv("AICT_DEVICE");
  const std::string name = env != nullptr && *env != '\0' ? env : "cpu";
  try {
    torch::Device d(name);
    if (d.is_cuda() && !torch::cuda::is_available()) {
      throw InputError("AICT_DEVICE=" + name + " but CUDA is not available");
    }
    return d;
  } catch (const c10::Error&) {
    throw InputError("invalid AICT_DEVICE '" + name + "'");
  }
}

Codec load_model(const std::string& path, CheckpointMeta* meta = nullptr) {
  auto loaded = load_checkpoint(path);
  loaded.model->to(device_from_env());
  loaded.model->eval();
  if (meta != nullptr) *meta = loaded.meta;
  return loaded.model;
}

std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<std::string> paths;
  if (rc == 0) paths.assign(g.gl_pathv, g.gl_pathv + g.gl_pathc);
  globfree(&g);
  if (paths.empty()) throw InputError("no checkpoints match '" + pattern + "'");
  return paths;
}

struct Args {
  std::string model, input, output, config, data, images, anchor, test, config_name = "tiny";
  std::vector<std::string> curves;
  std::string ckpt_glob;
  bool no_adapt = false, resume = false, per_image = false;
  int quality = -1;
  int64_t steps = -1, crop = 0, count = 200, height = 256, width = 256;
  uint64_t seed = 0;
};

int cmd_encode(const Args& a, std::ostream& out) {
  torch::NoGradGuard no_grad;
  CheckpointMeta meta;
  auto model = load_model(a.model, &meta);
  if (a.quality >= 0 && a.quality != meta.quality_id) {
    throw ProtocolError("--quality " + std::to_string(a.quality) + " but the checkpoint is quality " +
                        std::to_string(meta.quality_id));
  }
  auto img = load_image(a.input).to(model->device());
  EncodeOptions eo;
  eo.quality_id = static_cast<uint8_t>(meta.quality_id);
  eo.allow_adaptation = !a.no_adapt;
  const auto bytes = serialize(encode_image(img, model, eo));
  write_file(a.output, bytes);
  out << a.output << ": " << bytes.size() << " bytes, " << std::fixed << std::setprecision(4)
      << bits_per_pixel(bytes.size(), img.size(0), img.size(1)) << " bpp\n";
  return 0;
}

int cmd_decode(const Args& a, std::ostream& out) {
  torch::NoGradGuard no_grad;
  const auto container = parse_container(read_file(a.input));
  CheckpointMeta meta;
  auto model = load_model(a.model, &meta);
  if (container.header.quality_id != meta.quality_id) {
    throw ProtocolError("stream was coded at quality " + std::to_string(container.header.quality_id) +
                        " but the checkpoint is quality " + std::to_string(meta.quality_id));
  }
  auto rec = decode_image(container, model);
  save_image(a.output, rec.cpu());
  out << a.output << ": " << rec.size(0) << "x" << rec.size(1) << "\n";
  return 0;
}

int cmd_info(const Args& a, std::ostream& out) {
  const auto bytes = read_file(a.input);
  const auto c = parse_container(bytes);
  const auto& h = c.header;
  out << "size: " << h.height << "x" << h.width << "\n"
      << "quality: " << static_cast<int>(h.quality_id) << "\n"
      << "scale_adapted: " << (h.scale_adapted() ? "yes" : "no") << "\n"
      << "resize_factor: " << std::setprecision(6) << ResizeFactor::from_fixed(h.m_fixed).m
      << "\n"
      << "coded_size: " << coded_edge(h.height, h) << "x" << coded_edge(h.width, h) << "\n"
      << "z_bytes: " << c.z_payload.size() << "\n"
      << "y_bytes: " << c.y_payload.size() << "\n"
      << "total_bytes: " << bytes.size() << "\n"
      << "bpp: " << std::fixed << std::setprecision(4)
      << bits_per_pixel(bytes.size(), h.height, h.width) << "\n";
  return 0;
}

int cmd_train(const Args& a, std::ostream& out) {
  auto cfg = load_train_config(a.config);
  Codec model(config_by_name(cfg.model));
  model->to(device_from_env());
  TrainOptions opts;
  opts.resume = a.resume;
  opts.stop_after = a.steps;
  opts.progress = &out;
  const auto res = train(model, cfg, a.data, a.output, opts);
  out << "trained " << res.steps_done << " steps, checkpoint " << res.checkpoint_path << "\n";
  return 0;
}

int cmd_eval(const Args& a, std::ostream& out, std::ostream& err) {
  ExportOptions opts;
  opts.allow_adaptation = !a.no_adapt;
  opts.crop_multiple = a.crop;
  opts.warn = &err;
  const auto rows = export_rd(expand_glob(a.ckpt_glob), a.images, opts);
  write_rd_csv(a.output, rows);
  for (const auto& r : rows) {
    if (r.image != kMeanRow) continue;
    out << "quality " << r.quality_id << ": " << std::fixed << std::setprecision(4) << r.bpp
        << " bpp, " << std::setprecision(2) << r.psnr_db << " dB\n";
  }
  return 0;
}

int cmd_bdrate(const Args& a, std::ostream& out) {
  const auto anchor = read_rd_csv(a.anchor);
  const auto test = read_rd_csv(a.test);
  const double bd = a.per_image ? bd_rate_per_image(anchor, test)
                                : bd_rate(mean_curve(anchor), mean_curve(test));
  out << "BD-rate: " << std::fixed << std::setprecision(2) << bd << "%\n";
  return 0;
}

int cmd_plot(const Args& a, std::ostream& out) {
  std::vector<std::pair<std::string, std::vector<RDPoint>>> curves;
  for (const auto& spec : a.curves) {
    const auto eq = spec.find('=');
    const auto path = eq == std::string::npos ? spec : spec.substr(0, eq);
    const auto label =
        eq == std::string::npos ? std::filesystem::path(path).stem().string() : spec.substr(eq + 1);
    curves.emplace_back(label, mean_curve(read_rd_csv(path)));
  }
  std::ofstream f(a.output, std::ios::trunc);
  if (!f) throw InputError("cannot write " + a.output);
  f << rd_plot_svg(curves);
  out << a.output << "\n";
  return 0;
}

int cmd_synth(const Args& a, std::ostream& out) {
  if (a.count <= 0 || a.height < 1 || a.width < 1) throw InputError("invalid synth dimensions");
  write_synthetic_dataset(a.output, static_cast<int>(a.count), a.height, a.width, a.seed);
  out << "wrote " << a.count << " images to " << a.output << "\n";
  return 0;
}

int cmd_stats(const Args& a, std::ostream& out) {
  Codec model(config_by_name(a.config_name));
  out << "config: " << a.config_name << "\n"
      << "parameters: " << count_parameters(*model) << "\n"
      << "flops(" << a.height << "x" << a.width << "): "
      << count_flops(model, a.height, a.width) << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"aict: learned image codec"};
  app.require_subcommand(1);
  Args a;

  auto* enc = app.add_subcommand("encode", "PNG -> .aict");
  enc->add_option("-i,--input", a.input, "PNG image")->required();
  enc->add_option("-o,--output", a.output, "container file")->required();
  enc->add_option("--ckpt", a.model, "checkpoint")->required();
  enc->add_option("--quality", a.quality, "expected quality id of the checkpoint")
      ->check(CLI::Range(0, 3));
  enc->add_flag("--no-adapt", a.no_adapt, "disable scale adaptation");

  auto* dec = app.add_subcommand("decode", ".aict -> PNG");
  dec->add_option("-i,--input", a.input, "container file")->required();
  dec->add_option("-o,--output", a.output, "PNG image")->required();
  dec->add_option("--ckpt", a.model, "checkpoint")->required();

  auto* info = app.add_subcommand("info", "print container header");
  info->add_option("-i,--input", a.input, "container file")->required();

  auto* tr = app.add_subcommand("train", "rate-distortion training");
  tr->add_option("--config", a.config, "key = value training config")->required();
  tr->add_option("--data", a.data, "directory of PNG training images")->required();
  tr->add_option("--out", a.output, "run directory")->required();
  tr->add_flag("--resume", a.resume, "continue from <out>/checkpoint.pt");
  tr->add_option("--stop-after", a.steps, "stop after this many total steps");

  auto* ev = app.add_subcommand("eval", "rate-distortion export");
  ev->add_option("--data", a.images, "directory of PNG test images")->required();
  ev->add_option("--ckpt-glob", a.ckpt_glob, "checkpoint path pattern")->required();
  ev->add_option("--csv", a.output, "RD CSV")->required();
  ev->add_option("--crop", a.crop, "center-crop edges to a multiple of this");
  ev->add_flag("--no-adapt", a.no_adapt, "disable scale adaptation");

  auto* bd = app.add_subcommand("bdrate", "BD-rate of two RD CSVs");
  bd->add_option("--anchor", a.anchor)->required();
  bd->add_option("--test", a.test)->required();
  bd->add_flag("--per-image", a.per_image, "average per-image BD-rates instead of using mean curves");

  auto* pl = app.add_subcommand("plot-rd", "SVG plot of RD CSVs");
  pl->add_option("--csv", a.curves, "file.csv[=label]")->required()->expected(1, -1);
  pl->add_option("--out", a.output)->required();

  auto* sy = app.add_subcommand("synth", "write a procedural image set");
  sy->add_option("--out", a.output)->required();
  sy->add_option("--count", a.count);
  sy->add_option("--height", a.height);
  sy->add_option("--width", a.width);
  sy->add_option("--seed", a.seed);

  auto* st = app.add_subcommand("stats", "parameter and FLOP counts of a config");
  st->add_option("--config", a.config_name);
  st->add_option("--height", a.height);
  st->add_option("--width", a.width);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (enc->parsed()) return cmd_encode(a, out);
    if (dec->parsed()) return cmd_decode(a, out);
    if (info->parsed()) return cmd_info(a, out);
    if (tr->parsed()) return cmd_train(a, out);
    if (ev->parsed()) return cmd_eval(a, out, err);
    if (bd->parsed()) return cmd_bdrate(a, out);
    if (pl->parsed()) return cmd_plot(a, out);
    if (sy->parsed()) return cmd_synth(a, out);
    if (st->parsed()) return cmd_stats(a, out);
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return 1;
  } catch (const DecodeError& e) {
    err << "decode error: " << e.what() << "\n";
    return 1;
  } catch (const ProtocolError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace aict
