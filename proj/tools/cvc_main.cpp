// Copyright (c) the CVC Project
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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "cvc/bench.hpp"
#include "cvc/bitstream.hpp"
#include "cvc/checkpoint.hpp"
#include "cvc/metrics.hpp"
#include "cvc/synthetic.hpp"
#include "cvc/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace cvc;

namespace {

// Exit codes: 0 success, 2 argument error, 3 data error, 4 config error.
constexpr int kExitArgument = 2;
constexpr int kExitData = 3;
constexpr int kExitConfig = 4;

struct SizeArg {
  int w = 0, h = 0;
};

SizeArg parse_size(const std::string& s) {
  SizeArg out;
  const auto xpos = s.find('x');
  if (xpos == std::string::npos) throw ArgumentError("--size must be WxH");
  try {
    out.w = std::stoi(s.substr(0, xpos));
    out.h = std::stoi(s.substr(xpos + 1));
  } catch (const std::exception&) {
    throw ArgumentError("--size must be WxH");
  }
  if (out.w < 2 || out.h < 2) throw ArgumentError("--size out of range");
  return out;
}

FrameSequence load_input(const std::string& path, const std::string& size,
                         const std::string& pattern, int max_frames) {
  if (fs::is_directory(path)) {
    FrameSequence seq = load_image_sequence(path, pattern);
    if (max_frames > 0 && static_cast<int>(seq.frames.size()) > max_frames) {
      seq.frames.resize(static_cast<size_t>(max_frames));
    }
    return seq;
  }
  if (size.empty()) {
    throw ArgumentError("raw yuv input requires --size WxH");
  }
  const SizeArg sz = parse_size(size);
  return load_yuv420(path, sz.w, sz.h, max_frames > 0 ? max_frames : (1 << 30));
}

std::uint8_t intra_id_from_name(const std::string& name) {
  if (name == "lossless-deflate" || name == "deflate") return kIntraLosslessDeflate;
  if (name == "toy-hyperprior" || name == "hyperprior") return kIntraToyHyperprior;
  throw ConfigError("unknown intra codec: " + name);
}

int cmd_encode(const std::string& input, const std::string& size, int gop,
               const std::string& checkpoint, const std::string& entropy_mode,
               const std::string& condition_mode, int context_dim,
               const std::string& out, const std::string& intra_name,
               const std::string& report, int max_frames) {
  VideoCodecModel model = load_model(checkpoint);
  // The coding modes are properties of the trained checkpoint; flags act as
  // assertions so a mismatched model fails loudly instead of decoding junk.
  if (!entropy_mode.empty() &&
      entropy_mode_from_string(entropy_mode) != model.config.entropy_mode) {
    throw ConfigError("checkpoint was trained with entropy_mode " +
                      to_string(model.config.entropy_mode));
  }
  if (!condition_mode.empty() &&
      condition_mode_from_string(condition_mode) != model.config.condition_mode) {
    throw ConfigError("checkpoint was trained with condition_mode " +
                      to_string(model.config.condition_mode));
  }
  if (context_dim > 0 && context_dim != model.config.context_dim) {
    throw ConfigError("checkpoint was trained with context_dim " +
                      std::to_string(model.config.context_dim));
  }

  const FrameSequence seq = load_input(input, size, "*.png", max_frames);
  const GopStructure gops = segment_gops(seq, gop);
  const IntraCodecRegistry registry = IntraCodecRegistry::standard(&model);
  EncodedSequence enc =
      encode_sequence(seq, gops, model, registry, intra_id_from_name(intra_name));
  write_container(out, enc.container);
  const std::string report_path = report.empty() ? out + ".rates.jsonl" : report;
  write_rate_report(report_path, enc.rates);

  double bpp_sum = 0.0;
  for (const auto& r : enc.rates) bpp_sum += r.bpp;
  std::cout << "encoded " << seq.frames.size() << " frames (" << seq.width() << "x"
            << seq.height() << ", gop " << gop << ") -> " << out << "\n"
            << "mean bpp " << bpp_sum / static_cast<double>(enc.rates.size())
            << ", rate report " << report_path << "\n";
  return 0;
}

int cmd_decode(const std::string& in, const std::string& checkpoint,
               const std::string& out_dir, const std::string& format) {
  if (format != "png" && format != "ppm") {
    throw ArgumentError("--format must be png or ppm");
  }
  VideoCodecModel model = load_model(checkpoint);
  const BitstreamContainer container = read_container(in);
  if (container.header.entropy_mode != model.config.entropy_mode ||
      container.header.condition_mode != model.config.condition_mode ||
      container.header.motion_mode != model.config.motion_mode ||
      container.header.context_dim != model.config.context_dim) {
    throw ConfigError("bitstream was produced under a different codec config");
  }
  const IntraCodecRegistry registry = IntraCodecRegistry::standard(&model);
  const FrameSequence seq = decode_sequence(container, model, registry);
  fs::create_directories(out_dir);
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05zu.%s", i, format.c_str());
    save_image((fs::path(out_dir) / name).string(), seq.frames[i]);
  }
  std::cout << "decoded " << seq.frames.size() << " frames -> " << out_dir << "\n";
  return 0;
}

std::vector<FrameSequence> load_train_dataset(const nlohmann::json& j) {
  std::vector<FrameSequence> clips;
  if (j.contains("manifest")) {
    for (const auto& e : load_manifest(j.at("manifest"))) {
      clips.push_back(load_dataset_entry(e));
    }
  }
  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    const int n = s.value("clips", 1);
    for (int i = 0; i < n; ++i) {
      clips.push_back(make_translating_clip(
          s.value("width", 64), s.value("height", 64), s.value("frames", 7),
          s.value("flow_dx", 2.0), s.value("flow_dy", 0.0),
          s.value("seed", 7) + static_cast<std::uint64_t>(i)));
    }
  }
  if (clips.empty()) {
    throw ConfigError("train config needs a 'dataset' with 'manifest' or 'synthetic'");
  }
  return clips;
}

int cmd_train(const std::string& config_path, const std::string& stage_arg,
              const std::string& resume) {
  std::ifstream in(config_path);
  if (!in) throw DataError("cannot open train config: " + config_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed train config: " + std::string(e.what()));
  }

  CodecConfig cc;
  cc.condition_mode =
      condition_mode_from_string(j.value("condition_mode", "context_feature"));
  cc.motion_mode = motion_mode_from_string(j.value("motion_mode", "memc"));
  cc.entropy_mode =
      entropy_mode_from_string(j.value("entropy_mode", "hyper_spatial_temporal"));
  cc.context_dim = j.value("context_dim", 64);
  cc.lambda = j.value("lambda", 1024.0);
  cc.distortion_metric =
      distortion_metric_from_string(j.value("distortion_metric", "mse"));
  cc.validate();

  TrainOptions opts;
  if (j.contains("steps")) {
    const auto steps = j.at("steps").get<std::vector<int>>();
    if (steps.size() != 4) throw ConfigError("'steps' must list 4 stage counts");
    for (size_t i = 0; i < 4; ++i) opts.schedule.steps[i] = steps[i];
  }
  opts.schedule.lr = j.value("lr", 1e-4);
  opts.schedule.lr_finetune = j.value("lr_finetune", 1e-5);
  opts.batch_size = j.value("batch_size", 4);
  opts.crop = j.value("crop", 256);
  opts.seed = j.value("seed", 1);
  opts.checkpoint_out = j.value("checkpoint_out", std::string("model.ckpt"));
  opts.log_path = j.value("log", std::string());

  VideoCodecModel model =
      VideoCodecModel::init(cc, j.value("init_seed", std::uint64_t{42}));
  Adam opt(opts.schedule.lr);
  if (!resume.empty()) {
    const CheckpointData data = load_checkpoint_data(resume);
    if (!(data.config.condition_mode == cc.condition_mode &&
          data.config.motion_mode == cc.motion_mode &&
          data.config.entropy_mode == cc.entropy_mode &&
          data.config.context_dim == cc.context_dim)) {
      throw ConfigError("resume checkpoint config does not match train config");
    }
    apply_checkpoint(model, data, /*strict=*/true);
    if (data.has_opt) {
      opt.set_steps_taken(data.opt_t);
      opt.moment1() = data.opt_m;
      opt.moment2() = data.opt_v;
    }
  }
  const std::vector<FrameSequence> clips = load_train_dataset(j.at("dataset"));

  auto progress = [](int stage, int step, const LossBreakdown& b) {
    if (step % 25 == 0) {
      std::cout << "stage " << stage << " step " << step << " loss " << b.total
                << " (D " << b.distortion << ", bpp "
                << b.bpp_y + b.bpp_z + b.bpp_g + b.bpp_s << ")\n";
    }
  };

  if (stage_arg == "auto") {
    train_progressive(model, clips, opts, progress);
  } else {
    int stage = 0;
    try {
      stage = std::stoi(stage_arg);
    } catch (const std::exception&) {
      throw ArgumentError("--stage must be 1..4 or auto");
    }
    if (stage < 1 || stage > 4) throw ArgumentError("--stage must be 1..4 or auto");
    Rng rng(opts.seed);
    opt.set_lr(stage == 4 ? opts.schedule.lr_finetune : opts.schedule.lr);
    train_steps(model, clips, stage, opts.schedule.steps[static_cast<size_t>(stage - 1)],
                opt, frozen_prefixes_for_stage(stage), opts, rng, progress);
    save_checkpoint(opts.checkpoint_out, model, stage,
                    opts.schedule.steps[static_cast<size_t>(stage - 1)], &opt);
  }

  const int intra_steps = j.value("intra_steps", 0);
  if (intra_steps > 0) {
    Rng rng(opts.seed + 99);
    train_intra(model, clips, intra_steps, j.value("intra_lambda", cc.lambda),
                opts.schedule.lr, opts.crop, rng);
    save_checkpoint(opts.checkpoint_out, model, 4, 0, &opt);
  }
  std::cout << "checkpoint written to " << opts.checkpoint_out << "\n";
  return 0;
}

int cmd_eval(const std::string& recon_dir, const std::string& ref,
             const std::string& metrics, const std::string& report,
             const std::string& size, const std::string& pattern) {
  const FrameSequence recon = load_image_sequence(recon_dir, pattern);
  const FrameSequence reference = load_input(ref, size, pattern, 0);
  if (recon.frames.size() != reference.frames.size()) {
    throw DataError("frame count mismatch: recon " +
                    std::to_string(recon.frames.size()) + ", ref " +
                    std::to_string(reference.frames.size()));
  }
  const bool want_psnr = metrics.find("psnr") != std::string::npos;
  const bool want_msssim = metrics.find("msssim") != std::string::npos;
  if (!want_psnr && !want_msssim) {
    throw ArgumentError("--metrics must include psnr and/or msssim");
  }

  nlohmann::json out;
  out["frames"] = nlohmann::json::array();
  double psnr_sum = 0.0, msssim_sum = 0.0;
  for (size_t i = 0; i < recon.frames.size(); ++i) {
    nlohmann::json f{{"frame", i}};
    if (want_psnr) {
      const double v = psnr(reference.frames[i], recon.frames[i]);
      f["psnr"] = v;
      psnr_sum += v;
    }
    if (want_msssim) {
      const double v = ms_ssim(reference.frames[i], recon.frames[i]);
      f["msssim"] = v;
      msssim_sum += v;
    }
    out["frames"].push_back(f);
  }
  const double n = static_cast<double>(recon.frames.size());
  if (want_psnr) out["mean_psnr"] = psnr_sum / n;
  if (want_msssim) out["mean_msssim"] = msssim_sum / n;

  if (report.empty()) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::ofstream of(report);
    if (!of) throw DataError("cannot open for writing: " + report);
    of << out.dump(2) << "\n";
    if (want_psnr) std::cout << "mean psnr " << psnr_sum / n << " dB\n";
    if (want_msssim) std::cout << "mean ms-ssim " << msssim_sum / n << "\n";
  }
  return 0;
}

int cmd_bdrate(const std::string& anchor_csv, const std::string& test_csv,
               const std::string& metric) {
  const auto anchors = curves_from_records(read_rd_csv(anchor_csv), metric);
  const auto tests = curves_from_records(read_rd_csv(test_csv), metric);
  bool any = false;
  for (const auto& a : anchors) {
    for (const auto& t : tests) {
      if (a.sequence != t.sequence) continue;
      any = true;
      std::cout << t.codec << " vs " << a.codec << " on " << a.sequence << ": "
                << bd_rate(a, t) << "%\n";
    }
  }
  if (!any) throw DataError("no matching sequences between the two csv files");
  return 0;
}

int cmd_demo_entropy(int alphabet, int trials, std::uint64_t seed) {
  if (alphabet < 2) throw ArgumentError("--alphabet must be >= 2");
  if (trials < 1) throw ArgumentError("--trials must be >= 1");
  Rng rng(seed);
  int violations = 0;
  double min_gap = 1e300, mean_gap = 0.0;
  for (int i = 0; i < trials; ++i) {
    const JointPmf j = random_joint_pmf(alphabet, rng);
    const EntropyGap g = entropy_gap(j);
    const double gap = g.h_residue - g.h_conditional;
    if (gap < -1e-12) ++violations;
    min_gap = std::min(min_gap, gap);
    mean_gap += gap / trials;
  }
  // The reference case: x and the prediction independent and uniform.
  JointPmf uni;
  uni.n = 4;
  uni.p.assign(16, 1.0 / 16.0);
  const EntropyGap gu = entropy_gap(uni);

  std::cout << "H(x - pred) >= H(x | pred) over " << trials
            << " random joint pmfs (alphabet " << alphabet << ")\n"
            << "  violations: " << violations << "\n"
            << "  min gap:    " << min_gap << " bits\n"
            << "  mean gap:   " << mean_gap << " bits\n"
            << "independent uniform over {0..3}: H_residue = " << gu.h_residue
            << " bits, H_conditional = " << gu.h_conditional << " bits\n";
  return violations == 0 ? 0 : 1;
}

int cmd_bench(const std::string& manifest_path,
              const std::vector<std::string>& checkpoints,
              const std::vector<std::string>& labels, const std::string& intra_name,
              const std::string& out_csv, const std::string& out_json) {
  const auto manifest = load_manifest(manifest_path);
  if (checkpoints.empty()) throw ConfigError("bench needs at least one --checkpoint");
  std::vector<VideoCodecModel> models;
  models.reserve(checkpoints.size());
  for (const auto& p : checkpoints) models.push_back(load_model(p));
  std::vector<BenchCodec> codecs;
  for (size_t i = 0; i < models.size(); ++i) {
    BenchCodec c;
    c.label = i < labels.size() ? labels[i] : "model" + std::to_string(i);
    c.model = &models[i];
    c.intra_id = intra_id_from_name(intra_name);
    codecs.push_back(c);
  }
  const BenchResult result = run_benchmark(manifest, codecs);
  write_bench_report(out_csv, out_json, result);
  for (const auto& r : result.records) {
    std::cout << r.codec << "," << r.sequence << ": bpp " << r.bpp << ", psnr "
              << r.psnr << "\n";
  }
  return 0;
}

int cmd_synth(const std::string& out, int width, int height, int frames,
              const std::string& kind, double dx, double dy, std::uint64_t seed) {
  FrameSequence seq;
  if (kind == "translate") {
    seq = make_translating_clip(width, height, frames, dx, dy, seed);
  } else if (kind == "static") {
    seq = make_static_clip(width, height, frames, seed);
  } else {
    throw ArgumentError("--kind must be translate or static");
  }
  if (fs::path(out).extension() == ".yuv") {
    save_yuv420(out, seq);
  } else {
    fs::create_directories(out);
    for (size_t i = 0; i < seq.frames.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%05zu.png", i);
      save_image((fs::path(out) / name).string(), seq.frames[i]);
    }
  }
  std::cout << "wrote " << frames << " synthetic frames to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional-coding video codec"};
  app.require_subcommand(1);

  auto* enc = app.add_subcommand("encode", "encode a video into a bitstream");
  std::string e_input, e_size, e_ckpt, e_entropy, e_condition, e_out,
      e_intra = "lossless-deflate", e_report;
  int e_gop = 10, e_ctxdim = 0, e_max = 0;
  enc->add_option("--input", e_input, "yuv file or image directory")->required();
  enc->add_option("--size", e_size, "WxH (raw yuv input only)");
  enc->add_option("--gop", e_gop, "GOP size (default 10)");
  enc->add_option("--checkpoint", e_ckpt, "model checkpoint")->required();
  enc->add_option("--entropy-mode", e_entropy, "assert checkpoint entropy mode");
  enc->add_option("--condition-mode", e_condition, "assert checkpoint condition mode");
  enc->add_option("--context-dim", e_ctxdim, "assert checkpoint context dim");
  enc->add_option("--out", e_out, "output bitstream path")->required();
  enc->add_option("--intra", e_intra, "intra codec (lossless-deflate | toy-hyperprior)");
  enc->add_option("--report", e_report, "per-frame rate report path (jsonl)");
  enc->add_option("--max-frames", e_max, "limit the number of coded frames");

  auto* dec = app.add_subcommand("decode", "decode a bitstream to frames");
  std::string d_in, d_ckpt, d_out, d_format = "png";
  dec->add_option("--in", d_in, "bitstream path")->required();
  dec->add_option("--checkpoint", d_ckpt, "model checkpoint")->required();
  dec->add_option("--out", d_out, "output directory")->required();
  dec->add_option("--format", d_format, "png or ppm");

  auto* trn = app.add_subcommand("train", "progressive training");
  std::string t_config, t_stage = "auto", t_resume;
  trn->add_option("--config", t_config, "train config json")->required();
  trn->add_option("--stage", t_stage, "1|2|3|4|auto");
  trn->add_option("--resume", t_resume, "checkpoint to resume from");

  auto* evl = app.add_subcommand("eval", "psnr / ms-ssim between two sequences");
  std::string v_recon, v_ref, v_metrics = "psnr,msssim", v_report, v_size,
      v_pattern = "*.png";
  evl->add_option("--recon", v_recon, "reconstruction directory")->required();
  evl->add_option("--ref", v_ref, "reference yuv file or image directory")->required();
  evl->add_option("--metrics", v_metrics, "comma list: psnr,msssim");
  evl->add_option("--report", v_report, "json report path");
  evl->add_option("--size", v_size, "WxH for raw yuv reference");
  evl->add_option("--pattern", v_pattern, "image glob (default *.png)");

  auto* bdr = app.add_subcommand("bdrate", "Bjontegaard delta rate between csv curves");
  std::string b_anchor, b_test, b_metric = "psnr";
  bdr->add_option("--anchor", b_anchor, "anchor csv")->required();
  bdr->add_option("--test", b_test, "test csv")->required();
  bdr->add_option("--metric", b_metric, "psnr or msssim");

  auto* dem =
      app.add_subcommand("demo-entropy", "residue vs conditional entropy demonstrator");
  int m_alphabet = 8, m_trials = 1000;
  std::uint64_t m_seed = 7;
  dem->add_option("--alphabet", m_alphabet, "alphabet size");
  dem->add_option("--trials", m_trials, "number of random joint pmfs");
  dem->add_option("--seed", m_seed, "rng seed");

  auto* ben = app.add_subcommand("bench", "RD benchmark over a dataset manifest");
  std::string n_manifest, n_intra = "lossless-deflate", n_csv = "bench.csv", n_json;
  std::vector<std::string> n_ckpts, n_labels;
  ben->add_option("--manifest", n_manifest, "dataset manifest json")->required();
  ben->add_option("--checkpoint", n_ckpts, "model checkpoint (repeatable)")->required();
  ben->add_option("--label", n_labels, "codec label per checkpoint");
  ben->add_option("--intra", n_intra, "intra codec");
  ben->add_option("--out-csv", n_csv, "RD csv output");
  ben->add_option("--out-json", n_json, "json report output");

  auto* syn = app.add_subcommand("synth", "generate synthetic test clips");
  std::string s_out, s_kind = "translate";
  int s_w = 64, s_h = 64, s_frames = 7;
  double s_dx = 2.0, s_dy = 0.0;
  std::uint64_t s_seed = 7;
  syn->add_option("--out", s_out, ".yuv path or image directory")->required();
  syn->add_option("--width", s_w, "frame width");
  syn->add_option("--height", s_h, "frame height");
  syn->add_option("--frames", s_frames, "frame count");
  syn->add_option("--kind", s_kind, "translate or static");
  syn->add_option("--dx", s_dx, "backward flow x (translate)");
  syn->add_option("--dy", s_dy, "backward flow y (translate)");
  syn->add_option("--seed", s_seed, "rng seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitArgument;
  }

  try {
    if (enc->parsed()) {
      return cmd_encode(e_input, e_size, e_gop, e_ckpt, e_entropy, e_condition,
                        e_ctxdim, e_out, e_intra, e_report, e_max);
    }
    if (dec->parsed()) return cmd_decode(d_in, d_ckpt, d_out, d_format);
    if (trn->parsed()) return cmd_train(t_config, t_stage, t_resume);
    if (evl->parsed()) {
      return cmd_eval(v_recon, v_ref, v_metrics, v_report, v_size, v_pattern);
    }
    if (bdr->parsed()) return cmd_bdrate(b_anchor, b_test, b_metric);
    if (dem->parsed()) return cmd_demo_entropy(m_alphabet, m_trials, m_seed);
    if (ben->parsed()) {
      return cmd_bench(n_manifest, n_ckpts, n_labels, n_intra, n_csv, n_json);
    }
    if (syn->parsed()) {
      return cmd_synth(s_out, s_w, s_h, s_frames, s_kind, s_dx, s_dy, s_seed);
    }
  } catch (const ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return kExitArgument;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
