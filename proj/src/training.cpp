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

#include "cvc/training.hpp"

#include <cmath>
#include <fstream>

#include "cvc/checkpoint.hpp"
#include "cvc/metrics.hpp"

namespace cvc {

namespace ag = cvc::ag;
using ag::Var;

namespace {

Var bits_to_bpp(const Var& total_bits, double pixels) {
  return ag::mul_scalar(total_bits, 1.0 / pixels);
}

Var distortion_term(const Var& x, const Var& rec, DistortionMetric metric) {
  if (metric == DistortionMetric::kMse) {
    return ag::mean_all(ag::square(ag::sub(x, rec)));
  }
  return ag::add_scalar(ag::neg(ms_ssim_var(rec, x)), 1.0);
}

}  // namespace

PipelineOutputs forward_train(const VideoCodecModel& model, const Tensor& ref_t,
                              const Tensor& cur_t, int stage, Rng& rng) {
  if (stage < 1 || stage > 4) throw ArgumentError("stage must be in 1..4");
  check_shape(ref_t.same_shape(cur_t), "forward_train: frame shape mismatch");
  check_shape(cur_t.dim(1) % kPadMultiple == 0 && cur_t.dim(2) % kPadMultiple == 0,
              "forward_train: frames must be multiples of 64 (crop upstream)");
  if (stage == 1 && !model.has_motion()) {
    throw ContractError("stage 1 requires the motion branch");
  }
  const double pixels = static_cast<double>(cur_t.dim(1)) * cur_t.dim(2);

  PipelineOutputs o;
  Var x = ag::constant(cur_t);
  Var ref = ag::constant(ref_t);

  const bool motion_grad = stage == 1 || stage == 4;
  Var m_hat;
  if (model.has_motion()) {
    const MotionCodec& mc = *model.motion;
    if (motion_grad) {
      Var flow = mc.flow(ref, x);
      Var g = mc.encoder(flow);
      Var g_noisy = ag::uniform_noise(g, rng);
      Var g_ste = ag::round_ste(g);
      Var s = mc.hyper_enc(g);
      Var s_noisy = ag::uniform_noise(s, rng);
      Var s_ste = ag::round_ste(s);
      Var hf = mc.hyper_dec(s_ste);
      Var sp = mc.spatial(g_ste);
      auto [mu, sigma] = mc.fusion(hf, nullptr, &sp);
      o.bpp_g = bits_to_bpp(ag::sum_all(ag::laplace_bits(g_noisy, mu, sigma)), pixels);
      o.bpp_s = bits_to_bpp(ag::sum_all(mc.factorized_s.bits(s_noisy)), pixels);
      m_hat = mc.decoder(g_ste);
    } else {
      // MV generation is frozen at stages 2 and 3; the decoded motion is a
      // constant input to the rest of the graph.
      ag::NoGradGuard ng;
      Var flow = mc.flow(ref, x);
      Var g_ste = ag::round_ste(mc.encoder(flow));
      m_hat = ag::constant(mc.decoder(g_ste)->value);
    }
  }

  if (stage == 1) {
    o.x_warp = ag::warp_bilinear(ref, m_hat);
    return o;
  }

  // Condition: learned context or the pixel prediction.
  Var cond, tp_src;
  if (model.config.condition_mode == ConditionMode::kContextFeature) {
    cond = generate_context(ref, model.has_motion() ? &m_hat : nullptr, *model.fe,
                            *model.cr, model.config.motion_mode);
    tp_src = cond;
  } else {
    cond = model.has_motion() ? ag::warp_bilinear(ref, m_hat) : ref;
    tp_src = cond;
  }

  Var in = assemble_encoder_input(model.config, x, cond);
  Var y = model.enc(in);
  Var y_ste = ag::round_ste(y);
  o.x_hat = reconstruct_frame(model, y_ste, cond);

  if (stage >= 3) {
    Var y_noisy = ag::uniform_noise(y, rng);
    Var z = model.hyper_enc(y);
    Var z_noisy = ag::uniform_noise(z, rng);
    Var z_ste = ag::round_ste(z);
    Var hyper_feat = model.hyper_dec(z_ste);
    std::optional<Var> tp;
    if (model.config.uses_temporal_prior()) tp = (*model.tpe)(tp_src);
    std::optional<Var> sp;
    if (model.config.uses_spatial_prior()) sp = (*model.spatial)(y_ste);
    auto [mu, sigma] =
        model.fusion(hyper_feat, tp ? &*tp : nullptr, sp ? &*sp : nullptr);
    o.bpp_y = bits_to_bpp(ag::sum_all(ag::laplace_bits(y_noisy, mu, sigma)), pixels);
    o.bpp_z = bits_to_bpp(ag::sum_all(model.factorized_z.bits(z_noisy)), pixels);
  }
  return o;
}

StageLoss compute_loss(int stage, const Var& x, const PipelineOutputs& outs,
                       double lambda, DistortionMetric metric) {
  if (stage < 1 || stage > 4) throw ArgumentError("stage must be in 1..4");
  if (!(lambda > 0.0)) throw ArgumentError("lambda must be positive");

  StageLoss out;
  out.breakdown.stage = stage;
  out.breakdown.lambda = lambda;

  Var d;
  if (stage == 1) {
    if (!outs.x_warp) throw ContractError("stage 1 loss needs the warped frame");
    d = distortion_term(x, outs.x_warp, metric);
  } else {
    if (!outs.x_hat) throw ContractError("stage loss needs the reconstruction");
    d = distortion_term(x, outs.x_hat, metric);
  }
  Var total = ag::mul_scalar(d, lambda);

  auto add_rate = [&total](const Var& r, const char* which) {
    if (!r) throw ContractError(std::string("stage loss needs rate term ") + which);
    total = ag::add(total, r);
  };
  if (stage == 1 || stage == 4) {
    add_rate(outs.bpp_g, "R_g");
    add_rate(outs.bpp_s, "R_s");
    out.breakdown.bpp_g = outs.bpp_g->value[0];
    out.breakdown.bpp_s = outs.bpp_s->value[0];
  }
  if (stage >= 3) {
    add_rate(outs.bpp_y, "R_y");
    add_rate(outs.bpp_z, "R_z");
    out.breakdown.bpp_y = outs.bpp_y->value[0];
    out.breakdown.bpp_z = outs.bpp_z->value[0];
  }
  out.breakdown.distortion = d->value[0];
  out.breakdown.total = total->value[0];
  out.total = total;
  return out;
}

bool is_frozen(const std::string& name, const std::set<std::string>& prefixes) {
  for (const auto& p : prefixes) {
    if (name.rfind(p, 0) == 0) return true;
  }
  return false;
}

void Adam::step(nn::ParamMap& params, const std::set<std::string>& frozen_prefixes) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    if (is_frozen(name, frozen_prefixes)) continue;
    if (!p->grad_ready) continue;
    Tensor& m = m_.try_emplace(name, Tensor::zeros_like(p->value)).first->second;
    Tensor& v = v_.try_emplace(name, Tensor::zeros_like(p->value)).first->second;
    for (std::int64_t i = 0; i < p->value.numel(); ++i) {
      const double g = p->grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      p->value[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
  }
}

std::set<std::string> frozen_prefixes_for_stage(int stage) {
  switch (stage) {
    case 1: return {"main.", "intra"};
    case 2:
    case 3: return {"motion.", "intra"};
    case 4: return {"intra"};
    default: throw ArgumentError("stage must be in 1..4");
  }
}

namespace {

struct SamplePair {
  Tensor ref, cur;
};

SamplePair sample_pair(const std::vector<FrameSequence>& clips, int crop, Rng& rng) {
  if (clips.empty()) throw ArgumentError("training needs at least one clip");
  const FrameSequence& clip =
      clips[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(clips.size()) - 1))];
  if (clip.frames.size() < 2) {
    throw ArgumentError("training clips need at least two frames");
  }
  const int t = rng.uniform_int(1, static_cast<int>(clip.frames.size()) - 1);
  const Tensor& ref = clip.frames[static_cast<size_t>(t - 1)];
  const Tensor& cur = clip.frames[static_cast<size_t>(t)];

  const int h = ref.dim(1), w = ref.dim(2);
  int ch = std::min(crop, h), cw = std::min(crop, w);
  ch -= ch % kPadMultiple;
  cw -= cw % kPadMultiple;
  if (ch < kPadMultiple || cw < kPadMultiple) {
    // Frame smaller than one padding block: mirror-pad it up instead.
    return {pad_to_multiple(ref, kPadMultiple), pad_to_multiple(cur, kPadMultiple)};
  }
  const int oy = h == ch ? 0 : rng.uniform_int(0, h - ch);
  const int ox = w == cw ? 0 : rng.uniform_int(0, w - cw);
  SamplePair out{Tensor({3, ch, cw}), Tensor({3, ch, cw})};
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < ch; ++y) {
      for (int x = 0; x < cw; ++x) {
        out.ref.at(c, y, x) = ref.at(c, oy + y, ox + x);
        out.cur.at(c, y, x) = cur.at(c, oy + y, ox + x);
      }
    }
  }
  return out;
}

void log_step(std::ofstream* log, int stage, int step, const LossBreakdown& b) {
  if (log == nullptr || !log->is_open()) return;
  (*log) << "{\"stage\":" << stage << ",\"step\":" << step << ",\"loss\":" << b.total
         << ",\"distortion\":" << b.distortion << ",\"bpp_y\":" << b.bpp_y
         << ",\"bpp_z\":" << b.bpp_z << ",\"bpp_g\":" << b.bpp_g
         << ",\"bpp_s\":" << b.bpp_s << "}\n";
}

}  // namespace

std::vector<double> train_steps(VideoCodecModel& model,
                                const std::vector<FrameSequence>& clips, int stage,
                                int steps, Adam& opt,
                                const std::set<std::string>& frozen,
                                const TrainOptions& opts, Rng& rng,
                                const StepCallback& callback) {
  nn::ParamMap params = model.parameters();
  std::ofstream log;
  if (!opts.log_path.empty()) log.open(opts.log_path, std::ios::app);

  std::vector<double> losses;
  losses.reserve(static_cast<size_t>(steps));
  for (int step = 0; step < steps; ++step) {
    nn::zero_grads(params);
    LossBreakdown mean_bd;
    double total = 0.0;
    for (int b = 0; b < opts.batch_size; ++b) {
      const SamplePair pair = sample_pair(clips, opts.crop, rng);
      PipelineOutputs outs = forward_train(model, pair.ref, pair.cur, stage, rng);
      StageLoss loss = compute_loss(stage, ag::constant(pair.cur), outs,
                                    model.config.lambda,
                                    model.config.distortion_metric);
      // Average over the batch by scaling each sample's contribution.
      Var scaled = ag::mul_scalar(loss.total, 1.0 / opts.batch_size);
      ag::backward(scaled);
      total += loss.breakdown.total / opts.batch_size;
      mean_bd.distortion += loss.breakdown.distortion / opts.batch_size;
      mean_bd.bpp_y += loss.breakdown.bpp_y / opts.batch_size;
      mean_bd.bpp_z += loss.breakdown.bpp_z / opts.batch_size;
      mean_bd.bpp_g += loss.breakdown.bpp_g / opts.batch_size;
      mean_bd.bpp_s += loss.breakdown.bpp_s / opts.batch_size;
    }
    mean_bd.stage = stage;
    mean_bd.lambda = model.config.lambda;
    mean_bd.total = total;

    if (!std::isfinite(total)) {
      if (!opts.checkpoint_out.empty()) {
        save_checkpoint(opts.checkpoint_out + ".nan-dump", model, stage, step, &opt);
      }
      throw DataError("non-finite loss at stage " + std::to_string(stage) +
                      " step " + std::to_string(step) +
                      (opts.checkpoint_out.empty() ? ""
                                                   : "; snapshot written to " +
                                                         opts.checkpoint_out +
                                                         ".nan-dump"));
    }
    opt.step(params, frozen);
    losses.push_back(total);
    log_step(log.is_open() ? &log : nullptr, stage, step, mean_bd);
    if (callback) callback(stage, step, mean_bd);
  }
  return losses;
}

TrainResult train_progressive(VideoCodecModel& model,
                              const std::vector<FrameSequence>& clips,
                              const TrainOptions& opts,
                              const StepCallback& callback) {
  Rng rng(opts.seed);
  Adam opt(opts.schedule.lr);
  TrainResult result;
  for (int stage = 1; stage <= 4; ++stage) {
    if (stage == 1 && !model.has_motion()) continue;
    opt.set_lr(stage == 4 ? opts.schedule.lr_finetune : opts.schedule.lr);
    const int steps = opts.schedule.steps[static_cast<size_t>(stage - 1)];
    result.stage_losses[static_cast<size_t>(stage - 1)] =
        train_steps(model, clips, stage, steps, opt, frozen_prefixes_for_stage(stage),
                    opts, rng, callback);
    if (!opts.checkpoint_out.empty()) {
      save_checkpoint(opts.checkpoint_out, model, stage, steps, &opt);
    }
  }
  return result;
}

std::vector<double> train_intra(VideoCodecModel& model,
                                const std::vector<FrameSequence>& clips, int steps,
                                double lambda, double lr, int crop, Rng& rng) {
  nn::ParamMap params = model.parameters();
  Adam opt(lr);
  const std::set<std::string> frozen = {"motion.", "main."};
  const IntraModel& im = model.intra;

  std::vector<double> losses;
  for (int step = 0; step < steps; ++step) {
    nn::zero_grads(params);
    const SamplePair pair = sample_pair(clips, crop, rng);
    const double pixels = static_cast<double>(pair.cur.dim(1)) * pair.cur.dim(2);
    Var x = ag::constant(pair.cur);
    Var y = im.enc(x);
    Var y_noisy = ag::uniform_noise(y, rng);
    Var y_ste = ag::round_ste(y);
    Var z = im.hyper_enc(y);
    Var z_noisy = ag::uniform_noise(z, rng);
    Var z_ste = ag::round_ste(z);
    Var hf = im.hyper_dec(z_ste);
    auto [mu, sigma] = im.fusion(hf, nullptr, nullptr);
    Var bpp_y = bits_to_bpp(ag::sum_all(ag::laplace_bits(y_noisy, mu, sigma)), pixels);
    Var bpp_z = bits_to_bpp(ag::sum_all(im.factorized_z.bits(z_noisy)), pixels);
    Var rec = ag::clamp_ste(im.head(im.dec(y_ste), nullptr), 0.0, 1.0);
    Var d = ag::mean_all(ag::square(ag::sub(x, rec)));
    Var total = ag::add(ag::add(ag::mul_scalar(d, lambda), bpp_y), bpp_z);
    if (!std::isfinite(total->value[0])) {
      throw DataError("non-finite intra loss at step " + std::to_string(step));
    }
    ag::backward(total);
    opt.step(params, frozen);
    losses.push_back(total->value[0]);
  }
  return losses;
}

}  // namespace cvc
