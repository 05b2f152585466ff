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

#include "cvc/entropy.hpp"

#include <cmath>

namespace cvc {

namespace ag = cvc::ag;
using ag::Var;

// ---- Laplace interval model -------------------------------------------

double laplace_cdf(double x, double mu, double sigma) {
  const double t = x - mu;
  if (t >= 0.0) return 1.0 - 0.5 * std::exp(-t / sigma);
  return 0.5 * std::exp(t / sigma);
}

double laplace_interval_mass(double v, double mu, double sigma) {
  const double a = v - 0.5 - mu;
  const double b = v + 0.5 - mu;
  if (a >= 0.0) return 0.5 * std::exp(-a / sigma) * (-std::expm1(-1.0 / sigma));
  if (b <= 0.0) return 0.5 * std::exp(b / sigma) * (-std::expm1(-1.0 / sigma));
  return -0.5 * (std::expm1(-b / sigma) + std::expm1(a / sigma));
}

double laplace_interval_bits(double v, double mu, double sigma) {
  const double a = v - 0.5 - mu;
  const double b = v + 0.5 - mu;
  constexpr double kLn2 = 0.6931471805599453;
  if (a >= 0.0) {
    return (-std::log(0.5) + a / sigma - std::log(-std::expm1(-1.0 / sigma))) / kLn2;
  }
  if (b <= 0.0) {
    return (-std::log(0.5) - b / sigma - std::log(-std::expm1(-1.0 / sigma))) / kLn2;
  }
  const double m = -0.5 * (std::expm1(-b / sigma) + std::expm1(a / sigma));
  return -std::log2(std::max(m, 1e-300));
}

std::vector<double> laplace_mass_row(double mu, double sigma, int range_r) {
  if (!(sigma >= kSigmaMin)) {
    throw ArgumentError("laplace_mass: sigma below the minimum scale");
  }
  if (range_r < 0) throw ArgumentError("laplace_mass: negative range");
  std::vector<double> masses(static_cast<size_t>(2 * range_r + 1));
  if (range_r == 0) {
    masses[0] = 1.0;
    return masses;
  }
  // Interior symbols take exact interval masses; the edge symbols absorb
  // the tails so the row sums to 1 by construction.
  for (int k = -range_r + 1; k <= range_r - 1; ++k) {
    masses[static_cast<size_t>(k + range_r)] = laplace_interval_mass(k, mu, sigma);
  }
  masses.front() = laplace_cdf(-range_r + 0.5, mu, sigma);
  masses.back() = 1.0 - laplace_cdf(range_r - 0.5, mu, sigma);
  return masses;
}

ProbabilityTable laplace_mass(const EntropyParams& params, int range_r) {
  check_shape(params.mu.same_shape(params.sigma), "laplace_mass: mu/sigma mismatch");
  ProbabilityTable t;
  t.range_r = range_r;
  t.rows.reserve(static_cast<size_t>(params.mu.numel()));
  for (std::int64_t i = 0; i < params.mu.numel(); ++i) {
    t.rows.push_back(laplace_mass_row(params.mu[i], params.sigma[i], range_r));
  }
  return t;
}

double estimate_rate(const Tensor& symbols, const EntropyParams& params) {
  check_shape(symbols.same_shape(params.mu), "estimate_rate: shape mismatch");
  double bits = 0.0;
  for (std::int64_t i = 0; i < symbols.numel(); ++i) {
    const double s = symbols[i];
    if (s != std::round(s)) {
      throw ArgumentError("estimate_rate: symbols must be integer-valued");
    }
    if (!(params.sigma[i] >= kSigmaMin)) {
      throw ArgumentError("estimate_rate: sigma below the minimum scale");
    }
    bits += laplace_interval_bits(s, params.mu[i], params.sigma[i]);
  }
  return bits;
}

// ---- factorized model ---------------------------------------------------

namespace {
constexpr int kFactorDim = 3;

Var leaf_filled(std::vector<int> shape, double v) {
  return ag::leaf(Tensor(std::move(shape), v), true);
}

Var leaf_uniform(std::vector<int> shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return ag::leaf(std::move(t), true);
}

double softplus_inv(double y) { return std::log(std::expm1(y)); }
}  // namespace

FactorizedModel::FactorizedModel(int channels, Rng& rng) : channels_(channels) {
  // Matrices start at softplus^{-1}(1/(scale * fan_out)) with
  // scale = 10^(1/4), biases uniform in (-1/2, 1/2), factors at zero.
  const double scale = std::pow(10.0, 0.25);
  const double i_mid = softplus_inv(1.0 / (scale * kFactorDim));
  const double i_last = softplus_inv(1.0 / scale);
  h1_ = leaf_filled({channels, kFactorDim, 1}, i_mid);
  h2_ = leaf_filled({channels, kFactorDim, kFactorDim}, i_mid);
  h3_ = leaf_filled({channels, kFactorDim, kFactorDim}, i_mid);
  h4_ = leaf_filled({channels, 1, kFactorDim}, i_last);
  b1_ = leaf_uniform({channels, kFactorDim}, -0.5, 0.5, rng);
  b2_ = leaf_uniform({channels, kFactorDim}, -0.5, 0.5, rng);
  b3_ = leaf_uniform({channels, kFactorDim}, -0.5, 0.5, rng);
  b4_ = leaf_uniform({channels, 1}, -0.5, 0.5, rng);
  a1_ = leaf_filled({channels, kFactorDim}, 0.0);
  a2_ = leaf_filled({channels, kFactorDim}, 0.0);
  a3_ = leaf_filled({channels, kFactorDim}, 0.0);
}

Var FactorizedModel::logits(const Var& x) const {
  Var v = ag::cwise_linear(x, ag::softplus(h1_), b1_);
  v = ag::factor_step(v, a1_);
  v = ag::cwise_linear(v, ag::softplus(h2_), b2_);
  v = ag::factor_step(v, a2_);
  v = ag::cwise_linear(v, ag::softplus(h3_), b3_);
  v = ag::factor_step(v, a3_);
  return ag::cwise_linear(v, ag::softplus(h4_), b4_);
}

Var FactorizedModel::bits(const Var& values) const {
  check_shape(values->value.ndim() == 3 && values->value.dim(0) == channels_,
              "factorized bits: values must be [C,H,W]");
  const int h = values->value.dim(1), w = values->value.dim(2);
  Var flat = ag::reshape(values, {channels_, 1, h * w});
  Var upper = logits(ag::add_scalar(flat, 0.5));
  Var lower = logits(ag::add_scalar(flat, -0.5));
  Var bits = ag::logistic_mass_bits(upper, lower);
  return ag::reshape(bits, {channels_, h, w});
}

double FactorizedModel::cdf(int channel, double x) const {
  ag::NoGradGuard ng;
  Tensor t({channels_, 1, 1}, 0.0);
  t[channel] = x;
  Var l = logits(ag::constant(t));
  const double z = l->value[channel];
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<std::vector<double>> FactorizedModel::masses_all(int range_r) const {
  ag::NoGradGuard ng;
  const int grid = 2 * range_r;  // half-integer points -r+1/2 ... r-1/2
  std::vector<std::vector<double>> out(static_cast<size_t>(channels_));
  if (range_r == 0) {
    for (auto& row : out) row = {1.0};
    return out;
  }
  Tensor pts({channels_, 1, grid});
  for (int c = 0; c < channels_; ++c) {
    for (int i = 0; i < grid; ++i) {
      pts[static_cast<std::int64_t>(c) * grid + i] = -range_r + 0.5 + i;
    }
  }
  Var l = logits(ag::constant(pts));
  for (int c = 0; c < channels_; ++c) {
    std::vector<double> f(static_cast<size_t>(grid));
    for (int i = 0; i < grid; ++i) {
      const double z = l->value[static_cast<std::int64_t>(c) * grid + i];
      f[static_cast<size_t>(i)] =
          z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
    std::vector<double> masses(static_cast<size_t>(2 * range_r + 1));
    masses.front() = f.front();
    masses.back() = 1.0 - f.back();
    for (int k = -range_r + 1; k <= range_r - 1; ++k) {
      masses[static_cast<size_t>(k + range_r)] =
          f[static_cast<size_t>(k + range_r)] - f[static_cast<size_t>(k + range_r - 1)];
    }
    out[static_cast<size_t>(c)] = std::move(masses);
  }
  return out;
}

void FactorizedModel::collect(nn::ParamMap& out, const std::string& prefix) const {
  out[prefix + ".h1"] = h1_;
  out[prefix + ".h2"] = h2_;
  out[prefix + ".h3"] = h3_;
  out[prefix + ".h4"] = h4_;
  out[prefix + ".b1"] = b1_;
  out[prefix + ".b2"] = b2_;
  out[prefix + ".b3"] = b3_;
  out[prefix + ".b4"] = b4_;
  out[prefix + ".a1"] = a1_;
  out[prefix + ".a2"] = a2_;
  out[prefix + ".a3"] = a3_;
}

// ---- prior networks ------------------------------------------------------

HyperEncoder::HyperEncoder(int in_ch, int hidden, int z_ch, Rng& rng)
    : c1_(in_ch, hidden, 3, 1, rng),
      c2_(hidden, hidden, 5, 2, rng),
      c3_(hidden, z_ch, 5, 2, rng) {}

Var HyperEncoder::operator()(const Var& y) const {
  Var v = ag::leaky_relu(c1_(y), kLeakySlope);
  v = ag::leaky_relu(c2_(v), kLeakySlope);
  return c3_(v);
}

void HyperEncoder::collect(nn::ParamMap& out, const std::string& prefix) const {
  c1_.collect(out, prefix + ".conv1");
  c2_.collect(out, prefix + ".conv2");
  c3_.collect(out, prefix + ".conv3");
}

HyperDecoder::HyperDecoder(int z_ch, int hidden, int out_ch, Rng& rng)
    : u1_(z_ch, hidden, 5, 2, rng),
      u2_(hidden, out_ch, 5, 2, rng),
      c3_(out_ch, out_ch, 3, 1, rng) {}

Var HyperDecoder::operator()(const Var& z_hat) const {
  Var v = ag::leaky_relu(u1_(z_hat), kLeakySlope);
  v = ag::leaky_relu(u2_(v), kLeakySlope);
  return c3_(v);
}

void HyperDecoder::collect(nn::ParamMap& out, const std::string& prefix) const {
  u1_.collect(out, prefix + ".up1");
  u2_.collect(out, prefix + ".up2");
  c3_.collect(out, prefix + ".conv3");
}

TemporalPriorEncoder::TemporalPriorEncoder(int in_ch, int hidden, int out_ch, Rng& rng)
    : c1_(in_ch, hidden, 5, 2, rng),
      c2_(hidden, hidden, 5, 2, rng),
      c3_(hidden, hidden, 5, 2, rng),
      c4_(hidden, out_ch, 5, 2, rng),
      g1_(hidden, false, rng),
      g2_(hidden, false, rng),
      g3_(hidden, false, rng) {}

Var TemporalPriorEncoder::operator()(const Var& ctx) const {
  Var v = g1_(c1_(ctx));
  v = g2_(c2_(v));
  v = g3_(c3_(v));
  return c4_(v);
}

void TemporalPriorEncoder::collect(nn::ParamMap& out, const std::string& prefix) const {
  c1_.collect(out, prefix + ".conv1");
  c2_.collect(out, prefix + ".conv2");
  c3_.collect(out, prefix + ".conv3");
  c4_.collect(out, prefix + ".conv4");
  g1_.collect(out, prefix + ".gdn1");
  g2_.collect(out, prefix + ".gdn2");
  g3_.collect(out, prefix + ".gdn3");
}

PriorFusion::PriorFusion(int latent_ch, int hyper_feat_ch, int temporal_ch,
                         int spatial_ch, Rng& rng)
    : latent_ch_(latent_ch), temporal_ch_(temporal_ch), spatial_ch_(spatial_ch) {
  const int hidden = latent_ch;
  s1_ = nn::Conv2d(hyper_feat_ch + temporal_ch, hidden, 3, 1, rng);
  s2_ = nn::Conv2d(hidden + spatial_ch, hidden, 1, 1, rng);
  s3_ = nn::Conv2d(hidden, 2 * latent_ch, 1, 1, rng);
}

Var PriorFusion::stage1(const Var& hyper_feat, const Var* temporal_feat) const {
  Var in = hyper_feat;
  if (temporal_ch_ > 0) {
    if (temporal_feat == nullptr) {
      throw ConfigError("prior fusion: temporal prior required by mode");
    }
    in = ag::concat_ch({hyper_feat, *temporal_feat});
  } else if (temporal_feat != nullptr) {
    throw ConfigError("prior fusion: temporal prior not used by mode");
  }
  return ag::leaky_relu(s1_(in), kLeakySlope);
}

std::pair<Var, Var> PriorFusion::operator()(const Var& hyper_feat,
                                            const Var* temporal_feat,
                                            const Var* spatial_feat) const {
  Var a1 = stage1(hyper_feat, temporal_feat);
  Var in2 = a1;
  if (spatial_ch_ > 0) {
    if (spatial_feat == nullptr) {
      throw ConfigError("prior fusion: spatial prior required by mode");
    }
    in2 = ag::concat_ch({a1, *spatial_feat});
  } else if (spatial_feat != nullptr) {
    throw ConfigError("prior fusion: spatial prior not used by mode");
  }
  Var a2 = ag::leaky_relu(s2_(in2), kLeakySlope);
  Var out = s3_(a2);
  Var mu = ag::slice_ch(out, 0, latent_ch_);
  Var sigma =
      ag::add_scalar(ag::softplus(ag::slice_ch(out, latent_ch_, 2 * latent_ch_)),
                     kSigmaMin);
  return {mu, sigma};
}

void PriorFusion::collect(nn::ParamMap& out, const std::string& prefix) const {
  s1_.collect(out, prefix + ".stage1");
  s2_.collect(out, prefix + ".stage2");
  s3_.collect(out, prefix + ".stage3");
}

SpatialPrior::SpatialPrior(int latent_ch, int out_ch, Rng& rng)
    : conv_(latent_ch, out_ch, 5, rng) {}

Var SpatialPrior::operator()(const Var& y_hat) const { return conv_(y_hat); }

void SpatialPrior::collect(nn::ParamMap& out, const std::string& prefix) const {
  conv_.collect(out, prefix + ".conv");
}

// ---- sequential evaluation ----------------------------------------------

void SequentialFusion::params_at(const Tensor& y_hat, int py, int px, double* mu,
                                 double* sigma) const {
  const int m = fusion->latent_channels();
  const int h = y_hat.dim(1), w = y_hat.dim(2);

  // Strictly causal masked 5x5 taps at (py, px).
  const nn::MaskedConv2d& mc = spatial->conv();
  const Tensor& mw = mc.weight()->value;
  const Tensor& mb = mc.bias()->value;
  const Tensor& mask = mc.mask();
  const int k = mc.kernel();
  const int kc = k / 2;
  const int csp = mw.dim(0);
  const int cin = mw.dim(1);
  std::vector<double> spfeat(static_cast<size_t>(csp));
  for (int co = 0; co < csp; ++co) {
    double acc = mb[co];
    for (int ci = 0; ci < cin; ++ci) {
      for (int ky = 0; ky < k; ++ky) {
        const int iy = py + ky - kc;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = px + kx - kc;
          if (ix < 0 || ix >= w) continue;
          const std::int64_t wi =
              static_cast<std::int64_t>(((co * cin + ci) * k + ky) * k + kx);
          if (mask[wi] == 0.0) continue;
          acc += mw[wi] * y_hat.at(ci, iy, ix);
        }
      }
    }
    spfeat[static_cast<size_t>(co)] = acc;
  }

  // Stage 2: 1x1 over [stage1_act(:,py,px) || spfeat], leaky relu.
  const nn::Conv2d& c2 = fusion->stage2_conv();
  const Tensor& w2 = c2.weight()->value;
  const Tensor& b2 = c2.bias()->value;
  const int f1 = stage1_act.dim(0);
  const int c2out = w2.dim(0);
  const int c2in = w2.dim(1);
  if (c2in != f1 + csp) throw ContractError("sequential fusion: stage2 width");
  std::vector<double> a2(static_cast<size_t>(c2out));
  for (int co = 0; co < c2out; ++co) {
    double acc = b2[co];
    const std::int64_t base = static_cast<std::int64_t>(co) * c2in;
    for (int ci = 0; ci < f1; ++ci) acc += w2[base + ci] * stage1_act.at(ci, py, px);
    for (int ci = 0; ci < csp; ++ci) {
      acc += w2[base + f1 + ci] * spfeat[static_cast<size_t>(ci)];
    }
    a2[static_cast<size_t>(co)] = acc > 0.0 ? acc : kLeakySlope * acc;
  }

  // Stage 3: 1x1 to (mu, sigma_raw).
  const nn::Conv2d& c3 = fusion->stage3_conv();
  const Tensor& w3 = c3.weight()->value;
  const Tensor& b3 = c3.bias()->value;
  const int c3in = c3.weight()->value.dim(1);
  for (int c = 0; c < 2 * m; ++c) {
    double acc = b3[c];
    const std::int64_t base = static_cast<std::int64_t>(c) * c3in;
    for (int ci = 0; ci < c3in; ++ci) acc += w3[base + ci] * a2[static_cast<size_t>(ci)];
    if (c < m) {
      mu[c] = acc;
    } else {
      const double sp = acc > 30.0 ? acc : std::log1p(std::exp(acc));
      sigma[c - m] = kSigmaMin + sp;
    }
  }
}

double shannon_entropy_bits(const std::vector<double>& pmf) {
  double h = 0.0;
  for (double p : pmf) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

}  // namespace cvc
