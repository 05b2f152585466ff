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

#pragma once

#include <string>
#include <vector>

#include "cvc/autograd.hpp"

namespace cvc {

// PSNR on [0,1]-scaled RGB, capped at 100 dB for identical frames.
constexpr double kPsnrCap = 100.0;
double psnr(const Tensor& a, const Tensor& b);

// 5-scale MS-SSIM with an 11-tap Gaussian window (sigma 1.5) and the
// standard scale weights. Requires min(H, W) >= 160.
constexpr int kMsSsimMinSize = 160;
double ms_ssim(const Tensor& a, const Tensor& b);

// Differentiable variant used as a training distortion; valid-region
// windows, so it needs min(H, W) >= 176 and dims divisible by 16.
ag::Var ms_ssim_var(const ag::Var& a, const ag::Var& b);

// ---- rate-distortion curves ----------------------------------------------

struct RDPoint {
  double bpp = 0.0;
  double quality = 0.0;  // PSNR dB or MS-SSIM
};

struct RDCurve {
  std::string codec;
  std::string sequence;
  std::vector<RDPoint> points;  // strictly increasing bpp
};

// Bjontegaard delta rate in percent: cubic fit of log10(bpp) against
// quality, integrated over the overlapping quality range; falls back to a
// monotone piecewise-cubic interpolant when the cubic is non-monotone.
// Negative means the test codec saves bitrate.
double bd_rate(const RDCurve& anchor, const RDCurve& test);

// ---- conditional-vs-residue entropy demonstrator --------------------------

// Joint distribution of (x, x_pred) over the alphabet {0..n-1}^2, row-major
// p[x * n + x_pred].
struct JointPmf {
  int n = 0;
  std::vector<double> p;

  void validate() const;
};

struct EntropyGap {
  double h_residue = 0.0;      // H(x - x_pred)
  double h_conditional = 0.0;  // H(x | x_pred)
};

EntropyGap entropy_gap(const JointPmf& joint);

JointPmf random_joint_pmf(int n, Rng& rng);

// ---- RD CSV (codec,sequence,lambda,bpp,psnr,msssim) -----------------------

struct RDRecord {
  std::string codec;
  std::string sequence;
  double lambda = 0.0;
  double bpp = 0.0;
  double psnr = 0.0;
  double msssim = 0.0;
};

void write_rd_csv(const std::string& path, const std::vector<RDRecord>& rows);
std::vector<RDRecord> read_rd_csv(const std::string& path);

// Groups CSV rows into per-(codec, sequence) curves sorted by bpp, using
// the chosen quality column ("psnr" or "msssim").
std::vector<RDCurve> curves_from_records(const std::vector<RDRecord>& rows,
                                         const std::string& quality_metric);

}  // namespace cvc
