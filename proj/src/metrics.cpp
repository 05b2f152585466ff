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

#include "cvc/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cvc {

namespace ag = cvc::ag;
using ag::Var;

// ---- PSNR -----------------------------------------------------------------

double psnr(const Tensor& a, const Tensor& b) {
  check_shape(a.same_shape(b), "psnr: shape mismatch");
  double mse = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

// ---- MS-SSIM ----------------------------------------------------------------

namespace {

constexpr int kWin = 11;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;
constexpr double kMsWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

std::vector<double> gaussian_kernel() {
  std::vector<double> k(kWin);
  const double sigma = 1.5;
  double sum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2.0;
    k[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[static_cast<size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n - 2;
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

// Separable reflect-padded Gaussian blur of one [H,W] plane.
void blur_plane(const std::vector<double>& in, int h, int w,
                const std::vector<double>& k, std::vector<double>& tmp,
                std::vector<double>& out) {
  const int half = kWin / 2;
  tmp.resize(in.size());
  out.resize(in.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWin; ++i) {
        s += k[static_cast<size_t>(i)] *
             in[static_cast<size_t>(y) * w + mirror(x + i - half, w)];
      }
      tmp[static_cast<size_t>(y) * w + x] = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWin; ++i) {
        s += k[static_cast<size_t>(i)] *
             tmp[static_cast<size_t>(mirror(y + i - half, h)) * w + x];
      }
      out[static_cast<size_t>(y) * w + x] = s;
    }
  }
}

struct ScaleStats {
  double mean_cs = 0.0;
  double mean_ssim = 0.0;
};

ScaleStats ssim_scale(const std::vector<std::vector<double>>& a,
                      const std::vector<std::vector<double>>& b, int h, int w,
                      const std::vector<double>& kernel) {
  std::vector<double> tmp, mu1, mu2, m11, m22, m12, sq(static_cast<size_t>(h) * w);
  double cs_sum = 0.0, ssim_sum = 0.0;
  for (size_t c = 0; c < a.size(); ++c) {
    blur_plane(a[c], h, w, kernel, tmp, mu1);
    blur_plane(b[c], h, w, kernel, tmp, mu2);
    for (size_t i = 0; i < sq.size(); ++i) sq[i] = a[c][i] * a[c][i];
    blur_plane(sq, h, w, kernel, tmp, m11);
    for (size_t i = 0; i < sq.size(); ++i) sq[i] = b[c][i] * b[c][i];
    blur_plane(sq, h, w, kernel, tmp, m22);
    for (size_t i = 0; i < sq.size(); ++i) sq[i] = a[c][i] * b[c][i];
    blur_plane(sq, h, w, kernel, tmp, m12);
    for (size_t i = 0; i < sq.size(); ++i) {
      const double s11 = m11[i] - mu1[i] * mu1[i];
      const double s22 = m22[i] - mu2[i] * mu2[i];
      const double s12 = m12[i] - mu1[i] * mu2[i];
      const double cs = (2.0 * s12 + kSsimC2) / (s11 + s22 + kSsimC2);
      const double l =
          (2.0 * mu1[i] * mu2[i] + kSsimC1) / (mu1[i] * mu1[i] + mu2[i] * mu2[i] + kSsimC1);
      cs_sum += cs;
      ssim_sum += l * cs;
    }
  }
  const double n = static_cast<double>(a.size()) * h * w;
  return {cs_sum / n, ssim_sum / n};
}

// 2x2 average pooling with stride w; an odd trailing row/column is dropped.
void downsample2(std::vector<std::vector<double>>& planes, int h, int w) {
  const int nh = h / 2, nw = w / 2;
  for (auto& p : planes) {
    std::vector<double> out(static_cast<size_t>(nh) * nw);
    for (int y = 0; y < nh; ++y) {
      for (int x = 0; x < nw; ++x) {
        out[static_cast<size_t>(y) * nw + x] =
            0.25 * (p[static_cast<size_t>(2 * y) * w + 2 * x] +
                    p[static_cast<size_t>(2 * y) * w + 2 * x + 1] +
                    p[static_cast<size_t>(2 * y + 1) * w + 2 * x] +
                    p[static_cast<size_t>(2 * y + 1) * w + 2 * x + 1]);
      }
    }
    p = std::move(out);
  }
}

}  // namespace

double ms_ssim(const Tensor& a, const Tensor& b) {
  check_shape(a.same_shape(b), "ms_ssim: shape mismatch");
  check_shape(a.ndim() == 3, "ms_ssim: need [C,H,W]");
  int h = a.dim(1), w = a.dim(2);
  if (std::min(h, w) < kMsSsimMinSize) {
    throw ArgumentError("ms_ssim: frames must be at least " +
                        std::to_string(kMsSsimMinSize) +
                        " pixels on the short side for 5 dyadic scales");
  }
  const int c = a.dim(0);
  std::vector<std::vector<double>> pa(static_cast<size_t>(c)), pb(static_cast<size_t>(c));
  for (int ci = 0; ci < c; ++ci) {
    pa[static_cast<size_t>(ci)].assign(a.data() + static_cast<std::int64_t>(ci) * h * w,
                                       a.data() + static_cast<std::int64_t>(ci + 1) * h * w);
    pb[static_cast<size_t>(ci)].assign(b.data() + static_cast<std::int64_t>(ci) * h * w,
                                       b.data() + static_cast<std::int64_t>(ci + 1) * h * w);
  }
  const auto kernel = gaussian_kernel();
  double score = 1.0;
  for (int scale = 0; scale < 5; ++scale) {
    const ScaleStats st = ssim_scale(pa, pb, h, w, kernel);
    const double v = scale < 4 ? st.mean_cs : st.mean_ssim;
    score *= std::pow(std::max(v, 1e-9), kMsWeights[scale]);
    if (scale < 4) {
      downsample2(pa, h, w);
      downsample2(pb, h, w);
      h /= 2;
      w /= 2;
    }
  }
  return score;
}

// ---- differentiable MS-SSIM -------------------------------------------------

namespace {

Var gauss_blur_var(const Var& x, const Var& weight) {
  return ag::conv2d(x, weight, nullptr, 1, kWin / 2);
}

}  // namespace

Var ms_ssim_var(const Var& a, const Var& b) {
  check_shape(a->value.same_shape(b->value), "ms_ssim_var: shape mismatch");
  const int c = a->value.dim(0);
  int h = a->value.dim(1), w = a->value.dim(2);
  if (std::min(h, w) < 176 || h % 16 != 0 || w % 16 != 0) {
    throw ArgumentError(
        "ms_ssim_var: needs min(H,W) >= 176 with dims divisible by 16");
  }
  // Per-channel Gaussian as a block-diagonal convolution weight.
  const auto kernel = gaussian_kernel();
  Tensor wt({c, c, kWin, kWin}, 0.0);
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < kWin; ++ky) {
      for (int kx = 0; kx < kWin; ++kx) {
        wt[static_cast<std::int64_t>(((ci * c + ci) * kWin + ky) * kWin + kx)] =
            kernel[static_cast<size_t>(ky)] * kernel[static_cast<size_t>(kx)];
      }
    }
  }
  Var gw = ag::constant(wt);

  Var xa = a, xb = b;
  Var score;
  for (int scale = 0; scale < 5; ++scale) {
    Var mu1 = gauss_blur_var(xa, gw);
    Var mu2 = gauss_blur_var(xb, gw);
    Var s11 = ag::sub(gauss_blur_var(ag::mul(xa, xa), gw), ag::mul(mu1, mu1));
    Var s22 = ag::sub(gauss_blur_var(ag::mul(xb, xb), gw), ag::mul(mu2, mu2));
    Var s12 = ag::sub(gauss_blur_var(ag::mul(xa, xb), gw), ag::mul(mu1, mu2));
    Var cs_num = ag::add_scalar(ag::mul_scalar(s12, 2.0), kSsimC2);
    Var cs_den = ag::add_scalar(ag::add(s11, s22), kSsimC2);
    Var cs = ag::mean_all(ag::mul(cs_num, ag::pow_scalar(cs_den, -1.0)));
    Var term;
    if (scale < 4) {
      term = cs;
    } else {
      Var l_num = ag::add_scalar(ag::mul_scalar(ag::mul(mu1, mu2), 2.0), kSsimC1);
      Var l_den =
          ag::add_scalar(ag::add(ag::mul(mu1, mu1), ag::mul(mu2, mu2)), kSsimC1);
      Var l = ag::mean_all(ag::mul(l_num, ag::pow_scalar(l_den, -1.0)));
      term = ag::mul(cs, l);
    }
    term = ag::pow_scalar(ag::clamp_ste(term, 1e-9, 2.0),
                          kMsWeights[scale]);
    score = scale == 0 ? term : ag::mul(score, term);
    if (scale < 4) {
      xa = ag::avg_pool2(xa);
      xb = ag::avg_pool2(xb);
    }
  }
  return score;
}

// ---- BD-rate ----------------------------------------------------------------

namespace {

struct FitData {
  std::vector<double> q;     // quality, strictly increasing
  std::vector<double> logr;  // log10 bpp
};

FitData prepare_curve(const RDCurve& curve) {
  if (curve.points.size() < 4) {
    throw ArgumentError("bd_rate: curves need at least 4 points (" + curve.codec +
                        "/" + curve.sequence + ")");
  }
  for (size_t i = 1; i < curve.points.size(); ++i) {
    if (!(curve.points[i].bpp > curve.points[i - 1].bpp)) {
      throw ArgumentError("bd_rate: bpp must be strictly increasing");
    }
  }
  FitData d;
  std::vector<RDPoint> pts = curve.points;
  std::sort(pts.begin(), pts.end(),
            [](const RDPoint& a, const RDPoint& b) { return a.quality < b.quality; });
  for (size_t i = 0; i < pts.size(); ++i) {
    if (!(pts[i].bpp > 0.0)) throw ArgumentError("bd_rate: bpp must be positive");
    if (i > 0 && !(pts[i].quality > d.q.back())) {
      throw ArgumentError("bd_rate: duplicate or non-increasing quality values");
    }
    d.q.push_back(pts[i].quality);
    d.logr.push_back(std::log10(pts[i].bpp));
  }
  return d;
}

std::array<double, 4> fit_cubic(const FitData& d) {
  const int n = static_cast<int>(d.q.size());
  Eigen::MatrixXd A(n, 4);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const double q = d.q[static_cast<size_t>(i)];
    A(i, 0) = 1.0;
    A(i, 1) = q;
    A(i, 2) = q * q;
    A(i, 3) = q * q * q;
    y(i) = d.logr[static_cast<size_t>(i)];
  }
  Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
  return {c(0), c(1), c(2), c(3)};
}

bool cubic_monotone_on(const std::array<double, 4>& c, double lo, double hi) {
  for (int i = 0; i <= 1000; ++i) {
    const double q = lo + (hi - lo) * i / 1000.0;
    const double dq = c[1] + 2.0 * c[2] * q + 3.0 * c[3] * q * q;
    if (dq < 0.0) return false;
  }
  return true;
}

double cubic_integral(const std::array<double, 4>& c, double lo, double hi) {
  auto F = [&](double q) {
    return c[0] * q + c[1] * q * q / 2.0 + c[2] * q * q * q / 3.0 +
           c[3] * q * q * q * q / 4.0;
  };
  return F(hi) - F(lo);
}

// Fritsch-Carlson monotone slopes.
std::vector<double> pchip_slopes(const std::vector<double>& x,
                                 const std::vector<double>& y) {
  const size_t n = x.size();
  std::vector<double> h(n - 1), delta(n - 1), m(n);
  for (size_t i = 0; i + 1 < n; ++i) {
    h[i] = x[i + 1] - x[i];
    delta[i] = (y[i + 1] - y[i]) / h[i];
  }
  m[0] = delta[0];
  m[n - 1] = delta[n - 2];
  for (size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] <= 0.0) {
      m[i] = 0.0;
    } else {
      const double w1 = 2.0 * h[i] + h[i - 1];
      const double w2 = h[i] + 2.0 * h[i - 1];
      m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  for (size_t i = 0; i + 1 < n; ++i) {
    if (delta[i] == 0.0) {
      m[i] = 0.0;
      m[i + 1] = 0.0;
    }
  }
  return m;
}

// Integral of the PCHIP interpolant over [lo, hi] (inside the data range).
double pchip_integral(const std::vector<double>& x, const std::vector<double>& y,
                      double lo, double hi) {
  const std::vector<double> m = pchip_slopes(x, y);
  double acc = 0.0;
  for (size_t i = 0; i + 1 < x.size(); ++i) {
    const double a = std::max(lo, x[i]);
    const double b = std::min(hi, x[i + 1]);
    if (b <= a) continue;
    const double h = x[i + 1] - x[i];
    // Local cubic in s = q - x[i]:
    //   p(s) = y_i + m_i s + c2 s^2 + c3 s^3
    const double d = (y[i + 1] - y[i]) / h;
    const double c2 = (3.0 * d - 2.0 * m[i] - m[i + 1]) / h;
    const double c3 = (m[i] + m[i + 1] - 2.0 * d) / (h * h);
    auto F = [&](double q) {
      const double s = q - x[i];
      return y[i] * s + m[i] * s * s / 2.0 + c2 * s * s * s / 3.0 +
             c3 * s * s * s * s / 4.0;
    };
    acc += F(b) - F(a);
  }
  return acc;
}

double curve_integral(const FitData& d, double lo, double hi) {
  const auto cubic = fit_cubic(d);
  if (cubic_monotone_on(cubic, lo, hi)) return cubic_integral(cubic, lo, hi);
  return pchip_integral(d.q, d.logr, lo, hi);
}

}  // namespace

double bd_rate(const RDCurve& anchor, const RDCurve& test) {
  const FitData da = prepare_curve(anchor);
  const FitData dt = prepare_curve(test);
  const double lo = std::max(da.q.front(), dt.q.front());
  const double hi = std::min(da.q.back(), dt.q.back());
  if (!(hi > lo)) {
    throw DataError("bd_rate: quality ranges do not overlap");
  }
  const double avg_diff =
      (curve_integral(dt, lo, hi) - curve_integral(da, lo, hi)) / (hi - lo);
  return (std::pow(10.0, avg_diff) - 1.0) * 100.0;
}

// ---- entropy demonstrator -----------------------------------------------------

void JointPmf::validate() const {
  if (n < 1 || p.size() != static_cast<size_t>(n) * n) {
    throw ArgumentError("joint pmf must be n*n, n >= 1");
  }
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ArgumentError("joint pmf entries must be nonnegative");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-9) {
    throw ArgumentError("joint pmf must sum to 1");
  }
}

EntropyGap entropy_gap(const JointPmf& joint) {
  joint.validate();
  const int n = joint.n;

  // Distribution of the difference d = x - x_pred.
  std::vector<double> pdiff(static_cast<size_t>(2 * n - 1), 0.0);
  std::vector<double> ppred(static_cast<size_t>(n), 0.0);
  for (int x = 0; x < n; ++x) {
    for (int xp = 0; xp < n; ++xp) {
      const double pv = joint.p[static_cast<size_t>(x) * n + xp];
      pdiff[static_cast<size_t>(x - xp + n - 1)] += pv;
      ppred[static_cast<size_t>(xp)] += pv;
    }
  }
  EntropyGap out;
  for (double pv : pdiff) {
    if (pv > 0.0) out.h_residue -= pv * std::log2(pv);
  }
  // H(x | x_pred) = -sum p(x, xp) log2 p(x | xp)
  for (int x = 0; x < n; ++x) {
    for (int xp = 0; xp < n; ++xp) {
      const double pv = joint.p[static_cast<size_t>(x) * n + xp];
      if (pv > 0.0) {
        out.h_conditional -= pv * std::log2(pv / ppred[static_cast<size_t>(xp)]);
      }
    }
  }
  return out;
}

JointPmf random_joint_pmf(int n, Rng& rng) {
  JointPmf j;
  j.n = n;
  j.p.resize(static_cast<size_t>(n) * n);
  double sum = 0.0;
  for (double& v : j.p) {
    v = -std::log(rng.uniform(1e-12, 1.0));  // exponential draws
    sum += v;
  }
  for (double& v : j.p) v /= sum;
  return j;
}

// ---- RD CSV --------------------------------------------------------------------

void write_rd_csv(const std::string& path, const std::vector<RDRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "codec,sequence,lambda,bpp,psnr,msssim\n";
  out.precision(10);
  for (const auto& r : rows) {
    if (r.codec.find(',') != std::string::npos ||
        r.sequence.find(',') != std::string::npos) {
      throw ArgumentError("csv labels must not contain commas");
    }
    out << r.codec << "," << r.sequence << "," << r.lambda << "," << r.bpp << ","
        << r.psnr << "," << r.msssim << "\n";
  }
}

std::vector<RDRecord> read_rd_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty csv: " + path);
  std::vector<RDRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 6) throw DataError("malformed csv row: " + line);
    RDRecord r;
    r.codec = fields[0];
    r.sequence = fields[1];
    try {
      r.lambda = std::stod(fields[2]);
      r.bpp = std::stod(fields[3]);
      r.psnr = std::stod(fields[4]);
      r.msssim = std::stod(fields[5]);
    } catch (const std::exception&) {
      throw DataError("malformed csv number in row: " + line);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<RDCurve> curves_from_records(const std::vector<RDRecord>& rows,
                                         const std::string& quality_metric) {
  if (quality_metric != "psnr" && quality_metric != "msssim") {
    throw ArgumentError("quality metric must be psnr or msssim");
  }
  std::vector<RDCurve> curves;
  for (const auto& r : rows) {
    RDCurve* curve = nullptr;
    for (auto& c : curves) {
      if (c.codec == r.codec && c.sequence == r.sequence) {
        curve = &c;
        break;
      }
    }
    if (curve == nullptr) {
      curves.push_back(RDCurve{r.codec, r.sequence, {}});
      curve = &curves.back();
    }
    curve->points.push_back(
        RDPoint{r.bpp, quality_metric == "psnr" ? r.psnr : r.msssim});
  }
  for (auto& c : curves) {
    std::sort(c.points.begin(), c.points.end(),
              [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
  }
  return curves;
}

}  // namespace cvc
