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

#include "cvc/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace cvc::ag {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  if (g_grad_enabled) {
    bool req = false;
    for (const auto& p : parents) req = req || p->requires_grad;
    if (req) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backward_fn = std::move(backward);
    }
  }
  return n;
}

void accumulate(Node& dst, const Tensor& g) {
  Tensor& gd = dst.ensure_grad();
  for (std::int64_t i = 0; i < g.numel(); ++i) gd[i] += g[i];
}

// im2col for zero-padded convolution: out is [C*k*k, Ho*Wo].
Tensor im2col(const Tensor& x, int k, int stride, int pad, int ho, int wo) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor cols({c * k * k, ho * wo});
  const double* src = x.data();
  double* dst = cols.data();
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = dst + static_cast<std::int64_t>((ci * k + ky) * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            std::fill(row + oy * wo, row + (oy + 1) * wo, 0.0);
            continue;
          }
          const double* srow = src + static_cast<std::int64_t>(ci * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            row[oy * wo + ox] = (ix < 0 || ix >= w) ? 0.0 : srow[ix];
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatter-adds columns back into a [C,H,W] tensor.
Tensor col2im(const Tensor& cols, int c, int h, int w, int k, int stride,
              int pad, int ho, int wo) {
  Tensor x({c, h, w});
  const double* src = cols.data();
  double* dst = x.data();
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = src + static_cast<std::int64_t>((ci * k + ky) * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          double* drow = dst + static_cast<std::int64_t>(ci * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) drow[ix] += row[oy * wo + ox];
          }
        }
      }
    }
  }
  return x;
}

struct ConvGeom {
  int cin, h, w, cout, k, stride, pad, ho, wo;
};

ConvGeom conv_geom(const Tensor& x, const Tensor& w, int stride, int pad) {
  check_shape(x.ndim() == 3, "conv2d: input must be [C,H,W]");
  check_shape(w.ndim() == 4, "conv2d: weight must be [Cout,Cin,k,k]");
  check_shape(w.dim(2) == w.dim(3), "conv2d: kernel must be square");
  check_shape(w.dim(1) == x.dim(0),
              "conv2d: weight Cin " + std::to_string(w.dim(1)) +
                  " != input C " + std::to_string(x.dim(0)));
  ConvGeom g;
  g.cin = x.dim(0);
  g.h = x.dim(1);
  g.w = x.dim(2);
  g.cout = w.dim(0);
  g.k = w.dim(2);
  g.stride = stride;
  g.pad = pad;
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;
  check_shape(g.ho >= 1 && g.wo >= 1, "conv2d: kernel larger than padded input");
  return g;
}

Tensor conv_forward(const Tensor& x, const Tensor& w, const Tensor* b,
                    const ConvGeom& g) {
  Tensor cols = im2col(x, g.k, g.stride, g.pad, g.ho, g.wo);
  Tensor y({g.cout, g.ho, g.wo});
  CMapMat wm(w.data(), g.cout, g.cin * g.k * g.k);
  CMapMat cm(cols.data(), g.cin * g.k * g.k, g.ho * g.wo);
  MapMat ym(y.data(), g.cout, g.ho * g.wo);
  ym.noalias() = wm * cm;
  if (b != nullptr) {
    for (int co = 0; co < g.cout; ++co) ym.row(co).array() += (*b)[co];
  }
  return y;
}

Tensor conv_backward_input(const Tensor& gy, const Tensor& w, const ConvGeom& g) {
  Tensor gcols({g.cin * g.k * g.k, g.ho * g.wo});
  CMapMat wm(w.data(), g.cout, g.cin * g.k * g.k);
  CMapMat gym(gy.data(), g.cout, g.ho * g.wo);
  MapMat gcm(gcols.data(), g.cin * g.k * g.k, g.ho * g.wo);
  gcm.noalias() = wm.transpose() * gym;
  return col2im(gcols, g.cin, g.h, g.w, g.k, g.stride, g.pad, g.ho, g.wo);
}

Tensor conv_backward_weight(const Tensor& gy, const Tensor& x, const ConvGeom& g) {
  Tensor cols = im2col(x, g.k, g.stride, g.pad, g.ho, g.wo);
  Tensor gw({g.cout, g.cin, g.k, g.k});
  CMapMat gym(gy.data(), g.cout, g.ho * g.wo);
  CMapMat cm(cols.data(), g.cin * g.k * g.k, g.ho * g.wo);
  MapMat gwm(gw.data(), g.cout, g.cin * g.k * g.k);
  gwm.noalias() = gym * cm.transpose();
  return gw;
}

Var elementwise_unary(const Var& a, const std::function<double(double)>& f,
                      const std::function<double(double, double)>& dfdx_of_xy) {
  Tensor out = Tensor::zeros_like(a->value);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = f(a->value[i]);
  return make_node(std::move(out), {a}, [dfdx_of_xy](Node& n) {
    Node& pa = *n.parents[0];
    if (!pa.requires_grad) return;
    Tensor g = Tensor::zeros_like(n.value);
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      g[i] = n.grad[i] * dfdx_of_xy(pa.value[i], n.value[i]);
    }
    accumulate(pa, g);
  });
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad && g_grad_enabled;
  // Parameters keep requires_grad even when created under grad mode off.
  if (requires_grad) n->requires_grad = true;
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

void backward(const Var& root) {
  if (root->value.numel() != 1) {
    throw ContractError("backward: root must be scalar");
  }
  if (!root->requires_grad) return;
  root->ensure_grad();
  root->grad.fill(1.0);

  // Collect reachable grad-requiring nodes iteratively.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->id > b->id; });
  for (Node* n : order) {
    if (n->backward_fn && n->grad_ready) n->backward_fn(*n);
  }
}

Var add(const Var& a, const Var& b) {
  check_shape(a->value.same_shape(b->value), "add: shape mismatch");
  Tensor out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    for (int i = 0; i < 2; ++i) {
      if (n.parents[i]->requires_grad) accumulate(*n.parents[i], n.grad);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_shape(a->value.same_shape(b->value), "sub: shape mismatch");
  Tensor out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) accumulate(*n.parents[0], n.grad);
    if (n.parents[1]->requires_grad) {
      Tensor g = n.grad;
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = -g[i];
      accumulate(*n.parents[1], g);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_shape(a->value.same_shape(b->value), "mul: shape mismatch");
  Tensor out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    if (pa.requires_grad) {
      Tensor g = n.grad;
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= pb.value[i];
      accumulate(pa, g);
    }
    if (pb.requires_grad) {
      Tensor g = n.grad;
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= pa.value[i];
      accumulate(pb, g);
    }
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += s;
  return make_node(std::move(out), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) accumulate(*n.parents[0], n.grad);
  });
}

Var mul_scalar(const Var& a, double s) {
  Tensor out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
  return make_node(std::move(out), {a}, [s](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor g = n.grad;
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= s;
    accumulate(*n.parents[0], g);
  });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var relu(const Var& a) {
  return elementwise_unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return elementwise_unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var tanh_(const Var& a) {
  return elementwise_unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var softplus(const Var& a) {
  return elementwise_unary(
      a,
      [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var exp_(const Var& a) {
  return elementwise_unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var log_(const Var& a) {
  return elementwise_unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var abs_(const Var& a) {
  return elementwise_unary(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x >= 0.0 ? 1.0 : -1.0; });
}

Var square(const Var& a) {
  return elementwise_unary(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var sqrt_(const Var& a) {
  return elementwise_unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Var pow_scalar(const Var& a, double p) {
  return elementwise_unary(
      a, [p](double x) { return std::pow(x, p); },
      [p](double x, double y) { return p * y / x; });
}

Var round_ste(const Var& a) {
  // std::round implements ties away from zero.
  Tensor out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::round(out[i]);
  return make_node(std::move(out), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) accumulate(*n.parents[0], n.grad);
  });
}

Var uniform_noise(const Var& a, Rng& rng) {
  Tensor out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += rng.uniform(-0.5, 0.5);
  return make_node(std::move(out), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) accumulate(*n.parents[0], n.grad);
  });
}

Var clamp_ste(const Var& a, double lo, double hi) {
  Tensor out = a->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(out[i], lo, hi);
  return make_node(std::move(out), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) accumulate(*n.parents[0], n.grad);
  });
}

Var concat_ch(const std::vector<Var>& xs) {
  check_shape(!xs.empty(), "concat_ch: empty input");
  const int h = xs[0]->value.dim(1), w = xs[0]->value.dim(2);
  int ctot = 0;
  for (const auto& x : xs) {
    check_shape(x->value.ndim() == 3 && x->value.dim(1) == h && x->value.dim(2) == w,
                "concat_ch: spatial mismatch");
    ctot += x->value.dim(0);
  }
  Tensor out({ctot, h, w});
  std::int64_t off = 0;
  for (const auto& x : xs) {
    std::copy(x->value.data(), x->value.data() + x->value.numel(), out.data() + off);
    off += x->value.numel();
  }
  return make_node(std::move(out), xs, [](Node& n) {
    std::int64_t off = 0;
    for (auto& p : n.parents) {
      const std::int64_t sz = p->value.numel();
      if (p->requires_grad) {
        Tensor g = Tensor::zeros_like(p->value);
        std::copy(n.grad.data() + off, n.grad.data() + off + sz, g.data());
        accumulate(*p, g);
      }
      off += sz;
    }
  });
}

Var slice_ch(const Var& x, int c_begin, int c_end) {
  check_shape(x->value.ndim() == 3, "slice_ch: need [C,H,W]");
  check_shape(0 <= c_begin && c_begin < c_end && c_end <= x->value.dim(0),
              "slice_ch: bad channel range");
  const int h = x->value.dim(1), w = x->value.dim(2);
  Tensor out({c_end - c_begin, h, w});
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  std::copy(x->value.data() + c_begin * plane, x->value.data() + c_end * plane,
            out.data());
  return make_node(std::move(out), {x}, [c_begin, plane](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Tensor g = Tensor::zeros_like(p.value);
    std::copy(n.grad.data(), n.grad.data() + n.grad.numel(),
              g.data() + c_begin * plane);
    accumulate(p, g);
  });
}

Var reshape(const Var& x, std::vector<int> shape) {
  Tensor out(shape);
  check_shape(out.numel() == x->value.numel(), "reshape: element count mismatch");
  std::copy(x->value.data(), x->value.data() + x->value.numel(), out.data());
  return make_node(std::move(out), {x}, [](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Tensor g = Tensor::zeros_like(p.value);
    std::copy(n.grad.data(), n.grad.data() + n.grad.numel(), g.data());
    accumulate(p, g);
  });
}

Var sum_all(const Var& a) {
  Tensor out({1});
  double s = 0.0;
  for (std::int64_t i = 0; i < a->value.numel(); ++i) s += a->value[i];
  out[0] = s;
  return make_node(std::move(out), {a}, [](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Tensor g = Tensor::zeros_like(p.value);
    const double gv = n.grad[0];
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = gv;
    accumulate(p, g);
  });
}

Var mean_all(const Var& a) {
  return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a->value.numel()));
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  ConvGeom g = conv_geom(x->value, w->value, stride, pad);
  if (b) {
    check_shape(b->value.ndim() == 1 && b->value.dim(0) == g.cout,
                "conv2d: bias must be [Cout]");
  }
  Tensor y = conv_forward(x->value, w->value, b ? &b->value : nullptr, g);
  std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make_node(std::move(y), std::move(parents), [g](Node& n) {
    Node& px = *n.parents[0];
    Node& pw = *n.parents[1];
    if (px.requires_grad) accumulate(px, conv_backward_input(n.grad, pw.value, g));
    if (pw.requires_grad) accumulate(pw, conv_backward_weight(n.grad, px.value, g));
    if (n.parents.size() > 2 && n.parents[2]->requires_grad) {
      Tensor gb({g.cout});
      const std::int64_t plane = static_cast<std::int64_t>(g.ho) * g.wo;
      for (int co = 0; co < g.cout; ++co) {
        double s = 0.0;
        for (std::int64_t i = 0; i < plane; ++i) s += n.grad[co * plane + i];
        gb[co] = s;
      }
      accumulate(*n.parents[2], gb);
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride,
                     int pad, int out_h, int out_w) {
  check_shape(x->value.ndim() == 3, "conv_transpose2d: input must be [C,H,W]");
  check_shape(w->value.ndim() == 4 && w->value.dim(0) == x->value.dim(0),
              "conv_transpose2d: weight must be [Cin,Cout,k,k]");
  const int cin = x->value.dim(0), hi = x->value.dim(1), wi = x->value.dim(2);
  const int cout = w->value.dim(1), k = w->value.dim(2);
  // Geometry of the adjoint convolution.
  ConvGeom g;
  g.cin = cout;  // adjoint conv maps [Cout,out_h,out_w] -> [Cin,hi,wi]
  g.h = out_h;
  g.w = out_w;
  g.cout = cin;
  g.k = k;
  g.stride = stride;
  g.pad = pad;
  g.ho = hi;
  g.wo = wi;
  check_shape((out_h + 2 * pad - k) / stride + 1 == hi &&
                  (out_w + 2 * pad - k) / stride + 1 == wi,
              "conv_transpose2d: inconsistent output size");
  if (b) {
    check_shape(b->value.ndim() == 1 && b->value.dim(0) == cout,
                "conv_transpose2d: bias must be [Cout]");
  }

  // Forward = conv_backward_input with the roles of in/out channels swapped.
  Tensor y = conv_backward_input(x->value, w->value, g);
  if (b) {
    const std::int64_t plane = static_cast<std::int64_t>(out_h) * out_w;
    for (int co = 0; co < cout; ++co) {
      for (std::int64_t i = 0; i < plane; ++i) y[co * plane + i] += b->value[co];
    }
  }
  std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make_node(std::move(y), std::move(parents), [g, cout, out_h, out_w](Node& n) {
    Node& px = *n.parents[0];
    Node& pw = *n.parents[1];
    if (px.requires_grad) {
      accumulate(px, conv_forward(n.grad, pw.value, nullptr, g));
    }
    if (pw.requires_grad) {
      accumulate(pw, conv_backward_weight(px.value, n.grad, g));
    }
    if (n.parents.size() > 2 && n.parents[2]->requires_grad) {
      Tensor gb({cout});
      const std::int64_t plane = static_cast<std::int64_t>(out_h) * out_w;
      for (int co = 0; co < cout; ++co) {
        double s = 0.0;
        for (std::int64_t i = 0; i < plane; ++i) s += n.grad[co * plane + i];
        gb[co] = s;
      }
      accumulate(*n.parents[2], gb);
    }
  });
}

Var avg_pool2(const Var& x) {
  check_shape(x->value.ndim() == 3, "avg_pool2: need [C,H,W]");
  const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  check_shape(h % 2 == 0 && w % 2 == 0, "avg_pool2: H and W must be even");
  Tensor out({c, h / 2, w / 2});
  for (int ci = 0; ci < c; ++ci) {
    for (int y = 0; y < h / 2; ++y) {
      for (int xx = 0; xx < w / 2; ++xx) {
        out.at(ci, y, xx) = 0.25 * (x->value.at(ci, 2 * y, 2 * xx) +
                                    x->value.at(ci, 2 * y, 2 * xx + 1) +
                                    x->value.at(ci, 2 * y + 1, 2 * xx) +
                                    x->value.at(ci, 2 * y + 1, 2 * xx + 1));
      }
    }
  }
  return make_node(std::move(out), {x}, [c, h, w](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Tensor g({c, h, w});
    for (int ci = 0; ci < c; ++ci) {
      for (int y = 0; y < h / 2; ++y) {
        for (int xx = 0; xx < w / 2; ++xx) {
          const double gv = 0.25 * n.grad.at(ci, y, xx);
          g.at(ci, 2 * y, 2 * xx) = gv;
          g.at(ci, 2 * y, 2 * xx + 1) = gv;
          g.at(ci, 2 * y + 1, 2 * xx) = gv;
          g.at(ci, 2 * y + 1, 2 * xx + 1) = gv;
        }
      }
    }
    accumulate(p, g);
  });
}

namespace {
// Source coordinate and weights for x2 bilinear upsampling, half-pixel style.
inline void up2_coords(int dst, int src_len, int& i0, int& i1, double& f) {
  const double s = (dst + 0.5) * 0.5 - 0.5;
  const double fl = std::floor(s);
  i0 = static_cast<int>(fl);
  f = s - fl;
  i1 = i0 + 1;
  i0 = std::clamp(i0, 0, src_len - 1);
  i1 = std::clamp(i1, 0, src_len - 1);
}
}  // namespace

Var upsample_bilinear2(const Var& x) {
  check_shape(x->value.ndim() == 3, "upsample_bilinear2: need [C,H,W]");
  const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  const int ho = 2 * h, wo = 2 * w;
  Tensor out({c, ho, wo});
  for (int y = 0; y < ho; ++y) {
    int y0, y1;
    double fy;
    up2_coords(y, h, y0, y1, fy);
    for (int xx = 0; xx < wo; ++xx) {
      int x0, x1;
      double fx;
      up2_coords(xx, w, x0, x1, fx);
      for (int ci = 0; ci < c; ++ci) {
        const double v00 = x->value.at(ci, y0, x0), v01 = x->value.at(ci, y0, x1);
        const double v10 = x->value.at(ci, y1, x0), v11 = x->value.at(ci, y1, x1);
        out.at(ci, y, xx) = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                            fy * ((1 - fx) * v10 + fx * v11);
      }
    }
  }
  return make_node(std::move(out), {x}, [c, h, w, ho, wo](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Tensor g({c, h, w});
    for (int y = 0; y < ho; ++y) {
      int y0, y1;
      double fy;
      up2_coords(y, h, y0, y1, fy);
      for (int xx = 0; xx < wo; ++xx) {
        int x0, x1;
        double fx;
        up2_coords(xx, w, x0, x1, fx);
        for (int ci = 0; ci < c; ++ci) {
          const double gv = n.grad.at(ci, y, xx);
          g.at(ci, y0, x0) += gv * (1 - fy) * (1 - fx);
          g.at(ci, y0, x1) += gv * (1 - fy) * fx;
          g.at(ci, y1, x0) += gv * fy * (1 - fx);
          g.at(ci, y1, x1) += gv * fy * fx;
        }
      }
    }
    accumulate(p, g);
  });
}

Var warp_bilinear(const Var& src, const Var& flow) {
  check_shape(src->value.ndim() == 3, "warp_bilinear: src must be [C,H,W]");
  check_shape(flow->value.ndim() == 3 && flow->value.dim(0) == 2,
              "warp_bilinear: flow must be [2,H,W]");
  const int c = src->value.dim(0), h = src->value.dim(1), w = src->value.dim(2);
  check_shape(flow->value.dim(1) == h && flow->value.dim(2) == w,
              "warp_bilinear: flow spatial dims must match source");
  Tensor out({c, h, w});
  const Tensor& s = src->value;
  const Tensor& f = flow->value;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sx = x + f.at(0, y, x);
      double sy = y + f.at(1, y, x);
      sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (int ci = 0; ci < c; ++ci) {
        out.at(ci, y, x) =
            (1 - fy) * ((1 - fx) * s.at(ci, y0, x0) + fx * s.at(ci, y0, x1)) +
            fy * ((1 - fx) * s.at(ci, y1, x0) + fx * s.at(ci, y1, x1));
      }
    }
  }
  return make_node(std::move(out), {src, flow}, [c, h, w](Node& n) {
    Node& ps = *n.parents[0];
    Node& pf = *n.parents[1];
    const Tensor& s = ps.value;
    const Tensor& f = pf.value;
    Tensor gs = Tensor::zeros_like(s);
    Tensor gf = Tensor::zeros_like(f);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double sx = x + f.at(0, y, x);
        double sy = y + f.at(1, y, x);
        // Replicated border: the sample is constant in the clamped
        // direction, so the flow gradient vanishes there.
        const bool cx = (sx <= 0.0 || sx >= w - 1);
        const bool cy = (sy <= 0.0 || sy >= h - 1);
        sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
        sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const int x1 = std::min(x0 + 1, w - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const double fx = sx - x0, fy = sy - y0;
        double gfx = 0.0, gfy = 0.0;
        for (int ci = 0; ci < c; ++ci) {
          const double gv = n.grad.at(ci, y, x);
          if (gv == 0.0) continue;
          gs.at(ci, y0, x0) += gv * (1 - fy) * (1 - fx);
          gs.at(ci, y0, x1) += gv * (1 - fy) * fx;
          gs.at(ci, y1, x0) += gv * fy * (1 - fx);
          gs.at(ci, y1, x1) += gv * fy * fx;
          const double ddx = (1 - fy) * (s.at(ci, y0, x1) - s.at(ci, y0, x0)) +
                             fy * (s.at(ci, y1, x1) - s.at(ci, y1, x0));
          const double ddy = (1 - fx) * (s.at(ci, y1, x0) - s.at(ci, y0, x0)) +
                             fx * (s.at(ci, y1, x1) - s.at(ci, y0, x1));
          gfx += gv * ddx;
          gfy += gv * ddy;
        }
        if (!cx) gf.at(0, y, x) += gfx;
        if (!cy) gf.at(1, y, x) += gfy;
      }
    }
    if (ps.requires_grad) accumulate(ps, gs);
    if (pf.requires_grad) accumulate(pf, gf);
  });
}

Var gdn(const Var& x, const Var& beta, const Var& gamma, bool inverse) {
  check_shape(x->value.ndim() == 3, "gdn: input must be [C,H,W]");
  const int c = x->value.dim(0);
  const std::int64_t n = static_cast<std::int64_t>(x->value.dim(1)) * x->value.dim(2);
  check_shape(beta->value.ndim() == 1 && beta->value.dim(0) == c,
              "gdn: beta must be [C]");
  check_shape(gamma->value.ndim() == 2 && gamma->value.dim(0) == c &&
                  gamma->value.dim(1) == c,
              "gdn: gamma must be [C,C]");
  for (int i = 0; i < c; ++i) {
    if (!(beta->value[i] >= kGdnBetaMin)) {
      throw ArgumentError("gdn: beta must be >= beta_min");
    }
  }
  for (std::int64_t i = 0; i < gamma->value.numel(); ++i) {
    if (!(gamma->value[i] >= 0.0)) throw ArgumentError("gdn: gamma must be >= 0");
  }

  // t = beta + gamma * x^2 (per position), y = x * t^(-+1/2)
  Tensor xsq = x->value;
  for (std::int64_t i = 0; i < xsq.numel(); ++i) xsq[i] *= xsq[i];
  Tensor t({c, x->value.dim(1), x->value.dim(2)});
  {
    CMapMat gm(gamma->value.data(), c, c);
    CMapMat sm(xsq.data(), c, n);
    MapMat tm(t.data(), c, n);
    tm.noalias() = gm * sm;
    for (int ci = 0; ci < c; ++ci) tm.row(ci).array() += beta->value[ci];
  }
  Tensor out = x->value;
  const double e = inverse ? 0.5 : -0.5;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= std::pow(t[i], e);

  return make_node(std::move(out), {x, beta, gamma},
                   [c, n, t = std::move(t), inverse](Node& nd) {
    Node& px = *nd.parents[0];
    Node& pb = *nd.parents[1];
    Node& pg = *nd.parents[2];
    const Tensor& xv = px.value;
    const Tensor& gout = nd.grad;
    // u_c = g_c * x_c * t_c^(-3/2)   (gdn)   with gx = g.t^-1/2 - x.(gamma^T u)
    // v_c = g_c * x_c * t_c^(-1/2)   (igdn)  with gx = g.t^+1/2 + x.(gamma^T v)
    Tensor u({c, t.dim(1), t.dim(2)});
    const double pe = inverse ? -0.5 : -1.5;
    for (std::int64_t i = 0; i < u.numel(); ++i) {
      u[i] = gout[i] * xv[i] * std::pow(t[i], pe);
    }
    if (px.requires_grad) {
      Tensor gx = Tensor::zeros_like(xv);
      {
        CMapMat gm(pg.value.data(), c, c);
        CMapMat um(u.data(), c, n);
        MapMat gxm(gx.data(), c, n);
        gxm.noalias() = gm.transpose() * um;
      }
      const double sgn = inverse ? 1.0 : -1.0;
      const double e0 = inverse ? 0.5 : -0.5;
      for (std::int64_t i = 0; i < gx.numel(); ++i) {
        gx[i] = gout[i] * std::pow(t[i], e0) + sgn * xv[i] * gx[i];
      }
      accumulate(px, gx);
    }
    const double half = inverse ? 0.5 : -0.5;
    if (pb.requires_grad) {
      Tensor gb({c});
      for (int ci = 0; ci < c; ++ci) {
        double s = 0.0;
        for (std::int64_t i = 0; i < n; ++i) s += u[ci * n + i];
        gb[ci] = half * s;
      }
      accumulate(pb, gb);
    }
    if (pg.requires_grad) {
      Tensor xsq = xv;
      for (std::int64_t i = 0; i < xsq.numel(); ++i) xsq[i] *= xsq[i];
      Tensor gg({c, c});
      {
        CMapMat um(u.data(), c, n);
        CMapMat sm(xsq.data(), c, n);
        MapMat ggm(gg.data(), c, c);
        ggm.noalias() = um * sm.transpose();
      }
      for (std::int64_t i = 0; i < gg.numel(); ++i) gg[i] *= half;
      accumulate(pg, gg);
    }
  });
}

namespace {

constexpr double kLn2 = 0.6931471805599453;
constexpr double kMinMassBits = 39.863137138648348;  // -log2(1e-12)

// Stable per-element Laplace interval code length and its partials.
// Returns bits; fills d(bits)/dv, d(bits)/dmu, d(bits)/dsigma.
double laplace_bits_elem(double v, double mu, double s, double& dv, double& dmu,
                         double& ds) {
  const double a = v - 0.5 - mu;
  const double b = v + 0.5 - mu;
  double neg_ln_m;  // -ln(mass)
  double dnlm_dv, dnlm_ds;
  if (a >= 0.0) {
    // Right tail: mass = 0.5 e^{-a/s} (1 - e^{-1/s})
    const double t = std::exp(-1.0 / s);
    neg_ln_m = -std::log(0.5) + a / s - std::log1p(-t);
    dnlm_dv = 1.0 / s;
    dnlm_ds = -a / (s * s) + t / (s * s * (1.0 - t));
  } else if (b <= 0.0) {
    // Left tail: mirror of the right tail with a' = -b.
    const double ap = -b;
    const double t = std::exp(-1.0 / s);
    neg_ln_m = -std::log(0.5) + ap / s - std::log1p(-t);
    dnlm_dv = -1.0 / s;
    dnlm_ds = -ap / (s * s) + t / (s * s * (1.0 - t));
  } else {
    // Interval straddles the mode: mass = 1 - 0.5(e^{-b/s} + e^{a/s})
    const double eb = std::exp(-b / s);
    const double ea = std::exp(a / s);
    const double m = 1.0 - 0.5 * (eb + ea);
    const double mm = std::max(m, 1e-300);
    neg_ln_m = -std::log(mm);
    const double fb = eb / (2.0 * s), fa = ea / (2.0 * s);
    dnlm_dv = -(fb - fa) / mm;
    // dm/ds = -(b eb - a ea) / (2 s^2); note a < 0 here.
    dnlm_ds = (b * eb - a * ea) / (2.0 * s * s * mm);
  }
  dmu = -dnlm_dv;
  dv = dnlm_dv;
  ds = dnlm_ds;
  double bits = neg_ln_m / kLn2;
  if (bits > kMinMassBits) bits = kMinMassBits;  // value floor, grads kept
  return bits;
}

}  // namespace

Var laplace_bits(const Var& v, const Var& mu, const Var& sigma) {
  check_shape(v->value.same_shape(mu->value) && v->value.same_shape(sigma->value),
              "laplace_bits: shape mismatch");
  for (std::int64_t i = 0; i < sigma->value.numel(); ++i) {
    if (!(sigma->value[i] > 0.0)) {
      throw ArgumentError("laplace_bits: sigma must be positive");
    }
  }
  Tensor out = Tensor::zeros_like(v->value);
  double dv, dmu, ds;
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    out[i] = laplace_bits_elem(v->value[i], mu->value[i], sigma->value[i], dv, dmu, ds);
  }
  return make_node(std::move(out), {v, mu, sigma}, [](Node& n) {
    Node& pv = *n.parents[0];
    Node& pm = *n.parents[1];
    Node& ps = *n.parents[2];
    Tensor gv = Tensor::zeros_like(pv.value);
    Tensor gm = Tensor::zeros_like(pv.value);
    Tensor gs = Tensor::zeros_like(pv.value);
    // Partials from laplace_bits_elem are of -ln(mass); the node outputs
    // bits, so scale by 1/ln(2).
    for (std::int64_t i = 0; i < gv.numel(); ++i) {
      double dv, dmu, ds;
      laplace_bits_elem(pv.value[i], pm.value[i], ps.value[i], dv, dmu, ds);
      const double g = n.grad[i] / kLn2;
      gv[i] = g * dv;
      gm[i] = g * dmu;
      gs[i] = g * ds;
    }
    if (pv.requires_grad) accumulate(pv, gv);
    if (pm.requires_grad) accumulate(pm, gm);
    if (ps.requires_grad) accumulate(ps, gs);
  });
}

Var cwise_linear(const Var& v, const Var& w, const Var& b) {
  check_shape(v->value.ndim() == 3 && w->value.ndim() == 3 && b->value.ndim() == 2,
              "cwise_linear: bad ranks");
  const int c = v->value.dim(0), fin = v->value.dim(1), n = v->value.dim(2);
  const int fout = w->value.dim(1);
  check_shape(w->value.dim(0) == c && w->value.dim(2) == fin,
              "cwise_linear: weight shape mismatch");
  check_shape(b->value.dim(0) == c && b->value.dim(1) == fout,
              "cwise_linear: bias shape mismatch");
  Tensor out({c, fout, n});
  for (int ci = 0; ci < c; ++ci) {
    for (int o = 0; o < fout; ++o) {
      const double bias = b->value[ci * fout + o];
      for (int j = 0; j < n; ++j) {
        double s = bias;
        for (int i = 0; i < fin; ++i) {
          s += w->value[(ci * fout + o) * fin + i] * v->value[(ci * fin + i) * n + j];
        }
        out[(static_cast<std::int64_t>(ci) * fout + o) * n + j] = s;
      }
    }
  }
  return make_node(std::move(out), {v, w, b}, [c, fin, fout, n](Node& nd) {
    Node& pv = *nd.parents[0];
    Node& pw = *nd.parents[1];
    Node& pb = *nd.parents[2];
    if (pv.requires_grad) {
      Tensor g = Tensor::zeros_like(pv.value);
      for (int ci = 0; ci < c; ++ci) {
        for (int i = 0; i < fin; ++i) {
          for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int o = 0; o < fout; ++o) {
              s += pw.value[(ci * fout + o) * fin + i] *
                   nd.grad[(static_cast<std::int64_t>(ci) * fout + o) * n + j];
            }
            g[(static_cast<std::int64_t>(ci) * fin + i) * n + j] = s;
          }
        }
      }
      accumulate(pv, g);
    }
    if (pw.requires_grad) {
      Tensor g = Tensor::zeros_like(pw.value);
      for (int ci = 0; ci < c; ++ci) {
        for (int o = 0; o < fout; ++o) {
          for (int i = 0; i < fin; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) {
              s += nd.grad[(static_cast<std::int64_t>(ci) * fout + o) * n + j] *
                   pv.value[(static_cast<std::int64_t>(ci) * fin + i) * n + j];
            }
            g[(ci * fout + o) * fin + i] = s;
          }
        }
      }
      accumulate(pw, g);
    }
    if (pb.requires_grad) {
      Tensor g = Tensor::zeros_like(pb.value);
      for (int ci = 0; ci < c; ++ci) {
        for (int o = 0; o < fout; ++o) {
          double s = 0.0;
          for (int j = 0; j < n; ++j) {
            s += nd.grad[(static_cast<std::int64_t>(ci) * fout + o) * n + j];
          }
          g[ci * fout + o] = s;
        }
      }
      accumulate(pb, g);
    }
  });
}

Var factor_step(const Var& v, const Var& a_raw) {
  check_shape(v->value.ndim() == 3 && a_raw->value.ndim() == 2,
              "factor_step: bad ranks");
  const int c = v->value.dim(0), f = v->value.dim(1), n = v->value.dim(2);
  check_shape(a_raw->value.dim(0) == c && a_raw->value.dim(1) == f,
              "factor_step: factor shape mismatch");
  Tensor out = Tensor::zeros_like(v->value);
  for (int ci = 0; ci < c; ++ci) {
    for (int fi = 0; fi < f; ++fi) {
      const double a = std::tanh(a_raw->value[ci * f + fi]);
      const double* src = v->value.data() + (static_cast<std::int64_t>(ci) * f + fi) * n;
      double* row = out.data() + (static_cast<std::int64_t>(ci) * f + fi) * n;
      for (int j = 0; j < n; ++j) row[j] = src[j] + a * std::tanh(src[j]);
    }
  }
  return make_node(std::move(out), {v, a_raw}, [c, f, n](Node& nd) {
    Node& pv = *nd.parents[0];
    Node& pa = *nd.parents[1];
    Tensor gv = Tensor::zeros_like(pv.value);
    Tensor ga = Tensor::zeros_like(pa.value);
    for (int ci = 0; ci < c; ++ci) {
      for (int fi = 0; fi < f; ++fi) {
        const double ar = pa.value[ci * f + fi];
        const double a = std::tanh(ar);
        const double da = 1.0 - a * a;
        const std::int64_t off = (static_cast<std::int64_t>(ci) * f + fi) * n;
        double gsum = 0.0;
        for (int j = 0; j < n; ++j) {
          const double t = std::tanh(pv.value[off + j]);
          const double g = nd.grad[off + j];
          gv[off + j] = g * (1.0 + a * (1.0 - t * t));
          gsum += g * t;
        }
        ga[ci * f + fi] = gsum * da;
      }
    }
    if (pv.requires_grad) accumulate(pv, gv);
    if (pa.requires_grad) accumulate(pa, ga);
  });
}

namespace {

inline double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double sigmoid_deriv(double x) {
  const double e = std::exp(-std::fabs(x));
  const double d = 1.0 + e;
  return e / (d * d);
}

// bits = -log2(sigmoid(u) - sigmoid(l)) with stable tail handling.
double logistic_bits_elem(double u, double l, double& du, double& dl) {
  const double c = 0.5 * (u + l);
  double neg_ln_m;
  if (c > 20.0) {
    // Both logits far right: m ~= e^{-l}(1 - e^{-(u-l)})
    const double t = std::exp(-(u - l));
    neg_ln_m = l - std::log1p(-t);
    dl = 1.0 / (1.0 - t);
    du = -t / (1.0 - t);
  } else if (c < -20.0) {
    const double t = std::exp(-(u - l));
    neg_ln_m = -u - std::log1p(-t);
    du = -1.0 / (1.0 - t);
    dl = t / (1.0 - t);
  } else {
    const double m = std::max(stable_sigmoid(u) - stable_sigmoid(l), 1e-12);
    neg_ln_m = -std::log(m);
    du = -sigmoid_deriv(u) / m;
    dl = sigmoid_deriv(l) / m;
  }
  du /= kLn2;
  dl /= kLn2;
  double bits = neg_ln_m / kLn2;
  if (bits > kMinMassBits) bits = kMinMassBits;
  return bits;
}

}  // namespace

Var logistic_mass_bits(const Var& upper, const Var& lower) {
  check_shape(upper->value.same_shape(lower->value),
              "logistic_mass_bits: shape mismatch");
  Tensor out = Tensor::zeros_like(upper->value);
  double du, dl;
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    out[i] = logistic_bits_elem(upper->value[i], lower->value[i], du, dl);
  }
  return make_node(std::move(out), {upper, lower}, [](Node& n) {
    Node& pu = *n.parents[0];
    Node& pl = *n.parents[1];
    Tensor gu = Tensor::zeros_like(pu.value);
    Tensor gl = Tensor::zeros_like(pl.value);
    for (std::int64_t i = 0; i < gu.numel(); ++i) {
      double du, dl;
      logistic_bits_elem(pu.value[i], pl.value[i], du, dl);
      gu[i] = n.grad[i] * du;
      gl[i] = n.grad[i] * dl;
    }
    if (pu.requires_grad) accumulate(pu, gu);
    if (pl.requires_grad) accumulate(pl, gl);
  });
}

}  // namespace cvc::ag
