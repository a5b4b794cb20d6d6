#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "dfwi/nn/graph.hpp"

namespace dfwi::nn {
inline namespace DFWI_NN_ABI {

namespace {

using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using Arr = Eigen::Map<Eigen::Array<Real, Eigen::Dynamic, 1>>;
using CArr = Eigen::Map<const Eigen::Array<Real, Eigen::Dynamic, 1>>;

// Fixed left-to-right order: vectorized reductions over unaligned maps would
// make results depend on buffer addresses.
double ordered_sum(const Real* p, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += p[i];
  return s;
}

struct ConvGeom {
  int cin, h, w, k, stride, pad, ho, wo;
  int kdim() const { return cin * k * k; }
  int positions() const { return ho * wo; }
};

void im2col(const Real* x, const ConvGeom& g, Real* cols) {
  const int p = g.positions();
  for (int ci = 0; ci < g.cin; ++ci) {
    const Real* xc = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        Real* row = cols + static_cast<std::size_t>((ci * g.k + ky) * g.k + kx) * p;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          Real* r = row + static_cast<std::size_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(r, g.wo, Real(0));
            continue;
          }
          const Real* xr = xc + static_cast<std::size_t>(iy) * g.w;
          if (g.stride == 1) {
            const int off = kx - g.pad;
            const int lo = std::max(0, -off);
            const int hi = std::min(g.wo, g.w - off);
            std::fill_n(r, lo, Real(0));
            for (int ox = lo; ox < hi; ++ox) r[ox] = xr[ox + off];
            if (hi < g.wo) std::fill_n(r + std::max(hi, 0), g.wo - std::max(hi, 0), Real(0));
          } else {
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              r[ox] = (ix >= 0 && ix < g.w) ? xr[ix] : Real(0);
            }
          }
        }
      }
    }
  }
}

void col2im(const Real* cols, const ConvGeom& g, Real* dx) {
  const int p = g.positions();
  for (int ci = 0; ci < g.cin; ++ci) {
    Real* xc = dx + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const Real* row = cols + static_cast<std::size_t>((ci * g.k + ky) * g.k + kx) * p;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const Real* r = row + static_cast<std::size_t>(oy) * g.wo;
          Real* xr = xc + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) xr[ix] += r[ox];
          }
        }
      }
    }
  }
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw NnError(msg);
}

// Stride-1 "same" convolution as a sum of per-tap GEMMs over shifted views of
// a zero-padded copy of the input. Outputs live on a row-padded grid of width
// w + 2 * pad; the extra columns are discarded (forward) or zero (backward).
struct ShiftGeom {
  int cin, cout, h, w, k, pad;
  int pw() const { return w + 2 * pad; }
  int plane() const { return (h + 2 * pad) * pw(); }
  int ext() const { return h * pw(); }
  std::size_t padded_size() const { return static_cast<std::size_t>(cin) * plane() + k; }
  int offset(int tap) const { return (tap / k) * pw() + tap % k; }
  int taps() const { return k * k; }
};

using StridedR = Eigen::Map<MatR, 0, Eigen::OuterStride<>>;
using CStridedR = Eigen::Map<const MatR, 0, Eigen::OuterStride<>>;

void pad_input(const Real* x, const ShiftGeom& g, Real* xp) {
  std::fill_n(xp, g.padded_size(), Real(0));
  for (int c = 0; c < g.cin; ++c) {
    for (int iy = 0; iy < g.h; ++iy) {
      std::copy_n(x + (static_cast<std::size_t>(c) * g.h + iy) * g.w, g.w,
                  xp + static_cast<std::size_t>(c) * g.plane() + (iy + g.pad) * g.pw() + g.pad);
    }
  }
}

// Tap-major weights: taps x (cout x cin).
Buffer tap_weights(const Tensor& w, const ShiftGeom& g) {
  Buffer out(static_cast<std::size_t>(g.taps()) * g.cout * g.cin);
  for (int co = 0; co < g.cout; ++co)
    for (int ci = 0; ci < g.cin; ++ci)
      for (int tap = 0; tap < g.taps(); ++tap)
        out[(static_cast<std::size_t>(tap) * g.cout + co) * g.cin + ci] =
            w.v[(static_cast<std::size_t>(co) * g.cin + ci) * g.taps() + tap];
  return out;
}

Tape::Id conv2d_same(Tape& t, Tape::Id xi, Tape::Id wi, Tape::Id bi) {
  const Tensor& x = t.value(xi);
  const Tensor& w = t.value(wi);
  const Tensor& b = t.value(bi);
  const ShiftGeom g{x.shape.c, w.shape.n, x.shape.h, x.shape.w, w.shape.h, w.shape.h / 2};
  const std::size_t tapsz = static_cast<std::size_t>(g.cout) * g.cin;
  const auto wt = tap_weights(w, g);
  Buffer xp(g.padded_size());
  MatR yext(g.cout, g.ext());
  Tensor y(Shape{x.shape.n, g.cout, g.h, g.w});
  for (int n = 0; n < x.shape.n; ++n) {
    pad_input(x.data() + static_cast<std::size_t>(n) * g.cin * g.h * g.w, g, xp.data());
    for (int tap = 0; tap < g.taps(); ++tap) {
      CMapR wk(wt.data() + tap * tapsz, g.cout, g.cin);
      CStridedR view(xp.data() + g.offset(tap), g.cin, g.ext(), Eigen::OuterStride<>(g.plane()));
      if (tap == 0) {
        yext.noalias() = wk * view;
      } else {
        yext.noalias() += wk * view;
      }
    }
    Real* yb = y.data() + static_cast<std::size_t>(n) * g.cout * g.h * g.w;
    for (int co = 0; co < g.cout; ++co)
      for (int oy = 0; oy < g.h; ++oy)
        for (int ox = 0; ox < g.w; ++ox)
          yb[(static_cast<std::size_t>(co) * g.h + oy) * g.w + ox] = yext(co, oy * g.pw() + ox) + b.v[co];
  }

  return t.push(std::move(y), {xi, wi, bi}, [g, tapsz](Tape& tp, Tape::Id self) {
    const auto& in = tp.inputs(self);
    const Tensor& x = tp.value(in[0]);
    const Tensor& dy = tp.grad(self);
    const bool need_x = tp.needs_grad(in[0]);
    const bool need_w = tp.needs_grad(in[1]);
    const std::size_t xstride = static_cast<std::size_t>(g.cin) * g.h * g.w;
    const std::size_t ystride = static_cast<std::size_t>(g.cout) * g.h * g.w;

    if (tp.needs_grad(in[2])) {
      Tensor& db = tp.grad_buffer(in[2]);
      for (int n = 0; n < x.shape.n; ++n) {
        const std::size_t plane = static_cast<std::size_t>(g.h) * g.w;
        for (int co = 0; co < g.cout; ++co)
          db.v[co] += static_cast<Real>(ordered_sum(dy.data() + n * ystride + co * plane, plane));
      }
    }
    if (!need_x && !need_w) return;

    const auto wt = tap_weights(tp.value(in[1]), g);
    Buffer dwt(need_w ? wt.size() : 0, Real(0));
    Buffer xp(g.padded_size());
    Buffer dxp(need_x ? g.padded_size() : 0);
    MatR dyext = MatR::Zero(g.cout, g.ext());
    for (int n = 0; n < x.shape.n; ++n) {
      const Real* dyb = dy.data() + n * ystride;
      for (int co = 0; co < g.cout; ++co)
        for (int oy = 0; oy < g.h; ++oy)
          std::copy_n(dyb + (static_cast<std::size_t>(co) * g.h + oy) * g.w, g.w, &dyext(co, oy * g.pw()));
      if (need_w) {
        pad_input(x.data() + n * xstride, g, xp.data());
        for (int tap = 0; tap < g.taps(); ++tap) {
          MapR dwk(dwt.data() + tap * tapsz, g.cout, g.cin);
          CStridedR view(xp.data() + g.offset(tap), g.cin, g.ext(), Eigen::OuterStride<>(g.plane()));
          dwk.noalias() += dyext * view.transpose();
        }
      }
      if (need_x) {
        std::fill(dxp.begin(), dxp.end(), Real(0));
        for (int tap = 0; tap < g.taps(); ++tap) {
          CMapR wk(wt.data() + tap * tapsz, g.cout, g.cin);
          StridedR view(dxp.data() + g.offset(tap), g.cin, g.ext(), Eigen::OuterStride<>(g.plane()));
          view.noalias() += wk.transpose() * dyext;
        }
        Real* dxb = tp.grad_buffer(in[0]).data() + n * xstride;
        for (int c = 0; c < g.cin; ++c)
          for (int iy = 0; iy < g.h; ++iy) {
            const Real* src = dxp.data() + static_cast<std::size_t>(c) * g.plane() + (iy + g.pad) * g.pw() + g.pad;
            Real* dst = dxb + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
            for (int ix = 0; ix < g.w; ++ix) dst[ix] += src[ix];
          }
      }
    }
    if (need_w) {
      Tensor& dw = tp.grad_buffer(in[1]);
      for (int co = 0; co < g.cout; ++co)
        for (int ci = 0; ci < g.cin; ++ci)
          for (int tap = 0; tap < g.taps(); ++tap)
            dw.v[(static_cast<std::size_t>(co) * g.cin + ci) * g.taps() + tap] +=
                dwt[(static_cast<std::size_t>(tap) * g.cout + co) * g.cin + ci];
    }
  });
}

}  // namespace

// ---------------------------------------------------------------- ParamStore

int ParamStore::add(const std::string& name, Shape shape, Real fill) {
  require(find(name) < 0, "duplicate parameter segment " + name);
  Segment s{name, shape, values_.size(), shape.numel()};
  values_.resize(values_.size() + s.size, fill);
  grads_.resize(values_.size(), Real(0));
  segments_.push_back(s);
  return static_cast<int>(segments_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

void ParamStore::zero_grad() { std::fill(grads_.begin(), grads_.end(), Real(0)); }

// ---------------------------------------------------------------------- Tape

Tape::Id Tape::constant(Tensor t) {
  nodes_.push_back(Node{std::move(t), {}, {}, {}, false, nullptr, -1});
  return static_cast<Id>(nodes_.size()) - 1;
}

Tape::Id Tape::input(Tensor t) {
  nodes_.push_back(Node{std::move(t), {}, {}, {}, true, nullptr, -1});
  return static_cast<Id>(nodes_.size()) - 1;
}

Tape::Id Tape::parameter(ParamStore& store, int segment) {
  const auto& seg = store.segment(segment);
  auto vals = store.values(segment);
  Tensor t(seg.shape, Buffer(vals.begin(), vals.end()));
  nodes_.push_back(Node{std::move(t), {}, {}, {}, true, &store, segment});
  return static_cast<Id>(nodes_.size()) - 1;
}

Tape::Id Tape::push(Tensor value, std::vector<Id> inputs, Backward backward) {
  bool needs = false;
  for (Id i : inputs) needs = needs || nodes_.at(i).needs_grad;
  nodes_.push_back(Node{std::move(value), {}, std::move(inputs), needs ? std::move(backward) : Backward{}, needs,
                        nullptr, -1});
  return static_cast<Id>(nodes_.size()) - 1;
}

Tensor& Tape::grad_buffer(Id id) {
  Node& n = nodes_.at(id);
  if (n.grad.numel() != n.value.numel()) n.grad = Tensor(n.value.shape);
  return n.grad;
}

void Tape::backward(Id out, const Tensor& upstream) {
  if (nodes_.empty() || out < 0 || out >= static_cast<Id>(nodes_.size())) {
    throw NnError("backward called without a recorded forward pass");
  }
  require(upstream.shape == nodes_[out].value.shape, "backward: upstream shape " + upstream.shape.str() +
                                                         " does not match output " + nodes_[out].value.shape.str());
  for (auto& n : nodes_) n.grad = Tensor();
  nodes_[out].grad = upstream;
  for (Id i = out; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.numel() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (n.store) {
      auto g = n.store->grads(n.segment);
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad.v[k];
    }
  }
}

// ----------------------------------------------------------------------- ops

Tape::Id conv2d(Tape& t, Tape::Id xi, Tape::Id wi, Tape::Id bi, int stride, int pad) {
  const Tensor& x = t.value(xi);
  const Tensor& w = t.value(wi);
  const Tensor& b = t.value(bi);
  require(w.shape.c == x.shape.c && w.shape.h == w.shape.w,
          "conv2d: weight " + w.shape.str() + " incompatible with input " + x.shape.str());
  require(b.numel() == static_cast<std::size_t>(w.shape.n), "conv2d: bias size mismatch");
  const int k = w.shape.h;
  ConvGeom g{x.shape.c, x.shape.h, x.shape.w, k, stride, pad, (x.shape.h + 2 * pad - k) / stride + 1,
             (x.shape.w + 2 * pad - k) / stride + 1};
  require(g.ho > 0 && g.wo > 0, "conv2d: empty output");
  const int cout = w.shape.n;
  if (stride == 1 && k > 1 && k % 2 == 1 && 2 * pad == k - 1) return conv2d_same(t, xi, wi, bi);
  const bool direct = k == 1 && stride == 1 && pad == 0;

  Tensor y(Shape{x.shape.n, cout, g.ho, g.wo});
  Buffer cols(direct ? 0 : static_cast<std::size_t>(g.kdim()) * g.positions());
  CMapR wm(w.data(), cout, g.kdim());
  for (int n = 0; n < x.shape.n; ++n) {
    const Real* xb = x.data() + static_cast<std::size_t>(n) * x.shape.c * x.shape.plane();
    const Real* cptr = xb;
    if (!direct) {
      im2col(xb, g, cols.data());
      cptr = cols.data();
    }
    MapR yb(y.data() + static_cast<std::size_t>(n) * cout * g.positions(), cout, g.positions());
    yb.noalias() = wm * CMapR(cptr, g.kdim(), g.positions());
    for (int co = 0; co < cout; ++co) yb.row(co).array() += b.v[co];
  }

  return t.push(std::move(y), {xi, wi, bi}, [g, cout, direct](Tape& tp, Tape::Id self) {
    const auto& in = tp.inputs(self);
    const Tensor& x = tp.value(in[0]);
    const Tensor& w = tp.value(in[1]);
    const Tensor& dy = tp.grad(self);
    const int batch = x.shape.n;
    const std::size_t xstride = static_cast<std::size_t>(x.shape.c) * x.shape.plane();
    const std::size_t ystride = static_cast<std::size_t>(cout) * g.positions();
    Buffer cols(direct ? 0 : static_cast<std::size_t>(g.kdim()) * g.positions());
    CMapR wm(w.data(), cout, g.kdim());

    if (tp.needs_grad(in[2])) {
      Tensor& db = tp.grad_buffer(in[2]);
      for (int n = 0; n < batch; ++n) {
        const std::size_t plane = g.positions();
        for (int co = 0; co < cout; ++co)
          db.v[co] += static_cast<Real>(ordered_sum(dy.data() + n * ystride + co * plane, plane));
      }
    }
    if (tp.needs_grad(in[1])) {
      Tensor& dw = tp.grad_buffer(in[1]);
      MapR dwm(dw.data(), cout, g.kdim());
      for (int n = 0; n < batch; ++n) {
        const Real* cptr = x.data() + n * xstride;
        if (!direct) {
          im2col(cptr, g, cols.data());
          cptr = cols.data();
        }
        CMapR dyb(dy.data() + n * ystride, cout, g.positions());
        dwm.noalias() += dyb * CMapR(cptr, g.kdim(), g.positions()).transpose();
      }
    }
    if (tp.needs_grad(in[0])) {
      Tensor& dx = tp.grad_buffer(in[0]);
      for (int n = 0; n < batch; ++n) {
        CMapR dyb(dy.data() + n * ystride, cout, g.positions());
        if (direct) {
          MapR dxb(dx.data() + n * xstride, g.kdim(), g.positions());
          dxb.noalias() += wm.transpose() * dyb;
        } else {
          MapR dcols(cols.data(), g.kdim(), g.positions());
          dcols.noalias() = wm.transpose() * dyb;
          col2im(cols.data(), g, dx.data() + n * xstride);
        }
      }
    }
  });
}

Tape::Id group_norm(Tape& t, Tape::Id xi, Tape::Id gi, Tape::Id bi, int groups, Real eps) {
  const Tensor& x = t.value(xi);
  const Tensor& gamma = t.value(gi);
  const Tensor& beta = t.value(bi);
  const Shape s = x.shape;
  require(groups > 0 && s.c % groups == 0, "group_norm: channels " + std::to_string(s.c) +
                                               " not divisible by groups " + std::to_string(groups));
  require(gamma.numel() == static_cast<std::size_t>(s.c) && beta.numel() == static_cast<std::size_t>(s.c),
          "group_norm: affine size mismatch");
  const int cpg = s.c / groups;
  const std::size_t count = static_cast<std::size_t>(cpg) * s.plane();

  auto stats = std::make_shared<Buffer>(static_cast<std::size_t>(s.n) * groups * 2);
  Tensor y(s);
  for (int n = 0; n < s.n; ++n) {
    for (int gidx = 0; gidx < groups; ++gidx) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + static_cast<std::size_t>(gidx) * cpg) * s.plane();
      const Real* xg = x.data() + base;
      const double mean = ordered_sum(xg, count) / static_cast<double>(count);
      double var = 0.0;
      for (std::size_t i = 0; i < count; ++i) var += (xg[i] - mean) * (xg[i] - mean);
      var /= static_cast<double>(count);
      const Real rstd = static_cast<Real>(1.0 / std::sqrt(var + eps));
      (*stats)[(static_cast<std::size_t>(n) * groups + gidx) * 2] = static_cast<Real>(mean);
      (*stats)[(static_cast<std::size_t>(n) * groups + gidx) * 2 + 1] = rstd;
      for (int cc = 0; cc < cpg; ++cc) {
        const int c = gidx * cpg + cc;
        const Real ga = gamma.v[c] * rstd;
        const Real be = beta.v[c] - static_cast<Real>(mean) * ga;
        const std::size_t off = base + static_cast<std::size_t>(cc) * s.plane();
        const auto np = static_cast<Eigen::Index>(s.plane());
        Arr(y.data() + off, np) = CArr(x.data() + off, np) * ga + be;
      }
    }
  }

  return t.push(std::move(y), {xi, gi, bi}, [stats, groups, cpg, count](Tape& tp, Tape::Id self) {
    const auto& in = tp.inputs(self);
    const Tensor& x = tp.value(in[0]);
    const Tensor& gamma = tp.value(in[1]);
    const Tensor& dy = tp.grad(self);
    const Shape s = x.shape;
    const bool need_x = tp.needs_grad(in[0]);
    const bool need_g = tp.needs_grad(in[1]);
    const bool need_b = tp.needs_grad(in[2]);
    Tensor* dx = need_x ? &tp.grad_buffer(in[0]) : nullptr;
    Tensor* dg = need_g ? &tp.grad_buffer(in[1]) : nullptr;
    Tensor* db = need_b ? &tp.grad_buffer(in[2]) : nullptr;
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
      for (int gidx = 0; gidx < groups; ++gidx) {
        const Real mean = (*stats)[(static_cast<std::size_t>(n) * groups + gidx) * 2];
        const Real rstd = (*stats)[(static_cast<std::size_t>(n) * groups + gidx) * 2 + 1];
        const std::size_t base = (static_cast<std::size_t>(n) * s.c + static_cast<std::size_t>(gidx) * cpg) * plane;
        const auto np = static_cast<Eigen::Index>(plane);
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        for (int cc = 0; cc < cpg; ++cc) {
          const int c = gidx * cpg + cc;
          const std::size_t off = base + static_cast<std::size_t>(cc) * plane;
          const Real* xc = x.data() + off;
          const Real* d = dy.data() + off;
          double sg = 0.0;
          for (std::size_t i = 0; i < plane; ++i) sg += static_cast<double>(d[i]) * static_cast<Real>((xc[i] - mean) * rstd);
          const double sb = ordered_sum(d, plane);
          if (dg) dg->v[c] += static_cast<Real>(sg);
          if (db) db->v[c] += static_cast<Real>(sb);
          sum_dxh += gamma.v[c] * sb;
          sum_dxh_xh += gamma.v[c] * sg;
        }
        if (!dx) continue;
        const Real inv_n = Real(1) / static_cast<Real>(count);
        const Real m1 = static_cast<Real>(sum_dxh) * inv_n;
        const Real m2 = static_cast<Real>(sum_dxh_xh) * inv_n;
        for (int cc = 0; cc < cpg; ++cc) {
          const int c = gidx * cpg + cc;
          const std::size_t off = base + static_cast<std::size_t>(cc) * plane;
          const auto xh = (CArr(x.data() + off, np) - mean) * rstd;
          Arr(dx->data() + off, np) += rstd * (CArr(dy.data() + off, np) * gamma.v[c] - m1 - xh * m2);
        }
      }
    }
  });
}

Tape::Id silu(Tape& t, Tape::Id xi) {
  const Tensor& x = t.value(xi);
  Tensor y(x.shape);
  const auto n = static_cast<Eigen::Index>(x.numel());
  CArr xa(x.data(), n);
  Arr(y.data(), n) = xa / (Real(1) + (-xa).exp());
  return t.push(std::move(y), {xi}, [](Tape& tp, Tape::Id self) {
    const Tape::Id in = tp.inputs(self)[0];
    const Tensor& x = tp.value(in);
    const auto n = static_cast<Eigen::Index>(x.numel());
    CArr xa(x.data(), n);
    CArr dy(tp.grad(self).data(), n);
    Arr dx(tp.grad_buffer(in).data(), n);
    const auto s = (Real(1) / (Real(1) + (-xa).exp())).eval();
    dx += dy * s * (Real(1) + xa * (Real(1) - s));
  });
}

Tape::Id add(Tape& t, Tape::Id ai, Tape::Id bi) {
  const Tensor& a = t.value(ai);
  const Tensor& b = t.value(bi);
  require(a.shape == b.shape, "add: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
  Tensor y(a.shape);
  for (std::size_t i = 0; i < a.numel(); ++i) y.v[i] = a.v[i] + b.v[i];
  return t.push(std::move(y), {ai, bi}, [](Tape& tp, Tape::Id self) {
    const Tensor& dy = tp.grad(self);
    for (Tape::Id in : tp.inputs(self)) {
      if (!tp.needs_grad(in)) continue;
      Tensor& d = tp.grad_buffer(in);
      for (std::size_t i = 0; i < dy.numel(); ++i) d.v[i] += dy.v[i];
    }
  });
}

Tape::Id concat_channels(Tape& t, Tape::Id ai, Tape::Id bi) {
  const Tensor& a = t.value(ai);
  const Tensor& b = t.value(bi);
  require(a.shape.n == b.shape.n && a.shape.h == b.shape.h && a.shape.w == b.shape.w,
          "concat: incompatible " + a.shape.str() + " and " + b.shape.str());
  Tensor y(Shape{a.shape.n, a.shape.c + b.shape.c, a.shape.h, a.shape.w});
  const std::size_t sa = a.shape.c * a.shape.plane();
  const std::size_t sb = b.shape.c * b.shape.plane();
  for (int n = 0; n < a.shape.n; ++n) {
    std::copy_n(a.data() + n * sa, sa, y.data() + n * (sa + sb));
    std::copy_n(b.data() + n * sb, sb, y.data() + n * (sa + sb) + sa);
  }
  return t.push(std::move(y), {ai, bi}, [sa, sb](Tape& tp, Tape::Id self) {
    const auto& in = tp.inputs(self);
    const Tensor& dy = tp.grad(self);
    const int batch = dy.shape.n;
    if (tp.needs_grad(in[0])) {
      Tensor& da = tp.grad_buffer(in[0]);
      for (int n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < sa; ++i) da.v[n * sa + i] += dy.v[n * (sa + sb) + i];
    }
    if (tp.needs_grad(in[1])) {
      Tensor& db = tp.grad_buffer(in[1]);
      for (int n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < sb; ++i) db.v[n * sb + i] += dy.v[n * (sa + sb) + sa + i];
    }
  });
}

Tape::Id upsample_nearest2x(Tape& t, Tape::Id xi) {
  const Tensor& x = t.value(xi);
  const Shape s = x.shape;
  Tensor y(Shape{s.n, s.c, 2 * s.h, 2 * s.w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int yy = 0; yy < 2 * s.h; ++yy)
        for (int xx = 0; xx < 2 * s.w; ++xx) y.at(n, c, yy, xx) = x.at(n, c, yy / 2, xx / 2);
  return t.push(std::move(y), {xi}, [](Tape& tp, Tape::Id self) {
    const Tape::Id in = tp.inputs(self)[0];
    const Tensor& dy = tp.grad(self);
    Tensor& dx = tp.grad_buffer(in);
    const Shape s = dx.shape;
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int yy = 0; yy < 2 * s.h; ++yy)
          for (int xx = 0; xx < 2 * s.w; ++xx) dx.at(n, c, yy / 2, xx / 2) += dy.at(n, c, yy, xx);
  });
}

Tape::Id linear(Tape& t, Tape::Id xi, Tape::Id wi, Tape::Id bi) {
  const Tensor& x = t.value(xi);
  const Tensor& w = t.value(wi);
  const Tensor& b = t.value(bi);
  const int fin = x.shape.c * static_cast<int>(x.shape.plane());
  const int fout = w.shape.n;
  require(w.shape.c == fin && w.shape.plane() == 1, "linear: weight " + w.shape.str() + " vs input " + x.shape.str());
  require(b.numel() == static_cast<std::size_t>(fout), "linear: bias size mismatch");
  Tensor y(Shape{x.shape.n, fout, 1, 1});
  CMapR xm(x.data(), x.shape.n, fin);
  CMapR wm(w.data(), fout, fin);
  MapR ym(y.data(), x.shape.n, fout);
  ym.noalias() = xm * wm.transpose();
  for (int n = 0; n < x.shape.n; ++n)
    for (int o = 0; o < fout; ++o) ym(n, o) += b.v[o];
  return t.push(std::move(y), {xi, wi, bi}, [fin, fout](Tape& tp, Tape::Id self) {
    const auto& in = tp.inputs(self);
    const Tensor& x = tp.value(in[0]);
    const Tensor& w = tp.value(in[1]);
    const Tensor& dy = tp.grad(self);
    const int batch = x.shape.n;
    CMapR dym(dy.data(), batch, fout);
    if (tp.needs_grad(in[0])) {
      MapR dxm(tp.grad_buffer(in[0]).data(), batch, fin);
      dxm.noalias() += dym * CMapR(w.data(), fout, fin);
    }
    if (tp.needs_grad(in[1])) {
      MapR dwm(tp.grad_buffer(in[1]).data(), fout, fin);
      dwm.noalias() += dym.transpose() * CMapR(x.data(), batch, fin);
    }
    if (tp.needs_grad(in[2])) {
      Tensor& db = tp.grad_buffer(in[2]);
      for (int n = 0; n < batch; ++n)
        for (int o = 0; o < fout; ++o) db.v[o] += dym(n, o);
    }
  });
}

Tape::Id add_channel_bias(Tape& t, Tape::Id xi, Tape::Id ei) {
  const Tensor& x = t.value(xi);
  const Tensor& e = t.value(ei);
  require(e.shape.n == x.shape.n && e.shape.c == x.shape.c && e.shape.plane() == 1,
          "add_channel_bias: " + e.shape.str() + " vs " + x.shape.str());
  Tensor y = x;
  const std::size_t plane = x.shape.plane();
  for (int n = 0; n < x.shape.n; ++n)
    for (int c = 0; c < x.shape.c; ++c) {
      Real* p = y.data() + (static_cast<std::size_t>(n) * x.shape.c + c) * plane;
      const Real add = e.v[static_cast<std::size_t>(n) * x.shape.c + c];
      for (std::size_t i = 0; i < plane; ++i) p[i] += add;
    }
  return t.push(std::move(y), {xi, ei}, [](Tape& tp, Tape::Id self) {
    const auto& in = tp.inputs(self);
    const Tensor& dy = tp.grad(self);
    if (tp.needs_grad(in[0])) {
      Tensor& dx = tp.grad_buffer(in[0]);
      for (std::size_t i = 0; i < dy.numel(); ++i) dx.v[i] += dy.v[i];
    }
    if (tp.needs_grad(in[1])) {
      Tensor& de = tp.grad_buffer(in[1]);
      const std::size_t plane = dy.shape.plane();
      for (std::size_t nc = 0; nc < de.numel(); ++nc) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += dy.v[nc * plane + i];
        de.v[nc] += static_cast<Real>(acc);
      }
    }
  });
}

Tape::Id mse(Tape& t, Tape::Id ai, Tape::Id bi) {
  const Tensor& a = t.value(ai);
  const Tensor& b = t.value(bi);
  require(a.shape == b.shape, "mse: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.v[i]) - b.v[i];
    acc += d * d;
  }
  Tensor y(Shape{1, 1, 1, 1}, static_cast<Real>(acc / static_cast<double>(a.numel())));
  return t.push(std::move(y), {ai, bi}, [](Tape& tp, Tape::Id self) {
    const auto& in = tp.inputs(self);
    const Tensor& a = tp.value(in[0]);
    const Tensor& b = tp.value(in[1]);
    const Real scale = tp.grad(self).v[0] * Real(2) / static_cast<Real>(a.numel());
    if (tp.needs_grad(in[0])) {
      Tensor& da = tp.grad_buffer(in[0]);
      for (std::size_t i = 0; i < a.numel(); ++i) da.v[i] += scale * (a.v[i] - b.v[i]);
    }
    if (tp.needs_grad(in[1])) {
      Tensor& db = tp.grad_buffer(in[1]);
      for (std::size_t i = 0; i < a.numel(); ++i) db.v[i] -= scale * (a.v[i] - b.v[i]);
    }
  });
}

Tape::Id weighted_sum(Tape& t, Tape::Id ai, const Tensor& weights) {
  const Tensor& a = t.value(ai);
  require(a.shape == weights.shape, "weighted_sum: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(a.v[i]) * weights.v[i];
  auto w = std::make_shared<Tensor>(weights);
  return t.push(Tensor(Shape{1, 1, 1, 1}, static_cast<Real>(acc)), {ai}, [w](Tape& tp, Tape::Id self) {
    const Tape::Id in = tp.inputs(self)[0];
    const Real g = tp.grad(self).v[0];
    Tensor& da = tp.grad_buffer(in);
    for (std::size_t i = 0; i < da.numel(); ++i) da.v[i] += g * w->v[i];
  });
}

Tensor timestep_embedding(std::span<const int> steps, int dim) {
  require(dim >= 2 && dim % 2 == 0, "timestep_embedding: dim must be even");
  const int half = dim / 2;
  Tensor e(Shape{static_cast<int>(steps.size()), dim, 1, 1});
  for (std::size_t n = 0; n < steps.size(); ++n) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      const double arg = steps[n] * freq;
      e.v[n * dim + i] = static_cast<Real>(std::sin(arg));
      e.v[n * dim + half + i] = static_cast<Real>(std::cos(arg));
    }
  }
  return e;
}

}  // namespace DFWI_NN_ABI
}  // namespace dfwi::nn
