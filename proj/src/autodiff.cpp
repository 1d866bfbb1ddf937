#include "onedf/autodiff.hpp"

#include <cmath>

namespace onedf {

namespace {

template <typename S>
TapeT<S>* same_tape(const VarT<S>& a, const VarT<S>& b) {
  if (a.tape() == nullptr || a.tape() != b.tape())
    throw ContractError("operands belong to different tapes");
  return a.tape();
}

template <typename S>
bool same_dims(const TensorT<S>& a, const TensorT<S>& b) { return a.dims == b.dims; }

template <typename S>
VarT<S> make_out(TapeT<S>* tape, std::vector<int> dims, bool needs_grad) {
  auto t = make_tensor<S>(std::move(dims));
  t->requires_grad = needs_grad && tape->grad_enabled();
  return VarT<S>(tape, t);
}

template <typename S>
bool recording(const VarT<S>& out) { return out.t().requires_grad; }

// Gradient of `out`, or nullptr when no gradient reached it (dead branch).
template <typename S>
const ArrayT<S>* out_grad(const TensorPtrT<S>& out) {
  return out->has_grad() ? &out->grad : nullptr;
}

template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;
template <typename S>
using ColVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

}  // namespace

template <typename S>
void TapeT<S>::backward(const VarT<S>& loss, S seed) {
  if (!loss || loss.tape() != this)
    throw ContractError("backward: loss does not live on this tape");
  if (loss.t().size() != 1)
    throw ContractError("backward: loss must be scalar, got " + dims_str(loss.t().dims));
  if (!loss.t().requires_grad) return;  // constant graph, nothing to do
  loss.node()->ensure_grad();
  loss.node()->grad[0] += seed;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
}

template <typename S>
void TapeT<S>::check_finite() const {
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].out->all_finite())
      throw ContractError("non-finite value in graph node #" + std::to_string(i) +
                          " (" + nodes_[i].op + ")");
  }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename S>
VarT<S> add(const VarT<S>& a, const VarT<S>& b) {
  TapeT<S>* tape = same_tape(a, b);
  if (!same_dims(a.t(), b.t()))
    throw ShapeError("add: " + dims_str(a.t().dims) + " vs " + dims_str(b.t().dims));
  VarT<S> out = make_out(tape, a.t().dims, a.t().requires_grad || b.t().requires_grad);
  out.t().data = a.t().data + b.t().data;
  if (recording(out))
    tape->record("add", out.node(), [pa = a.node(), pb = b.node(), po = out.node()] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      if (pa->requires_grad) pa->accumulate(*g);
      if (pb->requires_grad) pb->accumulate(*g);
    });
  return out;
}

template <typename S>
VarT<S> sub(const VarT<S>& a, const VarT<S>& b) {
  TapeT<S>* tape = same_tape(a, b);
  if (!same_dims(a.t(), b.t()))
    throw ShapeError("sub: " + dims_str(a.t().dims) + " vs " + dims_str(b.t().dims));
  VarT<S> out = make_out(tape, a.t().dims, a.t().requires_grad || b.t().requires_grad);
  out.t().data = a.t().data - b.t().data;
  if (recording(out))
    tape->record("sub", out.node(), [pa = a.node(), pb = b.node(), po = out.node()] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      if (pa->requires_grad) pa->accumulate(*g);
      if (pb->requires_grad) pb->accumulate(-*g);
    });
  return out;
}

template <typename S>
VarT<S> mul(const VarT<S>& a, const VarT<S>& b) {
  TapeT<S>* tape = same_tape(a, b);
  if (!same_dims(a.t(), b.t()))
    throw ShapeError("mul: " + dims_str(a.t().dims) + " vs " + dims_str(b.t().dims));
  VarT<S> out = make_out(tape, a.t().dims, a.t().requires_grad || b.t().requires_grad);
  out.t().data = a.t().data * b.t().data;
  if (recording(out))
    tape->record("mul", out.node(), [pa = a.node(), pb = b.node(), po = out.node()] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      if (pa->requires_grad) pa->accumulate(*g * pb->data);
      if (pb->requires_grad) pb->accumulate(*g * pa->data);
    });
  return out;
}

template <typename S>
VarT<S> scale(const VarT<S>& a, S s) {
  TapeT<S>* tape = a.tape();
  VarT<S> out = make_out(tape, a.t().dims, a.t().requires_grad);
  out.t().data = a.t().data * s;
  if (recording(out))
    tape->record("scale", out.node(), [pa = a.node(), po = out.node(), s] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      if (pa->requires_grad) pa->accumulate(*g * s);
    });
  return out;
}

template <typename S>
VarT<S> relu(const VarT<S>& a) {
  TapeT<S>* tape = a.tape();
  VarT<S> out = make_out(tape, a.t().dims, a.t().requires_grad);
  out.t().data = a.t().data.max(S(0));
  if (recording(out))
    tape->record("relu", out.node(), [pa = a.node(), po = out.node()] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      pa->accumulate(*g * (pa->data > S(0)).template cast<S>());
    });
  return out;
}

template <typename S>
VarT<S> sigmoid(const VarT<S>& a) {
  TapeT<S>* tape = a.tape();
  VarT<S> out = make_out(tape, a.t().dims, a.t().requires_grad);
  // tanh form is stable for large |x|
  out.t().data = S(0.5) * ((S(0.5) * a.t().data).tanh() + S(1));
  if (recording(out))
    tape->record("sigmoid", out.node(), [pa = a.node(), po = out.node()] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      pa->accumulate(*g * po->data * (S(1) - po->data));
    });
  return out;
}

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

template <typename S>
VarT<S> matmul(const VarT<S>& a, const VarT<S>& b) {
  TapeT<S>* tape = same_tape(a, b);
  const TensorT<S>& ta = a.t();
  const TensorT<S>& tb = b.t();
  if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows())
    throw ShapeError("matmul: " + dims_str(ta.dims) + " vs " + dims_str(tb.dims));
  VarT<S> out = make_out(tape, {ta.rows(), tb.cols()}, ta.requires_grad || tb.requires_grad);
  out.t().mat().noalias() = ta.mat() * tb.mat();
  if (recording(out))
    tape->record("matmul", out.node(), [pa = a.node(), pb = b.node(), po = out.node()] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      ConstMatMapT<S> G(g->data(), po->rows(), po->cols());
      if (pa->requires_grad) {
        MatT<S> da(pa->rows(), pa->cols());
        da.noalias() = G * pb->mat().transpose();
        pa->accumulate(Eigen::Map<const ArrayT<S>>(da.data(), da.size()));
      }
      if (pb->requires_grad) {
        MatT<S> db(pb->rows(), pb->cols());
        db.noalias() = pa->mat().transpose() * G;
        pb->accumulate(Eigen::Map<const ArrayT<S>>(db.data(), db.size()));
      }
    });
  return out;
}

template <typename S>
VarT<S> matmul_nt(const VarT<S>& a, const VarT<S>& b) {
  TapeT<S>* tape = same_tape(a, b);
  const TensorT<S>& ta = a.t();
  const TensorT<S>& tb = b.t();
  if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.cols())
    throw ShapeError("matmul_nt: " + dims_str(ta.dims) + " vs " + dims_str(tb.dims));
  VarT<S> out = make_out(tape, {ta.rows(), tb.rows()}, ta.requires_grad || tb.requires_grad);
  out.t().mat().noalias() = ta.mat() * tb.mat().transpose();
  if (recording(out))
    tape->record("matmul_nt", out.node(), [pa = a.node(), pb = b.node(), po = out.node()] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      ConstMatMapT<S> G(g->data(), po->rows(), po->cols());
      if (pa->requires_grad) {
        MatT<S> da(pa->rows(), pa->cols());
        da.noalias() = G * pb->mat();
        pa->accumulate(Eigen::Map<const ArrayT<S>>(da.data(), da.size()));
      }
      if (pb->requires_grad) {
        MatT<S> db(pb->rows(), pb->cols());
        db.noalias() = G.transpose() * pa->mat();
        pb->accumulate(Eigen::Map<const ArrayT<S>>(db.data(), db.size()));
      }
    });
  return out;
}

template <typename S>
VarT<S> linear(const VarT<S>& x, const VarT<S>& w, const VarT<S>& bias) {
  TapeT<S>* tape = same_tape(x, w);
  same_tape(w, bias);
  const TensorT<S>& tx = x.t();
  const TensorT<S>& tw = w.t();
  const TensorT<S>& tb = bias.t();
  if (tx.rank() != 2 || tw.rank() != 2 || tx.cols() != tw.cols())
    throw ShapeError("linear: x " + dims_str(tx.dims) + " vs w " + dims_str(tw.dims));
  if (tb.rank() != 2 || tb.rows() != 1 || tb.cols() != tw.rows())
    throw ShapeError("linear: bias " + dims_str(tb.dims) + " vs w " + dims_str(tw.dims));
  const int m = tx.rows(), out_dim = tw.rows();
  VarT<S> out = make_out(tape, {m, out_dim},
                         tx.requires_grad || tw.requires_grad || tb.requires_grad);
  MatMapT<S> o = out.t().mat();
  o.noalias() = tx.mat() * tw.mat().transpose();
  o.rowwise() += Eigen::Map<const RowVec<S>>(tb.data.data(), out_dim);
  if (recording(out))
    tape->record("linear", out.node(),
                 [px = x.node(), pw = w.node(), pb = bias.node(), po = out.node()] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      ConstMatMapT<S> G(g->data(), po->rows(), po->cols());
      if (px->requires_grad) {
        MatT<S> dx(px->rows(), px->cols());
        dx.noalias() = G * pw->mat();
        px->accumulate(Eigen::Map<const ArrayT<S>>(dx.data(), dx.size()));
      }
      if (pw->requires_grad) {
        MatT<S> dw(pw->rows(), pw->cols());
        dw.noalias() = G.transpose() * px->mat();
        pw->accumulate(Eigen::Map<const ArrayT<S>>(dw.data(), dw.size()));
      }
      if (pb->requires_grad) {
        RowVec<S> db = G.colwise().sum();
        pb->accumulate(Eigen::Map<const ArrayT<S>>(db.data(), db.size()));
      }
    });
  return out;
}

// ---------------------------------------------------------------------------
// softmax / layer norm
// ---------------------------------------------------------------------------

template <typename S>
VarT<S> softmax(const VarT<S>& x) {
  TapeT<S>* tape = x.tape();
  const TensorT<S>& tx = x.t();
  if (tx.rank() != 2 || tx.cols() < 1)
    throw ShapeError("softmax: rank-2 tensor expected, got " + dims_str(tx.dims));
  VarT<S> out = make_out(tape, tx.dims, tx.requires_grad);
  const int r = tx.rows(), c = tx.cols();
  for (int i = 0; i < r; ++i) {
    auto row = tx.data.segment(int64_t(i) * c, c);
    ArrayT<S> e = (row - row.maxCoeff()).exp();
    out.t().data.segment(int64_t(i) * c, c) = e / e.sum();
  }
  if (recording(out))
    tape->record("softmax", out.node(), [px = x.node(), po = out.node()] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      const int rr = po->rows(), cc = po->cols();
      ArrayT<S> dx(po->size());
      for (int i = 0; i < rr; ++i) {
        auto y = po->data.segment(int64_t(i) * cc, cc);
        auto gy = g->segment(int64_t(i) * cc, cc);
        const S dot = (gy * y).sum();
        dx.segment(int64_t(i) * cc, cc) = y * (gy - dot);
      }
      px->accumulate(dx);
    });
  return out;
}

template <typename S>
VarT<S> layer_norm(const VarT<S>& x, const VarT<S>& gain, const VarT<S>& bias) {
  TapeT<S>* tape = same_tape(x, gain);
  same_tape(gain, bias);
  const S kEps = S(1e-5);
  const TensorT<S>& tx = x.t();
  if (tx.rank() != 2) throw ShapeError("layer_norm: rank-2 tensor expected");
  const int r = tx.rows(), c = tx.cols();
  if (c < 2) throw ConfigError("layer_norm: normalized extent must be >= 2, got " +
                               std::to_string(c));
  if (gain.t().dims != std::vector<int>{1, c} || bias.t().dims != std::vector<int>{1, c})
    throw ShapeError("layer_norm: affine extent mismatch with " + dims_str(tx.dims));
  VarT<S> out = make_out(tape, tx.dims,
                         tx.requires_grad || gain.t().requires_grad || bias.t().requires_grad);
  ArrayT<S> inv(r);
  ArrayT<S> xhat(tx.size());
  for (int i = 0; i < r; ++i) {
    auto row = tx.data.segment(int64_t(i) * c, c);
    const S mu = row.mean();
    const S var = (row - mu).square().mean();
    const S is = S(1) / std::sqrt(var + kEps);
    inv[i] = is;
    xhat.segment(int64_t(i) * c, c) = (row - mu) * is;
    out.t().data.segment(int64_t(i) * c, c) =
        xhat.segment(int64_t(i) * c, c) * gain.t().data + bias.t().data;
  }
  if (recording(out))
    tape->record("layer_norm", out.node(),
                 [px = x.node(), pg = gain.node(), pb = bias.node(), po = out.node(),
                  inv = std::move(inv), xhat = std::move(xhat)] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      const int rr = po->rows(), cc = po->cols();
      if (pg->requires_grad) {
        ArrayT<S> dg = ArrayT<S>::Zero(cc);
        for (int i = 0; i < rr; ++i)
          dg += g->segment(int64_t(i) * cc, cc) * xhat.segment(int64_t(i) * cc, cc);
        pg->accumulate(dg);
      }
      if (pb->requires_grad) {
        ArrayT<S> db = ArrayT<S>::Zero(cc);
        for (int i = 0; i < rr; ++i) db += g->segment(int64_t(i) * cc, cc);
        pb->accumulate(db);
      }
      if (px->requires_grad) {
        ArrayT<S> dx(po->size());
        for (int i = 0; i < rr; ++i) {
          auto gy = g->segment(int64_t(i) * cc, cc);
          auto xh = xhat.segment(int64_t(i) * cc, cc);
          ArrayT<S> dxh = gy * pg->data;
          const S m1 = dxh.mean();
          const S m2 = (dxh * xh).mean();
          dx.segment(int64_t(i) * cc, cc) = inv[i] * (dxh - m1 - xh * m2);
        }
        px->accumulate(dx);
      }
    });
  return out;
}

// ---------------------------------------------------------------------------
// convolutions
// ---------------------------------------------------------------------------

template <typename S>
VarT<S> conv1d(const VarT<S>& x, const VarT<S>& k, const VarT<S>& bias, int stride, int pad) {
  TapeT<S>* tape = same_tape(x, k);
  same_tape(k, bias);
  const TensorT<S>& tx = x.t();
  const TensorT<S>& tk = k.t();
  if (tx.rank() != 2 || tk.rank() != 3)
    throw ShapeError("conv1d: x " + dims_str(tx.dims) + ", k " + dims_str(tk.dims));
  const int ci = tx.dim(0), len = tx.dim(1);
  const int co = tk.dim(0), kci = tk.dim(1), kw = tk.dim(2);
  if (kci != ci)
    throw ShapeError("conv1d: channel mismatch, x " + dims_str(tx.dims) + " vs k " +
                     dims_str(tk.dims));
  if (bias.t().dims != std::vector<int>{1, co})
    throw ShapeError("conv1d: bias must be [1x" + std::to_string(co) + "]");
  if (stride < 1 || pad < 0) throw ConfigError("conv1d: bad stride/padding");
  const int out_len = (len + 2 * pad - kw) / stride + 1;
  if (len + 2 * pad - kw < 0 || out_len <= 0)
    throw ShapeError("conv1d: empty output for input length " + std::to_string(len) +
                     ", kernel " + std::to_string(kw) + ", stride " + std::to_string(stride) +
                     ", padding " + std::to_string(pad));

  VarT<S> out = make_out(tape, {co, out_len},
                         tx.requires_grad || tk.requires_grad || bias.t().requires_grad);
  const S* xd = tx.data.data();
  const S* kd = tk.data.data();
  S* od = out.t().data.data();
  for (int oc = 0; oc < co; ++oc) {
    const S b = bias.t().data[oc];
    for (int op = 0; op < out_len; ++op) {
      S acc = b;
      const int base = op * stride - pad;
      for (int ic = 0; ic < ci; ++ic) {
        const S* xr = xd + int64_t(ic) * len;
        const S* kr = kd + (int64_t(oc) * ci + ic) * kw;
        const int t0 = std::max(0, -base);
        const int t1 = std::min(kw, len - base);
        for (int t = t0; t < t1; ++t) acc += xr[base + t] * kr[t];
      }
      od[int64_t(oc) * out_len + op] = acc;
    }
  }
  if (recording(out))
    tape->record("conv1d", out.node(),
                 [px = x.node(), pk = k.node(), pb = bias.node(), po = out.node(),
                  stride, pad] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      const int co = pk->dim(0), ci = pk->dim(1), kw = pk->dim(2);
      const int len = px->dim(1), out_len = po->dim(1);
      const S* gd = g->data();
      if (pb->requires_grad) {
        ArrayT<S> db = ArrayT<S>::Zero(co);
        for (int oc = 0; oc < co; ++oc)
          db[oc] = g->segment(int64_t(oc) * out_len, out_len).sum();
        pb->accumulate(db);
      }
      if (px->requires_grad) {
        ArrayT<S> dx = ArrayT<S>::Zero(px->size());
        for (int oc = 0; oc < co; ++oc)
          for (int op = 0; op < out_len; ++op) {
            const S gv = gd[int64_t(oc) * out_len + op];
            const int base = op * stride - pad;
            for (int ic = 0; ic < ci; ++ic) {
              const S* kr = pk->data.data() + (int64_t(oc) * ci + ic) * kw;
              S* dxr = dx.data() + int64_t(ic) * len;
              const int t0 = std::max(0, -base);
              const int t1 = std::min(kw, len - base);
              for (int t = t0; t < t1; ++t) dxr[base + t] += gv * kr[t];
            }
          }
        px->accumulate(dx);
      }
      if (pk->requires_grad) {
        ArrayT<S> dk = ArrayT<S>::Zero(pk->size());
        for (int oc = 0; oc < co; ++oc)
          for (int op = 0; op < out_len; ++op) {
            const S gv = gd[int64_t(oc) * out_len + op];
            const int base = op * stride - pad;
            for (int ic = 0; ic < ci; ++ic) {
              const S* xr = px->data.data() + int64_t(ic) * len;
              S* dkr = dk.data() + (int64_t(oc) * ci + ic) * kw;
              const int t0 = std::max(0, -base);
              const int t1 = std::min(kw, len - base);
              for (int t = t0; t < t1; ++t) dkr[t] += gv * xr[base + t];
            }
          }
        pk->accumulate(dk);
      }
    });
  return out;
}

template <typename S>
VarT<S> conv2d(const VarT<S>& x, const VarT<S>& k, const VarT<S>& bias, int stride, int pad) {
  TapeT<S>* tape = same_tape(x, k);
  same_tape(k, bias);
  const TensorT<S>& tx = x.t();
  const TensorT<S>& tk = k.t();
  if (tx.rank() != 3 || tk.rank() != 4)
    throw ShapeError("conv2d: x " + dims_str(tx.dims) + ", k " + dims_str(tk.dims));
  const int ci = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
  const int co = tk.dim(0), kci = tk.dim(1), kh = tk.dim(2), kw = tk.dim(3);
  if (kci != ci)
    throw ShapeError("conv2d: channel mismatch, x " + dims_str(tx.dims) + " vs k " +
                     dims_str(tk.dims));
  if (bias.t().dims != std::vector<int>{1, co})
    throw ShapeError("conv2d: bias must be [1x" + std::to_string(co) + "]");
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (w + 2 * pad - kw) / stride + 1;
  if (h + 2 * pad - kh < 0 || oh <= 0 || ow <= 0)
    throw ShapeError("conv2d: empty output for input " + dims_str(tx.dims));

  VarT<S> out = make_out(tape, {co, oh, ow},
                         tx.requires_grad || tk.requires_grad || bias.t().requires_grad);
  const S* xd = tx.data.data();
  const S* kd = tk.data.data();
  S* od = out.t().data.data();
  for (int oc = 0; oc < co; ++oc) {
    const S b = bias.t().data[oc];
    for (int oy = 0; oy < oh; ++oy) {
      const int ybase = oy * stride - pad;
      for (int ox = 0; ox < ow; ++ox) {
        const int xbase = ox * stride - pad;
        S acc = b;
        for (int ic = 0; ic < ci; ++ic) {
          const S* xc = xd + int64_t(ic) * h * w;
          const S* kc = kd + ((int64_t(oc) * ci + ic) * kh) * kw;
          const int ty0 = std::max(0, -ybase), ty1 = std::min(kh, h - ybase);
          const int tx0 = std::max(0, -xbase), tx1 = std::min(kw, w - xbase);
          for (int ty = ty0; ty < ty1; ++ty) {
            const S* xrow = xc + int64_t(ybase + ty) * w + xbase;
            const S* krow = kc + int64_t(ty) * kw;
            for (int t = tx0; t < tx1; ++t) acc += xrow[t] * krow[t];
          }
        }
        od[(int64_t(oc) * oh + oy) * ow + ox] = acc;
      }
    }
  }
  if (recording(out))
    tape->record("conv2d", out.node(),
                 [px = x.node(), pk = k.node(), pb = bias.node(), po = out.node(),
                  stride, pad] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      const int co = pk->dim(0), ci = pk->dim(1), kh = pk->dim(2), kw = pk->dim(3);
      const int h = px->dim(1), w = px->dim(2);
      const int oh = po->dim(1), ow = po->dim(2);
      const S* gd = g->data();
      if (pb->requires_grad) {
        ArrayT<S> db = ArrayT<S>::Zero(co);
        for (int oc = 0; oc < co; ++oc)
          db[oc] = g->segment(int64_t(oc) * oh * ow, int64_t(oh) * ow).sum();
        pb->accumulate(db);
      }
      const bool need_dx = px->requires_grad;
      const bool need_dk = pk->requires_grad;
      if (!need_dx && !need_dk) return;
      ArrayT<S> dx = need_dx ? ArrayT<S>::Zero(px->size()) : ArrayT<S>();
      ArrayT<S> dk = need_dk ? ArrayT<S>::Zero(pk->size()) : ArrayT<S>();
      for (int oc = 0; oc < co; ++oc)
        for (int oy = 0; oy < oh; ++oy) {
          const int ybase = oy * stride - pad;
          for (int ox = 0; ox < ow; ++ox) {
            const int xbase = ox * stride - pad;
            const S gv = gd[(int64_t(oc) * oh + oy) * ow + ox];
            if (gv == S(0)) continue;
            for (int ic = 0; ic < ci; ++ic) {
              const int ty0 = std::max(0, -ybase), ty1 = std::min(kh, h - ybase);
              const int tx0 = std::max(0, -xbase), tx1 = std::min(kw, w - xbase);
              for (int ty = ty0; ty < ty1; ++ty) {
                const int64_t xoff = int64_t(ic) * h * w + int64_t(ybase + ty) * w + xbase;
                const int64_t koff = ((int64_t(oc) * ci + ic) * kh + ty) * kw;
                for (int t = tx0; t < tx1; ++t) {
                  if (need_dx) dx[xoff + t] += gv * pk->data[koff + t];
                  if (need_dk) dk[koff + t] += gv * px->data[xoff + t];
                }
              }
            }
          }
        }
      if (need_dx) px->accumulate(dx);
      if (need_dk) pk->accumulate(dk);
    });
  return out;
}

// ---------------------------------------------------------------------------
// structure ops
// ---------------------------------------------------------------------------

template <typename S>
VarT<S> concat_rows(std::span<const VarT<S>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  TapeT<S>* tape = parts[0].tape();
  const int c = parts[0].t().cols();
  int rows = 0;
  bool needs = false;
  for (const VarT<S>& p : parts) {
    if (p.tape() != tape) throw ContractError("concat_rows: mixed tapes");
    if (p.t().cols() != c)
      throw ShapeError("concat_rows: column mismatch " + dims_str(p.t().dims));
    rows += p.t().rows();
    needs = needs || p.t().requires_grad;
  }
  VarT<S> out = make_out(tape, {rows, c}, needs);
  int64_t off = 0;
  for (const VarT<S>& p : parts) {
    out.t().data.segment(off, p.t().size()) = p.t().data;
    off += p.t().size();
  }
  if (recording(out)) {
    std::vector<TensorPtrT<S>> srcs;
    for (const VarT<S>& p : parts) srcs.push_back(p.node());
    tape->record("concat_rows", out.node(), [srcs = std::move(srcs), po = out.node()] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      int64_t off = 0;
      for (const auto& s : srcs) {
        if (s->requires_grad) s->accumulate(g->segment(off, s->size()));
        off += s->size();
      }
    });
  }
  return out;
}

template <typename S>
VarT<S> concat_cols(std::span<const VarT<S>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  TapeT<S>* tape = parts[0].tape();
  int cols = 0;
  bool needs = false;
  for (const VarT<S>& p : parts) {
    if (p.tape() != tape) throw ContractError("concat_cols: mixed tapes");
    if (p.t().rank() != 2 || p.t().rows() != 1)
      throw ShapeError("concat_cols: single-row inputs expected, got " + dims_str(p.t().dims));
    cols += p.t().cols();
    needs = needs || p.t().requires_grad;
  }
  VarT<S> out = make_out(tape, {1, cols}, needs);
  int64_t off = 0;
  for (const VarT<S>& p : parts) {
    out.t().data.segment(off, p.t().size()) = p.t().data;
    off += p.t().size();
  }
  if (recording(out)) {
    std::vector<TensorPtrT<S>> srcs;
    for (const VarT<S>& p : parts) srcs.push_back(p.node());
    tape->record("concat_cols", out.node(), [srcs = std::move(srcs), po = out.node()] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      int64_t off = 0;
      for (const auto& s : srcs) {
        if (s->requires_grad) s->accumulate(g->segment(off, s->size()));
        off += s->size();
      }
    });
  }
  return out;
}

template <typename S>
VarT<S> slice_row(const VarT<S>& x, int row) { return slice_rows(x, row, 1); }

template <typename S>
VarT<S> slice_rows(const VarT<S>& x, int row, int count) {
  TapeT<S>* tape = x.tape();
  const TensorT<S>& tx = x.t();
  const int r = tx.rows(), c = tx.cols();
  if (row < 0 || count < 1 || row + count > r)
    throw ShapeError("slice_rows: [" + std::to_string(row) + ", " +
                     std::to_string(row + count) + ") out of " + dims_str(tx.dims));
  VarT<S> out = make_out(tape, {count, c}, tx.requires_grad);
  out.t().data = tx.data.segment(int64_t(row) * c, int64_t(count) * c);
  if (recording(out))
    tape->record("slice_rows", out.node(), [px = x.node(), po = out.node(), row, c] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      px->ensure_grad();
      px->grad.segment(int64_t(row) * c, g->size()) += *g;
    });
  return out;
}

template <typename S>
VarT<S> slice_cols(const VarT<S>& x, int col, int count) {
  TapeT<S>* tape = x.tape();
  const TensorT<S>& tx = x.t();
  const int r = tx.rows(), c = tx.cols();
  if (col < 0 || count < 1 || col + count > c)
    throw ShapeError("slice_cols: [" + std::to_string(col) + ", " +
                     std::to_string(col + count) + ") out of " + dims_str(tx.dims));
  VarT<S> out = make_out(tape, {r, count}, tx.requires_grad);
  for (int i = 0; i < r; ++i)
    out.t().data.segment(int64_t(i) * count, count) =
        tx.data.segment(int64_t(i) * c + col, count);
  if (recording(out))
    tape->record("slice_cols", out.node(), [px = x.node(), po = out.node(), col] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      const int rr = po->rows(), cnt = po->cols(), c = px->cols();
      px->ensure_grad();
      for (int i = 0; i < rr; ++i)
        px->grad.segment(int64_t(i) * c + col, cnt) += g->segment(int64_t(i) * cnt, cnt);
    });
  return out;
}

template <typename S>
VarT<S> row3(const VarT<S>& x, int i0, int i1) {
  TapeT<S>* tape = x.tape();
  const TensorT<S>& tx = x.t();
  if (tx.rank() != 3) throw ShapeError("row3: rank-3 tensor expected, got " + dims_str(tx.dims));
  const int a = tx.dim(0), b = tx.dim(1), c = tx.dim(2);
  if (i0 < 0 || i0 >= a || i1 < 0 || i1 >= b)
    throw ShapeError("row3: index (" + std::to_string(i0) + ", " + std::to_string(i1) +
                     ") out of " + dims_str(tx.dims));
  VarT<S> out = make_out(tape, {1, c}, tx.requires_grad);
  const int64_t off = (int64_t(i0) * b + i1) * c;
  out.t().data = tx.data.segment(off, c);
  if (recording(out))
    tape->record("row3", out.node(), [px = x.node(), po = out.node(), off] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      px->ensure_grad();
      px->grad.segment(off, g->size()) += *g;
    });
  return out;
}

template <typename S>
VarT<S> reshape(const VarT<S>& x, std::vector<int> dims) {
  TapeT<S>* tape = x.tape();
  if (numel(dims) != x.t().size())
    throw ShapeError("reshape: " + dims_str(x.t().dims) + " -> " + dims_str(dims));
  VarT<S> out = make_out(tape, std::move(dims), x.t().requires_grad);
  out.t().data = x.t().data;
  if (recording(out))
    tape->record("reshape", out.node(), [px = x.node(), po = out.node()] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      px->accumulate(*g);
    });
  return out;
}

template <typename S>
VarT<S> transpose(const VarT<S>& x) {
  TapeT<S>* tape = x.tape();
  const TensorT<S>& tx = x.t();
  VarT<S> out = make_out(tape, {tx.cols(), tx.rows()}, tx.requires_grad);
  out.t().mat() = tx.mat().transpose();
  if (recording(out))
    tape->record("transpose", out.node(), [px = x.node(), po = out.node()] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      ConstMatMapT<S> G(g->data(), po->rows(), po->cols());
      MatT<S> gt = G.transpose();
      px->accumulate(Eigen::Map<const ArrayT<S>>(gt.data(), gt.size()));
    });
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename S>
VarT<S> mean_rows(const VarT<S>& x) {
  TapeT<S>* tape = x.tape();
  const TensorT<S>& tx = x.t();
  const int r = tx.rows(), c = tx.cols();
  VarT<S> out = make_out(tape, {1, c}, tx.requires_grad);
  Eigen::Map<RowVec<S>>(out.t().data.data(), c) = tx.mat().colwise().mean();
  if (recording(out))
    tape->record("mean_rows", out.node(), [px = x.node(), po = out.node(), r, c] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      ArrayT<S> dx(int64_t(r) * c);
      for (int i = 0; i < r; ++i) dx.segment(int64_t(i) * c, c) = *g / S(r);
      px->accumulate(dx);
    });
  return out;
}

template <typename S>
VarT<S> mean_axis1(const VarT<S>& x) {
  TapeT<S>* tape = x.tape();
  const TensorT<S>& tx = x.t();
  if (tx.rank() != 3) throw ShapeError("mean_axis1: rank-3 tensor expected");
  const int cch = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
  VarT<S> out = make_out(tape, {cch, w}, tx.requires_grad);
  for (int ic = 0; ic < cch; ++ic) {
    ConstMatMapT<S> plane(tx.data.data() + int64_t(ic) * h * w, h, w);
    Eigen::Map<RowVec<S>>(out.t().data.data() + int64_t(ic) * w, w) = plane.colwise().mean();
  }
  if (recording(out))
    tape->record("mean_axis1", out.node(), [px = x.node(), po = out.node(), h, w] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      const int cch = px->dim(0);
      ArrayT<S> dx = ArrayT<S>::Zero(px->size());
      for (int ic = 0; ic < cch; ++ic)
        for (int iy = 0; iy < h; ++iy)
          dx.segment((int64_t(ic) * h + iy) * w, w) += g->segment(int64_t(ic) * w, w) / S(h);
      px->accumulate(dx);
    });
  return out;
}

template <typename S>
VarT<S> mean_axis2(const VarT<S>& x) {
  TapeT<S>* tape = x.tape();
  const TensorT<S>& tx = x.t();
  if (tx.rank() != 3) throw ShapeError("mean_axis2: rank-3 tensor expected");
  const int cch = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
  VarT<S> out = make_out(tape, {cch, h}, tx.requires_grad);
  for (int ic = 0; ic < cch; ++ic) {
    ConstMatMapT<S> plane(tx.data.data() + int64_t(ic) * h * w, h, w);
    Eigen::Map<ColVec<S>>(out.t().data.data() + int64_t(ic) * h, h) = plane.rowwise().mean();
  }
  if (recording(out))
    tape->record("mean_axis2", out.node(), [px = x.node(), po = out.node(), h, w] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      const int cch = px->dim(0);
      ArrayT<S> dx = ArrayT<S>::Zero(px->size());
      for (int ic = 0; ic < cch; ++ic)
        for (int iy = 0; iy < h; ++iy)
          dx.segment((int64_t(ic) * h + iy) * w, w) += (*g)[int64_t(ic) * h + iy] / S(w);
      px->accumulate(dx);
    });
  return out;
}

template <typename S>
VarT<S> mean_all(const VarT<S>& x) {
  TapeT<S>* tape = x.tape();
  VarT<S> out = make_out(tape, {1, 1}, x.t().requires_grad);
  out.t().data[0] = x.t().data.mean();
  if (recording(out))
    tape->record("mean_all", out.node(), [px = x.node(), po = out.node()] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      px->accumulate(ArrayT<S>::Constant(px->size(), (*g)[0] / S(px->size())));
    });
  return out;
}

template <typename S>
VarT<S> sum_sq(const VarT<S>& x) {
  TapeT<S>* tape = x.tape();
  VarT<S> out = make_out(tape, {1, 1}, x.t().requires_grad);
  out.t().data[0] = x.t().data.square().sum();
  if (recording(out))
    tape->record("sum_sq", out.node(), [px = x.node(), po = out.node()] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      px->accumulate(S(2) * (*g)[0] * px->data);
    });
  return out;
}

template <typename S>
VarT<S> detach(const VarT<S>& x) {
  VarT<S> out = make_out(x.tape(), x.t().dims, false);
  out.t().data = x.t().data;
  return out;
}

template <typename S>
VarT<S> apply_alp(const VarT<S>& window, const VarT<S>& table, int landmark) {
  TapeT<S>* tape = same_tape(window, table);
  const TensorT<S>& tw = window.t();
  const TensorT<S>& tt = table.t();
  if (tw.rank() != 2 || tt.rank() != 3)
    throw ShapeError("apply_alp: window " + dims_str(tw.dims) + ", table " + dims_str(tt.dims));
  const int wlen = tw.rows(), feat = tw.cols();
  const int n = tt.dim(0), wmax = tt.dim(1), tfeat = tt.dim(2);
  if (landmark < 0 || landmark >= n)
    throw ShapeError("apply_alp: landmark " + std::to_string(landmark) + " out of " +
                     std::to_string(n));
  if (wlen > wmax)
    throw ShapeError("apply_alp: window length " + std::to_string(wlen) +
                     " exceeds table capacity " + std::to_string(wmax));
  if (feat != tfeat)
    throw ShapeError("apply_alp: feature extent mismatch " + dims_str(tw.dims) + " vs " +
                     dims_str(tt.dims));
  VarT<S> out = make_out(tape, tw.dims, tw.requires_grad || tt.requires_grad);
  const int64_t base = int64_t(landmark) * wmax * feat;
  for (int w = 0; w < wlen; ++w)
    out.t().data.segment(int64_t(w) * feat, feat) =
        tw.data.segment(int64_t(w) * feat, feat) +
        tt.data.segment(base + int64_t(w) * feat, feat);
  if (recording(out))
    tape->record("apply_alp", out.node(),
                 [pw = window.node(), pt = table.node(), po = out.node(), base] {
      const ArrayT<S>* g = out_grad(po);
      if (!g) return;
      if (pw->requires_grad) pw->accumulate(*g);
      if (pt->requires_grad) {
        const int wlen = po->rows(), feat = po->cols();
        pt->ensure_grad();
        for (int w = 0; w < wlen; ++w)
          pt->grad.segment(base + int64_t(w) * feat, feat) +=
              g->segment(int64_t(w) * feat, feat);
      }
    });
  return out;
}

#define ONEDF_INSTANTIATE_OPS(S)                                                \
  template class TapeT<S>;                                                     \
  template VarT<S> add(const VarT<S>&, const VarT<S>&);                        \
  template VarT<S> sub(const VarT<S>&, const VarT<S>&);                        \
  template VarT<S> mul(const VarT<S>&, const VarT<S>&);                        \
  template VarT<S> scale(const VarT<S>&, S);                                   \
  template VarT<S> relu(const VarT<S>&);                                       \
  template VarT<S> sigmoid(const VarT<S>&);                                    \
  template VarT<S> matmul(const VarT<S>&, const VarT<S>&);                     \
  template VarT<S> matmul_nt(const VarT<S>&, const VarT<S>&);                  \
  template VarT<S> linear(const VarT<S>&, const VarT<S>&, const VarT<S>&);     \
  template VarT<S> softmax(const VarT<S>&);                                    \
  template VarT<S> layer_norm(const VarT<S>&, const VarT<S>&, const VarT<S>&); \
  template VarT<S> conv1d(const VarT<S>&, const VarT<S>&, const VarT<S>&, int, int); \
  template VarT<S> conv2d(const VarT<S>&, const VarT<S>&, const VarT<S>&, int, int); \
  template VarT<S> concat_rows(std::span<const VarT<S>>);                      \
  template VarT<S> concat_cols(std::span<const VarT<S>>);                      \
  template VarT<S> slice_row(const VarT<S>&, int);                             \
  template VarT<S> slice_rows(const VarT<S>&, int, int);                       \
  template VarT<S> slice_cols(const VarT<S>&, int, int);                       \
  template VarT<S> row3(const VarT<S>&, int, int);                             \
  template VarT<S> reshape(const VarT<S>&, std::vector<int>);                  \
  template VarT<S> transpose(const VarT<S>&);                                  \
  template VarT<S> mean_rows(const VarT<S>&);                                  \
  template VarT<S> mean_axis1(const VarT<S>&);                                 \
  template VarT<S> mean_axis2(const VarT<S>&);                                 \
  template VarT<S> mean_all(const VarT<S>&);                                   \
  template VarT<S> sum_sq(const VarT<S>&);                                     \
  template VarT<S> detach(const VarT<S>&);                                      \
  template VarT<S> apply_alp(const VarT<S>&, const VarT<S>&, int);

ONEDF_INSTANTIATE_OPS(float)
ONEDF_INSTANTIATE_OPS(double)
#undef ONEDF_INSTANTIATE_OPS

}  // namespace onedf
