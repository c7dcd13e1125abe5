#include "cevae/ops.hpp"

#include <algorithm>
#include <cmath>

#include <cblas.h>

namespace cevae::ops {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

namespace {

struct Bcast {
  Shape out;
  std::vector<int64_t> sa, sb;
  int64_t n = 0;
};

Bcast make_bcast(const Shape& a, const Shape& b) {
  Bcast bc;
  int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  int r = std::max(ra, rb);
  bc.out.resize(static_cast<size_t>(r));
  auto stra = row_major_strides(a), strb = row_major_strides(b);
  bc.sa.assign(static_cast<size_t>(r), 0);
  bc.sb.assign(static_cast<size_t>(r), 0);
  for (int d = 0; d < r; ++d) {
    int da = d - (r - ra), db = d - (r - rb);
    int va = da >= 0 ? a[static_cast<size_t>(da)] : 1;
    int vb = db >= 0 ? b[static_cast<size_t>(db)] : 1;
    if (va != vb && va != 1 && vb != 1)
      throw Error(ErrorKind::Input,
                  "broadcast mismatch: " + shape_str(a) + " vs " + shape_str(b));
    bc.out[static_cast<size_t>(d)] = std::max(va, vb);
    if (da >= 0 && va != 1) bc.sa[static_cast<size_t>(d)] = stra[static_cast<size_t>(da)];
    if (db >= 0 && vb != 1) bc.sb[static_cast<size_t>(d)] = strb[static_cast<size_t>(db)];
  }
  bc.n = Tensor::count(bc.out);
  return bc;
}

template <class F>
void bc_for_each(const Bcast& bc, F&& f) {
  int r = static_cast<int>(bc.out.size());
  std::vector<int> idx(static_cast<size_t>(r), 0);
  int64_t ia = 0, ib = 0;
  for (int64_t io = 0; io < bc.n; ++io) {
    f(io, ia, ib);
    for (int d = r - 1; d >= 0; --d) {
      auto ud = static_cast<size_t>(d);
      ++idx[ud];
      ia += bc.sa[ud];
      ib += bc.sb[ud];
      if (idx[ud] < bc.out[ud]) break;
      idx[ud] = 0;
      ia -= bc.sa[ud] * bc.out[ud];
      ib -= bc.sb[ud] * bc.out[ud];
    }
  }
}

// f(va, vb) forward, dfa/dfb partial derivatives.
template <class F, class Da, class Db>
Var binary(const Var& a, const Var& b, F f, Da dfa, Db dfb) {
  if (a->value.shape == b->value.shape) {
    Tensor out(a->value.shape);
    const auto& av = a->value;
    const auto& bv = b->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = f(av[i], bv[i]);
    return make_op(std::move(out), {a, b}, [f, dfa, dfb](Node& n) {
      Node& A = *n.parents[0];
      Node& B = *n.parents[1];
      bool na = A.requires_grad, nb = B.requires_grad;
      if (na) A.ensure_grad();
      if (nb) B.ensure_grad();
      for (int64_t i = 0; i < n.grad.numel(); ++i) {
        double g = n.grad[i];
        if (na) A.grad[i] += g * dfa(A.value[i], B.value[i]);
        if (nb) B.grad[i] += g * dfb(A.value[i], B.value[i]);
      }
    });
  }
  Bcast bc = make_bcast(a->value.shape, b->value.shape);
  Tensor out(bc.out);
  {
    const auto& av = a->value;
    const auto& bv = b->value;
    bc_for_each(bc, [&](int64_t io, int64_t ia, int64_t ib) { out[io] = f(av[ia], bv[ib]); });
  }
  return make_op(std::move(out), {a, b}, [bc, f, dfa, dfb](Node& n) {
    Node& A = *n.parents[0];
    Node& B = *n.parents[1];
    bool na = A.requires_grad, nb = B.requires_grad;
    if (na) A.ensure_grad();
    if (nb) B.ensure_grad();
    bc_for_each(bc, [&](int64_t io, int64_t ia, int64_t ib) {
      double g = n.grad[io];
      if (na) A.grad[ia] += g * dfa(A.value[ia], B.value[ib]);
      if (nb) B.grad[ib] += g * dfb(A.value[ia], B.value[ib]);
    });
  });
}

template <class F, class D>
Var unary(const Var& a, F f, D df) {
  Tensor out(a->value.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = f(a->value[i]);
  return make_op(std::move(out), {a}, [f, df](Node& n) {
    Node& A = *n.parents[0];
    if (!A.requires_grad) return;
    A.ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      A.grad[i] += n.grad[i] * df(A.value[i], n.value[i]);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary(
      a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var div(const Var& a, const Var& b) {
  return binary(
      a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Var add_scalar(const Var& a, double s) {
  return unary(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var mul_scalar(const Var& a, double s) {
  return unary(
      a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var exp(const Var& a) {
  return unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var sqrt(const Var& a) {
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Var abs(const Var& a) {
  return unary(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& a) {
  return unary(
      a,
      [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

namespace {

// Iterates input linear indices together with the matching output index,
// where out_strides carry 0 on reduced axes.
template <class F>
void reduce_for_each(const Shape& in, const std::vector<int64_t>& out_strides, F&& f) {
  int r = static_cast<int>(in.size());
  std::vector<int> idx(static_cast<size_t>(r), 0);
  int64_t n = Tensor::count(in);
  int64_t io = 0;
  for (int64_t ii = 0; ii < n; ++ii) {
    f(ii, io);
    for (int d = r - 1; d >= 0; --d) {
      auto ud = static_cast<size_t>(d);
      ++idx[ud];
      io += out_strides[ud];
      if (idx[ud] < in[ud]) break;
      idx[ud] = 0;
      io -= out_strides[ud] * in[ud];
    }
  }
}

}  // namespace

Var reduce_sum(const Var& a, const std::vector<int>& axes, bool keepdims) {
  const Shape& in = a->value.shape;
  int r = static_cast<int>(in.size());
  std::vector<bool> red(static_cast<size_t>(r), false);
  for (int ax : axes) {
    if (ax < 0) ax += r;
    if (ax < 0 || ax >= r) throw Error(ErrorKind::Input, "reduce_sum: bad axis");
    red[static_cast<size_t>(ax)] = true;
  }
  Shape keep = in;
  for (int d = 0; d < r; ++d)
    if (red[static_cast<size_t>(d)]) keep[static_cast<size_t>(d)] = 1;
  auto kstr = row_major_strides(keep);
  std::vector<int64_t> ostr(static_cast<size_t>(r), 0);
  for (int d = 0; d < r; ++d)
    if (!red[static_cast<size_t>(d)]) ostr[static_cast<size_t>(d)] = kstr[static_cast<size_t>(d)];
  Tensor out(keep);
  reduce_for_each(in, ostr, [&](int64_t ii, int64_t io) { out[io] += a->value[ii]; });
  Shape final_shape;
  if (keepdims) {
    final_shape = keep;
  } else {
    for (int d = 0; d < r; ++d)
      if (!red[static_cast<size_t>(d)]) final_shape.push_back(in[static_cast<size_t>(d)]);
    if (final_shape.empty()) final_shape = {1};
    out.shape = final_shape;
  }
  return make_op(std::move(out), {a}, [in, ostr](Node& n) {
    Node& A = *n.parents[0];
    if (!A.requires_grad) return;
    A.ensure_grad();
    reduce_for_each(in, ostr, [&](int64_t ii, int64_t io) { A.grad[ii] += n.grad[io]; });
  });
}

Var reduce_mean(const Var& a, const std::vector<int>& axes, bool keepdims) {
  Var s = reduce_sum(a, axes, keepdims);
  double scale = static_cast<double>(s->value.numel()) / static_cast<double>(a->value.numel());
  return mul_scalar(s, scale);
}

Var sum_all(const Var& a) {
  std::vector<int> axes(a->value.shape.size());
  for (size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int>(i);
  return reduce_sum(a, axes, false);
}

Var mean_all(const Var& a) {
  return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a->value.numel()));
}

Var softmax(const Var& a, int axis) {
  const Shape& s = a->value.shape;
  int r = static_cast<int>(s.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw Error(ErrorKind::Input, "softmax: bad axis");
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[static_cast<size_t>(d)];
  for (int d = axis + 1; d < r; ++d) inner *= s[static_cast<size_t>(d)];
  int64_t m = s[static_cast<size_t>(axis)];
  Tensor out(s);
  const auto& x = a->value;
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      int64_t base = o * m * inner + in;
      double mx = -1e300;
      for (int64_t j = 0; j < m; ++j) mx = std::max(mx, x[base + j * inner]);
      if (!std::isfinite(mx))
        throw Error(ErrorKind::Numeric, "softmax: non-finite logits");
      double z = 0;
      for (int64_t j = 0; j < m; ++j) {
        double e = std::exp(x[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (int64_t j = 0; j < m; ++j) out[base + j * inner] /= z;
    }
  }
  return make_op(std::move(out), {a}, [outer, inner, m](Node& n) {
    Node& A = *n.parents[0];
    if (!A.requires_grad) return;
    A.ensure_grad();
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t in = 0; in < inner; ++in) {
        int64_t base = o * m * inner + in;
        double dot = 0;
        for (int64_t j = 0; j < m; ++j)
          dot += n.grad[base + j * inner] * n.value[base + j * inner];
        for (int64_t j = 0; j < m; ++j) {
          int64_t ix = base + j * inner;
          A.grad[ix] += n.value[ix] * (n.grad[ix] - dot);
        }
      }
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  if (Tensor::count(shape) != a->value.numel())
    throw Error(ErrorKind::Input, "reshape: element count mismatch " +
                                      shape_str(a->value.shape) + " -> " + shape_str(shape));
  Tensor out(shape);
  out.data = a->value.data;
  return make_op(std::move(out), {a}, [](Node& n) {
    Node& A = *n.parents[0];
    if (!A.requires_grad) return;
    A.ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i) A.grad[i] += n.grad[i];
  });
}

Var permute(const Var& a, const std::vector<int>& perm) {
  const Shape& in = a->value.shape;
  int r = static_cast<int>(in.size());
  if (static_cast<int>(perm.size()) != r)
    throw Error(ErrorKind::Input, "permute: rank mismatch");
  Shape oshape(static_cast<size_t>(r));
  for (int d = 0; d < r; ++d) oshape[static_cast<size_t>(d)] = in[static_cast<size_t>(perm[static_cast<size_t>(d)])];
  auto ostr = row_major_strides(oshape);
  // stride of output walked in *input* order
  std::vector<int64_t> walk(static_cast<size_t>(r), 0);
  for (int d = 0; d < r; ++d) walk[static_cast<size_t>(perm[static_cast<size_t>(d)])] = ostr[static_cast<size_t>(d)];
  Tensor out(oshape);
  reduce_for_each(in, walk, [&](int64_t ii, int64_t io) { out[io] = a->value[ii]; });
  return make_op(std::move(out), {a}, [in, walk](Node& n) {
    Node& A = *n.parents[0];
    if (!A.requires_grad) return;
    A.ensure_grad();
    reduce_for_each(in, walk, [&](int64_t ii, int64_t io) { A.grad[ii] += n.grad[io]; });
  });
}

Var slice(const Var& a, const std::vector<int>& starts, const std::vector<int>& sizes) {
  const Shape& in = a->value.shape;
  int r = static_cast<int>(in.size());
  if (static_cast<int>(starts.size()) != r || static_cast<int>(sizes.size()) != r)
    throw Error(ErrorKind::Input, "slice: rank mismatch");
  for (int d = 0; d < r; ++d) {
    auto ud = static_cast<size_t>(d);
    if (starts[ud] < 0 || sizes[ud] < 1 || starts[ud] + sizes[ud] > in[ud])
      throw Error(ErrorKind::Input, "slice: out of range");
  }
  Shape oshape(sizes.begin(), sizes.end());
  auto istr = row_major_strides(in);
  int64_t base = 0;
  for (int d = 0; d < r; ++d) base += static_cast<int64_t>(starts[static_cast<size_t>(d)]) * istr[static_cast<size_t>(d)];
  Tensor out(oshape);
  reduce_for_each(oshape, istr, [&](int64_t io, int64_t ii) { out[io] = a->value[base + ii]; });
  return make_op(std::move(out), {a}, [oshape, istr, base](Node& n) {
    Node& A = *n.parents[0];
    if (!A.requires_grad) return;
    A.ensure_grad();
    reduce_for_each(oshape, istr, [&](int64_t io, int64_t ii) { A.grad[base + ii] += n.grad[io]; });
  });
}

Var matmul(const Var& a, const Var& b) {
  const Shape& sa = a->value.shape;
  const Shape& sb = b->value.shape;
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    throw Error(ErrorKind::Input, "matmul: bad shapes " + shape_str(sa) + " x " + shape_str(sb));
  int m = sa[0], k = sa[1], n2 = sb[1];
  Tensor out({m, n2});
  gemm(false, false, m, n2, k, 1.0, a->value.data.data(), k, b->value.data.data(), n2, 0.0,
       out.data.data(), n2);
  return make_op(std::move(out), {a, b}, [m, k, n2](Node& n) {
    Node& A = *n.parents[0];
    Node& B = *n.parents[1];
    if (A.requires_grad) {
      A.ensure_grad();
      gemm(false, true, m, k, n2, 1.0, n.grad.data.data(), n2, B.value.data.data(), n2, 1.0,
           A.grad.data.data(), k);
    }
    if (B.requires_grad) {
      B.ensure_grad();
      gemm(true, false, k, n2, m, 1.0, A.value.data.data(), k, n.grad.data.data(), n2, 1.0,
           B.grad.data.data(), n2);
    }
  });
}

Var bmm(const Var& a, const Var& b) {
  const Shape& sa = a->value.shape;
  const Shape& sb = b->value.shape;
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[1])
    throw Error(ErrorKind::Input, "bmm: bad shapes " + shape_str(sa) + " x " + shape_str(sb));
  int bsz = sa[0], m = sa[1], k = sa[2], n2 = sb[2];
  Tensor out({bsz, m, n2});
  for (int i = 0; i < bsz; ++i)
    gemm(false, false, m, n2, k, 1.0, a->value.data.data() + static_cast<int64_t>(i) * m * k, k,
         b->value.data.data() + static_cast<int64_t>(i) * k * n2, n2, 0.0,
         out.data.data() + static_cast<int64_t>(i) * m * n2, n2);
  return make_op(std::move(out), {a, b}, [bsz, m, k, n2](Node& n) {
    Node& A = *n.parents[0];
    Node& B = *n.parents[1];
    for (int i = 0; i < bsz; ++i) {
      const double* ga = n.grad.data.data() + static_cast<int64_t>(i) * m * n2;
      if (A.requires_grad) {
        A.ensure_grad();
        gemm(false, true, m, k, n2, 1.0, ga, n2,
             B.value.data.data() + static_cast<int64_t>(i) * k * n2, n2, 1.0,
             A.grad.data.data() + static_cast<int64_t>(i) * m * k, k);
      }
      if (B.requires_grad) {
        B.ensure_grad();
        gemm(true, false, k, n2, m, 1.0,
             A.value.data.data() + static_cast<int64_t>(i) * m * k, k, ga, n2, 1.0,
             B.grad.data.data() + static_cast<int64_t>(i) * k * n2, n2);
      }
    }
  });
}

namespace {

void im2col(const double* src, int c, int h, int w, int k, int s, int p, int ho, int wo,
            double* cols) {
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* row = cols + ((static_cast<int64_t>(ch) * k + ki) * k + kj) *
                                 (static_cast<int64_t>(ho) * wo);
        for (int i = 0; i < ho; ++i) {
          int y = i * s - p + ki;
          for (int j = 0; j < wo; ++j) {
            int x = j * s - p + kj;
            row[static_cast<int64_t>(i) * wo + j] =
                (y >= 0 && y < h && x >= 0 && x < w)
                    ? src[(static_cast<int64_t>(ch) * h + y) * w + x]
                    : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, int c, int h, int w, int k, int s, int p, int ho, int wo,
            double* dst) {
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* row = cols + ((static_cast<int64_t>(ch) * k + ki) * k + kj) *
                                       (static_cast<int64_t>(ho) * wo);
        for (int i = 0; i < ho; ++i) {
          int y = i * s - p + ki;
          if (y < 0 || y >= h) continue;
          for (int j = 0; j < wo; ++j) {
            int x = j * s - p + kj;
            if (x < 0 || x >= w) continue;
            dst[(static_cast<int64_t>(ch) * h + y) * w + x] += row[static_cast<int64_t>(i) * wo + j];
          }
        }
      }
    }
  }
}

struct ConvDims {
  int n, c, h, w, f, k, ho, wo;
};

ConvDims conv_dims(const Shape& x, const Shape& wt, int stride, int pad, bool transposed) {
  if (x.size() != 4 || wt.size() != 4)
    throw Error(ErrorKind::Input, "conv: expected 4-d input and weight");
  ConvDims d{};
  d.n = x[0];
  d.c = x[1];
  d.h = x[2];
  d.w = x[3];
  d.k = wt[2];
  if (wt[2] != wt[3]) throw Error(ErrorKind::Input, "conv: non-square kernel");
  if (!transposed) {
    if (wt[1] != d.c)
      throw Error(ErrorKind::Config, "conv: weight channels " + std::to_string(wt[1]) +
                                         " != input channels " + std::to_string(d.c));
    d.f = wt[0];
    d.ho = (d.h + 2 * pad - d.k) / stride + 1;
    d.wo = (d.w + 2 * pad - d.k) / stride + 1;
    if (d.h + 2 * pad < d.k || d.w + 2 * pad < d.k)
      throw Error(ErrorKind::Input, "conv: input smaller than kernel");
  } else {
    if (wt[0] != d.c)
      throw Error(ErrorKind::Config, "conv_transpose: weight in-channels mismatch");
    d.f = wt[1];
    d.ho = stride * (d.h - 1) + d.k - 2 * pad;
    d.wo = stride * (d.w - 1) + d.k - 2 * pad;
    if (d.ho < 1 || d.wo < 1) throw Error(ErrorKind::Input, "conv_transpose: degenerate output");
  }
  return d;
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  ConvDims d = conv_dims(x->value.shape, w->value.shape, stride, pad, false);
  if (b->value.shape != Shape{d.f}) throw Error(ErrorKind::Config, "conv: bad bias shape");
  int64_t ck2 = static_cast<int64_t>(d.c) * d.k * d.k;
  int64_t hw = static_cast<int64_t>(d.ho) * d.wo;
  Tensor out({d.n, d.f, d.ho, d.wo});
  std::vector<double> cols(static_cast<size_t>(ck2 * hw));
  for (int i = 0; i < d.n; ++i) {
    im2col(x->value.data.data() + static_cast<int64_t>(i) * d.c * d.h * d.w, d.c, d.h, d.w, d.k,
           stride, pad, d.ho, d.wo, cols.data());
    double* dst = out.data.data() + static_cast<int64_t>(i) * d.f * hw;
    gemm(false, false, d.f, static_cast<int>(hw), static_cast<int>(ck2), 1.0,
         w->value.data.data(), static_cast<int>(ck2), cols.data(), static_cast<int>(hw), 0.0, dst,
         static_cast<int>(hw));
    for (int fc = 0; fc < d.f; ++fc) {
      double bias = b->value[fc];
      for (int64_t q = 0; q < hw; ++q) dst[fc * hw + q] += bias;
    }
  }
  int s = stride, p = pad;
  return make_op(std::move(out), {x, w, b}, [d, s, p, ck2, hw](Node& n) {
    Node& X = *n.parents[0];
    Node& W = *n.parents[1];
    Node& B = *n.parents[2];
    std::vector<double> cols(static_cast<size_t>(ck2 * hw));
    if (X.requires_grad) X.ensure_grad();
    if (W.requires_grad) W.ensure_grad();
    if (B.requires_grad) B.ensure_grad();
    for (int i = 0; i < d.n; ++i) {
      const double* gy = n.grad.data.data() + static_cast<int64_t>(i) * d.f * hw;
      if (W.requires_grad) {
        im2col(X.value.data.data() + static_cast<int64_t>(i) * d.c * d.h * d.w, d.c, d.h, d.w,
               d.k, s, p, d.ho, d.wo, cols.data());
        gemm(false, true, d.f, static_cast<int>(ck2), static_cast<int>(hw), 1.0, gy,
             static_cast<int>(hw), cols.data(), static_cast<int>(hw), 1.0, W.grad.data.data(),
             static_cast<int>(ck2));
      }
      if (X.requires_grad) {
        gemm(true, false, static_cast<int>(ck2), static_cast<int>(hw), d.f, 1.0,
             W.value.data.data(), static_cast<int>(ck2), gy, static_cast<int>(hw), 0.0,
             cols.data(), static_cast<int>(hw));
        col2im(cols.data(), d.c, d.h, d.w, d.k, s, p, d.ho, d.wo,
               X.grad.data.data() + static_cast<int64_t>(i) * d.c * d.h * d.w);
      }
      if (B.requires_grad) {
        for (int fc = 0; fc < d.f; ++fc) {
          double acc = 0;
          for (int64_t q = 0; q < hw; ++q) acc += gy[fc * hw + q];
          B.grad[fc] += acc;
        }
      }
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  ConvDims d = conv_dims(x->value.shape, w->value.shape, stride, pad, true);
  if (b->value.shape != Shape{d.f}) throw Error(ErrorKind::Config, "conv_transpose: bad bias shape");
  int64_t fk2 = static_cast<int64_t>(d.f) * d.k * d.k;
  int64_t hw_in = static_cast<int64_t>(d.h) * d.w;
  Tensor out({d.n, d.f, d.ho, d.wo});
  std::vector<double> cols(static_cast<size_t>(fk2 * hw_in));
  for (int i = 0; i < d.n; ++i) {
    // cols = W^T (f*k*k x c) * x (c x hw_in), then scattered onto the output grid
    gemm(true, false, static_cast<int>(fk2), static_cast<int>(hw_in), d.c, 1.0,
         w->value.data.data(), static_cast<int>(fk2),
         x->value.data.data() + static_cast<int64_t>(i) * d.c * hw_in, static_cast<int>(hw_in),
         0.0, cols.data(), static_cast<int>(hw_in));
    double* dst = out.data.data() + static_cast<int64_t>(i) * d.f * d.ho * d.wo;
    col2im(cols.data(), d.f, d.ho, d.wo, d.k, stride, pad, d.h, d.w, dst);
    for (int fc = 0; fc < d.f; ++fc) {
      double bias = b->value[fc];
      for (int64_t q = 0; q < static_cast<int64_t>(d.ho) * d.wo; ++q)
        dst[fc * static_cast<int64_t>(d.ho) * d.wo + q] += bias;
    }
  }
  int s = stride, p = pad;
  return make_op(std::move(out), {x, w, b}, [d, s, p, fk2, hw_in](Node& n) {
    Node& X = *n.parents[0];
    Node& W = *n.parents[1];
    Node& B = *n.parents[2];
    std::vector<double> cols(static_cast<size_t>(fk2 * hw_in));
    if (X.requires_grad) X.ensure_grad();
    if (W.requires_grad) W.ensure_grad();
    if (B.requires_grad) B.ensure_grad();
    int64_t hw_out = static_cast<int64_t>(d.ho) * d.wo;
    for (int i = 0; i < d.n; ++i) {
      const double* gy = n.grad.data.data() + static_cast<int64_t>(i) * d.f * hw_out;
      im2col(gy, d.f, d.ho, d.wo, d.k, s, p, d.h, d.w, cols.data());
      if (X.requires_grad)
        gemm(false, false, d.c, static_cast<int>(hw_in), static_cast<int>(fk2), 1.0,
             W.value.data.data(), static_cast<int>(fk2), cols.data(), static_cast<int>(hw_in),
             1.0, X.grad.data.data() + static_cast<int64_t>(i) * d.c * hw_in,
             static_cast<int>(hw_in));
      if (W.requires_grad)
        gemm(false, true, d.c, static_cast<int>(fk2), static_cast<int>(hw_in), 1.0,
             X.value.data.data() + static_cast<int64_t>(i) * d.c * hw_in,
             static_cast<int>(hw_in), cols.data(), static_cast<int>(hw_in), 1.0,
             W.grad.data.data(), static_cast<int>(fk2));
      if (B.requires_grad) {
        for (int fc = 0; fc < d.f; ++fc) {
          double acc = 0;
          for (int64_t q = 0; q < hw_out; ++q) acc += gy[fc * hw_out + q];
          B.grad[fc] += acc;
        }
      }
    }
  });
}

Var upsample_nearest2x(const Var& x) {
  const Shape& s = x->value.shape;
  if (s.size() != 4) throw Error(ErrorKind::Input, "upsample: expected 4-d input");
  int n = s[0], c = s[1], h = s[2], w = s[3];
  Tensor out({n, c, 2 * h, 2 * w});
  for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
    const double* src = x->value.data.data() + nc * h * w;
    double* dst = out.data.data() + nc * 4 * h * w;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double v = src[static_cast<int64_t>(i) * w + j];
        int64_t o = static_cast<int64_t>(2 * i) * 2 * w + 2 * j;
        dst[o] = v;
        dst[o + 1] = v;
        dst[o + 2 * w] = v;
        dst[o + 2 * w + 1] = v;
      }
  }
  return make_op(std::move(out), {x}, [n, c, h, w](Node& nd) {
    Node& X = *nd.parents[0];
    if (!X.requires_grad) return;
    X.ensure_grad();
    for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
      double* gx = X.grad.data.data() + nc * h * w;
      const double* gy = nd.grad.data.data() + nc * 4 * h * w;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          int64_t o = static_cast<int64_t>(2 * i) * 2 * w + 2 * j;
          gx[static_cast<int64_t>(i) * w + j] += gy[o] + gy[o + 1] + gy[o + 2 * w] + gy[o + 2 * w + 1];
        }
    }
  });
}

Var capsule_predict(const Var& u, const Var& w) {
  const Shape& su = u->value.shape;  // (N, I, Cu, P)
  const Shape& sw = w->value.shape;  // (I, J, Ch, Cu)
  if (su.size() != 4 || sw.size() != 4 || su[1] != sw[0] || su[2] != sw[3])
    throw Error(ErrorKind::Input, "capsule_predict: bad shapes " + shape_str(su) + " / " + shape_str(sw));
  int n = su[0], I = su[1], cu = su[2], P = su[3], J = sw[1], ch = sw[2];
  Tensor out({n, J, I, ch, P});
  for (int b = 0; b < n; ++b)
    for (int i = 0; i < I; ++i) {
      const double* ui = u->value.data.data() + ((static_cast<int64_t>(b) * I + i) * cu) * P;
      for (int j = 0; j < J; ++j) {
        const double* wij = w->value.data.data() + ((static_cast<int64_t>(i) * J + j) * ch) * cu;
        double* dst = out.data.data() + (((static_cast<int64_t>(b) * J + j) * I + i) * ch) * P;
        gemm(false, false, ch, P, cu, 1.0, wij, cu, ui, P, 0.0, dst, P);
      }
    }
  return make_op(std::move(out), {u, w}, [n, I, cu, P, J, ch](Node& nd) {
    Node& U = *nd.parents[0];
    Node& W = *nd.parents[1];
    if (U.requires_grad) U.ensure_grad();
    if (W.requires_grad) W.ensure_grad();
    for (int b = 0; b < n; ++b)
      for (int i = 0; i < I; ++i) {
        int64_t ubase = ((static_cast<int64_t>(b) * I + i) * cu) * P;
        for (int j = 0; j < J; ++j) {
          const double* wij = W.value.data.data() + ((static_cast<int64_t>(i) * J + j) * ch) * cu;
          const double* gy = nd.grad.data.data() + (((static_cast<int64_t>(b) * J + j) * I + i) * ch) * P;
          if (U.requires_grad)
            gemm(true, false, cu, P, ch, 1.0, wij, cu, gy, P, 1.0, U.grad.data.data() + ubase, P);
          if (W.requires_grad)
            gemm(false, true, ch, cu, P, 1.0, gy, P, U.value.data.data() + ubase, P, 1.0,
                 W.grad.data.data() + ((static_cast<int64_t>(i) * J + j) * ch) * cu, cu);
        }
      }
  });
}

}  // namespace cevae::ops
