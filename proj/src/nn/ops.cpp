#include "catseq/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "catseq/error.hpp"

namespace catseq::nn {

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  fail(ErrorKind::kInvalidArgument, std::string("shape mismatch in ") + op + ": " +
                                        shape_string(a) + " vs " + shape_string(b));
}

Shape matrix_shape(std::size_t rows, std::size_t cols) { return {rows, cols}; }

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

// C (r x c) += A (r x k) * B (k x c)
void gemm_nn(const double* a, const double* b, double* c, std::size_t r, std::size_t k,
             std::size_t cols) {
  for (std::size_t i = 0; i < r; ++i) {
    double* ci = c + i * cols;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * cols;
      for (std::size_t j = 0; j < cols; ++j) {
        ci[j] += av * bp[j];
      }
    }
  }
}

// dA (r x k) += dC (r x c) * B^T, B is k x c
void gemm_nt(const double* dc, const double* b, double* da, std::size_t r, std::size_t k,
             std::size_t cols) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* dci = dc + i * cols;
    double* dai = da + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * cols;
      double acc = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        acc += dci[j] * bp[j];
      }
      dai[p] += acc;
    }
  }
}

// dB (k x c) += A^T * dC, A is r x k
void gemm_tn(const double* a, const double* dc, double* db, std::size_t r, std::size_t k,
             std::size_t cols) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* ai = a + i * k;
    const double* dci = dc + i * cols;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* dbp = db + p * cols;
      for (std::size_t j = 0; j < cols; ++j) {
        dbp[j] += av * dci[j];
      }
    }
  }
}

template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  Tensor out(a.shape());
  const auto in = a.value().values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = fwd(in[i]);
  }
  return make_op(std::move(out), {a}, [deriv](Node& self) {
    Node& p = parent(self, 0);
    Tensor& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
    }
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t r = av.rows(), k = av.cols(), c = bv.cols();
  if (bv.rows() != k) {
    shape_error("matmul", av.shape(), bv.shape());
  }
  Tensor out(matrix_shape(r, c));
  gemm_nn(av.data(), bv.data(), out.data(), r, k, c);
  return make_op(std::move(out), {a, b}, [r, k, c](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      gemm_nt(self.grad.data(), pb.value.data(), pa.ensure_grad().data(), r, k, c);
    }
    if (pb.requires_grad) {
      gemm_tn(pa.value.data(), self.grad.data(), pb.ensure_grad().data(), r, k, c);
    }
  });
}

Var dense(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  const std::size_t r = xv.rows(), k = xv.cols(), c = wv.cols();
  if (wv.rows() != k) {
    shape_error("dense", xv.shape(), wv.shape());
  }
  if (bv.size() != c) {
    shape_error("dense bias", wv.shape(), bv.shape());
  }
  Tensor out(matrix_shape(r, c));
  for (std::size_t i = 0; i < r; ++i) {
    std::copy(bv.data(), bv.data() + c, out.data() + i * c);
  }
  gemm_nn(xv.data(), wv.data(), out.data(), r, k, c);
  return make_op(std::move(out), {x, w, b}, [r, k, c](Node& self) {
    Node& px = parent(self, 0);
    Node& pw = parent(self, 1);
    Node& pb = parent(self, 2);
    if (px.requires_grad) {
      gemm_nt(self.grad.data(), pw.value.data(), px.ensure_grad().data(), r, k, c);
    }
    if (pw.requires_grad) {
      gemm_tn(px.value.data(), self.grad.data(), pw.ensure_grad().data(), r, k, c);
    }
    if (pb.requires_grad) {
      Tensor& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          gb[j] += self.grad[i * c + j];
        }
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  if (a.value().size() != b.value().size() || a.value().cols() != b.value().cols()) {
    shape_error("add", a.shape(), b.shape());
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.value()[i] + b.value()[i];
  }
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      Node& n = parent(self, p);
      if (!n.requires_grad) continue;
      Tensor& g = n.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += self.grad[i];
      }
    }
  });
}

Var mul(const Var& a, const Var& b) {
  if (a.value().size() != b.value().size()) {
    shape_error("mul", a.shape(), b.shape());
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.value()[i] * b.value()[i];
  }
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      Tensor& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      Tensor& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double kA = 0.044715;
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x))); },
      [](double x, double) {
        const double u = kC * (x + kA * x * x * x);
        const double t = std::tanh(u);
        const double du = kC * (1.0 + 3.0 * kA * x * x);
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      });
}

Var embedding(const Var& table, const std::vector<std::size_t>& indices) {
  const Tensor& tv = table.value();
  const std::size_t rows = tv.rows(), d = tv.cols();
  Tensor out(matrix_shape(indices.size(), d));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= rows) {
      fail(ErrorKind::kInvalidArgument, "embedding index " + std::to_string(indices[j]) +
                                            " out of range for table " +
                                            shape_string(tv.shape()));
    }
    std::copy(tv.data() + indices[j] * d, tv.data() + (indices[j] + 1) * d, out.data() + j * d);
  }
  return make_op(std::move(out), {table}, [indices, d](Node& self) {
    Tensor& g = parent(self, 0).ensure_grad();
    for (std::size_t j = 0; j < indices.size(); ++j) {
      double* row = g.data() + indices[j] * d;
      const double* src = self.grad.data() + j * d;
      for (std::size_t c = 0; c < d; ++c) {
        row[c] += src[c];
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if (gamma.value().size() != c || beta.value().size() != c) {
    shape_error("layer_norm", xv.shape(), gamma.shape());
  }
  Tensor out(xv.shape());
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = xv.data() + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xi[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (xi[j] - mean) * inv_std[i];
      xhat[i * c + j] = h;
      out[i * c + j] = h * gamma.value()[j] + beta.value()[j];
    }
  }
  return make_op(std::move(out), {x, gamma, beta},
                 [xhat = std::move(xhat), inv_std = std::move(inv_std), r, c](Node& self) {
                   Node& px = parent(self, 0);
                   Node& pg = parent(self, 1);
                   Node& pb = parent(self, 2);
                   if (pg.requires_grad || pb.requires_grad) {
                     Tensor& gg = pg.ensure_grad();
                     Tensor& gb = pb.ensure_grad();
                     for (std::size_t i = 0; i < r; ++i) {
                       for (std::size_t j = 0; j < c; ++j) {
                         gg[j] += self.grad[i * c + j] * xhat[i * c + j];
                         gb[j] += self.grad[i * c + j];
                       }
                     }
                   }
                   if (px.requires_grad) {
                     Tensor& gx = px.ensure_grad();
                     std::vector<double> dxhat(c);
                     for (std::size_t i = 0; i < r; ++i) {
                       double mean_d = 0.0, mean_dx = 0.0;
                       for (std::size_t j = 0; j < c; ++j) {
                         dxhat[j] = self.grad[i * c + j] * pg.value[j];
                         mean_d += dxhat[j];
                         mean_dx += dxhat[j] * xhat[i * c + j];
                       }
                       mean_d /= static_cast<double>(c);
                       mean_dx /= static_cast<double>(c);
                       for (std::size_t j = 0; j < c; ++j) {
                         gx[i * c + j] +=
                             inv_std[i] * (dxhat[j] - mean_d - xhat[i * c + j] * mean_dx);
                       }
                     }
                   }
                 });
}

Var select_rows(const Var& x, const std::vector<std::size_t>& rows) {
  const Tensor& xv = x.value();
  const std::size_t c = xv.cols();
  Tensor out(matrix_shape(rows.size(), c));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j] >= xv.rows()) {
      fail(ErrorKind::kInvalidArgument, "select_rows index out of range");
    }
    std::copy(xv.data() + rows[j] * c, xv.data() + (rows[j] + 1) * c, out.data() + j * c);
  }
  return make_op(std::move(out), {x}, [rows, c](Node& self) {
    Tensor& g = parent(self, 0).ensure_grad();
    for (std::size_t j = 0; j < rows.size(); ++j) {
      for (std::size_t k = 0; k < c; ++k) {
        g[rows[j] * c + k] += self.grad[j * c + k];
      }
    }
  });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if (begin > end || end > c) {
    fail(ErrorKind::kInvalidArgument, "slice_cols range out of bounds");
  }
  const std::size_t w = end - begin;
  Tensor out(matrix_shape(r, w));
  for (std::size_t i = 0; i < r; ++i) {
    std::copy(xv.data() + i * c + begin, xv.data() + i * c + end, out.data() + i * w);
  }
  return make_op(std::move(out), {x}, [r, c, w, begin](Node& self) {
    Tensor& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        g[i * c + begin + j] += self.grad[i * w + j];
      }
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) {
    fail(ErrorKind::kInvalidArgument, "concat_cols of nothing");
  }
  const std::size_t r = parts.front().value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().rows() != r) {
      shape_error("concat_cols", parts.front().shape(), p.shape());
    }
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out(matrix_shape(r, total));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t i = 0; i < r; ++i) {
      std::copy(v.data() + i * widths[k], v.data() + (i + 1) * widths[k],
                out.data() + i * total + offset);
    }
    offset += widths[k];
  }
  return make_op(std::move(out), parts, [widths, r, total](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& p = parent(self, k);
      if (p.requires_grad) {
        Tensor& g = p.ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < widths[k]; ++j) {
            g[i * widths[k] + j] += self.grad[i * total + offset + j];
          }
        }
      }
      offset += widths[k];
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  if (shape_size(shape) != x.value().size()) {
    shape_error("reshape", x.shape(), shape);
  }
  Tensor out(std::move(shape), std::vector<double>(x.value().values().begin(),
                                                   x.value().values().end()));
  return make_op(std::move(out), {x}, [](Node& self) {
    Tensor& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  return make_op(Tensor({1}, total), {x}, [](Node& self) {
    Tensor& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

Var weighted_sum(const Var& x, const Tensor& weights) {
  if (weights.size() != x.value().size()) {
    shape_error("weighted_sum", x.shape(), weights.shape());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) total += x.value()[i] * weights[i];
  return make_op(Tensor({1}, total), {x}, [weights](Node& self) {
    Tensor& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * weights[i];
  });
}

Var mean_of(const std::vector<Var>& scalars) {
  if (scalars.empty()) {
    fail(ErrorKind::kInvalidArgument, "mean of nothing");
  }
  double total = 0.0;
  for (const auto& s : scalars) {
    if (s.value().size() != 1) {
      fail(ErrorKind::kInvalidArgument, "mean_of expects scalars");
    }
    total += s.value()[0];
  }
  const double n = static_cast<double>(scalars.size());
  return make_op(Tensor({1}, total / n), scalars, [n](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->ensure_grad()[0] += self.grad[0] / n;
    }
  });
}

// ---------------------------------------------------------------------------
// Attention

AttentionMask AttentionMask::full(std::size_t queries, std::size_t keys) {
  AttentionMask m;
  m.queries = queries;
  m.keys = keys;
  m.visible.assign(queries * keys, 1);
  return m;
}

AttentionMask AttentionMask::causal(std::size_t length) {
  AttentionMask m;
  m.queries = length;
  m.keys = length;
  m.visible.assign(length * length, 0);
  for (std::size_t q = 0; q < length; ++q) {
    for (std::size_t k = 0; k <= q; ++k) m.visible[q * length + k] = 1;
  }
  return m;
}

namespace {

struct HeadGeometry {
  std::size_t lq, lk, d, dv, heads, dh, dvh;
};

HeadGeometry check_attention(const Tensor& q, const Tensor& k, const Tensor* v, std::size_t heads,
                             const AttentionMask* mask) {
  HeadGeometry g{q.rows(), k.rows(), q.cols(), v ? v->cols() : k.cols(), heads, 0, 0};
  if (heads == 0 || k.cols() != g.d || g.d % heads != 0 || g.dv % heads != 0) {
    shape_error("attention", q.shape(), k.shape());
  }
  if (v && v->rows() != g.lk) {
    shape_error("attention values", k.shape(), v->shape());
  }
  if (mask) {
    if (mask->queries != g.lq || mask->keys != g.lk) {
      fail(ErrorKind::kInvalidArgument, "shape mismatch: attention mask is " +
                                            std::to_string(mask->queries) + "x" +
                                            std::to_string(mask->keys));
    }
    for (std::size_t i = 0; i < g.lq; ++i) {
      bool any = false;
      for (std::size_t j = 0; j < g.lk && !any; ++j) any = (*mask)(i, j);
      if (!any) {
        fail(ErrorKind::kInvalidArgument, "attention mask hides every key from a query");
      }
    }
  }
  g.dh = g.d / heads;
  g.dvh = g.dv / heads;
  return g;
}

// Softmax weights for one head, written into p (lq x lk).
void head_weights(const Tensor& q, const Tensor& k, const HeadGeometry& g, std::size_t h,
                  const AttentionMask* mask, double* p) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(g.dh));
  for (std::size_t i = 0; i < g.lq; ++i) {
    const double* qi = q.data() + i * g.d + h * g.dh;
    double* pi = p + i * g.lk;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < g.lk; ++j) {
      if (mask && !(*mask)(i, j)) {
        pi[j] = -std::numeric_limits<double>::infinity();
        continue;
      }
      const double* kj = k.data() + j * g.d + h * g.dh;
      double s = 0.0;
      for (std::size_t c = 0; c < g.dh; ++c) s += qi[c] * kj[c];
      pi[j] = s * inv_sqrt;
      mx = std::max(mx, pi[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < g.lk; ++j) {
      if (mask && !(*mask)(i, j)) {
        pi[j] = 0.0;
        continue;
      }
      pi[j] = std::exp(pi[j] - mx);
      z += pi[j];
    }
    for (std::size_t j = 0; j < g.lk; ++j) pi[j] /= z;
  }
}

}  // namespace

Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t heads, std::size_t head,
                         const AttentionMask* mask) {
  const auto g = check_attention(q, k, nullptr, heads, mask);
  if (head >= heads) {
    fail(ErrorKind::kInvalidArgument, "head index out of range");
  }
  Tensor p(matrix_shape(g.lq, g.lk));
  head_weights(q, k, g, head, mask, p.data());
  return p;
}

Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads,
              const AttentionMask* mask) {
  const auto g = check_attention(q.value(), k.value(), &v.value(), heads, mask);
  std::vector<double> probs(heads * g.lq * g.lk);
  Tensor out(matrix_shape(g.lq, g.dv));
  for (std::size_t h = 0; h < heads; ++h) {
    double* p = probs.data() + h * g.lq * g.lk;
    head_weights(q.value(), k.value(), g, h, mask, p);
    for (std::size_t i = 0; i < g.lq; ++i) {
      double* oi = out.data() + i * g.dv + h * g.dvh;
      for (std::size_t j = 0; j < g.lk; ++j) {
        const double w = p[i * g.lk + j];
        if (w == 0.0) continue;
        const double* vj = v.value().data() + j * g.dv + h * g.dvh;
        for (std::size_t c = 0; c < g.dvh; ++c) oi[c] += w * vj[c];
      }
    }
  }
  return make_op(std::move(out), {q, k, v}, [g, probs = std::move(probs)](Node& self) {
    Node& pq = parent(self, 0);
    Node& pk = parent(self, 1);
    Node& pv = parent(self, 2);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(g.dh));
    std::vector<double> dp(g.lk);
    for (std::size_t h = 0; h < g.heads; ++h) {
      const double* p = probs.data() + h * g.lq * g.lk;
      for (std::size_t i = 0; i < g.lq; ++i) {
        const double* doi = self.grad.data() + i * g.dv + h * g.dvh;
        const double* pi = p + i * g.lk;
        double dot = 0.0;
        for (std::size_t j = 0; j < g.lk; ++j) {
          if (pi[j] == 0.0) {
            dp[j] = 0.0;
            continue;
          }
          const double* vj = pv.value.data() + j * g.dv + h * g.dvh;
          double acc = 0.0;
          for (std::size_t c = 0; c < g.dvh; ++c) acc += doi[c] * vj[c];
          dp[j] = acc;
          dot += acc * pi[j];
          if (pv.requires_grad) {
            double* gvj = pv.ensure_grad().data() + j * g.dv + h * g.dvh;
            for (std::size_t c = 0; c < g.dvh; ++c) gvj[c] += pi[j] * doi[c];
          }
        }
        for (std::size_t j = 0; j < g.lk; ++j) {
          if (pi[j] == 0.0) continue;
          const double ds = pi[j] * (dp[j] - dot) * inv_sqrt;
          if (pq.requires_grad) {
            double* gqi = pq.ensure_grad().data() + i * g.d + h * g.dh;
            const double* kj = pk.value.data() + j * g.d + h * g.dh;
            for (std::size_t c = 0; c < g.dh; ++c) gqi[c] += ds * kj[c];
          }
          if (pk.requires_grad) {
            double* gkj = pk.ensure_grad().data() + j * g.d + h * g.dh;
            const double* qi = pq.value.data() + i * g.d + h * g.dh;
            for (std::size_t c = 0; c < g.dh; ++c) gkj[c] += ds * qi[c];
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Losses

Tensor softmax_rows(const Tensor& logits) {
  const std::size_t r = logits.rows(), c = logits.cols();
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const double* zi = logits.data() + i * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, zi[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(zi[j] - mx);
      z += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  return out;
}

Var softmax_cross_entropy(const Var& logits, const Tensor& targets) {
  const Tensor& z = logits.value();
  if (targets.size() != z.size()) {
    shape_error("softmax_cross_entropy", z.shape(), targets.shape());
  }
  const std::size_t r = z.rows(), c = z.cols();
  Tensor probs = softmax_rows(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    const double* zi = z.data() + i * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, zi[j]);
    double se = 0.0;
    for (std::size_t j = 0; j < c; ++j) se += std::exp(zi[j] - mx);
    const double lse = mx + std::log(se);
    for (std::size_t j = 0; j < c; ++j) {
      const double t = targets[i * c + j];
      if (t != 0.0) loss -= t * (zi[j] - lse);
    }
  }
  loss /= static_cast<double>(r);
  return make_op(Tensor({1}, loss), {logits},
                 [probs = std::move(probs), targets, r, c](Node& self) {
                   Tensor& g = parent(self, 0).ensure_grad();
                   const double scale = self.grad[0] / static_cast<double>(r);
                   for (std::size_t i = 0; i < r; ++i) {
                     double mass = 0.0;
                     for (std::size_t j = 0; j < c; ++j) mass += targets[i * c + j];
                     for (std::size_t j = 0; j < c; ++j) {
                       g[i * c + j] +=
                           scale * (probs[i * c + j] * mass - targets[i * c + j]);
                     }
                   }
                 });
}

Var softmax_cross_entropy(const Var& logits, const std::vector<std::size_t>& target_index) {
  const std::size_t r = logits.value().rows(), c = logits.value().cols();
  if (target_index.size() != r) {
    fail(ErrorKind::kInvalidArgument, "one target per logit row required");
  }
  Tensor t(matrix_shape(r, c));
  for (std::size_t i = 0; i < r; ++i) {
    if (target_index[i] >= c) {
      fail(ErrorKind::kInvalidArgument, "target index out of range");
    }
    t[i * c + target_index[i]] = 1.0;
  }
  return softmax_cross_entropy(logits, t);
}

Var grouped_cross_entropy(const Var& logits, const std::vector<ColumnRange>& ranges,
                          const std::vector<std::size_t>& targets) {
  const Tensor& z = logits.value();
  const std::size_t r = z.rows(), c = z.cols();
  if (ranges.size() != r || targets.size() != r) {
    fail(ErrorKind::kInvalidArgument, "one range and target per logit row required");
  }
  std::vector<double> probs;
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    const auto [b, e] = ranges[i];
    if (b >= e || e > c || targets[i] < b || targets[i] >= e) {
      fail(ErrorKind::kInvalidArgument, "grouped target outside its column range");
    }
    const double* zi = z.data() + i * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = b; j < e; ++j) mx = std::max(mx, zi[j]);
    double se = 0.0;
    for (std::size_t j = b; j < e; ++j) se += std::exp(zi[j] - mx);
    const double lse = mx + std::log(se);
    loss += lse - zi[targets[i]];
    for (std::size_t j = b; j < e; ++j) probs.push_back(std::exp(zi[j] - lse));
  }
  loss /= static_cast<double>(r);
  return make_op(Tensor({1}, loss), {logits},
                 [probs = std::move(probs), ranges, targets, r, c](Node& self) {
                   Tensor& g = parent(self, 0).ensure_grad();
                   const double scale = self.grad[0] / static_cast<double>(r);
                   std::size_t k = 0;
                   for (std::size_t i = 0; i < r; ++i) {
                     for (std::size_t j = ranges[i].begin; j < ranges[i].end; ++j, ++k) {
                       const double t = j == targets[i] ? 1.0 : 0.0;
                       g[i * c + j] += scale * (probs[k] - t);
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// LSTM

LstmState lstm_zero_state(std::size_t batch, std::size_t hidden) {
  return {Var::constant(Tensor::matrix(batch, hidden)), Var::constant(Tensor::matrix(batch, hidden))};
}

LstmState lstm_step(const Var& x, const LstmState& prev, const LstmParams& params) {
  const std::size_t hidden = params.hidden();
  if (params.w_recurrent.value().cols() != 4 * hidden ||
      params.w_input.value().cols() != 4 * hidden) {
    shape_error("lstm_step", params.w_input.shape(), params.w_recurrent.shape());
  }
  if (prev.h.value().cols() != hidden || prev.c.value().cols() != hidden ||
      prev.h.value().rows() != x.value().rows()) {
    shape_error("lstm_step state", prev.h.shape(), x.shape());
  }
  const Var z = add(dense(x, params.w_input, params.bias), matmul(prev.h, params.w_recurrent));
  const Var in_gate = sigmoid(slice_cols(z, 0, hidden));
  const Var forget_gate = sigmoid(slice_cols(z, hidden, 2 * hidden));
  const Var candidate = tanh(slice_cols(z, 2 * hidden, 3 * hidden));
  const Var out_gate = sigmoid(slice_cols(z, 3 * hidden, 4 * hidden));
  LstmState next;
  next.c = add(mul(forget_gate, prev.c), mul(in_gate, candidate));
  next.h = mul(out_gate, tanh(next.c));
  return next;
}

}  // namespace catseq::nn
