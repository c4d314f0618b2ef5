#include "nmt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace nmt {

namespace {

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined() || t.numel() == 0)
    throw DimensionError(std::string(op) + ": empty tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw DimensionError(std::string(op) + ": shape mismatch");
}

// Builds the op output; records a graph node when recording is enabled and
// some parent participates in gradient computation.
Tensor make_output(std::vector<std::size_t> shape, std::vector<Tensor> parents,
                   std::function<void(const Tensor&)> bw) {
  Tensor out = Tensor::zeros(std::move(shape));
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const Tensor& p : parents)
      if (p.requires_grad) needs_grad = true;
  }
  if (needs_grad) {
    out.make_trainable();
    out.node = std::make_shared<Node>(Node{std::move(parents), std::move(bw)});
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  require_same_shape(a, b, "add");
  Tensor out = make_output(a.shape, {a, b}, [a, b](const Tensor& o) {
    const std::size_t n = o.numel();
    const double* g = o.grad->data();
    if (a.requires_grad && a.grad) {
      double* ga = a.grad->data();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    }
    if (b.requires_grad && b.grad) {
      double* gb = b.grad->data();
      for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
    }
  });
  const double* pa = a.ptr();
  const double* pb = b.ptr();
  double* po = out.ptr();
  for (std::size_t i = 0; i < a.numel(); ++i) po[i] = pa[i] + pb[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_defined(a, "sub");
  require_defined(b, "sub");
  require_same_shape(a, b, "sub");
  Tensor out = make_output(a.shape, {a, b}, [a, b](const Tensor& o) {
    const std::size_t n = o.numel();
    const double* g = o.grad->data();
    if (a.requires_grad && a.grad) {
      double* ga = a.grad->data();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    }
    if (b.requires_grad && b.grad) {
      double* gb = b.grad->data();
      for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
    }
  });
  const double* pa = a.ptr();
  const double* pb = b.ptr();
  double* po = out.ptr();
  for (std::size_t i = 0; i < a.numel(); ++i) po[i] = pa[i] - pb[i];
  return out;
}

Tensor add_row(const Tensor& x, const Tensor& b) {
  require_defined(x, "add_row");
  require_defined(b, "add_row");
  if (b.rank() != 1 || b.numel() != x.cols())
    throw DimensionError("add_row: bias width does not match columns");
  const std::size_t n = x.rows(), d = x.cols();
  Tensor out = make_output(x.shape, {x, b}, [x, b, n, d](const Tensor& o) {
    const double* g = o.grad->data();
    if (x.requires_grad && x.grad) {
      double* gx = x.grad->data();
      for (std::size_t i = 0; i < n * d; ++i) gx[i] += g[i];
    }
    if (b.requires_grad && b.grad) {
      double* gb = b.grad->data();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) gb[c] += g[r * d + c];
    }
  });
  const double* px = x.ptr();
  const double* pb = b.ptr();
  double* po = out.ptr();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) po[r * d + c] = px[r * d + c] + pb[c];
  return out;
}

Tensor scale(const Tensor& x, double c) {
  require_defined(x, "scale");
  Tensor out = make_output(x.shape, {x}, [x, c](const Tensor& o) {
    if (!x.requires_grad || !x.grad) return;
    const double* g = o.grad->data();
    double* gx = x.grad->data();
    for (std::size_t i = 0; i < o.numel(); ++i) gx[i] += c * g[i];
  });
  const double* px = x.ptr();
  double* po = out.ptr();
  for (std::size_t i = 0; i < x.numel(); ++i) po[i] = c * px[i];
  return out;
}

Tensor relu(const Tensor& x) {
  require_defined(x, "relu");
  Tensor out = make_output(x.shape, {x}, [x](const Tensor& o) {
    if (!x.requires_grad || !x.grad) return;
    const double* g = o.grad->data();
    const double* px = x.ptr();
    double* gx = x.grad->data();
    for (std::size_t i = 0; i < o.numel(); ++i)
      if (px[i] > 0.0) gx[i] += g[i];
  });
  const double* px = x.ptr();
  double* po = out.ptr();
  for (std::size_t i = 0; i < x.numel(); ++i) po[i] = px[i] > 0.0 ? px[i] : 0.0;
  return out;
}

namespace {

// C[m,n] += A[m,k] * B[k,n], row-major.
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = ai[kk];
      if (av == 0.0) continue;
      const double* bk = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T, row-major.
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
      ci[j] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n], row-major.
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = ai[kk];
      if (av == 0.0) continue;
      double* ck = c + kk * n;
      for (std::size_t j = 0; j < n; ++j) ck[j] += av * bi[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions disagree");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = make_output({m, n}, {a, b}, [a, b, m, k, n](const Tensor& o) {
    const double* g = o.grad->data();
    if (a.requires_grad && a.grad) gemm_nt(g, b.ptr(), a.grad->data(), m, n, k);
    if (b.requires_grad && b.grad) gemm_tn(a.ptr(), g, b.grad->data(), m, k, n);
  });
  gemm_nn(a.ptr(), b.ptr(), out.ptr(), m, k, n);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul_nt");
  require_defined(b, "matmul_nt");
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols())
    throw DimensionError("matmul_nt: inner dimensions disagree");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out = make_output({m, n}, {a, b}, [a, b, m, k, n](const Tensor& o) {
    const double* g = o.grad->data();
    if (a.requires_grad && a.grad) gemm_nn(g, b.ptr(), a.grad->data(), m, n, k);
    if (b.requires_grad && b.grad) gemm_tn(g, a.ptr(), b.grad->data(), m, n, k);
  });
  gemm_nt(a.ptr(), b.ptr(), out.ptr(), m, k, n);
  return out;
}

Tensor softmax(const Tensor& x) {
  require_defined(x, "softmax");
  const std::size_t n = x.rows(), d = x.cols();
  Tensor out = make_output(x.shape, {x}, [x, n, d](const Tensor& o) {
    if (!x.requires_grad || !x.grad) return;
    const double* g = o.grad->data();
    const double* y = o.ptr();
    double* gx = x.grad->data();
    for (std::size_t r = 0; r < n; ++r) {
      const double* yr = y + r * d;
      const double* gr = g + r * d;
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += gr[c] * yr[c];
      double* gxr = gx + r * d;
      for (std::size_t c = 0; c < d; ++c) gxr[c] += yr[c] * (gr[c] - dot);
    }
  });
  const double* px = x.ptr();
  double* po = out.ptr();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = px + r * d;
    double* orow = po + r * d;
    double mx = row[0];
    for (std::size_t c = 1; c < d; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      orow[c] = std::exp(row[c] - mx);
      sum += orow[c];
    }
    for (std::size_t c = 0; c < d; ++c) orow[c] /= sum;
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_defined(x, "layer_norm");
  require_defined(gain, "layer_norm");
  require_defined(bias, "layer_norm");
  if (eps < 0.0) throw ConfigError("layer_norm: negative eps");
  const std::size_t n = x.rows(), d = x.cols();
  if (gain.rank() != 1 || gain.numel() != d || bias.rank() != 1 || bias.numel() != d)
    throw DimensionError("layer_norm: gain/bias width does not match columns");

  // Keep the per-row inverse stddev and normalized values for the backward pass.
  auto inv_std = std::make_shared<std::vector<double>>(n);
  auto xhat = std::make_shared<std::vector<double>>(n * d);

  Tensor out =
      make_output(x.shape, {x, gain, bias}, [x, gain, bias, inv_std, xhat, n, d](const Tensor& o) {
        const double* g = o.grad->data();
        const double* pg = gain.ptr();
        for (std::size_t r = 0; r < n; ++r) {
          const double* gr = g + r * d;
          const double* xh = xhat->data() + r * d;
          if (gain.requires_grad && gain.grad) {
            double* gg = gain.grad->data();
            for (std::size_t c = 0; c < d; ++c) gg[c] += gr[c] * xh[c];
          }
          if (bias.requires_grad && bias.grad) {
            double* gb = bias.grad->data();
            for (std::size_t c = 0; c < d; ++c) gb[c] += gr[c];
          }
          if (x.requires_grad && x.grad) {
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
              const double dxh = gr[c] * pg[c];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xh[c];
            }
            mean_dxh /= static_cast<double>(d);
            mean_dxh_xh /= static_cast<double>(d);
            double* gx = x.grad->data() + r * d;
            const double is = (*inv_std)[r];
            for (std::size_t c = 0; c < d; ++c) {
              const double dxh = gr[c] * pg[c];
              gx[c] += is * (dxh - mean_dxh - xh[c] * mean_dxh_xh);
            }
          }
        }
      });

  const double* px = x.ptr();
  const double* pg = gain.ptr();
  const double* pb = bias.ptr();
  double* po = out.ptr();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = px + r * d;
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += row[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double v = row[c] - mean;
      var += v * v;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    double* xh = xhat->data() + r * d;
    double* orow = po + r * d;
    for (std::size_t c = 0; c < d; ++c) {
      xh[c] = (row[c] - mean) * is;
      orow[c] = pg[c] * xh[c] + pb[c];
    }
  }
  return out;
}

Tensor embedding(const std::vector<std::size_t>& ids, const Tensor& table) {
  require_defined(table, "embedding");
  if (table.rank() != 2) throw DimensionError("embedding: table must be 2-D");
  if (ids.empty()) throw LengthError("embedding: empty id sequence");
  const std::size_t v = table.rows(), d = table.cols();
  for (std::size_t id : ids)
    if (id >= v) throw IndexError("embedding: id out of vocabulary range");
  auto kept = std::make_shared<std::vector<std::size_t>>(ids);
  Tensor out = make_output({ids.size(), d}, {table}, [table, kept, d](const Tensor& o) {
    if (!table.requires_grad || !table.grad) return;
    const double* g = o.grad->data();
    double* gt = table.grad->data();
    for (std::size_t r = 0; r < kept->size(); ++r) {
      double* dst = gt + (*kept)[r] * d;
      const double* src = g + r * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  });
  const double* pt = table.ptr();
  double* po = out.ptr();
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const double* src = pt + ids[r] * d;
    double* dst = po + r * d;
    for (std::size_t c = 0; c < d; ++c) dst[c] = src[c];
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t first, std::size_t width) {
  require_defined(x, "slice_cols");
  if (x.rank() != 2) throw DimensionError("slice_cols: input must be 2-D");
  if (width == 0 || first + width > x.cols())
    throw DimensionError("slice_cols: column range out of bounds");
  const std::size_t n = x.rows(), d = x.cols();
  Tensor out = make_output({n, width}, {x}, [x, first, width, n, d](const Tensor& o) {
    if (!x.requires_grad || !x.grad) return;
    const double* g = o.grad->data();
    double* gx = x.grad->data();
    for (std::size_t r = 0; r < n; ++r) {
      double* dst = gx + r * d + first;
      const double* src = g + r * width;
      for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
    }
  });
  const double* px = x.ptr();
  double* po = out.ptr();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < width; ++c) po[r * width + c] = px[r * d + first + c];
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_defined(p, "concat_cols");
    if (p.rank() != 2 || p.rows() != n) throw DimensionError("concat_cols: row counts disagree");
    total += p.cols();
  }
  Tensor out = make_output({n, total}, parts, [parts, n, total](const Tensor& o) {
    const double* g = o.grad->data();
    std::size_t off = 0;
    for (const Tensor& p : parts) {
      const std::size_t w = p.cols();
      if (p.requires_grad && p.grad) {
        double* gp = p.grad->data();
        for (std::size_t r = 0; r < n; ++r) {
          const double* src = g + r * total + off;
          double* dst = gp + r * w;
          for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
        }
      }
      off += w;
    }
  });
  double* po = out.ptr();
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.cols();
    const double* src = p.ptr();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < w; ++c) po[r * total + off + c] = src[r * w + c];
    off += w;
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, RandomSource& rng, bool train) {
  require_defined(x, "dropout");
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate outside [0, 1)");
  if (!train || rate == 0.0) return x;
  const std::size_t n = x.numel();
  auto mask = std::make_shared<std::vector<double>>(n);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < n; ++i)
    (*mask)[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
  Tensor out = make_output(x.shape, {x}, [x, mask](const Tensor& o) {
    if (!x.requires_grad || !x.grad) return;
    const double* g = o.grad->data();
    double* gx = x.grad->data();
    for (std::size_t i = 0; i < o.numel(); ++i) gx[i] += g[i] * (*mask)[i];
  });
  const double* px = x.ptr();
  double* po = out.ptr();
  for (std::size_t i = 0; i < n; ++i) po[i] = px[i] * (*mask)[i];
  return out;
}

Tensor cross_entropy_label_smoothed(const Tensor& logits, const std::vector<std::size_t>& targets,
                                    double eps_ls) {
  require_defined(logits, "cross_entropy");
  if (eps_ls < 0.0 || eps_ls > 1.0) throw ConfigError("cross_entropy: eps_ls outside [0, 1]");
  const std::size_t n = logits.rows(), v = logits.cols();
  if (targets.size() != n) throw DimensionError("cross_entropy: target count does not match rows");
  for (std::size_t t : targets)
    if (t >= v) throw IndexError("cross_entropy: target id out of range");

  auto probs = std::make_shared<std::vector<double>>(n * v);
  auto kept = std::make_shared<std::vector<std::size_t>>(targets);

  Tensor out =
      make_output({1}, {logits}, [logits, probs, kept, eps_ls, n, v](const Tensor& o) {
        if (!logits.requires_grad || !logits.grad) return;
        const double g = (*o.grad)[0] / static_cast<double>(n);
        const double uniform = eps_ls / static_cast<double>(v);
        double* gl = logits.grad->data();
        for (std::size_t r = 0; r < n; ++r) {
          const double* p = probs->data() + r * v;
          double* gr = gl + r * v;
          const std::size_t t = (*kept)[r];
          for (std::size_t c = 0; c < v; ++c) {
            double q = uniform + (c == t ? 1.0 - eps_ls : 0.0);
            gr[c] += g * (p[c] - q);
          }
        }
      });

  const double* pl = logits.ptr();
  double total = 0.0;
  const double uniform = eps_ls / static_cast<double>(v);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = pl + r * v;
    double mx = row[0];
    for (std::size_t c = 1; c < v; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    double* p = probs->data() + r * v;
    for (std::size_t c = 0; c < v; ++c) {
      p[c] = std::exp(row[c] - mx);
      sum += p[c];
    }
    const double lse = mx + std::log(sum);
    double row_loss = 0.0;
    for (std::size_t c = 0; c < v; ++c) {
      const double logp = row[c] - lse;
      p[c] /= sum;
      double q = uniform + (c == targets[r] ? 1.0 - eps_ls : 0.0);
      if (q != 0.0) row_loss -= q * logp;
    }
    total += row_loss;
  }
  out.ptr()[0] = total / static_cast<double>(n);
  return out;
}

double cross_entropy_label_smoothed(const Tensor& logits_row, std::size_t target, double eps_ls) {
  require_defined(logits_row, "cross_entropy");
  if (logits_row.rows() != 1) throw DimensionError("cross_entropy: expected a single row");
  NoGradGuard no_grad;
  return cross_entropy_label_smoothed(
             Tensor::from({1, logits_row.numel()},
                          std::vector<double>(logits_row.data->begin(), logits_row.data->end())),
             std::vector<std::size_t>{target}, eps_ls)
      .scalar();
}

Tensor group_lasso_term(const std::vector<Tensor>& deltas, double norm_floor) {
  if (norm_floor <= 0.0) throw ConfigError("group_lasso: norm floor must be positive");
  auto norms = std::make_shared<std::vector<double>>(deltas.size());
  Tensor out = make_output({1}, deltas, [deltas, norms, norm_floor](const Tensor& o) {
    const double g = (*o.grad)[0];
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      const Tensor& d = deltas[i];
      if (!d.requires_grad || !d.grad) continue;
      const double coef =
          g * std::sqrt(static_cast<double>(d.numel())) / std::max((*norms)[i], norm_floor);
      const double* pd = d.ptr();
      double* gd = d.grad->data();
      for (std::size_t j = 0; j < d.numel(); ++j) gd[j] += coef * pd[j];
    }
  });
  double total = 0.0;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    require_defined(deltas[i], "group_lasso");
    double sq = 0.0;
    const double* pd = deltas[i].ptr();
    for (std::size_t j = 0; j < deltas[i].numel(); ++j) sq += pd[j] * pd[j];
    (*norms)[i] = std::sqrt(sq);
    total += std::sqrt(static_cast<double>(deltas[i].numel())) * (*norms)[i];
  }
  out.ptr()[0] = total;
  return out;
}

}  // namespace nmt
