#pragma once

// Differentiable primitives. Matrices are rank-2 row-major tensors; ops that
// accept "...×n" inputs treat every leading dimension as rows. The only
// broadcast supported is a bias vector added to every row.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "dpmts/tensor.hpp"

namespace dpmts {

namespace detail {

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw DimensionError(std::string(op) + " expects a matrix, got " + shape_str(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

inline bool wants_grad(const Node& n) { return n.requires_grad; }

}  // namespace detail

/// C = A·B for A[m×k], B[k×n].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " · " +
                         shape_str(b.shape()));
  std::vector<double> c(m * n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = &B[p * n];
      double* crow = &c[i * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  return detail::make_result({m, n}, std::move(c), {a.node(), b.node()}, [m, k, n](detail::Node& self) {
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    const auto& G = self.grad;
    if (an.requires_grad) {
      auto& ga = an.grad_buffer();  // dA = dC · Bᵀ
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * bn.data[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (bn.requires_grad) {
      auto& gb = bn.grad_buffer();  // dB = Aᵀ · dC
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = an.data[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * G[i * n + j];
        }
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  const auto A = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  return detail::make_result({n, m}, std::move(out), {a.node()}, [m, n](detail::Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result(a.shape(), std::move(out), {a.node(), b.node()}, [](detail::Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

/// x[...×n] + b[n] on every row.
inline Tensor add_row_bias(const Tensor& x, const Tensor& b) {
  if (b.rank() != 1 || b.size() != x.cols())
    throw DimensionError("bias " + shape_str(b.shape()) + " does not match trailing dim of " +
                         shape_str(x.shape()));
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] + b[j];
  return detail::make_result(x.shape(), std::move(out), {x.node(), b.node()}, [r, c](detail::Node& self) {
    auto& xn = *self.inputs[0];
    auto& bn = *self.inputs[1];
    if (xn.requires_grad) {
      auto& g = xn.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn.requires_grad) {
      auto& g = bn.grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
    }
  });
}

/// Matrix view of any tensor: leading dims collapsed into rows.
inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size())
    throw DimensionError("reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  return detail::make_result(std::move(shape), a.to_vector(), {a.node()}, [](detail::Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

/// x·w + b with x[...×in], w[in×out], b[out].
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || x.cols() != w.shape()[0])
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weights " +
                         shape_str(w.shape()));
  const Tensor x2 = x.rank() == 2 ? x : reshape(x, {x.rows(), x.cols()});
  Tensor y = add_row_bias(matmul(x2, w), b);
  if (x.rank() == 2) return y;
  Shape out_shape = x.shape();
  out_shape.back() = w.shape()[1];
  return reshape(y, out_shape);
}

inline Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return detail::make_result(a.shape(), std::move(out), {a.node()}, [factor](detail::Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

namespace detail {

inline Tensor softmax_rows_impl(const Tensor& a, bool causal) {
  const std::size_t m = a.rows(), n = a.cols();
  if (causal && m != n) throw DimensionError("causal softmax needs a square matrix, got " + shape_str(a.shape()));
  std::vector<double> out(a.size(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t limit = causal ? i + 1 : n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < limit; ++j) mx = std::max(mx, a[i * n + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < limit; ++j) {
      out[i * n + j] = std::exp(a[i * n + j] - mx);
      s += out[i * n + j];
    }
    for (std::size_t j = 0; j < limit; ++j) out[i * n + j] /= s;
  }
  return make_result(a.shape(), out, {a.node()}, [m, n, out](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * out[i * n + j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += out[i * n + j] * (self.grad[i * n + j] - dot);
    }
  });
}

}  // namespace detail

/// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& a) { return detail::softmax_rows_impl(a, false); }

/// Row-wise softmax where row i only sees columns 0..i; masked entries are exactly 0.
inline Tensor causal_softmax_rows(const Tensor& a) { return detail::softmax_rows_impl(a, true); }

/// Per-row standardization over the trailing dimension followed by gamma·x̂+beta.
inline Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
  const std::size_t r = a.rows(), n = a.cols();
  if (n < 2) throw DimensionError("layer_norm needs a trailing dimension of at least 2");
  if (gamma.size() != n || beta.size() != n)
    throw DimensionError("layer_norm affine parameters must have length " + std::to_string(n));
  std::vector<double> xhat(a.size()), inv_std(r), out(a.size());
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += a[i * n + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = a[i * n + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (a[i * n + j] - mean) * inv_std[i];
      out[i * n + j] = gamma[j] * xhat[i * n + j] + beta[j];
    }
  }
  return detail::make_result(
      a.shape(), std::move(out), {a.node(), gamma.node(), beta.node()},
      [r, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
        auto& an = *self.inputs[0];
        auto& gn = *self.inputs[1];
        auto& bn = *self.inputs[2];
        const auto& G = self.grad;
        if (gn.requires_grad) {
          auto& g = gn.grad_buffer();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < n; ++j) g[j] += G[i * n + j] * xhat[i * n + j];
        }
        if (bn.requires_grad) {
          auto& g = bn.grad_buffer();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < n; ++j) g[j] += G[i * n + j];
        }
        if (an.requires_grad) {
          auto& g = an.grad_buffer();
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t i = 0; i < r; ++i) {
            double sum_dx = 0.0, sum_dx_xhat = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dx = G[i * n + j] * gn.data[j];
              sum_dx += dx;
              sum_dx_xhat += dx * xhat[i * n + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
              const double dx = G[i * n + j] * gn.data[j];
              g[i * n + j] += inv_std[i] * (dx - inv_n * sum_dx - xhat[i * n + j] * inv_n * sum_dx_xhat);
            }
          }
        }
      });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  return detail::make_result(a.shape(), std::move(out), {a.node()}, [](detail::Node& self) {
    auto& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (in.data[i] > 0.0) g[i] += self.grad[i];
  });
}

/// GELU, tanh approximation (GPT-2 form).
inline Tensor gelu(const Tensor& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a[i];
    out[i] = 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
  }
  return detail::make_result(a.shape(), std::move(out), {a.node()}, [](detail::Node& self) {
    auto& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = in.data[i];
      const double u = c * (x + 0.044715 * x * x * x);
      const double t = std::tanh(u);
      const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
      g[i] += self.grad[i] * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
    }
  });
}

/// Rows [begin, begin+count) of a matrix.
inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  detail::require_matrix(a, "slice_rows");
  const std::size_t n = a.cols();
  if (count == 0 || begin + count > a.rows())
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_str(a.shape()));
  const auto d = a.data();
  std::vector<double> out(d.begin() + static_cast<std::ptrdiff_t>(begin * n),
                          d.begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
  return detail::make_result({count, n}, std::move(out), {a.node()}, [begin, n](detail::Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * n + i] += self.grad[i];
  });
}

/// Columns [begin, begin+count) of a matrix.
inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  detail::require_matrix(a, "slice_cols");
  const std::size_t m = a.rows(), n = a.cols();
  if (count == 0 || begin + count > n)
    throw DimensionError("slice_cols out of range for " + shape_str(a.shape()));
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = a[i * n + begin + j];
  return detail::make_result({m, count}, std::move(out), {a.node()}, [m, n, begin, count](detail::Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * n + begin + j] += self.grad[i * count + j];
  });
}

/// Stacks matrices with equal column counts vertically, in argument order.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows needs at least one tensor");
  const std::size_t n = parts.front().cols();
  std::size_t rows = 0;
  std::vector<std::shared_ptr<detail::Node>> inputs;
  std::vector<double> out;
  for (const auto& p : parts) {
    detail::require_matrix(p, "concat_rows");
    if (p.cols() != n)
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts.front().shape()) + " vs " +
                           shape_str(p.shape()));
    rows += p.rows();
    out.insert(out.end(), p.data().begin(), p.data().end());
    inputs.push_back(p.node());
  }
  return detail::make_result({rows, n}, std::move(out), std::move(inputs), [](detail::Node& self) {
    std::size_t offset = 0;
    for (auto& in : self.inputs) {
      const std::size_t len = in->data.size();
      if (in->requires_grad) {
        auto& g = in->grad_buffer();
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offset + i];
      }
      offset += len;
    }
  });
}

/// Places matrices with equal row counts side by side, in argument order.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols needs at least one tensor");
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::shared_ptr<detail::Node>> inputs;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    detail::require_matrix(p, "concat_cols");
    if (p.rows() != m) throw DimensionError("concat_cols: row mismatch");
    total += p.cols();
    widths.push_back(p.cols());
    inputs.push_back(p.node());
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * total + offset + j] = p[i * w + j];
    offset += w;
  }
  return detail::make_result({m, total}, std::move(out), std::move(inputs), [m, total, widths](detail::Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      auto& in = *self.inputs[k];
      const std::size_t w = widths[k];
      if (in.requires_grad) {
        auto& g = in.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * total + off + j];
      }
      off += w;
    }
  });
}

/// out[i] = source[index[i]]; gradients scatter-add back. Result has `shape`.
inline Tensor gather(const Tensor& source, const std::vector<std::size_t>& index, Shape shape) {
  if (shape_size(shape) != index.size()) throw DimensionError("gather: index count does not match shape");
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= source.size()) throw DimensionError("gather: index out of range");
    out[i] = source[index[i]];
  }
  return detail::make_result(std::move(shape), std::move(out), {source.node()}, [index](detail::Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += self.grad[i];
  });
}

/// Rows of `table` selected by id, stacked in order.
inline Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids) {
  detail::require_matrix(table, "gather_rows");
  if (ids.empty()) throw DimensionError("gather_rows needs at least one id");
  const std::size_t n = table.cols();
  std::vector<std::size_t> flat;
  flat.reserve(ids.size() * n);
  for (auto id : ids) {
    if (id >= table.rows()) throw DimensionError("gather_rows: id " + std::to_string(id) + " out of range");
    for (std::size_t j = 0; j < n; ++j) flat.push_back(id * n + j);
  }
  return gather(table, flat, {ids.size(), n});
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return detail::make_result({1}, {s}, {a.node()}, [](detail::Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

/// Mean of squared differences over all elements; lengths must agree.
inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.size() != target.size())
    throw DimensionError("mse_loss: length mismatch " + std::to_string(pred.size()) + " vs " +
                         std::to_string(target.size()));
  const std::size_t n = pred.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return detail::make_result({1}, {s / static_cast<double>(n)}, {pred.node(), target.node()},
                             [n](detail::Node& self) {
                               auto& p = *self.inputs[0];
                               auto& t = *self.inputs[1];
                               const double k = 2.0 * self.grad[0] / static_cast<double>(n);
                               if (p.requires_grad) {
                                 auto& g = p.grad_buffer();
                                 for (std::size_t i = 0; i < n; ++i) g[i] += k * (p.data[i] - t.data[i]);
                               }
                               if (t.requires_grad) {
                                 auto& g = t.grad_buffer();
                                 for (std::size_t i = 0; i < n; ++i) g[i] -= k * (p.data[i] - t.data[i]);
                               }
                             });
}

/// gamma·x + beta with scalar (length-1) gamma and beta.
inline Tensor scalar_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  if (gamma.size() != 1 || beta.size() != 1) throw DimensionError("scalar_affine needs scalar gamma and beta");
  const double g = gamma[0], b = beta[0];
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = g * x[i] + b;
  return detail::make_result(x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
                             [](detail::Node& self) {
                               auto& xn = *self.inputs[0];
                               auto& gn = *self.inputs[1];
                               auto& bn = *self.inputs[2];
                               const auto& G = self.grad;
                               if (xn.requires_grad) {
                                 auto& gx = xn.grad_buffer();
                                 for (std::size_t i = 0; i < G.size(); ++i) gx[i] += gn.data[0] * G[i];
                               }
                               if (gn.requires_grad) {
                                 double s = 0.0;
                                 for (std::size_t i = 0; i < G.size(); ++i) s += G[i] * xn.data[i];
                                 gn.grad_buffer()[0] += s;
                               }
                               if (bn.requires_grad) {
                                 double s = 0.0;
                                 for (double v : G) s += v;
                                 bn.grad_buffer()[0] += s;
                               }
                             });
}

/// ((y − beta) / gamma)·spread + shift with scalar gamma and beta.
inline Tensor inverse_scalar_affine(const Tensor& y, const Tensor& gamma, const Tensor& beta, double spread,
                                    double shift) {
  if (gamma.size() != 1 || beta.size() != 1)
    throw DimensionError("inverse_scalar_affine needs scalar gamma and beta");
  const double g = gamma[0], b = beta[0];
  if (g == 0.0) throw NonInvertibleError("affine gamma is zero; the transform cannot be inverted");
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (y[i] - b) / g * spread + shift;
  return detail::make_result(y.shape(), std::move(out), {y.node(), gamma.node(), beta.node()},
                             [spread](detail::Node& self) {
                               auto& yn = *self.inputs[0];
                               auto& gn = *self.inputs[1];
                               auto& bn = *self.inputs[2];
                               const double g = gn.data[0], b = bn.data[0];
                               const auto& G = self.grad;
                               if (yn.requires_grad) {
                                 auto& gy = yn.grad_buffer();
                                 for (std::size_t i = 0; i < G.size(); ++i) gy[i] += G[i] * spread / g;
                               }
                               if (gn.requires_grad) {
                                 double s = 0.0;
                                 for (std::size_t i = 0; i < G.size(); ++i)
                                   s -= G[i] * (yn.data[i] - b) * spread / (g * g);
                                 gn.grad_buffer()[0] += s;
                               }
                               if (bn.requires_grad) {
                                 double s = 0.0;
                                 for (double v : G) s -= v * spread / g;
                                 bn.grad_buffer()[0] += s;
                               }
                             });
}

}  // namespace dpmts
