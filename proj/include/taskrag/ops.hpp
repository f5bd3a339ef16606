/*
 * Copyright 2026 The taskrag Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "taskrag/tape.hpp"
#include "taskrag/types.hpp"

// Differentiable ops over Var<Scalar>. Every op checks its shape algebra and
// records a closure that accumulates input gradients. Reductions accumulate in
// double regardless of the storage scalar.
namespace taskrag {

namespace detail {

inline std::string dims(Eigen::Index r, Eigen::Index c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

template <typename Scalar>
void require_same_shape(std::string_view op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + dims(a.rows(), a.cols()) + " vs " +
                     dims(b.rows(), b.cols()));
  }
}

template <typename Scalar>
void accumulate(Tape<Scalar>& t, std::size_t id, const Matrix<Scalar>& g) {
  if (t.requires_grad(id)) t.grad_ref(id) += g;
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + detail::dims(a.rows(), a.cols()) + " * " +
                     detail::dims(b.rows(), b.cols()));
  }
  Matrix<Scalar> out = a.value() * b.value();
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("matmul", std::move(out), {a, b}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    if (t.requires_grad(ia)) t.grad_ref(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad_ref(ib).noalias() += t.value(ia).transpose() * g;
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape("add", a, b);
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("add", a.value() + b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    const Matrix<Scalar> g = t.grad_ref(self);
    detail::accumulate(t, ia, g);
    detail::accumulate(t, ib, g);
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape("sub", a, b);
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("sub", a.value() - b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    const Matrix<Scalar> g = t.grad_ref(self);
    detail::accumulate(t, ia, g);
    if (t.requires_grad(ib)) t.grad_ref(ib) -= g;
  });
}

// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape("mul", a, b);
  const auto ia = a.id(), ib = b.id();
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  return a.tape().record("mul", std::move(out), {a, b}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    const Matrix<Scalar> g = t.grad_ref(self);
    if (t.requires_grad(ia)) t.grad_ref(ia) += g.cwiseProduct(t.value(ib));
    if (t.requires_grad(ib)) t.grad_ref(ib) += g.cwiseProduct(t.value(ia));
  });
}

// The only broadcast: a [n x m] plus bias row b [1 x m].
template <typename Scalar>
Var<Scalar> add_bias(const Var<Scalar>& a, const Var<Scalar>& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeError("add_bias: bias " + detail::dims(bias.rows(), bias.cols()) +
                     " does not match input " + detail::dims(a.rows(), a.cols()));
  }
  Matrix<Scalar> out = a.value().rowwise() + bias.value().row(0);
  const auto ia = a.id(), ib = bias.id();
  return a.tape().record("add_bias", std::move(out), {a, bias}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    const Matrix<Scalar> g = t.grad_ref(self);
    detail::accumulate(t, ia, g);
    if (t.requires_grad(ib)) t.grad_ref(ib) += g.colwise().sum();
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, double factor) {
  const auto ia = a.id();
  const Scalar c = static_cast<Scalar>(factor);
  return a.tape().record("scale", a.value() * c, {a}, [ia, c](Tape<Scalar>& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad_ref(ia) += t.grad_ref(self) * c;
  });
}

// Adds a constant to every entry.
template <typename Scalar>
Var<Scalar> shift(const Var<Scalar>& a, double offset) {
  const auto ia = a.id();
  Matrix<Scalar> out = a.value().array() + static_cast<Scalar>(offset);
  return a.tape().record("shift", std::move(out), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad_ref(ia) += t.grad_ref(self);
  });
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row mismatch " + std::to_string(rows) + " vs " +
                       std::to_string(p.rows()));
    }
    cols += p.cols();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    layout.emplace_back(p.id(), offset);
    offset += p.cols();
  }
  return parts.front().tape().record(
      "concat_cols", std::move(out), parts, [layout](Tape<Scalar>& t, std::size_t self) {
        const auto& g = t.grad_ref(self);
        for (const auto& [id, off] : layout) {
          if (t.requires_grad(id)) t.grad_ref(id) += g.middleCols(off, t.value(id).cols());
        }
      });
}

template <typename Scalar>
Var<Scalar> slice(const Var<Scalar>& a, Eigen::Index row, Eigen::Index nrows, Eigen::Index col,
                  Eigen::Index ncols) {
  if (row < 0 || col < 0 || nrows < 0 || ncols < 0 || row + nrows > a.rows() ||
      col + ncols > a.cols()) {
    throw ShapeError("slice: block (" + std::to_string(row) + "," + std::to_string(col) + ") " +
                     detail::dims(nrows, ncols) + " outside " + detail::dims(a.rows(), a.cols()));
  }
  const auto ia = a.id();
  Matrix<Scalar> out = a.value().block(row, col, nrows, ncols);
  return a.tape().record("slice", std::move(out), {a},
                         [ia, row, col, nrows, ncols](Tape<Scalar>& t, std::size_t self) {
                           if (t.requires_grad(ia)) {
                             t.grad_ref(ia).block(row, col, nrows, ncols) += t.grad_ref(self);
                           }
                         });
}

template <typename Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& a, Eigen::Index col, Eigen::Index ncols) {
  return slice(a, 0, a.rows(), col, ncols);
}

template <typename Scalar>
Var<Scalar> slice_rows(const Var<Scalar>& a, Eigen::Index row, Eigen::Index nrows) {
  return slice(a, row, nrows, 0, a.cols());
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& a) {
  const auto ia = a.id();
  Matrix<Scalar> out = a.value().transpose();
  return a.tape().record("transpose", std::move(out), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad_ref(ia) += t.grad_ref(self).transpose();
  });
}

// Row i of the result is row indices[i] of a; repeated indices accumulate.
template <typename Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& a, std::vector<Eigen::Index> indices) {
  Matrix<Scalar> out(static_cast<Eigen::Index>(indices.size()), a.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= a.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(indices[i]) + " outside " +
                       std::to_string(a.rows()) + " rows");
    }
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(indices[i]);
  }
  const auto ia = a.id();
  return a.tape().record("gather_rows", std::move(out), {a},
                         [ia, idx = std::move(indices)](Tape<Scalar>& t, std::size_t self) {
                           if (!t.requires_grad(ia)) return;
                           const auto& g = t.grad_ref(self);
                           auto& ga = t.grad_ref(ia);
                           for (std::size_t i = 0; i < idx.size(); ++i) {
                             ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                           }
                         });
}

// Constant sparse matrix times a recorded dense matrix.
template <typename Scalar>
Var<Scalar> spmm(const SparseMatrix<Scalar>& s, const Var<Scalar>& a) {
  if (s.cols() != a.rows()) {
    throw ShapeError("spmm: shape mismatch " + detail::dims(s.rows(), s.cols()) + " * " +
                     detail::dims(a.rows(), a.cols()));
  }
  Matrix<Scalar> out = s * a.value();
  const auto ia = a.id();
  return a.tape().record("spmm", std::move(out), {a}, [ia, s](Tape<Scalar>& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad_ref(ia).noalias() += s.transpose() * t.grad_ref(self);
  });
}

// Softmax along each row, max-subtracted.
template <typename Scalar>
Var<Scalar> row_softmax(const Var<Scalar>& a) {
  const auto& x = a.value();
  Matrix<Scalar> y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = static_cast<double>(x.row(r).maxCoeff());
    double z = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) z += std::exp(static_cast<double>(x(r, c)) - m);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      y(r, c) = static_cast<Scalar>(std::exp(static_cast<double>(x(r, c)) - m) / z);
    }
  }
  const auto ia = a.id();
  return a.tape().record("row_softmax", std::move(y), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const auto& y = t.value(self);
    const auto& g = t.grad_ref(self);
    const Matrix<Scalar> gy = g.cwiseProduct(y);
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = gy.rowwise().sum();
    t.grad_ref(ia) += (g.colwise() - dot).cwiseProduct(y);
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  const auto ia = a.id();
  Matrix<Scalar> out = a.value().cwiseMax(Scalar(0));
  return a.tape().record("relu", std::move(out), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const auto mask = (t.value(ia).array() > Scalar(0)).template cast<Scalar>();
    t.grad_ref(ia).array() += t.grad_ref(self).array() * mask;
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  const auto ia = a.id();
  Matrix<Scalar> out = a.value().unaryExpr([](Scalar v) {
    return v >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-v))
                          : std::exp(v) / (Scalar(1) + std::exp(v));
  });
  return a.tape().record("sigmoid", std::move(out), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const auto& y = t.value(self);
    t.grad_ref(ia).array() += t.grad_ref(self).array() * y.array() * (Scalar(1) - y.array());
  });
}

// log(sigmoid(x)) without underflow for large negative x.
template <typename Scalar>
Var<Scalar> log_sigmoid(const Var<Scalar>& a) {
  const auto ia = a.id();
  Matrix<Scalar> out = a.value().unaryExpr([](Scalar v) {
    return std::min(v, Scalar(0)) - std::log1p(std::exp(-std::abs(v)));
  });
  return a.tape().record("log_sigmoid", std::move(out), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    // d/dx log sigmoid(x) = sigmoid(-x)
    const Matrix<Scalar> d = t.value(ia).unaryExpr([](Scalar v) {
      return v >= Scalar(0) ? std::exp(-v) / (Scalar(1) + std::exp(-v))
                            : Scalar(1) / (Scalar(1) + std::exp(v));
    });
    t.grad_ref(ia) += t.grad_ref(self).cwiseProduct(d);
  });
}

template <typename Scalar>
Var<Scalar> log(const Var<Scalar>& a) {
  const auto ia = a.id();
  Matrix<Scalar> out = a.value().array().log();
  return a.tape().record("log", std::move(out), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad_ref(ia).array() += t.grad_ref(self).array() / t.value(ia).array();
  });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& a) {
  const auto ia = a.id();
  Matrix<Scalar> out = a.value().array().exp();
  return a.tape().record("exp", std::move(out), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad_ref(ia) += t.grad_ref(self).cwiseProduct(t.value(self));
  });
}

inline constexpr double kLayerNormEpsilon = 1e-5;

// Per-row normalization to zero mean and unit variance (no affine terms).
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& a, double eps = kLayerNormEpsilon) {
  const auto& x = a.value();
  const Eigen::Index n = x.cols();
  Matrix<Scalar> y(x.rows(), n);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r).template cast<double>();
    const double mu = row.mean();
    const double var = (row.array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std(r) = static_cast<Scalar>(is);
    y.row(r) = ((row.array() - mu) * is).matrix().template cast<Scalar>();
  }
  const auto ia = a.id();
  return a.tape().record("layer_norm", std::move(y), {a},
                         [ia, inv_std, n](Tape<Scalar>& t, std::size_t self) {
                           if (!t.requires_grad(ia)) return;
                           const auto& y = t.value(self);
                           const auto& g = t.grad_ref(self);
                           auto& ga = t.grad_ref(ia);
                           for (Eigen::Index r = 0; r < y.rows(); ++r) {
                             const auto gr = g.row(r).template cast<double>();
                             const auto yr = y.row(r).template cast<double>();
                             const double gm = gr.mean();
                             const double gym = gr.cwiseProduct(yr).sum() / static_cast<double>(n);
                             ga.row(r) += ((gr.array() - gm - yr.array() * gym) *
                                           static_cast<double>(inv_std(r)))
                                              .matrix()
                                              .template cast<Scalar>();
                           }
                         });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = static_cast<Scalar>(a.value().template cast<double>().sum());
  const auto ia = a.id();
  return a.tape().record("sum", std::move(out), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad_ref(ia).array() += t.grad_ref(self)(0, 0);
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  if (a.value().size() == 0) throw ShapeError("mean: empty input");
  const double n = static_cast<double>(a.value().size());
  Matrix<Scalar> out(1, 1);
  out(0, 0) = static_cast<Scalar>(a.value().template cast<double>().sum() / n);
  const auto ia = a.id();
  return a.tape().record("mean", std::move(out), {a}, [ia, n](Tape<Scalar>& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad_ref(ia).array() += static_cast<Scalar>(t.grad_ref(self)(0, 0) / n);
  });
}

// [n x m] -> [n x 1]
template <typename Scalar>
Var<Scalar> row_sum(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().template cast<double>().rowwise().sum().template cast<Scalar>();
  const auto ia = a.id();
  return a.tape().record("row_sum", std::move(out), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.grad_ref(self);
    t.grad_ref(ia).colwise() += g.col(0);
  });
}

// Multiplies row i of a by s(i, 0).
template <typename Scalar>
Var<Scalar> scale_rows(const Var<Scalar>& a, const Var<Scalar>& s) {
  if (s.cols() != 1 || s.rows() != a.rows()) {
    throw ShapeError("scale_rows: scale " + detail::dims(s.rows(), s.cols()) + " does not match " +
                     detail::dims(a.rows(), a.cols()));
  }
  Matrix<Scalar> out = a.value().array().colwise() * s.value().col(0).array();
  const auto ia = a.id(), is = s.id();
  return a.tape().record("scale_rows", std::move(out), {a, s}, [ia, is](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad_ref(self);
    if (t.requires_grad(ia)) t.grad_ref(ia).array() += g.array().colwise() * t.value(is).col(0).array();
    if (t.requires_grad(is)) {
      t.grad_ref(is).col(0) += g.cwiseProduct(t.value(ia)).rowwise().sum();
    }
  });
}

// Row-wise cosine similarity, [n x m] x [n x m] -> [n x 1]. A zero-norm row yields 0.
template <typename Scalar>
Var<Scalar> cosine_similarity(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape("cosine_similarity", a, b);
  const Eigen::Index n = a.rows();
  Matrix<Scalar> out(n, 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto x = a.value().row(r).template cast<double>();
    const auto y = b.value().row(r).template cast<double>();
    const double nx = x.norm(), ny = y.norm();
    out(r, 0) = (nx == 0.0 || ny == 0.0) ? Scalar(0) : static_cast<Scalar>(x.dot(y) / (nx * ny));
  }
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("cosine_similarity", std::move(out), {a, b},
                         [ia, ib](Tape<Scalar>& t, std::size_t self) {
                           const auto& g = t.grad_ref(self);
                           const auto& c = t.value(self);
                           for (Eigen::Index r = 0; r < g.rows(); ++r) {
                             const auto x = t.value(ia).row(r).template cast<double>();
                             const auto y = t.value(ib).row(r).template cast<double>();
                             const double nx = x.norm(), ny = y.norm();
                             if (nx == 0.0 || ny == 0.0) continue;
                             const double gr = static_cast<double>(g(r, 0));
                             const double cr = static_cast<double>(c(r, 0));
                             if (t.requires_grad(ia)) {
                               t.grad_ref(ia).row(r) +=
                                   (gr * (y / (nx * ny) - cr * x / (nx * nx))).template cast<Scalar>();
                             }
                             if (t.requires_grad(ib)) {
                               t.grad_ref(ib).row(r) +=
                                   (gr * (x / (nx * ny) - cr * y / (ny * ny))).template cast<Scalar>();
                             }
                           }
                         });
}

// Mean of squared differences -> [1 x 1].
template <typename Scalar>
Var<Scalar> squared_error(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape("squared_error", a, b);
  if (a.value().size() == 0) throw ShapeError("squared_error: empty input");
  const double n = static_cast<double>(a.value().size());
  Matrix<Scalar> out(1, 1);
  out(0, 0) = static_cast<Scalar>(
      (a.value() - b.value()).template cast<double>().squaredNorm() / n);
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("squared_error", std::move(out), {a, b},
                         [ia, ib, n](Tape<Scalar>& t, std::size_t self) {
                           const Scalar g = t.grad_ref(self)(0, 0);
                           const Matrix<Scalar> d =
                               (t.value(ia) - t.value(ib)) * static_cast<Scalar>(2.0 * g / n);
                           if (t.requires_grad(ia)) t.grad_ref(ia) += d;
                           if (t.requires_grad(ib)) t.grad_ref(ib) -= d;
                         });
}

// Row-wise dot product, [n x m] x [n x m] -> [n x 1].
template <typename Scalar>
Var<Scalar> row_dot(const Var<Scalar>& a, const Var<Scalar>& b) {
  return row_sum(mul(a, b));
}

}  // namespace taskrag
