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
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "taskrag/checkpoint.hpp"
#include "taskrag/ops.hpp"
#include "taskrag/params.hpp"
#include "taskrag/rng.hpp"

namespace taskrag {

inline constexpr double kDefaultRho = 0.6;
inline constexpr double kDefaultTau = 1.0;

struct TamConfig {
  int dim = 64;
  int heads = 4;
  int struct_layers = 2;
  int hidden = 32;        // d_hid
  int ffn_hidden = 64;
  int score_hidden = 64;
  bool complete_pair_adjacency = true;  // A_s on the two tokens
  bool disable_semantic = false;
  bool disable_structure = false;

  void validate() const;
};

// Fresh parameters: Glorot-uniform weights, zero biases, P ~ U(-0.1, 0.1).
ParameterSet<float> init_tam_params(const TamConfig& config, std::uint64_t seed);

Checkpoint tam_to_checkpoint(const ParameterSet<float>& params, const TamConfig& config);
std::pair<ParameterSet<float>, TamConfig> tam_from_checkpoint(const Checkpoint& ckpt);

// D^-1 (A_s + I) for the two pair tokens.
Eigen::Matrix2d pair_propagation(bool complete);

// Multi-head self-attention over the two-token sequence (a, b), each [B x w].
// Per head h: softmax(Q_h K_h^T / sqrt(d_k)) V_h, heads concatenated and
// projected by wo. Returns the two token outputs.
template <typename Scalar>
std::pair<Var<Scalar>, Var<Scalar>> pair_attention(const Var<Scalar>& a, const Var<Scalar>& b, const Var<Scalar>& wq,
                                                   const Var<Scalar>& wk, const Var<Scalar>& wv,
                                                   const Var<Scalar>& wo, int heads) {
  const Eigen::Index width = wq.cols();
  if (heads < 1 || width % heads != 0) {
    throw ShapeError("pair_attention: " + std::to_string(heads) + " heads do not divide width " +
                     std::to_string(width));
  }
  const Eigen::Index dk = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const Var<Scalar> qa = matmul(a, wq), qb = matmul(b, wq);
  const Var<Scalar> ka = matmul(a, wk), kb = matmul(b, wk);
  const Var<Scalar> va = matmul(a, wv), vb = matmul(b, wv);
  std::vector<Var<Scalar>> out_a, out_b;
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c = h * dk;
    const auto qha = slice_cols(qa, c, dk), qhb = slice_cols(qb, c, dk);
    const auto kha = slice_cols(ka, c, dk), khb = slice_cols(kb, c, dk);
    const auto vha = slice_cols(va, c, dk), vhb = slice_cols(vb, c, dk);
    const auto attend = [&](const Var<Scalar>& q) {
      const auto w = row_softmax(scale(concat_cols<Scalar>({row_dot(q, kha), row_dot(q, khb)}), inv_sqrt));
      return add(scale_rows(vha, slice_cols(w, 0, 1)), scale_rows(vhb, slice_cols(w, 1, 1)));
    };
    out_a.push_back(attend(qha));
    out_b.push_back(attend(qhb));
  }
  return {matmul(concat_cols(out_a), wo), matmul(concat_cols(out_b), wo)};
}

// Token inputs of one batch of pairs, each [B x d]: token 0 the query
// subgraph encoding, token 1 the candidate's.
template <typename Scalar>
struct PairTokens {
  Var<Scalar> query;
  Var<Scalar> candidate;
};

template <typename Scalar>
PairTokens<Scalar> add_positions(const PairTokens<Scalar>& tokens, const BoundParams<Scalar>& p) {
  const auto& pos = p["pos"];
  return {add_bias(tokens.query, slice_rows(pos, 0, 1)), add_bias(tokens.candidate, slice_rows(pos, 1, 1))};
}

// [B x 2d]: attention outputs of both tokens side by side.
template <typename Scalar>
Var<Scalar> semantic_encode(const PairTokens<Scalar>& tokens, const BoundParams<Scalar>& p, const TamConfig& config) {
  const auto h = add_positions(tokens, p);
  auto [a, b] = pair_attention(h.query, h.candidate, p["sem.wq"], p["sem.wk"], p["sem.wv"], p["sem.wo"], config.heads);
  return concat_cols<Scalar>({a, b});
}

// [B x d]: projection, attention + residual + layer norm per layer, FFN,
// D^-1 (A_s + I) propagation and W_out, then a mean over the two tokens.
template <typename Scalar>
Var<Scalar> structure_encode(const PairTokens<Scalar>& tokens, const BoundParams<Scalar>& p,
                             const TamConfig& config) {
  const auto h = add_positions(tokens, p);
  Var<Scalar> a = add_bias(matmul(h.query, p["str.proj_w"]), p["str.proj_b"]);
  Var<Scalar> b = add_bias(matmul(h.candidate, p["str.proj_w"]), p["str.proj_b"]);
  for (int l = 0; l < config.struct_layers; ++l) {
    const std::string pre = "str.l" + std::to_string(l) + ".";
    auto [attn_a, attn_b] = pair_attention(a, b, p[pre + "wq"], p[pre + "wk"], p[pre + "wv"], p[pre + "wo"],
                                           config.heads);
    a = layer_norm(add(a, attn_a));
    b = layer_norm(add(b, attn_b));
  }
  const auto ffn = [&](const Var<Scalar>& x) {
    const auto hidden = relu(add_bias(matmul(x, p["str.ffn_w1"]), p["str.ffn_b1"]));
    return add_bias(matmul(hidden, p["str.ffn_w2"]), p["str.ffn_b2"]);
  };
  const Var<Scalar> fa = ffn(a), fb = ffn(b);
  const Eigen::Matrix2d m = pair_propagation(config.complete_pair_adjacency);
  const auto mix = [&](int row) { return add(scale(fa, m(row, 0)), scale(fb, m(row, 1))); };
  const Var<Scalar> out_a = matmul(mix(0), p["str.out_w"]);
  const Var<Scalar> out_b = matmul(mix(1), p["str.out_w"]);
  return scale(add(out_a, out_b), 0.5);
}

// [B x 1]: w^T ReLU(W h_task + b) with h_task = [h_sem || h_str]. A disabled
// path contributes zeros of its width.
template <typename Scalar>
Var<Scalar> tam_score(const PairTokens<Scalar>& tokens, const BoundParams<Scalar>& p, const TamConfig& config) {
  Tape<Scalar>& tape = tokens.query.tape();
  const Eigen::Index rows = tokens.query.rows();
  const Var<Scalar> sem = config.disable_semantic ? tape.constant(Matrix<Scalar>::Zero(rows, 2 * config.dim))
                                                  : semantic_encode(tokens, p, config);
  const Var<Scalar> str = config.disable_structure ? tape.constant(Matrix<Scalar>::Zero(rows, config.dim))
                                                   : structure_encode(tokens, p, config);
  const Var<Scalar> h_task = concat_cols<Scalar>({sem, str});
  return matmul(relu(add_bias(matmul(h_task, p["score.w"]), p["score.b"])), p["score.v"]);
}

// L_ocl = log(1 + sum over pairs with C_k > C_l of exp((s_l - s_k) / tau)),
// evaluated with the largest exponent factored out. 0 when no pair is ordered.
template <typename Scalar>
Var<Scalar> ordinal_loss(const Var<Scalar>& scores, std::span<const double> targets, double tau) {
  const auto n = static_cast<Eigen::Index>(targets.size());
  if (scores.rows() != n || scores.cols() != 1) {
    throw ShapeError("ordinal_loss: scores " + detail::dims(scores.rows(), scores.cols()) + " for " +
                     std::to_string(n) + " targets");
  }
  std::vector<Eigen::Triplet<Scalar>> triplets;
  Eigen::Index pairs = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index l = 0; l < n; ++l) {
      if (targets[k] > targets[l]) {
        triplets.emplace_back(pairs, l, Scalar(1));
        triplets.emplace_back(pairs, k, Scalar(-1));
        ++pairs;
      }
    }
  }
  Tape<Scalar>& tape = scores.tape();
  if (pairs == 0) return tape.constant(Matrix<Scalar>::Zero(1, 1));
  SparseMatrix<Scalar> diff(pairs, n);
  diff.setFromTriplets(triplets.begin(), triplets.end());
  const Var<Scalar> x = scale(spmm(diff, scores), 1.0 / tau);
  const double top = std::max(0.0, static_cast<double>(x.value().maxCoeff()));
  // log(exp(-top) + sum exp(x - top)) + top
  return shift(log(shift(sum(exp(shift(x, -top))), std::exp(-top))), top);
}

// L_mtl = mean squared error between scores [B x 1] and targets.
template <typename Scalar>
Var<Scalar> magnitude_loss(const Var<Scalar>& scores, std::span<const double> targets) {
  Matrix<Scalar> c(static_cast<Eigen::Index>(targets.size()), 1);
  for (std::size_t i = 0; i < targets.size(); ++i) c(static_cast<Eigen::Index>(i), 0) = static_cast<Scalar>(targets[i]);
  return squared_error(scores, scores.tape().constant(std::move(c)));
}

template <typename Scalar>
struct BisclTerms {
  Var<Scalar> mtl;
  Var<Scalar> ocl;
  Var<Scalar> total;
};

// rho * L_ocl + (1 - rho) * L_mtl.
template <typename Scalar>
BisclTerms<Scalar> biscl_loss(const Var<Scalar>& scores, std::span<const double> targets, double rho, double tau) {
  if (targets.empty()) throw std::invalid_argument("biscl_loss: empty batch");
  if (!(tau > 0.0)) throw std::invalid_argument("biscl_loss: tau must be positive");
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("biscl_loss: rho outside [0, 1]");
  const Var<Scalar> mtl = magnitude_loss(scores, targets);
  const Var<Scalar> ocl = ordinal_loss(scores, targets, tau);
  return {mtl, ocl, add(scale(ocl, rho), scale(mtl, 1.0 - rho))};
}

// Scores of B pairs without recording gradients.
std::vector<float> score_pairs(const ParameterSet<float>& params, const TamConfig& config, const MatrixXf& query,
                               const MatrixXf& candidate);

struct TamTrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double lr = 1e-3;
  double rho = kDefaultRho;
  double tau = kDefaultTau;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 0;
};

struct TamEpochLog {
  int epoch;
  double mtl;
  double ocl;
  double total;
};

struct TamTrainResult {
  ParameterSet<float> params;
  std::vector<TamEpochLog> log;
};

// Minibatch BiSCL training on resolved rows: row i pairs query[i] with
// candidate[i] and target C[i].
TamTrainResult pretrain_tam(const MatrixXf& query, const MatrixXf& candidate, std::span<const double> targets,
                            const TamConfig& config, const TamTrainConfig& train);

// `epoch,L_mtl,L_ocl,L_BiSCL` lines with a header row.
std::string format_tam_log(std::span<const TamEpochLog> log);

}  // namespace taskrag
