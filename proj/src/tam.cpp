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

#include "taskrag/tam.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "taskrag/text.hpp"

namespace taskrag {

namespace {

constexpr const char* kTamKind = "task_aware_model";

MatrixXf glorot(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  MatrixXf m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.uniform(-limit, limit));
  return m;
}


}  // namespace

void TamConfig::validate() const {
  if (dim < 1 || hidden < 1 || ffn_hidden < 1 || score_hidden < 1 || struct_layers < 0) {
    throw std::invalid_argument("TamConfig: widths must be positive");
  }
  if (heads < 1 || dim % heads != 0 || hidden % heads != 0) {
    throw std::invalid_argument("TamConfig: " + std::to_string(heads) + " heads must divide dim " +
                                std::to_string(dim) + " and hidden " + std::to_string(hidden));
  }
}

ParameterSet<float> init_tam_params(const TamConfig& c, std::uint64_t seed) {
  c.validate();
  Rng rng(derive_seed(seed, "tam_init"));
  ParameterSet<float> p;
  MatrixXf pos(2, c.dim);
  for (Eigen::Index i = 0; i < pos.size(); ++i) pos.data()[i] = static_cast<float>(rng.uniform(-0.1, 0.1));
  p.add("pos", pos);
  for (const char* name : {"sem.wq", "sem.wk", "sem.wv", "sem.wo"}) p.add(name, glorot(rng, c.dim, c.dim));
  p.add("str.proj_w", glorot(rng, c.dim, c.hidden));
  p.add("str.proj_b", MatrixXf::Zero(1, c.hidden));
  for (int l = 0; l < c.struct_layers; ++l) {
    const std::string pre = "str.l" + std::to_string(l) + ".";
    for (const char* w : {"wq", "wk", "wv", "wo"}) p.add(pre + w, glorot(rng, c.hidden, c.hidden));
  }
  p.add("str.ffn_w1", glorot(rng, c.hidden, c.ffn_hidden));
  p.add("str.ffn_b1", MatrixXf::Zero(1, c.ffn_hidden));
  p.add("str.ffn_w2", glorot(rng, c.ffn_hidden, c.hidden));
  p.add("str.ffn_b2", MatrixXf::Zero(1, c.hidden));
  p.add("str.out_w", glorot(rng, c.hidden, c.dim));
  p.add("score.w", glorot(rng, 3 * c.dim, c.score_hidden));
  p.add("score.b", MatrixXf::Zero(1, c.score_hidden));
  p.add("score.v", glorot(rng, c.score_hidden, 1));
  return p;
}

Checkpoint tam_to_checkpoint(const ParameterSet<float>& params, const TamConfig& c) {
  Checkpoint ckpt;
  ckpt.kind = kTamKind;
  ckpt.meta["dim"] = std::to_string(c.dim);
  ckpt.meta["heads"] = std::to_string(c.heads);
  ckpt.meta["struct_layers"] = std::to_string(c.struct_layers);
  ckpt.meta["hidden"] = std::to_string(c.hidden);
  ckpt.meta["ffn_hidden"] = std::to_string(c.ffn_hidden);
  ckpt.meta["score_hidden"] = std::to_string(c.score_hidden);
  ckpt.meta["complete_pair_adjacency"] = c.complete_pair_adjacency ? "1" : "0";
  ckpt.meta["disable_semantic"] = c.disable_semantic ? "1" : "0";
  ckpt.meta["disable_structure"] = c.disable_structure ? "1" : "0";
  ckpt.arrays = params;
  return ckpt;
}

std::pair<ParameterSet<float>, TamConfig> tam_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != kTamKind) {
    throw FormatError("expected a '" + std::string(kTamKind) + "' checkpoint, got '" + ckpt.kind + "'");
  }
  TamConfig c;
  c.dim = std::stoi(ckpt.meta.at("dim"));
  c.heads = std::stoi(ckpt.meta.at("heads"));
  c.struct_layers = std::stoi(ckpt.meta.at("struct_layers"));
  c.hidden = std::stoi(ckpt.meta.at("hidden"));
  c.ffn_hidden = std::stoi(ckpt.meta.at("ffn_hidden"));
  c.score_hidden = std::stoi(ckpt.meta.at("score_hidden"));
  c.complete_pair_adjacency = ckpt.meta.at("complete_pair_adjacency") == "1";
  c.disable_semantic = ckpt.meta.at("disable_semantic") == "1";
  c.disable_structure = ckpt.meta.at("disable_structure") == "1";
  c.validate();
  return {ckpt.arrays, c};
}

Eigen::Matrix2d pair_propagation(bool complete) {
  Eigen::Matrix2d a = Eigen::Matrix2d::Identity();
  if (complete) a(0, 1) = a(1, 0) = 1.0;
  for (int r = 0; r < 2; ++r) a.row(r) /= a.row(r).sum();
  return a;
}

std::vector<float> score_pairs(const ParameterSet<float>& params, const TamConfig& config, const MatrixXf& query,
                               const MatrixXf& candidate) {
  Tape<float> tape;
  BoundParams<float> bound(tape, params, [](std::string_view) { return false; });
  const PairTokens<float> tokens{tape.constant(query), tape.constant(candidate)};
  const MatrixXf s = tam_score(tokens, bound, config).value();
  return std::vector<float>(s.data(), s.data() + s.size());
}

TamTrainResult pretrain_tam(const MatrixXf& query, const MatrixXf& candidate, std::span<const double> targets,
                            const TamConfig& config, const TamTrainConfig& train) {
  const auto n = static_cast<std::size_t>(query.rows());
  if (n == 0) throw std::invalid_argument("pretrain_tam: no training rows");
  if (candidate.rows() != query.rows() || targets.size() != n) {
    throw ShapeError("pretrain_tam: " + std::to_string(query.rows()) + " queries, " +
                     std::to_string(candidate.rows()) + " candidates, " + std::to_string(targets.size()) +
                     " targets");
  }
  if (query.cols() != config.dim || candidate.cols() != config.dim) {
    throw ShapeError("pretrain_tam: token width differs from model width " + std::to_string(config.dim));
  }
  TamTrainResult result{init_tam_params(config, train.seed), {}};
  Optimizer<float> opt(train.optimizer, train.lr, 0.0);
  Rng rng(derive_seed(train.seed, "tam_batches"));
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto batch = static_cast<std::size_t>(std::max(1, train.batch_size));

  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    rng.shuffle(std::span<Eigen::Index>(order));
    TamEpochLog log{epoch, 0.0, 0.0, 0.0};
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t m = std::min(batch, n - start);
      std::vector<Eigen::Index> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(start + m));
      std::vector<double> c(m);
      for (std::size_t i = 0; i < m; ++i) c[i] = targets[static_cast<std::size_t>(rows[i])];

      Tape<float> tape;
      BoundParams<float> bound(tape, result.params);
      const PairTokens<float> tokens{tape.constant(query(rows, Eigen::all)), tape.constant(candidate(rows, Eigen::all))};
      const auto terms = biscl_loss(tam_score(tokens, bound, config), c, train.rho, train.tau);
      tape.backward(terms.total);
      opt.step(result.params, bound.gradients());

      const double w = static_cast<double>(m) / static_cast<double>(n);
      log.mtl += w * terms.mtl.value()(0, 0);
      log.ocl += w * terms.ocl.value()(0, 0);
      log.total += w * terms.total.value()(0, 0);
    }
    result.log.push_back(log);
  }
  return result;
}

std::string format_tam_log(std::span<const TamEpochLog> log) {
  std::string s = "epoch,L_mtl,L_ocl,L_BiSCL\n";
  for (const auto& e : log) {
    s += std::to_string(e.epoch) + ',' + text::format_double(e.mtl) + ',' + text::format_double(e.ocl) + ',' +
         text::format_double(e.total) + '\n';
  }
  return s;
}

}  // namespace taskrag
