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

#include "taskrag/config.hpp"

#include <cstdlib>
#include <functional>
#include <type_traits>
#include <vector>

#include "taskrag/checkpoint.hpp"
#include "taskrag/text.hpp"

namespace taskrag {

namespace {

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }
std::string_view to_string(QueryNodes q) { return q == QueryNodes::users ? "users" : "all"; }

template <typename T>
T parse_value(std::string_view key, std::string_view v) {
  const std::string context = "config key '" + std::string(key) + "'";
  if constexpr (std::is_same_v<T, bool>) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(context + ": expected true or false, got '" + std::string(v) + "'");
  } else if constexpr (std::is_same_v<T, std::string> || std::is_same_v<T, std::filesystem::path>) {
    return T(std::string(v));
  } else if constexpr (std::is_same_v<T, AlphaMode>) {
    try {
      return parse_alpha_mode(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(context + ": " + e.what());
    }
  } else if constexpr (std::is_same_v<T, OptimizerKind>) {
    if (v == "sgd") return OptimizerKind::sgd;
    if (v == "adam") return OptimizerKind::adam;
    throw ConfigError(context + ": expected sgd or adam");
  } else if constexpr (std::is_same_v<T, KhopScope>) {
    try {
      return parse_khop_scope(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(context + ": " + e.what());
    }
  } else if constexpr (std::is_same_v<T, QueryNodes>) {
    if (v == "users") return QueryNodes::users;
    if (v == "all") return QueryNodes::all;
    throw ConfigError(context + ": expected users or all");
  } else {
    try {
      return text::parse_number<T>(v, context);
    } catch (const FormatError& e) {
      throw ConfigError(e.what());
    }
  }
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
    return v.string();
  } else if constexpr (std::is_same_v<T, double>) {
    return text::format_double(v);
  } else if constexpr (std::is_enum_v<T>) {
    return std::string(to_string(v));
  } else {
    return std::to_string(v);
  }
}

struct Field {
  std::string_view key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field field(std::string_view key, T RunConfig::*member) {
  return {key, [key, member](RunConfig& c, std::string_view v) { c.*member = parse_value<T>(key, v); },
          [member](const RunConfig& c) { return format_value(c.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      field("interactions", &RunConfig::interactions),
      field("out_dir", &RunConfig::out_dir),
      field("run_name", &RunConfig::run_name),
      field("granularity", &RunConfig::granularity),
      field("split", &RunConfig::split),
      field("dim", &RunConfig::dim),
      field("layers", &RunConfig::layers),
      field("heads", &RunConfig::heads),
      field("hidden", &RunConfig::hidden),
      field("struct_layers", &RunConfig::struct_layers),
      field("ffn_hidden", &RunConfig::ffn_hidden),
      field("score_hidden", &RunConfig::score_hidden),
      field("hops", &RunConfig::hops),
      field("top_k", &RunConfig::top_k),
      field("top_m", &RunConfig::top_m),
      field("cap", &RunConfig::cap),
      field("library_max_entries", &RunConfig::library_max_entries),
      field("khop_scope", &RunConfig::khop_scope),
      field("alpha_mode", &RunConfig::alpha_mode),
      field("temperature", &RunConfig::temperature),
      field("beta_init", &RunConfig::beta_init),
      field("rho", &RunConfig::rho),
      field("tau", &RunConfig::tau),
      field("lambda", &RunConfig::lambda),
      field("mu", &RunConfig::mu),
      field("gamma", &RunConfig::gamma),
      field("drop_rate", &RunConfig::drop_rate),
      field("lr", &RunConfig::lr),
      field("optimizer", &RunConfig::optimizer),
      field("pretrain_epochs", &RunConfig::pretrain_epochs),
      field("batch_size", &RunConfig::batch_size),
      field("tam_epochs", &RunConfig::tam_epochs),
      field("tam_batch_size", &RunConfig::tam_batch_size),
      field("finetune_epochs", &RunConfig::finetune_epochs),
      field("train_tam", &RunConfig::train_tam),
      field("queries", &RunConfig::queries),
      field("candidates_per_query", &RunConfig::candidates_per_query),
      field("n_pos", &RunConfig::n_pos),
      field("epsilon", &RunConfig::epsilon),
      field("include_positives", &RunConfig::include_positives),
      field("query_nodes", &RunConfig::query_nodes),
      field("disable_semantic", &RunConfig::disable_semantic),
      field("disable_structure", &RunConfig::disable_structure),
      field("disable_retrieval", &RunConfig::disable_retrieval),
      field("eval_k", &RunConfig::eval_k),
      field("seed", &RunConfig::seed),
  };
  return table;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError("config: " + message);
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + std::string(key) + "'");
}

void RunConfig::validate() const {
  require(!run_name.empty() && run_name.find('/') == std::string::npos, "run_name must be a plain name");
  require(granularity > 0, "granularity must be > 0");
  require(split >= 1, "split must be >= 1");
  require(dim >= 1 && layers >= 1, "dim and layers must be >= 1");
  require(heads >= 1 && dim % heads == 0 && hidden % heads == 0, "heads must divide dim and hidden");
  require(hidden >= 1 && struct_layers >= 0 && ffn_hidden >= 1 && score_hidden >= 1, "model widths must be >= 1");
  require(hops >= 0 && cap >= 1, "hops must be >= 0 and cap >= 1");
  require(top_k >= 1 && top_m >= 0 && top_m <= top_k, "need 0 <= top_m <= top_k and top_k >= 1");
  require(temperature > 0.0 && tau > 0.0, "temperature and tau must be > 0");
  require(rho >= 0.0 && rho <= 1.0, "rho must be in [0, 1]");
  require(lambda >= 0.0 && mu >= 0.0, "lambda and mu must be >= 0");
  require(std::isfinite(gamma) && std::isfinite(beta_init), "gamma and beta_init must be finite");
  require(drop_rate >= 0.0 && drop_rate < 1.0, "drop_rate must be in [0, 1)");
  require(lr > 0.0, "lr must be > 0");
  require(pretrain_epochs >= 1 && tam_epochs >= 1 && finetune_epochs >= 0, "epoch counts out of range");
  require(batch_size >= 1 && tam_batch_size >= 1, "batch sizes must be >= 1");
  require(queries >= 1 && candidates_per_query >= 1 && n_pos >= 1, "labeling sizes must be >= 1");
  require(epsilon >= 0.0, "epsilon must be >= 0");
  require(eval_k >= 1, "eval_k must be >= 1");
}

std::string RunConfig::to_text() const {
  std::string s;
  for (const auto& f : fields()) s += std::string(f.key) + " = " + f.get(*this) + "\n";
  return s;
}

RunConfig RunConfig::parse(std::string_view content) {
  RunConfig c;
  std::size_t line_no = 0;
  for (std::string_view line : text::split(content, '\n')) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      c.set(text::trim(line.substr(0, eq)), text::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return parse(read_file(path)); }

void RunConfig::apply_overrides(std::span<const std::string> assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + a + "': expected key=value");
    set(text::trim(std::string_view(a).substr(0, eq)), text::trim(std::string_view(a).substr(eq + 1)));
  }
  validate();
}

std::filesystem::path RunConfig::output_dir() const {
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return out_dir;
}

EncoderConfig RunConfig::encoder() const {
  EncoderConfig e;
  e.dim = dim;
  e.layers = layers;
  e.epochs = pretrain_epochs;
  e.batch_size = batch_size;
  e.lr = lr;
  e.reg_weight = mu;
  e.optimizer = optimizer;
  e.seed = derive_seed(seed, "pretrain");
  return e;
}

LibraryConfig RunConfig::library() const {
  return LibraryConfig{hops, cap, library_max_entries, derive_seed(seed, "library")};
}

TaskDatasetConfig RunConfig::labeling() const {
  TaskDatasetConfig t;
  t.queries = queries;
  t.candidates_per_query = candidates_per_query;
  t.n_pos = n_pos;
  t.epsilon = epsilon;
  t.include_positives = include_positives;
  t.query_nodes = query_nodes;
  t.scope = khop_scope;
  t.hops = hops;
  t.cap = cap;
  t.seed = derive_seed(seed, "label");
  return t;
}

TamConfig RunConfig::tam() const {
  TamConfig t;
  t.dim = dim;
  t.heads = heads;
  t.struct_layers = struct_layers;
  t.hidden = hidden;
  t.ffn_hidden = ffn_hidden;
  t.score_hidden = score_hidden;
  t.disable_semantic = disable_semantic;
  t.disable_structure = disable_structure;
  return t;
}

TamTrainConfig RunConfig::tam_training() const {
  TamTrainConfig t;
  t.epochs = tam_epochs;
  t.batch_size = tam_batch_size;
  t.lr = lr;
  t.rho = rho;
  t.tau = tau;
  t.optimizer = optimizer;
  t.seed = derive_seed(seed, "tam");
  return t;
}

FinetuneConfig RunConfig::finetune() const {
  FinetuneConfig f;
  f.fusion.top_k = top_k;
  const bool retrieval = !disable_retrieval && top_m > 0;
  f.fusion.top_m = retrieval ? top_m : 0;
  f.fusion.alpha_mode = alpha_mode;
  f.fusion.temperature = temperature;
  f.fusion.beta_init = beta_init;
  f.fusion.margin = gamma;
  f.fusion.lambda = retrieval ? lambda : 0.0;
  f.fusion.mu = mu;
  f.epochs = finetune_epochs;
  f.batch_size = batch_size;
  f.lr = lr;
  f.drop_rate = drop_rate;
  f.train_tam = train_tam;
  f.hops = hops;
  f.scope = khop_scope;
  f.cap = cap;
  f.optimizer = optimizer;
  f.seed = derive_seed(seed, "finetune");
  return f;
}

std::string RunConfig::variant_label() const {
  if (disable_retrieval || top_m == 0) return "vanilla";
  if (disable_semantic && disable_structure) return "w/o all";
  if (disable_semantic) return "w/o SEM";
  if (disable_structure) return "w/o STR";
  return "full";
}

}  // namespace taskrag
