#pragma once

// Experiment orchestration: configuration, stratified repeated splits, the
// per-replication model roster, and the CSV/JSON reports.

#include "enggnn/io.hpp"
#include "enggnn/metrics.hpp"
#include "enggnn/model.hpp"
#include "enggnn/simgen.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace enggnn {

using Json = nlohmann::json;

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char* kLibraryVersion = "0.1.0";

enum class ExperimentMode { simulate, real };

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::simulate;
  SimScenario scenario;
  std::string matrix_path;
  std::string label_column = "label";
  std::string edges_path;
  std::vector<ModelKind> roster{kAllModelKinds.begin(), kAllModelKinds.end()};
  TrainConfig train;
  ModelHyper hyper;
  BoostParams boost;
  ForestParams forest;
  int forest_graph_max_depth = 3;
  double split_fraction = 0.8;
  int replications = 20;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string output_dir = "enggnn_out";
  bool save_checkpoints = false;

  void validate() const {
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
      throw Error("config: split_fraction must lie in (0, 1)");
    if (replications < 1) throw Error("config: replications must be >= 1");
    if (roster.empty()) throw Error("config: roster must not be empty");
    if (workers < 1) throw Error("config: workers must be >= 1");
    if (forest_graph_max_depth < 0) throw Error("config: forest_graph_max_depth must be >= 0");
    train.validate();
    if (mode == ExperimentMode::simulate) {
      scenario.validate();
    } else {
      if (matrix_path.empty()) throw Error("config: data.matrix is required in real mode");
      if (edges_path.empty()) throw Error("config: data.edges is required in real mode");
    }
  }
};

namespace detail {

inline void check_keys(const Json& obj, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!obj.is_object()) throw Error("config: '" + where + "' must be an object");
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw Error("config: unknown key '" + (where.empty() ? "" : where + ".") + item.key() + "'");
  }
}

template <class T>
void read_opt(const Json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("config: bad value for '" + where + "." + key + "': " + e.what());
  }
}

inline std::string resolve_path(const std::string& p, const std::string& base) {
  if (p.empty() || base.empty()) return p;
  const std::filesystem::path path(p);
  if (path.is_absolute()) return p;
  return (std::filesystem::path(base) / path).lexically_normal().string();
}

}  // namespace detail

// Relative data paths resolve against `base_dir` (the config file's folder).
inline ExperimentConfig parse_config(const Json& j, const std::string& base_dir = "") {
  using detail::read_opt;
  detail::check_keys(j,
                     {"schema_version", "mode", "scenario", "data", "roster", "train", "model",
                      "boost", "forest", "forest_graph_max_depth", "split_fraction", "replications",
                      "seed", "workers", "output_dir", "save_checkpoints"},
                     "");
  if (!j.contains("schema_version")) throw Error("config: missing schema_version");
  if (j.at("schema_version") != kConfigSchemaVersion)
    throw Error("config: unsupported schema_version " + j.at("schema_version").dump());
  ExperimentConfig c;
  std::string mode = "simulate";
  read_opt(j, "mode", mode, "");
  if (mode == "simulate") {
    c.mode = ExperimentMode::simulate;
  } else if (mode == "real") {
    c.mode = ExperimentMode::real;
  } else {
    throw Error("config: mode must be 'simulate' or 'real'");
  }
  if (j.contains("scenario")) {
    const auto& s = j.at("scenario");
    detail::check_keys(s, {"n", "p_n", "p_t", "ba_m", "seed", "t", "threshold_rule", "threshold"},
                       "scenario");
    read_opt(s, "n", c.scenario.n, "scenario");
    read_opt(s, "p_n", c.scenario.p_n, "scenario");
    read_opt(s, "p_t", c.scenario.p_t, "scenario");
    read_opt(s, "ba_m", c.scenario.ba_m, "scenario");
    read_opt(s, "seed", c.scenario.seed, "scenario");
    read_opt(s, "t", c.scenario.t_override, "scenario");
    read_opt(s, "threshold", c.scenario.threshold, "scenario");
    std::string rule = to_string(c.scenario.rule);
    read_opt(s, "threshold_rule", rule, "scenario");
    c.scenario.rule = threshold_rule_from_string(rule);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    detail::check_keys(d, {"matrix", "label_column", "edges"}, "data");
    read_opt(d, "matrix", c.matrix_path, "data");
    read_opt(d, "label_column", c.label_column, "data");
    read_opt(d, "edges", c.edges_path, "data");
    c.matrix_path = detail::resolve_path(c.matrix_path, base_dir);
    c.edges_path = detail::resolve_path(c.edges_path, base_dir);
  }
  if (j.contains("roster")) {
    std::vector<std::string> names;
    read_opt(j, "roster", names, "");
    c.roster.clear();
    for (const auto& n : names) {
      const auto k = model_kind_from_string(n);
      if (std::find(c.roster.begin(), c.roster.end(), k) != c.roster.end())
        throw Error("config: roster lists '" + n + "' twice");
      c.roster.push_back(k);
    }
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::check_keys(t, {"learning_rate", "epochs", "batch_size", "dropout_rate",
                           "early_stop_patience", "min_delta"},
                       "train");
    read_opt(t, "learning_rate", c.train.learning_rate, "train");
    read_opt(t, "epochs", c.train.epochs, "train");
    read_opt(t, "batch_size", c.train.batch_size, "train");
    read_opt(t, "dropout_rate", c.train.dropout_rate, "train");
    read_opt(t, "early_stop_patience", c.train.early_stop_patience, "train");
    read_opt(t, "min_delta", c.train.min_delta, "train");
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::check_keys(m, {"branch_hidden", "head_hidden"}, "model");
    read_opt(m, "branch_hidden", c.hyper.branch_hidden, "model");
    read_opt(m, "head_hidden", c.hyper.head_hidden, "model");
    if (c.hyper.branch_hidden.empty()) throw Error("config: model.branch_hidden must not be empty");
  }
  if (j.contains("boost")) {
    const auto& b = j.at("boost");
    detail::check_keys(b, {"n_trees", "max_depth", "shrinkage", "lambda", "gamma", "min_child_weight"},
                       "boost");
    read_opt(b, "n_trees", c.boost.n_trees, "boost");
    read_opt(b, "max_depth", c.boost.max_depth, "boost");
    read_opt(b, "shrinkage", c.boost.shrinkage, "boost");
    read_opt(b, "lambda", c.boost.lambda, "boost");
    read_opt(b, "gamma", c.boost.gamma, "boost");
    read_opt(b, "min_child_weight", c.boost.min_child_weight, "boost");
  }
  if (j.contains("forest")) {
    const auto& f = j.at("forest");
    detail::check_keys(f, {"n_trees", "max_depth", "mtry", "bootstrap"}, "forest");
    read_opt(f, "n_trees", c.forest.n_trees, "forest");
    read_opt(f, "max_depth", c.forest.max_depth, "forest");
    read_opt(f, "mtry", c.forest.mtry, "forest");
    read_opt(f, "bootstrap", c.forest.bootstrap, "forest");
  }
  read_opt(j, "forest_graph_max_depth", c.forest_graph_max_depth, "");
  read_opt(j, "split_fraction", c.split_fraction, "");
  read_opt(j, "replications", c.replications, "");
  read_opt(j, "seed", c.seed, "");
  read_opt(j, "workers", c.workers, "");
  read_opt(j, "output_dir", c.output_dir, "");
  read_opt(j, "save_checkpoints", c.save_checkpoints, "");
  c.output_dir = detail::resolve_path(c.output_dir, base_dir);
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(path + ": " + e.what());
  }
  return parse_config(j, std::filesystem::path(path).parent_path().string());
}

inline Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["mode"] = c.mode == ExperimentMode::simulate ? "simulate" : "real";
  if (c.mode == ExperimentMode::simulate) {
    j["scenario"] = {{"n", c.scenario.n},
                     {"p_n", c.scenario.p_n},
                     {"p_t", c.scenario.p_t},
                     {"ba_m", c.scenario.ba_m},
                     {"seed", c.scenario.seed},
                     {"t", c.scenario.t_override},
                     {"threshold_rule", to_string(c.scenario.rule)},
                     {"threshold", c.scenario.threshold}};
  } else {
    j["data"] = {{"matrix", c.matrix_path}, {"label_column", c.label_column}, {"edges", c.edges_path}};
  }
  std::vector<std::string> roster;
  for (auto k : c.roster) roster.push_back(to_string(k));
  j["roster"] = roster;
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"dropout_rate", c.train.dropout_rate},
                {"early_stop_patience", c.train.early_stop_patience},
                {"min_delta", c.train.min_delta}};
  j["model"] = {{"branch_hidden", c.hyper.branch_hidden}, {"head_hidden", c.hyper.head_hidden}};
  j["boost"] = {{"n_trees", c.boost.n_trees},     {"max_depth", c.boost.max_depth},
                {"shrinkage", c.boost.shrinkage}, {"lambda", c.boost.lambda},
                {"gamma", c.boost.gamma},         {"min_child_weight", c.boost.min_child_weight}};
  j["forest"] = {{"n_trees", c.forest.n_trees},
                 {"max_depth", c.forest.max_depth},
                 {"mtry", c.forest.mtry},
                 {"bootstrap", c.forest.bootstrap}};
  j["forest_graph_max_depth"] = c.forest_graph_max_depth;
  j["split_fraction"] = c.split_fraction;
  j["replications"] = c.replications;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["output_dir"] = c.output_dir;
  j["save_checkpoints"] = c.save_checkpoints;
  return j;
}

// ---------------------------------------------------------------------------
// Data

struct ExperimentData {
  Matrix x;
  Labels y;
  std::vector<std::string> names;
  FeatureGraph external;
  std::optional<Labels> truth;  // simulate mode only
  Json info;
};

inline ExperimentData prepare_data(const ExperimentConfig& cfg) {
  ExperimentData d;
  if (cfg.mode == ExperimentMode::simulate) {
    auto sim = build_scenario(cfg.scenario);
    const auto pos = std::count(sim.y.begin(), sim.y.end(), 1);
    d.info = {{"p", cfg.scenario.p()},
              {"t", cfg.scenario.t()},
              {"edges", sim.graph.edge_count()},
              {"core_size", sim.core.size()},
              {"important_size", sim.important.size()},
              {"positive_fraction", static_cast<double>(pos) / static_cast<double>(sim.y.size())},
              {"beta0", sim.beta0},
              {"outcome_attempts", sim.outcome_attempts},
              {"threshold_rule", to_string(cfg.scenario.rule)}};
    d.truth = sim.truth();
    d.x = std::move(sim.x);
    d.y = std::move(sim.y);
    d.names = std::move(sim.names);
    d.external = std::move(sim.graph);
  } else {
    auto m = load_dataset(cfg.matrix_path, cfg.label_column);
    auto edges = load_edge_list(cfg.edges_path, m.names);
    d.info = {{"p", m.names.size()},
              {"n", m.y.size()},
              {"edges", edges.graph.edge_count()},
              {"edges_skipped_unknown", edges.skipped_unknown},
              {"edges_duplicate", edges.duplicates},
              {"identity_fallback", edges.identity_fallback}};
    d.x = std::move(m.x);
    d.y = std::move(m.y);
    d.names = std::move(m.names);
    d.external = std::move(edges.graph);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Splits

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

// Stratified: each class contributes round(fraction * count) rows to train,
// clamped so both sides keep at least one member of every class.
inline std::vector<Split> split_and_replicate(const Labels& y, double fraction, int replications,
                                              std::uint64_t master_seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("split: fraction must lie in (0, 1)");
  if (replications < 1) throw Error("split: replications must be >= 1");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(i);
  for (const auto& [cls, rows] : by_class)
    if (rows.size() < 2)
      throw Error("split: class " + std::to_string(cls) + " has fewer than 2 members");
  std::vector<Split> out;
  for (int r = 0; r < replications; ++r) {
    Split s;
    s.seed = derive_seed(master_seed, static_cast<std::uint64_t>(r), stable_hash("split"));
    Rng rng(s.seed);
    for (const auto& [cls, rows] : by_class) {
      auto shuffled = rows;
      shuffle(shuffled, rng);
      auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rows.size())));
      k = std::clamp<std::size_t>(k, 1, rows.size() - 1);
      s.train.insert(s.train.end(), shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(k));
      s.test.insert(s.test.end(), shuffled.begin() + static_cast<std::ptrdiff_t>(k), shuffled.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    out.push_back(std::move(s));
  }
  return out;
}

inline std::uint64_t run_seed(std::uint64_t master, int replication, ModelKind kind) {
  return derive_seed(master, static_cast<std::uint64_t>(replication), stable_hash(to_string(kind)));
}

// ---------------------------------------------------------------------------
// Runs

struct RunRecord {
  std::string model;
  int replication = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";
  ClassificationScores scores;
  double roc_auc = 0.0;
  double pr_auc = 0.0;
  int epochs = 0;
  std::string importance_file;
  std::optional<double> fs_roc_auc;
  std::optional<double> fs_pr_auc;
  double wall_seconds = 0.0;
  std::vector<double> percentile;  // in-memory only

  bool ok() const { return status == "ok"; }
};

struct ReplicationArtifacts {
  Matrix train_x;
  Labels train_y;
  Matrix test_x;
  Labels test_y;
  std::optional<TreeEnsemble> boosted;
  std::optional<FeatureGraph> boosted_graph;
  std::optional<FeatureGraph> forest_graph;
  double boosted_seconds = 0.0;
};

inline bool roster_has(const std::vector<ModelKind>& r, std::initializer_list<ModelKind> ks) {
  for (auto k : ks)
    if (std::find(r.begin(), r.end(), k) != r.end()) return true;
  return false;
}

// Standardization, tree fitting and graph generation see training rows only.
inline ReplicationArtifacts prepare_replication(const ExperimentConfig& cfg, const ExperimentData& data,
                                                const Split& split, int rep) {
  ReplicationArtifacts a;
  const auto stdz = zscore_fit_apply(select_rows(data.x, split.train), select_rows(data.x, split.test));
  a.train_x = stdz.train;
  a.test_x = stdz.other;
  a.train_y = select(data.y, split.train);
  a.test_y = select(data.y, split.test);
  const auto p = static_cast<std::size_t>(data.x.cols());
  if (roster_has(cfg.roster, {ModelKind::enggnn, ModelKind::gedfn_xgb, ModelKind::gbt})) {
    const auto t0 = std::chrono::steady_clock::now();
    a.boosted = fit_gradient_boosted_trees(a.train_x, a.train_y, cfg.boost);
    a.boosted_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    a.boosted_graph = extract_feature_graph(*a.boosted, p);
  }
  if (roster_has(cfg.roster, {ModelKind::gedfn_rf})) {
    ForestParams fp = cfg.forest;
    fp.max_depth = cfg.forest_graph_max_depth;
    fp.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep), stable_hash("forest-graph"));
    a.forest_graph = extract_feature_graph(fit_random_forest(a.train_x, a.train_y, fp), p);
  }
  return a;
}

inline std::string importance_file_name(ModelKind k, int rep) {
  return "importance_" + to_string(k) + "_" + std::to_string(rep) + ".csv";
}

inline std::string importance_to_text(const ImportanceRanking& r, const std::vector<std::string>& names) {
  CsvTable t;
  t.header = {"feature", "name", "score", "percentile"};
  for (std::size_t j = 0; j < r.scores.size(); ++j)
    t.rows.push_back({std::to_string(j), names.empty() ? std::to_string(j) : names[j],
                      format_real(r.scores[j]), format_real(r.percentile[j])});
  return t.to_text();
}

inline std::string sanitize_cell(std::string s) {
  for (auto& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

inline RunRecord run_model(const ExperimentConfig& cfg, const ExperimentData& data,
                           const ReplicationArtifacts& a, ModelKind kind, int rep,
                           const std::string& outdir) {
  RunRecord rec;
  rec.model = to_string(kind);
  rec.replication = rep;
  rec.seed = run_seed(cfg.seed, rep, kind);
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto p = static_cast<std::size_t>(data.x.cols());
    AnyModel model;
    if (kind == ModelKind::gbt) {
      if (!a.boosted) throw Error("boosted ensemble missing");
      model = *a.boosted;
    } else {
      BaselineInputs in;
      in.p = p;
      in.external = &data.external;
      in.generated = kind == ModelKind::gedfn_rf ? (a.forest_graph ? &*a.forest_graph : nullptr)
                                                 : (a.boosted_graph ? &*a.boosted_graph : nullptr);
      in.x = &a.train_x;
      in.y = &a.train_y;
      in.hyper = cfg.hyper;
      in.boost = cfg.boost;
      in.forest = cfg.forest;
      in.seed = rec.seed;
      model = build_baseline(kind, in);
    }
    if (is_neural(kind)) {
      TrainConfig tc = cfg.train;
      tc.seed = rec.seed;
      std::visit(
          [&](auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (!std::is_same_v<T, TreeEnsemble>) rec.epochs = train(m, a.train_x, a.train_y, tc).epochs_run;
          },
          model);
    }
    const Vector prob = predict_positive(model, a.test_x);
    Labels pred(a.test_y.size());
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = prob(static_cast<Eigen::Index>(i)) > 0.5 ? 1 : 0;
    rec.scores = confusion_metrics(a.test_y, pred);
    const std::vector<double> score_vec(prob.data(), prob.data() + prob.size());
    rec.roc_auc = roc_auc(score_vec, a.test_y);
    rec.pr_auc = pr_auc(score_vec, a.test_y);

    const auto ranking = model_importance(model);
    rec.percentile = ranking.percentile;
    rec.importance_file = importance_file_name(kind, rep);
    write_text_file((std::filesystem::path(outdir) / rec.importance_file).string(),
                    importance_to_text(ranking, data.names));
    if (data.truth) {
      rec.fs_roc_auc = roc_auc(ranking.percentile, *data.truth);
      rec.fs_pr_auc = pr_auc(ranking.percentile, *data.truth);
    }
    if (cfg.save_checkpoints) {
      Checkpoint ck{kind, data.names, std::move(model)};
      save_checkpoint((std::filesystem::path(outdir) /
                       ("checkpoint_" + to_string(kind) + "_" + std::to_string(rep) + ".txt"))
                          .string(),
                      ck);
    }
  } catch (const std::exception& e) {
    rec.status = "failed: " + sanitize_cell(e.what());
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (kind == ModelKind::gbt) rec.wall_seconds += a.boosted_seconds;  // fit is shared with graph generation
  return rec;
}

// ---------------------------------------------------------------------------
// Reports

inline const std::vector<std::string>& classification_metric_names() {
  static const std::vector<std::string> names{"accuracy", "precision", "recall", "f1", "roc_auc", "pr_auc"};
  return names;
}

inline std::optional<double> metric_value(const RunRecord& r, const std::string& m) {
  if (!r.ok()) return std::nullopt;
  if (m == "accuracy") return r.scores.accuracy;
  if (m == "precision") return r.scores.precision;
  if (m == "recall") return r.scores.recall;
  if (m == "f1") return r.scores.f1;
  if (m == "roc_auc") return r.roc_auc;
  if (m == "pr_auc") return r.pr_auc;
  if (m == "fs_roc_auc") return r.fs_roc_auc;
  if (m == "fs_pr_auc") return r.fs_pr_auc;
  throw Error("unknown metric '" + m + "'");
}

struct AggregateRow {
  std::string model;
  std::string metric;
  double mean = 0.0;
  double sd = 0.0;
  std::size_t completed = 0;
  std::size_t total = 0;
  bool best = false;
};

inline std::string table_cell(double mean, double sd) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f (%.4f)", mean, sd);
  return buf;
}

inline std::vector<std::string> models_in_order(const std::vector<RunRecord>& records) {
  std::vector<std::string> models;
  for (const auto& r : records)
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
  return models;
}

inline std::vector<std::string> report_metrics(const std::vector<RunRecord>& records) {
  auto metrics = classification_metric_names();
  const bool fs = std::any_of(records.begin(), records.end(), [](const RunRecord& r) { return r.fs_roc_auc.has_value(); });
  if (fs) {
    metrics.push_back("fs_roc_auc");
    metrics.push_back("fs_pr_auc");
  }
  return metrics;
}

// Mean and sample SD per (model, metric) over completed runs; `best` marks
// the highest mean per metric (ties all marked).
inline std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records) {
  std::vector<AggregateRow> rows;
  const auto models = models_in_order(records);
  const auto metrics = report_metrics(records);
  for (const auto& m : metrics) {
    const std::size_t first = rows.size();
    for (const auto& model : models) {
      AggregateRow row;
      row.model = model;
      row.metric = m;
      std::vector<double> vals;
      for (const auto& r : records) {
        if (r.model != model) continue;
        ++row.total;
        if (auto v = metric_value(r, m)) vals.push_back(*v);
      }
      row.completed = vals.size();
      if (!vals.empty()) {
        row.mean = mean_of(vals);
        row.sd = std::sqrt(variance_of(vals));
      }
      rows.push_back(row);
    }
    double best = -1.0;
    for (std::size_t i = first; i < rows.size(); ++i)
      if (rows[i].completed > 0) best = std::max(best, rows[i].mean);
    for (std::size_t i = first; i < rows.size(); ++i)
      rows[i].best = rows[i].completed > 0 && rows[i].mean == best;
  }
  return rows;
}

inline CsvTable aggregate_table(const std::vector<AggregateRow>& rows) {
  CsvTable t;
  t.header = {"model", "metric", "mean", "sd", "completed", "total", "complete", "best", "cell"};
  for (const auto& r : rows)
    t.rows.push_back({r.model, r.metric, format_real(r.mean), format_real(r.sd), std::to_string(r.completed),
                      std::to_string(r.total), r.completed == r.total ? "1" : "0", r.best ? "1" : "0",
                      table_cell(r.mean, r.sd)});
  return t;
}

struct WelchRow {
  std::string baseline;
  std::string metric;
  double mean_reference = 0.0;
  double mean_baseline = 0.0;
  WelchResult test;
};

// engGNN against every other model, per metric, over completed runs.
inline std::vector<WelchRow> welch_comparisons(const std::vector<RunRecord>& records,
                                               const std::string& reference = "enggnn") {
  std::vector<WelchRow> out;
  const auto models = models_in_order(records);
  if (std::find(models.begin(), models.end(), reference) == models.end()) return out;
  auto values = [&](const std::string& model, const std::string& metric) {
    std::vector<double> v;
    for (const auto& r : records)
      if (r.model == model)
        if (auto x = metric_value(r, metric)) v.push_back(*x);
    return v;
  };
  for (const auto& metric : report_metrics(records)) {
    const auto ref = values(reference, metric);
    for (const auto& model : models) {
      if (model == reference) continue;
      const auto base = values(model, metric);
      if (ref.size() < 2 || base.size() < 2) continue;
      WelchRow row;
      row.baseline = model;
      row.metric = metric;
      row.mean_reference = mean_of(ref);
      row.mean_baseline = mean_of(base);
      row.test = welch_t_test(ref, base);
      out.push_back(row);
    }
  }
  return out;
}

inline CsvTable welch_table(const std::vector<WelchRow>& rows) {
  CsvTable t;
  t.header = {"baseline", "metric", "mean_enggnn", "mean_baseline", "t", "df", "p_value", "significant"};
  for (const auto& r : rows)
    t.rows.push_back({r.baseline, r.metric, format_real(r.mean_reference), format_real(r.mean_baseline),
                      format_real(r.test.t), format_real(r.test.df), format_real(r.test.p_value),
                      r.test.p_value < 0.001 ? "1" : "0"});
  return t;
}

inline std::string opt_real(const std::optional<double>& v) { return v ? format_real(*v) : ""; }

inline CsvTable runs_table(const std::vector<RunRecord>& records) {
  CsvTable t;
  t.header = {"model", "replication", "seed", "status", "accuracy", "precision", "recall",
              "f1", "roc_auc", "pr_auc", "epochs", "importance_file"};
  for (const auto& r : records) {
    const bool ok = r.ok();
    auto num = [&](double v) { return ok ? format_real(v) : std::string(); };
    t.rows.push_back({r.model, std::to_string(r.replication), std::to_string(r.seed), r.status,
                      num(r.scores.accuracy), num(r.scores.precision), num(r.scores.recall),
                      num(r.scores.f1), num(r.roc_auc), num(r.pr_auc), std::to_string(r.epochs),
                      r.importance_file});
  }
  return t;
}

inline CsvTable feature_selection_table(const std::vector<RunRecord>& records) {
  CsvTable t;
  t.header = {"model", "replication", "fs_roc_auc", "fs_pr_auc"};
  for (const auto& r : records)
    if (r.fs_roc_auc || r.fs_pr_auc)
      t.rows.push_back({r.model, std::to_string(r.replication), opt_real(r.fs_roc_auc), opt_real(r.fs_pr_auc)});
  return t;
}

inline double parse_cell_real(const std::string& s, const std::string& what) {
  double v = 0.0;
  if (!parse_real(s, v)) throw Error("report: bad number '" + s + "' in " + what);
  return v;
}

// Inverse of runs_table + feature_selection_table.
inline std::vector<RunRecord> parse_run_records(const std::string& runs_csv, const std::string& fs_csv) {
  const auto runs = CsvTable::parse(runs_csv, "metrics_runs.csv");
  std::vector<RunRecord> out;
  const auto c_model = runs.column("model"), c_rep = runs.column("replication"),
             c_seed = runs.column("seed"), c_status = runs.column("status"),
             c_acc = runs.column("accuracy"), c_prec = runs.column("precision"),
             c_rec = runs.column("recall"), c_f1 = runs.column("f1"), c_roc = runs.column("roc_auc"),
             c_pr = runs.column("pr_auc"), c_ep = runs.column("epochs"),
             c_imp = runs.column("importance_file");
  for (const auto& row : runs.rows) {
    RunRecord r;
    r.model = row[c_model];
    r.replication = std::stoi(row[c_rep]);
    r.seed = std::stoull(row[c_seed]);
    r.status = row[c_status];
    r.epochs = std::stoi(row[c_ep]);
    r.importance_file = row[c_imp];
    if (r.ok()) {
      r.scores.accuracy = parse_cell_real(row[c_acc], "accuracy");
      r.scores.precision = parse_cell_real(row[c_prec], "precision");
      r.scores.recall = parse_cell_real(row[c_rec], "recall");
      r.scores.f1 = parse_cell_real(row[c_f1], "f1");
      r.roc_auc = parse_cell_real(row[c_roc], "roc_auc");
      r.pr_auc = parse_cell_real(row[c_pr], "pr_auc");
    }
    out.push_back(std::move(r));
  }
  if (!fs_csv.empty()) {
    const auto fs = CsvTable::parse(fs_csv, "feature_selection.csv");
    const auto f_model = fs.column("model"), f_rep = fs.column("replication"),
               f_roc = fs.column("fs_roc_auc"), f_pr = fs.column("fs_pr_auc");
    for (const auto& row : fs.rows) {
      const int rep = std::stoi(row[f_rep]);
      auto it = std::find_if(out.begin(), out.end(),
                             [&](const RunRecord& r) { return r.model == row[f_model] && r.replication == rep; });
      if (it == out.end()) throw Error("feature_selection.csv: no run for " + row[f_model]);
      if (!row[f_roc].empty()) it->fs_roc_auc = parse_cell_real(row[f_roc], "fs_roc_auc");
      if (!row[f_pr].empty()) it->fs_pr_auc = parse_cell_real(row[f_pr], "fs_pr_auc");
    }
  }
  return out;
}

// Aggregates + Welch tables derived from run records.
inline void write_aggregate_reports(const std::string& outdir, const std::vector<RunRecord>& records) {
  const std::filesystem::path dir(outdir);
  write_text_file((dir / "metrics_aggregate.csv").string(), aggregate_table(aggregate(records)).to_text());
  write_text_file((dir / "welch_tests.csv").string(), welch_table(welch_comparisons(records)).to_text());
}

// `report`: re-derive the aggregate tables from the emitted run tables.
inline std::vector<RunRecord> reaggregate(const std::string& outdir) {
  const std::filesystem::path dir(outdir);
  const auto runs = read_text_file((dir / "metrics_runs.csv").string());
  const auto fs_path = dir / "feature_selection.csv";
  const std::string fs = std::filesystem::exists(fs_path) ? read_text_file(fs_path.string()) : "";
  auto records = parse_run_records(runs, fs);
  write_aggregate_reports(outdir, records);
  return records;
}

// Mean percentile rank across completed replications, per model.
inline std::string mean_ranking_text(const std::vector<RunRecord>& records, const std::string& model,
                                     const std::vector<std::string>& names) {
  std::vector<double> sum(names.size(), 0.0);
  std::size_t count = 0;
  for (const auto& r : records) {
    if (r.model != model || !r.ok() || r.percentile.size() != names.size()) continue;
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += r.percentile[j];
    ++count;
  }
  CsvTable t;
  t.header = {"feature", "name", "mean_percentile", "replications"};
  for (std::size_t j = 0; j < sum.size(); ++j)
    t.rows.push_back({std::to_string(j), names[j], format_real(count ? sum[j] / static_cast<double>(count) : 0.0),
                      std::to_string(count)});
  return t.to_text();
}

struct ExperimentResult {
  std::vector<RunRecord> records;
  std::vector<AggregateRow> aggregates;
  std::string output_dir;
  Json data_info;
};

using ProgressFn = std::function<void(const std::string&)>;

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress = {}) {
  cfg.validate();
  const auto started = std::chrono::system_clock::now();
  std::filesystem::create_directories(cfg.output_dir);
  const ExperimentData data = prepare_data(cfg);
  const auto splits = split_and_replicate(data.y, cfg.split_fraction, cfg.replications, cfg.seed);

  std::vector<std::vector<RunRecord>> per_rep(splits.size());
  std::atomic<int> next{0};
  std::mutex log_mutex;
  auto log = [&](const std::string& s) {
    if (!progress) return;
    std::lock_guard<std::mutex> lock(log_mutex);
    progress(s);
  };
  auto worker = [&] {
    for (int rep = next++; rep < static_cast<int>(splits.size()); rep = next++) {
      std::vector<RunRecord> recs;
      std::optional<ReplicationArtifacts> art;
      std::string prep_error;
      try {
        art = prepare_replication(cfg, data, splits[static_cast<std::size_t>(rep)], rep);
      } catch (const std::exception& e) {
        prep_error = sanitize_cell(e.what());
      }
      for (auto kind : cfg.roster) {
        RunRecord r;
        if (art) {
          r = run_model(cfg, data, *art, kind, rep, cfg.output_dir);
        } else {
          r.model = to_string(kind);
          r.replication = rep;
          r.seed = run_seed(cfg.seed, rep, kind);
          r.status = "failed: replication setup: " + prep_error;
        }
        log("rep " + std::to_string(rep) + " " + r.model + ": " +
            (r.ok() ? "acc=" + table_cell(r.scores.accuracy, 0.0).substr(0, 5) +
                          " auc=" + table_cell(r.roc_auc, 0.0).substr(0, 5)
                    : r.status) +
            " (" + std::to_string(r.wall_seconds) + "s)");
        recs.push_back(std::move(r));
      }
      per_rep[static_cast<std::size_t>(rep)] = std::move(recs);
    }
  };
  const int nthreads = std::min(cfg.workers, cfg.replications);
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // roster-major, replication-minor ordering
  ExperimentResult res;
  res.output_dir = cfg.output_dir;
  res.data_info = data.info;
  for (auto kind : cfg.roster)
    for (const auto& recs : per_rep)
      for (const auto& r : recs)
        if (r.model == to_string(kind)) res.records.push_back(r);

  const std::filesystem::path dir(cfg.output_dir);
  write_text_file((dir / "metrics_runs.csv").string(), runs_table(res.records).to_text());
  write_text_file((dir / "feature_selection.csv").string(), feature_selection_table(res.records).to_text());
  write_aggregate_reports(cfg.output_dir, res.records);
  res.aggregates = aggregate(res.records);
  for (auto kind : cfg.roster)
    write_text_file((dir / ("importance_" + to_string(kind) + "_mean.csv")).string(),
                    mean_ranking_text(res.records, to_string(kind), data.names));

  Json manifest;
  manifest["library_version"] = kLibraryVersion;
  manifest["config"] = config_to_json(cfg);
  manifest["data"] = data.info;
  manifest["standardization"] = "z-score fit on the training split of each replication";
  manifest["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                              "." + std::to_string(EIGEN_MINOR_VERSION);
  manifest["compiler"] = __VERSION__;
  Json runs = Json::array();
  for (const auto& r : res.records)
    runs.push_back({{"model", r.model}, {"replication", r.replication}, {"seed", r.seed},
                    {"status", r.status}, {"wall_seconds", r.wall_seconds}});
  manifest["runs"] = runs;
  Json split_seeds = Json::array();
  for (const auto& s : splits) split_seeds.push_back(s.seed);
  manifest["split_seeds"] = split_seeds;
  const auto t = std::chrono::system_clock::to_time_t(started);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  manifest["started_utc"] = stamp;
  write_text_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  return res;
}

// `simulate`: write one scenario's dataset and its ground truth.
inline Json write_simulated_dataset(const SimScenario& sc, const std::string& outdir) {
  std::filesystem::create_directories(outdir);
  const auto d = build_scenario(sc);
  const std::filesystem::path dir(outdir);
  write_dataset((dir / "matrix.csv").string(), d.x, d.y, d.names);
  write_text_file((dir / "edges.tsv").string(), edge_list_to_text(d.graph));
  CsvTable truth;
  truth.header = {"feature", "name", "important", "core"};
  for (std::size_t j = 0; j < d.names.size(); ++j)
    truth.rows.push_back({std::to_string(j), d.names[j], d.important.count(j) ? "1" : "0",
                          d.core.count(j) ? "1" : "0"});
  write_text_file((dir / "truth.csv").string(), truth.to_text());
  const auto pos = std::count(d.y.begin(), d.y.end(), 1);
  Json m;
  m["library_version"] = kLibraryVersion;
  m["scenario"] = {{"n", sc.n},       {"p_n", sc.p_n},   {"p_t", sc.p_t},
                   {"ba_m", sc.ba_m}, {"seed", sc.seed}, {"t", sc.t_override},
                   {"threshold_rule", to_string(sc.rule)}, {"threshold", sc.threshold}};
  m["p"] = sc.p();
  m["t"] = sc.t();
  m["edges"] = d.graph.edge_count();
  m["core_size"] = d.core.size();
  m["important_size"] = d.important.size();
  m["positive_fraction"] = static_cast<double>(pos) / static_cast<double>(d.y.size());
  m["beta0"] = d.beta0;
  m["outcome_attempts"] = d.outcome_attempts;
  m["files"] = {"matrix.csv", "edges.tsv", "truth.csv"};
  write_text_file((dir / "manifest.json").string(), m.dump(2) + "\n");
  return m;
}

}  // namespace enggnn
