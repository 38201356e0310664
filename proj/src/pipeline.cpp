#include "waitcast/pipeline.hpp"

#include "waitcast/cluster.hpp"
#include "waitcast/error.hpp"
#include "waitcast/render.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace waitcast {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::io_error, "write failed for " + path.string());
}

template <typename Fn>
void write_with(const fs::path& path, Fn&& fn) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  fn(out);
  if (!out) throw Error(Errc::io_error, "write failed for " + path.string());
}

std::uint64_t stratum_key(Stratum st) {
  return static_cast<std::uint64_t>(years(st.age)) * 2 + static_cast<std::uint64_t>(st.category);
}

std::uint64_t task_seed(std::uint64_t seed, std::uint64_t tag, Stratum st, std::size_t child) {
  return Rng::substream(seed, {tag, stratum_key(st), static_cast<std::uint64_t>(child)}).next_u64();
}

}  // namespace

RunConfig::RunConfig() {
  cohort.seed = seed;
  forest.seed = seed;
  boost.seed = seed;
  lstm.seed = seed;
}

void RunConfig::validate() const {
  if (input.empty()) cohort.validate();
  if (bin_width_s < 1 || kTaskSeconds % bin_width_s != 0)
    throw Error(Errc::invalid_config, "bin_width_s must divide " + std::to_string(kTaskSeconds));
  if (!(response_fraction > 0.0 && response_fraction < 1.0))
    throw Error(Errc::invalid_config, "response_fraction must lie in (0, 1)");
  if (k_max < 2) throw Error(Errc::invalid_config, "cluster.k_max must be >= 2");
  if (var_order < 1) throw Error(Errc::invalid_config, "smooth.var_order must be >= 1");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw Error(Errc::invalid_config, "split_ratio must lie in (0, 1)");
  enet.validate();
  if (forest.n_trees < 1 || forest.min_samples_leaf < 1 || forest.mtry < 0)
    throw Error(Errc::invalid_config, "invalid random forest settings");
  boost.validate();
  lstm.validate();
}

RunConfig RunConfig::from_keyvalue(const KeyValueFile& kv) {
  RunConfig c;
  c.input = kv.get_string("input", c.input);
  c.seed = kv.get_u64("seed", c.seed);
  c.out = kv.get_string("out", c.out);
  c.bin_width_s = kv.get_int("bin_width_s", c.bin_width_s);
  c.response_fraction = kv.get_double("response_fraction", c.response_fraction);
  c.split_ratio = kv.get_double("split_ratio", c.split_ratio);
  c.k_max = kv.get_int("cluster.k_max", c.k_max);
  c.ols_degree = kv.get_int("smooth.ols_degree", c.ols_degree);
  c.var_half = kv.get_bool("smooth.var_half", c.var_half);
  c.var_order = kv.get_int("smooth.var_order", c.var_order);

  c.cohort = CohortConfig::from_keyvalue(kv, "synth.");
  if (!kv.has("synth.seed")) c.cohort.seed = c.seed;

  c.enet.alpha = kv.get_double("enet.alpha", c.enet.alpha);
  c.enet.lambda = kv.get_double("enet.lambda", c.enet.lambda);
  c.enet.epsilon = kv.get_double("enet.epsilon", c.enet.epsilon);
  c.enet.max_iter = kv.get_int("enet.max_iter", c.enet.max_iter);
  c.enet.tol = kv.get_double("enet.tol", c.enet.tol);

  c.forest.n_trees = kv.get_int("rf.n_trees", c.forest.n_trees);
  c.forest.max_depth = kv.get_int("rf.max_depth", c.forest.max_depth);
  c.forest.min_samples_leaf = kv.get_int("rf.min_samples_leaf", c.forest.min_samples_leaf);
  c.forest.mtry = kv.get_int("rf.mtry", c.forest.mtry);

  c.boost.n_rounds = kv.get_int("xgb.n_rounds", c.boost.n_rounds);
  c.boost.learning_rate = kv.get_double("xgb.learning_rate", c.boost.learning_rate);
  c.boost.gamma = kv.get_double("xgb.gamma", c.boost.gamma);
  c.boost.lambda = kv.get_double("xgb.lambda", c.boost.lambda);
  c.boost.max_depth = kv.get_int("xgb.max_depth", c.boost.max_depth);
  c.boost.subsample = kv.get_double("xgb.subsample", c.boost.subsample);

  c.lstm.hidden_size = kv.get_int("lstm.hidden_size", c.lstm.hidden_size);
  c.lstm.layers = kv.get_int("lstm.layers", c.lstm.layers);
  c.lstm.dropout_rate = kv.get_double("lstm.dropout_rate", c.lstm.dropout_rate);
  c.lstm.window = kv.get_int("lstm.window", c.lstm.window);
  c.lstm.epochs = kv.get_int("lstm.epochs", c.lstm.epochs);
  c.lstm.learning_rate = kv.get_double("lstm.learning_rate", c.lstm.learning_rate);
  c.lstm.clip_norm = kv.get_double("lstm.clip_norm", c.lstm.clip_norm);

  c.forest.seed = c.boost.seed = c.lstm.seed = c.seed;
  kv.reject_unused();
  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path& path) { return from_keyvalue(KeyValueFile::load(path)); }

std::string RunConfig::canonical() const {
  KeyValueFile kv;
  kv.set("input", input);
  kv.set("seed", std::to_string(seed));
  kv.set("bin_width_s", std::to_string(bin_width_s));
  kv.set("response_fraction", num(response_fraction));
  kv.set("split_ratio", num(split_ratio));
  kv.set("cluster.k_max", std::to_string(k_max));
  kv.set("smooth.ols_degree", std::to_string(ols_degree));
  kv.set("smooth.var_half", var_half ? "true" : "false");
  kv.set("smooth.var_order", std::to_string(var_order));
  if (input.empty()) cohort.to_keyvalue(kv, "synth.");
  kv.set("enet.alpha", num(enet.alpha));
  kv.set("enet.lambda", num(enet.lambda));
  kv.set("enet.epsilon", num(enet.epsilon));
  kv.set("enet.max_iter", std::to_string(enet.max_iter));
  kv.set("enet.tol", num(enet.tol));
  kv.set("rf.n_trees", std::to_string(forest.n_trees));
  kv.set("rf.max_depth", std::to_string(forest.max_depth));
  kv.set("rf.min_samples_leaf", std::to_string(forest.min_samples_leaf));
  kv.set("rf.mtry", std::to_string(forest.mtry));
  kv.set("xgb.n_rounds", std::to_string(boost.n_rounds));
  kv.set("xgb.learning_rate", num(boost.learning_rate));
  kv.set("xgb.gamma", num(boost.gamma));
  kv.set("xgb.lambda", num(boost.lambda));
  kv.set("xgb.max_depth", std::to_string(boost.max_depth));
  kv.set("xgb.subsample", num(boost.subsample));
  kv.set("lstm.hidden_size", std::to_string(lstm.hidden_size));
  kv.set("lstm.layers", std::to_string(lstm.layers));
  kv.set("lstm.dropout_rate", num(lstm.dropout_rate));
  kv.set("lstm.window", std::to_string(lstm.window));
  kv.set("lstm.epochs", std::to_string(lstm.epochs));
  kv.set("lstm.learning_rate", num(lstm.learning_rate));
  kv.set("lstm.clip_norm", num(lstm.clip_norm));
  std::string out;
  for (const auto& [k, v] : kv.values()) out += k + " = " + v + "\n";
  return out;
}

std::string RunConfig::digest() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical())));
  return buf;
}

Dataset load_or_generate(const RunConfig& cfg, Execution exec) {
  return cfg.input.empty() ? generate_cohort(cfg.cohort, exec) : load_dataset(cfg.input);
}

StratumClustering cluster_stratum(const Dataset& ds, Stratum st, const RunConfig& cfg, Execution exec) {
  const auto series = ds.stratum(st);
  if (series.size() < 3)
    throw Error(Errc::too_few_series, stratum_label(st) + " has " + std::to_string(series.size()) +
                                          " children; at least 3 are needed");
  std::vector<BinnedSeries> binned;
  for (const auto* s : series) binned.push_back(bin_series(*s, cfg.bin_width_s));
  const Eigen::MatrixXd data = binned_matrix(binned);

  StratumClustering c{st, distance_matrix(binned, exec), {}, {}, {}, {}};
  c.dendrogram = ward_agglomerate(c.distances, data);
  const int n = static_cast<int>(series.size());
  c.assignment = select_k_ch(c.dendrogram, data, 2, std::min(cfg.k_max, n - 1));
  c.split = split_predictor_response(c.distances, cfg.response_fraction);

  if (cfg.var_half) {
    auto chosen = c.split.predictors;
    auto rng = Rng::substream(cfg.seed, {0x766172u, stratum_key(st)});
    rng.shuffle(std::span<std::string>(chosen));
    chosen.resize(chosen.size() / 2);
    std::sort(chosen.begin(), chosen.end());
    c.var_children = std::move(chosen);
  }
  return c;
}

Smoother make_smoother(const RunConfig& cfg, const std::vector<std::string>& predictors,
                       const std::vector<std::string>& var_children) {
  std::vector<Eigen::Index> var_cols;
  for (const auto& id : var_children) {
    const auto it = std::find(predictors.begin(), predictors.end(), id);
    if (it == predictors.end()) throw Error(Errc::unknown_child, "VAR child " + id + " is not a predictor");
    var_cols.push_back(it - predictors.begin());
  }
  const int degree = cfg.ols_degree;
  const int order = cfg.var_order;
  return [degree, order, var_cols](const Eigen::MatrixXd& counts) {
    Eigen::MatrixXd out = counts;
    if (degree >= 0) {
      for (Eigen::Index j = 0; j < out.cols(); ++j) {
        const Eigen::VectorXd col = out.col(j);
        const auto fit = ols_smooth(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), degree);
        out.col(j) = Eigen::Map<const Eigen::VectorXd>(fit.fitted.data(), col.size());
      }
    }
    if (!var_cols.empty() && out.rows() > order) {
      Eigen::MatrixXd group(out.rows(), static_cast<Eigen::Index>(var_cols.size()));
      for (std::size_t k = 0; k < var_cols.size(); ++k) group.col(static_cast<Eigen::Index>(k)) = out.col(var_cols[k]);
      const Eigen::MatrixXd smoothed = var_smooth(group, order);
      for (std::size_t k = 0; k < var_cols.size(); ++k) out.col(var_cols[k]) = smoothed.col(static_cast<Eigen::Index>(k));
    }
    return out;
  };
}

namespace {

std::string cluster_log(const StratumClustering& c, const RunConfig& cfg) {
  std::ostringstream out;
  out << "[" << stratum_label(c.stratum) << "]\n";
  out << "children = " << c.distances.size() << "\n";
  out << "selected_k = " << c.assignment.k << (c.assignment.degenerate ? " (degenerate)" : "") << "\n";
  out << "ch_scores =";
  for (std::size_t i = 0; i < c.assignment.scores.size(); ++i)
    out << " k" << (i + 2) << ":" << num(c.assignment.scores[i]);
  out << "\nlabels =";
  for (std::size_t i = 0; i < c.assignment.labels.size(); ++i)
    out << " " << c.distances.ids[i] << ":" << c.assignment.labels[i];
  out << "\nmerges =";
  for (const auto& m : c.dendrogram.merges) out << " (" << m.a << "," << m.b << "->" << m.id << " " << num(m.cost) << ")";
  out << "\nresponse_fraction = " << num(cfg.response_fraction) << "\nresponses =";
  for (const auto& id : c.split.responses) out << " " << id;
  out << "\npredictors =";
  for (const auto& id : c.split.predictors) out << " " << id;
  out << "\nvar_smoothed =";
  for (const auto& id : c.var_children) out << " " << id;
  out << "\n\n";
  return out.str();
}

struct ChildTask {
  std::size_t stratum_index;
  std::size_t child_index;
  std::string child_id;
};

struct ChildOutcome {
  std::vector<ChildForecast> forecasts;
  std::string failure;
};

std::vector<double> as_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::vector<ChildForecast> fit_child(const Dataset& ds, const StratumClustering& c, const ChildTask& task,
                                     const RunConfig& cfg, const fs::path& model_dir) {
  const Stratum st = c.stratum;
  const auto smoother = make_smoother(cfg, c.split.predictors, c.var_children);
  const auto frame = build_supervised(ds, st, c.split.predictors, task.child_id, cfg.bin_width_s, smoother);
  const auto split = chronological_split(frame, cfg.split_ratio);
  const auto& train = split.train;
  const auto& test = split.test;

  std::vector<double> actual(test.y_classes.begin(), test.y_classes.end());
  std::vector<ChildForecast> out;
  auto add = [&](ModelKind m, std::vector<double> predicted) {
    out.push_back({m, st, task.child_id, actual, std::move(predicted)});
  };
  fs::create_directories(model_dir);

  {
    const auto model = enet_fit(train.X, train.y, cfg.enet);
    add(ModelKind::enr, as_vector(frame.denormalize_target(enet_predict(model, test.X))));
    write_with(model_dir / "enr.txt", [&](std::ostream& o) { dump_enet(model, o); });
  }
  {
    auto fc = cfg.forest;
    fc.seed = task_seed(cfg.seed, 0x7266, st, task.child_index);
    const auto forest = rf_fit(train.X, train.y_classes, fc, Execution::serial);
    const auto labels = rf_predict(forest, test.X);
    add(ModelKind::rf, std::vector<double>(labels.begin(), labels.end()));
    write_with(model_dir / "rf.txt", [&](std::ostream& o) { dump_forest(forest, o); });
  }
  {
    auto bc = cfg.boost;
    bc.loss = BoostLoss::softmax;
    bc.seed = task_seed(cfg.seed, 0x7867, st, task.child_index);
    Eigen::VectorXd labels(train.samples());
    for (Eigen::Index i = 0; i < labels.size(); ++i) labels(i) = train.y_classes[static_cast<std::size_t>(i)];
    const auto model = xgb_fit(train.X, labels, bc, Execution::serial);
    const auto pred = xgb_predict(model, test.X);
    add(ModelKind::xgb, std::vector<double>(pred.classes.begin(), pred.classes.end()));
    write_with(model_dir / "xgb.txt", [&](std::ostream& o) { dump_boost(model, o); });
  }
  {
    auto lc = cfg.lstm;
    lc.seed = task_seed(cfg.seed, 0x6c73, st, task.child_index);
    const Eigen::Index n = frame.samples(), n_train = train.samples();
    const auto train_windows = make_windows(frame.X, frame.y, lc.window, lc.window, n_train);
    const auto test_windows = make_windows(frame.X, frame.y, lc.window, n_train, n);
    if (static_cast<Eigen::Index>(test_windows.size()) != test.samples())
      throw Error(Errc::too_few_samples, "LSTM window longer than the training slice");
    auto trained = lstm_train(train_windows, lc);
    Eigen::VectorXd pred(static_cast<Eigen::Index>(test_windows.size()));
    for (std::size_t i = 0; i < test_windows.size(); ++i)
      pred(static_cast<Eigen::Index>(i)) = lstm_forward(test_windows[i].inputs, trained.params, lc, Mode::eval);
    add(ModelKind::lstm, as_vector(frame.denormalize_target(pred)));
    write_with(model_dir / "lstm.txt", [&](std::ostream& o) { dump_params(trained.params, o); });
    write_with(model_dir / "lstm_loss.csv", [&](std::ostream& o) { write_loss_curve(trained.loss_curve, o); });
  }
  return out;
}

}  // namespace

fs::path run_clustering(const RunConfig& cfg, Execution exec) {
  cfg.validate();
  const auto ds = load_or_generate(cfg, exec);
  const fs::path dir = fs::path(cfg.out) / cfg.run_id();
  fs::create_directories(dir / "heatmaps");
  std::string log;
  for (auto st : all_strata()) {
    const auto c = cluster_stratum(ds, st, cfg, exec);
    similarity_heatmap(c.distances, c.dendrogram.leaf_order, dir / "heatmaps" / stratum_label(st),
                       stratum_label(st) + " similarity (Ward order)");
    log += cluster_log(c, cfg);
  }
  write_text(dir / "cluster.txt", log);
  return dir;
}

RunResult run_pipeline(const RunConfig& cfg, Execution exec) {
  cfg.validate();
  const auto ds = load_or_generate(cfg, exec);
  const auto strata = all_strata();

  RunResult result;
  result.dir = fs::path(cfg.out) / cfg.run_id();
  const fs::path& dir = result.dir;
  fs::create_directories(dir / "heatmaps");
  fs::create_directories(dir / "models");
  fs::create_directories(dir / "plots");
  write_text(dir / "config.digest", cfg.canonical() + "# digest " + cfg.digest() + "\n");

  std::vector<std::optional<StratumClustering>> clusters(strata.size());
  std::vector<std::string> cluster_failures(strata.size());
  const int n_strata = static_cast<int>(strata.size());
  auto cluster_one = [&](int i) {
    const auto st = strata[static_cast<std::size_t>(i)];
    try {
      auto c = cluster_stratum(ds, st, cfg, Execution::serial);
      similarity_heatmap(c.distances, c.dendrogram.leaf_order, dir / "heatmaps" / stratum_label(st),
                         stratum_label(st) + " similarity (Ward order)");
      clusters[static_cast<std::size_t>(i)] = std::move(c);
    } catch (const std::exception& e) {
      cluster_failures[static_cast<std::size_t>(i)] = stratum_label(st) + ": " + e.what();
    }
  };
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n_strata; ++i) cluster_one(i);
  } else {
    for (int i = 0; i < n_strata; ++i) cluster_one(i);
  }

  std::string log;
  std::vector<ChildTask> tasks;
  for (std::size_t i = 0; i < strata.size(); ++i) {
    if (!cluster_failures[i].empty()) {
      result.failures.push_back(cluster_failures[i]);
      continue;
    }
    log += cluster_log(*clusters[i], cfg);
    const auto& responses = clusters[i]->split.responses;
    for (std::size_t k = 0; k < responses.size(); ++k) tasks.push_back({i, k, responses[k]});
  }
  write_text(dir / "cluster.txt", log);

  std::vector<ChildOutcome> outcomes(tasks.size());
  const int n_tasks = static_cast<int>(tasks.size());
  auto fit_one = [&](int t) {
    const auto& task = tasks[static_cast<std::size_t>(t)];
    const auto& c = *clusters[task.stratum_index];
    try {
      outcomes[static_cast<std::size_t>(t)].forecasts =
          fit_child(ds, c, task, cfg, dir / "models" / stratum_label(c.stratum) / task.child_id);
    } catch (const std::exception& e) {
      outcomes[static_cast<std::size_t>(t)].failure = stratum_label(c.stratum) + " " + task.child_id + ": " + e.what();
    }
  };
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < n_tasks; ++t) fit_one(t);
  } else {
    for (int t = 0; t < n_tasks; ++t) fit_one(t);
  }

  std::vector<ChildForecast> forecasts;
  for (auto& o : outcomes) {
    if (!o.failure.empty()) result.failures.push_back(o.failure);
    for (auto& f : o.forecasts) forecasts.push_back(std::move(f));
  }

  result.report = evaluate_all(forecasts, cfg.seed, cfg.digest());
  for (std::size_t i = 0; i < strata.size(); ++i)
    if (clusters[i]) result.report.selected_k[strata[i]] = clusters[i]->assignment.k;

  write_text(dir / "report.json", report_json(result.report));
  write_with(dir / "report.csv", [&](std::ostream& o) { write_report_csv(result.report, o); });
  if (result.report.present() > 0) render_report(result.report, dir / "plots");

  if (!result.failures.empty()) {
    std::string msg = std::to_string(result.failures.size()) + " pipeline task(s) failed; partial results in " +
                      dir.string();
    for (const auto& f : result.failures) msg += "\n  " + f;
    throw Error(Errc::pipeline_failure, msg);
  }
  return result;
}

}  // namespace waitcast
