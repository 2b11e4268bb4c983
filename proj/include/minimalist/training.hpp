#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "minimalist/errors.hpp"
#include "minimalist/nn.hpp"
#include "minimalist/objectives.hpp"
#include "minimalist/parallel.hpp"
#include "minimalist/rng.hpp"
#include "minimalist/simulators.hpp"
#include "minimalist/version.hpp"

namespace minimalist {

struct TrainerConfig {
  double learning_rate = 1e-3;
  double l2_strength = 1e-5;
  int batch_size = 1000;
  double z_gauge_strength = 1e-3;
  int max_epochs = 300;
  int patience = 20;
  std::uint64_t seed = 1;

  void validate() const {
    if (learning_rate <= 0) throw config_error("trainer.learning_rate must be > 0");
    if (l2_strength < 0) throw config_error("trainer.l2_strength must be >= 0");
    if (batch_size < 2) throw config_error("trainer.batch_size must be >= 2");
    if (z_gauge_strength < 0) throw config_error("trainer.z_gauge_strength must be >= 0");
    if (max_epochs < 1) throw config_error("trainer.max_epochs must be >= 1");
    if (patience < 1) throw config_error("trainer.patience must be >= 1");
  }
};

struct ExperimentConfig {
  std::string task_name;
  nlohmann::json task_params = nlohmann::json::object();
  ObjectiveKind objective = ObjectiveKind::mine;
  int n_train = 10000;
  int n_val = 10000;
  int shuffle_ratio = 5;  // k
  TrainerConfig trainer;
  int replicate = 0;
  std::string output_dir;
  std::string dataset_path;  // optional pre-simulated (theta, x) CSV
  int hidden_width = 50;

  void validate() const {
    if (task_name.empty()) throw config_error("task is required");
    if (n_train < 2) throw config_error("n_train must be >= 2");
    if (n_val < 2) throw config_error("n_val must be >= 2");
    if (n_train < trainer.batch_size || n_val < trainer.batch_size)
      throw config_error("batch_size exceeds training or validation set size");
    if (shuffle_ratio < 1 || shuffle_ratio >= trainer.batch_size)
      throw config_error("k must satisfy 1 <= k < batch_size");
    if (hidden_width < 1) throw config_error("hidden_width must be >= 1");
    trainer.validate();
  }
};

namespace detail {
template <typename T>
T json_field(const nlohmann::json& j, const std::string& key, const char* type_name) {
  if (!j.contains(key)) throw config_error("field '" + key + "' is required");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw config_error("field '" + key + "': expected " + type_name);
  }
}

template <typename T>
T json_field_or(const nlohmann::json& j, const std::string& key, T fallback,
                const char* type_name) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw config_error("field '" + key + "': expected " + type_name);
  }
}
}  // namespace detail

inline TrainerConfig trainer_config_from_json(const nlohmann::json& j) {
  TrainerConfig tc;
  tc.learning_rate = detail::json_field_or(j, "learning_rate", tc.learning_rate, "number");
  tc.l2_strength = detail::json_field_or(j, "l2_strength", tc.l2_strength, "number");
  tc.batch_size = detail::json_field_or(j, "batch_size", tc.batch_size, "integer");
  tc.z_gauge_strength = detail::json_field_or(j, "z_gauge_strength", tc.z_gauge_strength, "number");
  tc.max_epochs = detail::json_field_or(j, "max_epochs", tc.max_epochs, "integer");
  tc.patience = detail::json_field_or(j, "patience", tc.patience, "integer");
  tc.seed = detail::json_field_or(j, "seed", tc.seed, "integer");
  return tc;
}

inline nlohmann::json trainer_config_to_json(const TrainerConfig& tc) {
  return {{"learning_rate", tc.learning_rate}, {"l2_strength", tc.l2_strength},
          {"batch_size", tc.batch_size},       {"z_gauge_strength", tc.z_gauge_strength},
          {"max_epochs", tc.max_epochs},       {"patience", tc.patience},
          {"seed", tc.seed}};
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.task_name = detail::json_field<std::string>(j, "task", "string");
  cfg.task_params = j.value("task_params", nlohmann::json::object());
  cfg.objective =
      objective_from_string(detail::json_field<std::string>(j, "objective", "string"));
  cfg.n_train = detail::json_field<int>(j, "n_train", "integer");
  cfg.n_val = detail::json_field<int>(j, "n_val", "integer");
  cfg.shuffle_ratio = detail::json_field_or(j, "k", cfg.shuffle_ratio, "integer");
  cfg.replicate = detail::json_field_or(j, "replicate", 0, "integer");
  cfg.output_dir = detail::json_field_or(j, "output_dir", std::string{}, "string");
  cfg.dataset_path = detail::json_field_or(j, "dataset", std::string{}, "string");
  cfg.hidden_width = detail::json_field_or(j, "hidden_width", 50, "integer");
  if (j.contains("trainer")) {
    if (!j.at("trainer").is_object()) throw config_error("field 'trainer': expected object");
    cfg.trainer = trainer_config_from_json(j.at("trainer"));
  }
  cfg.validate();
  return cfg;
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  return {{"task", cfg.task_name},     {"task_params", cfg.task_params},
          {"objective", to_string(cfg.objective)},
          {"n_train", cfg.n_train},    {"n_val", cfg.n_val},
          {"k", cfg.shuffle_ratio},    {"replicate", cfg.replicate},
          {"output_dir", cfg.output_dir}, {"dataset", cfg.dataset_path},
          {"hidden_width", cfg.hidden_width}, {"trainer", trainer_config_to_json(cfg.trainer)}};
}

// Per-coordinate affine map fitted on the training split only and reused
// verbatim at inference time. Zero-variance coordinates keep std = 1.
struct FeatureStats {
  VectorXd mean;
  VectorXd std;

  static FeatureStats fit(const MatrixXd& data) {
    FeatureStats s;
    s.mean = data.colwise().mean();
    s.std.resize(data.cols());
    const double n = static_cast<double>(data.rows());
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      double var = (data.col(c).array() - s.mean(c)).square().sum() / n;
      s.std(c) = var > 0 ? std::sqrt(var) : 1.0;
    }
    return s;
  }

  MatrixXd apply(const MatrixXd& data) const {
    MatrixXd out = data;
    out.rowwise() -= mean.transpose();
    out.array().rowwise() /= std.transpose().array();
    return out;
  }

  MatrixXd invert(const MatrixXd& data) const {
    MatrixXd out = data;
    out.array().rowwise() *= std.transpose().array();
    out.rowwise() += mean.transpose();
    return out;
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

// Frozen result of a training run: weights at the best validation epoch
// plus everything needed to evaluate the model on raw features.
struct TrainedEstimator {
  MlpParams params;
  ObjectiveKind objective = ObjectiveKind::mine;
  FeatureStats stats;
  std::string task_name;
  nlohmann::json task_params = nlohmann::json::object();
  int theta_dim = 0;
  int x_dim = 0;
  std::vector<EpochRecord> history;
  std::uint64_t seed = 0;
  int best_epoch = 0;  // epoch whose parameters are returned
};

// Network input row for a pair: observation features first, parameters
// last. The trailing theta block is what pair shuffling permutes.
inline VectorXd encode_input(const VectorXd& x, const VectorXd& theta) {
  VectorXd v(x.size() + theta.size());
  v << x, theta;
  return v;
}

// Dataset rows are stored (theta, x), matching the CSV column order.
inline MatrixXd encode_inputs(const MatrixXd& dataset, int theta_dim) {
  MatrixXd inputs(dataset.rows(), dataset.cols());
  const Eigen::Index x_dim = dataset.cols() - theta_dim;
  inputs.leftCols(x_dim) = dataset.rightCols(x_dim);
  inputs.rightCols(theta_dim) = dataset.leftCols(theta_dim);
  return inputs;
}

// N rows of (theta_i, x_i) with theta_i from the prior and x_i simulated
// at theta_i. Each row owns an RNG substream keyed by (seed, row), so the
// result is independent of the parallel schedule. Simulator failures are
// retried on a fresh substream; retries are counted in stats.
inline MatrixXd generate_dataset(const Task& task, int n, std::uint64_t seed, int jobs = 1,
                                 SimStats* stats = nullptr) {
  if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
  MatrixXd data(n, task.theta_dim() + task.x_dim());
  parallel_for(static_cast<std::size_t>(n), jobs, [&](std::size_t i) {
    for (int retry = 0;; ++retry) {
      if (retry > 100) throw numeric_error(task.name() + ": row retry limit exceeded");
      Rng rng = substream(mix64(seed, static_cast<std::uint64_t>(retry)), i);
      try {
        VectorXd theta = task.prior_sample(rng);
        VectorXd x = task.simulate(rng, theta, stats);
        data.row(static_cast<Eigen::Index>(i)).head(task.theta_dim()) = theta;
        data.row(static_cast<Eigen::Index>(i)).tail(task.x_dim()) = x;
        return;
      } catch (const numeric_error&) {
        if (stats) stats->retries.fetch_add(1);
      }
    }
  });
  return data;
}

// Validation split sizing: a fifth of the training set, floored so small
// runs keep a usable early-stopping signal. The bound estimates that drive
// early stopping need validation sets that grow with the budget.
inline int validation_size_for(int n_train, int floor_size = 10000) {
  return std::min(n_train, std::max(floor_size, n_train / 5));
}

// Rows simulated at one fixed hypothesis, theta columns included.
inline MatrixXd simulate_at(const Task& task, const VectorXd& theta, int n, std::uint64_t seed,
                            int jobs = 1, SimStats* stats = nullptr) {
  MatrixXd data(n, task.theta_dim() + task.x_dim());
  parallel_for(static_cast<std::size_t>(n), jobs, [&](std::size_t i) {
    for (int retry = 0;; ++retry) {
      if (retry > 100) throw numeric_error(task.name() + ": row retry limit exceeded");
      Rng rng = substream(mix64(seed, static_cast<std::uint64_t>(retry)), i);
      try {
        VectorXd x = task.simulate(rng, theta, stats);
        data.row(static_cast<Eigen::Index>(i)).head(task.theta_dim()) = theta;
        data.row(static_cast<Eigen::Index>(i)).tail(task.x_dim()) = x;
        return;
      } catch (const numeric_error&) {
        if (stats) stats->retries.fetch_add(1);
      }
    }
  });
  return data;
}

inline MatrixXd standardize(const MatrixXd& data, const FeatureStats& stats) {
  return stats.apply(data);
}

inline MatrixXd destandardize(const MatrixXd& data, const FeatureStats& stats) {
  return stats.invert(data);
}

namespace detail {

inline MatrixXd gather_rows(const MatrixXd& m, const std::vector<int>& idx, int begin, int count) {
  MatrixXd out(count, m.cols());
  for (int i = 0; i < count; ++i) out.row(i) = m.row(idx[static_cast<std::size_t>(begin + i)]);
  return out;
}

struct BatchEval {
  ObjectiveValue value;
  ForwardCache cache;
  MatrixXd stacked;
};

// Forward + objective on a joint batch and its shuffled counterpart.
inline void eval_pairs(const MlpParams& params, const PairSet& pairs, ObjectiveKind kind,
                       double z_gauge, BatchEval& ev) {
  const Eigen::Index nj = pairs.joint_inputs.rows();
  const Eigen::Index ni = pairs.indep_inputs.rows();
  ev.stacked.resize(nj + ni, pairs.joint_inputs.cols());
  ev.stacked.topRows(nj) = pairs.joint_inputs;
  ev.stacked.bottomRows(ni) = pairs.indep_inputs;
  forward_batch_cached(params, ev.stacked, ev.cache);
  ev.value = objective_loss(kind, ev.cache.out.head(nj), ev.cache.out.tail(ni),
                            pairs.shuffle_ratio, z_gauge);
}

}  // namespace detail

// Minibatched optimization of one objective with RMSprop, validation
// tracking and patience-based early stopping. Returns the parameters of
// the best validation epoch. Fully deterministic in the config.
inline TrainedEstimator train(const Task& task, const ExperimentConfig& cfg,
                              const MatrixXd* dataset = nullptr, int jobs = 1) {
  cfg.validate();
  const int k = cfg.shuffle_ratio;
  const std::uint64_t base = mix64(cfg.trainer.seed, static_cast<std::uint64_t>(cfg.replicate));

  MatrixXd data;
  if (dataset != nullptr) {
    if (dataset->rows() < cfg.n_train + cfg.n_val)
      throw config_error("dataset has fewer than n_train + n_val rows");
    data = dataset->topRows(cfg.n_train + cfg.n_val);
  } else {
    data = generate_dataset(task, cfg.n_train + cfg.n_val, mix64(base, stream_tag::dataset), jobs);
  }

  const int theta_dim = task.theta_dim();
  MatrixXd train_inputs = encode_inputs(data.topRows(cfg.n_train), theta_dim);
  MatrixXd val_inputs = encode_inputs(data.bottomRows(cfg.n_val), theta_dim);
  FeatureStats stats = FeatureStats::fit(train_inputs);
  train_inputs = stats.apply(train_inputs);
  val_inputs = stats.apply(val_inputs);

  Rng init_rng = substream(base, stream_tag::weight_init);
  MlpParams params = init_mlp(static_cast<int>(train_inputs.cols()), cfg.hidden_width, init_rng);
  RmsPropState opt = init_rmsprop(params);

  Rng val_rng = substream(base, stream_tag::val_pairs);
  PairSet val_pairs = shuffle_pairs(val_inputs, theta_dim, k, val_rng);

  Rng loop_rng = substream(base, stream_tag::epoch_shuffle);
  std::vector<int> order(static_cast<std::size_t>(cfg.n_train));
  std::iota(order.begin(), order.end(), 0);

  const int batches = cfg.n_train / cfg.trainer.batch_size;
  TrainedEstimator out;
  out.objective = cfg.objective;
  out.stats = stats;
  out.task_name = task.name();
  out.task_params = task.params_json();
  out.theta_dim = theta_dim;
  out.x_dim = task.x_dim();
  out.seed = cfg.trainer.seed;

  double best_val = std::numeric_limits<double>::infinity();
  MlpParams best_params = params;
  int stale_epochs = 0;
  double learning_rate = cfg.trainer.learning_rate;
  detail::BatchEval ev;
  GradientSet grads = zeros_like(params);

  for (int epoch = 1; epoch <= cfg.trainer.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), loop_rng);
    double epoch_loss = 0.0;
    for (int b = 0; b < batches; ++b) {
      MatrixXd joint = detail::gather_rows(train_inputs, order, b * cfg.trainer.batch_size,
                                           cfg.trainer.batch_size);
      PairSet pairs = shuffle_pairs(joint, theta_dim, k, loop_rng);
      detail::eval_pairs(params, pairs, cfg.objective, cfg.trainer.z_gauge_strength, ev);
      if (!std::isfinite(ev.value.loss))
        throw numeric_error("training diverged at epoch " + std::to_string(epoch) +
                            " (objective " + to_string(cfg.objective) +
                            ", loss not finite; try a lower learning rate)");
      VectorXd output_grads(ev.cache.out.size());
      output_grads << ev.value.grads_joint, ev.value.grads_indep;
      backward_cached(params, ev.stacked, ev.cache, output_grads, grads);
      grads.add_scaled(l2_gradient(params, cfg.trainer.l2_strength), 1.0);
      epoch_loss += ev.value.loss + l2_penalty(params, cfg.trainer.l2_strength);
      rmsprop_step(params, opt, grads, learning_rate);
    }
    epoch_loss /= static_cast<double>(batches);

    // validation tracks the full training loss (objective + weight penalty)
    detail::eval_pairs(params, val_pairs, cfg.objective, cfg.trainer.z_gauge_strength, ev);
    double val_loss = ev.value.loss + l2_penalty(params, cfg.trainer.l2_strength);
    if (!std::isfinite(val_loss))
      throw numeric_error("validation loss not finite at epoch " + std::to_string(epoch));
    out.history.push_back({epoch, epoch_loss, val_loss});

    if (val_loss < best_val) {
      best_val = val_loss;
      best_params = params;
      out.best_epoch = epoch;
      stale_epochs = 0;
    } else {
      ++stale_epochs;
      // halve the rate mid-plateau; polishes the late phase without a
      // separate schedule knob
      if (stale_epochs == std::max(1, cfg.trainer.patience / 2))
        learning_rate = std::max(0.5 * learning_rate, 0.01 * cfg.trainer.learning_rate);
      if (stale_epochs >= cfg.trainer.patience) break;
    }
  }

  out.params = best_params;
  return out;
}

// Evaluates the model on raw (not yet standardized) input rows and maps
// outputs to log likelihood-to-evidence ratios.
inline VectorXd estimator_log_ratios(const TrainedEstimator& est, const MatrixXd& raw_inputs) {
  return log_ratio_from_output(est.objective, forward_batch(est.params, est.stats.apply(raw_inputs)));
}

// Donsker-Varadhan mutual-information estimate from log-ratio values on
// test pairs; invariant under a common additive shift of the energies.
inline double mi_from_log_ratios(const VectorXd& lr_joint, const VectorXd& lr_indep) {
  return lr_joint.mean() - log_mean_exp(lr_indep);
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

inline nlohmann::json checkpoint_to_json(const TrainedEstimator& est) {
  nlohmann::json j = mlp_to_json(est.params);
  j["objective"] = to_string(est.objective);
  j["feature_stats"] = {{"mean", detail::vector_to_json(est.stats.mean)},
                        {"std", detail::vector_to_json(est.stats.std)}};
  j["task"] = est.task_name;
  j["task_params"] = est.task_params;
  j["theta_dim"] = est.theta_dim;
  j["x_dim"] = est.x_dim;
  j["seed"] = est.seed;
  j["version"] = kVersion;
  return j;
}

inline TrainedEstimator checkpoint_from_json(const nlohmann::json& j) {
  TrainedEstimator est;
  est.params = mlp_from_json(j);
  est.objective = objective_from_string(j.at("objective").get<std::string>());
  est.stats.mean = detail::vector_from_json(j.at("feature_stats").at("mean"));
  est.stats.std = detail::vector_from_json(j.at("feature_stats").at("std"));
  est.task_name = j.value("task", std::string{});
  est.task_params = j.value("task_params", nlohmann::json::object());
  est.theta_dim = j.value("theta_dim", 0);
  est.x_dim = j.value("x_dim", 0);
  est.seed = j.value("seed", std::uint64_t{0});
  if (est.stats.mean.size() != est.params.input_dim())
    throw config_error("checkpoint feature_stats do not match architecture");
  return est;
}

// ---------------------------------------------------------------------------
// Hyperparameter grid search
// ---------------------------------------------------------------------------

struct GridPointResult {
  double l2_strength = 0.0;
  double learning_rate = 0.0;
  int batch_size = 0;
  std::vector<double> replicate_mi;  // -inf marks a diverged run
  double mean_mi = 0.0;
};

struct GridSearchResult {
  TrainerConfig best;
  std::vector<GridPointResult> points;
};

// Trains `replicates` models per grid point and scores each point by the
// mean Donsker-Varadhan MI of its models on a held-out test set; diverged
// runs score -inf. Returns the argmax configuration.
inline GridSearchResult grid_search(const Task& task, ObjectiveKind objective,
                                    const std::vector<double>& l2_grid,
                                    const std::vector<double>& lr_grid,
                                    const std::vector<int>& batch_grid, int n_train,
                                    int replicates, const ExperimentConfig& base, int jobs = 1) {
  if (l2_grid.empty() || lr_grid.empty() || batch_grid.empty())
    throw std::invalid_argument("grid_search: empty grid");
  const int n_test = std::min(n_train, 10000);
  MatrixXd test_data =
      generate_dataset(task, n_test, mix64(base.trainer.seed, stream_tag::test_pairs), jobs);
  MatrixXd test_inputs = encode_inputs(test_data, task.theta_dim());
  Rng pair_rng = substream(base.trainer.seed, stream_tag::test_pairs);
  PairSet test_pairs = shuffle_pairs(test_inputs, task.theta_dim(), 5, pair_rng);

  std::vector<GridPointResult> points;
  for (double l2 : l2_grid)
    for (double lr : lr_grid)
      for (int b : batch_grid) points.push_back({l2, lr, b, {}, 0.0});
  for (auto& p : points) p.replicate_mi.assign(static_cast<std::size_t>(replicates), 0.0);

  struct Cell {
    std::size_t point;
    int replicate;
  };
  std::vector<Cell> cells;
  for (std::size_t p = 0; p < points.size(); ++p)
    for (int r = 0; r < replicates; ++r) cells.push_back({p, r});

  parallel_for(cells.size(), jobs, [&](std::size_t c) {
    const auto& cell = cells[c];
    auto& point = points[cell.point];
    ExperimentConfig cfg = base;
    cfg.task_name = task.name();
    cfg.objective = objective;
    cfg.n_train = n_train;
    cfg.n_val = std::max(std::min(n_train, cfg.n_val), point.batch_size);
    cfg.trainer.l2_strength = point.l2_strength;
    cfg.trainer.learning_rate = point.learning_rate;
    cfg.trainer.batch_size = point.batch_size;
    cfg.replicate = cell.replicate;
    cfg.trainer.seed = mix64(base.trainer.seed, 7919 * cell.point + 13);
    double mi;
    try {
      TrainedEstimator est = train(task, cfg);
      VectorXd lr_joint = estimator_log_ratios(est, test_pairs.joint_inputs);
      VectorXd lr_indep = estimator_log_ratios(est, test_pairs.indep_inputs);
      mi = mi_from_log_ratios(lr_joint, lr_indep);
      if (!std::isfinite(mi)) mi = -std::numeric_limits<double>::infinity();
    } catch (const numeric_error&) {
      mi = -std::numeric_limits<double>::infinity();
    }
    point.replicate_mi[static_cast<std::size_t>(cell.replicate)] = mi;
  });

  GridSearchResult result;
  double best_mi = -std::numeric_limits<double>::infinity();
  result.best = base.trainer;
  for (auto& p : points) {
    p.mean_mi = 0.0;
    for (double mi : p.replicate_mi) p.mean_mi += mi / static_cast<double>(replicates);
    if (p.mean_mi > best_mi) {
      best_mi = p.mean_mi;
      result.best.l2_strength = p.l2_strength;
      result.best.learning_rate = p.learning_rate;
      result.best.batch_size = p.batch_size;
    }
  }
  result.points = std::move(points);
  return result;
}

}  // namespace minimalist
