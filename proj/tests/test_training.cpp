#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "minimalist/metrics.hpp"
#include "minimalist/simulators.hpp"
#include "minimalist/training.hpp"

using namespace minimalist;

TEST_CASE("generate_dataset is deterministic and schedule-independent") {
  auto task = make_task("ou1d");
  MatrixXd a = generate_dataset(*task, 200, 42, 1);
  MatrixXd b = generate_dataset(*task, 200, 42, 1);
  MatrixXd c = generate_dataset(*task, 200, 42, 2);
  CHECK(a == b);
  CHECK(a == c);
  CHECK(generate_dataset(*task, 200, 43) != a);
}

TEST_CASE("generate_dataset: one row is a valid pair") {
  auto task = make_task("sir");
  MatrixXd d = generate_dataset(*task, 1, 7);
  REQUIRE(d.rows() == 1);
  REQUIRE(d.cols() == task->theta_dim() + task->x_dim());
  CHECK(d.allFinite());
}

TEST_CASE("generate_dataset: ou1d prior column moments") {
  auto task = make_task("ou1d");
  const int n = 10000;
  MatrixXd d = generate_dataset(*task, n, 11, 2);
  double mu_mean = d.col(0).mean();
  // mu ~ U(-10, 10): mean 0, sd 20/sqrt(12)
  double se = 20.0 / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mu_mean) < 3.0 * se);
  double sigma_mean = d.col(1).mean();
  double se_sigma = 2.0 / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(sigma_mean - 1.0) < 3.0 * se_sigma);
}

TEST_CASE("standardize: moments, constant columns, round-trip") {
  Rng rng = make_rng(12);
  MatrixXd data = test_helpers::random_matrix(500, 4, rng, 3.0);
  data.col(2).setConstant(7.5);  // zero-variance coordinate
  FeatureStats stats = FeatureStats::fit(data);

  MatrixXd z = standardize(data, stats);
  for (int c = 0; c < 4; ++c) CHECK(std::abs(z.col(c).mean()) < 1e-12);
  for (int c : {0, 1, 3}) {
    double var = z.col(c).squaredNorm() / 500.0;
    CHECK_THAT(var, Catch::Matchers::WithinAbs(1.0, 1e-10));
  }
  CHECK(stats.std(2) == 1.0);
  CHECK(z.col(2).isZero(1e-14));

  MatrixXd back = destandardize(z, stats);
  CHECK((back - data).cwiseAbs().maxCoeff() < 1e-12);
}

namespace {
ExperimentConfig toy_config(ObjectiveKind kind, int n, std::uint64_t seed, int max_epochs = 60,
                            int batch = 500) {
  ExperimentConfig cfg;
  cfg.task_name = "gauss_toy";
  cfg.objective = kind;
  cfg.n_train = n;
  cfg.n_val = std::max(batch, n / 5);
  cfg.shuffle_ratio = 5;
  cfg.trainer.batch_size = batch;
  cfg.trainer.max_epochs = max_epochs;
  cfg.trainer.patience = 10;
  cfg.trainer.seed = seed;
  return cfg;
}
}  // namespace

TEST_CASE("train: heavy l2 collapses the network toward a constant") {
  auto task = make_task("gauss_toy");
  ExperimentConfig cfg = toy_config(ObjectiveKind::bce, 2000, 5, 200);
  cfg.trainer.l2_strength = 1e3;
  cfg.trainer.patience = 200;
  TrainedEstimator est = train(*task, cfg);
  CHECK(est.params.w1.cwiseAbs().maxCoeff() < 1e-2);
  // outputs barely vary across inputs
  Rng rng = make_rng(6);
  MatrixXd probe = test_helpers::random_matrix(50, 2, rng, 2.0);
  VectorXd out = forward_batch(est.params, probe);
  CHECK(out.maxCoeff() - out.minCoeff() < 1e-2);
}

TEST_CASE("train: mine bound approaches the gaussian toy mutual information") {
  auto task = make_task("gauss_toy");
  ExperimentConfig cfg = toy_config(ObjectiveKind::mine, 20000, 21, 80, 1000);
  TrainedEstimator est = train(*task, cfg);

  MatrixXd test_data = generate_dataset(*task, 20000, 1234);
  MatrixXd inputs = encode_inputs(test_data, 1);
  Rng rng = make_rng(5678);
  PairSet pairs = shuffle_pairs(inputs, 1, 5, rng);
  double mi = mi_estimate(est, pairs.joint_inputs, pairs.indep_inputs);
  double truth = 0.5 * std::log(2.0);
  CHECK(mi > truth - 0.08);
  CHECK(mi < truth + 0.05);
}

TEST_CASE("train: validation improves over the first epoch for all objectives") {
  auto task = make_task("gauss_toy");
  for (ObjectiveKind kind : {ObjectiveKind::mine, ObjectiveKind::fdiv, ObjectiveKind::bce}) {
    ExperimentConfig cfg = toy_config(kind, 5000, 31, 40);
    TrainedEstimator est = train(*task, cfg);
    REQUIRE(!est.history.empty());
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : est.history) best = std::min(best, r.val_loss);
    CHECK(best <= est.history.front().val_loss);
  }
}

TEST_CASE("train: best-epoch contract") {
  auto task = make_task("gauss_toy");
  ExperimentConfig cfg = toy_config(ObjectiveKind::fdiv, 4000, 77, 50);
  TrainedEstimator est = train(*task, cfg);
  REQUIRE(est.best_epoch >= 1);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : est.history) best = std::min(best, r.val_loss);
  CHECK(est.history[static_cast<std::size_t>(est.best_epoch - 1)].val_loss == best);
}

TEST_CASE("train: bit-identical results for identical configs") {
  auto task = make_task("gauss_toy");
  ExperimentConfig cfg = toy_config(ObjectiveKind::mine, 3000, 99, 25);
  TrainedEstimator a = train(*task, cfg);
  TrainedEstimator b = train(*task, cfg);
  CHECK(a.params.w1 == b.params.w1);
  CHECK(a.params.w2 == b.params.w2);
  CHECK(a.params.w_out == b.params.w_out);
  CHECK(a.params.b_out == b.params.b_out);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
  }
}

TEST_CASE("train: config validation catches bad fields") {
  auto task = make_task("gauss_toy");
  ExperimentConfig cfg = toy_config(ObjectiveKind::mine, 1000, 1);
  cfg.trainer.batch_size = 2000;  // exceeds n_train
  CHECK_THROWS_AS(train(*task, cfg), config_error);
  cfg = toy_config(ObjectiveKind::mine, 1000, 1);
  cfg.shuffle_ratio = 0;
  CHECK_THROWS_AS(train(*task, cfg), config_error);
  cfg = toy_config(ObjectiveKind::mine, 1000, 1);
  cfg.trainer.learning_rate = -1.0;
  CHECK_THROWS_AS(train(*task, cfg), config_error);
}

TEST_CASE("experiment config json round-trip and field errors") {
  nlohmann::json good{{"task", "gauss_toy"},
                      {"objective", "fdiv"},
                      {"n_train", 1000},
                      {"n_val", 500},
                      {"trainer", {{"batch_size", 100}, {"seed", 9}}}};
  ExperimentConfig cfg = experiment_config_from_json(good);
  CHECK(cfg.objective == ObjectiveKind::fdiv);
  CHECK(cfg.trainer.batch_size == 100);
  CHECK(cfg.trainer.seed == 9);
  ExperimentConfig back = experiment_config_from_json(experiment_config_to_json(cfg));
  CHECK(back.n_train == cfg.n_train);

  nlohmann::json missing = good;
  missing.erase("n_train");
  CHECK_THROWS_WITH(experiment_config_from_json(missing),
                    Catch::Matchers::ContainsSubstring("n_train"));
  nlohmann::json bad_type = good;
  bad_type["n_val"] = "lots";
  CHECK_THROWS_WITH(experiment_config_from_json(bad_type),
                    Catch::Matchers::ContainsSubstring("n_val"));
}

TEST_CASE("grid_search: single point returns that config") {
  auto task = make_task("gauss_toy");
  ExperimentConfig base = toy_config(ObjectiveKind::bce, 1500, 3, 10);
  GridSearchResult r = grid_search(*task, ObjectiveKind::bce, {1e-5}, {1e-3}, {500}, 1500, 1, base);
  CHECK(r.best.l2_strength == 1e-5);
  CHECK(r.best.learning_rate == 1e-3);
  CHECK(r.best.batch_size == 500);
  REQUIRE(r.points.size() == 1);
}

TEST_CASE("grid_search: diverged runs score -inf and lose the argmax") {
  auto task = make_task("gauss_toy");
  ExperimentConfig base = toy_config(ObjectiveKind::mine, 1500, 13, 12);
  // RMSprop with stable log-sum-exp forms survives ordinary large rates;
  // only an overflow-scale rate reaches a non-finite loss (via the gauge
  // term (log Z)^2 exceeding the double range)
  GridSearchResult r =
      grid_search(*task, ObjectiveKind::mine, {1e-5}, {1e160, 1e-3}, {500}, 1500, 2, base, 2);
  REQUIRE(r.points.size() == 2);
  bool saw_diverged = false;
  for (const auto& p : r.points)
    for (double mi : p.replicate_mi)
      if (std::isinf(mi) && mi < 0) saw_diverged = true;
  CHECK(saw_diverged);
  CHECK(r.best.learning_rate == 1e-3);
}

TEST_CASE("grid_search: best matches the recomputed argmax of mean MI") {
  auto task = make_task("gauss_toy");
  ExperimentConfig base = toy_config(ObjectiveKind::bce, 2000, 17, 12);
  GridSearchResult r = grid_search(*task, ObjectiveKind::bce, {1e-5, 1e-4}, {1e-3, 1e-4}, {500},
                                   2000, 2, base, 2);
  REQUIRE(r.points.size() == 4);
  double best_mean = -std::numeric_limits<double>::infinity();
  std::size_t best_idx = 0;
  for (std::size_t i = 0; i < r.points.size(); ++i)
    if (r.points[i].mean_mi > best_mean) {
      best_mean = r.points[i].mean_mi;
      best_idx = i;
    }
  CHECK(r.best.l2_strength == r.points[best_idx].l2_strength);
  CHECK(r.best.learning_rate == r.points[best_idx].learning_rate);
  CHECK(r.best.batch_size == r.points[best_idx].batch_size);
}

TEST_CASE("checkpoint json round-trips an estimator") {
  auto task = make_task("gauss_toy");
  ExperimentConfig cfg = toy_config(ObjectiveKind::fdiv, 2000, 55, 10);
  TrainedEstimator est = train(*task, cfg);
  TrainedEstimator back = checkpoint_from_json(checkpoint_to_json(est));
  CHECK(back.params.w1 == est.params.w1);
  CHECK(back.params.b_out == est.params.b_out);
  CHECK(back.objective == est.objective);
  CHECK(back.stats.mean == est.stats.mean);
  CHECK(back.stats.std == est.stats.std);
  CHECK(back.task_name == "gauss_toy");
  CHECK(back.theta_dim == 1);
  CHECK(back.x_dim == 1);
}
