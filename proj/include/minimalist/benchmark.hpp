#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "minimalist/cli.hpp"
#include "minimalist/inference.hpp"
#include "minimalist/io.hpp"
#include "minimalist/metrics.hpp"
#include "minimalist/training.hpp"

namespace minimalist {

// Suite configuration for the benchmark orchestrator: tasks x objectives
// x budgets x replicates, three metrics per cell, resumable through the
// results CSV.
struct SuiteConfig {
  std::vector<std::string> tasks;
  std::vector<std::string> objectives = {"mine", "fdiv", "bce"};
  std::vector<int> budgets;
  int replicates = 5;
  std::vector<std::string> metrics = {"test_mi", "posterior_js", "likelihood_js"};
  std::uint64_t seed = 1;
  std::string results = "results.csv";
  std::string workdir;  // defaults to <results>.work
  int n_val_floor = 10000;
  int n_test = 10000;
  int likelihood_samples = 10000;
  int pool_factor = 5;
  int k = 5;
  int jobs = 0;  // 0 = hardware concurrency
  bool plot = false;
  json trainer_overrides = json::object();
  json task_params = json::object();  // per-task params, e.g. {"ou_nd": {"dim": 3}}
  int limit_cells = 0;                // stop after this many newly computed cells (0 = all)
};

inline SuiteConfig suite_config_from_json(const json& j) {
  SuiteConfig s;
  s.tasks = detail::json_field<std::vector<std::string>>(j, "tasks", "array of strings");
  s.objectives = detail::json_field_or(j, "objectives", s.objectives, "array of strings");
  s.budgets = detail::json_field<std::vector<int>>(j, "budgets", "array of integers");
  s.replicates = detail::json_field_or(j, "replicates", s.replicates, "integer");
  s.metrics = detail::json_field_or(j, "metrics", s.metrics, "array of strings");
  s.seed = detail::json_field_or(j, "seed", s.seed, "integer");
  s.results = detail::json_field_or(j, "results", s.results, "string");
  s.workdir = detail::json_field_or(j, "workdir", std::string{}, "string");
  s.n_val_floor = detail::json_field_or(j, "n_val_floor", s.n_val_floor, "integer");
  s.n_test = detail::json_field_or(j, "n_test", s.n_test, "integer");
  s.likelihood_samples = detail::json_field_or(j, "likelihood_samples", s.likelihood_samples, "integer");
  s.pool_factor = detail::json_field_or(j, "pool_factor", s.pool_factor, "integer");
  s.k = detail::json_field_or(j, "k", s.k, "integer");
  s.jobs = detail::json_field_or(j, "jobs", s.jobs, "integer");
  s.plot = detail::json_field_or(j, "plot", s.plot, "boolean");
  if (j.contains("trainer")) s.trainer_overrides = j.at("trainer");
  if (j.contains("task_params")) s.task_params = j.at("task_params");
  if (s.tasks.empty()) throw config_error("field 'tasks': must not be empty");
  if (s.budgets.empty()) throw config_error("field 'budgets': must not be empty");
  if (s.replicates < 1) throw config_error("field 'replicates': must be >= 1");
  const std::set<std::string> known_metrics{"test_mi", "posterior_js", "likelihood_js",
                                            "likelihood_auroc"};
  for (const auto& m : s.metrics)
    if (!known_metrics.count(m)) throw config_error("field 'metrics': unknown metric " + m);
  if (s.workdir.empty()) s.workdir = s.results + ".work";
  return s;
}

namespace bench_detail {

struct CellKey {
  std::string task;
  std::string objective;
  int n = 0;
  int replicate = 0;
  std::string metric;

  bool operator<(const CellKey& o) const {
    return std::tie(task, objective, n, replicate, metric) <
           std::tie(o.task, o.objective, o.n, o.replicate, o.metric);
  }
};

struct ResultRow {
  double value = 0.0;
  double uncertainty = 0.0;
};

inline std::uint64_t cell_seed(std::uint64_t suite_seed, const std::string& task, int n, int rep) {
  return mix64(suite_seed, fnv1a_value(task + "#" + std::to_string(n) + "#" + std::to_string(rep)));
}

// Everything shared across a task's cells: the fixed observations, the
// reference posterior, test pairs and the two-sample-truth material.
struct TaskContext {
  std::shared_ptr<Task> task;
  MatrixXd observations;              // M x x_dim at theta_star
  std::optional<PosteriorGrid> reference;
  std::vector<PosteriorGrid> reference_marginals;  // ou_nd per-element slices
  MatrixXd test_joint;                // raw encoded inputs
  MatrixXd test_indep;
  MatrixXd truth_samples;             // x ~ P(x | theta_star)
  MatrixXd marginal_pool;             // x ~ P(x)
};

inline TrainerConfig cell_trainer(const SuiteConfig& suite, int n) {
  TrainerConfig tc = auto_trainer_for(n);
  if (!suite.trainer_overrides.is_null() && suite.trainer_overrides.is_object()) {
    json merged = trainer_config_to_json(tc);
    for (auto& [key, val] : suite.trainer_overrides.items()) merged[key] = val;
    tc = trainer_config_from_json(merged);
  }
  tc.batch_size = std::min(tc.batch_size, n);
  return tc;
}

// Per-element conditional scans of the amortized ou_nd posterior, other
// elements pinned at the reference hypothesis (the same slice the
// analytic oracle evaluates).
inline PosteriorGrid ou_nd_model_marginal(const TrainedEstimator& est, const OuTaskNd& task,
                                          const MatrixXd& observations, int index) {
  const GridSpec spec = task.theta_grid()[static_cast<std::size_t>(index)];
  return grid_scan(
      [&](const VectorXd& value) {
        VectorXd theta = task.theta_star();
        theta(index) = value(0);
        double lp = task.prior_logdensity(theta);
        for (Eigen::Index m = 0; m < observations.rows(); ++m)
          lp += log_ratio(est, observations.row(m).transpose(), theta);
        return lp;
      },
      {spec}, 1);
}

inline double posterior_js_metric(const TrainedEstimator& est, const TaskContext& ctx,
                                  int jobs = 1) {
  auto prior = [&ctx](const VectorXd& t) { return ctx.task->prior_logdensity(t); };
  if (const auto* ou_nd = dynamic_cast<const OuTaskNd*>(ctx.task.get())) {
    double total = 0.0;
    for (int e = 0; e < ou_nd->theta_dim(); ++e) {
      PosteriorGrid model = ou_nd_model_marginal(est, *ou_nd, ctx.observations, e);
      total += js_grid(ctx.reference_marginals[static_cast<std::size_t>(e)], model);
    }
    return total / static_cast<double>(ou_nd->theta_dim());
  }
  PosteriorGrid model =
      posterior_grid(est, ctx.observations, prior, ctx.task->theta_grid(), jobs);
  return js_grid(*ctx.reference, model);
}

}  // namespace bench_detail

struct BenchmarkArgs {
  std::string suite_path;
  int jobs = 0;         // overrides suite jobs when > 0
  int limit_cells = 0;  // stop early after N new cells (resume later)
};

// Runs the full tasks x objectives x budgets x replicates sweep, appending
// one MetricReport row per (cell, metric) to the results CSV. Cells whose
// rows already exist are skipped, which makes the suite resumable; the
// final file is rewritten in canonical order so an interrupted-and-resumed
// run is byte-identical to an uninterrupted one.
inline int cmd_benchmark(const BenchmarkArgs& args) {
  return run_command([&] {
    json suite_json = load_json_file(args.suite_path);
    SuiteConfig suite = suite_config_from_json(suite_json);
    suite.seed = effective_seed(suite.seed);
    if (args.jobs > 0) suite.jobs = args.jobs;
    if (suite.jobs <= 0) suite.jobs = default_jobs();
    suite.limit_cells = args.limit_cells;
    std::filesystem::create_directories(suite.workdir);

    using bench_detail::CellKey;
    using bench_detail::ResultRow;

    // Resume: keep every existing row keyed canonically.
    std::map<CellKey, ResultRow> results;
    if (std::filesystem::exists(suite.results)) {
      CsvTable existing = read_csv(suite.results);
      for (const auto& row : existing.rows) {
        if (row.size() != 7) continue;
        CellKey key{row[0], row[1], std::stoi(row[2]), std::stoi(row[3]), row[4]};
        results[key] = ResultRow{std::stod(row[5]), std::stod(row[6])};
      }
    }

    const bool want_mi = std::count(suite.metrics.begin(), suite.metrics.end(), "test_mi") > 0;
    const bool want_pjs =
        std::count(suite.metrics.begin(), suite.metrics.end(), "posterior_js") > 0;
    const bool want_ljs =
        std::count(suite.metrics.begin(), suite.metrics.end(), "likelihood_js") > 0;
    const bool want_auroc =
        std::count(suite.metrics.begin(), suite.metrics.end(), "likelihood_auroc") > 0;

    const int max_budget = *std::max_element(suite.budgets.begin(), suite.budgets.end());
    std::mutex results_mutex;
    ensure_parent_dir(suite.results);
    // incremental append so interruptions lose at most the in-flight cell
    bool fresh_csv = !std::filesystem::exists(suite.results);
    CsvWriter incremental(suite.results, /*append=*/true);
    if (fresh_csv)
      incremental.write_row({"task", "objective", "N", "replicate", "metric", "value",
                             "uncertainty"});

    int computed_cells = 0;
    bool limited = false;
    auto t_start = std::chrono::steady_clock::now();

    for (const auto& task_name : suite.tasks) {
      if (limited) break;
      bench_detail::TaskContext ctx;
      json tparams = suite.task_params.value(task_name, json::object());
      ctx.task = make_task(task_name, tparams);
      const Task& task = *ctx.task;
      const int m_obs = task.default_m_observations();
      const std::uint64_t task_seed = mix64(suite.seed, fnv1a_value(task_name));

      // Is there anything to do for this task at all?
      bool task_needed = false;
      for (const auto& obj : suite.objectives)
        for (int n : suite.budgets)
          for (int rep = 0; rep < suite.replicates; ++rep)
            for (const auto& metric : suite.metrics)
              if (!results.count(CellKey{task_name, obj, n, rep, metric})) task_needed = true;
      if (!task_needed) continue;

      std::cerr << "[" << task_name << "] preparing observations and references\n";
      ctx.observations =
          simulate_at(task, task.theta_star(), m_obs, mix64(task_seed, 0x6f6273), suite.jobs)
              .rightCols(task.x_dim());

      if (want_pjs) {
        if (task_name == "ou1d") {
          const auto& ou = dynamic_cast<const OuTask1d&>(task);
          ctx.reference = ou_analytic_posterior(ou, ctx.observations, ou.theta_grid(), suite.jobs);
        } else if (task_name == "gauss_toy") {
          // conjugate normal posterior: theta | x_{1:M} ~ N(sum x/(M+1), 1/(M+1))
          double sum = ctx.observations.col(0).sum();
          double m = static_cast<double>(ctx.observations.rows());
          double mean = sum / (m + 1.0), var = 1.0 / (m + 1.0);
          ctx.reference = grid_scan(
              [mean, var](const VectorXd& t) {
                return -0.5 * (t(0) - mean) * (t(0) - mean) / var;
              },
              task.theta_grid(), suite.jobs);
        } else if (task_name == "ou_nd") {
          const auto& ou = dynamic_cast<const OuTaskNd&>(task);
          for (int e = 0; e < ou.theta_dim(); ++e)
            ctx.reference_marginals.push_back(ou_nd_analytic_marginal(
                ou, ctx.observations, e, ou.theta_grid()[static_cast<std::size_t>(e)],
                suite.jobs));
        } else {
          // three-method average at the largest desk budget, trained with a
          // dedicated seed and persisted for resumption
          std::vector<PosteriorGrid> method_grids;
          for (const auto& obj : suite.objectives) {
            std::string ref_path =
                suite.workdir + "/ref_" + task_name + "_" + obj + ".checkpoint.json";
            TrainedEstimator ref_est;
            if (std::filesystem::exists(ref_path)) {
              ref_est = checkpoint_from_json(load_json_file(ref_path));
            } else {
              std::cerr << "[" << task_name << "] training reference model (" << obj << ", N="
                        << max_budget << ")\n";
              ExperimentConfig cfg;
              cfg.task_name = task_name;
              cfg.task_params = tparams;
              cfg.objective = objective_from_string(obj);
              cfg.n_train = max_budget;
              cfg.n_val = validation_size_for(max_budget, suite.n_val_floor);
              cfg.shuffle_ratio = suite.k;
              cfg.trainer = bench_detail::cell_trainer(suite, max_budget);
              cfg.trainer.seed = mix64(task_seed, fnv1a_value("reference/" + obj));
              ref_est = train(task, cfg, nullptr, suite.jobs);
              save_json_file(ref_path, checkpoint_to_json(ref_est));
            }
            auto prior = [&task](const VectorXd& t) { return task.prior_logdensity(t); };
            method_grids.push_back(
                posterior_grid(ref_est, ctx.observations, prior, task.theta_grid(), suite.jobs));
          }
          PosteriorGrid avg = method_grids.front();
          for (std::size_t g = 1; g < method_grids.size(); ++g)
            avg.density += method_grids[g].density;
          avg.density /= static_cast<double>(method_grids.size());
          avg.log_density = avg.density.array().max(1e-300).log();
          ctx.reference = normalize_grid(avg.axes, avg.log_density);
        }
      }

      if (want_mi) {
        MatrixXd test_data =
            generate_dataset(task, suite.n_test, mix64(task_seed, 0x74657374), suite.jobs);
        MatrixXd inputs = encode_inputs(test_data, task.theta_dim());
        Rng rng = make_rng(mix64(task_seed, 0x736866));
        PairSet pairs = shuffle_pairs(inputs, task.theta_dim(), suite.k, rng);
        ctx.test_joint = std::move(pairs.joint_inputs);
        ctx.test_indep = std::move(pairs.indep_inputs);
      }

      if (want_ljs || want_auroc) {
        ctx.truth_samples = simulate_at(task, task.theta_star(), suite.likelihood_samples,
                                        mix64(task_seed, 0x747275), suite.jobs)
                                .rightCols(task.x_dim());
        ctx.marginal_pool =
            generate_dataset(task, suite.pool_factor * suite.likelihood_samples,
                             mix64(task_seed, 0x706f6f6c), suite.jobs)
                .rightCols(task.x_dim());
      }

      for (int n : suite.budgets) {
        if (limited) break;
        for (int rep = 0; rep < suite.replicates; ++rep) {
          if (limited) break;
          std::vector<std::string> todo_objectives;
          for (const auto& obj : suite.objectives) {
            bool missing = false;
            for (const auto& metric : suite.metrics)
              if (!results.count(CellKey{task_name, obj, n, rep, metric})) missing = true;
            if (missing) todo_objectives.push_back(obj);
          }
          if (todo_objectives.empty()) continue;
          if (suite.limit_cells > 0) {
            int remaining = suite.limit_cells - computed_cells;
            if (remaining <= 0) {
              limited = true;
              break;
            }
            if (static_cast<int>(todo_objectives.size()) > remaining) {
              todo_objectives.resize(static_cast<std::size_t>(remaining));
              limited = true;
            }
          }

          const std::uint64_t group_seed = bench_detail::cell_seed(suite.seed, task_name, n, rep);
          const int n_val = validation_size_for(n, suite.n_val_floor);
          MatrixXd dataset =
              generate_dataset(task, n + n_val, mix64(group_seed, 0xDA7A), suite.jobs);

          // all objectives in this group share the dataset, as in a single
          // subsample of the simulation pool
          parallel_for(todo_objectives.size(), suite.jobs, [&](std::size_t oi) {
            const std::string& obj = todo_objectives[oi];
            auto t_cell = std::chrono::steady_clock::now();
            ExperimentConfig cfg;
            cfg.task_name = task_name;
            cfg.task_params = tparams;
            cfg.objective = objective_from_string(obj);
            cfg.n_train = n;
            cfg.n_val = n_val;
            cfg.shuffle_ratio = suite.k;
            cfg.replicate = rep;
            cfg.trainer = bench_detail::cell_trainer(suite, n);
            cfg.trainer.seed = group_seed;

            std::vector<std::pair<CellKey, ResultRow>> new_rows;
            try {
              TrainedEstimator est = train(task, cfg, &dataset, 1);

              if (want_mi) {
                CellKey key{task_name, obj, n, rep, "test_mi"};
                if (!results.count(key)) {
                  VectorXd lr_j = estimator_log_ratios(est, ctx.test_joint);
                  VectorXd lr_i = estimator_log_ratios(est, ctx.test_indep);
                  double mi = mi_from_log_ratios(lr_j, lr_i);
                  // first-order standard error of the two empirical means
                  double nj = static_cast<double>(lr_j.size());
                  double ni = static_cast<double>(lr_i.size());
                  double var_j = (lr_j.array() - lr_j.mean()).square().sum() / (nj - 1.0);
                  Eigen::ArrayXd w = lr_i.array().exp();
                  double var_w = (w - w.mean()).square().sum() / (ni - 1.0);
                  double se = std::sqrt(var_j / nj + var_w / (ni * w.mean() * w.mean()));
                  new_rows.push_back({key, {mi, se}});
                }
              }
              if (want_pjs) {
                CellKey key{task_name, obj, n, rep, "posterior_js"};
                if (!results.count(key))
                  new_rows.push_back({key, {bench_detail::posterior_js_metric(est, ctx, 1), 0.0}});
              }
              if (want_ljs || want_auroc) {
                Rng rng = make_rng(mix64(group_seed, fnv1a_value("reject/" + obj)));
                MatrixXd model_samples = rejection_sample_likelihood(
                    est, task.theta_star(), ctx.marginal_pool, suite.likelihood_samples, rng);
                TrainerConfig ctc = default_classifier_trainer(
                    mix64(group_seed, fnv1a_value("classifier/" + obj)),
                    suite.likelihood_samples);
                if (want_ljs) {
                  CellKey key{task_name, obj, n, rep, "likelihood_js"};
                  if (!results.count(key))
                    new_rows.push_back(
                        {key, {classifier_js(ctx.truth_samples, model_samples, ctc), 0.0}});
                }
                if (want_auroc) {
                  CellKey key{task_name, obj, n, rep, "likelihood_auroc"};
                  if (!results.count(key))
                    new_rows.push_back(
                        {key, {classifier_auroc(ctx.truth_samples, model_samples, ctc), 0.0}});
                }
              }
            } catch (const std::exception& e) {
              std::lock_guard<std::mutex> lock(results_mutex);
              std::cerr << "cell failed (" << task_name << ", " << obj << ", N=" << n << ", rep="
                        << rep << "): " << e.what() << "\n";
              json failure{{"task", task_name}, {"objective", obj},      {"N", n},
                           {"replicate", rep},  {"error", e.what()}};
              std::ofstream fl(suite.workdir + "/failures.jsonl", std::ios::app);
              fl << failure.dump() << "\n";
              return;
            }

            std::lock_guard<std::mutex> lock(results_mutex);
            for (auto& [key, row] : new_rows) {
              results[key] = row;
              incremental.write_row({key.task, key.objective, std::to_string(key.n),
                                     std::to_string(key.replicate), key.metric,
                                     format_double(row.value), format_double(row.uncertainty)});
            }
            incremental.flush();
            double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_cell)
                              .count();
            std::cerr << "  " << task_name << " " << obj << " N=" << n << " rep=" << rep << " done ("
                      << static_cast<int>(secs) << "s)\n";
          });
          computed_cells += static_cast<int>(todo_objectives.size());
        }
      }
    }

    // canonical rewrite: stable vs interruption + resumption
    {
      CsvWriter final_csv(suite.results);
      final_csv.write_row({"task", "objective", "N", "replicate", "metric", "value",
                           "uncertainty"});
      for (const auto& [key, row] : results)
        final_csv.write_row({key.task, key.objective, std::to_string(key.n),
                             std::to_string(key.replicate), key.metric, format_double(row.value),
                             format_double(row.uncertainty)});
    }

    if (suite.plot) {
      // one JS-vs-budget chart per task x metric with per-objective medians
      for (const auto& task_name : suite.tasks) {
        for (const std::string metric : {"posterior_js", "test_mi"}) {
          std::map<std::string, std::vector<double>> series;
          std::vector<double> xs;
          for (const auto& obj : suite.objectives) {
            std::vector<double>& ys = series[obj];
            for (int n : suite.budgets) {
              std::vector<double> vals;
              for (int rep = 0; rep < suite.replicates; ++rep) {
                auto it = results.find(CellKey{task_name, obj, n, rep, metric});
                if (it != results.end()) vals.push_back(it->second.value);
              }
              if (vals.empty()) continue;
              std::sort(vals.begin(), vals.end());
              ys.push_back(vals[vals.size() / 2]);
            }
          }
          for (int n : suite.budgets) xs.push_back(static_cast<double>(n));
          if (!series.empty() && !series.begin()->second.empty())
            svg_line_chart(suite.workdir + "/" + task_name + "_" + metric + ".svg", xs, series,
                           task_name + " " + metric, metric == "posterior_js");
        }
      }
    }

    ManifestBuilder manifest("benchmark", suite_json, suite.seed);
    manifest.add_file(suite.results);
    manifest.set("cells_computed", computed_cells);
    manifest.set("limited", limited);
    manifest.write(suite.workdir + "/manifest.json");

    double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    std::cerr << "benchmark " << (limited ? "paused" : "complete") << ": " << results.size()
              << " rows in " << static_cast<int>(total) << "s\n";
  });
}

}  // namespace minimalist
