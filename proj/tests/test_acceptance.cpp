// Acceptance suite: quantitative gates for the full pipeline, one test
// case per criterion, each printing a PASS/FAIL line with the measured
// values. Several cases train real models and take minutes.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <vector>

#include "discrete_toy.hpp"
#include "helpers.hpp"
#include "minimalist/benchmark.hpp"
#include "minimalist/cli.hpp"
#include "minimalist/inference.hpp"
#include "minimalist/metrics.hpp"
#include "minimalist/simulators.hpp"
#include "minimalist/training.hpp"

using namespace minimalist;
namespace fs = std::filesystem;

namespace {

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[criterion %d] %-24s %s  %s\n", criterion, name.c_str(),
              pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

constexpr ObjectiveKind kObjectives[] = {ObjectiveKind::mine, ObjectiveKind::fdiv,
                                         ObjectiveKind::bce};

ExperimentConfig cell_config(const std::string& task_name, ObjectiveKind kind, int n, int rep,
                             std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.task_name = task_name;
  cfg.objective = kind;
  cfg.n_train = n;
  cfg.n_val = validation_size_for(n);
  cfg.shuffle_ratio = 5;
  cfg.replicate = rep;
  cfg.trainer = auto_trainer_for(n);
  cfg.trainer.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("criterion 1: gradient suite") {
  Rng rng = make_rng(0xC1);
  double worst_net = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    int d_in = 2 + static_cast<int>(rng() % 8);
    int h = 3 + static_cast<int>(rng() % 10);
    MlpParams p = test_helpers::random_params(d_in, h, rng);
    MatrixXd batch = test_helpers::random_matrix(1 + static_cast<int>(rng() % 5), d_in, rng, 2.0);
    VectorXd og = test_helpers::random_vector(static_cast<int>(batch.rows()), rng);
    GradientSet analytic = backward(p, batch, og);
    auto loss = [&](const MlpParams& q) { return forward_batch(q, batch).dot(og); };
    worst_net = std::max(worst_net, test_helpers::max_gradient_mismatch(p, analytic, loss));
  }

  double worst_obj = 0.0;
  auto fd_worst = [&](auto loss_fn, VectorXd ej, VectorXd ei) {
    auto value = loss_fn(ej, ei);
    auto probe = [&](VectorXd& vec, Eigen::Index i, bool joint) {
      double saved = vec(i);
      const double step = 1e-6;
      vec(i) = saved + step;
      double hi = loss_fn(ej, ei).loss;
      vec(i) = saved - step;
      double lo = loss_fn(ej, ei).loss;
      vec(i) = saved;
      double fd = (hi - lo) / (2.0 * step);
      double an = joint ? value.grads_joint(i) : value.grads_indep(i);
      double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      worst_obj = std::max(worst_obj, std::abs(fd - an) / denom);
    };
    for (Eigen::Index i = 0; i < ej.size(); ++i) probe(ej, i, true);
    for (Eigen::Index i = 0; i < ei.size(); ++i) probe(ei, i, false);
  };
  for (int trial = 0; trial < 100; ++trial) {
    VectorXd ej = test_helpers::random_vector(4, rng, 1.5);
    VectorXd ei = test_helpers::random_vector(12, rng, 1.5);
    fd_worst([](const VectorXd& a, const VectorXd& b) { return mine_loss(a, b, 1e-3); }, ej, ei);
    fd_worst([](const VectorXd& a, const VectorXd& b) { return fdiv_loss(a, b); }, ej, ei);
    fd_worst([](const VectorXd& a, const VectorXd& b) { return bce_loss(a, b, 3); }, ej, ei);
  }

  bool pass = worst_net < 1e-4 && worst_obj < 1e-4;
  report(1, "gradient suite", pass,
         "max rel error: network " + fmt(worst_net) + ", objectives " + fmt(worst_obj) +
             " (< 1e-4)");
  CHECK(worst_net < 1e-4);
  CHECK(worst_obj < 1e-4);
}

TEST_CASE("criterion 2: shared optimum") {
  Rng rng = make_rng(0xC2);
  double worst = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    auto toy = test_helpers::make_discrete_toy(rng);
    VectorXd truth = test_helpers::centered(toy.true_log_ratio);
    for (ObjectiveKind kind : kObjectives) {
      for (int start = 0; start < 3; ++start) {
        VectorXd init = test_helpers::random_vector(4, rng, 1.5);
        VectorXd table = test_helpers::minimize_table(
            [&](const VectorXd& t) { return test_helpers::toy_loss(toy, kind, t); }, init);
        VectorXd recovered = (kind == ObjectiveKind::bce)
                                 ? test_helpers::centered(table)
                                 : test_helpers::centered((-table).eval());
        worst = std::max(worst, (recovered - truth).cwiseAbs().maxCoeff());
      }
    }
  }
  bool pass = worst < 1e-6;
  report(2, "shared optimum", pass, "max |deviation| = " + fmt(worst) + " (< 1e-6)");
  CHECK(worst < 1e-6);
}

TEST_CASE("criterion 3: mi calibration on the gaussian toy") {
  auto task = make_task("gauss_toy");
  const double truth = 0.5 * std::log(2.0);
  const int n = 100000, replicates = 10;

  MatrixXd test_data = generate_dataset(*task, 20000, mix64(0xC3, 1), 2);
  Rng pair_rng = make_rng(mix64(0xC3, 2));
  PairSet test_pairs = shuffle_pairs(encode_inputs(test_data, 1), 1, 5, pair_rng);

  bool all_pass = true;
  for (ObjectiveKind kind : kObjectives) {
    std::vector<double> mis(replicates, 0.0);
    std::vector<MatrixXd> datasets(replicates);
    parallel_for(replicates, 2, [&](std::size_t rep) {
      ExperimentConfig cfg =
          cell_config("gauss_toy", kind, n, static_cast<int>(rep), mix64(0xC3, 100 + rep));
      TrainedEstimator est = train(*task, cfg);
      mis[rep] = mi_estimate(est, test_pairs.joint_inputs, test_pairs.indep_inputs);
    });
    int in_range = 0;
    for (double mi : mis)
      if (mi >= 0.29 && mi <= 0.36) ++in_range;
    bool pass = in_range >= 9;
    all_pass = all_pass && pass;
    report(3, "mi calibration (" + to_string(kind) + ")", pass,
           std::to_string(in_range) + "/10 in [0.29, 0.36], median " + fmt(median(mis)) +
               " (truth " + fmt(truth) + ")");
    CHECK(in_range >= 9);
  }
  CHECK(all_pass);
}

TEST_CASE("criterion 4: ou analytic agreement") {
  OuTask1d task;
  MatrixXd obs = simulate_at(task, task.theta_star(), 5, mix64(0xC4, 1), 2).rightCols(task.x_dim());
  PosteriorGrid exact = ou_analytic_posterior(task, obs, task.theta_grid(), 2);
  auto prior = [&task](const VectorXd& t) { return task.prior_logdensity(t); };

  const int replicates = 5;
  std::map<std::pair<int, int>, std::vector<double>> js;  // (kind index, n) -> values
  for (int n : {100000, 1000000}) {
    for (int rep = 0; rep < replicates; ++rep) {
      std::uint64_t group_seed = mix64(0xC4, static_cast<std::uint64_t>(n) + 7919u * rep);
      MatrixXd dataset =
          generate_dataset(task, n + validation_size_for(n), mix64(group_seed, 0xDA7A), 2);
      parallel_for(3, 2, [&](std::size_t ki) {
        ExperimentConfig cfg = cell_config("ou1d", kObjectives[ki], n, rep, group_seed);
        TrainedEstimator est = train(task, cfg, &dataset, 1);
        PosteriorGrid model = posterior_grid(est, obs, prior, task.theta_grid(), 1);
        double v = js_grid(exact, model);
        static std::mutex m;
        std::lock_guard<std::mutex> lock(m);
        js[{static_cast<int>(ki), n}].push_back(v);
        std::printf("    ou1d %s N=%d rep=%d js=%.4f\n", to_string(kObjectives[ki]).c_str(), n,
                    rep, v);
        std::fflush(stdout);
      });
    }
  }

  bool all_pass = true;
  for (int ki = 0; ki < 3; ++ki) {
    double med5 = median(js[{ki, 100000}]);
    double med6 = median(js[{ki, 1000000}]);
    bool pass = med5 < 0.15 && med6 < 0.05;
    all_pass = all_pass && pass;
    report(4, "ou agreement (" + to_string(kObjectives[ki]) + ")", pass,
           "median js: N=1e5 " + fmt(med5) + " (< 0.15), N=1e6 " + fmt(med6) + " (< 0.05)");
    CHECK(med5 < 0.15);
    CHECK(med6 < 0.05);
  }
  CHECK(all_pass);
}

TEST_CASE("criterion 5: budget monotonicity") {
  const int replicates = 5;
  const std::vector<int> budgets{10000, 100000};
  bool all_pass = true;

  for (const std::string task_name : {"ou1d", "birth_death", "sir", "lorenz"}) {
    auto task = make_task(task_name);
    const std::uint64_t task_seed = mix64(0xC5, fnv1a_value(task_name));
    MatrixXd obs = simulate_at(*task, task->theta_star(), task->default_m_observations(),
                               mix64(task_seed, 1), 2)
                       .rightCols(task->x_dim());
    auto prior = [&task](const VectorXd& t) { return task->prior_logdensity(t); };

    // reference: analytic for ou1d, three-method average at the largest
    // desk budget otherwise
    PosteriorGrid reference;
    if (task_name == "ou1d") {
      reference = ou_analytic_posterior(dynamic_cast<const OuTask1d&>(*task), obs,
                                        task->theta_grid(), 2);
    } else {
      std::vector<PosteriorGrid> grids(3);
      MatrixXd ref_data =
          generate_dataset(*task, 100000 + validation_size_for(100000), mix64(task_seed, 0xEF), 2);
      parallel_for(3, 2, [&](std::size_t ki) {
        ExperimentConfig cfg = cell_config(task_name, kObjectives[ki], 100000, 0,
                                           mix64(task_seed, 0xF0 + ki));
        TrainedEstimator est = train(*task, cfg, &ref_data, 1);
        grids[ki] = posterior_grid(est, obs, prior, task->theta_grid(), 1);
      });
      PosteriorGrid avg = grids[0];
      avg.density = (grids[0].density + grids[1].density + grids[2].density) / 3.0;
      reference = normalize_grid(avg.axes, avg.density.array().max(1e-300).log());
    }

    std::map<std::pair<int, int>, std::vector<double>> js;
    for (int n : budgets) {
      for (int rep = 0; rep < replicates; ++rep) {
        std::uint64_t group_seed = mix64(task_seed, static_cast<std::uint64_t>(n) + 104729u * rep);
        MatrixXd dataset =
            generate_dataset(*task, n + validation_size_for(n), mix64(group_seed, 0xDA7A), 2);
        parallel_for(3, 2, [&](std::size_t ki) {
          ExperimentConfig cfg = cell_config(task_name, kObjectives[ki], n, rep, group_seed);
          TrainedEstimator est = train(*task, cfg, &dataset, 1);
          PosteriorGrid model = posterior_grid(est, obs, prior, task->theta_grid(), 1);
          double v = js_grid(reference, model);
          static std::mutex m;
          std::lock_guard<std::mutex> lock(m);
          js[{static_cast<int>(ki), n}].push_back(v);
        });
      }
      std::printf("    %s N=%d done\n", task_name.c_str(), n);
      std::fflush(stdout);
    }

    for (int ki = 0; ki < 3; ++ki) {
      double med4 = median(js[{ki, 10000}]);
      double med5 = median(js[{ki, 100000}]);
      bool pass = med5 <= med4;
      all_pass = all_pass && pass;
      report(5, "monotonicity " + task_name + " (" + to_string(kObjectives[ki]) + ")", pass,
             "median js: N=1e4 " + fmt(med4) + " >= N=1e5 " + fmt(med5));
      CHECK(med5 <= med4);
    }
  }
  CHECK(all_pass);
}

TEST_CASE("criterion 6: simulator statistical oracles") {
  bool all = true;

  {  // birth-death mean growth
    const int n_runs = 10000;
    std::vector<double> finals(n_runs);
    for (int r = 0; r < n_runs; ++r) {
      Rng rng = substream(0xC601, static_cast<std::uint64_t>(r));
      finals[static_cast<std::size_t>(r)] = gillespie_birth_death(rng, 0.6, 0.4, 50, {1.0})(0);
    }
    double mean = 0.0, var = 0.0;
    for (double v : finals) mean += v / n_runs;
    for (double v : finals) var += (v - mean) * (v - mean) / (n_runs - 1);
    double expected = 50.0 * std::exp(0.2);
    double se = std::sqrt(var / n_runs);
    bool pass = std::abs(mean - expected) < 3.0 * se;
    all = all && pass;
    report(6, "bd mean growth", pass,
           "mean " + fmt(mean) + " vs " + fmt(expected) + " (3se = " + fmt(3.0 * se) + ")");
    CHECK(pass);
  }

  {  // ou stationary variance
    const int n_runs = 10000;
    MatrixXd g(1, 1), s(1, 1);
    g(0, 0) = 1.0;
    s(0, 0) = 1.0;
    std::vector<double> finals(n_runs);
    for (int r = 0; r < n_runs; ++r) {
      Rng rng = substream(0xC602, static_cast<std::uint64_t>(r));
      finals[static_cast<std::size_t>(r)] =
          euler_maruyama_ou(rng, g, VectorXd::Zero(1), s, VectorXd::Zero(1), 0.005, {10.0})(0);
    }
    double mean = 0.0, var = 0.0;
    for (double v : finals) mean += v / n_runs;
    for (double v : finals) var += (v - mean) * (v - mean) / (n_runs - 1);
    double se = std::sqrt(2.0 / (n_runs - 1));
    bool pass = std::abs(var - 1.0) < 3.0 * se + 0.005;
    all = all && pass;
    report(6, "ou stationary variance", pass, "var " + fmt(var) + " vs 1 (tol " +
                                                  fmt(3.0 * se + 0.005) + ")");
    CHECK(pass);
  }

  {  // sir conservation, exact
    bool conserved = true;
    for (int r = 0; r < 500; ++r) {
      Rng rng = substream(0xC603, static_cast<std::uint64_t>(r));
      VectorXd x = gillespie_sir(rng, 0.6, 0.2, 990, 10, 0, {1.0, 5.0, 10.0});
      for (int j = 0; j < 3; ++j) {
        double rpop = 1000.0 - x(2 * j) - x(2 * j + 1);
        if (x(2 * j) < 0 || x(2 * j + 1) < 0 || rpop < 0) conserved = false;
      }
    }
    all = all && conserved;
    report(6, "sir conservation", conserved, "S + I + R = 1000 along 500 trajectories");
    CHECK(conserved);
  }

  {  // lorenz fixed point, exact
    const double beta = 8.0 / 3.0;
    bool pass = false;
    for (double cand = 8.8; cand < 10.2; cand += 0.001) {
      double z = cand * cand / beta;
      double rho = z + 1.0;
      Vector3d d = lorenz_deriv(Vector3d(cand, cand, z), rho);
      if (d.x() == 0.0 && d.y() == 0.0 && d.z() == 0.0 && rho > 30.0 && rho < 40.0) {
        VectorXd out = rk4_lorenz_from(Vector3d(cand, cand, z), rho, 0.002, 1.0, 1.0, 5);
        pass = true;
        for (int i = 0; i < 5; ++i)
          pass = pass && out(3 * i) == cand && out(3 * i + 1) == cand && out(3 * i + 2) == z;
        break;
      }
    }
    all = all && pass;
    report(6, "lorenz fixed point", pass, "bitwise-constant trajectory at an equilibrium");
    CHECK(pass);
  }

  {  // gillespie waiting-time KS at 1%
    const int n = 10000;
    const double rate = 50.0;
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) {
      Rng rng = substream(0xC604, static_cast<std::uint64_t>(i));
      w[static_cast<std::size_t>(i)] = exponential_waiting_time(rng, rate);
    }
    std::sort(w.begin(), w.end());
    double d_stat = 0.0;
    for (int i = 0; i < n; ++i) {
      double cdf = 1.0 - std::exp(-rate * w[static_cast<std::size_t>(i)]);
      d_stat = std::max({d_stat, std::abs(cdf - static_cast<double>(i) / n),
                         std::abs(cdf - static_cast<double>(i + 1) / n)});
    }
    double stat = d_stat * std::sqrt(static_cast<double>(n));
    bool pass = stat < 1.628;
    all = all && pass;
    report(6, "waiting-time KS", pass, "sqrt(n) D = " + fmt(stat) + " (< 1.628)");
    CHECK(pass);
  }
  CHECK(all);
}

TEST_CASE("criterion 7: sampler cross-validation") {
  bool all = true;

  for (const std::string task_name : {"ou1d", "birth_death", "sir", "lorenz"}) {
    auto task = make_task(task_name);
    const std::uint64_t seed = mix64(0xC7, fnv1a_value(task_name));
    MatrixXd obs = simulate_at(*task, task->theta_star(), task->default_m_observations(),
                               mix64(seed, 1), 2)
                       .rightCols(task->x_dim());
    ExperimentConfig cfg = cell_config(task_name, ObjectiveKind::bce, 20000, 0, mix64(seed, 2));
    TrainedEstimator est = train(*task, cfg, nullptr, 2);
    auto prior = [&task](const VectorXd& t) { return task->prior_logdensity(t); };
    PosteriorGrid grid = posterior_grid(est, obs, prior, task->theta_grid(), 2);
    Rng rng = make_rng(mix64(seed, 3));
    McmcChain chain = mcmc_posterior(est, *task, obs, 40000, rng, 2000, 10);

    double worst = 0.0;
    for (int d = 0; d < task->theta_dim(); ++d) {
      PosteriorGrid marginal = marginal_grid(grid, d);
      worst = std::max(worst, js_hist_vs_grid(chain.samples.col(d), marginal, 50));
    }
    bool pass = worst < 0.01;
    all = all && pass;
    report(7, "mcmc vs grid (" + task_name + ")", pass,
           "max marginal js = " + fmt(worst) + " (< 0.01), acceptance " +
               fmt(chain.acceptance_rate));
    CHECK(worst < 0.01);
  }

  {  // identical-distribution two-sample metrics on real trajectories
    auto task = make_task("birth_death");
    MatrixXd pool =
        simulate_at(*task, task->theta_star(), 20000, mix64(0xC7, 99), 2).rightCols(task->x_dim());
    MatrixXd a = pool.topRows(10000), b = pool.bottomRows(10000);
    double roc = classifier_auroc(a, b, default_classifier_trainer(mix64(0xC7, 100)));
    bool pass_roc = std::abs(roc - 0.5) <= 0.02;
    report(7, "auroc identical dists", pass_roc, "auroc = " + fmt(roc) + " (0.5 +- 0.02)");
    CHECK(pass_roc);
    double js = classifier_js(a, b, default_classifier_trainer(mix64(0xC7, 101)));
    bool pass_js = js < 0.02;
    report(7, "classifier_js identical", pass_js, "js = " + fmt(js) + " (< 0.02)");
    CHECK(pass_js);
    all = all && pass_roc && pass_js;
  }
  CHECK(all);
}

TEST_CASE("criterion 8: determinism and resume equivalence") {
  fs::path dir = fs::temp_directory_path() / "minimalist_acceptance_c8";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto p = [&](const std::string& leaf) { return (dir / leaf).string(); };

  {  // identical configs, bit-identical checkpoints
    json cfg{{"task", "gauss_toy"},
             {"objective", "mine"},
             {"n_train", 3000},
             {"n_val", 600},
             {"output_dir", p("a")},
             {"trainer", {{"batch_size", 500}, {"max_epochs", 20}, {"patience", 20}, {"seed", 7}}}};
    save_json_file(p("cfg.json"), cfg);
    REQUIRE(cmd_train({p("cfg.json"), "", 1}) == kExitOk);
    cfg["output_dir"] = p("b");
    save_json_file(p("cfg.json"), cfg);
    REQUIRE(cmd_train({p("cfg.json"), "", 1}) == kExitOk);
    bool pass = fnv1a_file(p("a/checkpoint.json")) == fnv1a_file(p("b/checkpoint.json"));
    report(8, "train determinism", pass, "checkpoint hashes " + std::string(pass ? "equal" : "differ"));
    CHECK(pass);
  }

  {  // interrupted + resumed benchmark equals the uninterrupted run
    auto suite = [&](const std::string& tag) {
      return json{{"tasks", {"gauss_toy"}},
                  {"objectives", {"mine", "bce"}},
                  {"budgets", {400, 800}},
                  {"replicates", 1},
                  {"metrics", {"test_mi", "posterior_js"}},
                  {"seed", 5},
                  {"results", p(tag + "_results.csv")},
                  {"workdir", p(tag + "_work")},
                  {"n_test", 1000},
                  {"trainer", {{"max_epochs", 8}, {"patience", 8}, {"batch_size", 200}}},
                  {"jobs", 2}};
    };
    save_json_file(p("suite_full.json"), suite("full"));
    REQUIRE(cmd_benchmark({p("suite_full.json"), 0, 0}) == kExitOk);
    save_json_file(p("suite_resume.json"), suite("resume"));
    REQUIRE(cmd_benchmark({p("suite_resume.json"), 0, 1}) == kExitOk);
    REQUIRE(cmd_benchmark({p("suite_resume.json"), 0, 0}) == kExitOk);
    bool pass = fnv1a_file(p("full_results.csv")) == fnv1a_file(p("resume_results.csv"));
    report(8, "benchmark resume", pass, "results files " + std::string(pass ? "equal" : "differ"));
    CHECK(pass);
  }
}
