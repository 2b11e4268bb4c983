#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "minimalist/nn.hpp"

using namespace minimalist;
using test_helpers::close_rel;
using test_helpers::random_matrix;
using test_helpers::random_params;
using test_helpers::random_vector;

namespace {
// Straight-line reimplementation of the forward formula, kept independent
// of the batched Eigen path it checks.
double forward_reference(const MlpParams& p, const VectorXd& in) {
  const int h = p.hidden_width();
  std::vector<double> a1(static_cast<std::size_t>(h)), a2(static_cast<std::size_t>(h));
  for (int i = 0; i < h; ++i) {
    double z = p.b1(i);
    for (int j = 0; j < in.size(); ++j) z += p.w1(i, j) * in(j);
    a1[static_cast<std::size_t>(i)] = std::tanh(z);
  }
  for (int i = 0; i < h; ++i) {
    double z = p.b2(i);
    for (int j = 0; j < h; ++j) z += p.w2(i, j) * a1[static_cast<std::size_t>(j)];
    a2[static_cast<std::size_t>(i)] = std::tanh(z);
  }
  double out = p.b_out;
  for (int i = 0; i < h; ++i) out += p.w_out(i) * a2[static_cast<std::size_t>(i)];
  return out;
}
}  // namespace

TEST_CASE("forward: zero network maps everything to zero") {
  Rng rng = make_rng(7);
  MlpParams p = random_params(4, 8, rng);
  p.set_zero();
  CHECK(forward(p, random_vector(4, rng)) == 0.0);
}

TEST_CASE("forward: constant bias path") {
  Rng rng = make_rng(8);
  MlpParams p = random_params(3, 5, rng);
  p.w1.setZero();
  p.w2.setZero();
  p.b_out = 3.5;
  // w_out * tanh(b2 + 0) is a constant too; zero it to isolate b_out
  p.w_out.setZero();
  CHECK(forward(p, random_vector(3, rng)) == 3.5);
}

TEST_CASE("forward matches an independent reimplementation") {
  Rng rng = make_rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    MlpParams p = random_params(6, 11, rng);
    VectorXd in = random_vector(6, rng, 2.0);
    CHECK_THAT(forward(p, in),
               Catch::Matchers::WithinRel(forward_reference(p, in), 1e-12));
  }
}

TEST_CASE("forward is deterministic") {
  Rng rng = make_rng(10);
  MlpParams p = random_params(5, 7, rng);
  VectorXd in = random_vector(5, rng);
  CHECK(forward(p, in) == forward(p, in));
}

TEST_CASE("tanh boundedness caps the output") {
  Rng rng = make_rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    MlpParams p = random_params(4, 9, rng, 2.0);
    VectorXd in = random_vector(4, rng, 5.0);
    CHECK(std::abs(forward(p, in)) <= std::abs(p.b_out) + p.w_out.lpNorm<1>() + 1e-12);
  }
}

TEST_CASE("forward rejects dimension mismatches") {
  Rng rng = make_rng(12);
  MlpParams p = random_params(4, 6, rng);
  CHECK_THROWS_AS(forward(p, random_vector(5, rng)), std::invalid_argument);
  CHECK_THROWS_AS(forward_batch(p, random_matrix(3, 2, rng)), std::invalid_argument);
}

TEST_CASE("forward_batch equals per-row forward") {
  Rng rng = make_rng(13);
  MlpParams p = random_params(5, 10, rng);

  SECTION("batch of one") {
    VectorXd in = random_vector(5, rng);
    CHECK(forward_batch(p, in.transpose())(0) == forward(p, in));
  }
  SECTION("duplicated rows give duplicated outputs") {
    MatrixXd batch(2, 5);
    VectorXd in = random_vector(5, rng);
    batch.row(0) = in;
    batch.row(1) = in;
    VectorXd out = forward_batch(p, batch);
    CHECK(out(0) == out(1));
  }
  SECTION("n=3 random batch matches a loop of forward calls") {
    MatrixXd batch = random_matrix(3, 5, rng);
    VectorXd out = forward_batch(p, batch);
    for (int i = 0; i < 3; ++i)
      CHECK_THAT(out(i), Catch::Matchers::WithinRel(forward(p, batch.row(i).transpose()), 1e-13));
  }
}

TEST_CASE("backward: zero output grads give a zero gradient set") {
  Rng rng = make_rng(14);
  MlpParams p = random_params(4, 6, rng);
  MatrixXd batch = random_matrix(3, 4, rng);
  GradientSet g = backward(p, batch, VectorXd::Zero(3));
  CHECK(g.w1.isZero(0.0));
  CHECK(g.w2.isZero(0.0));
  CHECK(g.w_out.isZero(0.0));
  CHECK(g.b_out == 0.0);
}

TEST_CASE("backward: output-bias gradient equals the upstream grad") {
  Rng rng = make_rng(15);
  MlpParams p = random_params(4, 6, rng);
  MatrixXd batch = random_matrix(1, 4, rng);
  GradientSet g = backward(p, batch, VectorXd::Ones(1));
  CHECK(g.b_out == 1.0);
}

TEST_CASE("backward matches central finite differences") {
  Rng rng = make_rng(16);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    MlpParams p = random_params(5, 8, rng);
    MatrixXd batch = random_matrix(4, 5, rng, 2.0);
    VectorXd output_grads = test_helpers::random_vector(4, rng);
    GradientSet analytic = backward(p, batch, output_grads);
    // Loss whose per-sample output gradient is exactly output_grads
    auto loss = [&](const MlpParams& q) {
      return forward_batch(q, batch).dot(output_grads);
    };
    CHECK(test_helpers::max_gradient_mismatch(p, analytic, loss) < 1e-4);
  }
}

TEST_CASE("rmsprop: zero gradients leave parameters unchanged, decay ms") {
  Rng rng = make_rng(17);
  MlpParams p = random_params(3, 4, rng);
  MlpParams before = p;
  RmsPropState st = init_rmsprop(p);
  st.mean_square.w1.setConstant(1.0);
  rmsprop_step(p, st, zeros_like(p), 0.05);
  CHECK(p.w1 == before.w1);
  CHECK(p.b_out == before.b_out);
  CHECK(st.mean_square.w1(0, 0) == Catch::Approx(0.9).epsilon(1e-14));
}

TEST_CASE("rmsprop: hand-computed first step") {
  Rng rng = make_rng(18);
  MlpParams p = random_params(2, 3, rng);
  double w_before = p.w1(0, 0);
  RmsPropState st = init_rmsprop(p);
  GradientSet g = zeros_like(p);
  g.w1(0, 0) = 1.0;
  rmsprop_step(p, st, g, 0.01);
  double expected_delta = -0.01 / std::sqrt(0.1 + 1e-8);
  CHECK_THAT(p.w1(0, 0) - w_before, Catch::Matchers::WithinRel(expected_delta, 1e-12));
}

TEST_CASE("rmsprop: repeated identical gradients drive ms toward g^2") {
  Rng rng = make_rng(19);
  MlpParams p = random_params(2, 3, rng);
  RmsPropState st = init_rmsprop(p);
  GradientSet g = zeros_like(p);
  g.w1(0, 0) = 2.0;
  double prev = 0.0;
  for (int i = 0; i < 5; ++i) {
    rmsprop_step(p, st, g, 1e-3);
    double ms = st.mean_square.w1(0, 0);
    CHECK(ms > prev);
    CHECK(ms < 4.0);
    prev = ms;
  }
}

TEST_CASE("l2_gradient") {
  Rng rng = make_rng(20);
  MlpParams p = random_params(3, 4, rng);

  SECTION("zero strength gives zero gradient") {
    GradientSet g = l2_gradient(p, 0.0);
    CHECK(g.w1.isZero(0.0));
    CHECK(g.w_out.isZero(0.0));
  }
  SECTION("single weight: gradient is 2*lambda*w") {
    p.w1(0, 0) = 2.0;
    GradientSet g = l2_gradient(p, 1e-4);
    CHECK_THAT(g.w1(0, 0), Catch::Matchers::WithinRel(4e-4, 1e-12));
  }
  SECTION("biases stay unregularized") {
    GradientSet g = l2_gradient(p, 0.5);
    CHECK(g.b1.isZero(0.0));
    CHECK(g.b2.isZero(0.0));
    CHECK(g.b_out == 0.0);
  }
  SECTION("matches finite differences of the penalty") {
    GradientSet analytic = l2_gradient(p, 1e-4);
    auto penalty = [](const MlpParams& q) { return l2_penalty(q, 1e-4); };
    CHECK(test_helpers::max_gradient_mismatch(p, analytic, penalty) < 1e-4);
  }
}

TEST_CASE("init_mlp keeps weights inside the glorot bound, biases zero") {
  Rng rng = make_rng(21);
  MlpParams p = init_mlp(12, 50, rng);
  double limit1 = std::sqrt(6.0 / (12 + 50));
  CHECK(p.w1.cwiseAbs().maxCoeff() <= limit1);
  CHECK(p.b1.isZero(0.0));
  CHECK(p.b2.isZero(0.0));
  CHECK(p.b_out == 0.0);
  CHECK(p.w1.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("parameter json round-trip is exact") {
  Rng rng = make_rng(22);
  MlpParams p = random_params(7, 13, rng);
  MlpParams q = mlp_from_json(mlp_to_json(p));
  CHECK(p.w1 == q.w1);
  CHECK(p.b1 == q.b1);
  CHECK(p.w2 == q.w2);
  CHECK(p.b2 == q.b2);
  CHECK(p.w_out == q.w_out);
  CHECK(p.b_out == q.b_out);
}
