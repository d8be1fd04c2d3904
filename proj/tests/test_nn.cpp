#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mclink/model_io.hpp"
#include "mclink/nn.hpp"
#include "mclink/train.hpp"

using namespace mclink;

TEST_CASE("sigmoid outputs and stability") {
  CHECK(sigmoid(0.0) == Catch::Approx(0.5));
  CHECK(sigmoid(500.0) == Catch::Approx(1.0));
  CHECK(sigmoid(-500.0) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("softmax normalizes and is shift invariant") {
  Vec z = {1.0, 2.0, 3.0};
  Vec p = apply_act(Act::Softmax, z);
  CHECK(p[0] + p[1] + p[2] == Catch::Approx(1.0));
  CHECK(p[2] > p[1]);
  Vec zs = {1001.0, 1002.0, 1003.0};  // large logits must not overflow
  Vec ps = apply_act(Act::Softmax, zs);
  for (size_t i = 0; i < 3; ++i) CHECK(ps[i] == Catch::Approx(p[i]).epsilon(1e-12));
}

TEST_CASE("zero-weight MLP outputs 0.5 under sigmoid") {
  Mlp m = make_mlp({3, 4, 2}, Act::Sigmoid, Act::Sigmoid, 0);
  for (auto& w : m.w) w.fill(0.0);
  for (auto& b : m.b)
    for (double& x : b) x = 0.0;
  Vec y = mlp_forward(m, {0.7, -0.3, 2.0});
  CHECK(y[0] == Catch::Approx(0.5));
  CHECK(y[1] == Catch::Approx(0.5));
}

TEST_CASE("1-1-1 MLP hand evaluation") {
  Mlp m = make_mlp({1, 1, 1}, Act::Sigmoid, Act::Sigmoid, 0);
  m.w[0](0, 0) = 1.0;
  m.b[0][0] = 0.0;
  double wout = 0.8;
  m.w[1](0, 0) = wout;
  m.b[1][0] = 0.0;
  Vec y = mlp_forward(m, {0.0});
  // hidden = sigmoid(0) = 0.5, output = sigmoid(0.5 * w_out)
  CHECK(y[0] == Catch::Approx(sigmoid(0.5 * wout)).epsilon(1e-12));
}

TEST_CASE("MLP forward is deterministic and validates input size") {
  Mlp m = make_mlp({4, 10, 10, 10, 1}, Act::Sigmoid, Act::Sigmoid, 42);
  Vec in = {0.1, -0.2, 0.3, -0.4};
  CHECK(mlp_forward(m, in) == mlp_forward(m, in));
  CHECK_THROWS(mlp_forward(m, {1.0, 2.0}));
}

TEST_CASE("zero-weight RNN emits psi(b_y)") {
  Rnn r = make_rnn(2, 3, 1, Act::Tanh, Act::Sigmoid, 0);
  r.w_xh.fill(0.0);
  r.w_hh.fill(0.0);
  r.w_hy.fill(0.0);
  std::fill(r.b_h.begin(), r.b_h.end(), 0.0);
  r.b_y[0] = 0.4;
  std::vector<Vec> xs = {{1, 2}, {3, 4}, {5, 6}};
  auto ys = rnn_forward(r, xs);
  REQUIRE(ys.size() == 3);
  for (auto& y : ys) CHECK(y[0] == Catch::Approx(sigmoid(0.4)));
}

TEST_CASE("W_hh = 0 makes the RNN memoryless") {
  Rnn r = make_rnn(1, 4, 1, Act::Tanh, Act::Identity, 5);
  r.w_hh.fill(0.0);
  auto ya = rnn_forward(r, {{0.3}, {0.9}});
  auto yb = rnn_forward(r, {{0.9}, {0.3}});
  CHECK(ya[0][0] == Catch::Approx(yb[1][0]).epsilon(1e-12));
  CHECK(ya[1][0] == Catch::Approx(yb[0][0]).epsilon(1e-12));
}

TEST_CASE("scalar RNN hand evaluation") {
  Rnn r = make_rnn(1, 1, 1, Act::Tanh, Act::Identity, 0);
  r.w_xh(0, 0) = 1.0;
  r.w_hh(0, 0) = 1.0;
  r.w_hy(0, 0) = 1.0;
  r.b_h[0] = 0.0;
  r.b_y[0] = 0.0;
  RnnCache cache;
  rnn_forward_cached(r, {{1.0}, {0.0}}, cache);
  CHECK(cache.h[1][0] == Catch::Approx(0.7615941559557649).epsilon(1e-15));
  CHECK(cache.h[2][0] == Catch::Approx(0.6420149920119997).epsilon(1e-15));
}

TEST_CASE("perturbing W_hh never changes step 1, changes steps >= 2") {
  Rnn r = make_rnn(2, 5, 2, Act::Tanh, Act::Identity, 8);
  std::vector<Vec> xs = {{0.2, -0.1}, {0.5, 0.4}, {-0.3, 0.8}, {0.1, 0.1}};
  auto base = rnn_forward(r, xs);
  Rnn p = r;
  Rng rng = make_rng(99);
  for (double& w : p.w_hh.a) w += normal(rng, 0.05);
  auto pert = rnn_forward(p, xs);
  CHECK(pert[0] == base[0]);
  for (size_t t = 1; t < xs.size(); ++t) {
    double diff = 0.0;
    for (size_t i = 0; i < base[t].size(); ++i) diff += std::abs(pert[t][i] - base[t][i]);
    CHECK(diff > 1e-9);
  }
}

TEST_CASE("loss values and canonical dz") {
  // BCE with y = 0.8, t = 1: -log(0.8)
  CHECK(loss_value(Loss::Bce, {0.8}, {1.0}) == Catch::Approx(-std::log(0.8)));
  // CE with one-hot target
  CHECK(loss_value(Loss::Ce, {0.1, 0.9}, {0.0, 1.0}) == Catch::Approx(-std::log(0.9)));
  // MSE = 0.5 * sum of squares
  CHECK(loss_value(Loss::Mse, {1.0, 2.0}, {0.0, 0.0}) == Catch::Approx(2.5));
  Vec dz = loss_output_dz(Loss::Bce, {0.8, 0.3}, {1.0, 0.0});
  CHECK(dz[0] == Catch::Approx(-0.2));
  CHECK(dz[1] == Catch::Approx(0.3));
}

TEST_CASE("Adam matches a hand-computed 3-step trajectory") {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  Adam opt(cfg);
  Vec theta = {1.0};
  // f(theta) = 0.5 theta^2, grad = theta
  Vec expected = {0.900000001, 0.8004122297123382, 0.701586274504415};
  for (int t = 0; t < 3; ++t) {
    Vec g = {theta[0]};
    opt.step(theta, g);
    CHECK(theta[0] == Catch::Approx(expected[static_cast<size_t>(t)]).epsilon(1e-12));
  }
}

TEST_CASE("gradient check: MLP under all three loss pairings") {
  Rng rng = make_rng(202);
  for (int i = 0; i < 6; ++i) {
    Mlp m = make_mlp({3, 5, 4, 2}, Act::Sigmoid, Act::Sigmoid, 300 + static_cast<uint64_t>(i));
    Vec x = {normal(rng, 1.0), normal(rng, 1.0), normal(rng, 1.0)};
    Vec t = {1.0, 0.0};
    CHECK(gradient_check_mlp(m, x, t, Loss::Bce) < 1e-4);

    Mlp sm = make_mlp({3, 5, 3}, Act::Sigmoid, Act::Softmax, 400 + static_cast<uint64_t>(i));
    Vec t3 = {0.0, 1.0, 0.0};
    CHECK(gradient_check_mlp(sm, x, t3, Loss::Ce) < 1e-4);

    Mlp rm = make_mlp({3, 6, 2}, Act::Sigmoid, Act::Identity, 500 + static_cast<uint64_t>(i));
    Vec tr = {normal(rng, 1.0), normal(rng, 1.0)};
    CHECK(gradient_check_mlp(rm, x, tr, Loss::Mse) < 1e-4);
  }
}

TEST_CASE("gradient check: tanh hidden layers") {
  Mlp m = make_mlp({4, 5, 1}, Act::Tanh, Act::Sigmoid, 77);
  CHECK(gradient_check_mlp(m, {0.2, -0.5, 0.8, 0.1}, {1.0}, Loss::Bce) < 1e-4);
}

TEST_CASE("gradient check: RNN BPTT") {
  Rng rng = make_rng(404);
  for (int i = 0; i < 4; ++i) {
    Rnn r = make_rnn(2, 4, 1, Act::Tanh, Act::Sigmoid, 600 + static_cast<uint64_t>(i));
    SeqExample ex;
    for (int t = 0; t < 6; ++t) {
      ex.inputs.push_back({normal(rng, 1.0), normal(rng, 1.0)});
      ex.targets.push_back({(t % 2 == 0) ? 1.0 : 0.0});
    }
    CHECK(gradient_check_rnn(r, ex, Loss::Bce) < 1e-4);

    Rnn g = make_rnn(1, 4, 1, Act::Tanh, Act::Identity, 700 + static_cast<uint64_t>(i));
    SeqExample gx;
    for (int t = 0; t < 6; ++t) {
      gx.inputs.push_back({normal(rng, 1.0)});
      gx.targets.push_back({normal(rng, 1.0)});
    }
    CHECK(gradient_check_rnn(g, gx, Loss::Mse) < 1e-4);
  }
}

TEST_CASE("gradient check survives all-zero weights") {
  Mlp m = make_mlp({2, 3, 1}, Act::Sigmoid, Act::Sigmoid, 0);
  for (auto& w : m.w) w.fill(0.0);
  for (auto& b : m.b)
    for (double& x : b) x = 0.0;
  double err = gradient_check_mlp(m, {0.5, -0.5}, {1.0}, Loss::Bce);
  CHECK(std::isfinite(err));
  CHECK(err < 1e-4);
}

TEST_CASE("training separates a linearly separable toy set") {
  std::vector<Example> data;
  Rng rng = make_rng(12);
  for (int i = 0; i < 40; ++i) {
    double x = normal(rng, 1.0);
    double y = normal(rng, 1.0);
    double label = (x + y > 0.0) ? 1.0 : 0.0;
    data.push_back({{x, y}, {label}});
  }
  Mlp m = make_mlp({2, 8, 1}, Act::Sigmoid, Act::Sigmoid, 21);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.epochs = 500;
  cfg.batch_size = 8;
  cfg.seed = 3;
  TrainResult res = train_mlp(m, data, Loss::Bce, cfg);
  CHECK(res.loss_curve.back() <= res.loss_curve.front());
  int correct = 0;
  for (const auto& [x, t] : data)
    if ((mlp_forward(m, x)[0] > 0.5 ? 1.0 : 0.0) == t[0]) ++correct;
  CHECK(correct == 40);
}

TEST_CASE("RNN memorizes a single short sequence") {
  SeqExample ex;
  ex.inputs = {{1.0}, {0.0}, {1.0}, {1.0}};
  ex.targets = {{0.2}, {0.8}, {-0.3}, {0.5}};
  Rnn r = make_rnn(1, 8, 1, Act::Tanh, Act::Identity, 31);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs = 2000;
  cfg.seed = 4;
  TrainResult res = train_rnn(r, {ex}, Loss::Mse, cfg);
  CHECK(res.loss_curve.back() < 1e-3);
}

TEST_CASE("zero learning rate leaves the model unchanged") {
  Mlp m = make_mlp({2, 4, 1}, Act::Sigmoid, Act::Sigmoid, 11);
  Mlp before = m;
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 5;
  TrainResult res = train_mlp(m, {{{0.1, 0.2}, {1.0}}}, Loss::Bce, cfg);
  for (size_t l = 0; l < m.w.size(); ++l) CHECK(m.w[l].a == before.w[l].a);
  for (size_t i = 1; i < res.loss_curve.size(); ++i)
    CHECK(res.loss_curve[i] == res.loss_curve[0]);
}

TEST_CASE("seeded training reproducibility") {
  std::vector<Example> data;
  for (int i = 0; i < 10; ++i)
    data.push_back({{i * 0.1, 1.0 - i * 0.1}, {i % 2 == 0 ? 1.0 : 0.0}});
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.epochs = 50;
  cfg.batch_size = 4;
  cfg.seed = 77;

  Mlp a = make_mlp({2, 6, 1}, Act::Sigmoid, Act::Sigmoid, 5);
  Mlp b = make_mlp({2, 6, 1}, Act::Sigmoid, Act::Sigmoid, 5);
  train_mlp(a, data, Loss::Bce, cfg);
  train_mlp(b, data, Loss::Bce, cfg);
  for (size_t l = 0; l < a.w.size(); ++l) CHECK(a.w[l].a == b.w[l].a);
}

TEST_CASE("default detector shape builds and runs") {
  Mlp m = make_mlp({8, 10, 10, 10, 1}, Act::Sigmoid, Act::Sigmoid, 1);
  CHECK(m.layers() == 4);
  Vec y = mlp_forward(m, Vec(8, 0.1));
  CHECK(y.size() == 1);
  CHECK(y[0] > 0.0);
  CHECK(y[0] < 1.0);
}

TEST_CASE("model JSON roundtrip is exact") {
  Mlp m = make_mlp({3, 7, 2}, Act::Sigmoid, Act::Softmax, 99);
  nlohmann::json jm = m;
  Mlp m2 = jm.get<Mlp>();
  Vec x = {0.25, -1.5, 0.75};
  CHECK(mlp_forward(m, x) == mlp_forward(m2, x));

  Rnn r = make_rnn(2, 5, 1, Act::Tanh, Act::Sigmoid, 98);
  nlohmann::json jr = r;
  Rnn r2 = jr.get<Rnn>();
  auto ya = rnn_forward(r, {{0.1, 0.2}, {0.3, 0.4}});
  auto yb = rnn_forward(r2, {{0.1, 0.2}, {0.3, 0.4}});
  CHECK(ya == yb);
}

TEST_CASE("flatten/unflatten roundtrip") {
  Mlp m = make_mlp({2, 3, 1}, Act::Sigmoid, Act::Sigmoid, 6);
  Vec flat = flatten(m);
  Mlp m2 = m;
  for (auto& w : m2.w) w.fill(0.0);
  unflatten(flat, m2);
  CHECK(m2.w[0].a == m.w[0].a);
  CHECK(m2.b[1] == m.b[1]);

  Rnn r = make_rnn(1, 3, 1, Act::Tanh, Act::Identity, 6);
  Vec fr = flatten(r);
  Rnn r2 = r;
  r2.w_hh.fill(0.0);
  unflatten(fr, r2);
  CHECK(r2.w_hh.a == r.w_hh.a);
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  Mlp m = make_mlp({1, 2, 1}, Act::Sigmoid, Act::Identity, 3);
  // Identity output with MSE on a huge target and huge LR diverges.
  TrainConfig cfg;
  cfg.learning_rate = 1e150;
  cfg.epochs = 50;
  std::vector<Example> data = {{{1e100}, {1e200}}};
  CHECK_THROWS_AS(train_mlp(m, data, Loss::Mse, cfg), std::runtime_error);
}
