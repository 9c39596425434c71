#include <cmath>
#include <random>

#include <doctest.h>

#include "hekf/errors.hpp"
#include "hekf/narx.hpp"
#include "support.hpp"

using namespace hekf;

using namespace hekf::testing;

TEST_CASE("network shapes and configuration bounds") {
  NarxConfig c;
  CHECK(c.feature_size() == 11);
  c.hidden_layers = 3;
  c.total_neurons = 10;
  CHECK(c.layer_sizes() == std::vector<int>{4, 3, 3});
  c.total_neurons = 31;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.total_neurons = 30;
  c.hidden_layers = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.hidden_layers = 2;
  c.max_closed_loop_epochs = 1001;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("forward pass") {
  NarxNetwork net = random_net(2, 10, 1);
  std::vector<double> f(11, 0.3);
  SUBCASE("zero weights give the output bias") {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(net.num_params());
    p[p.size() - 1] = 0.75;
    net.set_params(p);
    CHECK(net.forward(f) == 0.75);
    f.assign(11, -5.0);
    CHECK(net.forward(f) == 0.75);
  }
  SUBCASE("zero hidden weights give a constant map") {
    Eigen::VectorXd p = net.params();
    const int first = net.shape()[0] * net.shape()[1];
    p.head(first).setZero();
    net.set_params(p);
    const double a = net.forward(f);
    f.assign(11, 2.0);
    CHECK(net.forward(f) == a);
  }
  SUBCASE("wrong feature count") {
    std::vector<double> bad(10, 0.0);
    CHECK_THROWS_AS(net.forward(bad), ConfigError);
  }
}

TEST_CASE("gradients match central differences for every grid shape") {
  CHECK(narx_gradient_worst() < 1e-5);
}

TEST_CASE("standardizer") {
  Eigen::MatrixXd s(4, 2);
  s << 1, 10, 2, 20, 3, 30, 4, 45;
  const Standardizer st = Standardizer::fit(s);
  const Eigen::MatrixXd z = st.apply_rows(s);
  CHECK(std::abs(z.col(0).mean()) < 1e-12);
  for (Eigen::Index r = 0; r < 4; ++r) {
    for (Eigen::Index c = 0; c < 2; ++c) CHECK(std::abs(st.invert(st.apply(s(r, c), c), c) - s(r, c)) <= 1e-12 * std::abs(s(r, c)));
  }
  Eigen::MatrixXd flat = s;
  flat.col(1).setConstant(3.0);
  CHECK_THROWS_AS(Standardizer::fit(flat), ConfigError);
}

TEST_CASE("open-loop epoch") {
  NarxConfig c;
  c.hidden_layers = 1;
  c.total_neurons = 5;
  SUBCASE("constant target pulls the output toward it") {
    NarxSequence s;
    s.inputs = smooth_inputs(300, 3);
    s.targets = Eigen::VectorXd::Constant(300, 0.8);
    s.train_end = 240;
    TrainingReport rep;
    TrainingOptions opt;
    opt.lambda = 1e-8;
    const NarxNetwork net = train_open_loop({s}, c, 7, opt, &rep);
    CHECK(rep.open_loop_loss <= rep.initial_loss);
    const Eigen::VectorXd y = simulate_closed_loop(net, s.inputs);
    NarxNetwork init(c);
    std::mt19937_64 rng(7);
    init.initialize(rng);
    const Eigen::VectorXd y0 = simulate_closed_loop(init, s.inputs);
    CHECK(std::abs(y.tail(100).mean() - 0.8) < std::abs(y0.tail(100).mean() - 0.8));
  }
  SUBCASE("teacher outputs are recovered with teacher forcing") {
    const NarxNetwork teacher = random_net(1, 5, 42, 0.8);
    const auto data = teacher_data(teacher, 2, 400);
    TrainingOptions opt;
    opt.lambda = 1e-10;
    TrainingReport rep;
    NarxNetwork net = train_open_loop(data, c, 3, opt, &rep);
    CHECK(rep.open_loop_loss < rep.initial_loss);
    // One epoch is a single damped step; continue in closed loop.
    opt.max_epochs = 200;
    net = train_closed_loop(net, data, opt, &rep);
    CHECK(closed_loop_validation_nmse(net, data) < 1e-3);
  }
}

TEST_CASE("closed-loop training: teacher recovery, best snapshot, epoch cap") {
  const NarxNetwork teacher = random_net(1, 5, 11, 0.8);
  const auto data = teacher_data(teacher, 3, 500);
  NarxConfig c;
  c.hidden_layers = 1;
  c.total_neurons = 5;
  TrainingOptions opt;
  opt.lambda = 1e-10;
  TrainingReport open;
  const NarxNetwork start = train_open_loop(data, c, 2, opt, &open);
  const double start_val = closed_loop_validation_nmse(start, data);

  opt.max_epochs = 300;
  TrainingReport rep;
  const NarxNetwork net = train_closed_loop(start, data, opt, &rep);
  const double val = closed_loop_validation_nmse(net, data);
  CHECK(val < 1e-3);
  CHECK(val <= start_val);
  CHECK(rep.best_validation_nmse == doctest::Approx(val));

  // Requests above the cap are clipped.
  CHECK(epochs_for_oversized_request() == 1000);
}

TEST_CASE("soft-sensor bank streaming") {
  std::array<NarxNetwork, SoftSensorBank::kChannels> nets;
  for (int i = 0; i < SoftSensorBank::kChannels; ++i) nets[static_cast<std::size_t>(i)] = random_net(1 + i % 3, 10, 50 + static_cast<std::uint64_t>(i), 0.5);
  Eigen::MatrixXd raw = smooth_inputs(300, 4);
  raw.col(0) = raw.col(0).array() * 2.0 + 12.0;
  raw.col(1) = raw.col(1).array() * 2e4 + 1.5e5;
  raw.col(2) = raw.col(2).array() * 0.05;
  auto in_std = std::make_shared<const Standardizer>(Standardizer::fit(raw));
  Eigen::MatrixXd targets = smooth_inputs(300, 5).leftCols(3);
  Eigen::MatrixXd t5(300, 5);
  t5 << targets, targets.col(0) * 2.0 + targets.col(1), targets.col(2) * 3.0 - targets.col(1);
  SoftSensorBank bank(in_std, Standardizer::fit(t5), nets);

  const Eigen::MatrixXd batch = predict_sequence(bank, raw);
  bank.reset();
  CHECK(bank.warming_up());
  for (Eigen::Index t = 0; t < raw.rows(); ++t) {
    const auto y = bank.predict_step(raw.row(t).transpose());
    REQUIRE((y.transpose().array() == batch.row(t).array()).all());
  }
  CHECK_FALSE(bank.warming_up());

  // Constant inputs at the training means settle to a fixed point.
  bank.reset();
  Eigen::Matrix<double, 5, 1> prev;
  for (int t = 0; t < 2000; ++t) prev = bank.predict_step(in_std->mean());
  const auto next = bank.predict_step(in_std->mean());
  CHECK((next - prev).cwiseAbs().maxCoeff() < 1e-9 * (1.0 + next.cwiseAbs().maxCoeff()));
}

TEST_CASE("grid search") {
  const NarxNetwork teacher = random_net(1, 5, 77, 0.8);
  const auto data = teacher_data(teacher, 2, 300);
  GridSearchOptions opt;
  opt.layers = {1, 2};
  opt.neurons = {5, 10};
  opt.screening_epochs = 5;
  opt.continuation_epochs = 40;
  opt.lambdas = {1e-8};
  opt.seed = 9;
  const GridSearchResult a = grid_search(data, opt);
  const GridSearchResult b = grid_search(data, opt);
  CHECK(a.config.hidden_layers == b.config.hidden_layers);
  CHECK(a.config.total_neurons == b.config.total_neurons);
  CHECK(a.network.params() == b.network.params());
  CHECK(a.config.hidden_layers >= 1);
  CHECK(a.config.hidden_layers <= 3);
  CHECK(a.config.total_neurons <= 30);
  CHECK(a.candidates.size() == 4);

  // The teacher's own shape is in the grid; the winner matches or beats
  // the best screened score of that shape.
  double teacher_shape = 1e300;
  for (const auto& cand : a.candidates) {
    if (cand.config.hidden_layers == 1 && cand.config.total_neurons == 5) teacher_shape = cand.validation_nmse;
  }
  CHECK(a.validation_nmse <= teacher_shape);
}
