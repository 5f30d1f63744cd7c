#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "pisorb/nn.hpp"

using namespace pisorb;

namespace {

NetworkConfig tiny_config(std::uint64_t seed = 3) {
  NetworkConfig cfg;
  cfg.input_dim = 4;
  cfg.projection_dim = 5;
  cfg.hidden_widths = {6, 5};
  cfg.dropout_p = 0.2;
  cfg.seed = seed;
  return cfg;
}

Matrix random_batch(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = g(rng);
  return X;
}

// scalar test loss: sum(mean) + 2 sum(logvar) + sum(transformed sips)
double probe_loss(const ForwardOutput& out) {
  return out.mean.sum() + 2.0 * out.log_var.sum() + out.sips.sum();
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("activations") {
  CHECK(swish(0.0) == doctest::Approx(0.0));
  CHECK(swish(1.0) == doctest::Approx(0.73106).epsilon(1e-4));
  CHECK(sigmoid(0.0) == doctest::Approx(0.5));
  CHECK(swish(-30.0) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("sips head transform bounds and inverse") {
  Eigen::Vector3d raw(0.0, 0.0, 0.0);
  Eigen::Vector3d mid = sips_transform(raw);
  CHECK(mid[0] == doctest::Approx(50.0));
  CHECK(mid[1] == doctest::Approx(0.01 + 9.99 / 2.0));
  CHECK(mid[2] == doctest::Approx(0.5 + 9.5 / 2.0));

  for (double a : {-5.0, -0.3, 0.0, 1.7, 5.0}) {
    Eigen::Vector3d r(a, -a, 0.5 * a);
    Eigen::Vector3d p = sips_transform(r);
    CHECK(p[0] > 0.0);
    CHECK(p[0] < 100.0);
    CHECK(p[1] > 0.01);
    CHECK(p[1] < 10.0);
    CHECK(p[2] > 0.5);
    CHECK(p[2] < 10.0);
    Eigen::Vector3d back = sips_transform_inverse(p);
    CHECK(back[0] == doctest::Approx(r[0]).epsilon(1e-9));
    CHECK(back[1] == doctest::Approx(r[1]).epsilon(1e-9));
    CHECK(back[2] == doctest::Approx(r[2]).epsilon(1e-9));
  }
}

TEST_CASE("initialization is seeded and bounded") {
  NetworkConfig cfg;  // the default 12 -> 25 projection
  cfg.seed = 9;
  const ParameterSet a = Network::init(cfg);
  const ParameterSet b = Network::init(cfg);
  cfg.seed = 10;
  const ParameterSet c = Network::init(cfg);
  CHECK(a.at("projection.weight") == b.at("projection.weight"));
  CHECK(a.at("projection.weight") != c.at("projection.weight"));

  // projection gain 0.5: bound = 0.5 sqrt(6 / (12 + 25))
  const double bound = 0.20129;
  const Matrix& wp = a.at("projection.weight");
  CHECK(wp.cwiseAbs().maxCoeff() <= bound + 1e-5);
  CHECK(wp.cwiseAbs().maxCoeff() > 0.5 * bound);  // not collapsed near zero

  CHECK(a.at("projection.bias").isZero());
  CHECK(a.at("block1.bn.scale").isOnes());
  CHECK(a.at("block1.bn.shift").isZero());
  CHECK(a.at("block1.bn.running_var").isOnes());
}

TEST_CASE("shape validation") {
  const NetworkConfig cfg = tiny_config();
  Network net(cfg);
  ParameterSet p = Network::init(cfg);
  net.validate_shapes(p);
  ParameterSet missing = p;
  missing.erase("head_mean.weight");
  CHECK_THROWS(net.validate_shapes(missing));
  ParameterSet wrong = p;
  wrong["projection.weight"] = Matrix::Zero(2, 2);
  CHECK_THROWS(net.validate_shapes(wrong));
}

TEST_CASE("forward mode semantics") {
  const NetworkConfig cfg = tiny_config();
  Network net(cfg);
  ParameterSet p = Network::init(cfg);
  const Matrix X = random_batch(8, cfg.input_dim, 1);

  const ForwardOutput e1 = net.forward(p, X, Mode::Eval);
  const ForwardOutput e2 = net.forward(p, X, Mode::Eval);
  CHECK(e1.mean == e2.mean);  // eval is deterministic, no dropout

  const ForwardOutput m1 = net.forward(p, X, Mode::McDropout, 7);
  const ForwardOutput m2 = net.forward(p, X, Mode::McDropout, 7);
  const ForwardOutput m3 = net.forward(p, X, Mode::McDropout, 8);
  CHECK(m1.mean == m2.mean);
  CHECK(m1.mean != m3.mean);
  CHECK(m1.mean != e1.mean);  // dropout active

  CHECK_THROWS(net.forward(p, X.topRows(1), Mode::Train, 0));
  CHECK_THROWS(net.forward(p, Matrix::Zero(4, cfg.input_dim + 1), Mode::Eval));

  // training updates running statistics toward the batch statistics
  ParameterSet q = p;
  const Matrix shifted = X.array() + 3.0;
  net.forward(q, shifted, Mode::Train, 0);
  CHECK(q.at("block1.bn.running_mean") != p.at("block1.bn.running_mean"));
  ParameterSet r = p;
  net.forward(r, shifted, Mode::Train, 0, nullptr, /*update_running=*/false);
  CHECK(r.at("block1.bn.running_mean") == p.at("block1.bn.running_mean"));
}

TEST_CASE("sips head outputs are within physical bounds") {
  const NetworkConfig cfg = tiny_config(21);
  Network net(cfg);
  ParameterSet p = Network::init(cfg);
  const Matrix X = 5.0 * random_batch(16, cfg.input_dim, 2);
  const ForwardOutput out = net.forward(p, X, Mode::Eval);
  for (int i = 0; i < out.sips.rows(); ++i) {
    CHECK(out.sips(i, 0) > 0.0);
    CHECK(out.sips(i, 0) < 100.0);
    CHECK(out.sips(i, 1) > 0.01);
    CHECK(out.sips(i, 1) < 10.0);
    CHECK(out.sips(i, 2) > 0.5);
    CHECK(out.sips(i, 2) < 10.0);
  }
}

TEST_CASE("backward matches finite differences") {
  const NetworkConfig cfg = tiny_config(5);
  Network net(cfg);
  ParameterSet p = Network::init(cfg);
  // non-trivial batchnorm affine and biases so every path carries signal
  for (auto& [name, t] : p) {
    if (name.find("bias") != std::string::npos || name.find("shift") != std::string::npos)
      t.setConstant(0.05);
  }
  const Matrix X = random_batch(6, cfg.input_dim, 11);

  for (Mode mode : {Mode::Eval, Mode::Train}) {
    const bool train = mode == Mode::Train;
    auto run = [&](ParameterSet& params, ForwardCache* cache) {
      return net.forward(params, X, mode, /*rng_seed=*/13, cache,
                         /*update_running=*/false);
    };
    ForwardCache cache;
    ParameterSet work = p;
    const ForwardOutput out = run(work, &cache);
    const Vector d_mean = Vector::Ones(X.rows());
    const Vector d_logvar = 2.0 * Vector::Ones(X.rows());
    const Matrix d_sips = Matrix::Ones(X.rows(), 3);
    const ParameterSet grads = net.backward(p, cache, d_mean, d_logvar, d_sips);

    const double h = 1e-5;
    for (const auto& name : net.trainable_names()) {
      const Matrix& g = grads.at(name);
      // probe a handful of entries per tensor
      for (int k = 0; k < std::min<int>(3, static_cast<int>(g.size())); ++k) {
        const int i = k % static_cast<int>(g.rows());
        const int j = (k * 7) % static_cast<int>(g.cols());
        ParameterSet plus = p, minus = p;
        plus.at(name)(i, j) += h;
        minus.at(name)(i, j) -= h;
        const double lp = probe_loss(run(plus, nullptr));
        const double lm = probe_loss(run(minus, nullptr));
        const double fd = (lp - lm) / (2.0 * h);
        const double scale = std::max({std::fabs(fd), std::fabs(g(i, j)), 1e-4});
        INFO("mode=", train, " tensor=", name, " entry=(", i, ",", j, ")");
        CHECK(std::fabs(fd - g(i, j)) / scale < 1e-5);
      }
    }
  }
}

TEST_CASE("encoder block names and parameter count") {
  NetworkConfig cfg;
  cfg.seed = 1;
  Network net(cfg);
  const auto enc = net.encoder_block_names(2, 5, true);
  for (const auto& n : enc) {
    CHECK(n.rfind("block", 0) == 0);
    CHECK(n.find("block1.") == std::string::npos);
  }
  bool has_running = false;
  for (const auto& n : enc)
    if (n.find("running") != std::string::npos) has_running = true;
  CHECK(has_running);
  const auto enc_trainable = net.encoder_block_names(2, 5, false);
  for (const auto& n : enc_trainable)
    CHECK(n.find("running") == std::string::npos);

  const ParameterSet p = Network::init(cfg);
  CHECK(net.parameter_count(p) > 10000);  // full-width network
}

TEST_CASE("model file round trip") {
  namespace fs = std::filesystem;
  const NetworkConfig cfg = tiny_config(7);
  Network net(cfg);
  const ParameterSet p = Network::init(cfg);
  ParameterSet fisher;
  fisher["block2.linear.weight"] = Matrix::Constant(
      p.at("block2.linear.weight").rows(), p.at("block2.linear.weight").cols(), 0.25);
  nlohmann::json meta;
  meta["role"] = "test";
  meta["seed"] = 7;

  const std::string path = (fs::temp_directory_path() / "model_rt.json").string();
  save_model(path, p, cfg, meta, fisher);
  const ModelFile mf = load_model(path);
  CHECK(mf.config.input_dim == cfg.input_dim);
  CHECK(mf.config.hidden_widths == cfg.hidden_widths);
  CHECK(mf.metadata.at("role") == "test");
  for (const auto& [name, t] : p) {
    REQUIRE(mf.params.count(name) == 1);
    CHECK(mf.params.at(name).isApprox(t, 1e-14));
  }
  REQUIRE(mf.fisher.count("block2.linear.weight") == 1);
  CHECK(mf.fisher.at("block2.linear.weight")(0, 0) == doctest::Approx(0.25));

  // eval predictions survive the round trip bit-for-bit within tolerance
  ParameterSet loaded = mf.params;
  const Matrix X = random_batch(5, cfg.input_dim, 4);
  ParameterSet orig = p;
  CHECK(net.forward(loaded, X, Mode::Eval).mean.isApprox(
      net.forward(orig, X, Mode::Eval).mean, 1e-12));

  std::remove(path.c_str());
}

}  // TEST_SUITE
