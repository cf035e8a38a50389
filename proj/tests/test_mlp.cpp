#include <doctest.h>

#include <cmath>
#include <fstream>

#include "fdch/mlp.hpp"
#include "fdch/rng.hpp"
#include "test_util.hpp"

using namespace fdch;

namespace {

Matrix random_matrix(Index rows, Index cols, SplitMix64& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = scale * rng.gaussian();
  return m;
}

// Flattens all trainable parameters for finite differencing.
double scalar_loss(const Mlp& net, const Matrix& x) {
  return 0.5 * forward(net, x).squaredNorm();
}

// Checks analytic gradients of the scalar test loss 0.5*|Y|^2 against
// central finite differences on every parameter and on the input.
double gradient_check(Mlp net, const Matrix& x, double h = 1e-5) {
  ForwardTape tape;
  const Matrix y = forward(net, x, &tape);
  const Grads grads = backward(net, tape, y);  // dL/dY = Y for this loss

  double worst = 0.0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Matrix& w = net.layers[l].weights;
    for (Index c = 0; c < w.cols(); ++c)
      for (Index r = 0; r < w.rows(); ++r) {
        const double orig = w(r, c);
        const double step = h * std::max(1.0, std::abs(orig));
        w(r, c) = orig + step;
        const double fp = scalar_loss(net, x);
        w(r, c) = orig - step;
        const double fm = scalar_loss(net, x);
        w(r, c) = orig;
        const double fd = (fp - fm) / (2.0 * step);
        const double an = grads.layers[l].weights(r, c);
        worst = std::max(worst, std::abs(fd - an) /
                                    std::max({1.0, std::abs(fd), std::abs(an)}));
      }
    Vector& b = net.layers[l].bias;
    for (Index r = 0; r < b.size(); ++r) {
      const double orig = b(r);
      const double step = h * std::max(1.0, std::abs(orig));
      b(r) = orig + step;
      const double fp = scalar_loss(net, x);
      b(r) = orig - step;
      const double fm = scalar_loss(net, x);
      b(r) = orig;
      const double fd = (fp - fm) / (2.0 * step);
      const double an = grads.layers[l].bias(r);
      worst = std::max(worst, std::abs(fd - an) /
                                  std::max({1.0, std::abs(fd), std::abs(an)}));
    }
  }
  // input gradient, so upstream nets receive correct signals
  const Matrix fd_in = testutil::fd_gradient(
      [&](const Matrix& xx) { return scalar_loss(net, xx); }, x, h);
  worst = std::max(worst, testutil::max_rel_error(fd_in, grads.input));
  return worst;
}

// relu has a kink at zero; keep finite differences well away from it.
bool relu_safe(const Mlp& net, const Matrix& x) {
  ForwardTape tape;
  forward(net, x, &tape);
  for (std::size_t l = 0; l < net.layers.size(); ++l)
    if (net.layers[l].act == Activation::relu &&
        tape.pre[l].cwiseAbs().minCoeff() < 1e-3)
      return false;
  return true;
}

}  // namespace

TEST_CASE("init_mlp shapes, determinism and validation") {
  const Mlp net = init_mlp({8, 4, 2}, {Activation::relu, Activation::identity}, 3);
  REQUIRE(net.layers.size() == 2);
  CHECK(net.layers[0].weights.rows() == 4);
  CHECK(net.layers[0].weights.cols() == 8);
  CHECK(net.layers[1].weights.rows() == 2);
  CHECK(net.layers[1].weights.cols() == 4);
  CHECK(net.layers[0].bias.isZero());

  const Mlp again = init_mlp({8, 4, 2}, {Activation::relu, Activation::identity}, 3);
  CHECK(net.layers[0].weights == again.layers[0].weights);
  CHECK(net.layers[1].weights == again.layers[1].weights);

  CHECK_THROWS_WITH_AS(init_mlp({8}, {}, 1), doctest::Contains("at least 2"),
                       std::invalid_argument);
  CHECK_THROWS_AS(init_mlp({8, 0}, {Activation::relu}, 1), std::invalid_argument);
  CHECK_THROWS_AS(init_mlp({8, 4}, {}, 1), std::invalid_argument);
}

TEST_CASE("forward: identity layer with W=I, b=0 is the identity map") {
  Mlp net;
  net.layers.push_back({Matrix::Identity(3, 3), Vector::Zero(3), Activation::identity});
  SplitMix64 rng(4);
  const Matrix x = random_matrix(3, 5, rng);
  CHECK(forward(net, x) == x);
}

TEST_CASE("forward: relu zeroes all-negative pre-activations") {
  Mlp net;
  net.layers.push_back({Matrix::Identity(2, 2), Vector::Zero(2), Activation::relu});
  Matrix x(2, 3);
  x << -1, -2, -0.5, -3, -0.1, -4;
  CHECK(forward(net, x).isZero());
}

TEST_CASE("forward: tanh outputs stay inside (-1,1)") {
  SplitMix64 rng(9);
  const Mlp net = init_mlp({4, 3}, {Activation::tanh}, 12);
  const Matrix y = forward(net, random_matrix(4, 8, rng));
  CHECK(y.cwiseAbs().maxCoeff() < 1.0);
  // extreme inputs saturate to exactly 1.0 at double precision, never past
  const Matrix extreme = forward(net, random_matrix(4, 8, rng, 50.0));
  CHECK(extreme.cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("forward is batch-order equivariant") {
  SplitMix64 rng(21);
  const Mlp net = init_mlp({5, 4, 3}, {Activation::tanh, Activation::identity}, 33);
  const Matrix x = random_matrix(5, 6, rng);
  const Matrix y = forward(net, x);
  std::vector<int> perm{3, 0, 5, 1, 4, 2};
  Matrix xp(5, 6), yp_want(3, 6);
  for (int j = 0; j < 6; ++j) {
    xp.col(j) = x.col(perm[static_cast<std::size_t>(j)]);
    yp_want.col(j) = y.col(perm[static_cast<std::size_t>(j)]);
  }
  CHECK(forward(net, xp) == yp_want);
}

TEST_CASE("forward rejects a dimension mismatch") {
  const Mlp net = init_mlp({4, 2}, {Activation::identity}, 1);
  CHECK_THROWS_AS(forward(net, Matrix::Zero(5, 3)), std::invalid_argument);
}

TEST_CASE("backward: identity single layer has the closed-form gradients") {
  Mlp net;
  SplitMix64 rng(14);
  net.layers.push_back({random_matrix(3, 4, rng), Vector::Zero(3), Activation::identity});
  const Matrix x = random_matrix(4, 6, rng);
  ForwardTape tape;
  forward(net, x, &tape);
  const Matrix dy = random_matrix(3, 6, rng);
  const Grads grads = backward(net, tape, dy);
  CHECK((grads.layers[0].weights - dy * x.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((grads.layers[0].bias - dy.rowwise().sum()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward: zero output gradient gives zero parameter gradients") {
  const Mlp net = init_mlp({5, 4, 3}, {Activation::relu, Activation::identity}, 8);
  SplitMix64 rng(15);
  const Matrix x = random_matrix(5, 6, rng);
  ForwardTape tape;
  forward(net, x, &tape);
  const Grads grads = backward(net, tape, Matrix::Zero(3, 6));
  for (const LayerGrads& g : grads.layers) {
    CHECK(g.weights.isZero());
    CHECK(g.bias.isZero());
  }
  CHECK(grads.input.isZero());
}

TEST_CASE("backward matches finite differences for every activation") {
  const std::vector<Activation> kinds{Activation::identity, Activation::relu,
                                      Activation::tanh};
  for (Activation act : kinds) {
    SplitMix64 rng(100 + static_cast<int>(act));
    int done = 0;
    std::uint64_t attempt = 0;
    while (done < 30) {
      const Mlp net = init_mlp({5, 4, 3}, {act, Activation::identity},
                               1000 + 10 * static_cast<std::uint64_t>(act) + attempt);
      const Matrix x = random_matrix(5, 6, rng);
      ++attempt;
      REQUIRE(attempt < 200);
      if (act == Activation::relu && !relu_safe(net, x)) continue;
      const double err = gradient_check(net, x);
      CHECK(err < 1e-4);
      ++done;
    }
  }
}

TEST_CASE("backward validates tape and gradient shapes") {
  const Mlp net = init_mlp({4, 3}, {Activation::identity}, 2);
  ForwardTape tape;
  forward(net, Matrix::Zero(4, 5), &tape);
  CHECK_THROWS_AS(backward(net, tape, Matrix::Zero(3, 4)), std::invalid_argument);
  CHECK_THROWS_AS(backward(net, ForwardTape{}, Matrix::Zero(3, 5)),
                  std::invalid_argument);
}

TEST_CASE("sgd_step applies the plain update") {
  Mlp net;
  net.layers.push_back({Matrix::Constant(1, 1, 1.0), Vector::Zero(1), Activation::identity});
  Grads grads;
  grads.layers.push_back({Matrix::Constant(1, 1, 2.0), Vector::Zero(1)});

  SUBCASE("zero learning rate leaves the net unchanged") {
    sgd_step(net, grads, 0.0);
    CHECK(net.layers[0].weights(0, 0) == 1.0);
  }
  SUBCASE("one step of lr 0.1 moves w from 1 to 0.8") {
    sgd_step(net, grads, 0.1);
    CHECK(net.layers[0].weights(0, 0) == doctest::Approx(0.8).epsilon(1e-12));
  }
  SUBCASE("repeated steps minimize a convex quadratic") {
    // 0.5*(w-3)^2, dw = w-3; lr 0.1 must reach w=3 within 1e-6 in <= 10k steps
    int steps = 0;
    while (std::abs(net.layers[0].weights(0, 0) - 3.0) > 1e-6 && steps < 10000) {
      grads.layers[0].weights(0, 0) = net.layers[0].weights(0, 0) - 3.0;
      sgd_step(net, grads, 0.1);
      ++steps;
    }
    CHECK(std::abs(net.layers[0].weights(0, 0) - 3.0) <= 1e-6);
    CHECK(steps <= 10000);
  }
}

TEST_CASE("sgd_step rejects mismatched gradient shapes") {
  Mlp net = init_mlp({4, 3}, {Activation::identity}, 2);
  Grads grads;
  grads.layers.push_back({Matrix::Zero(3, 5), Vector::Zero(3)});
  CHECK_THROWS_AS(sgd_step(net, grads, 0.1), std::invalid_argument);
}

TEST_CASE("checkpoint container round-trips networks exactly") {
  const std::string dir = testutil::scratch_dir("ckpt");
  const Mlp a = init_mlp({6, 5, 4}, {Activation::relu, Activation::identity}, 31);
  const Mlp b = init_mlp({3, 4}, {Activation::tanh}, 32);
  save_networks(dir + "/m.fdchm", {&a, &b});
  const std::vector<Mlp> loaded = load_networks(dir + "/m.fdchm");
  REQUIRE(loaded.size() == 2);
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK(loaded[0].layers[l].weights == a.layers[l].weights);
    CHECK(loaded[0].layers[l].bias == a.layers[l].bias);
    CHECK(loaded[0].layers[l].act == a.layers[l].act);
  }
  CHECK(loaded[1].layers[0].weights == b.layers[0].weights);
}

TEST_CASE("checkpoint loader rejects bad magic and truncation") {
  const std::string dir = testutil::scratch_dir("ckpt_bad");
  const Mlp a = init_mlp({3, 2}, {Activation::identity}, 1);
  save_networks(dir + "/m.fdchm", {&a});
  std::string bytes = testutil::read_file(dir + "/m.fdchm");

  {
    std::string garbled = bytes;
    garbled[0] = 'X';
    std::ofstream(dir + "/bad.fdchm", std::ios::binary) << garbled;
    CHECK_THROWS_WITH_AS(load_networks(dir + "/bad.fdchm"),
                         doctest::Contains("not a model checkpoint"),
                         std::runtime_error);
  }
  {
    std::ofstream(dir + "/short.fdchm", std::ios::binary)
        << bytes.substr(0, bytes.size() - 7);
    CHECK_THROWS_WITH_AS(load_networks(dir + "/short.fdchm"),
                         doctest::Contains("unexpected end of file"),
                         std::runtime_error);
  }
}
