#include <cmath>

#include "doctest.h"
#include "pulaski/tensor.hpp"

using namespace pulaski;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = scale * (rng.uniform() * 2.0 - 1.0);
  return t;
}

}  // namespace

TEST_CASE("conv identity kernel leaves input unchanged") {
  Rng rng(1);
  Tensor x = rand_tensor({1, 1, 5, 5}, rng);
  Tensor k({1, 1, 1, 1}, {1.0});
  Tensor b({1}, {0.0});
  Tensor y = ops::conv(nullptr, x, k, b);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-15));
}

TEST_CASE("elementwise fixed points") {
  Tensor z = Tensor::scalar(0.0);
  CHECK(ops::sigmoid(nullptr, z).item() == doctest::Approx(0.5));
  Tensor neg = Tensor::scalar(-2.0);
  CHECK(ops::relu(nullptr, neg).item() == 0.0);
}

TEST_CASE("conv ones kernel counts the 3x3 neighborhood") {
  // 4x4 ones image, 3x3 ones kernel, same padding: interior 9, corners 4.
  Tensor x({1, 1, 4, 4}, 1.0);
  Tensor k({1, 1, 3, 3}, 1.0);
  Tensor y = ops::conv(nullptr, x, k, Tensor());
  auto at = [&](int i, int j) { return y[i * 4 + j]; };
  CHECK(at(1, 1) == doctest::Approx(9.0));
  CHECK(at(1, 2) == doctest::Approx(9.0));
  CHECK(at(2, 2) == doctest::Approx(9.0));
  CHECK(at(0, 0) == doctest::Approx(4.0));
  CHECK(at(0, 3) == doctest::Approx(4.0));
  CHECK(at(3, 3) == doctest::Approx(4.0));
  CHECK(at(0, 1) == doctest::Approx(6.0));
}

TEST_CASE("conv rejects shape mismatches with context") {
  Tensor x({1, 2, 4, 4}, 1.0);
  Tensor k({1, 3, 3, 3}, 1.0);  // expects 3 input channels
  CHECK_THROWS_AS(ops::conv(nullptr, x, k, Tensor()), ShapeError);
  Tensor even({1, 2, 2, 2}, 1.0);  // even kernel
  CHECK_THROWS_AS(ops::conv(nullptr, x, even, Tensor()), ShapeError);
}

TEST_CASE("non-finite outputs raise numeric errors") {
  Tensor x = Tensor::scalar(1e308);
  Tensor y = Tensor::scalar(1e308);
  CHECK_THROWS_AS(ops::mul(nullptr, ops::add(nullptr, x, y), ops::add(nullptr, x, y)),
                  NumericError);
  CHECK_THROWS_AS(ops::log(nullptr, Tensor::scalar(-1.0)), NumericError);
}

TEST_CASE("backward: sum gives ones, x*x gives 2x") {
  Tensor x = Tensor::leaf({2}, 0.0);
  x[0] = 1.0;
  x[1] = 2.0;
  {
    Tape tape;
    Tensor loss = ops::sum(&tape, x);
    tape.backward(loss);
    CHECK(x.grad()[0] == 1.0);
    CHECK(x.grad()[1] == 1.0);
  }
  x.zero_grad();
  {
    Tape tape;
    Tensor loss = ops::sum(&tape, ops::mul(&tape, x, x));
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
  }
}

TEST_CASE("backward requires a scalar recorded loss") {
  Tensor x = Tensor::leaf({2}, 1.0);
  Tape tape;
  Tensor y = ops::mul(&tape, x, x);
  CHECK_THROWS_AS(tape.backward(y), InvalidArgument);
  Tensor stranger = Tensor::scalar(0.0);
  CHECK_THROWS_AS(tape.backward(stranger), InvalidArgument);
}

TEST_CASE("unused leaves keep zero grads after backward") {
  Tensor x = Tensor::leaf({2}, 1.0);
  Tensor unused = Tensor::leaf({3}, 1.0);
  Tape tape;
  Tensor loss = ops::sum(&tape, x);
  tape.backward(loss);
  for (double g : unused.grad()) CHECK(g == 0.0);
}

TEST_CASE("grad_check: every primitive matches central differences") {
  Rng rng(7);
  double h = 1e-5;

  auto check = [&](const char* name, Shape shape,
                   const std::function<Tensor(Tape&, const Tensor&)>& f, double tol = 1e-6) {
    Tensor x = rand_tensor(shape, rng);
    double err = grad_check(f, x, h);
    INFO(name);
    CHECK(err < tol);
  };

  check("relu(shifted)", {3, 4}, [](Tape& t, const Tensor& x) {
    return ops::sum(&t, ops::relu(&t, ops::add_scalar(&t, x, 0.3)));
  });
  check("sigmoid", {3, 4}, [](Tape& t, const Tensor& x) {
    return ops::sum(&t, ops::sigmoid(&t, x));
  });
  check("exp", {5}, [](Tape& t, const Tensor& x) { return ops::sum(&t, ops::exp(&t, x)); });
  check("log(shift)", {5}, [](Tape& t, const Tensor& x) {
    return ops::sum(&t, ops::log(&t, ops::add_scalar(&t, x, 3.0)));
  });
  check("sqrt(shift)", {5}, [](Tape& t, const Tensor& x) {
    return ops::sum(&t, ops::sqrt(&t, ops::add_scalar(&t, x, 3.0)));
  });
  check("softplus", {5}, [](Tape& t, const Tensor& x) {
    return ops::sum(&t, ops::softplus(&t, x));
  });
  check("pow 4/3", {5}, [](Tape& t, const Tensor& x) {
    return ops::sum(&t, ops::pow_scalar(&t, ops::add_scalar(&t, x, 2.0), 4.0 / 3.0));
  });
  check("mul+add", {6}, [](Tape& t, const Tensor& x) {
    Tensor y = ops::add_scalar(&t, x, 0.5);
    return ops::sum(&t, ops::mul(&t, ops::add(&t, x, y), ops::sub(&t, x, y)));
  });
  check("mean", {7}, [](Tape& t, const Tensor& x) { return ops::mean(&t, x); });
  check("softmax", {1, 3, 2, 2}, [](Tape& t, const Tensor& x) {
    Tensor s = ops::softmax_channels(&t, x);
    return ops::sum(&t, ops::mul(&t, s, s));
  });
  check("broadcast channel", {3}, [](Tape& t, const Tensor& x) {
    Tensor b = ops::broadcast(&t, x, Shape{2, 3, 2, 2});
    return ops::sum(&t, ops::mul(&t, b, b));
  });
  check("reshape+slice+concat", {6}, [](Tape& t, const Tensor& x) {
    Tensor a = ops::slice_flat(&t, x, 0, 3);
    Tensor b = ops::slice_flat(&t, x, 3, 6);
    Tensor c = ops::concat_flat(&t, {ops::mul(&t, a, b), a});
    return ops::sum(&t, ops::mul(&t, c, c));
  });
  check("matmul", {2, 3}, [](Tape& t, const Tensor& x) {
    Tensor w({3, 2}, {0.3, -0.2, 0.5, 0.1, -0.4, 0.7});
    return ops::sum(&t, ops::matmul(&t, x, w));
  });
  check("transpose2d", {2, 3}, [](Tape& t, const Tensor& x) {
    Tensor xt = ops::transpose2d(&t, x);
    return ops::sum(&t, ops::mul(&t, xt, xt));
  });
  check("linear", {2, 3}, [](Tape& t, const Tensor& x) {
    Tensor w({2, 3}, {0.3, -0.2, 0.5, 0.1, -0.4, 0.7});
    Tensor b({2}, {0.1, -0.1});
    return ops::sum(&t, ops::linear(&t, x, w, b));
  });
  check("conv2d input", {1, 2, 4, 4}, [&](Tape& t, const Tensor& x) {
    Rng krng(3);
    static Tensor k = rand_tensor({3, 2, 3, 3}, krng, 0.5);
    static Tensor b = rand_tensor({3}, krng, 0.1);
    Tensor y = ops::conv(&t, x, k, b);
    return ops::sum(&t, ops::mul(&t, y, y));
  }, 1e-5);
  check("conv3d input", {1, 1, 4, 4, 4}, [&](Tape& t, const Tensor& x) {
    Rng krng(4);
    static Tensor k = rand_tensor({2, 1, 3, 3, 3}, krng, 0.5);
    static Tensor b = rand_tensor({2}, krng, 0.1);
    Tensor y = ops::conv(&t, x, k, b);
    return ops::sum(&t, ops::mul(&t, y, y));
  }, 1e-5);
  check("transposed_conv input", {1, 2, 3, 3}, [&](Tape& t, const Tensor& x) {
    Rng krng(5);
    static Tensor k = rand_tensor({2, 2, 2, 2}, krng, 0.5);
    static Tensor b = rand_tensor({2}, krng, 0.1);
    Tensor y = ops::transposed_conv(&t, x, k, b);
    return ops::sum(&t, ops::mul(&t, y, y));
  }, 1e-5);
  check("avg_pool", {1, 2, 4, 4}, [](Tape& t, const Tensor& x) {
    Tensor y = ops::avg_pool(&t, x);
    return ops::sum(&t, ops::mul(&t, y, y));
  });
  check("global_avg_pool", {2, 3, 4, 4}, [](Tape& t, const Tensor& x) {
    Tensor y = ops::global_avg_pool(&t, x);
    return ops::sum(&t, ops::mul(&t, y, y));
  });
  check("clamp interior", {5}, [](Tape& t, const Tensor& x) {
    return ops::sum(&t, ops::clamp(&t, x, -5.0, 5.0));
  });
  check("instance_norm", {2, 3, 4, 4}, [](Tape& t, const Tensor& x) {
    Tensor y = ops::instance_norm(&t, x);
    Tensor w = ops::sigmoid(&t, y);
    return ops::sum(&t, ops::mul(&t, w, y));
  }, 1e-5);
}

TEST_CASE("instance_norm normalizes each channel plane") {
  Rng rng(31);
  Tensor x = rand_tensor({2, 3, 4, 4}, rng, 5.0);
  Tensor y = ops::instance_norm(nullptr, x);
  for (int64_t c = 0; c < 6; ++c) {
    double mean = 0.0, var = 0.0;
    for (int64_t i = 0; i < 16; ++i) mean += y[c * 16 + i] / 16.0;
    for (int64_t i = 0; i < 16; ++i)
      var += (y[c * 16 + i] - mean) * (y[c * 16 + i] - mean) / 16.0;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
  // Constant planes map to zero (variance floor keeps it finite).
  Tensor flat({1, 1, 2, 2}, 3.5);
  Tensor yf = ops::instance_norm(nullptr, flat);
  for (int64_t i = 0; i < 4; ++i) CHECK(yf[i] == 0.0);
}

TEST_CASE("grad_check on conv kernels and biases") {
  Rng rng(11);
  Tensor x = rand_tensor({1, 2, 4, 4}, rng);
  Tensor k0 = rand_tensor({2, 2, 3, 3}, rng, 0.5);
  double err = grad_check(
      [&](Tape& t, const Tensor& k) {
        Tensor y = ops::conv(&t, x, k, Tensor());
        return ops::sum(&t, ops::mul(&t, y, y));
      },
      k0, 1e-5);
  CHECK(err < 1e-5);

  Tensor b0 = rand_tensor({2}, rng, 0.2);
  err = grad_check(
      [&](Tape& t, const Tensor& b) {
        Tensor y = ops::conv(&t, x, rand_tensor({2, 2, 3, 3}, rng, 0.0), b);
        return ops::sum(&t, ops::mul(&t, y, y));
      },
      b0, 1e-5);
  CHECK(err < 1e-5);
}

TEST_CASE("grad_check on a random 3-layer composite") {
  Rng rng(13);
  Tensor x = rand_tensor({1, 1, 4, 4}, rng);
  Tensor k1 = rand_tensor({4, 1, 3, 3}, rng, 0.4);
  Tensor k2 = rand_tensor({2, 4, 3, 3}, rng, 0.4);
  double err = grad_check(
      [&](Tape& t, const Tensor& probe) {
        Tensor h = ops::relu(&t, ops::conv(&t, probe, k1, Tensor()));
        h = ops::sigmoid(&t, ops::conv(&t, h, k2, Tensor()));
        return ops::mean(&t, ops::mul(&t, h, h));
      },
      x, 1e-4);
  CHECK(err < 1e-4);
}

TEST_CASE("backward is linear: grad(a f + b g) = a grad f + b grad g") {
  Rng rng(17);
  Tensor x0 = rand_tensor({6}, rng);
  const double a = 2.5, b = -1.25;

  auto grads_of = [&](const std::function<Tensor(Tape&, const Tensor&)>& fn) {
    Tensor x = x0.clone();
    x.set_requires_grad(true);
    Tape tape;
    Tensor loss = fn(tape, x);
    tape.backward(loss);
    return x.grad();
  };

  auto f = [](Tape& t, const Tensor& x) { return ops::sum(&t, ops::mul(&t, x, x)); };
  auto g = [](Tape& t, const Tensor& x) { return ops::sum(&t, ops::sigmoid(&t, x)); };
  auto combo = [&](Tape& t, const Tensor& x) {
    return ops::add(&t, ops::scale(&t, f(t, x), a), ops::scale(&t, g(t, x), b));
  };

  std::vector<double> gf = grads_of(f), gg = grads_of(g), gc = grads_of(combo);
  for (size_t i = 0; i < gf.size(); ++i)
    CHECK(gc[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-12));
}

TEST_CASE("determinism: identical seeds give bit-identical forwards and grads") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = rand_tensor({1, 2, 4, 4}, rng);
    Tensor k = rand_tensor({2, 2, 3, 3}, rng, 0.4);
    x.set_requires_grad(true);
    Tape tape;
    Tensor h = ops::spatial_dropout(&tape, ops::relu(&tape, ops::conv(&tape, x, k, Tensor())),
                                    0.4, rng, true);
    Tensor loss = ops::mean(&tape, ops::mul(&tape, h, h));
    tape.backward(loss);
    return std::make_pair(loss.item(), x.grad());
  };
  auto [l1, g1] = run(123);
  auto [l2, g2] = run(123);
  CHECK(l1 == l2);
  REQUIRE(g1.size() == g2.size());
  for (size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("spatial dropout semantics") {
  Rng rng(23);
  Tensor x({2, 8, 4, 4}, 1.0);

  SUBCASE("rate 0 is identity") {
    Tensor y = ops::spatial_dropout(nullptr, x, 0.0, rng, true);
    for (int64_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
  }
  SUBCASE("inactive is identity") {
    Tensor y = ops::spatial_dropout(nullptr, x, 0.9, rng, false);
    for (int64_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
  }
  SUBCASE("rate >= 1 rejected") {
    CHECK_THROWS_AS(ops::spatial_dropout(nullptr, x, 1.0, rng, true), InvalidArgument);
  }
  SUBCASE("whole channels drop; survivors rescale") {
    Tensor y = ops::spatial_dropout(nullptr, x, 0.5, rng, true);
    for (int64_t c = 0; c < 16; ++c) {
      double first = y[c * 16];
      CHECK((first == 0.0 || first == doctest::Approx(2.0)));
      for (int64_t i = 0; i < 16; ++i) CHECK(y[c * 16 + i] == first);
    }
  }
  SUBCASE("surviving fraction concentrates at 1 - rate") {
    Rng mc(99);
    Tensor wide({1, 10000, 1, 1}, 1.0);
    Tensor y = ops::spatial_dropout(nullptr, wide, 0.5, mc, true);
    int64_t kept = 0;
    for (int64_t c = 0; c < 10000; ++c)
      if (y[c] != 0.0) ++kept;
    CHECK(std::abs(kept / 10000.0 - 0.5) < 0.02);
  }
}

TEST_CASE("adam: zero grads leave parameters unchanged") {
  Tensor p = Tensor::leaf({3}, 1.0);
  std::vector<Tensor> params{p};
  AdamState adam(params);
  p.grad();  // allocate zeros
  adam.step(params);
  for (int64_t i = 0; i < p.size(); ++i) CHECK(p[i] == 1.0);
}

TEST_CASE("adam: one constant-gradient step moves by about lr") {
  Tensor p = Tensor::leaf({1}, 5.0);
  std::vector<Tensor> params{p};
  AdamConfig cfg;
  cfg.lr = 0.01;
  AdamState adam(params, cfg);
  p.grad()[0] = 3.0;  // positive gradient, parameter must decrease
  adam.step(params);
  // Bias-corrected first step is lr * g / (|g| + eps) ~ lr.
  CHECK(p[0] == doctest::Approx(5.0 - 0.01).epsilon(1e-6));
  CHECK(p.grad()[0] == 3.0);  // grads untouched
}

TEST_CASE("adam converges on a quadratic bowl") {
  Tensor p = Tensor::leaf({2}, 0.0);
  p[0] = 4.0;
  p[1] = -3.0;
  const double target0 = 1.0, target1 = -2.0;
  std::vector<Tensor> params{p};
  AdamConfig cfg;
  cfg.lr = 0.05;
  AdamState adam(params, cfg);
  for (int step = 0; step < 200; ++step) {
    p.zero_grad();
    Tape tape;
    Tensor t0({2}, {target0, target1});
    Tensor d = ops::sub(&tape, p, t0);
    Tensor loss = ops::sum(&tape, ops::mul(&tape, d, d));
    tape.backward(loss);
    adam.step(params);
  }
  CHECK(std::abs(p[0] - target0) < 1e-2);
  CHECK(std::abs(p[1] - target1) < 1e-2);
}

TEST_CASE("adam missing grad raises invalid state") {
  Tensor p = Tensor::leaf({2}, 0.0);
  std::vector<Tensor> params{p};
  AdamState adam(params);
  CHECK_THROWS(adam.step(params));
}

TEST_CASE("grad_check trivial and composite cases") {
  Rng rng(29);
  Tensor x = rand_tensor({4}, rng);
  double err_sum = grad_check(
      [](Tape& t, const Tensor& v) { return ops::sum(&t, v); }, x, 1e-4);
  CHECK(err_sum < 1e-10);

  Tensor w({1, 4}, {0.2, -0.3, 0.4, 0.1});
  Tensor b({1}, {0.05});
  double err_sl = grad_check(
      [&](Tape& t, const Tensor& v) {
        Tensor row = ops::reshape(&t, v, Shape{1, 4});
        return ops::sum(&t, ops::sigmoid(&t, ops::linear(&t, row, w, b)));
      },
      x, 1e-4);
  CHECK(err_sl < 1e-5);
}
