#include <cmath>
#include <random>

#include "doctest.h"
#include "tamrl/tensor.hpp"

using namespace tamrl;

TEST_CASE("tensor construction invariants") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), TensorError);
  CHECK_THROWS_AS(Tensor({2}, {1.0, std::nan("")}), TensorError);
  CHECK_THROWS_AS(Tensor({2}, {1.0, INFINITY}), TensorError);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.shape() == std::vector<int>{2, 3});
}

TEST_CASE("matmul basics") {
  Tensor id({2, 2}, {1, 0, 0, 1});
  Tensor b({2, 2}, {3, 4, 5, 6});
  Tensor c = matmul(id, b);
  CHECK(c.data() == std::vector<double>{3, 4, 5, 6});

  Tensor a({1, 2}, {1, 2});
  Tensor v({2, 1}, {3, 4});
  CHECK(matmul(a, v).value() == 11.0);

  Tensor bad({2, 3}, std::vector<double>(6, 1.0));
  CHECK_THROWS_WITH_AS(matmul(bad, bad), doctest::Contains("2x3"), TensorError);
}

TEST_CASE("matmul identity associativity is exact") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  std::vector<double> vals(9);
  for (double& x : vals) x = u(rng);
  Tensor a({3, 3}, vals);
  Tensor id({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(matmul(id, a).data() == a.data());
  CHECK(matmul(a, id).data() == a.data());
}

TEST_CASE("elementwise forward values") {
  CHECK(sigmoid(Tensor::scalar(0.0)).value() == 0.5);
  CHECK(tanh_fn(Tensor::scalar(0.0)).value() == 0.0);
  Tensor clipped = clip_min(Tensor::row({-2, 3}), 0.0);
  CHECK(clipped.data() == std::vector<double>{0, 3});
  CHECK_THROWS_AS(add(Tensor::row({1, 2}), Tensor::row({1, 2, 3})), TensorError);

  // scalar-with-tensor is the only broadcast
  Tensor s = mul(Tensor::row({1, 2, 3}), Tensor::scalar(2.0));
  CHECK(s.data() == std::vector<double>{2, 4, 6});
}

TEST_CASE("elementwise tag dispatch") {
  Tensor a = Tensor::row({1, 2});
  Tensor b = Tensor::row({3, 4});
  CHECK(elementwise(EwOp::Add, a, b).data() == std::vector<double>{4, 6});
  CHECK(elementwise(EwOp::Sub, a, b).data() == std::vector<double>{-2, -2});
  CHECK(elementwise(EwOp::Tanh, Tensor::scalar(0.0)).value() == 0.0);
  CHECK_THROWS_AS(elementwise(static_cast<EwOp>(99), a, b), TensorError);
}

TEST_CASE("concat and slice") {
  Tensor c = concat(Tensor::row({1, 2}), Tensor::row({3}), 0);
  CHECK(c.data() == std::vector<double>{1, 2, 3});

  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 3}, {5, 6, 7, 8, 9, 10});
  Tensor m = concat(a, b, 1);
  CHECK(m.shape() == std::vector<int>{2, 5});
  CHECK(m.data() == std::vector<double>{1, 2, 5, 6, 7, 3, 4, 8, 9, 10});

  Tensor bad({3, 2}, std::vector<double>(6, 0.0));
  CHECK_THROWS_AS(concat(a, bad, 1), TensorError);
  CHECK_THROWS_AS(concat(a, b, 2), TensorError);

  Tensor s = slice(Tensor::row({1, 2, 3, 4}), 1, 3);
  CHECK(s.data() == std::vector<double>{2, 3});
}

TEST_CASE("backward basics") {
  Tensor w = Tensor::row({1, 2, 3}, true);
  {
    Tape tape;
    Tensor loss = sum(w);
    tape.backward(loss);
  }
  CHECK(w.grad() == std::vector<double>{1, 1, 1});

  Tensor w2 = Tensor::row({1, 2}, true);
  {
    Tape tape;
    Tensor loss = sum(mul(w2, w2));
    tape.backward(loss);
  }
  CHECK(w2.grad() == std::vector<double>{2, 4});

  // d/dx [2*sigmoid(x)] at 0 = 2 * 0.25
  Tensor x = Tensor::scalar(0.0, true);
  {
    Tape tape;
    Tensor loss = mul_scalar(sigmoid(x), 2.0);
    tape.backward(loss);
  }
  CHECK(x.grad()[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("backward requires a scalar and an active tape") {
  Tensor w = Tensor::row({1, 2}, true);
  Tape tape;
  Tensor y = mul(w, w);
  CHECK_THROWS_AS(tape.backward(y), TensorError);
  CHECK_THROWS_AS([&] { NoTape guard; backward(y); }(), TensorError);
}

TEST_CASE("backward is linear across tapes") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> vals(4);
  for (double& v : vals) v = u(rng);

  auto loss1 = [](const Tensor& w) { return sum(mul(w, w)); };
  auto loss2 = [](const Tensor& w) { return sum(tanh_fn(w)); };

  Tensor a = Tensor::row(vals, true);
  {
    Tape tape;
    Tensor l = add(loss1(a), loss2(a));
    tape.backward(l);
  }
  Tensor b = Tensor::row(vals, true);
  {
    Tape t1;
    t1.backward(loss1(b));
  }
  {
    Tape t2;
    t2.backward(loss2(b));
  }
  for (int i = 0; i < 4; ++i) {
    CHECK(a.grad()[i] == doctest::Approx(b.grad()[i]).epsilon(1e-12));
  }
}

TEST_CASE("repeated backward on one tape accumulates leaf grads") {
  Tensor w = Tensor::row({1, 2}, true);
  Tape tape;
  Tensor loss = sum(mul(w, w));
  tape.backward(loss);
  tape.backward(loss);
  CHECK(w.grad() == std::vector<double>{4, 8});
}

TEST_CASE("grad_check on simple functions") {
  // tanh at 0: derivative exactly 1
  double err = grad_check([](const Tensor& x) { return tanh_fn(x); }, Tensor::scalar(0.0));
  CHECK(err < 1e-8);

  // clip_min away from the kink
  err = grad_check([](const Tensor& x) { return sum(clip_min(x, 0.0)); }, Tensor::scalar(1.0));
  CHECK(err < 1e-6);
}

TEST_CASE("grad_check on a random 2-layer tanh MLP") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-0.7, 0.7);
  auto rnd = [&](std::vector<int> shape) {
    int n = 1;
    for (int d : shape) n *= d;
    std::vector<double> v(static_cast<size_t>(n));
    for (double& x : v) x = u(rng);
    return Tensor(shape, v);
  };
  Tensor w1 = rnd({5, 4}), b1 = rnd({5}), w2 = rnd({1, 5}), b2 = rnd({1});
  auto f = [&](const Tensor& x) {
    Tensor h = tanh_fn(add(matmul(w1, x), b1));
    return add(matmul(w2, h), b2);
  };
  CHECK(grad_check(f, rnd({4})) < 1e-4);
}

TEST_CASE("grad_check on composites at many random points") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  auto f = [](const Tensor& x) {
    Tensor a = slice(x, 0, 3);
    Tensor b = slice(x, 3, 6);
    Tensor c = concat(sigmoid(a), tanh_fn(b), 0);
    return add(sum(mul(c, c)), sum(mul(a, b)));
  };
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(6);
    for (double& x : v) x = u(rng);
    CHECK(grad_check(f, Tensor::row(v)) <= 1e-4);
  }
}
