#include <cmath>
#include <random>

#include "doctest.h"
#include "tamrl/nets.hpp"

using namespace tamrl;

namespace {

LstmParams zero_lstm(int d, int h) {
  LstmParams p;
  p.input_weights = Tensor::zeros({4 * h, d}, true);
  p.recurrent_weights = Tensor::zeros({4 * h, h}, true);
  p.biases = Tensor::zeros({4 * h}, true);
  return p;
}

std::vector<Tensor> random_seq(int len, int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Tensor> xs;
  for (int t = 0; t < len; ++t) {
    std::vector<double> v(static_cast<size_t>(d));
    for (double& x : v) x = u(rng);
    xs.push_back(Tensor::row(v));
  }
  return xs;
}

}  // namespace

TEST_CASE("lstm init shapes and forget bias") {
  std::mt19937_64 rng(1);
  LstmParams p = lstm_init(3, 5, rng);
  CHECK(p.input_weights.shape() == std::vector<int>{20, 3});
  CHECK(p.recurrent_weights.shape() == std::vector<int>{20, 5});
  CHECK(p.hidden() == 5);
  CHECK(p.input_dim() == 3);
  for (int i = 5; i < 10; ++i) CHECK(p.biases[i] == 1.0);
  double bound = 1.0 / std::sqrt(5.0);
  for (int i = 0; i < 5; ++i) CHECK(std::fabs(p.input_weights[i]) <= bound);
}

TEST_CASE("lstm cell closed-form cases") {
  LstmParams p = zero_lstm(2, 1);
  auto [h1, c1] = lstm_cell_step(p, Tensor::row({0.7, -0.2}), Tensor::zeros({1}), Tensor::zeros({1}));
  CHECK(h1.value() == 0.0);  // g = tanh(0) = 0 kills c'
  CHECK(c1.value() == 0.0);

  auto [h2, c2] = lstm_cell_step(p, Tensor::row({0.0, 0.0}), Tensor::zeros({1}), Tensor::row({2.0}));
  CHECK(c2.value() == doctest::Approx(1.0).epsilon(1e-15));  // f = sigma(0) = 0.5
  CHECK(h2.value() == doctest::Approx(0.5 * std::tanh(1.0)).epsilon(1e-12));  // ~0.380797
}

TEST_CASE("lstm cell gradient check") {
  std::mt19937_64 rng(5);
  LstmParams p = lstm_init(3, 4, rng);
  Tensor h0 = Tensor::zeros({4}), c0 = Tensor::zeros({4});
  auto f = [&](const Tensor& x) {
    auto [h, c] = lstm_cell_step(p, x, h0, c0);
    return sum(mul(h, c));
  };
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(3);
  for (double& x : v) x = u(rng);
  CHECK(grad_check(f, Tensor::row(v)) <= 1e-4);

  // and through the recurrent weights
  Tensor x = Tensor::row({0.3, -0.8, 0.1});
  auto fw = [&](const Tensor& w) {
    LstmParams q = p;
    q.recurrent_weights = w;
    auto [h, c] = lstm_cell_step(q, x, Tensor::full({4}, 0.2), c0);
    return sum(h);
  };
  CHECK(grad_check(fw, p.recurrent_weights.detached()) <= 1e-4);
}

TEST_CASE("lstm_forward equals manual fold") {
  std::mt19937_64 rng(9);
  LstmParams p = lstm_init(3, 6, rng);
  std::vector<Tensor> xs = random_seq(45, 3, rng);

  LstmOutput out = lstm_forward(p, xs);
  CHECK(out.hidden_states.size() == 45);

  Tensor h = Tensor::zeros({6}), c = Tensor::zeros({6});
  for (const Tensor& x : xs) {
    auto [h2, c2] = lstm_cell_step(p, x, h, c);
    h = h2;
    c = c2;
  }
  CHECK(out.final_h.data() == h.data());  // same arithmetic path, exact
  CHECK(out.final_c.data() == c.data());

  CHECK_THROWS_AS(lstm_forward(p, {}), TensorError);
}

TEST_CASE("lstm_forward single step and zero params") {
  std::mt19937_64 rng(2);
  LstmParams p = lstm_init(2, 3, rng);
  std::vector<Tensor> one = random_seq(1, 2, rng);
  LstmOutput out = lstm_forward(p, one);
  auto [h, c] = lstm_cell_step(p, one[0], Tensor::zeros({3}), Tensor::zeros({3}));
  CHECK(out.final_h.data() == h.data());

  LstmParams z = zero_lstm(2, 3);
  LstmOutput zo = lstm_forward(z, random_seq(7, 2, rng));
  for (const Tensor& ht : zo.hidden_states) {
    for (double v : ht.data()) CHECK(v == 0.0);
  }
}

TEST_CASE("cell state stays finite over long windows") {
  std::mt19937_64 rng(33);
  LstmParams p = lstm_init(2, 4, rng);
  std::vector<Tensor> xs = random_seq(200, 2, rng);
  LstmOutput out = lstm_forward(p, xs);
  for (double v : out.final_c.data()) {
    CHECK(std::isfinite(v));
    CHECK(std::fabs(v) <= 201.0);  // |c'| <= |c| + 1 per step
  }
}

TEST_CASE("bilstm_encode composition and symmetry") {
  std::mt19937_64 rng(4);
  LstmParams fwd = lstm_init(2, 3, rng), bwd = lstm_init(2, 3, rng);
  std::vector<Tensor> xs = random_seq(10, 2, rng);

  Tensor enc = bilstm_encode(fwd, bwd, xs);
  CHECK(enc.size() == 6);
  std::vector<Tensor> rev(xs.rbegin(), xs.rend());
  Tensor expect = concat(lstm_forward(fwd, xs).final_h, lstm_forward(bwd, rev).final_h, 0);
  CHECK(enc.data() == expect.data());

  // palindrome with shared params: both halves identical
  std::vector<Tensor> pal = {xs[0], xs[1], xs[2], xs[1], xs[0]};
  Tensor p = bilstm_encode(fwd, fwd, pal);
  for (int i = 0; i < 3; ++i) CHECK(p[i] == p[i + 3]);

  // reversed sequence with swapped params = half-swapped output
  Tensor swapped = bilstm_encode(bwd, fwd, rev);
  for (int i = 0; i < 3; ++i) {
    CHECK(swapped[i] == enc[i + 3]);
    CHECK(swapped[i + 3] == enc[i]);
  }

  LstmParams z1 = zero_lstm(2, 3), z2 = zero_lstm(2, 3);
  Tensor zero_enc = bilstm_encode(z1, z2, xs);
  for (double v : zero_enc.data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(bilstm_encode(fwd, bwd, {}), TensorError);
}

TEST_CASE("mlp_forward basics") {
  MlpParams ident;
  ident.weights.push_back(Tensor({2, 2}, {1, 0, 0, 1}, true));
  ident.biases.push_back(Tensor::zeros({2}, true));
  Tensor z = Tensor::row({3, -4});
  CHECK(mlp_forward(ident, z).data() == z.data());

  MlpParams constant;
  constant.weights.push_back(Tensor::zeros({2, 3}, true));
  constant.biases.push_back(Tensor::row({5, 6}, true));
  CHECK(mlp_forward(constant, Tensor::row({1, 2, 3})).data() == std::vector<double>{5, 6});
}

TEST_CASE("mlp gradient check") {
  std::mt19937_64 rng(6);
  MlpParams p = mlp_init({3, 8, 2}, rng);
  auto f = [&](const Tensor& x) { return sum(mlp_forward(p, x)); };
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(3);
  for (double& x : v) x = u(rng);
  CHECK(grad_check(f, Tensor::row(v)) <= 1e-4);

  auto fw = [&](const Tensor& w) {
    MlpParams q = p;
    q.weights[0] = w;
    return sum(mlp_forward(q, Tensor::row({0.2, -0.4, 0.9})));
  };
  CHECK(grad_check(fw, p.weights[0].detached()) <= 1e-4);
}
