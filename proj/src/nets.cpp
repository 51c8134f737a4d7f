#include "tamrl/nets.hpp"

#include <algorithm>
#include <cmath>

namespace tamrl {
namespace {

Tensor uniform_tensor(std::vector<int> shape, double bound, std::mt19937_64& rng) {
  int n = 1;
  for (int d : shape) n *= d;
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(static_cast<size_t>(n));
  for (double& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data), /*requires_grad=*/true);
}

}  // namespace

LstmParams lstm_init(int input_dim, int hidden, std::mt19937_64& rng) {
  if (input_dim < 1 || hidden < 1) throw TensorError("lstm_init requires positive dimensions");
  double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  LstmParams p;
  p.input_weights = uniform_tensor({4 * hidden, input_dim}, bound, rng);
  p.recurrent_weights = uniform_tensor({4 * hidden, hidden}, bound, rng);
  p.biases = uniform_tensor({4 * hidden}, bound, rng);
  // Forget-gate bias slice starts at 1.0 for gradient flow over long windows.
  for (int i = hidden; i < 2 * hidden; ++i) p.biases.at(i) = 1.0;
  return p;
}

MlpParams mlp_init(const std::vector<int>& widths, std::mt19937_64& rng) {
  if (widths.size() < 2) throw TensorError("mlp_init requires at least input and output widths");
  MlpParams p;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    int in = widths[l], out = widths[l + 1];
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    p.weights.push_back(uniform_tensor({out, in}, bound, rng));
    p.biases.push_back(uniform_tensor({out}, bound, rng));
  }
  return p;
}

std::pair<Tensor, Tensor> lstm_cell_step(const LstmParams& p, const Tensor& x, const Tensor& h,
                                         const Tensor& c) {
  int hid = p.hidden();
  Tensor z = add(add(matmul(p.input_weights, x), matmul(p.recurrent_weights, h)), p.biases);
  Tensor i = sigmoid(slice(z, 0, hid));
  Tensor f = sigmoid(slice(z, hid, 2 * hid));
  Tensor g = tanh_fn(slice(z, 2 * hid, 3 * hid));
  Tensor o = sigmoid(slice(z, 3 * hid, 4 * hid));
  Tensor c_next = add(mul(f, c), mul(i, g));
  Tensor h_next = mul(o, tanh_fn(c_next));
  return {h_next, c_next};
}

LstmOutput lstm_forward(const LstmParams& p, const std::vector<Tensor>& xs, Tensor h0, Tensor c0) {
  if (xs.empty()) throw TensorError("lstm_forward on empty sequence");
  Tensor h = h0.defined() ? h0 : Tensor::zeros({p.hidden()});
  Tensor c = c0.defined() ? c0 : Tensor::zeros({p.hidden()});
  LstmOutput out;
  out.hidden_states.reserve(xs.size());
  for (const Tensor& x : xs) {
    auto [h2, c2] = lstm_cell_step(p, x, h, c);
    h = h2;
    c = c2;
    out.hidden_states.push_back(h);
  }
  out.final_h = h;
  out.final_c = c;
  return out;
}

Tensor bilstm_encode(const LstmParams& fwd, const LstmParams& bwd, const std::vector<Tensor>& xs) {
  if (xs.empty()) throw TensorError("bilstm_encode on empty sequence");
  std::vector<Tensor> rev(xs.rbegin(), xs.rend());
  Tensor hf = lstm_forward(fwd, xs).final_h;
  Tensor hb = lstm_forward(bwd, rev).final_h;
  return concat(hf, hb, 0);
}

Tensor mlp_forward(const MlpParams& p, const Tensor& z) {
  if (p.weights.empty()) throw TensorError("mlp_forward on empty parameter set");
  Tensor h = z;
  for (size_t l = 0; l < p.weights.size(); ++l) {
    h = add(matmul(p.weights[l], h), p.biases[l]);
    if (l + 1 < p.weights.size()) h = tanh_fn(h);
  }
  return h;
}

}  // namespace tamrl
