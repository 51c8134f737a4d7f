#pragma once

#include <random>
#include <utility>
#include <vector>

#include "tamrl/tensor.hpp"

namespace tamrl {

// Single-layer LSTM parameters. Gate packing along the 4H axis is fixed as
// (input i, forget f, cell g, output o); serialized checkpoints rely on it.
struct LstmParams {
  Tensor input_weights;      // [4H x D]
  Tensor recurrent_weights;  // [4H x H]
  Tensor biases;             // [4H]

  int hidden() const { return recurrent_weights.shape()[1]; }
  int input_dim() const { return input_weights.shape()[1]; }
};

struct MlpParams {
  std::vector<Tensor> weights;  // [out x in] per layer
  std::vector<Tensor> biases;   // [out] per layer
};

// Uniform init in [-1/sqrt(H), 1/sqrt(H)]; forget-gate bias slice set to 1.
LstmParams lstm_init(int input_dim, int hidden, std::mt19937_64& rng);

// widths includes the input width, e.g. {8, 64, 16} is one hidden layer.
MlpParams mlp_init(const std::vector<int>& widths, std::mt19937_64& rng);

// One LSTM step: i,f,o = sigmoid, g = tanh; c' = f*c + i*g; h' = o*tanh(c').
std::pair<Tensor, Tensor> lstm_cell_step(const LstmParams& p, const Tensor& x, const Tensor& h,
                                         const Tensor& c);

struct LstmOutput {
  std::vector<Tensor> hidden_states;  // one per timestep
  Tensor final_h;
  Tensor final_c;
};

LstmOutput lstm_forward(const LstmParams& p, const std::vector<Tensor>& xs,
                        Tensor h0 = Tensor(), Tensor c0 = Tensor());

// Final forward hidden state over xs concatenated with the final hidden
// state of a second pass over reversed xs. Output length 2H.
Tensor bilstm_encode(const LstmParams& fwd, const LstmParams& bwd, const std::vector<Tensor>& xs);

// Affine + tanh for hidden layers, affine only for the last layer.
Tensor mlp_forward(const MlpParams& p, const Tensor& z);

}  // namespace tamrl
