#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "tamrl/checkpoint.hpp"
#include "tamrl/data.hpp"
#include "tamrl/nets.hpp"

namespace tamrl {

struct TamRlConfig {
  int driver_dim = 4;
  int decoder_hidden = 32;
  int encoder_hidden = 32;  // per direction
  int embed_dim = 32;
  std::vector<int> generator_hidden = {64};

  // The encoder consumes each support step's drivers with the observed
  // (gpp, nee) pair appended, so support sets carry target information.
  int encoder_input_dim() const { return driver_dim + 2; }
  int generator_output_dim() const { return 2 * driver_dim + 2 * decoder_hidden; }
};

struct TaskEmbedding {
  Tensor z;  // [E]
  std::string source_site;
  int support_count = 0;
};

// FiLM parameter quadruple. gamma widths match the decoder input width D,
// beta2/gamma2 the decoder hidden width H.
struct ModulationParams {
  Tensor gamma1, beta1;  // [D]
  Tensor gamma2, beta2;  // [H]
};

struct FluxPrediction {
  double gpp = 0.0;
  double reco = 0.0;
  double nee = 0.0;
  bool gpp_clipped = false;
  bool reco_clipped = false;
};

// LSTM decoder plus three affine flux heads (rows: gpp, reco, nee).
struct DecoderParams {
  LstmParams lstm;
  Tensor head_weights;  // [3 x H]
  Tensor head_biases;   // [3]
};

struct EncoderParams {
  LstmParams fwd;
  LstmParams bwd;
  Tensor proj_weights;  // [E x 2*encoder_hidden]
  Tensor proj_biases;   // [E]
};

struct TamRlModel {
  TamRlConfig cfg;
  EncoderParams encoder;
  MlpParams generator;
  DecoderParams decoder;
};

// One-hot vocabularies for the CT-LSTM static input, IGBP block first.
struct LabelVocab {
  std::vector<std::string> igbp;
  std::vector<std::string> koppen;

  int width() const { return static_cast<int>(igbp.size() + koppen.size()); }
  std::vector<double> onehot(const std::string& igbp_label, const std::string& koppen_label) const;
};

LabelVocab build_vocab(const std::vector<SiteTask>& tasks);

struct CtLstmModel {
  TamRlConfig cfg;
  LabelVocab vocab;
  DecoderParams decoder;  // LSTM input width = driver_dim + vocab.width()
};

DecoderParams decoder_init(const TamRlConfig& cfg, std::mt19937_64& rng, int extra_input = 0);
EncoderParams encoder_init(const TamRlConfig& cfg, std::mt19937_64& rng);
// Generator weights start at zero so the initial modulation is the identity.
MlpParams generator_init(const TamRlConfig& cfg, std::mt19937_64& rng);
TamRlModel tamrl_init(const TamRlConfig& cfg, std::mt19937_64& rng);

ModulationParams identity_modulation(int driver_dim, int hidden);

Tensor apply_film(const Tensor& x, const Tensor& gamma, const Tensor& beta);

TaskEmbedding encode_task(const EncoderParams& enc, const TamRlConfig& cfg,
                          const std::vector<TimeSeriesWindow>& support);

// Generator output split as [g1_raw | b1 | g2_raw | b2]; gammas are 1 + raw
// so a zero generator yields identity FiLM.
ModulationParams generate_modulation(const MlpParams& gen, const Tensor& z, int driver_dim,
                                     int hidden);

// Training path: no clipping. One [3] tensor (gpp, reco, nee) per timestep.
std::vector<Tensor> forward_decode(const DecoderParams& dec, const ModulationParams& mod,
                                   const TimeSeriesWindow& window);

// Raw (unclipped) numeric outputs, no gradient recording.
std::vector<std::array<double, 3>> decode_raw(const DecoderParams& dec, const ModulationParams& mod,
                                              const TimeSeriesWindow& window);

std::vector<FluxPrediction> clip_predictions(const std::vector<std::array<double, 3>>& raw);

std::vector<FluxPrediction> predict_zero_shot(const TamRlModel& model,
                                              const std::vector<TimeSeriesWindow>& support,
                                              const TimeSeriesWindow& window);
std::vector<std::array<double, 3>> zero_shot_raw(const TamRlModel& model,
                                                 const std::vector<TimeSeriesWindow>& support,
                                                 const TimeSeriesWindow& window);

std::vector<FluxPrediction> predict_tamlstm(const DecoderParams& dec,
                                            const TimeSeriesWindow& window);
std::vector<std::array<double, 3>> tamlstm_raw(const DecoderParams& dec,
                                               const TimeSeriesWindow& window);

std::vector<FluxPrediction> predict_ct_lstm(const CtLstmModel& model,
                                            const TimeSeriesWindow& window);
std::vector<std::array<double, 3>> ct_lstm_raw(const CtLstmModel& model,
                                               const TimeSeriesWindow& window);

// Named parameter registries (checkpoint key namespaces encoder/, generator/,
// decoder/, heads/).
TensorMap decoder_params(const DecoderParams& d, const std::string& prefix = "");
TensorMap model_params(const TamRlModel& m);
TensorMap ct_lstm_params(const CtLstmModel& m);

}  // namespace tamrl
