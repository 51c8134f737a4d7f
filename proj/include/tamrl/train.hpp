#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tamrl/loss.hpp"
#include "tamrl/model.hpp"

namespace tamrl {

struct Episode {
  std::string site_id;
  std::vector<int> support;  // window indices into the site task
  std::vector<int> query;
};

// Standard Adam with bias correction over a named parameter list.
class Adam {
 public:
  Adam(TensorMap params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // Applies one step from the parameters' current grads, then zeroes them.
  // Throws on non-finite gradients, naming the parameter.
  void step();

  long step_count() const { return step_; }
  const TensorMap& params() const { return params_; }

 private:
  TensorMap params_;
  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Scales all grads in place so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(const TensorMap& params, double max_norm);

struct TrainRunConfig {
  uint64_t seed = 0;
  int stage1_epochs = 8;
  int stage2_epochs = 150;
  int support_size = 3;
  int query_size = 4;
  double stage1_lr = 1e-3;
  double stage2_lr = 1e-3;
  double clip_norm = 5.0;
  int ensemble = 10;
};

using EpochLogger = std::function<void(const std::string& stage, int epoch, double mean_loss,
                                       double seconds)>;

// Uniform support draw without replacement; query is a random subset of the
// remaining windows. Throws ValidationError if the site is too small.
Episode sample_episode(const SiteTask& site, int support_size, int query_size,
                       std::mt19937_64& rng);

// Stage 1: decoder + heads only, identity modulation, window-level SGD over
// the shuffled training pool.
void pretrain_decoder(DecoderParams& dec, const std::vector<SiteTask>& train,
                      const LossConfig& loss_cfg, const TrainRunConfig& cfg, std::mt19937_64& rng,
                      const EpochLogger& log = nullptr);

// CT-LSTM baseline: same stage-1 loop on windows with the static one-hot
// appended to every timestep.
void train_ct_lstm(CtLstmModel& model, const std::vector<SiteTask>& train,
                   const LossConfig& loss_cfg, const TrainRunConfig& cfg, std::mt19937_64& rng,
                   const EpochLogger& log = nullptr);

// Stage 2: episodic training of encoder + generator + decoder + heads.
void joint_train(TamRlModel& model, const std::vector<SiteTask>& train, const LossConfig& loss_cfg,
                 const TrainRunConfig& cfg, std::mt19937_64& rng, const EpochLogger& log = nullptr);

struct EnsembleMember {
  uint64_t seed = 0;
  TamRlModel model;              // after both stages
  DecoderParams stage1_decoder;  // the TAMLSTM member (decoder-only, stage 1)
};

// Independent two-stage runs per seed. Seeds must be distinct.
std::vector<EnsembleMember> train_ensemble(const std::vector<SiteTask>& train,
                                           const TamRlConfig& model_cfg, const LossConfig& loss_cfg,
                                           const TrainRunConfig& cfg,
                                           const std::vector<uint64_t>& seeds,
                                           const EpochLogger& log = nullptr);

// Deterministic inference support: `count` windows evenly spaced over the
// site's history.
std::vector<TimeSeriesWindow> inference_support(const SiteTask& site, int count);

}  // namespace tamrl
