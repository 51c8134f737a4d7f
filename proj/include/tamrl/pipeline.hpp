#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "tamrl/data.hpp"
#include "tamrl/loss.hpp"
#include "tamrl/metrics.hpp"
#include "tamrl/model.hpp"
#include "tamrl/train.hpp"

namespace tamrl {

// Key=value configuration file mirroring every *Config type.
struct AppConfig {
  TamRlConfig model;
  TrainRunConfig train;
  double alpha = 0.1;
  double holdout_fraction = 0.25;
  bool strict_qc = false;
  bool stratify_split = false;
  bool nee_equals_reco_minus_gpp = true;
  int synth_sites = 32;
  int synth_days = 400;
  double synth_noise_min = 0.1;
  double synth_noise_max = 0.4;
  double synth_missing_prob = 0.01;
  uint64_t seed = 7;
};

AppConfig load_app_config(const std::string& path, AppConfig base = AppConfig());
void save_app_config(const std::string& path, const AppConfig& cfg);

struct PreparedData {
  std::vector<SiteTask> train;
  std::vector<SiteTask> holdout;
  NormStats stats;      // fitted on training sites only
  LossConfig loss_cfg;  // class weights from training-split window counts
};

// Site-level split, leakage-guarded normalization, class-weight tables.
PreparedData prepare_dataset(const std::vector<SiteRecord>& records, const AppConfig& cfg,
                             uint64_t split_seed);

using RawFn = std::function<std::vector<std::array<double, 3>>(const SiteTask&,
                                                               const TimeSeriesWindow&)>;

struct InferenceOutput {
  std::vector<PredictionRow> rows;  // gpp + nee rows for unmasked steps
  double mean_flux_residual = 0.0;  // |nee - (reco - gpp)| on clipped outputs
  long clipped_violations = 0;      // emitted gpp/reco values below zero
  long negative_nee_count = 0;
};

InferenceOutput run_inference(const std::vector<SiteTask>& sites, const RawFn& raw_fn,
                              bool nee_equals_reco_minus_gpp = true);

// Elementwise mean of member outputs before clipping.
RawFn ensemble_raw(std::vector<RawFn> members);

RawFn tamrl_raw_fn(const TamRlModel& model, int support_size);
RawFn tamlstm_raw_fn(const DecoderParams& decoder);
RawFn ct_lstm_raw_fn(const CtLstmModel& model);

std::vector<SiteLabels> task_labels(const std::vector<SiteTask>& tasks);

// Across-site mean RMSE for one target ("all" aggregation convention).
double mean_site_rmse(const std::vector<PredictionRow>& rows,
                      const std::vector<SiteLabels>& labels, const std::string& target,
                      bool strict_qc);

}  // namespace tamrl
