#pragma once

#include <map>
#include <string>
#include <vector>

#include "tamrl/model.hpp"

namespace tamrl {

struct LossConfig {
  double alpha = 0.1;  // flux-penalty coefficient
  std::map<std::string, double> w_igbp;
  std::map<std::string, double> w_koppen;
  // NEE = RECO - GPP when true (standard micrometeorological convention);
  // the opposite sign is one flag away.
  bool nee_equals_reco_minus_gpp = true;
};

struct SampleWeight {
  double w_qc = 1.0;
  double w_igbp = 1.0;
  double w_koppen = 1.0;
  double product = 1.0;
};

// w_c = N / (K * n_c); the count-weighted mean over the dataset is 1.
std::map<std::string, double> compute_class_weights(const std::vector<std::string>& labels);

// Identity mapping with range validation.
double qc_weight(double qc_flag);

SampleWeight sample_weight(double qc, const std::string& igbp, const std::string& koppen,
                           const LossConfig& cfg);

// Mean over timesteps of (nee - (reco - gpp))^2, on unclipped outputs.
Tensor flux_penalty(const std::vector<Tensor>& preds, const LossConfig& cfg = LossConfig());
double flux_penalty(const std::vector<FluxPrediction>& preds,
                    const LossConfig& cfg = LossConfig());

// Composite training loss: per-step squared errors on GPP and NEE averaged
// over the two heads, scaled by w_qc (per step) and w_igbp * w_koppen (per
// window), averaged over unmasked steps, plus alpha * flux_penalty over the
// same steps. Masked steps contribute zero everywhere.
Tensor composite_loss(const std::vector<Tensor>& preds, const std::vector<double>& gpp_target,
                      const std::vector<double>& nee_target, const std::vector<double>& qc,
                      const std::vector<bool>& mask, const std::string& igbp,
                      const std::string& koppen, const LossConfig& cfg);

Tensor composite_loss(const std::vector<Tensor>& preds, const TimeSeriesWindow& window,
                      const LossConfig& cfg);

// Class-weight tables as a plain text key=value artifact.
void save_class_weights(const std::string& path, const LossConfig& cfg);
LossConfig load_class_weights(const std::string& path, LossConfig base = LossConfig());

}  // namespace tamrl
