#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tamrl/errors.hpp"

namespace tamrl {

// One daily record of one site. `date` is a serial day number (days since
// 1970-01-01) so gap detection is plain integer arithmetic.
struct SiteRecord {
  std::string site_id;
  int64_t date = 0;
  std::vector<double> drivers;
  std::optional<double> gpp;
  std::optional<double> nee;
  double qc = 1.0;
  std::string igbp;
  std::string koppen;
};

// One 45-step training/inference window. Drivers are normalized; steps with
// a missing target carry mask=false and contribute zero to any loss.
struct TimeSeriesWindow {
  std::string site_id;
  int64_t start_date = 0;
  std::vector<std::vector<double>> drivers;  // T x D
  std::vector<double> gpp;                   // T, value meaningless where !mask
  std::vector<double> nee;
  std::vector<double> qc;
  std::vector<bool> mask;
  std::string igbp;
  std::string koppen;

  int length() const { return static_cast<int>(drivers.size()); }
  int driver_dim() const { return drivers.empty() ? 0 : static_cast<int>(drivers[0].size()); }
};

// All windows of one site; the unit of episodic sampling and of the
// train/held-out split.
struct SiteTask {
  std::string site_id;
  std::string igbp;
  std::string koppen;
  std::vector<TimeSeriesWindow> windows;
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> sd;  // degenerate features coerced to 1 with a warning
};

// Latent generator parameters of one synthetic site.
struct SynthSiteParams {
  double lue = 0.0;       // light-use efficiency
  double rb = 0.0;        // base respiration, > 0
  double q10 = 0.0;       // > 1
  double t_opt = 0.0;     // deg C
  double noise_sd = 0.0;  // >= 0
};

struct SynthSite {
  std::vector<SiteRecord> records;
  SynthSiteParams params;
  std::vector<double> reco_true;  // ground-truth respiration per record
};

struct SynthOptions {
  double noise_sd_min = 0.1;
  double noise_sd_max = 0.4;
  double missing_prob = 0.01;  // per-day chance of a missing target pair
};

int64_t parse_iso_date(const std::string& s);  // YYYY-MM-DD -> serial day
std::string format_iso_date(int64_t serial_day);

// CSV schema (exact header):
//   site_id,date,driver_1..driver_D,gpp,nee,qc,igbp,koppen
// Missing values are empty fields. Rows must be date-sorted per site.
std::vector<SiteRecord> load_site_csv(const std::string& path);
void save_site_csv(const std::string& path, const std::vector<SiteRecord>& records);

NormStats fit_normalize(const std::vector<SiteRecord>& train_records);
void apply_normalize(const NormStats& stats, std::vector<SiteRecord>& records);

void save_norm_stats(const std::string& path, const NormStats& stats);
NormStats load_norm_stats(const std::string& path);

// Splits one site's records into windows at offsets 0, 15, 30, ... per
// contiguous date segment. Records must belong to one site.
std::vector<TimeSeriesWindow> window_sequences(const std::vector<SiteRecord>& records,
                                               int window = 45, int stride = 15);

// Groups records by site and windows each; records may hold many sites.
std::vector<SiteTask> build_tasks(const std::vector<SiteRecord>& records, int window = 45,
                                  int stride = 15);

std::vector<SynthSite> synth_generate(int n_sites, int days, std::mt19937_64& rng,
                                      const SynthOptions& opt = SynthOptions());

std::vector<SiteRecord> flatten_records(const std::vector<SynthSite>& sites);

// Sidecar of true per-site latent parameters, for oracle checks.
void save_synth_params(const std::string& path, const std::vector<SynthSite>& sites);

// Site-level partition; no site contributes windows to both sides.
std::pair<std::vector<SiteTask>, std::vector<SiteTask>> split_sites(
    const std::vector<SiteTask>& tasks, double holdout_fraction, std::mt19937_64& rng,
    bool stratify_by_igbp = false);

}  // namespace tamrl
