#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tamrl/errors.hpp"

namespace tamrl {

double rmse(const std::vector<double>& pred, const std::vector<double>& truth);

// 1 - SS_res/SS_tot; missing (nullopt) when truth is constant or n < 2.
std::optional<double> r2(const std::vector<double>& pred, const std::vector<double>& truth);

// (reference - candidate) / reference; positive means the candidate
// improves on the reference. reference must be > 0.
double relative_rmse(double reference, double candidate);

// One evaluation row: a single timestep of a single target at a site.
struct PredictionRow {
  std::string site_id;
  std::string date;    // ISO-8601
  std::string target;  // "gpp" | "nee"
  double pred = 0.0;
  double truth = 0.0;
  double qc = 1.0;
};

struct SiteMetrics {
  std::string site_id;
  std::string target;
  double rmse = 0.0;
  std::optional<double> r2;
  long n = 0;
  std::string igbp;
  std::string koppen;
};

// Predictions file schema: site_id,date,target,pred,truth,qc.
void save_predictions(const std::string& path, const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> load_predictions(const std::string& path);

struct SiteLabels {
  std::string site_id;
  std::string igbp;
  std::string koppen;
};

// Per-site metrics per target. strict_qc keeps only steps with qc == 1.
std::vector<SiteMetrics> site_metrics(const std::vector<PredictionRow>& rows,
                                      const std::vector<SiteLabels>& labels, bool strict_qc);

struct GroupRow {
  std::string group;   // class label, or "all"
  std::string target;
  double mean_rmse = 0.0;
  std::optional<double> sd_rmse;  // absent for single-site groups
  std::optional<double> mean_r2;
  long site_count = 0;
};

// Unweighted mean over sites within each group (each site counts once).
std::vector<GroupRow> aggregate(const std::vector<SiteMetrics>& metrics, const std::string& by);

// Pooled per-sample metrics across all rows of one target.
double pooled_rmse(const std::vector<PredictionRow>& rows, const std::string& target,
                   bool strict_qc);

void save_group_csv(const std::string& path, const std::vector<GroupRow>& rows);
void save_site_metrics_csv(const std::string& path, const std::vector<SiteMetrics>& metrics);

}  // namespace tamrl
