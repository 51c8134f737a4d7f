#include "tamrl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace tamrl {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.empty() || pred.size() != truth.size()) {
    throw ValidationError("rmse requires equal nonzero lengths");
  }
  double acc = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - truth[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

std::optional<double> r2(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size()) throw ValidationError("r2 requires equal lengths");
  if (pred.size() < 2) return std::nullopt;
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    double r = pred[i] - truth[i];
    double d = truth[i] - mean;
    ss_res += r * r;
    ss_tot += d * d;
  }
  if (ss_tot == 0.0) return std::nullopt;  // constant truth: undefined, not 0
  return 1.0 - ss_res / ss_tot;
}

double relative_rmse(double reference, double candidate) {
  if (reference <= 0.0) throw ValidationError("relative_rmse requires a positive reference");
  return (reference - candidate) / reference;
}

void save_predictions(const std::string& path, const std::vector<PredictionRow>& rows) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot open for writing: " + path);
  os << "site_id,date,target,pred,truth,qc\n";
  for (const PredictionRow& r : rows) {
    os << r.site_id << ',' << r.date << ',' << r.target << ',' << fmt(r.pred) << ','
       << fmt(r.truth) << ',' << fmt(r.qc) << '\n';
  }
}

std::vector<PredictionRow> load_predictions(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open predictions file: " + path);
  std::string line;
  if (!std::getline(is, line) || line != "site_id,date,target,pred,truth,qc") {
    throw ValidationError("bad predictions header in " + path);
  }
  std::vector<PredictionRow> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    PredictionRow r;
    std::string pred, truth, qc;
    if (!std::getline(ss, r.site_id, ',') || !std::getline(ss, r.date, ',') ||
        !std::getline(ss, r.target, ',') || !std::getline(ss, pred, ',') ||
        !std::getline(ss, truth, ',') || !std::getline(ss, qc, ',')) {
      throw ValidationError("bad predictions row " + std::to_string(lineno) + " in " + path);
    }
    r.pred = std::stod(pred);
    r.truth = std::stod(truth);
    r.qc = std::stod(qc);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<SiteMetrics> site_metrics(const std::vector<PredictionRow>& rows,
                                      const std::vector<SiteLabels>& labels, bool strict_qc) {
  if (rows.empty()) throw ValidationError("site_metrics on empty predictions");
  std::map<std::string, SiteLabels> label_index;
  for (const SiteLabels& l : labels) label_index[l.site_id] = l;

  // (site, target) -> paired samples, in first-appearance order.
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>>
      samples;
  for (const PredictionRow& r : rows) {
    if (strict_qc && r.qc != 1.0) continue;
    auto key = std::make_pair(r.site_id, r.target);
    if (samples.find(key) == samples.end()) order.push_back(key);
    samples[key].first.push_back(r.pred);
    samples[key].second.push_back(r.truth);
  }

  std::vector<SiteMetrics> out;
  for (const auto& key : order) {
    const auto& [pred, truth] = samples[key];
    SiteMetrics m;
    m.site_id = key.first;
    m.target = key.second;
    m.rmse = rmse(pred, truth);
    m.r2 = r2(pred, truth);
    m.n = static_cast<long>(pred.size());
    auto it = label_index.find(m.site_id);
    if (it == label_index.end()) {
      throw ValidationError("no labels for site " + m.site_id);
    }
    m.igbp = it->second.igbp;
    m.koppen = it->second.koppen;
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<GroupRow> aggregate(const std::vector<SiteMetrics>& metrics, const std::string& by) {
  if (metrics.empty()) throw ValidationError("aggregate on empty metrics");
  if (by != "igbp" && by != "koppen" && by != "all") {
    throw ValidationError("unknown grouping key: " + by);
  }
  std::map<std::pair<std::string, std::string>, std::vector<const SiteMetrics*>> groups;
  for (const SiteMetrics& m : metrics) {
    std::string g = by == "all" ? "all" : (by == "igbp" ? m.igbp : m.koppen);
    groups[{g, m.target}].push_back(&m);
  }
  std::vector<GroupRow> out;
  for (const auto& [key, members] : groups) {
    GroupRow row;
    row.group = key.first;
    row.target = key.second;
    row.site_count = static_cast<long>(members.size());
    double sum = 0.0;
    for (const SiteMetrics* m : members) sum += m->rmse;
    row.mean_rmse = sum / static_cast<double>(members.size());
    if (members.size() > 1) {
      double sq = 0.0;
      for (const SiteMetrics* m : members) {
        double d = m->rmse - row.mean_rmse;
        sq += d * d;
      }
      // Sample standard deviation across sites within the group.
      row.sd_rmse = std::sqrt(sq / static_cast<double>(members.size() - 1));
    }
    double r2_sum = 0.0;
    long r2_n = 0;
    for (const SiteMetrics* m : members) {
      if (m->r2) {
        r2_sum += *m->r2;
        ++r2_n;
      }
    }
    if (r2_n > 0) row.mean_r2 = r2_sum / static_cast<double>(r2_n);
    out.push_back(std::move(row));
  }
  return out;
}

double pooled_rmse(const std::vector<PredictionRow>& rows, const std::string& target,
                   bool strict_qc) {
  std::vector<double> pred, truth;
  for (const PredictionRow& r : rows) {
    if (r.target != target) continue;
    if (strict_qc && r.qc != 1.0) continue;
    pred.push_back(r.pred);
    truth.push_back(r.truth);
  }
  return rmse(pred, truth);
}

void save_group_csv(const std::string& path, const std::vector<GroupRow>& rows) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot open for writing: " + path);
  os << "group,target,mean_rmse,sd_rmse,mean_r2,site_count\n";
  for (const GroupRow& r : rows) {
    os << r.group << ',' << r.target << ',' << fmt(r.mean_rmse) << ','
       << (r.sd_rmse ? fmt(*r.sd_rmse) : "") << ',' << (r.mean_r2 ? fmt(*r.mean_r2) : "") << ','
       << r.site_count << '\n';
  }
}

void save_site_metrics_csv(const std::string& path, const std::vector<SiteMetrics>& metrics) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot open for writing: " + path);
  os << "site_id,target,rmse,r2,n,igbp,koppen\n";
  for (const SiteMetrics& m : metrics) {
    os << m.site_id << ',' << m.target << ',' << fmt(m.rmse) << ',' << (m.r2 ? fmt(*m.r2) : "")
       << ',' << m.n << ',' << m.igbp << ',' << m.koppen << '\n';
  }
}

}  // namespace tamrl
