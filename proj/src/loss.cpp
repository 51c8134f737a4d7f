#include "tamrl/loss.hpp"

#include <cstdio>
#include <fstream>

namespace tamrl {
namespace {

double table_weight(const std::map<std::string, double>& table, const std::string& label,
                    const char* kind) {
  if (table.empty()) return 1.0;  // no table configured: unweighted
  auto it = table.find(label);
  if (it == table.end()) {
    throw ValidationError(std::string("unknown ") + kind + " label: " + label);
  }
  return it->second;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::map<std::string, double> compute_class_weights(const std::vector<std::string>& labels) {
  if (labels.empty()) throw ValidationError("compute_class_weights on empty label list");
  std::map<std::string, long> counts;
  for (const std::string& l : labels) ++counts[l];
  double n = static_cast<double>(labels.size());
  double k = static_cast<double>(counts.size());
  std::map<std::string, double> out;
  for (const auto& [label, c] : counts) out[label] = n / (k * static_cast<double>(c));
  return out;
}

double qc_weight(double qc_flag) {
  if (qc_flag < 0.0 || qc_flag > 1.0) {
    throw ValidationError("qc flag " + fmt(qc_flag) + " outside [0,1]");
  }
  return qc_flag;
}

SampleWeight sample_weight(double qc, const std::string& igbp, const std::string& koppen,
                           const LossConfig& cfg) {
  SampleWeight w;
  w.w_qc = qc_weight(qc);
  w.w_igbp = table_weight(cfg.w_igbp, igbp, "IGBP");
  w.w_koppen = table_weight(cfg.w_koppen, koppen, "Koppen");
  w.product = w.w_qc * w.w_igbp * w.w_koppen;
  return w;
}

Tensor flux_penalty(const std::vector<Tensor>& preds, const LossConfig& cfg) {
  if (preds.empty()) throw ValidationError("flux_penalty on empty prediction sequence");
  Tensor acc;
  for (const Tensor& p : preds) {
    Tensor gpp = slice(p, 0, 1);
    Tensor reco = slice(p, 1, 2);
    Tensor nee = slice(p, 2, 3);
    Tensor balance = cfg.nee_equals_reco_minus_gpp ? sub(reco, gpp) : sub(gpp, reco);
    Tensor r = sub(nee, balance);
    Tensor sq = mul(r, r);
    acc = acc.defined() ? add(acc, sq) : sq;
  }
  return mul_scalar(acc, 1.0 / static_cast<double>(preds.size()));
}

double flux_penalty(const std::vector<FluxPrediction>& preds, const LossConfig& cfg) {
  if (preds.empty()) throw ValidationError("flux_penalty on empty prediction sequence");
  double acc = 0.0;
  for (const FluxPrediction& p : preds) {
    double balance = cfg.nee_equals_reco_minus_gpp ? p.reco - p.gpp : p.gpp - p.reco;
    double r = p.nee - balance;
    acc += r * r;
  }
  return acc / static_cast<double>(preds.size());
}

Tensor composite_loss(const std::vector<Tensor>& preds, const std::vector<double>& gpp_target,
                      const std::vector<double>& nee_target, const std::vector<double>& qc,
                      const std::vector<bool>& mask, const std::string& igbp,
                      const std::string& koppen, const LossConfig& cfg) {
  size_t n = preds.size();
  if (gpp_target.size() != n || nee_target.size() != n || qc.size() != n || mask.size() != n) {
    throw ValidationError("composite_loss length mismatch");
  }
  if (n == 0) throw ValidationError("composite_loss on empty sequence");
  double w_class =
      table_weight(cfg.w_igbp, igbp, "IGBP") * table_weight(cfg.w_koppen, koppen, "Koppen");

  std::vector<Tensor> valid_preds;
  Tensor data_acc;
  int n_valid = 0;
  for (size_t t = 0; t < n; ++t) {
    double wq = qc_weight(qc[t]);
    if (!mask[t]) continue;
    ++n_valid;
    const Tensor& p = preds[t];
    valid_preds.push_back(p);
    Tensor gpp_err = sub(slice(p, 0, 1), Tensor::scalar(gpp_target[t]));
    Tensor nee_err = sub(slice(p, 2, 3), Tensor::scalar(nee_target[t]));
    // MSE averaged over the two supervised heads; RECO has no data term.
    Tensor mse = mul_scalar(add(mul(gpp_err, gpp_err), mul(nee_err, nee_err)), 0.5);
    Tensor weighted = mul_scalar(mse, wq * w_class);
    data_acc = data_acc.defined() ? add(data_acc, weighted) : weighted;
  }
  if (n_valid == 0) return Tensor::scalar(0.0);
  Tensor data_term = mul_scalar(data_acc, 1.0 / static_cast<double>(n_valid));
  Tensor penalty = flux_penalty(valid_preds, cfg);
  return add(data_term, mul_scalar(penalty, cfg.alpha));
}

Tensor composite_loss(const std::vector<Tensor>& preds, const TimeSeriesWindow& window,
                      const LossConfig& cfg) {
  return composite_loss(preds, window.gpp, window.nee, window.qc, window.mask, window.igbp,
                        window.koppen, cfg);
}

void save_class_weights(const std::string& path, const LossConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot open for writing: " + path);
  os << "alpha=" << fmt(cfg.alpha) << '\n';
  os << "nee_equals_reco_minus_gpp=" << (cfg.nee_equals_reco_minus_gpp ? 1 : 0) << '\n';
  for (const auto& [label, w] : cfg.w_igbp) os << "igbp." << label << '=' << fmt(w) << '\n';
  for (const auto& [label, w] : cfg.w_koppen) os << "koppen." << label << '=' << fmt(w) << '\n';
}

LossConfig load_class_weights(const std::string& path, LossConfig base) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open class weights: " + path);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("bad class-weight line: " + line);
    std::string key = line.substr(0, eq);
    double val = std::stod(line.substr(eq + 1));
    if (key == "alpha") {
      base.alpha = val;
    } else if (key == "nee_equals_reco_minus_gpp") {
      base.nee_equals_reco_minus_gpp = (val != 0.0);
    } else if (key.rfind("igbp.", 0) == 0) {
      base.w_igbp[key.substr(5)] = val;
    } else if (key.rfind("koppen.", 0) == 0) {
      base.w_koppen[key.substr(7)] = val;
    } else {
      throw ValidationError("unknown class-weight key: " + key);
    }
  }
  return base;
}

}  // namespace tamrl
