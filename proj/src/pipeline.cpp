#include "tamrl/pipeline.hpp"

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

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

}  // namespace

AppConfig load_app_config(const std::string& path, AppConfig base) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(lineno) + " is not key=value: " + line);
    }
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    try {
      if (key == "decoder_hidden") base.model.decoder_hidden = std::stoi(val);
      else if (key == "encoder_hidden") base.model.encoder_hidden = std::stoi(val);
      else if (key == "embed_dim") base.model.embed_dim = std::stoi(val);
      else if (key == "generator_hidden") base.model.generator_hidden = parse_ints(val);
      else if (key == "stage1_epochs") base.train.stage1_epochs = std::stoi(val);
      else if (key == "stage2_epochs") base.train.stage2_epochs = std::stoi(val);
      else if (key == "support_size") base.train.support_size = std::stoi(val);
      else if (key == "query_size") base.train.query_size = std::stoi(val);
      else if (key == "stage1_lr") base.train.stage1_lr = std::stod(val);
      else if (key == "stage2_lr") base.train.stage2_lr = std::stod(val);
      else if (key == "clip_norm") base.train.clip_norm = std::stod(val);
      else if (key == "ensemble") base.train.ensemble = std::stoi(val);
      else if (key == "alpha") base.alpha = std::stod(val);
      else if (key == "holdout_fraction") base.holdout_fraction = std::stod(val);
      else if (key == "strict_qc") base.strict_qc = (std::stoi(val) != 0);
      else if (key == "stratify_split") base.stratify_split = (std::stoi(val) != 0);
      else if (key == "nee_equals_reco_minus_gpp") base.nee_equals_reco_minus_gpp = (std::stoi(val) != 0);
      else if (key == "synth_sites") base.synth_sites = std::stoi(val);
      else if (key == "synth_days") base.synth_days = std::stoi(val);
      else if (key == "synth_noise_min") base.synth_noise_min = std::stod(val);
      else if (key == "synth_noise_max") base.synth_noise_max = std::stod(val);
      else if (key == "synth_missing_prob") base.synth_missing_prob = std::stod(val);
      else if (key == "seed") base.seed = std::stoull(val);
      else throw ValidationError("unknown config key: " + key);
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception&) {
      throw ValidationError("bad value for config key " + key + ": " + val);
    }
  }
  if (base.train.ensemble < 1) throw ValidationError("ensemble must be >= 1");
  if (base.alpha < 0.0) throw ValidationError("alpha must be >= 0");
  return base;
}

void save_app_config(const std::string& path, const AppConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot open for writing: " + path);
  os << "decoder_hidden=" << cfg.model.decoder_hidden << '\n'
     << "encoder_hidden=" << cfg.model.encoder_hidden << '\n'
     << "embed_dim=" << cfg.model.embed_dim << '\n'
     << "generator_hidden=" << join_ints(cfg.model.generator_hidden) << '\n'
     << "stage1_epochs=" << cfg.train.stage1_epochs << '\n'
     << "stage2_epochs=" << cfg.train.stage2_epochs << '\n'
     << "support_size=" << cfg.train.support_size << '\n'
     << "query_size=" << cfg.train.query_size << '\n'
     << "stage1_lr=" << fmt(cfg.train.stage1_lr) << '\n'
     << "stage2_lr=" << fmt(cfg.train.stage2_lr) << '\n'
     << "clip_norm=" << fmt(cfg.train.clip_norm) << '\n'
     << "ensemble=" << cfg.train.ensemble << '\n'
     << "alpha=" << fmt(cfg.alpha) << '\n'
     << "holdout_fraction=" << fmt(cfg.holdout_fraction) << '\n'
     << "strict_qc=" << (cfg.strict_qc ? 1 : 0) << '\n'
     << "stratify_split=" << (cfg.stratify_split ? 1 : 0) << '\n'
     << "nee_equals_reco_minus_gpp=" << (cfg.nee_equals_reco_minus_gpp ? 1 : 0) << '\n'
     << "synth_sites=" << cfg.synth_sites << '\n'
     << "synth_days=" << cfg.synth_days << '\n'
     << "synth_noise_min=" << fmt(cfg.synth_noise_min) << '\n'
     << "synth_noise_max=" << fmt(cfg.synth_noise_max) << '\n'
     << "synth_missing_prob=" << fmt(cfg.synth_missing_prob) << '\n'
     << "seed=" << cfg.seed << '\n';
}

PreparedData prepare_dataset(const std::vector<SiteRecord>& records, const AppConfig& cfg,
                             uint64_t split_seed) {
  std::vector<SiteTask> all = build_tasks(records);
  std::mt19937_64 rng(split_seed);
  // Split on site identity first so normalization never sees held-out data.
  std::map<std::string, bool> held;
  {
    auto [train_tasks, holdout_tasks] =
        split_sites(all, cfg.holdout_fraction, rng, cfg.stratify_split);
    for (const SiteTask& t : holdout_tasks) held[t.site_id] = true;
  }
  std::vector<SiteRecord> train_records;
  for (const SiteRecord& r : records) {
    if (!held.count(r.site_id)) train_records.push_back(r);
  }

  PreparedData out;
  out.stats = fit_normalize(train_records);
  std::vector<SiteRecord> normalized = records;
  apply_normalize(out.stats, normalized);
  for (SiteTask& t : build_tasks(normalized)) {
    (held.count(t.site_id) ? out.holdout : out.train).push_back(std::move(t));
  }

  // Windows are the loss unit; class weights come from training window counts.
  std::vector<std::string> igbp_labels, koppen_labels;
  for (const SiteTask& t : out.train) {
    for (size_t i = 0; i < t.windows.size(); ++i) {
      igbp_labels.push_back(t.igbp);
      koppen_labels.push_back(t.koppen);
    }
  }
  out.loss_cfg.alpha = cfg.alpha;
  out.loss_cfg.nee_equals_reco_minus_gpp = cfg.nee_equals_reco_minus_gpp;
  out.loss_cfg.w_igbp = compute_class_weights(igbp_labels);
  out.loss_cfg.w_koppen = compute_class_weights(koppen_labels);
  return out;
}

InferenceOutput run_inference(const std::vector<SiteTask>& sites, const RawFn& raw_fn,
                              bool nee_equals_reco_minus_gpp) {
  InferenceOutput out;
  double residual_sum = 0.0;
  long residual_n = 0;
  for (const SiteTask& site : sites) {
    for (const TimeSeriesWindow& w : site.windows) {
      std::vector<std::array<double, 3>> raw = raw_fn(site, w);
      std::vector<FluxPrediction> preds = clip_predictions(raw);
      for (size_t t = 0; t < preds.size(); ++t) {
        const FluxPrediction& p = preds[t];
        if (p.gpp < 0.0 || p.reco < 0.0) ++out.clipped_violations;
        if (p.nee < 0.0) ++out.negative_nee_count;
        double balance = nee_equals_reco_minus_gpp ? p.reco - p.gpp : p.gpp - p.reco;
        residual_sum += std::fabs(p.nee - balance);
        ++residual_n;
        if (!w.mask[t]) continue;
        std::string date = format_iso_date(w.start_date + static_cast<int64_t>(t));
        out.rows.push_back({site.site_id, date, "gpp", p.gpp, w.gpp[t], w.qc[t]});
        out.rows.push_back({site.site_id, date, "nee", p.nee, w.nee[t], w.qc[t]});
      }
    }
  }
  out.mean_flux_residual = residual_n > 0 ? residual_sum / static_cast<double>(residual_n) : 0.0;
  return out;
}

RawFn ensemble_raw(std::vector<RawFn> members) {
  if (members.empty()) throw ValidationError("ensemble_raw with no members");
  return [members = std::move(members)](const SiteTask& site, const TimeSeriesWindow& w) {
    std::vector<std::array<double, 3>> acc = members[0](site, w);
    for (size_t m = 1; m < members.size(); ++m) {
      std::vector<std::array<double, 3>> r = members[m](site, w);
      for (size_t t = 0; t < acc.size(); ++t)
        for (int j = 0; j < 3; ++j) acc[t][j] += r[t][j];
    }
    double inv = 1.0 / static_cast<double>(members.size());
    for (auto& a : acc)
      for (int j = 0; j < 3; ++j) a[j] *= inv;
    return acc;
  };
}

RawFn tamrl_raw_fn(const TamRlModel& model, int support_size) {
  return [&model, support_size](const SiteTask& site, const TimeSeriesWindow& w) {
    return zero_shot_raw(model, inference_support(site, support_size), w);
  };
}

RawFn tamlstm_raw_fn(const DecoderParams& decoder) {
  return [&decoder](const SiteTask&, const TimeSeriesWindow& w) { return tamlstm_raw(decoder, w); };
}

RawFn ct_lstm_raw_fn(const CtLstmModel& model) {
  return [&model](const SiteTask&, const TimeSeriesWindow& w) { return ct_lstm_raw(model, w); };
}

std::vector<SiteLabels> task_labels(const std::vector<SiteTask>& tasks) {
  std::vector<SiteLabels> out;
  for (const SiteTask& t : tasks) out.push_back({t.site_id, t.igbp, t.koppen});
  return out;
}

double mean_site_rmse(const std::vector<PredictionRow>& rows,
                      const std::vector<SiteLabels>& labels, const std::string& target,
                      bool strict_qc) {
  std::vector<SiteMetrics> metrics = site_metrics(rows, labels, strict_qc);
  double sum = 0.0;
  long n = 0;
  for (const SiteMetrics& m : metrics) {
    if (m.target != target) continue;
    sum += m.rmse;
    ++n;
  }
  if (n == 0) throw ValidationError("no sites with target " + target);
  return sum / static_cast<double>(n);
}

}  // namespace tamrl
