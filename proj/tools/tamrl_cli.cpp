// Command-line front end: synth -> pretrain -> train -> infer -> eval/report.
// All artifacts live in one working directory (--out) so each stage can pick
// up where the previous one stopped.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tamrl/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tamrl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitRuntime = 4;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct GlobalOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::string data_path;  // defaults to <out>/data.csv
  uint64_t seed = 0;
  bool seed_set = false;
  bool strict_qc = false;
};

std::string data_file(const GlobalOpts& g) {
  return g.data_path.empty() ? g.out_dir + "/data.csv" : g.data_path;
}

AppConfig resolve_config(const GlobalOpts& g) {
  AppConfig cfg;
  if (!g.config_path.empty()) cfg = load_app_config(g.config_path);
  if (g.seed_set) cfg.seed = g.seed;
  if (g.strict_qc) cfg.strict_qc = true;
  return cfg;
}

// Stage artifacts written by pretrain and consumed downstream.
std::string cfg_file(const GlobalOpts& g) { return g.out_dir + "/config.txt"; }
std::string norm_file(const GlobalOpts& g) { return g.out_dir + "/norm_stats.txt"; }
std::string weights_file(const GlobalOpts& g) { return g.out_dir + "/class_weights.txt"; }
std::string split_file(const GlobalOpts& g) { return g.out_dir + "/split.csv"; }
std::string vocab_file(const GlobalOpts& g) { return g.out_dir + "/vocab.txt"; }

std::string member_ckpt(const GlobalOpts& g, const std::string& stem, int member) {
  return g.out_dir + "/" + stem + "_m" + std::to_string(member) + ".ckpt";
}

// Derived per-member seeds: one stream per stage so the stages stay
// reproducible when run as separate processes.
uint64_t member_seed(uint64_t base, int member, int stage) {
  return base * 1000003ULL + static_cast<uint64_t>(member) * 101ULL + static_cast<uint64_t>(stage);
}

void require_artifact(const std::string& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw ValidationError("missing " + path + "; run `" + producer + "` first");
  }
}

void save_split(const std::string& path, const PreparedData& prep) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot open for writing: " + path);
  os << "site_id,role\n";
  for (const SiteTask& t : prep.train) os << t.site_id << ",train\n";
  for (const SiteTask& t : prep.holdout) os << t.site_id << ",holdout\n";
}

std::map<std::string, std::string> load_split(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open split file: " + path);
  std::string line;
  std::getline(is, line);
  if (line != "site_id,role") throw ValidationError("bad split file header: " + line);
  std::map<std::string, std::string> roles;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    size_t comma = line.rfind(',');
    if (comma == std::string::npos) throw ValidationError("bad split line: " + line);
    roles[line.substr(0, comma)] = line.substr(comma + 1);
  }
  if (roles.empty()) throw ValidationError("split file lists no sites: " + path);
  return roles;
}

void save_vocab(const std::string& path, const LabelVocab& vocab) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot open for writing: " + path);
  for (const std::string& l : vocab.igbp) os << "igbp=" << l << '\n';
  for (const std::string& l : vocab.koppen) os << "koppen=" << l << '\n';
}

LabelVocab load_vocab(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open vocab file: " + path);
  LabelVocab vocab;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("igbp=", 0) == 0) vocab.igbp.push_back(line.substr(5));
    else if (line.rfind("koppen=", 0) == 0) vocab.koppen.push_back(line.substr(7));
    else throw ValidationError("bad vocab line: " + line);
  }
  if (vocab.width() == 0) throw ValidationError("empty vocab file: " + path);
  return vocab;
}

// Reloads the dataset exactly as training saw it: saved normalization stats
// applied to all records, then the saved site-role split.
struct ReloadedData {
  std::vector<SiteTask> train;
  std::vector<SiteTask> holdout;
};

ReloadedData reload_dataset(const GlobalOpts& g) {
  require_artifact(norm_file(g), "pretrain");
  require_artifact(split_file(g), "pretrain");
  std::vector<SiteRecord> records = load_site_csv(data_file(g));
  if (records.empty()) throw ValidationError("no records in " + data_file(g));
  NormStats stats = load_norm_stats(norm_file(g));
  apply_normalize(stats, records);
  std::map<std::string, std::string> roles = load_split(split_file(g));
  ReloadedData out;
  for (SiteTask& t : build_tasks(records)) {
    auto it = roles.find(t.site_id);
    if (it == roles.end()) throw ValidationError("site " + t.site_id + " absent from split file");
    (it->second == "holdout" ? out.holdout : out.train).push_back(std::move(t));
  }
  return out;
}

int driver_dim_of(const std::string& csv_path) {
  std::vector<SiteRecord> records = load_site_csv(csv_path);
  if (records.empty()) throw ValidationError("no records in " + csv_path);
  return static_cast<int>(records[0].drivers.size());
}

// ---------------------------------------------------------------- synth ----

int cmd_synth(const GlobalOpts& g, int sites, int days) {
  AppConfig cfg = resolve_config(g);
  if (sites > 0) cfg.synth_sites = sites;
  if (days > 0) cfg.synth_days = days;
  fs::create_directories(g.out_dir);
  SynthOptions opt;
  opt.noise_sd_min = cfg.synth_noise_min;
  opt.noise_sd_max = cfg.synth_noise_max;
  opt.missing_prob = cfg.synth_missing_prob;
  std::mt19937_64 rng(cfg.seed);
  std::vector<SynthSite> synth = synth_generate(cfg.synth_sites, cfg.synth_days, rng, opt);
  save_site_csv(data_file(g), flatten_records(synth));
  save_synth_params(g.out_dir + "/synth_params.txt", synth);
  std::cout << "wrote " << data_file(g) << " (" << cfg.synth_sites << " sites, " << cfg.synth_days
            << " days)\n";
  return kExitOk;
}

// ------------------------------------------------------------- pretrain ----

int cmd_pretrain(const GlobalOpts& g) {
  AppConfig cfg = resolve_config(g);
  fs::create_directories(g.out_dir);
  std::vector<SiteRecord> records = load_site_csv(data_file(g));
  if (records.empty()) throw ValidationError("no records in " + data_file(g));
  cfg.model.driver_dim = static_cast<int>(records[0].drivers.size());

  PreparedData prep = prepare_dataset(records, cfg, cfg.seed);
  save_app_config(cfg_file(g), cfg);
  save_norm_stats(norm_file(g), prep.stats);
  save_class_weights(weights_file(g), prep.loss_cfg);
  save_split(split_file(g), prep);
  // The one-hot vocabulary covers every site: static labels are metadata
  // known for any site, and held-out sites must be encodable at inference.
  std::vector<SiteTask> all_tasks = prep.train;
  all_tasks.insert(all_tasks.end(), prep.holdout.begin(), prep.holdout.end());
  save_vocab(vocab_file(g), build_vocab(all_tasks));

  for (int m = 0; m < cfg.train.ensemble; ++m) {
    std::mt19937_64 init_rng(member_seed(cfg.seed, m, 0));
    TamRlModel model = tamrl_init(cfg.model, init_rng);
    std::mt19937_64 stage_rng(member_seed(cfg.seed, m, 1));
    pretrain_decoder(model.decoder, prep.train, prep.loss_cfg, cfg.train, stage_rng,
                     [m](const std::string& stage, int epoch, double loss, double sec) {
                       std::cout << "member " << m << ' ' << stage << " epoch " << epoch
                                 << " loss " << loss << " (" << sec << "s)\n";
                     });
    save_checkpoint(member_ckpt(g, "stage1", m), model_params(model));
  }
  std::cout << "pretrained " << cfg.train.ensemble << " member(s) on " << prep.train.size()
            << " training sites (" << prep.holdout.size() << " held out)\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train ----

int cmd_train(const GlobalOpts& g, bool skip_baseline) {
  require_artifact(cfg_file(g), "pretrain");
  AppConfig cfg = load_app_config(cfg_file(g));
  require_artifact(weights_file(g), "pretrain");
  LossConfig loss_cfg = load_class_weights(weights_file(g));
  ReloadedData data = reload_dataset(g);
  LabelVocab vocab = load_vocab(vocab_file(g));

  for (int m = 0; m < cfg.train.ensemble; ++m) {
    require_artifact(member_ckpt(g, "stage1", m), "pretrain");
    std::mt19937_64 init_rng(member_seed(cfg.seed, m, 0));
    TamRlModel model = tamrl_init(cfg.model, init_rng);
    restore_into(load_checkpoint(member_ckpt(g, "stage1", m)), model_params(model));
    std::mt19937_64 stage_rng(member_seed(cfg.seed, m, 2));
    joint_train(model, data.train, loss_cfg, cfg.train, stage_rng,
                [m](const std::string& stage, int epoch, double loss, double sec) {
                  std::cout << "member " << m << ' ' << stage << " epoch " << epoch << " loss "
                            << loss << " (" << sec << "s)\n";
                });
    save_checkpoint(member_ckpt(g, "tamrl", m), model_params(model));

    if (!skip_baseline) {
      std::mt19937_64 ct_init(member_seed(cfg.seed, m, 3));
      CtLstmModel ct{cfg.model, vocab, decoder_init(cfg.model, ct_init, vocab.width())};
      std::mt19937_64 ct_rng(member_seed(cfg.seed, m, 4));
      train_ct_lstm(ct, data.train, loss_cfg, cfg.train, ct_rng);
      save_checkpoint(member_ckpt(g, "ctlstm", m), ct_lstm_params(ct));
    }
  }
  std::cout << "trained " << cfg.train.ensemble << " member(s)\n";
  return kExitOk;
}

// ---------------------------------------------------------------- infer ----

void write_inference_stats(const std::string& path, const InferenceOutput& out) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot open for writing: " + path);
  os << "mean_flux_residual=" << fmt(out.mean_flux_residual) << '\n'
     << "clipped_violations=" << out.clipped_violations << '\n'
     << "negative_nee_count=" << out.negative_nee_count << '\n'
     << "rows=" << out.rows.size() << '\n';
}

int cmd_infer(const GlobalOpts& g, const std::string& which) {
  require_artifact(cfg_file(g), "pretrain");
  AppConfig cfg = load_app_config(cfg_file(g));
  LossConfig loss_cfg = load_class_weights(weights_file(g));
  ReloadedData data = reload_dataset(g);
  if (data.holdout.empty()) throw ValidationError("split has no held-out sites");

  bool all = which == "all";
  if (all || which == "tamrl") {
    std::vector<TamRlModel> models;
    for (int m = 0; m < cfg.train.ensemble; ++m) {
      require_artifact(member_ckpt(g, "tamrl", m), "train");
      std::mt19937_64 rng(member_seed(cfg.seed, m, 0));
      models.push_back(tamrl_init(cfg.model, rng));
      restore_into(load_checkpoint(member_ckpt(g, "tamrl", m)), model_params(models.back()));
    }
    std::vector<RawFn> members;
    for (const TamRlModel& model : models) {
      members.push_back(tamrl_raw_fn(model, cfg.train.support_size));
    }
    InferenceOutput out = run_inference(data.holdout, ensemble_raw(std::move(members)),
                                        loss_cfg.nee_equals_reco_minus_gpp);
    save_predictions(g.out_dir + "/predictions_tamrl.csv", out.rows);
    write_inference_stats(g.out_dir + "/inference_tamrl.txt", out);
  }
  if (all || which == "tamlstm") {
    std::vector<DecoderParams> decoders;
    for (int m = 0; m < cfg.train.ensemble; ++m) {
      require_artifact(member_ckpt(g, "stage1", m), "pretrain");
      std::mt19937_64 rng(member_seed(cfg.seed, m, 0));
      decoders.push_back(decoder_init(cfg.model, rng));
      restore_into(load_checkpoint(member_ckpt(g, "stage1", m)), decoder_params(decoders.back()));
    }
    std::vector<RawFn> members;
    for (const DecoderParams& dec : decoders) members.push_back(tamlstm_raw_fn(dec));
    InferenceOutput out = run_inference(data.holdout, ensemble_raw(std::move(members)),
                                        loss_cfg.nee_equals_reco_minus_gpp);
    save_predictions(g.out_dir + "/predictions_tamlstm.csv", out.rows);
    write_inference_stats(g.out_dir + "/inference_tamlstm.txt", out);
  }
  if (all || which == "ctlstm") {
    LabelVocab vocab = load_vocab(vocab_file(g));
    std::vector<CtLstmModel> models;
    for (int m = 0; m < cfg.train.ensemble; ++m) {
      require_artifact(member_ckpt(g, "ctlstm", m), "train");
      std::mt19937_64 rng(member_seed(cfg.seed, m, 3));
      models.push_back({cfg.model, vocab, decoder_init(cfg.model, rng, vocab.width())});
      restore_into(load_checkpoint(member_ckpt(g, "ctlstm", m)), ct_lstm_params(models.back()));
    }
    std::vector<RawFn> members;
    for (const CtLstmModel& model : models) members.push_back(ct_lstm_raw_fn(model));
    InferenceOutput out = run_inference(data.holdout, ensemble_raw(std::move(members)),
                                        loss_cfg.nee_equals_reco_minus_gpp);
    save_predictions(g.out_dir + "/predictions_ctlstm.csv", out.rows);
    write_inference_stats(g.out_dir + "/inference_ctlstm.txt", out);
  }
  std::cout << "inference written to " << g.out_dir << '\n';
  return kExitOk;
}

// ----------------------------------------------------------------- eval ----

std::vector<SiteLabels> labels_from_data(const GlobalOpts& g) {
  std::vector<SiteRecord> records = load_site_csv(data_file(g));
  return task_labels(build_tasks(records));
}

int cmd_eval(const GlobalOpts& g, const std::string& pred_path) {
  require_artifact(pred_path, "infer");
  std::vector<PredictionRow> rows = load_predictions(pred_path);
  std::vector<SiteMetrics> metrics = site_metrics(rows, labels_from_data(g), g.strict_qc);
  save_site_metrics_csv(g.out_dir + "/metrics_by_site.csv", metrics);
  for (const GroupRow& r : aggregate(metrics, "all")) {
    std::cout << r.target << ": mean site rmse " << fmt(r.mean_rmse);
    if (r.mean_r2) std::cout << ", mean r2 " << fmt(*r.mean_r2);
    std::cout << " over " << r.site_count << " site(s)\n";
  }
  std::cout << "wrote " << g.out_dir << "/metrics_by_site.csv\n";
  return kExitOk;
}

// --------------------------------------------------------------- report ----

int cmd_report(const GlobalOpts& g) {
  std::vector<SiteLabels> labels = labels_from_data(g);
  const std::vector<std::string> model_names = {"tamrl", "tamlstm", "ctlstm"};
  std::map<std::string, std::vector<SiteMetrics>> per_model;
  for (const std::string& name : model_names) {
    std::string path = g.out_dir + "/predictions_" + name + ".csv";
    if (!fs::exists(path)) continue;
    per_model[name] = site_metrics(load_predictions(path), labels, g.strict_qc);
  }
  if (per_model.empty()) {
    throw ValidationError("no predictions_*.csv in " + g.out_dir + "; run `infer` first");
  }

  // Per-site and per-group tables, long format with a model column.
  {
    std::ofstream os(g.out_dir + "/metrics_by_site.csv");
    os << "model,site_id,target,rmse,r2,n,igbp,koppen\n";
    for (const auto& [name, metrics] : per_model) {
      for (const SiteMetrics& m : metrics) {
        os << name << ',' << m.site_id << ',' << m.target << ',' << fmt(m.rmse) << ','
           << (m.r2 ? fmt(*m.r2) : "") << ',' << m.n << ',' << m.igbp << ',' << m.koppen << '\n';
      }
    }
  }
  for (const std::string& by : {std::string("igbp"), std::string("koppen")}) {
    std::ofstream os(g.out_dir + "/metrics_by_" + by + ".csv");
    os << "model,group,target,mean_rmse,sd_rmse,mean_r2,site_count\n";
    for (const auto& [name, metrics] : per_model) {
      for (const GroupRow& r : aggregate(metrics, by)) {
        os << name << ',' << r.group << ',' << r.target << ',' << fmt(r.mean_rmse) << ','
           << (r.sd_rmse ? fmt(*r.sd_rmse) : "") << ',' << (r.mean_r2 ? fmt(*r.mean_r2) : "")
           << ',' << r.site_count << '\n';
      }
    }
  }

  // Relative improvement of each model over each baseline, per target.
  {
    std::ofstream os(g.out_dir + "/relative_rmse.csv");
    os << "reference,candidate,target,reference_rmse,candidate_rmse,relative_rmse\n";
    auto mean_rmse_of = [](const std::vector<SiteMetrics>& metrics, const std::string& target) {
      double sum = 0;
      long n = 0;
      for (const SiteMetrics& m : metrics) {
        if (m.target == target) {
          sum += m.rmse;
          ++n;
        }
      }
      return n ? sum / static_cast<double>(n) : 0.0;
    };
    for (const auto& [ref_name, ref_metrics] : per_model) {
      for (const auto& [cand_name, cand_metrics] : per_model) {
        if (ref_name == cand_name) continue;
        for (const std::string& target : {std::string("gpp"), std::string("nee")}) {
          double ref = mean_rmse_of(ref_metrics, target);
          double cand = mean_rmse_of(cand_metrics, target);
          if (ref <= 0.0) continue;
          os << ref_name << ',' << cand_name << ',' << target << ',' << fmt(ref) << ','
             << fmt(cand) << ',' << fmt(relative_rmse(ref, cand)) << '\n';
        }
      }
    }
  }

  // Plot-ready per-site scatter points: one row per site/target/model.
  {
    std::ofstream os(g.out_dir + "/scatter_sites.csv");
    os << "model,site_id,target,rmse,r2,igbp,koppen\n";
    for (const auto& [name, metrics] : per_model) {
      for (const SiteMetrics& m : metrics) {
        os << name << ',' << m.site_id << ',' << m.target << ',' << fmt(m.rmse) << ','
           << (m.r2 ? fmt(*m.r2) : "") << ',' << m.igbp << ',' << m.koppen << '\n';
      }
    }
  }
  std::cout << "report tables written to " << g.out_dir << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TAM-RL carbon flux upscaling pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may appear after the subcommand name

  GlobalOpts g;
  app.add_option("--config", g.config_path, "key=value configuration file");
  app.add_option("--out", g.out_dir, "working directory for all artifacts");
  app.add_option("--data", g.data_path, "site CSV (default <out>/data.csv)");
  auto* seed_opt = app.add_option("--seed", g.seed, "base RNG seed");
  app.add_flag("--strict-qc", g.strict_qc, "evaluate only qc == 1 steps");

  int sites = 0, days = 0;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic multi-site dataset");
  synth->add_option("--sites", sites, "number of sites");
  synth->add_option("--days", days, "days of record per site");

  CLI::App* pretrain = app.add_subcommand("pretrain", "stage 1: decoder-only training");
  bool skip_baseline = false;
  CLI::App* train = app.add_subcommand("train", "stage 2: episodic joint training + baselines");
  train->add_flag("--skip-baseline", skip_baseline, "do not train the CT-LSTM baseline");

  std::string which = "all";
  CLI::App* infer = app.add_subcommand("infer", "zero-shot inference on held-out sites");
  infer->add_option("--model", which, "tamrl|tamlstm|ctlstm|all")
      ->check(CLI::IsMember({"tamrl", "tamlstm", "ctlstm", "all"}));

  std::string pred_path;
  CLI::App* eval = app.add_subcommand("eval", "per-site metrics for one predictions file");
  eval->add_option("--pred", pred_path, "predictions CSV")->required();

  CLI::App* report = app.add_subcommand("report", "per-group tables and plot-ready files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    if (synth->parsed()) return cmd_synth(g, sites, days);
    if (pretrain->parsed()) return cmd_pretrain(g);
    if (train->parsed()) return cmd_train(g, skip_baseline);
    if (infer->parsed()) return cmd_infer(g, which);
    if (eval->parsed()) return cmd_eval(g, pred_path);
    if (report->parsed()) return cmd_report(g);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
