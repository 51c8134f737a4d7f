#include "tamrl/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

namespace tamrl {
namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

}  // namespace

Adam::Adam(TensorMap params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, t] : params_) {
    m_.emplace_back(t.data().size(), 0.0);
    v_.emplace_back(t.data().size(), 0.0);
  }
}

void Adam::step() {
  ++step_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (size_t p = 0; p < params_.size(); ++p) {
    Tensor& t = params_[p].second;
    std::vector<double>& g = t.grad();
    std::vector<double>& m = m_[p];
    std::vector<double>& v = v_[p];
    for (size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw TensorError("non-finite gradient in parameter " + params_[p].first);
      }
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      t.data()[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
    t.zero_grad();
  }
}

double clip_global_norm(const TensorMap& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    for (double g : const_cast<Tensor&>(t).grad()) sq += g * g;
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double scale = max_norm / norm;
    for (const auto& [name, t] : params) {
      for (double& g : const_cast<Tensor&>(t).grad()) g *= scale;
    }
  }
  return norm;
}

Episode sample_episode(const SiteTask& site, int support_size, int query_size,
                       std::mt19937_64& rng) {
  int n = static_cast<int>(site.windows.size());
  if (n <= support_size) {
    throw ValidationError("site " + site.site_id + " has too few windows for support size " +
                          std::to_string(support_size));
  }
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  Episode e;
  e.site_id = site.site_id;
  e.support.assign(idx.begin(), idx.begin() + support_size);
  int q = std::min(query_size, n - support_size);
  e.query.assign(idx.begin() + support_size, idx.begin() + support_size + q);
  return e;
}

namespace {

// One stage-1 style epoch over a flat window pool with identity modulation.
double decoder_epoch(DecoderParams& dec, Adam& opt,
                     const std::vector<const TimeSeriesWindow*>& pool, const LossConfig& loss_cfg,
                     double clip_norm, std::mt19937_64& rng) {
  std::vector<const TimeSeriesWindow*> order = pool;
  std::shuffle(order.begin(), order.end(), rng);
  ModulationParams id = identity_modulation(dec.lstm.input_dim(), dec.lstm.hidden());
  double total = 0.0;
  int counted = 0;
  for (const TimeSeriesWindow* w : order) {
    Tape tape;
    std::vector<Tensor> preds = forward_decode(dec, id, *w);
    Tensor loss = composite_loss(preds, *w, loss_cfg);
    if (!loss.requires_grad()) continue;  // fully masked window
    tape.backward(loss);
    clip_global_norm(opt.params(), clip_norm);
    opt.step();
    total += loss.value();
    ++counted;
  }
  return counted > 0 ? total / counted : 0.0;
}

std::vector<const TimeSeriesWindow*> window_pool(const std::vector<SiteTask>& train) {
  std::vector<const TimeSeriesWindow*> pool;
  for (const SiteTask& t : train)
    for (const TimeSeriesWindow& w : t.windows) pool.push_back(&w);
  if (pool.empty()) throw ValidationError("training set has no windows");
  return pool;
}

}  // namespace

void pretrain_decoder(DecoderParams& dec, const std::vector<SiteTask>& train,
                      const LossConfig& loss_cfg, const TrainRunConfig& cfg, std::mt19937_64& rng,
                      const EpochLogger& log) {
  std::vector<const TimeSeriesWindow*> pool = window_pool(train);
  Adam opt(decoder_params(dec), cfg.stage1_lr);
  for (int epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
    double t0 = now_seconds();
    double mean_loss = decoder_epoch(dec, opt, pool, loss_cfg, cfg.clip_norm, rng);
    if (log) log("pretrain", epoch, mean_loss, now_seconds() - t0);
  }
}

void train_ct_lstm(CtLstmModel& model, const std::vector<SiteTask>& train,
                   const LossConfig& loss_cfg, const TrainRunConfig& cfg, std::mt19937_64& rng,
                   const EpochLogger& log) {
  // Materialize static-augmented windows once.
  std::vector<TimeSeriesWindow> augmented;
  for (const SiteTask& t : train) {
    std::vector<double> stat = model.vocab.onehot(t.igbp, t.koppen);
    for (const TimeSeriesWindow& w : t.windows) {
      TimeSeriesWindow aug = w;
      for (auto& d : aug.drivers) d.insert(d.end(), stat.begin(), stat.end());
      augmented.push_back(std::move(aug));
    }
  }
  if (augmented.empty()) throw ValidationError("training set has no windows");
  std::vector<const TimeSeriesWindow*> pool;
  for (const TimeSeriesWindow& w : augmented) pool.push_back(&w);

  Adam opt(decoder_params(model.decoder), cfg.stage1_lr);
  for (int epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
    double t0 = now_seconds();
    double mean_loss = decoder_epoch(model.decoder, opt, pool, loss_cfg, cfg.clip_norm, rng);
    if (log) log("ct_lstm", epoch, mean_loss, now_seconds() - t0);
  }
}

void joint_train(TamRlModel& model, const std::vector<SiteTask>& train, const LossConfig& loss_cfg,
                 const TrainRunConfig& cfg, std::mt19937_64& rng, const EpochLogger& log) {
  Adam opt(model_params(model), cfg.stage2_lr);
  std::vector<size_t> site_order(train.size());
  std::iota(site_order.begin(), site_order.end(), 0);

  for (int epoch = 0; epoch < cfg.stage2_epochs; ++epoch) {
    double t0 = now_seconds();
    std::shuffle(site_order.begin(), site_order.end(), rng);
    double total = 0.0;
    int episodes = 0;
    for (size_t si : site_order) {
      const SiteTask& site = train[si];
      if (static_cast<int>(site.windows.size()) <= cfg.support_size) continue;  // skip-site
      Episode ep = sample_episode(site, cfg.support_size, cfg.query_size, rng);

      Tape tape;
      std::vector<TimeSeriesWindow> support;
      for (int i : ep.support) support.push_back(site.windows[static_cast<size_t>(i)]);
      TaskEmbedding z = encode_task(model.encoder, model.cfg, support);
      ModulationParams mod =
          generate_modulation(model.generator, z.z, model.cfg.driver_dim, model.cfg.decoder_hidden);

      Tensor loss_acc;
      int counted = 0;
      for (int qi : ep.query) {
        const TimeSeriesWindow& w = site.windows[static_cast<size_t>(qi)];
        std::vector<Tensor> preds = forward_decode(model.decoder, mod, w);
        Tensor l = composite_loss(preds, w, loss_cfg);
        if (!l.requires_grad()) continue;
        loss_acc = loss_acc.defined() ? add(loss_acc, l) : l;
        ++counted;
      }
      if (counted == 0) continue;
      Tensor loss = mul_scalar(loss_acc, 1.0 / counted);
      tape.backward(loss);
      clip_global_norm(opt.params(), cfg.clip_norm);
      opt.step();
      total += loss.value();
      ++episodes;
    }
    if (log) log("joint", epoch, episodes > 0 ? total / episodes : 0.0, now_seconds() - t0);
  }
}

std::vector<EnsembleMember> train_ensemble(const std::vector<SiteTask>& train,
                                           const TamRlConfig& model_cfg, const LossConfig& loss_cfg,
                                           const TrainRunConfig& cfg,
                                           const std::vector<uint64_t>& seeds,
                                           const EpochLogger& log) {
  if (seeds.empty()) throw ValidationError("ensemble requires at least one seed");
  std::set<uint64_t> uniq(seeds.begin(), seeds.end());
  if (uniq.size() != seeds.size()) throw ValidationError("ensemble seeds must be distinct");

  std::vector<EnsembleMember> members;
  members.reserve(seeds.size());
  for (uint64_t seed : seeds) {
    std::mt19937_64 rng(seed);
    EnsembleMember m;
    m.seed = seed;
    m.model = tamrl_init(model_cfg, rng);
    pretrain_decoder(m.model.decoder, train, loss_cfg, cfg, rng, log);
    // Snapshot of the stage-1 decoder is the TAMLSTM ensemble member.
    m.stage1_decoder.lstm.input_weights = m.model.decoder.lstm.input_weights.detached(true);
    m.stage1_decoder.lstm.recurrent_weights = m.model.decoder.lstm.recurrent_weights.detached(true);
    m.stage1_decoder.lstm.biases = m.model.decoder.lstm.biases.detached(true);
    m.stage1_decoder.head_weights = m.model.decoder.head_weights.detached(true);
    m.stage1_decoder.head_biases = m.model.decoder.head_biases.detached(true);
    joint_train(m.model, train, loss_cfg, cfg, rng, log);
    members.push_back(std::move(m));
  }
  return members;
}

std::vector<TimeSeriesWindow> inference_support(const SiteTask& site, int count) {
  if (site.windows.empty()) throw ValidationError("inference_support on site with no windows");
  int n = static_cast<int>(site.windows.size());
  count = std::min(count, n);
  std::vector<TimeSeriesWindow> out;
  for (int i = 0; i < count; ++i) {
    int idx = count == 1 ? 0 : static_cast<int>(std::llround(static_cast<double>(i) * (n - 1) / (count - 1)));
    out.push_back(site.windows[static_cast<size_t>(idx)]);
  }
  return out;
}

}  // namespace tamrl
