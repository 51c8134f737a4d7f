#include "tamrl/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace tamrl {
namespace {

std::vector<Tensor> window_inputs(const TimeSeriesWindow& w) {
  std::vector<Tensor> xs;
  xs.reserve(w.drivers.size());
  for (const auto& d : w.drivers) xs.push_back(Tensor::row(d));
  return xs;
}

// Encoder input: drivers with the observed target pair appended; masked
// steps carry zeros in the target slots.
std::vector<Tensor> encoder_inputs(const TimeSeriesWindow& w) {
  std::vector<Tensor> xs;
  xs.reserve(w.drivers.size());
  for (size_t t = 0; t < w.drivers.size(); ++t) {
    std::vector<double> v = w.drivers[t];
    if (w.mask[t]) {
      v.push_back(w.gpp[t]);
      v.push_back(w.nee[t]);
    } else {
      v.push_back(0.0);
      v.push_back(0.0);
    }
    xs.push_back(Tensor::row(std::move(v)));
  }
  return xs;
}

}  // namespace

std::vector<double> LabelVocab::onehot(const std::string& igbp_label,
                                       const std::string& koppen_label) const {
  std::vector<double> v(static_cast<size_t>(width()), 0.0);
  auto it = std::find(igbp.begin(), igbp.end(), igbp_label);
  if (it == igbp.end()) throw ValidationError("unknown IGBP label: " + igbp_label);
  v[static_cast<size_t>(it - igbp.begin())] = 1.0;
  auto kt = std::find(koppen.begin(), koppen.end(), koppen_label);
  if (kt == koppen.end()) throw ValidationError("unknown Koppen label: " + koppen_label);
  v[igbp.size() + static_cast<size_t>(kt - koppen.begin())] = 1.0;
  return v;
}

LabelVocab build_vocab(const std::vector<SiteTask>& tasks) {
  std::set<std::string> ig, ko;
  for (const SiteTask& t : tasks) {
    ig.insert(t.igbp);
    ko.insert(t.koppen);
  }
  LabelVocab v;
  v.igbp.assign(ig.begin(), ig.end());
  v.koppen.assign(ko.begin(), ko.end());
  return v;
}

DecoderParams decoder_init(const TamRlConfig& cfg, std::mt19937_64& rng, int extra_input) {
  DecoderParams d;
  d.lstm = lstm_init(cfg.driver_dim + extra_input, cfg.decoder_hidden, rng);
  double bound = 1.0 / std::sqrt(static_cast<double>(cfg.decoder_hidden));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> hw(static_cast<size_t>(3 * cfg.decoder_hidden));
  for (double& v : hw) v = dist(rng);
  d.head_weights = Tensor({3, cfg.decoder_hidden}, std::move(hw), true);
  std::vector<double> hb(3);
  for (double& v : hb) v = dist(rng);
  d.head_biases = Tensor({3}, std::move(hb), true);
  return d;
}

EncoderParams encoder_init(const TamRlConfig& cfg, std::mt19937_64& rng) {
  EncoderParams e;
  e.fwd = lstm_init(cfg.encoder_input_dim(), cfg.encoder_hidden, rng);
  e.bwd = lstm_init(cfg.encoder_input_dim(), cfg.encoder_hidden, rng);
  int in = 2 * cfg.encoder_hidden;
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> pw(static_cast<size_t>(cfg.embed_dim * in));
  for (double& v : pw) v = dist(rng);
  e.proj_weights = Tensor({cfg.embed_dim, in}, std::move(pw), true);
  std::vector<double> pb(static_cast<size_t>(cfg.embed_dim));
  for (double& v : pb) v = dist(rng);
  e.proj_biases = Tensor({cfg.embed_dim}, std::move(pb), true);
  return e;
}

MlpParams generator_init(const TamRlConfig& cfg, std::mt19937_64& rng) {
  std::vector<int> widths;
  widths.push_back(cfg.embed_dim);
  for (int h : cfg.generator_hidden) widths.push_back(h);
  widths.push_back(cfg.generator_output_dim());
  MlpParams g = mlp_init(widths, rng);
  // Zeroed output layer: raw modulation starts at 0, so FiLM starts at the
  // identity and stage 2 begins from the stage-1 decoder exactly.
  g.weights.back().data().assign(g.weights.back().data().size(), 0.0);
  g.biases.back().data().assign(g.biases.back().data().size(), 0.0);
  return g;
}

TamRlModel tamrl_init(const TamRlConfig& cfg, std::mt19937_64& rng) {
  TamRlModel m;
  m.cfg = cfg;
  m.decoder = decoder_init(cfg, rng);
  m.encoder = encoder_init(cfg, rng);
  m.generator = generator_init(cfg, rng);
  return m;
}

ModulationParams identity_modulation(int driver_dim, int hidden) {
  ModulationParams m;
  m.gamma1 = Tensor::full({driver_dim}, 1.0);
  m.beta1 = Tensor::zeros({driver_dim});
  m.gamma2 = Tensor::full({hidden}, 1.0);
  m.beta2 = Tensor::zeros({hidden});
  return m;
}

Tensor apply_film(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  if (x.shape() != gamma.shape() || x.shape() != beta.shape()) {
    throw TensorError("apply_film shape mismatch: x " + Tensor::shape_str(x.shape()) + ", gamma " +
                      Tensor::shape_str(gamma.shape()) + ", beta " +
                      Tensor::shape_str(beta.shape()));
  }
  return add(mul(gamma, x), beta);
}

TaskEmbedding encode_task(const EncoderParams& enc, const TamRlConfig& cfg,
                          const std::vector<TimeSeriesWindow>& support) {
  if (support.empty()) throw ValidationError("encode_task on empty support set");
  const std::string& site = support[0].site_id;
  for (const TimeSeriesWindow& w : support) {
    if (w.site_id != site) throw ValidationError("encode_task support mixes sites");
  }
  Tensor acc;
  for (const TimeSeriesWindow& w : support) {
    Tensor e = bilstm_encode(enc.fwd, enc.bwd, encoder_inputs(w));
    acc = acc.defined() ? add(acc, e) : e;
  }
  Tensor meanv = mul_scalar(acc, 1.0 / static_cast<double>(support.size()));
  TaskEmbedding out;
  out.z = add(matmul(enc.proj_weights, meanv), enc.proj_biases);
  out.source_site = site;
  out.support_count = static_cast<int>(support.size());
  (void)cfg;
  return out;
}

ModulationParams generate_modulation(const MlpParams& gen, const Tensor& z, int driver_dim,
                                     int hidden) {
  Tensor raw = mlp_forward(gen, z);
  int expect = 2 * driver_dim + 2 * hidden;
  if (raw.size() != expect) {
    throw TensorError("generator output width " + std::to_string(raw.size()) + " != expected " +
                      std::to_string(expect));
  }
  ModulationParams m;
  m.gamma1 = add_scalar(slice(raw, 0, driver_dim), 1.0);
  m.beta1 = slice(raw, driver_dim, 2 * driver_dim);
  m.gamma2 = add_scalar(slice(raw, 2 * driver_dim, 2 * driver_dim + hidden), 1.0);
  m.beta2 = slice(raw, 2 * driver_dim + hidden, expect);
  return m;
}

std::vector<Tensor> forward_decode(const DecoderParams& dec, const ModulationParams& mod,
                                   const TimeSeriesWindow& window) {
  if (window.length() < 1) throw ValidationError("forward_decode on empty window");
  if (mod.gamma1.size() != dec.lstm.input_dim() || mod.gamma2.size() != dec.lstm.hidden()) {
    throw TensorError("modulation widths do not match decoder dims");
  }
  std::vector<Tensor> xs;
  xs.reserve(static_cast<size_t>(window.length()));
  for (const auto& d : window.drivers) {
    xs.push_back(apply_film(Tensor::row(d), mod.gamma1, mod.beta1));
  }
  LstmOutput lo = lstm_forward(dec.lstm, xs);
  std::vector<Tensor> out;
  out.reserve(lo.hidden_states.size());
  for (const Tensor& h : lo.hidden_states) {
    Tensor hm = apply_film(h, mod.gamma2, mod.beta2);
    out.push_back(add(matmul(dec.head_weights, hm), dec.head_biases));
  }
  return out;
}

std::vector<std::array<double, 3>> decode_raw(const DecoderParams& dec, const ModulationParams& mod,
                                              const TimeSeriesWindow& window) {
  NoTape guard;
  std::vector<Tensor> preds = forward_decode(dec, mod, window);
  std::vector<std::array<double, 3>> out;
  out.reserve(preds.size());
  for (const Tensor& p : preds) out.push_back({p[0], p[1], p[2]});
  return out;
}

std::vector<FluxPrediction> clip_predictions(const std::vector<std::array<double, 3>>& raw) {
  std::vector<FluxPrediction> out;
  out.reserve(raw.size());
  for (const auto& r : raw) {
    FluxPrediction p;
    p.gpp_clipped = r[0] < 0.0;
    p.reco_clipped = r[1] < 0.0;
    p.gpp = p.gpp_clipped ? 0.0 : r[0];
    p.reco = p.reco_clipped ? 0.0 : r[1];
    p.nee = r[2];  // unconstrained
    out.push_back(p);
  }
  return out;
}

std::vector<std::array<double, 3>> zero_shot_raw(const TamRlModel& model,
                                                 const std::vector<TimeSeriesWindow>& support,
                                                 const TimeSeriesWindow& window) {
  NoTape guard;
  TaskEmbedding z = encode_task(model.encoder, model.cfg, support);
  ModulationParams mod =
      generate_modulation(model.generator, z.z, model.cfg.driver_dim, model.cfg.decoder_hidden);
  std::vector<Tensor> preds = forward_decode(model.decoder, mod, window);
  std::vector<std::array<double, 3>> out;
  out.reserve(preds.size());
  for (const Tensor& p : preds) out.push_back({p[0], p[1], p[2]});
  return out;
}

std::vector<FluxPrediction> predict_zero_shot(const TamRlModel& model,
                                              const std::vector<TimeSeriesWindow>& support,
                                              const TimeSeriesWindow& window) {
  if (!support.empty() && support[0].site_id != window.site_id) {
    throw ValidationError("zero-shot support must come from the query window's site");
  }
  return clip_predictions(zero_shot_raw(model, support, window));
}

std::vector<std::array<double, 3>> tamlstm_raw(const DecoderParams& dec,
                                               const TimeSeriesWindow& window) {
  return decode_raw(dec, identity_modulation(dec.lstm.input_dim(), dec.lstm.hidden()), window);
}

std::vector<FluxPrediction> predict_tamlstm(const DecoderParams& dec,
                                            const TimeSeriesWindow& window) {
  return clip_predictions(tamlstm_raw(dec, window));
}

std::vector<std::array<double, 3>> ct_lstm_raw(const CtLstmModel& model,
                                               const TimeSeriesWindow& window) {
  std::vector<double> stat = model.vocab.onehot(window.igbp, window.koppen);
  TimeSeriesWindow aug = window;
  for (auto& d : aug.drivers) d.insert(d.end(), stat.begin(), stat.end());
  return decode_raw(model.decoder,
                    identity_modulation(model.decoder.lstm.input_dim(), model.decoder.lstm.hidden()),
                    aug);
}

std::vector<FluxPrediction> predict_ct_lstm(const CtLstmModel& model,
                                            const TimeSeriesWindow& window) {
  return clip_predictions(ct_lstm_raw(model, window));
}

TensorMap decoder_params(const DecoderParams& d, const std::string& prefix) {
  return {
      {prefix + "decoder/input_weights", d.lstm.input_weights},
      {prefix + "decoder/recurrent_weights", d.lstm.recurrent_weights},
      {prefix + "decoder/biases", d.lstm.biases},
      {prefix + "heads/weights", d.head_weights},
      {prefix + "heads/biases", d.head_biases},
  };
}

TensorMap model_params(const TamRlModel& m) {
  TensorMap out = {
      {"encoder/fwd/input_weights", m.encoder.fwd.input_weights},
      {"encoder/fwd/recurrent_weights", m.encoder.fwd.recurrent_weights},
      {"encoder/fwd/biases", m.encoder.fwd.biases},
      {"encoder/bwd/input_weights", m.encoder.bwd.input_weights},
      {"encoder/bwd/recurrent_weights", m.encoder.bwd.recurrent_weights},
      {"encoder/bwd/biases", m.encoder.bwd.biases},
      {"encoder/proj_weights", m.encoder.proj_weights},
      {"encoder/proj_biases", m.encoder.proj_biases},
  };
  for (size_t l = 0; l < m.generator.weights.size(); ++l) {
    out.emplace_back("generator/w" + std::to_string(l), m.generator.weights[l]);
    out.emplace_back("generator/b" + std::to_string(l), m.generator.biases[l]);
  }
  TensorMap dec = decoder_params(m.decoder);
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

TensorMap ct_lstm_params(const CtLstmModel& m) { return decoder_params(m.decoder); }

}  // namespace tamrl
