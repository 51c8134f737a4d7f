#include "tamrl/data.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

namespace tamrl {
namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, int row, const char* col) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw ValidationError("row " + std::to_string(row) + ": cannot parse " + col + " value '" + s +
                          "'");
  }
}

}  // namespace

int64_t parse_iso_date(const std::string& s) {
  int y = 0, m = 0, d = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2d", &y, &m, &d) != 3) {
    throw ValidationError("unparseable date '" + s + "' (expected YYYY-MM-DD)");
  }
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                  std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw ValidationError("invalid calendar date '" + s + "'");
  return std::chrono::sys_days{ymd}.time_since_epoch().count();
}

std::string format_iso_date(int64_t serial_day) {
  std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{serial_day}}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::vector<SiteRecord> load_site_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open data file: " + path);
  std::string line;
  if (!std::getline(is, line)) throw ValidationError("empty data file: " + path);
  std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 8 || header[0] != "site_id" || header[1] != "date") {
    throw ValidationError("bad CSV header in " + path);
  }
  int d = static_cast<int>(header.size()) - 7;
  for (int j = 0; j < d; ++j) {
    if (header[static_cast<size_t>(2 + j)] != "driver_" + std::to_string(j + 1)) {
      throw ValidationError("bad driver column name at position " + std::to_string(2 + j));
    }
  }
  const size_t n = header.size();
  if (header[n - 5] != "gpp" || header[n - 4] != "nee" || header[n - 3] != "qc" ||
      header[n - 2] != "igbp" || header[n - 1] != "koppen") {
    throw ValidationError("missing required columns in " + path +
                          " (expected ...,gpp,nee,qc,igbp,koppen)");
  }

  std::vector<SiteRecord> out;
  std::map<std::string, int64_t> last_date;
  int row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    if (f.size() != n) {
      throw ValidationError("row " + std::to_string(row) + ": expected " + std::to_string(n) +
                            " fields, got " + std::to_string(f.size()));
    }
    SiteRecord r;
    r.site_id = f[0];
    r.date = parse_iso_date(f[1]);
    r.drivers.resize(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j) r.drivers[static_cast<size_t>(j)] = parse_double(f[static_cast<size_t>(2 + j)], row, "driver");
    if (!f[n - 5].empty()) r.gpp = parse_double(f[n - 5], row, "gpp");
    if (!f[n - 4].empty()) r.nee = parse_double(f[n - 4], row, "nee");
    r.qc = parse_double(f[n - 3], row, "qc");
    if (r.qc < 0.0 || r.qc > 1.0) {
      throw ValidationError("row " + std::to_string(row) + ": qc " + fmt_double(r.qc) +
                            " outside [0,1]");
    }
    r.igbp = f[n - 2];
    r.koppen = f[n - 1];
    auto it = last_date.find(r.site_id);
    if (it != last_date.end() && r.date <= it->second) {
      throw ValidationError("row " + std::to_string(row) + ": dates not strictly increasing for site " +
                            r.site_id);
    }
    last_date[r.site_id] = r.date;
    out.push_back(std::move(r));
  }
  return out;
}

void save_site_csv(const std::string& path, const std::vector<SiteRecord>& records) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot open for writing: " + path);
  int d = records.empty() ? 0 : static_cast<int>(records[0].drivers.size());
  os << "site_id,date";
  for (int j = 1; j <= d; ++j) os << ",driver_" << j;
  os << ",gpp,nee,qc,igbp,koppen\n";
  for (const SiteRecord& r : records) {
    os << r.site_id << ',' << format_iso_date(r.date);
    for (double v : r.drivers) os << ',' << fmt_double(v);
    os << ',' << (r.gpp ? fmt_double(*r.gpp) : "");
    os << ',' << (r.nee ? fmt_double(*r.nee) : "");
    os << ',' << fmt_double(r.qc) << ',' << r.igbp << ',' << r.koppen << '\n';
  }
}

NormStats fit_normalize(const std::vector<SiteRecord>& train_records) {
  if (train_records.empty()) throw ValidationError("fit_normalize on empty training set");
  size_t d = train_records[0].drivers.size();
  NormStats st;
  st.mean.assign(d, 0.0);
  st.sd.assign(d, 0.0);
  double n = static_cast<double>(train_records.size());
  for (const SiteRecord& r : train_records)
    for (size_t j = 0; j < d; ++j) st.mean[j] += r.drivers[j];
  for (size_t j = 0; j < d; ++j) st.mean[j] /= n;
  for (const SiteRecord& r : train_records)
    for (size_t j = 0; j < d; ++j) {
      double dv = r.drivers[j] - st.mean[j];
      st.sd[j] += dv * dv;
    }
  for (size_t j = 0; j < d; ++j) {
    st.sd[j] = std::sqrt(st.sd[j] / n);
    if (st.sd[j] <= 0.0) {
      std::cerr << "warning: driver_" << (j + 1) << " has zero variance; std coerced to 1\n";
      st.sd[j] = 1.0;
    }
  }
  return st;
}

void apply_normalize(const NormStats& stats, std::vector<SiteRecord>& records) {
  for (SiteRecord& r : records) {
    if (r.drivers.size() != stats.mean.size()) {
      throw ValidationError("driver width mismatch between records and normalization stats");
    }
    for (size_t j = 0; j < r.drivers.size(); ++j) {
      r.drivers[j] = (r.drivers[j] - stats.mean[j]) / stats.sd[j];
    }
  }
}

void save_norm_stats(const std::string& path, const NormStats& stats) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot open for writing: " + path);
  for (size_t j = 0; j < stats.mean.size(); ++j) {
    os << "mean_" << (j + 1) << '=' << fmt_double(stats.mean[j]) << '\n';
    os << "sd_" << (j + 1) << '=' << fmt_double(stats.sd[j]) << '\n';
  }
}

NormStats load_norm_stats(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open normalization stats: " + path);
  std::map<std::string, double> kv;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("bad stats line: " + line);
    kv[line.substr(0, eq)] = std::stod(line.substr(eq + 1));
  }
  NormStats st;
  for (size_t j = 1;; ++j) {
    auto m = kv.find("mean_" + std::to_string(j));
    auto s = kv.find("sd_" + std::to_string(j));
    if (m == kv.end() || s == kv.end()) break;
    st.mean.push_back(m->second);
    st.sd.push_back(s->second);
  }
  if (st.mean.empty()) throw ValidationError("no entries in normalization stats: " + path);
  return st;
}

std::vector<TimeSeriesWindow> window_sequences(const std::vector<SiteRecord>& records, int window,
                                               int stride) {
  if (window < 1 || stride < 1) throw ValidationError("window and stride must be >= 1");
  std::vector<TimeSeriesWindow> out;
  if (records.empty()) return out;
  const std::string& site = records[0].site_id;
  for (const SiteRecord& r : records) {
    if (r.site_id != site) throw ValidationError("window_sequences requires single-site records");
  }

  // Contiguous date segments, then fixed offsets within each.
  size_t seg_begin = 0;
  auto emit_segment = [&](size_t lo, size_t hi) {  // [lo, hi)
    int len = static_cast<int>(hi - lo);
    for (int off = 0; off + window <= len; off += stride) {
      TimeSeriesWindow w;
      w.site_id = site;
      w.igbp = records[lo].igbp;
      w.koppen = records[lo].koppen;
      w.start_date = records[lo + static_cast<size_t>(off)].date;
      w.drivers.reserve(static_cast<size_t>(window));
      for (int t = 0; t < window; ++t) {
        const SiteRecord& r = records[lo + static_cast<size_t>(off + t)];
        w.drivers.push_back(r.drivers);
        bool present = r.gpp.has_value() && r.nee.has_value();
        w.gpp.push_back(present ? *r.gpp : 0.0);
        w.nee.push_back(present ? *r.nee : 0.0);
        w.qc.push_back(r.qc);
        w.mask.push_back(present);
      }
      out.push_back(std::move(w));
    }
  };
  for (size_t i = 1; i <= records.size(); ++i) {
    if (i == records.size() || records[i].date != records[i - 1].date + 1) {
      emit_segment(seg_begin, i);
      seg_begin = i;
    }
  }
  return out;
}

std::vector<SiteTask> build_tasks(const std::vector<SiteRecord>& records, int window, int stride) {
  std::map<std::string, std::vector<SiteRecord>> by_site;
  for (const SiteRecord& r : records) by_site[r.site_id].push_back(r);
  std::vector<SiteTask> tasks;
  for (auto& [site, recs] : by_site) {
    SiteTask t;
    t.site_id = site;
    t.igbp = recs[0].igbp;
    t.koppen = recs[0].koppen;
    for (const SiteRecord& r : recs) {
      if (r.igbp != t.igbp || r.koppen != t.koppen) {
        throw ValidationError("site " + site + " has inconsistent igbp/koppen labels");
      }
    }
    t.windows = window_sequences(recs, window, stride);
    tasks.push_back(std::move(t));
  }
  return tasks;
}

namespace {

std::string igbp_from_lue(double lue) {
  if (lue < 0.25) return "GRA";
  if (lue < 0.35) return "CRO";
  if (lue < 0.45) return "DBF";
  return "ENF";
}

std::string koppen_from_topt(double t_opt) {
  if (t_opt < 12.5) return "Dfb";
  if (t_opt < 17.0) return "Cfb";
  if (t_opt < 21.5) return "Cfa";
  return "Aw";
}

}  // namespace

std::vector<SynthSite> synth_generate(int n_sites, int days, std::mt19937_64& rng,
                                      const SynthOptions& opt) {
  if (n_sites < 1) throw ValidationError("synth_generate requires n_sites >= 1");
  if (days < 45) throw ValidationError("synth_generate requires days >= 45");
  if (opt.noise_sd_min < 0.0 || opt.noise_sd_max < opt.noise_sd_min) {
    throw ValidationError("invalid noise_sd range");
  }
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int64_t base_date = parse_iso_date("2004-01-01");

  std::vector<SynthSite> sites;
  sites.reserve(static_cast<size_t>(n_sites));
  for (int s = 0; s < n_sites; ++s) {
    SynthSite site;
    SynthSiteParams& p = site.params;
    p.lue = 0.15 + 0.40 * u01(rng);
    p.rb = 0.6 + 1.4 * u01(rng);
    p.q10 = 1.4 + 1.2 * u01(rng);
    p.t_opt = 8.0 + 18.0 * u01(rng);
    p.noise_sd = opt.noise_sd_min + (opt.noise_sd_max - opt.noise_sd_min) * u01(rng);

    char name[16];
    std::snprintf(name, sizeof(name), "SYN%03d", s);
    std::string igbp = igbp_from_lue(p.lue);
    std::string koppen = koppen_from_topt(p.t_opt);

    for (int d = 0; d < days; ++d) {
      SiteRecord r;
      r.site_id = name;
      r.date = base_date + d;
      double doy = static_cast<double>(d % 365);
      double par = 20.0 + 12.0 * std::sin(2.0 * kPi * (doy - 80.0) / 365.0) + 1.5 * gauss(rng);
      par = std::max(par, 0.1);
      double temp = 12.0 + 10.0 * std::sin(2.0 * kPi * (doy - 110.0) / 365.0) + 2.0 * gauss(rng);
      double distract1 = gauss(rng);
      double distract2 = std::sin(2.0 * kPi * doy / 91.0) + 0.5 * gauss(rng);
      r.drivers = {par, temp, distract1, distract2};

      double tdev = (temp - p.t_opt) / 12.0;
      double gpp = p.lue * par * std::exp(-tdev * tdev);
      double reco = p.rb * std::pow(p.q10, (temp - 15.0) / 10.0);
      double eps = p.noise_sd > 0.0 ? p.noise_sd * gauss(rng) : 0.0;
      double nee = reco - gpp + eps;

      if (u01(rng) < opt.missing_prob) {
        r.gpp.reset();
        r.nee.reset();
      } else {
        r.gpp = gpp;
        r.nee = nee;
      }
      r.qc = (u01(rng) < 0.85) ? 1.0 : 0.3 + 0.7 * u01(rng);
      r.igbp = igbp;
      r.koppen = koppen;
      site.reco_true.push_back(reco);
      site.records.push_back(std::move(r));
    }
    sites.push_back(std::move(site));
  }
  return sites;
}

std::vector<SiteRecord> flatten_records(const std::vector<SynthSite>& sites) {
  std::vector<SiteRecord> out;
  for (const SynthSite& s : sites) out.insert(out.end(), s.records.begin(), s.records.end());
  return out;
}

void save_synth_params(const std::string& path, const std::vector<SynthSite>& sites) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot open for writing: " + path);
  os << "site_id,lue,rb,q10,t_opt,noise_sd\n";
  for (const SynthSite& s : sites) {
    const SynthSiteParams& p = s.params;
    os << s.records[0].site_id << ',' << fmt_double(p.lue) << ',' << fmt_double(p.rb) << ','
       << fmt_double(p.q10) << ',' << fmt_double(p.t_opt) << ',' << fmt_double(p.noise_sd) << '\n';
  }
}

std::pair<std::vector<SiteTask>, std::vector<SiteTask>> split_sites(
    const std::vector<SiteTask>& tasks, double holdout_fraction, std::mt19937_64& rng,
    bool stratify_by_igbp) {
  if (tasks.size() < 2) throw ValidationError("split_sites requires at least 2 sites");
  if (holdout_fraction <= 0.0 || holdout_fraction >= 1.0) {
    throw ValidationError("holdout_fraction must be in (0,1)");
  }
  size_t n = tasks.size();
  std::vector<size_t> holdout_idx;

  if (!stratify_by_igbp) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    size_t k = static_cast<size_t>(std::llround(holdout_fraction * static_cast<double>(n)));
    k = std::min(std::max<size_t>(k, 1), n - 1);
    holdout_idx.assign(idx.begin(), idx.begin() + static_cast<long>(k));
  } else {
    std::map<std::string, std::vector<size_t>> groups;
    for (size_t i = 0; i < n; ++i) groups[tasks[i].igbp].push_back(i);
    for (auto& [label, idx] : groups) {
      std::shuffle(idx.begin(), idx.end(), rng);
      // Groups with >= 2 sites always keep at least one site in training.
      size_t k = static_cast<size_t>(std::floor(holdout_fraction * static_cast<double>(idx.size())));
      k = std::min(k, idx.size() > 1 ? idx.size() - 1 : size_t{0});
      holdout_idx.insert(holdout_idx.end(), idx.begin(), idx.begin() + static_cast<long>(k));
    }
    if (holdout_idx.empty()) {
      size_t best = 0;
      for (const auto& [label, idx] : groups)
        if (idx.size() > groups.begin()->second.size()) best = idx[0];
      holdout_idx.push_back(best);
    }
  }

  std::vector<bool> held(n, false);
  for (size_t i : holdout_idx) held[i] = true;
  std::pair<std::vector<SiteTask>, std::vector<SiteTask>> out;
  for (size_t i = 0; i < n; ++i) {
    (held[i] ? out.second : out.first).push_back(tasks[i]);
  }
  return out;
}

}  // namespace tamrl
