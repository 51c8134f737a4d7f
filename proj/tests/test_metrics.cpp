#include <cmath>
#include <random>

#include "doctest.h"
#include "tamrl/metrics.hpp"

using namespace tamrl;

namespace {

PredictionRow row(const std::string& site, const std::string& target, double pred, double truth,
                  double qc = 1.0, const std::string& date = "2015-06-01") {
  PredictionRow r;
  r.site_id = site;
  r.date = date;
  r.target = target;
  r.pred = pred;
  r.truth = truth;
  r.qc = qc;
  return r;
}

}  // namespace

TEST_CASE("rmse fixtures") {
  CHECK(rmse({1, 2, 3}, {1, 2, 3}) == 0.0);
  // errors {3, 4}: sqrt((9+16)/2) = sqrt(12.5)
  CHECK(rmse({4, 0}, {1, 4}) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
  CHECK(rmse({5}, {2}) == 3.0);
  CHECK_THROWS_AS(rmse({}, {}), ValidationError);
  CHECK_THROWS_AS(rmse({1, 2}, {1}), ValidationError);
}

TEST_CASE("r2 fixtures") {
  auto perfect = r2({1, 2, 3}, {1, 2, 3});
  REQUIRE(perfect.has_value());
  CHECK(*perfect == 1.0);

  // predicting the mean gives exactly 0
  auto at_mean = r2({2, 2, 2}, {1, 2, 3});
  REQUIRE(at_mean.has_value());
  CHECK(*at_mean == doctest::Approx(0.0).epsilon(1e-15));

  // anti-correlated predictions go negative
  auto bad = r2({3, 2, 1}, {1, 2, 3});
  REQUIRE(bad.has_value());
  CHECK(*bad < 0.0);
  CHECK(*bad == doctest::Approx(-3.0).epsilon(1e-12));  // SS_res = 8, SS_tot = 2

  // constant truth and tiny samples are undefined
  CHECK_FALSE(r2({1, 2}, {5, 5}).has_value());
  CHECK_FALSE(r2({1}, {1}).has_value());
}

TEST_CASE("relative rmse") {
  CHECK(relative_rmse(2.0, 1.8) == doctest::Approx(0.10).epsilon(1e-15));
  CHECK(relative_rmse(2.0, 2.0) == 0.0);
  CHECK(relative_rmse(2.0, 2.5) == doctest::Approx(-0.25).epsilon(1e-15));
  CHECK_THROWS_AS(relative_rmse(0.0, 1.0), ValidationError);
  CHECK_THROWS_AS(relative_rmse(-1.0, 1.0), ValidationError);
}

TEST_CASE("predictions file round-trip") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10, 10);
  std::vector<PredictionRow> rows;
  for (int i = 0; i < 50; ++i) {
    rows.push_back(row(i % 2 ? "SA" : "SB", i % 3 ? "gpp" : "nee", u(rng), u(rng),
                       i % 5 ? 1.0 : 0.25));
  }
  std::string path = "/tmp/tamrl_test_preds.csv";
  save_predictions(path, rows);
  std::vector<PredictionRow> back = load_predictions(path);
  REQUIRE(back.size() == rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].site_id == rows[i].site_id);
    CHECK(back[i].date == rows[i].date);
    CHECK(back[i].target == rows[i].target);
    CHECK(back[i].pred == rows[i].pred);   // %.17g: bit-exact
    CHECK(back[i].truth == rows[i].truth);
    CHECK(back[i].qc == rows[i].qc);
  }
}

TEST_CASE("site metrics split by site and target") {
  std::vector<PredictionRow> rows = {
      row("SA", "gpp", 4, 1), row("SA", "gpp", 0, 4),   // rmse sqrt(12.5)
      row("SA", "nee", 1, 1), row("SA", "nee", 3, 2),   // rmse sqrt(0.5)
      row("SB", "gpp", 5, 2),                           // rmse 3, r2 missing (n=1)
  };
  std::vector<SiteLabels> labels = {{"SA", "DBF", "Cfb"}, {"SB", "ENF", "Dfb"}};
  std::vector<SiteMetrics> m = site_metrics(rows, labels, false);
  REQUIRE(m.size() == 3);
  auto find = [&](const std::string& s, const std::string& t) -> const SiteMetrics& {
    for (const SiteMetrics& x : m) {
      if (x.site_id == s && x.target == t) return x;
    }
    FAIL("missing entry");
    return m[0];
  };
  CHECK(find("SA", "gpp").rmse == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
  CHECK(find("SA", "gpp").n == 2);
  CHECK(find("SA", "gpp").igbp == "DBF");
  CHECK(find("SA", "nee").rmse == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(find("SB", "gpp").n == 1);
  CHECK_FALSE(find("SB", "gpp").r2.has_value());

  // unknown site label is rejected
  std::vector<PredictionRow> orphan = {row("SX", "gpp", 1, 1)};
  CHECK_THROWS_AS(site_metrics(orphan, labels, false), ValidationError);
}

TEST_CASE("strict qc never increases any per-site n") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<PredictionRow> rows;
  for (int i = 0; i < 200; ++i) {
    double qc = u(rng) < 0.6 ? 1.0 : u(rng);
    rows.push_back(row(i % 3 == 0 ? "SA" : "SB", i % 2 ? "gpp" : "nee", u(rng), u(rng), qc));
  }
  std::vector<SiteLabels> labels = {{"SA", "DBF", "Cfb"}, {"SB", "ENF", "Dfb"}};
  std::vector<SiteMetrics> loose = site_metrics(rows, labels, false);
  std::vector<SiteMetrics> strict = site_metrics(rows, labels, true);
  for (const SiteMetrics& s : strict) {
    bool found = false;
    for (const SiteMetrics& l : loose) {
      if (l.site_id == s.site_id && l.target == s.target) {
        CHECK(s.n <= l.n);
        found = true;
      }
    }
    CHECK(found);
  }
  // strict keeps exactly the qc == 1 rows
  long qc1 = 0;
  for (const PredictionRow& r : rows) {
    if (r.qc == 1.0) ++qc1;
  }
  long strict_n = 0;
  for (const SiteMetrics& s : strict) strict_n += s.n;
  CHECK(strict_n == qc1);
}

TEST_CASE("aggregate: hand-computed five-site fixture") {
  // DBF sites with gpp rmse {1, 3} -> mean 2, sd sqrt(2); ENF {2} -> sd absent
  std::vector<SiteMetrics> m;
  auto mk = [](const std::string& site, const std::string& igbp, double rm,
               std::optional<double> r2v) {
    SiteMetrics s;
    s.site_id = site;
    s.target = "gpp";
    s.rmse = rm;
    s.r2 = r2v;
    s.n = 10;
    s.igbp = igbp;
    s.koppen = "Cfb";
    return s;
  };
  m.push_back(mk("S1", "DBF", 1.0, 0.9));
  m.push_back(mk("S2", "DBF", 3.0, 0.5));
  m.push_back(mk("S3", "ENF", 2.0, std::nullopt));
  m.push_back(mk("S4", "GRA", 5.0, 0.1));
  m.push_back(mk("S5", "GRA", 7.0, 0.3));

  std::vector<GroupRow> by_igbp = aggregate(m, "igbp");
  auto find = [&](const std::vector<GroupRow>& rows, const std::string& g) -> const GroupRow& {
    for (const GroupRow& r : rows) {
      if (r.group == g) return r;
    }
    FAIL("missing group");
    return rows[0];
  };
  const GroupRow& dbf = find(by_igbp, "DBF");
  CHECK(dbf.mean_rmse == doctest::Approx(2.0).epsilon(1e-9));
  REQUIRE(dbf.sd_rmse.has_value());
  CHECK(*dbf.sd_rmse == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));  // sample sd
  REQUIRE(dbf.mean_r2.has_value());
  CHECK(*dbf.mean_r2 == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(dbf.site_count == 2);

  const GroupRow& enf = find(by_igbp, "ENF");
  CHECK_FALSE(enf.sd_rmse.has_value());
  CHECK_FALSE(enf.mean_r2.has_value());
  CHECK(enf.site_count == 1);

  std::vector<GroupRow> all = aggregate(m, "all");
  REQUIRE(all.size() == 1);
  CHECK(all[0].group == "all");
  CHECK(all[0].mean_rmse == doctest::Approx(18.0 / 5.0).epsilon(1e-9));
  CHECK(all[0].site_count == 5);
  // mean r2 skips sites where it is undefined
  CHECK(*all[0].mean_r2 == doctest::Approx((0.9 + 0.5 + 0.1 + 0.3) / 4.0).epsilon(1e-9));

  std::vector<GroupRow> by_kop = aggregate(m, "koppen");
  REQUIRE(by_kop.size() == 1);
  CHECK(by_kop[0].site_count == 5);

  CHECK_THROWS_AS(aggregate(m, "bogus"), ValidationError);
}

TEST_CASE("pooled rmse over rows of one target") {
  std::vector<PredictionRow> rows = {
      row("SA", "gpp", 4, 1), row("SB", "gpp", 0, 4), row("SA", "nee", 100, 0),
      row("SA", "gpp", 9, 9, 0.3),
  };
  // strict drops the low-qc row; nee rows never enter a gpp pool
  CHECK(pooled_rmse(rows, "gpp", true) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
  CHECK(pooled_rmse(rows, "gpp", false) == doctest::Approx(std::sqrt(25.0 / 3.0)).epsilon(1e-12));
  CHECK_THROWS_AS(pooled_rmse(rows, "reco", false), ValidationError);
}

TEST_CASE("metrics survive the file round-trip and re-aggregation") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-5, 5);
  std::vector<PredictionRow> rows;
  const char* sites[] = {"S1", "S2", "S3"};
  for (int i = 0; i < 120; ++i) {
    rows.push_back(row(sites[i % 3], i % 2 ? "gpp" : "nee", u(rng), u(rng)));
  }
  std::vector<SiteLabels> labels = {{"S1", "DBF", "Cfb"}, {"S2", "DBF", "Dfb"},
                                    {"S3", "ENF", "Cfb"}};
  std::string path = "/tmp/tamrl_test_preds2.csv";
  save_predictions(path, rows);
  std::vector<SiteMetrics> direct = site_metrics(rows, labels, false);
  std::vector<SiteMetrics> loaded = site_metrics(load_predictions(path), labels, false);
  REQUIRE(direct.size() == loaded.size());
  for (size_t i = 0; i < direct.size(); ++i) {
    CHECK(std::fabs(direct[i].rmse - loaded[i].rmse) <= 1e-12);
    CHECK(direct[i].n == loaded[i].n);
  }
  std::vector<GroupRow> ga = aggregate(direct, "igbp");
  std::vector<GroupRow> gb = aggregate(loaded, "igbp");
  REQUIRE(ga.size() == gb.size());
  for (size_t i = 0; i < ga.size(); ++i) {
    CHECK(std::fabs(ga[i].mean_rmse - gb[i].mean_rmse) <= 1e-12);
  }
}
