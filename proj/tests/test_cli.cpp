// Exercises the installed binary end to end through std::system. Each test
// works in its own scratch directory under /tmp.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "tamrl/data.hpp"
#include "tamrl/metrics.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  std::string cmd = std::string(TAMRL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::path("/tmp") / name) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string str() const { return dir.string(); }
};

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("synth --no-such-flag") == 2);
  CHECK(run("eval") == 2);  // --pred is required
  CHECK(run("--help") == 0);
}

TEST_CASE("validation failures exit with code 3") {
  Scratch s("tamrl_cli_val");
  // infer before any training artifacts exist
  CHECK(run("--out " + s.str() + " infer") == 3);
  CHECK(run("--out " + s.str() + " report") == 3);
  // unreadable config
  std::ofstream(s.dir / "bad.cfg") << "no_such_key=1\n";
  CHECK(run("--config " + (s.dir / "bad.cfg").string() + " --out " + s.str() + " synth") == 3);
  // pretrain without a data file
  CHECK(run("--out " + s.str() + " pretrain") == 3);
}

TEST_CASE("synth replays byte-identically for one seed") {
  Scratch a("tamrl_cli_synth_a"), b("tamrl_cli_synth_b"), c("tamrl_cli_synth_c");
  std::string args = "synth --sites 5 --days 120 --seed 7 --out ";
  REQUIRE(run(args + a.str()) == 0);
  REQUIRE(run(args + b.str()) == 0);
  CHECK(slurp(a.str() + "/data.csv") == slurp(b.str() + "/data.csv"));
  CHECK(slurp(a.str() + "/synth_params.txt") == slurp(b.str() + "/synth_params.txt"));

  // a different seed must actually change the data
  REQUIRE(run("synth --sites 5 --days 120 --seed 8 --out " + c.str()) == 0);
  CHECK(slurp(a.str() + "/data.csv") != slurp(c.str() + "/data.csv"));

  // and the emitted CSV is loadable with the expected shape
  std::vector<tamrl::SiteRecord> recs = tamrl::load_site_csv(a.str() + "/data.csv");
  CHECK(tamrl::build_tasks(recs).size() == 5);
}

TEST_CASE("eval on a perfect predictions file reports rmse 0 and r2 1") {
  Scratch s("tamrl_cli_eval");
  REQUIRE(run("synth --sites 3 --days 60 --seed 3 --out " + s.str()) == 0);

  // predictions equal to truth, built from the generated data itself
  std::vector<tamrl::SiteRecord> recs = tamrl::load_site_csv(s.str() + "/data.csv");
  std::vector<tamrl::PredictionRow> rows;
  for (const tamrl::SiteRecord& r : recs) {
    if (!r.gpp || !r.nee) continue;
    rows.push_back({r.site_id, tamrl::format_iso_date(r.date), "gpp", *r.gpp, *r.gpp, r.qc});
    rows.push_back({r.site_id, tamrl::format_iso_date(r.date), "nee", *r.nee, *r.nee, r.qc});
  }
  tamrl::save_predictions(s.str() + "/perfect.csv", rows);
  REQUIRE(run("--out " + s.str() + " eval --pred " + s.str() + "/perfect.csv") == 0);

  std::ifstream is(s.str() + "/metrics_by_site.csv");
  REQUIRE(is.good());
  std::string line;
  std::getline(is, line);  // header
  int data_lines = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ++data_lines;
    // site_id,target,rmse,r2,...
    std::stringstream ss(line);
    std::string site, target, rmse_s, r2_s;
    std::getline(ss, site, ',');
    std::getline(ss, target, ',');
    std::getline(ss, rmse_s, ',');
    std::getline(ss, r2_s, ',');
    CHECK(std::stod(rmse_s) == 0.0);
    CHECK(std::stod(r2_s) == 1.0);
  }
  CHECK(data_lines == 6);  // 3 sites x 2 targets
}

TEST_CASE("tiny pipeline runs end to end and replays deterministically") {
  Scratch a("tamrl_cli_pipe_a"), b("tamrl_cli_pipe_b");
  std::string cfg_path = a.str() + "/tiny.cfg";
  std::ofstream(cfg_path) << "decoder_hidden=8\nencoder_hidden=4\nembed_dim=4\n"
                          << "generator_hidden=8\nstage1_epochs=1\nstage2_epochs=1\n"
                          << "ensemble=2\nsynth_sites=5\nsynth_days=150\nseed=11\n";
  for (const Scratch* s : {&a, &b}) {
    std::string base = "--config " + cfg_path + " --out " + s->str() + " ";
    REQUIRE(run(base + "synth") == 0);
    REQUIRE(run(base + "pretrain") == 0);
    REQUIRE(run(base + "train") == 0);
    REQUIRE(run(base + "infer") == 0);
    REQUIRE(run(base + "report") == 0);
  }
  for (const char* f : {"data.csv", "stage1_m0.ckpt", "stage1_m1.ckpt", "tamrl_m0.ckpt",
                        "ctlstm_m0.ckpt", "predictions_tamrl.csv", "predictions_tamlstm.csv",
                        "predictions_ctlstm.csv", "metrics_by_site.csv", "metrics_by_igbp.csv",
                        "metrics_by_koppen.csv", "relative_rmse.csv", "scatter_sites.csv"}) {
    CAPTURE(f);
    CHECK(slurp(a.str() + "/" + f) == slurp(b.str() + "/" + f));
  }

  // every held-out gpp prediction obeys the inference clipping
  std::vector<tamrl::PredictionRow> rows =
      tamrl::load_predictions(a.str() + "/predictions_tamrl.csv");
  CHECK(!rows.empty());
  for (const tamrl::PredictionRow& r : rows) {
    if (r.target == "gpp") CHECK(r.pred >= 0.0);
  }
}
