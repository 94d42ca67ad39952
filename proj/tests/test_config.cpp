#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "tcm/config.hpp"
#include "tcm/errors.hpp"

using namespace tcm;

TEST_CASE("defaults are loadable and hash-stable") {
  const Config a = Config::defaults();
  const Config b = Config::from_string(a.serialize());
  CHECK(a.hash() == b.hash());
  CHECK(a.serialize() == b.serialize());
}

TEST_CASE("hash is independent of key order") {
  const Config a = Config::from_string("train.seed=3\ndataset.name=grid25\n");
  const Config b = Config::from_string("dataset.name=grid25\ntrain.seed=3\n");
  CHECK(a.hash() == b.hash());
  const Config c = Config::from_string("dataset.name=grid25\ntrain.seed=4\n");
  CHECK(a.hash() != c.hash());
}

TEST_CASE("unknown keys are rejected with every offender named") {
  try {
    (void)Config::from_string("dataset.nam=ring8\ntrain.seeds=1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("dataset.nam") != std::string::npos);
    CHECK(msg.find("train.seeds") != std::string::npos);
  }
}

TEST_CASE("malformed values are rejected") {
  Config cfg = Config::defaults();
  cfg.set("train.iters", "not-a-number");
  CHECK_THROWS_AS((void)cfg.trainer(1), ConfigError);
}

TEST_CASE("stage gating of the time sampler") {
  Config cfg = Config::defaults();  // defaults carry the stage-2 sampler
  CHECK_THROWS_AS((void)cfg.trainer(1), ConfigError);
  CHECK_NOTHROW((void)cfg.trainer(2));

  cfg.set("time.kind", "log-normal");
  cfg.set("time.mu", "-1.1");
  cfg.set("time.sigma", "2.0");
  CHECK_NOTHROW((void)cfg.trainer(1));
  CHECK_THROWS_AS((void)cfg.trainer(2), ConfigError);
}

TEST_CASE("auto mu resolves to ln t_prime") {
  Config cfg = Config::defaults();
  cfg.set("time.mu", "auto");
  cfg.set("time.t_prime", "1");
  const TrainerConfig tc = cfg.trainer(2);
  CHECK(tc.time.mu == doctest::Approx(0.0));
}

TEST_CASE("defaults encode the reference stage-2 hyperparameters") {
  const Config cfg = Config::defaults();
  CHECK(cfg.get("time.t_prime") == "1");
  CHECK(cfg.get_double("loss.w_b") == doctest::Approx(0.1));
  CHECK(cfg.get_double("loss.rho") == doctest::Approx(0.25));
  CHECK(cfg.get_double("time.sigma") == doctest::Approx(0.2));
  CHECK(cfg.get_double("time.nu") == doctest::Approx(0.01));
  CHECK(cfg.get_double("noise.t_min") == doctest::Approx(0.002));
  CHECK(cfg.get_double("noise.T") == doctest::Approx(80.0));
  CHECK(cfg.get_double("noise.sigma_data") == doctest::Approx(0.5));
}

TEST_CASE("comments and blank lines are ignored in files") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "tcm_cfg.cfg").string();
  {
    std::ofstream f(path);
    f << "# a comment\n\ndataset.name=two-moons\n";
  }
  const Config cfg = Config::from_file(path);
  CHECK(cfg.get("dataset.name") == "two-moons");
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 3e-4, 80.0, 0.002, 1e308, -0.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("metric log writer emits the pinned schema") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "tcm_log.csv").string();
  LogRow row;
  row.iter = 200;
  row.loss = 0.5;
  row.lr = 3e-4;
  row.r = 0.5;
  write_metric_log({row}, path);
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  CHECK(header == "iter,wall_s,loss,loss_boundary,loss_consistency,grad_norm,lr,r");
}

TEST_CASE("report writer emits the pinned schema") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "tcm_rep.csv").string();
  write_report({{"ck", 1, 80.0, "one_step_w2", 0.25, 2048, 0}}, path);
  std::ifstream f(path);
  std::string header, line;
  std::getline(f, header);
  std::getline(f, line);
  CHECK(header == "ckpt,iter,t,metric,value,n,seed");
  CHECK(line == "ck,1,80,one_step_w2,0.25,2048,0");
}
