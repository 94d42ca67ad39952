#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "tcm/net.hpp"
#include "tcm/rng.hpp"

using namespace tcm;

namespace {

std::vector<double> randn_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("coefficients satisfy the boundary identities") {
  const CoeffSpec c{0.5};
  // c_skip + t-weighted c_out partition: at t -> 0, c_skip -> 1, c_out -> 0.
  CHECK(c.c_skip(0.0) == doctest::Approx(1.0));
  CHECK(c.c_out(0.0) == doctest::Approx(0.0));
  // Exact values at t = sigma_data.
  CHECK(c.c_skip(0.5) == doctest::Approx(0.5));
  CHECK(c.c_out(0.5) == doctest::Approx(0.5 * 0.5 / std::sqrt(0.5)));
  CHECK(c.c_in(0.5) == doctest::Approx(1.0 / std::sqrt(0.5)));
}

TEST_CASE("zero-initialized head makes f(x, t) = c_skip(t) * x") {
  MlpArch arch;
  arch.hidden = 16;
  arch.fourier = 8;
  const CmParams p = init_params(3, arch, 0.5);
  const CoeffSpec coeff{0.5};
  Rng rng(4, "net-x");
  const auto x = randn_vec(8 * 2, rng);
  const std::vector<double> t = {0.002, 0.1, 1.0, 5.0, 80.0, 0.5, 2.0, 10.0};
  const auto y = cm_eval(p, x, t);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(y[i * 2 + j] == doctest::Approx(coeff.c_skip(t[i]) * x[i * 2 + j]).epsilon(1e-12));
}

TEST_CASE("init is deterministic in the seed") {
  MlpArch arch;
  const CmParams a = init_params(7, arch, 0.5);
  const CmParams b = init_params(7, arch, 0.5);
  const CmParams c = init_params(8, arch, 0.5);
  REQUIRE(a.weights.size() == b.weights.size());
  for (std::size_t i = 0; i < a.weights.size(); ++i)
    CHECK(a.weights[i].data == b.weights[i].data);
  CHECK(a.weights[0].data != c.weights[0].data);
}

TEST_CASE("recorded and throwaway evaluation agree bitwise") {
  MlpArch arch;
  arch.hidden = 16;
  arch.fourier = 8;
  CmParams p = init_params(5, arch, 0.5);
  Rng wr(6, "net-w");
  for (auto& w : p.weights)
    for (auto& v : w.data) v = 0.2 * wr.normal();
  Rng rng(6, "net-x");
  const auto x = randn_vec(4 * 2, rng);
  const std::vector<double> t = {0.5, 1.0, 2.0, 4.0};

  Tape tape;
  auto xn = tape.constant(Array({4, 2}, x));
  const ForwardNodes f = cm_forward(tape, p, xn, t, /*trainable=*/true);
  const auto& recorded = tape.value(f.out).data;
  const auto direct = cm_eval(p, x, t);
  REQUIRE(recorded.size() == direct.size());
  for (std::size_t i = 0; i < direct.size(); ++i) CHECK(recorded[i] == direct[i]);
}

TEST_CASE("truncated forward splices exactly at t_prime") {
  MlpArch arch;
  arch.hidden = 16;
  arch.fourier = 8;
  CmParams student = init_params(5, arch, 0.5);
  CmParams frozen = init_params(9, arch, 0.5);
  Rng wr(2, "trunc-w");
  for (auto& w : student.weights)
    for (auto& v : w.data) v = 0.3 * wr.normal();
  for (auto& w : frozen.weights)
    for (auto& v : w.data) v = 0.3 * wr.normal();
  const TruncPair pair{student, frozen, 1.0};

  Rng rng(2, "trunc-x");
  const auto x = randn_vec(6 * 2, rng);
  const std::vector<double> t = {0.01, 0.5, 0.999, 1.0, 2.0, 40.0};
  const auto y = trunc_eval(pair, x, t);
  const auto ys = cm_eval(student, x, t);
  const auto yf = cm_eval(frozen, x, t);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto& expect = (t[i] >= 1.0) ? ys : yf;
    for (std::size_t j = 0; j < 2; ++j) CHECK(y[i * 2 + j] == expect[i * 2 + j]);
  }
}

TEST_CASE("checkpoint round-trips byte-exactly") {
  namespace fs = std::filesystem;
  MlpArch arch;
  arch.hidden = 24;
  CmParams p = init_params(11, arch, 0.5);
  Rng wr(1, "ckpt-w");
  for (auto& w : p.weights)
    for (auto& v : w.data) v = wr.normal();
  p.iteration = 1234;
  p.t_prime = 1.0;

  const std::string p1 = (fs::temp_directory_path() / "tcm_ck_a.tcm").string();
  const std::string p2 = (fs::temp_directory_path() / "tcm_ck_b.tcm").string();
  save_checkpoint(p, p1);
  const CmParams back = load_checkpoint(p1);
  CHECK(back.iteration == p.iteration);
  CHECK(back.t_prime == p.t_prime);
  CHECK(back.sigma_data == p.sigma_data);
  CHECK(back.arch.hidden == p.arch.hidden);
  REQUIRE(back.weights.size() == p.weights.size());
  for (std::size_t i = 0; i < p.weights.size(); ++i)
    CHECK(back.weights[i].data == p.weights[i].data);
  CHECK(back.fourier_w.data == p.fourier_w.data);
  CHECK(back.fourier_b.data == p.fourier_b.data);
  save_checkpoint(back, p2);
  CHECK(slurp(p1) == slurp(p2));

  std::ifstream header(p1, std::ios::binary);
  std::string line;
  std::getline(header, line);
  CHECK(line == "tcm-ckpt v1");
}
