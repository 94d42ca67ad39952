#include "tcm/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "tcm/errors.hpp"

namespace tcm {

namespace {

const std::map<std::string, std::string>& key_registry() {
  static const std::map<std::string, std::string> kDefaults = {
      {"dataset.name", "ring8"},
      {"dataset.n", "2048"},
      {"dataset.d", "2"},
      {"dataset.seed", "7"},
      {"noise.t_min", "0.002"},
      {"noise.T", "80"},
      {"noise.sigma_data", "0.5"},
      {"arch.hidden", "256"},
      {"arch.depth", "3"},
      {"arch.fourier", "64"},
      {"arch.fourier_scale", "1"},
      {"loss.c", "0.042426406871192851"},  // 0.03 * sqrt(2)
      {"loss.omega", "unit"},
      {"loss.w_b", "0.1"},
      {"loss.rho", "0.25"},
      {"time.kind", "log-student-t"},
      {"time.mu", "auto"},  // auto = ln(t_prime)
      {"time.sigma", "0.2"},
      {"time.nu", "0.01"},
      {"time.t_prime", "1"},
      {"schedule.base", "2"},
      {"schedule.period", "25000"},
      {"schedule.r_cap", "0.999"},
      {"opt.lr_schedule", "constant"},
      {"opt.lr", "0.0003"},
      {"opt.t_ref", "8000"},
      {"opt.alpha_ref", "0.0005"},
      {"opt.beta1", "0.9"},
      {"opt.beta2", "0.999"},
      {"ema.beta", "0.9999"},
      {"train.batch", "256"},
      {"train.iters", "20000"},
      {"train.log_every", "200"},
      {"train.ckpt_every", "0"},
      {"train.seed", "0"},
      {"guard.grad_ceiling", "100"},
      {"guard.patience", "10"},
      {"eval.n", "2048"},
      {"eval.t_grid", "0.2,0.5,1,2,5,80"},
      {"eval.gap_n", "128"},
  };
  return kDefaults;
}

}  // namespace

Config Config::defaults() {
  Config c;
  c.kv_ = key_registry();
  return c;
}

Config Config::from_string(const std::string& text) {
  Config c = defaults();
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> errors;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(line_no) + ": missing '=' in '" + line + "'");
      continue;
    }
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (!key_registry().contains(key)) {
      errors.push_back("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      continue;
    }
    c.kv_[key] = value;
  }
  if (!errors.empty()) {
    std::string msg = "config errors:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

Config Config::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return from_string(ss.str());
}

void Config::set(const std::string& key, const std::string& value) {
  if (!key_registry().contains(key)) throw ConfigError("unknown config key '" + key + "'");
  kv_[key] = value;
}

const std::string& Config::get(const std::string& key) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key) const {
  const std::string& s = get(key);
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' has non-numeric value '" + s + "'");
  }
}

std::size_t Config::get_size(const std::string& key) const {
  const double v = get_double(key);
  if (v < 0 || v != std::floor(v))
    throw ConfigError("config key '" + key + "' must be a nonnegative integer");
  return static_cast<std::size_t>(v);
}

std::uint64_t Config::get_u64(const std::string& key) const {
  return static_cast<std::uint64_t>(get_size(key));
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& [k, v] : kv_) {  // std::map iterates sorted
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

std::uint64_t Config::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : serialize()) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

NoiseSpec Config::noise() const {
  NoiseSpec n;
  n.t_min = get_double("noise.t_min");
  n.t_max = get_double("noise.T");
  n.sigma_data = get_double("noise.sigma_data");
  if (!(n.t_min > 0.0 && n.t_min < n.t_max))
    throw ConfigError("noise: require 0 < t_min < T");
  if (n.sigma_data <= 0.0) throw ConfigError("noise.sigma_data must be positive");
  return n;
}

TrainerConfig Config::trainer(int stage) const {
  TrainerConfig t;
  t.noise = noise();

  t.arch.in_dim = get_size("dataset.d");
  t.arch.hidden = get_size("arch.hidden");
  t.arch.depth = get_size("arch.depth");
  t.arch.fourier = get_size("arch.fourier");
  t.arch.fourier_scale = get_double("arch.fourier_scale");

  t.loss.c = get_double("loss.c");
  if (t.loss.c < 0.0) throw ConfigError("loss.c must be >= 0");
  const std::string& omega = get("loss.omega");
  if (omega == "unit") t.loss.omega = LossConfig::Omega::kUnit;
  else if (omega == "dt_over_cout2") t.loss.omega = LossConfig::Omega::kDtOverCout2;
  else throw ConfigError("loss.omega must be 'unit' or 'dt_over_cout2'");
  t.loss.w_b = get_double("loss.w_b");
  t.loss.rho = get_double("loss.rho");
  if (t.loss.w_b < 0.0) throw ConfigError("loss.w_b must be >= 0");
  if (t.loss.rho <= 0.0 || t.loss.rho >= 1.0) throw ConfigError("loss.rho must lie in (0,1)");

  const std::string& kind = get("time.kind");
  t.time.t_prime = get_double("time.t_prime");
  if (t.time.t_prime <= t.noise.t_min || t.time.t_prime >= t.noise.t_max)
    throw ConfigError("time.t_prime must lie in (t_min, T)");
  t.time.sigma = get_double("time.sigma");
  t.time.nu = get_double("time.nu");
  if (get("time.mu") == "auto")
    t.time.mu = std::log(t.time.t_prime);
  else
    t.time.mu = get_double("time.mu");
  if (kind == "log-normal") t.time.kind = TimeSamplerSpec::Kind::kLogNormal;
  else if (kind == "log-student-t") t.time.kind = TimeSamplerSpec::Kind::kLogStudentT;
  else throw ConfigError("time.kind must be 'log-normal' or 'log-student-t'");
  if (stage == 1 && t.time.kind != TimeSamplerSpec::Kind::kLogNormal)
    throw ConfigError("stage 1 requires time.kind=log-normal");
  if (stage == 2 && t.time.kind != TimeSamplerSpec::Kind::kLogStudentT)
    throw ConfigError("stage 2 requires time.kind=log-student-t");

  t.schedule.base = get_double("schedule.base");
  t.schedule.period = get_size("schedule.period");
  t.schedule.cap = get_double("schedule.r_cap");
  t.schedule.constant_at_cap = (stage == 2);
  if (t.schedule.cap <= 0.0 || t.schedule.cap >= 1.0)
    throw ConfigError("schedule.r_cap must lie in (0,1)");

  const std::string& lrs = get("opt.lr_schedule");
  if (lrs == "constant") t.lr.kind = LrSchedule::Kind::kConstant;
  else if (lrs == "inv_sqrt") t.lr.kind = LrSchedule::Kind::kInvSqrt;
  else throw ConfigError("opt.lr_schedule must be 'constant' or 'inv_sqrt'");
  t.lr.lr = get_double("opt.lr");
  t.lr.t_ref = get_double("opt.t_ref");
  t.lr.alpha_ref = get_double("opt.alpha_ref");
  t.adam.beta1 = get_double("opt.beta1");
  t.adam.beta2 = get_double("opt.beta2");

  t.ema_beta = get_double("ema.beta");
  if (t.ema_beta < 0.0 || t.ema_beta > 1.0) throw ConfigError("ema.beta must lie in [0,1]");

  t.batch = get_size("train.batch");
  t.iters = get_size("train.iters");
  t.log_every = get_size("train.log_every");
  t.ckpt_every = get_size("train.ckpt_every");
  t.seed = get_u64("train.seed");
  t.grad_ceiling = get_double("guard.grad_ceiling");
  t.guard_patience = static_cast<int>(get_size("guard.patience"));
  if (t.batch < 2) throw ConfigError("train.batch must be >= 2");
  return t;
}

Dataset Config::build_dataset() const {
  return make_dataset(get("dataset.name"), get_size("dataset.n"), get_size("dataset.d"),
                      get_u64("dataset.seed"), get_double("noise.sigma_data"));
}

std::vector<double> Config::eval_t_grid() const {
  std::vector<double> grid;
  std::istringstream ss(get("eval.t_grid"));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) grid.push_back(std::stod(tok));
  }
  if (grid.empty()) throw ConfigError("eval.t_grid must name at least one time");
  return grid;
}

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

void save_manifest(const RunManifest& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_manifest: cannot open " + path);
  f << "{\n";
  char hex[19];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(m.config_hash));
  f << "  \"config_hash\": \"" << hex << "\",\n";
  f << "  \"code_version\": \"" << m.code_version << "\",\n";
  f << "  \"started_at\": \"" << m.started_at << "\",\n";
  f << "  \"finished_at\": \"" << m.finished_at << "\",\n";
  f << "  \"checkpoints\": [";
  for (std::size_t i = 0; i < m.checkpoint_paths.size(); ++i)
    f << (i ? ", " : "") << "\"" << m.checkpoint_paths[i] << "\"";
  f << "],\n";
  f << "  \"final_metrics\": {";
  std::size_t i = 0;
  for (const auto& [k, v] : m.final_metrics)
    f << (i++ ? ", " : "") << "\"" << k << "\": " << format_double(v);
  f << "}\n}\n";
}

void write_metric_log(const std::vector<LogRow>& rows, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_metric_log: cannot open " + path);
  f << "iter,wall_s,loss,loss_boundary,loss_consistency,grad_norm,lr,r\n";
  for (const auto& r : rows)
    f << r.iter << ',' << format_double(r.wall_s) << ',' << format_double(r.loss) << ','
      << format_double(r.loss_boundary) << ',' << format_double(r.loss_consistency) << ','
      << format_double(r.grad_norm) << ',' << format_double(r.lr) << ',' << format_double(r.r)
      << '\n';
}

void write_report(const std::vector<ReportRow>& rows, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_report: cannot open " + path);
  f << "ckpt,iter,t,metric,value,n,seed\n";
  for (const auto& r : rows)
    f << r.ckpt << ',' << r.iter << ',' << format_double(r.t) << ',' << r.metric << ','
      << format_double(r.value) << ',' << r.n << ',' << r.seed << '\n';
}

void write_samples(const std::vector<double>& points, std::size_t d, double sigma_data,
                   const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_samples: cannot open " + path);
  f << "tcm-samples v1 d=" << d << " n=" << points.size() / d
    << " sigma_data=" << format_double(sigma_data) << "\n";
  for (std::size_t i = 0; i < points.size() / d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (j) f << ' ';
      f << format_double(points[i * d + j]);
    }
    f << "\n";
  }
}

}  // namespace tcm
