#include "tcm/oracle.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "tcm/errors.hpp"

namespace tcm {

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

// log-sum-exp of -||x - x_i||^2 / (2 t^2) over all data points, plus the
// softmax-weighted mean of the data points (reused by score and denoise).
struct MixtureStats {
  double logsum;                // log sum_i exp(e_i)
  std::vector<double> post_mean;  // sum_i softmax_i * x_i
};

MixtureStats mixture_stats(std::span<const double> x, double t, const Dataset& data) {
  if (t <= 0.0) throw std::domain_error("mixture: t must be positive");
  const std::size_t n = data.n(), d = data.d;
  const double inv2t2 = 1.0 / (2.0 * t * t);

  std::vector<double> e(n);
  double emax = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    const double* p = data.points.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = x[j] - p[j];
      s += diff * diff;
    }
    e[i] = -s * inv2t2;
    emax = std::max(emax, e[i]);
  }

  double z = 0.0;
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = std::exp(e[i] - emax);
    z += w;
    const double* p = data.points.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) mean[j] += w * p[j];
  }
  for (std::size_t j = 0; j < d; ++j) mean[j] /= z;
  return {emax + std::log(z), std::move(mean)};
}

std::vector<double> ode_times(double t_start, double t_end, std::size_t steps, OdeGrid grid) {
  std::vector<double> ts(steps + 1);
  if (grid == OdeGrid::kGeometric) {
    const double ratio = std::pow(t_end / t_start, 1.0 / static_cast<double>(steps));
    double t = t_start;
    for (std::size_t i = 0; i <= steps; ++i) {
      ts[i] = t;
      t *= ratio;
    }
    ts[steps] = t_end;
  } else {
    constexpr double rho = 7.0;
    const double a = std::pow(t_start, 1.0 / rho), b = std::pow(t_end, 1.0 / rho);
    for (std::size_t i = 0; i <= steps; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(steps);
      ts[i] = std::pow(a + u * (b - a), rho);
    }
  }
  return ts;
}

}  // namespace

Dataset make_dataset(const std::string& name, std::size_t n, std::size_t d,
                     std::uint64_t seed, double sigma_data) {
  if (d != 2)
    throw ConfigError("make_dataset: built-in datasets are 2-dimensional, got d=" +
                      std::to_string(d));
  if (n < 2) throw ConfigError("make_dataset: need at least 2 points");

  Dataset data;
  data.d = d;
  data.sigma_data = sigma_data;
  data.points.reserve(n * d);
  Rng rng(seed, "dataset");

  if (name == "ring8") {
    const double radius = 1.0, cluster_std = 0.08;
    for (std::size_t k = 0; k < 8; ++k) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / 8.0;
      data.mode_centers.push_back(radius * std::cos(a));
      data.mode_centers.push_back(radius * std::sin(a));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = i % 8;
      data.points.push_back(data.mode_centers[2 * k] + cluster_std * rng.normal());
      data.points.push_back(data.mode_centers[2 * k + 1] + cluster_std * rng.normal());
    }
  } else if (name == "grid25") {
    const double cluster_std = 0.05;
    for (int a = -2; a <= 2; ++a)
      for (int b = -2; b <= 2; ++b) {
        data.mode_centers.push_back(static_cast<double>(a));
        data.mode_centers.push_back(static_cast<double>(b));
      }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = i % 25;
      data.points.push_back(data.mode_centers[2 * k] + cluster_std * rng.normal());
      data.points.push_back(data.mode_centers[2 * k + 1] + cluster_std * rng.normal());
    }
  } else if (name == "two-moons") {
    const double noise = 0.05;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = std::numbers::pi * rng.uniform();
      double px, py;
      if (i % 2 == 0) {
        px = std::cos(a);
        py = std::sin(a);
      } else {
        px = 1.0 - std::cos(a);
        py = 0.5 - std::sin(a);
      }
      data.points.push_back(px + noise * rng.normal());
      data.points.push_back(py + noise * rng.normal());
    }
  } else {
    throw ConfigError("make_dataset: unknown dataset name '" + name + "'");
  }

  normalize_dataset(data);
  return data;
}

void normalize_dataset(Dataset& data) {
  const std::size_t n = data.n(), d = data.d;
  data.norm_mean.assign(d, 0.0);
  data.norm_std.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) data.norm_mean[j] += data.points[i * d + j];
  for (std::size_t j = 0; j < d; ++j) data.norm_mean[j] /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = data.points[i * d + j] - data.norm_mean[j];
      data.norm_std[j] += c * c;
    }
  for (std::size_t j = 0; j < d; ++j)
    data.norm_std[j] = std::sqrt(data.norm_std[j] / static_cast<double>(n));

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      data.points[i * d + j] =
          (data.points[i * d + j] - data.norm_mean[j]) / data.norm_std[j] * data.sigma_data;
  for (std::size_t k = 0; k * d < data.mode_centers.size(); ++k)
    for (std::size_t j = 0; j < d; ++j)
      data.mode_centers[k * d + j] =
          (data.mode_centers[k * d + j] - data.norm_mean[j]) / data.norm_std[j] * data.sigma_data;
}

std::vector<double> perturb(std::span<const double> x, double t, std::span<const double> eps) {
  if (t < 0.0) throw std::domain_error("perturb: t must be nonnegative");
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += t * eps[j];
  return out;
}

double log_density(std::span<const double> x, double t, const Dataset& data) {
  if (t <= 0.0) throw std::domain_error("log_density: t must be positive");
  const auto st = mixture_stats(x, t, data);
  const double d = static_cast<double>(data.d);
  return st.logsum - std::log(static_cast<double>(data.n())) - d * std::log(t) -
         0.5 * d * std::log(2.0 * std::numbers::pi);
}

std::vector<double> exact_score(std::span<const double> x, double t, const Dataset& data) {
  if (t <= 0.0) throw std::domain_error("exact_score: t must be positive");
  auto st = mixture_stats(x, t, data);
  const double inv_t2 = 1.0 / (t * t);
  std::vector<double> s(data.d);
  for (std::size_t j = 0; j < data.d; ++j) s[j] = (st.post_mean[j] - x[j]) * inv_t2;
  return s;
}

std::vector<double> oracle_denoise(std::span<const double> x_t, double t, const Dataset& data) {
  if (t <= 0.0) throw std::domain_error("oracle_denoise: t must be positive");
  return mixture_stats(x_t, t, data).post_mean;
}

std::vector<double> pf_ode_solve(std::span<const double> x_start, double t_start, double t_end,
                                 std::size_t steps, const Dataset& data, OdeGrid grid) {
  if (steps < 1) throw std::invalid_argument("pf_ode_solve: steps must be >= 1");
  if (t_start < t_end) throw std::invalid_argument("pf_ode_solve: t_start must be >= t_end");
  std::vector<double> x(x_start.begin(), x_start.end());
  if (t_start == t_end) return x;
  if (t_end <= 0.0) throw std::domain_error("pf_ode_solve: t_end must be positive");

  const auto ts = ode_times(t_start, t_end, steps, grid);
  const std::size_t d = data.d;
  std::vector<double> xe(d);
  for (std::size_t i = 0; i < steps; ++i) {
    const double t0 = ts[i], t1 = ts[i + 1], h = t1 - t0;
    const auto s0 = exact_score(x, t0, data);
    for (std::size_t j = 0; j < d; ++j) xe[j] = x[j] + h * (-t0 * s0[j]);
    const auto s1 = exact_score(xe, t1, data);
    for (std::size_t j = 0; j < d; ++j)
      x[j] += 0.5 * h * (-t0 * s0[j] - t1 * s1[j]);
    for (double v : x)
      if (!std::isfinite(v))
        throw NumericError("pf_ode_solve: non-finite state at step " + std::to_string(i));
  }
  return x;
}

std::vector<double> oracle_endpoint(std::span<const double> x_t, double t, const Dataset& data,
                                    std::size_t steps, double t_min, OdeGrid grid) {
  if (t < t_min) throw std::invalid_argument("oracle_endpoint: t must be >= t_min");
  if (t == t_min) return {x_t.begin(), x_t.end()};
  return pf_ode_solve(x_t, t, t_min, steps, data, grid);
}

std::vector<double> draw_batch(const Dataset& data, std::size_t n, Rng& rng) {
  std::vector<double> out(n * data.d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = rng.below(data.n());
    for (std::size_t j = 0; j < data.d; ++j) out[i * data.d + j] = data.points[k * data.d + j];
  }
  return out;
}

void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_dataset: cannot open " + path);
  f << "tcm-dataset v1 d=" << data.d << " n=" << data.n()
    << " sigma_data=" << format_double(data.sigma_data) << "\n";
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (std::size_t j = 0; j < data.d; ++j) {
      if (j) f << ' ';
      f << format_double(data.points[i * data.d + j]);
    }
    f << "\n";
  }
  if (!f) throw std::runtime_error("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_dataset: cannot open " + path);
  std::string header;
  std::getline(f, header);
  std::istringstream hs(header);
  std::string magic, ver, dtok, ntok, stok;
  hs >> magic >> ver >> dtok >> ntok >> stok;
  if (magic != "tcm-dataset" || ver != "v1" || dtok.rfind("d=", 0) != 0 ||
      ntok.rfind("n=", 0) != 0 || stok.rfind("sigma_data=", 0) != 0)
    throw std::runtime_error("load_dataset: bad header in " + path);

  Dataset data;
  data.d = std::stoul(dtok.substr(2));
  const std::size_t n = std::stoul(ntok.substr(2));
  data.sigma_data = std::stod(stok.substr(11));
  data.points.resize(n * data.d);
  for (auto& v : data.points)
    if (!(f >> v)) throw std::runtime_error("load_dataset: truncated data in " + path);
  return data;
}

}  // namespace tcm
