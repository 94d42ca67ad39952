#include "tcm/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tcm/errors.hpp"

namespace tcm {

double r_at(std::size_t iteration, const RProfile& profile) {
  if (iteration < 1) throw std::invalid_argument("r_at: iteration must be >= 1");
  if (profile.constant_at_cap) return profile.cap;
  const double k = std::ceil(static_cast<double>(iteration) / static_cast<double>(profile.period));
  const double r = 1.0 - std::pow(profile.base, -k);
  return std::min(r, profile.cap);
}

double delta_t(double t, double r, double t_min) {
  const double raw = (1.0 + 8.0 / (1.0 + std::exp(t))) * (1.0 - r) * t;
  return std::min(raw, t - t_min);
}

std::pair<std::size_t, std::size_t> split_batch(std::size_t batch, double rho) {
  if (batch < 2) throw ConfigError("split_batch: batch must be >= 2");
  if (rho <= 0.0 || rho >= 1.0) throw ConfigError("split_batch: rho must lie in (0, 1)");
  const auto nb = static_cast<std::size_t>(std::floor(static_cast<double>(batch) * rho));
  if (nb == 0 || nb == batch)
    throw ConfigError("split_batch: floor(batch*rho) = " + std::to_string(nb) +
                      " leaves an empty sub-batch");
  return {nb, batch - nb};
}

std::vector<double> sample_lognormal(double mu, double sigma, std::size_t n, Rng& rng,
                                     double t_min, double t_max) {
  if (sigma < 0.0) throw std::invalid_argument("sample_lognormal: sigma must be >= 0");
  std::vector<double> out(n);
  for (auto& t : out)
    t = std::clamp(std::exp(mu + sigma * rng.normal()), t_min, t_max);
  return out;
}

namespace {

// Marsaglia-Tsang, with the shape < 1 boost Gamma(a) = Gamma(a+1) * U^(1/a).
double sample_gamma(double shape, Rng& rng) {
  if (shape < 1.0) {
    const double u = std::max(rng.uniform(), 1e-300);
    return sample_gamma(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double sample_student_t(double nu, Rng& rng) {
  const double z = rng.normal();
  const double chi2 = 2.0 * sample_gamma(0.5 * nu, rng);
  return z / std::sqrt(chi2 / nu);
}

}  // namespace

std::vector<double> sample_log_student_t(double mu, double sigma, double nu, double t_prime,
                                         double t_max, std::size_t n, Rng& rng) {
  if (sigma <= 0.0 || nu <= 0.0)
    throw std::invalid_argument("sample_log_student_t: sigma and nu must be positive");
  if (t_prime >= t_max)
    throw std::invalid_argument("sample_log_student_t: t_prime must be below t_max");
  const double lo = std::log(t_prime), hi = std::log(t_max);
  constexpr int kMaxRetries = 10000;

  std::vector<double> out(n);
  for (auto& t : out) {
    int tries = 0;
    for (;;) {
      const double u = mu + sigma * sample_student_t(nu, rng);
      if (u > lo && u <= hi) {
        t = std::exp(u);
        break;
      }
      if (++tries >= kMaxRetries)
        throw SamplingError(
            "sample_log_student_t: retry cap exhausted (mu=" + std::to_string(mu) +
            " sigma=" + std::to_string(sigma) + " nu=" + std::to_string(nu) +
            " window (" + std::to_string(t_prime) + ", " + std::to_string(t_max) + "])");
    }
  }
  return out;
}

std::vector<double> sample_times(const TimeSamplerSpec& spec, std::size_t n, Rng& rng,
                                 double t_min, double t_max) {
  switch (spec.kind) {
    case TimeSamplerSpec::Kind::kLogNormal:
      return sample_lognormal(spec.mu, spec.sigma, n, rng, t_min, t_max);
    case TimeSamplerSpec::Kind::kLogStudentT:
      return sample_log_student_t(spec.mu, spec.sigma, spec.nu, spec.t_prime, t_max, n, rng);
  }
  throw std::logic_error("sample_times: unreachable");
}

}  // namespace tcm
