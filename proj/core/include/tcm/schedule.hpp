#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "tcm/rng.hpp"

namespace tcm {

// Stage-dependent curriculum for r, the adjacent-time contraction factor.
// Stage 1 grows r from 1 - 1/base toward the cap in steps of `period`
// iterations; stage 2 holds it at the cap.
struct RProfile {
  double base = 2.0;
  std::size_t period = 25000;
  double cap = 0.999;
  bool constant_at_cap = false;  // stage-2 behaviour
};

// r at a 1-based training iteration; monotone nondecreasing, bounded by cap.
double r_at(std::size_t iteration, const RProfile& profile);

// Adjacent-time gap: (1 + 8*sigmoid(-t)) * (1 - r) * t, clamped so that
// t - delta stays >= t_min.
double delta_t(double t, double r, double t_min);

// (boundary count, consistency count) = (floor(B*rho), B - floor(B*rho)).
std::pair<std::size_t, std::size_t> split_batch(std::size_t batch, double rho);

struct TimeSamplerSpec {
  enum class Kind { kLogNormal, kLogStudentT };
  Kind kind = Kind::kLogNormal;
  double mu = -1.1;
  double sigma = 2.0;
  double nu = 0.01;       // log-Student-t only
  double t_prime = 1.0;   // truncation floor for log-Student-t
};

// exp(mu + sigma*z), clamped into [t_min, t_max].
std::vector<double> sample_lognormal(double mu, double sigma, std::size_t n, Rng& rng,
                                     double t_min, double t_max);

// ln t ~ location-scale Student-t(nu), rejection-truncated to (t_prime, t_max].
// Throws SamplingError after 10000 rejected draws for a single sample.
std::vector<double> sample_log_student_t(double mu, double sigma, double nu, double t_prime,
                                         double t_max, std::size_t n, Rng& rng);

std::vector<double> sample_times(const TimeSamplerSpec& spec, std::size_t n, Rng& rng,
                                 double t_min, double t_max);

}  // namespace tcm
