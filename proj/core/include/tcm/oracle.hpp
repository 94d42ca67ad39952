#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tcm/rng.hpp"

namespace tcm {

// Finite point set in R^d. After normalization the empirical mean is ~0 and
// every dimension has std sigma_data, so the EDM schedule (T = 80,
// sigma_data = 0.5) transfers unchanged. The same point set doubles as an
// equal-weight Gaussian mixture with covariance t^2 I whose score is exact.
struct Dataset {
  std::size_t d = 0;
  std::vector<double> points;  // n * d, row-major
  double sigma_data = 0.5;
  std::vector<double> norm_mean;  // pre-normalization statistics
  std::vector<double> norm_std;
  std::vector<double> mode_centers;  // k * d in normalized coordinates; may be empty

  std::size_t n() const { return d == 0 ? 0 : points.size() / d; }
  std::span<const double> point(std::size_t i) const { return {points.data() + i * d, d}; }
};

struct NoiseSpec {
  double t_min = 0.002;
  double t_max = 80.0;
  double sigma_data = 0.5;
};

enum class OdeGrid { kGeometric, kEdmRho7 };

// Built-in generators: "ring8", "grid25", "two-moons" (all d = 2).
Dataset make_dataset(const std::string& name, std::size_t n, std::size_t d,
                     std::uint64_t seed, double sigma_data = 0.5);

// Center and rescale so each dimension has std sigma_data. Records the
// pre-normalization stats and maps mode_centers through the same transform.
void normalize_dataset(Dataset& data);

// x + t * eps.
std::vector<double> perturb(std::span<const double> x, double t, std::span<const double> eps);

// log p_t(x) for the empirical mixture, log-sum-exp stabilized.
double log_density(std::span<const double> x, double t, const Dataset& data);

// grad_x log p_t(x) = (E[x0 | x] - x) / t^2.
std::vector<double> exact_score(std::span<const double> x, double t, const Dataset& data);

// Posterior mean E[x0 | x_t] = x_t + t^2 * score.
std::vector<double> oracle_denoise(std::span<const double> x_t, double t, const Dataset& data);

// Heun integration of dx = -t * score(x, t) dt from t_start down to t_end.
std::vector<double> pf_ode_solve(std::span<const double> x_start, double t_start, double t_end,
                                 std::size_t steps, const Dataset& data,
                                 OdeGrid grid = OdeGrid::kGeometric);

// PF ODE endpoint at t_min; the ground-truth consistency function.
std::vector<double> oracle_endpoint(std::span<const double> x_t, double t, const Dataset& data,
                                    std::size_t steps, double t_min = 0.002,
                                    OdeGrid grid = OdeGrid::kGeometric);

// n * d batch drawn from the dataset with replacement.
std::vector<double> draw_batch(const Dataset& data, std::size_t n, Rng& rng);

// Text format: "tcm-dataset v1 d=<d> n=<n> sigma_data=<v>" + rows.
// Values are shortest round-trip decimals, so write/read/write is byte-stable.
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace tcm
