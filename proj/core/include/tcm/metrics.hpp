#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tcm/net.hpp"
#include "tcm/oracle.hpp"
#include "tcm/rng.hpp"

namespace tcm {

struct MetricRecord {
  std::size_t iteration = 0;
  double one_step_div = 0.0;
  double two_step_div = 0.0;
  std::vector<std::pair<double, double>> dfid_grid;        // (t, denoising divergence)
  std::vector<std::pair<double, double>> oracle_gap_grid;  // (t, mean endpoint error)
  std::size_t sample_count = 0;
};

// f(T * eps, T); n * d points.
std::vector<double> sample_onestep(const CmParams& p, std::size_t n, Rng& rng,
                                   const NoiseSpec& spec);

// x0_hat = f(T*eps, T); renoise to t_mid with fresh noise; f(x_mid, t_mid).
std::vector<double> sample_twostep(const CmParams& p, std::size_t n, double t_mid, Rng& rng,
                                   const NoiseSpec& spec);

// 2-Wasserstein between equal-size point multisets: exact optimal assignment
// up to kExactW2Limit points, sliced estimate (64 fixed-seed projections)
// above it.
inline constexpr std::size_t kExactW2Limit = 512;
double w2_exact(const std::vector<double>& a, const std::vector<double>& b, std::size_t d);
double w2_sliced(const std::vector<double>& a, const std::vector<double>& b, std::size_t d);
double w2(const std::vector<double>& a, const std::vector<double>& b, std::size_t d);

// W2 between model-denoised perturbed data and fresh data at noise level t.
double denoising_divergence(const CmParams& p, double t, const Dataset& data, std::size_t n,
                            Rng& rng);

// Mean distance between f(x_t, t) and the PF ODE oracle endpoint.
double oracle_gap(const CmParams& p, double t, const Dataset& data, std::size_t n, Rng& rng,
                  std::size_t steps = 400);

// Fraction of samples assigned (nearest-center) to each dataset mode.
// Collapse detector: a trained model should cover every mode.
std::vector<double> mode_fractions(const std::vector<double>& samples, const Dataset& data);
std::size_t modes_covered(const std::vector<double>& samples, const Dataset& data,
                          double min_fraction = 0.02);

MetricRecord evaluate_checkpoint(const CmParams& p, const Dataset& data,
                                 const std::vector<double>& t_grid, std::size_t n,
                                 std::uint64_t seed, std::size_t gap_n = 0);

}  // namespace tcm
