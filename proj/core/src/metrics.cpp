#include "tcm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tcm/parallel.hpp"

namespace tcm {

namespace {

// O(n^3) optimal assignment on a square cost matrix (potentials method).
double assignment_cost(const std::vector<double>& cost, std::size_t n) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) total += cost[(p[j] - 1) * n + (j - 1)];
  return total;
}

double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

}  // namespace

std::vector<double> sample_onestep(const CmParams& p, std::size_t n, Rng& rng,
                                   const NoiseSpec& spec) {
  if (n < 1) throw std::invalid_argument("sample_onestep: n must be >= 1");
  const std::size_t d = p.arch.in_dim;
  std::vector<double> x(n * d);
  for (auto& v : x) v = spec.t_max * rng.normal();
  return cm_eval(p, x, std::vector<double>(n, spec.t_max));
}

std::vector<double> sample_twostep(const CmParams& p, std::size_t n, double t_mid, Rng& rng,
                                   const NoiseSpec& spec) {
  if (t_mid <= spec.t_min || t_mid >= spec.t_max)
    throw std::invalid_argument("sample_twostep: t_mid must lie in (t_min, t_max)");
  const std::size_t d = p.arch.in_dim;
  std::vector<double> x(n * d);
  for (auto& v : x) v = spec.t_max * rng.normal();
  std::vector<double> x0 = cm_eval(p, x, std::vector<double>(n, spec.t_max));
  for (auto& v : x0) v += t_mid * rng.normal();
  return cm_eval(p, x0, std::vector<double>(n, t_mid));
}

double w2_exact(const std::vector<double>& a, const std::vector<double>& b, std::size_t d) {
  if (a.size() != b.size())
    throw std::invalid_argument("w2_exact: point sets must have equal cardinality");
  const std::size_t n = a.size() / d;
  if (n == 0) throw std::invalid_argument("w2_exact: empty point sets");
  std::vector<double> cost(n * n);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j)
      cost[i * n + j] = sq_dist(a.data() + i * d, b.data() + j * d, d);
  });
  return std::sqrt(assignment_cost(cost, n) / static_cast<double>(n));
}

double w2_sliced(const std::vector<double>& a, const std::vector<double>& b, std::size_t d) {
  if (a.size() != b.size())
    throw std::invalid_argument("w2_sliced: point sets must have equal cardinality");
  const std::size_t n = a.size() / d;
  constexpr std::size_t kProjections = 64;
  std::vector<double> acc(kProjections, 0.0);
  parallel_for(kProjections, [&](std::size_t k) {
    Rng rng(0x51cedu, "sliced-projection", k);  // fixed seed: the metric is deterministic
    std::vector<double> dir(d);
    double norm = 0.0;
    for (auto& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    std::vector<double> pa(n), pb(n);
    for (std::size_t i = 0; i < n; ++i) {
      double sa = 0.0, sb = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        sa += a[i * d + j] * dir[j];
        sb += b[i * d + j] * dir[j];
      }
      pa[i] = sa / norm;
      pb[i] = sb / norm;
    }
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = pa[i] - pb[i];
      s += diff * diff;
    }
    acc[k] = s / static_cast<double>(n);
  });
  double mean = 0.0;
  for (double v : acc) mean += v;
  mean /= static_cast<double>(kProjections);
  // One random direction sees 1/d of a displacement's squared length on
  // average; rescale so translated clouds score their true distance.
  return std::sqrt(static_cast<double>(d) * mean);
}

double w2(const std::vector<double>& a, const std::vector<double>& b, std::size_t d) {
  return (a.size() / d <= kExactW2Limit) ? w2_exact(a, b, d) : w2_sliced(a, b, d);
}

double denoising_divergence(const CmParams& p, double t, const Dataset& data, std::size_t n,
                            Rng& rng) {
  const std::size_t d = data.d;
  std::vector<double> clean = draw_batch(data, n, rng);
  for (auto& v : clean) v += t * rng.normal();  // perturb to p_t
  std::vector<double> denoised = cm_eval(p, clean, std::vector<double>(n, t));
  std::vector<double> fresh = draw_batch(data, n, rng);
  return w2(denoised, fresh, d);
}

double oracle_gap(const CmParams& p, double t, const Dataset& data, std::size_t n, Rng& rng,
                  std::size_t steps) {
  const std::size_t d = data.d;
  std::vector<double> x_t = draw_batch(data, n, rng);
  for (auto& v : x_t) v += t * rng.normal();
  std::vector<double> f = cm_eval(p, x_t, std::vector<double>(n, t));
  std::vector<double> errs(n);
  parallel_for(n, [&](std::size_t i) {
    const auto end = oracle_endpoint({x_t.data() + i * d, d}, t, data, steps);
    errs[i] = std::sqrt(sq_dist(f.data() + i * d, end.data(), d));
  });
  double s = 0.0;
  for (double e : errs) s += e;
  return s / static_cast<double>(n);
}

std::vector<double> mode_fractions(const std::vector<double>& samples, const Dataset& data) {
  const std::size_t d = data.d;
  const std::size_t k = data.mode_centers.size() / d;
  if (k == 0) throw std::invalid_argument("mode_fractions: dataset has no mode centers");
  const std::size_t n = samples.size() / d;
  std::vector<double> frac(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < k; ++m) {
      const double dist = sq_dist(samples.data() + i * d, data.mode_centers.data() + m * d, d);
      if (dist < best_d) {
        best_d = dist;
        best = m;
      }
    }
    frac[best] += 1.0;
  }
  for (auto& f : frac) f /= static_cast<double>(n);
  return frac;
}

std::size_t modes_covered(const std::vector<double>& samples, const Dataset& data,
                          double min_fraction) {
  const auto frac = mode_fractions(samples, data);
  std::size_t covered = 0;
  for (double f : frac)
    if (f >= min_fraction) ++covered;
  return covered;
}

MetricRecord evaluate_checkpoint(const CmParams& p, const Dataset& data,
                                 const std::vector<double>& t_grid, std::size_t n,
                                 std::uint64_t seed, std::size_t gap_n) {
  NoiseSpec spec;
  spec.sigma_data = p.sigma_data;
  MetricRecord rec;
  rec.iteration = p.iteration;
  rec.sample_count = n;

  {
    Rng rng(seed, "eval-onestep");
    auto gen = sample_onestep(p, n, rng, spec);
    rec.one_step_div = w2(gen, draw_batch(data, n, rng), data.d);
  }
  {
    Rng rng(seed, "eval-twostep");
    const double t_mid = p.t_prime > 0.0 ? p.t_prime : 1.0;
    auto gen = sample_twostep(p, n, t_mid, rng, spec);
    rec.two_step_div = w2(gen, draw_batch(data, n, rng), data.d);
  }
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    Rng rng(seed, "eval-dfid", k);
    rec.dfid_grid.emplace_back(t_grid[k], denoising_divergence(p, t_grid[k], data, n, rng));
  }
  if (gap_n > 0) {
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
      Rng rng(seed, "eval-gap", k);
      rec.oracle_gap_grid.emplace_back(t_grid[k], oracle_gap(p, t_grid[k], data, gap_n, rng));
    }
  }
  return rec;
}

}  // namespace tcm
