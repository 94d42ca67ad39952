#include "tcm/battery.hpp"

#include <cmath>

#include "tcm/net.hpp"
#include "tcm/oracle.hpp"
#include "tcm/rng.hpp"
#include "tcm/schedule.hpp"
#include "tcm/tape.hpp"
#include "tcm/train.hpp"

namespace tcm {

namespace {

Array random_array(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Array a = Array::zeros(std::move(shape));
  for (auto& v : a.data) v = lo + (hi - lo) * rng.uniform();
  return a;
}

using Builder = std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)>;

double run_points(std::uint64_t seed, std::size_t points,
                  const std::function<std::vector<Array>(Rng&)>& make_params,
                  const Builder& build, double step = 1e-5) {
  double worst = 0.0;
  for (std::size_t k = 0; k < points; ++k) {
    Rng rng(seed, "battery-point", k);
    worst = std::max(worst, grad_check(build, make_params(rng), step));
  }
  return worst;
}

// Small battery network: 2 layers (one hidden, one output).
MlpArch battery_arch() {
  MlpArch a;
  a.in_dim = 2;
  a.hidden = 8;
  a.depth = 1;
  a.fourier = 8;
  return a;
}

CmParams params_from(const std::vector<Array>& weights, std::uint64_t seed) {
  CmParams p = init_params(seed, battery_arch(), 0.5);
  p.weights = weights;
  return p;
}

std::vector<Array> net_weights(Rng& rng) {
  const MlpArch a = battery_arch();
  std::vector<Array> w;
  w.push_back(random_array({a.in_dim + a.fourier, a.hidden}, rng, -0.5, 0.5));
  w.push_back(random_array({a.hidden}, rng, -0.1, 0.1));
  w.push_back(random_array({a.hidden, a.in_dim}, rng, -0.5, 0.5));
  w.push_back(random_array({a.in_dim}, rng, -0.1, 0.1));
  return w;
}

Dataset battery_dataset(std::uint64_t seed) {
  Dataset data;
  data.d = 2;
  Rng rng(seed, "battery-data");
  for (int i = 0; i < 16; ++i) data.points.push_back(rng.normal());
  data.sigma_data = 0.5;
  return data;
}

}  // namespace

std::vector<std::pair<std::string, double>> gradient_battery(std::uint64_t seed,
                                                             std::size_t points) {
  std::vector<std::pair<std::string, double>> rows;

  auto one = [&](const std::string& name,
                 const std::function<std::vector<Array>(Rng&)>& make_params,
                 const Builder& build, double step = 1e-5) {
    rows.emplace_back(name, run_points(seed, points, make_params, build, step));
  };

  // Primitives, composed down to a scalar with reduce_mean.
  one("matmul",
      [](Rng& r) {
        return std::vector<Array>{random_array({4, 3}, r), random_array({3, 2}, r)};
      },
      [](Tape& t, const std::vector<Tape::NodeId>& p) {
        return t.reduce_mean(t.matmul(p[0], p[1]));
      });
  one("add",
      [](Rng& r) {
        return std::vector<Array>{random_array({3, 3}, r), random_array({3, 3}, r)};
      },
      [](Tape& t, const std::vector<Tape::NodeId>& p) {
        return t.reduce_mean(t.mul(t.add(p[0], p[1]), p[0]));
      });
  one("sub",
      [](Rng& r) {
        return std::vector<Array>{random_array({3, 3}, r), random_array({3, 3}, r)};
      },
      [](Tape& t, const std::vector<Tape::NodeId>& p) {
        return t.reduce_mean(t.mul(t.sub(p[0], p[1]), p[1]));
      });
  one("mul",
      [](Rng& r) {
        return std::vector<Array>{random_array({3, 3}, r), random_array({3, 3}, r)};
      },
      [](Tape& t, const std::vector<Tape::NodeId>& p) {
        return t.reduce_mean(t.mul(p[0], p[1]));
      });
  one("scale",
      [](Rng& r) { return std::vector<Array>{random_array({5}, r)}; },
      [](Tape& t, const std::vector<Tape::NodeId>& p) {
        return t.reduce_mean(t.scale(t.mul(p[0], p[0]), 2.5));
      });
  one("add_rowvec",
      [](Rng& r) {
        return std::vector<Array>{random_array({4, 3}, r), random_array({3}, r)};
      },
      [](Tape& t, const std::vector<Tape::NodeId>& p) {
        return t.reduce_mean(t.silu(t.add_rowvec(p[0], p[1])));
      });
  one("mul_colvec",
      [](Rng& r) {
        return std::vector<Array>{random_array({4, 3}, r), random_array({4, 1}, r)};
      },
      [](Tape& t, const std::vector<Tape::NodeId>& p) {
        return t.reduce_mean(t.mul_colvec(p[0], p[1]));
      });
  one("sqrt",
      [](Rng& r) { return std::vector<Array>{random_array({6}, r, 0.5, 4.0)}; },
      [](Tape& t, const std::vector<Tape::NodeId>& p) { return t.reduce_mean(t.sqrt(p[0])); });
  one("silu",
      [](Rng& r) { return std::vector<Array>{random_array({6}, r, -3.0, 3.0)}; },
      [](Tape& t, const std::vector<Tape::NodeId>& p) { return t.reduce_mean(t.silu(p[0])); });
  one("tanh",
      [](Rng& r) { return std::vector<Array>{random_array({6}, r, -3.0, 3.0)}; },
      [](Tape& t, const std::vector<Tape::NodeId>& p) { return t.reduce_mean(t.tanh(p[0])); });
  one("sum_rows",
      [](Rng& r) { return std::vector<Array>{random_array({4, 3}, r)}; },
      [](Tape& t, const std::vector<Tape::NodeId>& p) {
        return t.reduce_mean(t.mul(t.sum_rows(p[0]), t.sum_rows(p[0])));
      });
  one("reduce_mean",
      [](Rng& r) { return std::vector<Array>{random_array({10}, r)}; },
      [](Tape& t, const std::vector<Tape::NodeId>& p) {
        return t.reduce_mean(t.mul(p[0], p[0]));
      });
  one("concat_cols",
      [](Rng& r) {
        return std::vector<Array>{random_array({3, 2}, r), random_array({3, 4}, r)};
      },
      [](Tape& t, const std::vector<Tape::NodeId>& p) {
        const auto c = t.concat_cols(p[0], p[1]);
        return t.reduce_mean(t.mul(c, c));
      });
  one("pseudo_huber",
      [](Rng& r) {
        return std::vector<Array>{random_array({4, 2}, r), random_array({4, 2}, r)};
      },
      [](Tape& t, const std::vector<Tape::NodeId>& p) {
        return t.reduce_mean(pseudo_huber(t, p[0], p[1], 0.03));
      });

  // Losses on the 2-layer battery net.
  const Dataset data = battery_dataset(seed);
  const std::size_t batch = 4, d = 2;
  auto batch_inputs = [&](std::uint64_t salt) {
    Rng rng(seed, "battery-batch", salt);
    std::vector<double> x(batch * d), eps(batch * d), t(batch), dt(batch);
    for (auto& v : x) v = rng.normal();
    for (auto& v : eps) v = rng.normal();
    for (std::size_t i = 0; i < batch; ++i) {
      t[i] = 0.1 + 3.0 * rng.uniform();
      dt[i] = delta_t(t[i], 0.9, 0.002);
    }
    return std::tuple{x, eps, t, dt};
  };
  const LossConfig loss_cfg;

  // The loss builders register their own parameter leaves, so the check
  // reads analytic gradients off those leaves and rebuilds the loss with
  // perturbed weights for the central differences. The stop-gradient
  // teacher is pinned to the unperturbed weights: the analytic gradient of
  // the self-teacher loss at w equals d/dw' loss(student=w', teacher=w) at
  // w' = w, so differencing the student alone is the matching oracle.
  auto loss_check = [&](const std::string& name, auto&& make_loss) {
    double worst = 0.0;
    for (std::size_t k = 0; k < points; ++k) {
      Rng rng(seed, "battery-point", k);
      std::vector<Array> w = net_weights(rng);
      const CmParams pinned = params_from(w, seed);
      auto eval = [&](const std::vector<Array>& weights, std::vector<Array>* grads) {
        Tape tape;
        CmParams params = params_from(weights, seed);
        LossNodes ln = make_loss(tape, params, pinned, k);
        const double v = tape.value(ln.loss).data[0];
        if (grads) {
          tape.backward(ln.loss);
          grads->clear();
          for (auto id : ln.param_ids) grads->push_back(tape.grad(id));
        }
        return v;
      };
      std::vector<Array> analytic;
      eval(w, &analytic);
      const double step = 1e-5;
      for (std::size_t a = 0; a < w.size(); ++a) {
        for (std::size_t j = 0; j < w[a].size(); ++j) {
          const double orig = w[a].data[j];
          w[a].data[j] = orig + step;
          const double fp = eval(w, nullptr);
          w[a].data[j] = orig - step;
          const double fm = eval(w, nullptr);
          w[a].data[j] = orig;
          const double fd = (fp - fm) / (2.0 * step);
          const double an = analytic[a].data[j];
          worst = std::max(worst, std::abs(an - fd) / std::max(1.0, std::abs(an)));
        }
      }
    }
    rows.emplace_back(name, worst);
  };

  loss_check("ct_pair_loss", [&](Tape& tape, const CmParams& params, const CmParams& pinned,
                                 std::uint64_t k) {
    auto [x, eps, t, dt] = batch_inputs(k);
    return ct_pair_loss(tape, params, x, eps, t, dt, loss_cfg, 0.002, &pinned);
  });
  loss_check("cd_pair_loss", [&](Tape& tape, const CmParams& params, const CmParams& pinned,
                                 std::uint64_t k) {
    auto [x, eps, t, dt] = batch_inputs(k);
    std::vector<double> x_t(x.size());
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t j = 0; j < d; ++j)
        x_t[i * d + j] = x[i * d + j] + t[i] * eps[i * d + j];
    return cd_pair_loss(tape, params, x_t, t, dt, data, loss_cfg, 0.002, &pinned);
  });
  loss_check("boundary_loss", [&](Tape& tape, const CmParams& params, const CmParams&,
                                  std::uint64_t k) {
    auto [x, eps, t, dt] = batch_inputs(k);
    CmParams frozen = init_params(seed + 1, battery_arch(), 0.5);
    Rng wr(seed, "battery-frozen", k);
    frozen.weights = net_weights(wr);
    return boundary_loss(tape, params, frozen, x, eps, 1.0, delta_t(1.0, 0.999, 0.002),
                         loss_cfg, 0.002);
  });
  loss_check("tcm_step_loss", [&](Tape& tape, const CmParams& params, const CmParams& pinned,
                                  std::uint64_t k) {
    auto [x, eps, t, dt] = batch_inputs(k);
    CmParams frozen = init_params(seed + 1, battery_arch(), 0.5);
    Rng wr(seed, "battery-frozen", k);
    frozen.weights = net_weights(wr);
    TruncPair pair{params, frozen, 1.0};
    TruncPair pinned_pair{pinned, frozen, 1.0};
    std::vector<double> t_cons = {1.2, 2.7, 6.0};
    return tcm_step_loss(tape, pair, x, eps, 1, t_cons, 0.999, loss_cfg, 0.002, &pinned_pair);
  });

  // Stop-gradient contract: analytic gradient must be identically zero.
  {
    double worst = 0.0;
    for (std::size_t k = 0; k < points; ++k) {
      Rng rng(seed, "battery-point", k);
      Tape tape;
      Tape::NodeId p = tape.param(random_array({4}, rng));
      Tape::NodeId loss = tape.reduce_mean(tape.mul(tape.stop_grad(p), tape.stop_grad(p)));
      tape.backward(loss);
      for (double g : tape.grad(p).data) worst = std::max(worst, std::abs(g));
    }
    rows.emplace_back("stop_grad (zero)", worst);
  }

  return rows;
}

}  // namespace tcm
