#include "tcm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "tcm/errors.hpp"

namespace tcm {

namespace {

std::vector<double> scaled_add(const std::vector<double>& x, const std::vector<double>& eps,
                               const std::vector<double>& t, std::size_t d) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < d; ++j)
      out[i * d + j] = x[i * d + j] + t[i] * eps[i * d + j];
  return out;
}

void check_teacher_times(const std::vector<double>& t, const std::vector<double>& dt,
                         double t_min) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] - dt[i] < t_min - 1e-12)
      throw std::invalid_argument("pair loss: teacher time t - dt falls below t_min");
}

double grad_l2_norm(const std::vector<Array>& grads) {
  double s = 0.0;
  for (const auto& g : grads)
    for (double v : g.data) s += v * v;
  return std::sqrt(s);
}

}  // namespace

Tape::NodeId pseudo_huber(Tape& tape, Tape::NodeId a, Tape::NodeId b, double c) {
  Tape::NodeId diff = tape.sub(a, b);
  Tape::NodeId s = tape.sum_rows(tape.mul(diff, diff));
  return tape.add_scalar(tape.sqrt_safe(tape.add_scalar(s, c * c)), -c);
}

double loss_weight(double t, double dt, const LossConfig& cfg, const CoeffSpec& coeff) {
  switch (cfg.omega) {
    case LossConfig::Omega::kUnit:
      return 1.0 / dt;
    case LossConfig::Omega::kDtOverCout2: {
      const double co = coeff.c_out(t);
      return 1.0 / (co * co);
    }
  }
  return 1.0 / dt;
}

LossNodes ct_pair_loss(Tape& tape, const CmParams& student, const std::vector<double>& x,
                       const std::vector<double>& eps, const std::vector<double>& t,
                       const std::vector<double>& dt, const LossConfig& cfg, double t_min,
                       const CmParams* teacher) {
  const std::size_t batch = t.size(), d = x.size() / batch;
  check_teacher_times(t, dt, t_min);

  std::vector<double> t_teacher(batch);
  for (std::size_t i = 0; i < batch; ++i) t_teacher[i] = t[i] - dt[i];

  Tape::NodeId xs = tape.constant(Array({batch, d}, scaled_add(x, eps, t, d)));
  Tape::NodeId xt = tape.constant(Array({batch, d}, scaled_add(x, eps, t_teacher, d)));

  ForwardNodes s = cm_forward(tape, student, xs, t, /*trainable=*/true);
  ForwardNodes ts =
      cm_forward(tape, teacher ? *teacher : student, xt, t_teacher, /*trainable=*/false);

  const CoeffSpec coeff{student.sigma_data};
  Array w = Array::zeros({batch, 1});
  for (std::size_t i = 0; i < batch; ++i) w.data[i] = loss_weight(t[i], dt[i], cfg, coeff);

  LossNodes out;
  out.param_ids = std::move(s.param_ids);
  out.loss = tape.reduce_mean(
      tape.mul_colvec(pseudo_huber(tape, s.out, ts.out, cfg.c), tape.constant(std::move(w))));
  return out;
}

LossNodes cd_pair_loss(Tape& tape, const CmParams& student, const std::vector<double>& x_t,
                       const std::vector<double>& t, const std::vector<double>& dt,
                       const Dataset& data, const LossConfig& cfg, double t_min,
                       const CmParams* teacher) {
  const std::size_t batch = t.size(), d = x_t.size() / batch;
  check_teacher_times(t, dt, t_min);

  // One Euler step of the PF ODE toward t - dt using the exact score.
  std::vector<double> x_teacher(x_t.size());
  std::vector<double> t_teacher(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    t_teacher[i] = t[i] - dt[i];
    const auto s = exact_score({x_t.data() + i * d, d}, t[i], data);
    for (std::size_t j = 0; j < d; ++j)
      x_teacher[i * d + j] = x_t[i * d + j] + t[i] * s[j] * dt[i];
  }

  Tape::NodeId xs = tape.constant(Array({batch, d}, x_t));
  Tape::NodeId xt = tape.constant(Array({batch, d}, std::move(x_teacher)));
  ForwardNodes s = cm_forward(tape, student, xs, t, /*trainable=*/true);
  ForwardNodes ts =
      cm_forward(tape, teacher ? *teacher : student, xt, t_teacher, /*trainable=*/false);

  const CoeffSpec coeff{student.sigma_data};
  Array w = Array::zeros({batch, 1});
  for (std::size_t i = 0; i < batch; ++i) w.data[i] = loss_weight(t[i], dt[i], cfg, coeff);

  LossNodes out;
  out.param_ids = std::move(s.param_ids);
  out.loss = tape.reduce_mean(
      tape.mul_colvec(pseudo_huber(tape, s.out, ts.out, cfg.c), tape.constant(std::move(w))));
  return out;
}

LossNodes boundary_loss(Tape& tape, const CmParams& student, const CmParams& frozen,
                        const std::vector<double>& x, const std::vector<double>& eps,
                        double t_prime, double dt_prime, const LossConfig& cfg, double t_min) {
  const std::size_t batch = x.size() / frozen.arch.in_dim;
  const std::vector<double> t(batch, t_prime);
  const std::vector<double> dt(batch, dt_prime);
  check_teacher_times(t, dt, t_min);
  const std::vector<double> t_teacher(batch, t_prime - dt_prime);
  const std::size_t d = frozen.arch.in_dim;

  Tape::NodeId xs = tape.constant(Array({batch, d}, scaled_add(x, eps, t, d)));
  Tape::NodeId xt = tape.constant(Array({batch, d}, scaled_add(x, eps, t_teacher, d)));
  ForwardNodes s = cm_forward(tape, student, xs, t, /*trainable=*/true);
  ForwardNodes ts = cm_forward(tape, frozen, xt, t_teacher, /*trainable=*/false);

  const CoeffSpec coeff{student.sigma_data};
  const double w = loss_weight(t_prime, dt_prime, cfg, coeff);

  LossNodes out;
  out.param_ids = std::move(s.param_ids);
  out.loss = tape.scale(tape.reduce_mean(pseudo_huber(tape, s.out, ts.out, cfg.c)), w);
  return out;
}

LossNodes tcm_step_loss(Tape& tape, const TruncPair& pair, const std::vector<double>& x,
                        const std::vector<double>& eps, std::size_t n_boundary,
                        const std::vector<double>& t_consistency, double r,
                        const LossConfig& cfg, double t_min, const TruncPair* teacher) {
  const std::size_t batch = n_boundary + t_consistency.size();
  const std::size_t n_cons = t_consistency.size();
  const std::size_t d = x.size() / batch;
  if (n_boundary == 0 || n_cons == 0)
    throw ConfigError("tcm_step_loss: both sub-batches must be nonempty");
  for (double t : t_consistency)
    if (t <= pair.t_prime)
      throw std::invalid_argument("tcm_step_loss: consistency time at or below t_prime");

  std::vector<double> t(batch), dt(batch);
  for (std::size_t i = 0; i < n_boundary; ++i) t[i] = pair.t_prime;
  for (std::size_t i = 0; i < n_cons; ++i) t[n_boundary + i] = t_consistency[i];
  for (std::size_t i = 0; i < batch; ++i) dt[i] = delta_t(t[i], r, t_min);
  check_teacher_times(t, dt, t_min);
  std::vector<double> t_teacher(batch);
  for (std::size_t i = 0; i < batch; ++i) t_teacher[i] = t[i] - dt[i];

  Tape::NodeId xs = tape.constant(Array({batch, d}, scaled_add(x, eps, t, d)));
  Tape::NodeId xt = tape.constant(Array({batch, d}, scaled_add(x, eps, t_teacher, d)));

  // All student-side times are >= t_prime, so the truncated forward reduces
  // exactly to the student network. The teacher side is the truncated
  // parameterization: frozen stage-1 weights wherever t - dt < t_prime
  // (always true for the boundary rows), stop-gradient student elsewhere.
  ForwardNodes s = cm_forward(tape, pair.student, xs, t, /*trainable=*/true);
  ForwardNodes ts =
      trunc_forward(tape, teacher ? *teacher : pair, xt, t_teacher, /*trainable_student=*/false);

  Tape::NodeId ph = pseudo_huber(tape, s.out, ts.out, cfg.c);

  const CoeffSpec coeff{pair.student.sigma_data};
  Array w = Array::zeros({batch, 1});
  for (std::size_t i = 0; i < batch; ++i) {
    const double base = loss_weight(t[i], dt[i], cfg, coeff);
    // Row coefficients fold in the per-term means and the boundary weight;
    // reduce_mean's 1/batch is undone by the trailing scale.
    if (i < n_boundary)
      w.data[i] = cfg.w_b * base / static_cast<double>(n_boundary);
    else
      w.data[i] = base / static_cast<double>(n_cons);
  }

  LossNodes out;
  out.param_ids = std::move(s.param_ids);
  out.loss = tape.scale(tape.reduce_mean(tape.mul_colvec(ph, tape.constant(std::move(w)))),
                        static_cast<double>(batch));

  const Array& phv = tape.value(ph);
  for (std::size_t i = 0; i < batch; ++i) {
    const double base = loss_weight(t[i], dt[i], cfg, coeff);
    if (i < n_boundary)
      out.boundary_value += base * phv.data[i] / static_cast<double>(n_boundary);
    else
      out.consistency_value += base * phv.data[i] / static_cast<double>(n_cons);
  }
  return out;
}

double lr_at(const LrSchedule& sched, std::size_t step) {
  switch (sched.kind) {
    case LrSchedule::Kind::kConstant:
      return sched.lr;
    case LrSchedule::Kind::kInvSqrt:
      return sched.alpha_ref /
             std::sqrt(std::max(static_cast<double>(step) / sched.t_ref, 1.0));
  }
  return sched.lr;
}

void adam_step(std::vector<Array>& params, const std::vector<Array>& grads, OptState& opt,
               const AdamConfig& cfg, double lr) {
  if (opt.m.empty()) {
    for (const auto& p : params) {
      opt.m.push_back(Array::zeros(p.shape));
      opt.v.push_back(Array::zeros(p.shape));
    }
  }
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: parameter/gradient count mismatch");

  opt.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t j = 0; j < params[k].size(); ++j) {
      const double g = grads[k].data[j];
      if (!std::isfinite(g))
        throw NumericError("adam_step: non-finite gradient in parameter array " +
                           std::to_string(k));
      double& m = opt.m[k].data[j];
      double& v = opt.v[k].data[j];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      params[k].data[j] -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
    }
  }
}

void ema_update(EmaState& ema, const std::vector<Array>& params) {
  if (ema.shadow.empty())
    for (const auto& p : params) ema.shadow.push_back(p);
  for (std::size_t k = 0; k < params.size(); ++k)
    for (std::size_t j = 0; j < params[k].size(); ++j)
      ema.shadow[k].data[j] =
          ema.beta * ema.shadow[k].data[j] + (1.0 - ema.beta) * params[k].data[j];
}

namespace {

// Shared train loop machinery: guard, logging, snapshots.
struct LoopState {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  int bad_streak = 0;

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }

  void guard(double loss, double grad_norm, double ceiling, int patience, std::size_t iter) {
    const bool bad = !std::isfinite(loss) || !std::isfinite(grad_norm) || grad_norm > ceiling;
    bad_streak = bad ? bad_streak + 1 : 0;
    if (bad_streak >= patience)
      throw DivergenceError("training diverged: " + std::to_string(patience) +
                            " consecutive bad steps up to iteration " + std::to_string(iter));
  }
};

CmParams with_weights(const CmParams& base, std::vector<Array> weights, std::uint64_t iter) {
  CmParams p = base;
  p.weights = std::move(weights);
  p.iteration = iter;
  return p;
}

}  // namespace

TrainResult train_stage1(const Dataset& data, const TrainerConfig& cfg, const CmParams* init) {
  CmParams params = init ? *init : init_params(cfg.seed, cfg.arch, cfg.noise.sigma_data);
  const std::size_t start_iter = params.iteration;

  OptState opt;
  EmaState ema{{}, cfg.ema_beta};
  ema_update(ema, params.weights);  // shadow starts equal to the weights
  LoopState loop;
  TrainResult res;

  const std::size_t d = data.d;
  // Clamp sampled times away from t_min so dt stays bounded away from zero.
  const double t_floor = 2.0 * cfg.noise.t_min;

  for (std::size_t i = start_iter + 1; i <= start_iter + cfg.iters; ++i) {
    const double r = r_at(i, cfg.schedule);
    Rng batch_rng(cfg.seed, "batch", i), noise_rng(cfg.seed, "noise", i),
        time_rng(cfg.seed, "time", i);

    std::vector<double> x = draw_batch(data, cfg.batch, batch_rng);
    std::vector<double> eps(cfg.batch * d);
    for (auto& e : eps) e = noise_rng.normal();
    std::vector<double> t =
        sample_times(cfg.time, cfg.batch, time_rng, t_floor, cfg.noise.t_max);
    std::vector<double> dt(cfg.batch);
    for (std::size_t k = 0; k < cfg.batch; ++k) dt[k] = delta_t(t[k], r, cfg.noise.t_min);

    Tape tape;
    LossNodes ln = ct_pair_loss(tape, params, x, eps, t, dt, cfg.loss, cfg.noise.t_min);
    const double loss = tape.value(ln.loss).data[0];
    tape.backward(ln.loss);
    std::vector<Array> grads;
    grads.reserve(ln.param_ids.size());
    for (auto id : ln.param_ids) grads.push_back(tape.grad(id));
    const double gnorm = grad_l2_norm(grads);

    loop.guard(loss, gnorm, cfg.grad_ceiling, cfg.guard_patience, i);
    const double lr = lr_at(cfg.lr, opt.step + 1);
    if (std::isfinite(loss) && std::isfinite(gnorm))
      adam_step(params.weights, grads, opt, cfg.adam, lr);
    ema_update(ema, params.weights);
    params.iteration = i;

    if ((cfg.log_every && i % cfg.log_every == 0) || i == start_iter + cfg.iters)
      res.log.push_back({i, loop.elapsed(), loss, 0.0, loss, gnorm, lr, r});
    if (cfg.ckpt_every && i % cfg.ckpt_every == 0)
      res.snapshots.emplace_back(i, with_weights(params, ema.shadow, i));
  }

  res.params = params;
  res.ema_params = with_weights(params, ema.shadow, params.iteration);
  return res;
}

TrainResult train_stage2(const CmParams& stage1, const Dataset& data, const TrainerConfig& cfg) {
  TruncPair pair{stage1, stage1, cfg.time.t_prime};
  pair.student.t_prime = cfg.time.t_prime;
  pair.student.iteration = 0;
  if (cfg.time.t_prime <= cfg.noise.t_min || cfg.time.t_prime >= cfg.noise.t_max)
    throw ConfigError("train_stage2: t_prime must lie in (t_min, t_max)");

  const auto [n_boundary, n_cons] = split_batch(cfg.batch, cfg.loss.rho);
  const double r = cfg.schedule.cap;  // stage 2 holds r at the cap

  OptState opt;
  EmaState ema{{}, cfg.ema_beta};
  ema_update(ema, pair.student.weights);
  LoopState loop;
  TrainResult res;
  const std::size_t d = data.d;

  for (std::size_t i = 1; i <= cfg.iters; ++i) {
    Rng batch_rng(cfg.seed, "batch2", i), noise_rng(cfg.seed, "noise2", i),
        time_rng(cfg.seed, "time2", i);

    std::vector<double> x = draw_batch(data, cfg.batch, batch_rng);
    std::vector<double> eps(cfg.batch * d);
    for (auto& e : eps) e = noise_rng.normal();
    std::vector<double> t_cons =
        sample_times(cfg.time, n_cons, time_rng, cfg.noise.t_min, cfg.noise.t_max);

    Tape tape;
    LossNodes ln =
        tcm_step_loss(tape, pair, x, eps, n_boundary, t_cons, r, cfg.loss, cfg.noise.t_min);
    const double loss = tape.value(ln.loss).data[0];
    tape.backward(ln.loss);
    std::vector<Array> grads;
    grads.reserve(ln.param_ids.size());
    for (auto id : ln.param_ids) grads.push_back(tape.grad(id));
    const double gnorm = grad_l2_norm(grads);

    loop.guard(loss, gnorm, cfg.grad_ceiling, cfg.guard_patience, i);
    const double lr = lr_at(cfg.lr, opt.step + 1);
    if (std::isfinite(loss) && std::isfinite(gnorm))
      adam_step(pair.student.weights, grads, opt, cfg.adam, lr);
    ema_update(ema, pair.student.weights);
    pair.student.iteration = i;

    if ((cfg.log_every && i % cfg.log_every == 0) || i == cfg.iters)
      res.log.push_back(
          {i, loop.elapsed(), loss, ln.boundary_value, ln.consistency_value, gnorm, lr, r});
    if (cfg.ckpt_every && i % cfg.ckpt_every == 0)
      res.snapshots.emplace_back(i, with_weights(pair.student, ema.shadow, i));
  }

  res.params = pair.student;
  res.ema_params = with_weights(pair.student, ema.shadow, pair.student.iteration);
  return res;
}

}  // namespace tcm
