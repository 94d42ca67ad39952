#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tcm/net.hpp"
#include "tcm/oracle.hpp"
#include "tcm/schedule.hpp"
#include "tcm/tape.hpp"

namespace tcm {

struct LossConfig {
  double c = 0.03 * 1.41421356237309515;  // Pseudo-Huber constant, 0.03*sqrt(d) at d=2
  enum class Omega { kUnit, kDtOverCout2 };
  Omega omega = Omega::kUnit;
  double w_b = 0.1;   // boundary loss weight
  double rho = 0.25;  // boundary batch fraction
};

// sqrt(||a - b||^2 + c^2) - c, one value per row.
Tape::NodeId pseudo_huber(Tape& tape, Tape::NodeId a, Tape::NodeId b, double c);

struct LossNodes {
  Tape::NodeId loss = -1;
  std::vector<Tape::NodeId> param_ids;
  // Filled by tcm_step_loss only: the two unweighted terms of the truncated
  // objective, for logging.
  double boundary_value = 0.0;
  double consistency_value = 0.0;
};

// Per-sample prefactor omega(t)/dt of the consistency objective.
double loss_weight(double t, double dt, const LossConfig& cfg, const CoeffSpec& coeff);

// Consistency training loss: student at (x + t*eps, t) against the
// stop-gradient teacher at (x + (t - dt)*eps, t - dt). The teacher shares
// the student weights unless `teacher` pins a separate copy (used by the
// gradient battery, which must hold the teacher fixed while differencing).
LossNodes ct_pair_loss(Tape& tape, const CmParams& student, const std::vector<double>& x,
                       const std::vector<double>& eps, const std::vector<double>& t,
                       const std::vector<double>& dt, const LossConfig& cfg, double t_min,
                       const CmParams* teacher = nullptr);

// Consistency distillation: the teacher input comes from one Euler step of
// the PF ODE with the exact score, x_{t-dt} = x_t + t * score(x_t, t) * dt.
LossNodes cd_pair_loss(Tape& tape, const CmParams& student, const std::vector<double>& x_t,
                       const std::vector<double>& t, const std::vector<double>& dt,
                       const Dataset& data, const LossConfig& cfg, double t_min,
                       const CmParams* teacher = nullptr);

// Boundary loss at the dividing time: student at (x + t'*eps, t') against
// the frozen stage-1 teacher at (x + (t' - dt')*eps, t' - dt').
LossNodes boundary_loss(Tape& tape, const CmParams& student, const CmParams& frozen,
                        const std::vector<double>& x, const std::vector<double>& eps,
                        double t_prime, double dt_prime, const LossConfig& cfg, double t_min);

// One-step TCM objective: w_b * boundary term over the first n_boundary rows
// (all at t') plus the consistency term over the remaining rows at the given
// times. Single fused student forward; the teacher side uses the truncated
// parameterization with gradients stopped.
LossNodes tcm_step_loss(Tape& tape, const TruncPair& pair, const std::vector<double>& x,
                        const std::vector<double>& eps, std::size_t n_boundary,
                        const std::vector<double>& t_consistency, double r,
                        const LossConfig& cfg, double t_min,
                        const TruncPair* teacher = nullptr);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct LrSchedule {
  enum class Kind { kConstant, kInvSqrt };
  Kind kind = Kind::kConstant;
  double lr = 3e-4;         // constant mode
  double t_ref = 8000.0;    // inverse-sqrt mode
  double alpha_ref = 5e-4;
};

double lr_at(const LrSchedule& sched, std::size_t step);

struct OptState {
  std::vector<Array> m;
  std::vector<Array> v;
  std::size_t step = 0;
};

// In-place Adam with bias correction. Throws NumericError on a non-finite
// gradient, naming the offending parameter index.
void adam_step(std::vector<Array>& params, const std::vector<Array>& grads, OptState& opt,
               const AdamConfig& cfg, double lr);

struct EmaState {
  std::vector<Array> shadow;
  double beta = 0.9999;
};

void ema_update(EmaState& ema, const std::vector<Array>& params);

struct LogRow {
  std::size_t iter = 0;
  double wall_s = 0.0;
  double loss = 0.0;
  double loss_boundary = 0.0;
  double loss_consistency = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;
  double r = 0.0;
};

struct TrainerConfig {
  NoiseSpec noise;
  MlpArch arch;
  LossConfig loss;
  TimeSamplerSpec time;
  RProfile schedule;
  AdamConfig adam;
  LrSchedule lr;
  double ema_beta = 0.9999;
  std::size_t batch = 256;
  std::size_t iters = 20000;
  std::size_t log_every = 200;
  std::size_t ckpt_every = 0;  // 0 = no intermediate snapshots
  std::uint64_t seed = 0;
  double grad_ceiling = 100.0;
  int guard_patience = 10;
};

struct TrainResult {
  CmParams params;
  CmParams ema_params;
  std::vector<LogRow> log;
  // EMA snapshots at ckpt_every cadence, (iteration, params).
  std::vector<std::pair<std::size_t, CmParams>> snapshots;
};

// Stage 1: standard consistency training with the r curriculum and
// log-normal time sampling. `init` resumes from an existing checkpoint
// (its iteration counter keeps the curriculum position).
TrainResult train_stage1(const Dataset& data, const TrainerConfig& cfg,
                         const CmParams* init = nullptr);

// Stage 2: truncated training. Student starts from the stage-1 weights;
// the frozen teacher is the stage-1 model and never changes.
TrainResult train_stage2(const CmParams& stage1, const Dataset& data, const TrainerConfig& cfg);

}  // namespace tcm
