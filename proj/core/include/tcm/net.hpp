#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tcm/array.hpp"
#include "tcm/tape.hpp"

namespace tcm {

// c_skip / c_out / c_in coefficient functions of the EDM parameterization.
// c_skip(0) = 1 and c_out(0) = 0 hold analytically, which forces the
// boundary identity f(x, 0) = x regardless of the free-form network.
struct CoeffSpec {
  double sigma_data = 0.5;

  double c_skip(double t) const {
    return sigma_data * sigma_data / (sigma_data * sigma_data + t * t);
  }
  double c_out(double t) const {
    return t * sigma_data / std::sqrt(sigma_data * sigma_data + t * t);
  }
  double c_in(double t) const { return 1.0 / std::sqrt(sigma_data * sigma_data + t * t); }
};

struct MlpArch {
  std::size_t in_dim = 2;
  std::size_t hidden = 256;
  std::size_t depth = 3;          // hidden layer count
  std::size_t fourier = 64;       // random Fourier features on log t
  double fourier_scale = 1.0;

  bool operator==(const MlpArch&) const = default;
};

// Time-conditioned MLP weights plus the frozen Fourier time embedding.
// Immutable snapshot semantics: the trainer replaces the whole value on
// every step, so concurrent readers are safe.
struct CmParams {
  MlpArch arch;
  double sigma_data = 0.5;
  Array fourier_w;              // [fourier], frozen
  Array fourier_b;              // [fourier], frozen
  std::vector<Array> weights;   // W1, b1, ..., Wout, bout

  double t_prime = 0.0;         // > 0 only for stage-2 checkpoints
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
};

// He-initialized hidden layers, zero final layer: the model starts exactly
// on the skip path f(x, t) = c_skip(t) * x.
CmParams init_params(std::uint64_t seed, const MlpArch& arch, double sigma_data);

// Forward passes record onto the caller's tape. `x` is a constant [B x d]
// node; `t` holds one time per row. When `trainable` is set the weights are
// registered as parameter leaves and their node ids returned in param_ids.
struct ForwardNodes {
  Tape::NodeId out = -1;
  std::vector<Tape::NodeId> param_ids;  // empty unless trainable
};

// F_theta: the free-form MLP on concat(scaled x, fourier(log t)).
ForwardNodes raw_forward(Tape& tape, const CmParams& p, Tape::NodeId x,
                         const std::vector<double>& t, bool trainable);

// f_theta(x, t) = c_out(t) * F_theta(x, t) + c_skip(t) * x.
ForwardNodes cm_forward(Tape& tape, const CmParams& p, Tape::NodeId x,
                        const std::vector<double>& t, bool trainable);

// Convenience non-recording evaluation on a throwaway tape. Bit-identical
// to the recorded path (same code underneath).
std::vector<double> cm_eval(const CmParams& p, const std::vector<double>& x,
                            const std::vector<double>& t);

// Student above the dividing time, frozen stage-1 teacher below it.
struct TruncPair {
  CmParams student;
  CmParams frozen_teacher;
  double t_prime = 1.0;
};

// Row-wise splice per the indicator on t >= t_prime. The teacher branch is
// always evaluated with gradients stopped; only the student rows at
// t >= t_prime carry gradient.
ForwardNodes trunc_forward(Tape& tape, const TruncPair& pair, Tape::NodeId x,
                           const std::vector<double>& t, bool trainable_student);

std::vector<double> trunc_eval(const TruncPair& pair, const std::vector<double>& x,
                               const std::vector<double>& t);

// "tcm-ckpt v1" header (key=value metadata) followed by little-endian
// 64-bit floats per array, each preceded by its shape.
void save_checkpoint(const CmParams& p, const std::string& path);
CmParams load_checkpoint(const std::string& path);

}  // namespace tcm
