#include "tcm/net.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "tcm/errors.hpp"
#include "tcm/rng.hpp"

namespace tcm {

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

// Registers all weights on the tape, as parameters or constants.
std::vector<Tape::NodeId> register_weights(Tape& tape, const CmParams& p, bool trainable) {
  std::vector<Tape::NodeId> ids;
  ids.reserve(p.weights.size());
  for (const auto& w : p.weights)
    ids.push_back(trainable ? tape.param(w) : tape.constant(w));
  return ids;
}

}  // namespace

CmParams init_params(std::uint64_t seed, const MlpArch& arch, double sigma_data) {
  CmParams p;
  p.arch = arch;
  p.sigma_data = sigma_data;
  p.seed = seed;

  Rng rng(seed, "init");
  p.fourier_w = Array::zeros({arch.fourier});
  p.fourier_b = Array::zeros({arch.fourier});
  for (auto& v : p.fourier_w.data) v = arch.fourier_scale * rng.normal();
  for (auto& v : p.fourier_b.data) v = 2.0 * std::numbers::pi * rng.uniform();

  const std::size_t width_in = arch.in_dim + arch.fourier;
  std::vector<std::size_t> dims;
  dims.push_back(width_in);
  for (std::size_t l = 0; l < arch.depth; ++l) dims.push_back(arch.hidden);
  dims.push_back(arch.in_dim);

  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Array w = Array::zeros({dims[l], dims[l + 1]});
    const bool final_layer = (l + 2 == dims.size());
    if (!final_layer) {
      const double std = std::sqrt(2.0 / static_cast<double>(dims[l]));
      for (auto& v : w.data) v = std * rng.normal();
    }
    p.weights.push_back(std::move(w));
    p.weights.push_back(Array::zeros({dims[l + 1]}));
  }
  return p;
}

ForwardNodes raw_forward(Tape& tape, const CmParams& p, Tape::NodeId x,
                         const std::vector<double>& t, bool trainable) {
  const Array& xv = tape.value(x);
  const std::size_t batch = xv.rows();
  if (t.size() != batch) throw std::invalid_argument("raw_forward: batch sizes disagree");
  if (xv.cols() != p.arch.in_dim) throw std::invalid_argument("raw_forward: input width mismatch");

  const CoeffSpec coeff{p.sigma_data};

  // Input scaling and the Fourier time embedding are constants w.r.t. theta.
  Array cin_col = Array::zeros({batch, 1});
  for (std::size_t i = 0; i < batch; ++i)
    cin_col.data[i] = coeff.c_in(t[i]) / p.sigma_data;
  Array feats = Array::zeros({batch, p.arch.fourier});
  for (std::size_t i = 0; i < batch; ++i) {
    const double lt = std::log(t[i]);
    for (std::size_t k = 0; k < p.arch.fourier; ++k)
      feats(i, k) = std::cos(p.fourier_w.data[k] * lt + p.fourier_b.data[k]);
  }

  ForwardNodes out;
  auto wids = register_weights(tape, p, trainable);
  if (trainable) out.param_ids = wids;

  Tape::NodeId h = tape.concat_cols(tape.mul_colvec(x, tape.constant(std::move(cin_col))),
                                    tape.constant(std::move(feats)));
  const std::size_t layers = wids.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    h = tape.add_rowvec(tape.matmul(h, wids[2 * l]), wids[2 * l + 1]);
    if (l + 1 < layers) h = tape.silu(h);
  }
  out.out = h;
  return out;
}

ForwardNodes cm_forward(Tape& tape, const CmParams& p, Tape::NodeId x,
                        const std::vector<double>& t, bool trainable) {
  ForwardNodes raw = raw_forward(tape, p, x, t, trainable);
  const std::size_t batch = t.size();
  const CoeffSpec coeff{p.sigma_data};
  Array cout_col = Array::zeros({batch, 1});
  Array cskip_col = Array::zeros({batch, 1});
  for (std::size_t i = 0; i < batch; ++i) {
    cout_col.data[i] = coeff.c_out(t[i]);
    cskip_col.data[i] = coeff.c_skip(t[i]);
  }
  raw.out = tape.add(tape.mul_colvec(raw.out, tape.constant(std::move(cout_col))),
                     tape.mul_colvec(x, tape.constant(std::move(cskip_col))));
  return raw;
}

std::vector<double> cm_eval(const CmParams& p, const std::vector<double>& x,
                            const std::vector<double>& t) {
  Tape tape;
  const std::size_t batch = t.size();
  Tape::NodeId xn = tape.constant(Array({batch, x.size() / batch}, x));
  auto f = cm_forward(tape, p, xn, t, /*trainable=*/false);
  return tape.value(f.out).data;
}

ForwardNodes trunc_forward(Tape& tape, const TruncPair& pair, Tape::NodeId x,
                           const std::vector<double>& t, bool trainable_student) {
  const std::size_t batch = t.size();
  Array mask = Array::zeros({batch, 1});       // 1 where the student branch applies
  Array inv_mask = Array::zeros({batch, 1});
  for (std::size_t i = 0; i < batch; ++i) {
    mask.data[i] = t[i] >= pair.t_prime ? 1.0 : 0.0;
    inv_mask.data[i] = 1.0 - mask.data[i];
  }

  ForwardNodes student = cm_forward(tape, pair.student, x, t, trainable_student);
  ForwardNodes teacher = cm_forward(tape, pair.frozen_teacher, x, t, /*trainable=*/false);
  ForwardNodes out;
  out.param_ids = std::move(student.param_ids);
  out.out = tape.add(tape.mul_colvec(student.out, tape.constant(std::move(mask))),
                     tape.mul_colvec(teacher.out, tape.constant(std::move(inv_mask))));
  return out;
}

std::vector<double> trunc_eval(const TruncPair& pair, const std::vector<double>& x,
                               const std::vector<double>& t) {
  Tape tape;
  const std::size_t batch = t.size();
  Tape::NodeId xn = tape.constant(Array({batch, x.size() / batch}, x));
  auto f = trunc_forward(tape, pair, xn, t, /*trainable_student=*/false);
  return tape.value(f.out).data;
}

void save_checkpoint(const CmParams& p, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f << "tcm-ckpt v1\n";
  f << "arch.in_dim=" << p.arch.in_dim << "\n";
  f << "arch.hidden=" << p.arch.hidden << "\n";
  f << "arch.depth=" << p.arch.depth << "\n";
  f << "arch.fourier=" << p.arch.fourier << "\n";
  f << "arch.fourier_scale=" << format_double(p.arch.fourier_scale) << "\n";
  f << "sigma_data=" << format_double(p.sigma_data) << "\n";
  f << "t_prime=" << format_double(p.t_prime) << "\n";
  f << "seed=" << p.seed << "\n";
  f << "iteration=" << p.iteration << "\n";
  f << "arrays=" << (2 + p.weights.size()) << "\n";
  f << "binary\n";

  auto write_array = [&f](const Array& a) {
    const std::uint32_t rank = static_cast<std::uint32_t>(a.rank());
    f.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
    for (auto s : a.shape) {
      const std::uint64_t v = s;
      f.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    f.write(reinterpret_cast<const char*>(a.data.data()),
            static_cast<std::streamsize>(a.data.size() * sizeof(double)));
  };
  write_array(p.fourier_w);
  write_array(p.fourier_b);
  for (const auto& w : p.weights) write_array(w);
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

CmParams load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string line;
  std::getline(f, line);
  if (line != "tcm-ckpt v1") throw std::runtime_error("load_checkpoint: bad magic in " + path);

  CmParams p;
  std::size_t n_arrays = 0;
  while (std::getline(f, line)) {
    if (line == "binary") break;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("load_checkpoint: malformed header line '" + line + "'");
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "arch.in_dim") p.arch.in_dim = std::stoul(val);
    else if (key == "arch.hidden") p.arch.hidden = std::stoul(val);
    else if (key == "arch.depth") p.arch.depth = std::stoul(val);
    else if (key == "arch.fourier") p.arch.fourier = std::stoul(val);
    else if (key == "arch.fourier_scale") p.arch.fourier_scale = std::stod(val);
    else if (key == "sigma_data") p.sigma_data = std::stod(val);
    else if (key == "t_prime") p.t_prime = std::stod(val);
    else if (key == "seed") p.seed = std::stoull(val);
    else if (key == "iteration") p.iteration = std::stoull(val);
    else if (key == "arrays") n_arrays = std::stoul(val);
    else throw std::runtime_error("load_checkpoint: unknown header key '" + key + "'");
  }
  if (n_arrays < 2) throw std::runtime_error("load_checkpoint: missing arrays in " + path);

  auto read_array = [&f, &path]() {
    std::uint32_t rank = 0;
    f.read(reinterpret_cast<char*>(&rank), sizeof(rank));
    std::vector<std::size_t> shape(rank);
    for (auto& s : shape) {
      std::uint64_t v = 0;
      f.read(reinterpret_cast<char*>(&v), sizeof(v));
      s = static_cast<std::size_t>(v);
    }
    Array a = Array::zeros(shape);
    f.read(reinterpret_cast<char*>(a.data.data()),
           static_cast<std::streamsize>(a.data.size() * sizeof(double)));
    if (!f) throw std::runtime_error("load_checkpoint: truncated arrays in " + path);
    return a;
  };
  p.fourier_w = read_array();
  p.fourier_b = read_array();
  for (std::size_t i = 2; i < n_arrays; ++i) p.weights.push_back(read_array());
  return p;
}

}  // namespace tcm
