#include "tcm/tape.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace tcm {

namespace {

using MatMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

ConstMatMap as_mat(const Array& a) {
  return ConstMatMap(a.data.data(), static_cast<Eigen::Index>(a.rows()),
                     static_cast<Eigen::Index>(a.cols()));
}
MatMap as_mat(Array& a) {
  return MatMap(a.data.data(), static_cast<Eigen::Index>(a.rows()),
                static_cast<Eigen::Index>(a.cols()));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tape::NodeId Tape::push(Node n, Array v) {
  nodes_.push_back(n);
  values_.push_back(std::move(v));
  grads_.emplace_back();
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::constant(Array v) { return push({Op::kConst}, std::move(v)); }

Tape::NodeId Tape::param(Array v) {
  Node n{Op::kParam};
  n.needs_grad = true;
  return push(n, std::move(v));
}

Tape::NodeId Tape::stop_grad(NodeId a) {
  Node n{Op::kStopGrad, a};
  n.needs_grad = false;  // boundary: nothing upstream of this gets gradient
  return push(n, value(a));
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  const Array& va = value(a);
  const Array& vb = value(b);
  if (va.cols() != vb.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree");
  Array out = Array::zeros({va.rows(), vb.cols()});
  as_mat(out).noalias() = as_mat(va) * as_mat(vb);
  Node n{Op::kMatmul, a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(n, std::move(out));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  const Array& va = value(a);
  const Array& vb = value(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("add: shape mismatch");
  Array out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += vb.data[i];
  Node n{Op::kAdd, a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(n, std::move(out));
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
  const Array& va = value(a);
  const Array& vb = value(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("sub: shape mismatch");
  Array out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= vb.data[i];
  Node n{Op::kSub, a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(n, std::move(out));
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  const Array& va = value(a);
  const Array& vb = value(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("mul: shape mismatch");
  Array out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= vb.data[i];
  Node n{Op::kMul, a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(n, std::move(out));
}

Tape::NodeId Tape::scale(NodeId a, double k) {
  Array out = value(a);
  for (auto& v : out.data) v *= k;
  Node n{Op::kScale, a};
  n.k = k;
  n.needs_grad = nodes_[a].needs_grad;
  return push(n, std::move(out));
}

Tape::NodeId Tape::add_scalar(NodeId a, double k) {
  Array out = value(a);
  for (auto& v : out.data) v += k;
  Node n{Op::kAddScalar, a};
  n.k = k;
  n.needs_grad = nodes_[a].needs_grad;
  return push(n, std::move(out));
}

Tape::NodeId Tape::add_rowvec(NodeId a, NodeId b) {
  const Array& va = value(a);
  const Array& vb = value(b);
  if (vb.size() != va.cols())
    throw std::invalid_argument("add_rowvec: vector length must equal column count");
  Array out = va;
  const std::size_t m = va.rows(), c = va.cols();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < c; ++j) out.data[r * c + j] += vb.data[j];
  Node n{Op::kAddRowVec, a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(n, std::move(out));
}

Tape::NodeId Tape::mul_colvec(NodeId a, NodeId b) {
  const Array& va = value(a);
  const Array& vb = value(b);
  if (vb.size() != va.rows())
    throw std::invalid_argument("mul_colvec: vector length must equal row count");
  Array out = va;
  const std::size_t m = va.rows(), c = va.cols();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < c; ++j) out.data[r * c + j] *= vb.data[r];
  Node n{Op::kMulColVec, a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(n, std::move(out));
}

Tape::NodeId Tape::sqrt(NodeId a) {
  Array out = value(a);
  for (auto& v : out.data) {
    if (v <= 0.0) throw std::domain_error("sqrt: input must be strictly positive");
    v = std::sqrt(v);
  }
  Node n{Op::kSqrt, a};
  n.needs_grad = nodes_[a].needs_grad;
  return push(n, std::move(out));
}

Tape::NodeId Tape::sqrt_safe(NodeId a) {
  Array out = value(a);
  for (auto& v : out.data) {
    if (v < 0.0) throw std::domain_error("sqrt_safe: input must be nonnegative");
    v = std::sqrt(v);
  }
  Node n{Op::kSqrtSafe, a};
  n.needs_grad = nodes_[a].needs_grad;
  return push(n, std::move(out));
}

Tape::NodeId Tape::silu(NodeId a) {
  Array out = value(a);
  for (auto& v : out.data) v = v * sigmoid(v);
  Node n{Op::kSilu, a};
  n.needs_grad = nodes_[a].needs_grad;
  return push(n, std::move(out));
}

Tape::NodeId Tape::tanh(NodeId a) {
  Array out = value(a);
  for (auto& v : out.data) v = std::tanh(v);
  Node n{Op::kTanh, a};
  n.needs_grad = nodes_[a].needs_grad;
  return push(n, std::move(out));
}

Tape::NodeId Tape::sum_rows(NodeId a) {
  const Array& va = value(a);
  const std::size_t m = va.rows(), c = va.cols();
  Array out = Array::zeros({m, 1});
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += va.data[r * c + j];
    out.data[r] = s;
  }
  Node n{Op::kSumRows, a};
  n.needs_grad = nodes_[a].needs_grad;
  return push(n, std::move(out));
}

Tape::NodeId Tape::reduce_mean(NodeId a) {
  const Array& va = value(a);
  if (va.size() == 0) throw std::invalid_argument("reduce_mean: empty input");
  double s = 0.0;
  for (double v : va.data) s += v;
  Node n{Op::kReduceMean, a};
  n.needs_grad = nodes_[a].needs_grad;
  return push(n, Array::scalar(s / static_cast<double>(va.size())));
}

Tape::NodeId Tape::concat_cols(NodeId a, NodeId b) {
  const Array& va = value(a);
  const Array& vb = value(b);
  if (va.rows() != vb.rows())
    throw std::invalid_argument("concat_cols: row counts disagree");
  const std::size_t m = va.rows(), ca = va.cols(), cb = vb.cols();
  Array out = Array::zeros({m, ca + cb});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < ca; ++j) out.data[r * (ca + cb) + j] = va.data[r * ca + j];
    for (std::size_t j = 0; j < cb; ++j) out.data[r * (ca + cb) + ca + j] = vb.data[r * cb + j];
  }
  Node n{Op::kConcatCols, a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(n, std::move(out));
}

const Array& Tape::grad(NodeId id) const {
  const Array& g = grads_[static_cast<std::size_t>(id)];
  if (g.size() == 0)
    throw std::logic_error("grad: node has no gradient (run backward first)");
  return g;
}

void Tape::backward(NodeId root) {
  const Array& rv = value(root);
  if (rv.size() != 1) throw std::invalid_argument("backward: root must be scalar");

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].needs_grad || nodes_[i].op == Op::kParam)
      grads_[i] = Array::zeros(values_[i].shape);
    else
      grads_[i] = Array{};
  }
  if (!nodes_[root].needs_grad) {
    // Root is constant w.r.t. every parameter; all parameter grads stay zero.
    return;
  }
  grads_[root].data[0] = 1.0;

  auto acc = [&](NodeId dst, auto&& fn) {
    if (dst < 0 || !nodes_[dst].needs_grad) return;
    fn(grads_[static_cast<std::size_t>(dst)]);
  };

  for (std::int64_t i = static_cast<std::int64_t>(nodes_.size()) - 1; i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad) continue;
    const Array& g = grads_[static_cast<std::size_t>(i)];
    switch (n.op) {
      case Op::kConst:
      case Op::kParam:
      case Op::kStopGrad:
        break;
      case Op::kMatmul: {
        const Array& va = value(n.a);
        const Array& vb = value(n.b);
        acc(n.a, [&](Array& ga) { as_mat(ga).noalias() += as_mat(g) * as_mat(vb).transpose(); });
        acc(n.b, [&](Array& gb) { as_mat(gb).noalias() += as_mat(va).transpose() * as_mat(g); });
        break;
      }
      case Op::kAdd:
        acc(n.a, [&](Array& ga) { for (std::size_t j = 0; j < g.size(); ++j) ga.data[j] += g.data[j]; });
        acc(n.b, [&](Array& gb) { for (std::size_t j = 0; j < g.size(); ++j) gb.data[j] += g.data[j]; });
        break;
      case Op::kSub:
        acc(n.a, [&](Array& ga) { for (std::size_t j = 0; j < g.size(); ++j) ga.data[j] += g.data[j]; });
        acc(n.b, [&](Array& gb) { for (std::size_t j = 0; j < g.size(); ++j) gb.data[j] -= g.data[j]; });
        break;
      case Op::kMul: {
        const Array& va = value(n.a);
        const Array& vb = value(n.b);
        acc(n.a, [&](Array& ga) { for (std::size_t j = 0; j < g.size(); ++j) ga.data[j] += g.data[j] * vb.data[j]; });
        acc(n.b, [&](Array& gb) { for (std::size_t j = 0; j < g.size(); ++j) gb.data[j] += g.data[j] * va.data[j]; });
        break;
      }
      case Op::kScale:
        acc(n.a, [&](Array& ga) { for (std::size_t j = 0; j < g.size(); ++j) ga.data[j] += n.k * g.data[j]; });
        break;
      case Op::kAddScalar:
        acc(n.a, [&](Array& ga) { for (std::size_t j = 0; j < g.size(); ++j) ga.data[j] += g.data[j]; });
        break;
      case Op::kAddRowVec: {
        const std::size_t m = g.rows(), c = g.cols();
        acc(n.a, [&](Array& ga) { for (std::size_t j = 0; j < g.size(); ++j) ga.data[j] += g.data[j]; });
        acc(n.b, [&](Array& gb) {
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < c; ++j) gb.data[j] += g.data[r * c + j];
        });
        break;
      }
      case Op::kMulColVec: {
        const Array& va = value(n.a);
        const Array& vb = value(n.b);
        const std::size_t m = g.rows(), c = g.cols();
        acc(n.a, [&](Array& ga) {
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < c; ++j) ga.data[r * c + j] += g.data[r * c + j] * vb.data[r];
        });
        acc(n.b, [&](Array& gb) {
          for (std::size_t r = 0; r < m; ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j) s += g.data[r * c + j] * va.data[r * c + j];
            gb.data[r] += s;
          }
        });
        break;
      }
      case Op::kSqrt: {
        const Array& out = values_[static_cast<std::size_t>(i)];
        acc(n.a, [&](Array& ga) {
          for (std::size_t j = 0; j < g.size(); ++j) ga.data[j] += g.data[j] * 0.5 / out.data[j];
        });
        break;
      }
      case Op::kSqrtSafe: {
        const Array& out = values_[static_cast<std::size_t>(i)];
        acc(n.a, [&](Array& ga) {
          for (std::size_t j = 0; j < g.size(); ++j)
            if (out.data[j] > 0.0) ga.data[j] += g.data[j] * 0.5 / out.data[j];
        });
        break;
      }
      case Op::kSilu: {
        const Array& va = value(n.a);
        acc(n.a, [&](Array& ga) {
          for (std::size_t j = 0; j < g.size(); ++j) {
            double s = sigmoid(va.data[j]);
            ga.data[j] += g.data[j] * (s + va.data[j] * s * (1.0 - s));
          }
        });
        break;
      }
      case Op::kTanh: {
        const Array& out = values_[static_cast<std::size_t>(i)];
        acc(n.a, [&](Array& ga) {
          for (std::size_t j = 0; j < g.size(); ++j)
            ga.data[j] += g.data[j] * (1.0 - out.data[j] * out.data[j]);
        });
        break;
      }
      case Op::kSumRows: {
        const Array& va = value(n.a);
        const std::size_t m = va.rows(), c = va.cols();
        acc(n.a, [&](Array& ga) {
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < c; ++j) ga.data[r * c + j] += g.data[r];
        });
        break;
      }
      case Op::kReduceMean: {
        const Array& va = value(n.a);
        const double inv = 1.0 / static_cast<double>(va.size());
        acc(n.a, [&](Array& ga) {
          for (std::size_t j = 0; j < ga.size(); ++j) ga.data[j] += g.data[0] * inv;
        });
        break;
      }
      case Op::kConcatCols: {
        const Array& va = value(n.a);
        const Array& vb = value(n.b);
        const std::size_t m = va.rows(), ca = va.cols(), cb = vb.cols();
        acc(n.a, [&](Array& ga) {
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < ca; ++j) ga.data[r * ca + j] += g.data[r * (ca + cb) + j];
        });
        acc(n.b, [&](Array& gb) {
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < cb; ++j) gb.data[r * cb + j] += g.data[r * (ca + cb) + ca + j];
        });
        break;
      }
    }
  }
}

double grad_check(
    const std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)>& build,
    const std::vector<Array>& params, double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

  auto eval = [&](const std::vector<Array>& p, std::vector<Array>* grads_out) {
    Tape tape;
    std::vector<Tape::NodeId> ids;
    ids.reserve(p.size());
    for (const auto& a : p) ids.push_back(tape.param(a));
    Tape::NodeId root = build(tape, ids);
    double v = tape.value(root).data[0];
    if (grads_out) {
      tape.backward(root);
      grads_out->clear();
      for (auto id : ids) grads_out->push_back(tape.grad(id));
    }
    return v;
  };

  std::vector<Array> analytic;
  eval(params, &analytic);

  double max_rel = 0.0;
  std::vector<Array> p = params;
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t j = 0; j < p[k].size(); ++j) {
      const double orig = p[k].data[j];
      p[k].data[j] = orig + step;
      const double fp = eval(p, nullptr);
      p[k].data[j] = orig - step;
      const double fm = eval(p, nullptr);
      p[k].data[j] = orig;
      const double fd = (fp - fm) / (2.0 * step);
      const double an = analytic[k].data[j];
      if (!std::isfinite(fd) || !std::isfinite(an))
        throw std::runtime_error("grad_check: non-finite value encountered");
      const double rel = std::abs(an - fd) / std::max(1.0, std::abs(an));
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

}  // namespace tcm
