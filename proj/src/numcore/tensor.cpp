#include "rembed/tensor.hpp"

#include <cmath>
#include <numeric>
#include <utility>

#include "rembed/kernels.hpp"

namespace rembed::numcore {

namespace {

std::size_t shape_product(const Shape& s) {
  std::size_t p = 1;
  for (std::size_t d : s) p *= d;
  return p;
}

void ensure_grad(TensorNode& n) {
  if (n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                        " vs " + shape_str(b.shape()));
  }
}

void check_matrix(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) {
    throw ContractError(std::string(op) + ": expected a matrix, got shape " +
                        shape_str(t.shape()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  require(!shape.empty(), "Tensor: shape must have at least one dimension");
  for (std::size_t d : shape) require(d > 0, "Tensor: dimensions must be positive");
  Tensor t;
  t.node_ = std::make_shared<TensorNode>();
  t.node_->shape = std::move(shape);
  t.node_->values.assign(shape_product(t.node_->shape), 0.0);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  require(!shape.empty(), "Tensor: shape must have at least one dimension");
  require(shape_product(shape) == values.size(),
          "Tensor: shape " + shape_str(shape) + " does not match value count " +
              std::to_string(values.size()));
  Tensor t;
  t.node_ = std::make_shared<TensorNode>();
  t.node_->shape = std::move(shape);
  t.node_->values = std::move(values);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

std::size_t Tensor::rows() const {
  require(node_ && node_->shape.size() == 2, "Tensor::rows: not a matrix");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  require(node_ && node_->shape.size() == 2, "Tensor::cols: not a matrix");
  return node_->shape[1];
}

const std::vector<double>& Tensor::grad() const {
  require(node_ != nullptr, "Tensor::grad: undefined tensor");
  return node_->grad;
}

double Tensor::item() const {
  require(node_ && node_->values.size() == 1, "Tensor::item: tensor is not scalar");
  return node_->values[0];
}

void Tape::record(std::vector<std::shared_ptr<TensorNode>> touched,
                  std::function<void()> fn) {
  ops_.push_back(Record{std::move(fn), std::move(touched)});
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad() || b.requires_grad());
  kernels::active().add(a.values().data(), b.values().data(), out.values().data(),
                        out.size());
  if (out.requires_grad()) {
    record({a.node(), b.node(), out.node()}, [an = a.node(), bn = b.node(), on = out.node()] {
      const auto& g = on->grad;
      if (an->requires_grad) kernels::active().axpy(1.0, g.data(), an->grad.data(), g.size());
      if (bn->requires_grad) kernels::active().axpy(1.0, g.data(), bn->grad.data(), g.size());
    });
  }
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad() || b.requires_grad());
  kernels::active().sub(a.values().data(), b.values().data(), out.values().data(),
                        out.size());
  if (out.requires_grad()) {
    record({a.node(), b.node(), out.node()}, [an = a.node(), bn = b.node(), on = out.node()] {
      const auto& g = on->grad;
      if (an->requires_grad) kernels::active().axpy(1.0, g.data(), an->grad.data(), g.size());
      if (bn->requires_grad) kernels::active().axpy(-1.0, g.data(), bn->grad.data(), g.size());
    });
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad() || b.requires_grad());
  kernels::active().mul(a.values().data(), b.values().data(), out.values().data(),
                        out.size());
  if (out.requires_grad()) {
    record({a.node(), b.node(), out.node()}, [an = a.node(), bn = b.node(), on = out.node()] {
      const auto& g = on->grad;
      if (an->requires_grad) {
        for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i] * bn->values[i];
      }
      if (bn->requires_grad) {
        for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] += g[i] * an->values[i];
      }
    });
  }
  return out;
}

Tensor Tape::div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  for (double v : b.values()) require(v != 0.0, "div: zero denominator");
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad() || b.requires_grad());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values()[i] = a.values()[i] / b.values()[i];
  }
  if (out.requires_grad()) {
    record({a.node(), b.node(), out.node()}, [an = a.node(), bn = b.node(), on = out.node()] {
      const auto& g = on->grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double bi = bn->values[i];
        if (an->requires_grad) an->grad[i] += g[i] / bi;
        if (bn->requires_grad) bn->grad[i] -= g[i] * an->values[i] / (bi * bi);
      }
    });
  }
  return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
  kernels::active().scale(a.values().data(), c, out.values().data(), out.size());
  if (out.requires_grad()) {
    record({a.node(), out.node()}, [an = a.node(), on = out.node(), c] {
      kernels::active().axpy(c, on->grad.data(), an->grad.data(), on->grad.size());
    });
  }
  return out;
}

Tensor Tape::add_scalar(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = a.values()[i] + c;
  if (out.requires_grad()) {
    record({a.node(), out.node()}, [an = a.node(), on = out.node()] {
      kernels::active().axpy(1.0, on->grad.data(), an->grad.data(), on->grad.size());
    });
  }
  return out;
}

Tensor Tape::relu(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values()[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  }
  if (out.requires_grad()) {
    record({a.node(), out.node()}, [an = a.node(), on = out.node()] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        if (an->values[i] > 0.0) an->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

Tensor Tape::sigmoid(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values()[i] = stable_sigmoid(a.values()[i]);
  }
  if (out.requires_grad()) {
    record({a.node(), out.node()}, [an = a.node(), on = out.node()] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const double y = on->values[i];
        an->grad[i] += on->grad[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

Tensor Tape::log(const Tensor& a) {
  for (double v : a.values()) require(v > 0.0, "log: non-positive input");
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = std::log(a.values()[i]);
  if (out.requires_grad()) {
    record({a.node(), out.node()}, [an = a.node(), on = out.node()] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        an->grad[i] += on->grad[i] / an->values[i];
      }
    });
  }
  return out;
}

Tensor Tape::clamp(const Tensor& a, double lo, double hi) {
  require(lo <= hi, "clamp: lo > hi");
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = a.values()[i];
    out.values()[i] = v < lo ? lo : (v > hi ? hi : v);
  }
  if (out.requires_grad()) {
    record({a.node(), out.node()}, [an = a.node(), on = out.node(), lo, hi] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const double v = an->values[i];
        if (v >= lo && v <= hi) an->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

Tensor Tape::clamp_min(const Tensor& a, double lo) {
  Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values()[i] = a.values()[i] < lo ? lo : a.values()[i];
  }
  if (out.requires_grad()) {
    record({a.node(), out.node()}, [an = a.node(), on = out.node(), lo] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        if (an->values[i] >= lo) an->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

Tensor Tape::add_rowvec(const Tensor& x, const Tensor& v) {
  check_matrix(x, "add_rowvec");
  require(v.shape().size() == 1 && v.shape()[0] == x.cols(),
          "add_rowvec: vector length " + shape_str(v.shape()) +
              " does not match matrix columns " + shape_str(x.shape()));
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros(x.shape(), x.requires_grad() || v.requires_grad());
  for (std::size_t i = 0; i < m; ++i) {
    kernels::active().add(x.values().data() + i * n, v.values().data(),
                          out.values().data() + i * n, n);
  }
  if (out.requires_grad()) {
    record({x.node(), v.node(), out.node()},
           [xn = x.node(), vn = v.node(), on = out.node(), m, n] {
             const auto& g = on->grad;
             if (xn->requires_grad) {
               kernels::active().axpy(1.0, g.data(), xn->grad.data(), g.size());
             }
             if (vn->requires_grad) {
               for (std::size_t i = 0; i < m; ++i) {
                 kernels::active().axpy(1.0, g.data() + i * n, vn->grad.data(), n);
               }
             }
           });
  }
  return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul");
  check_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ContractError("matmul: dimension mismatch " + shape_str(a.shape()) + " x " +
                        shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n}, a.requires_grad() || b.requires_grad());
  kernels::active().gemm_acc(a.values().data(), b.values().data(), out.values().data(),
                             m, k, n);
  if (out.requires_grad()) {
    record({a.node(), b.node(), out.node()},
           [an = a.node(), bn = b.node(), on = out.node(), m, k, n] {
             const double* g = on->grad.data();
             if (an->requires_grad) {
               kernels::active().gemm_nt_acc(g, bn->values.data(), an->grad.data(), m, n, k);
             }
             if (bn->requires_grad) {
               kernels::active().gemm_tn_acc(an->values.data(), g, bn->grad.data(), m, k, n);
             }
           });
  }
  return out;
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul_nt");
  check_matrix(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw ContractError("matmul_nt: dimension mismatch " + shape_str(a.shape()) + " x " +
                        shape_str(b.shape()) + "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out = Tensor::zeros({m, n}, a.requires_grad() || b.requires_grad());
  kernels::active().gemm_nt_acc(a.values().data(), b.values().data(), out.values().data(),
                                m, k, n);
  if (out.requires_grad()) {
    record({a.node(), b.node(), out.node()},
           [an = a.node(), bn = b.node(), on = out.node(), m, k, n] {
             const double* g = on->grad.data();
             if (an->requires_grad) {
               kernels::active().gemm_acc(g, bn->values.data(), an->grad.data(), m, n, k);
             }
             if (bn->requires_grad) {
               kernels::active().gemm_tn_acc(g, an->values.data(), bn->grad.data(), m, n, k);
             }
           });
  }
  return out;
}

Tensor Tape::softmax_rows(const Tensor& x) {
  check_matrix(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.values().data() + i * n;
    double* orow = out.values().data() + i * n;
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      s += orow[j];
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < n; ++j) orow[j] *= inv;
  }
  if (out.requires_grad()) {
    record({x.node(), out.node()}, [xn = x.node(), on = out.node(), m, n] {
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = on->values.data() + i * n;
        const double* g = on->grad.data() + i * n;
        double* dx = xn->grad.data() + i * n;
        const double t = kernels::active().dot(g, y, n);
        for (std::size_t j = 0; j < n; ++j) dx[j] += y[j] * (g[j] - t);
      }
    });
  }
  return out;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                        double eps) {
  check_matrix(x, "layer_norm");
  require(eps > 0.0, "layer_norm: eps must be positive");
  const std::size_t m = x.rows(), d = x.cols();
  require(gain.shape() == Shape{d}, "layer_norm: gain shape " + shape_str(gain.shape()) +
                                        " does not match feature dim " + std::to_string(d));
  require(bias.shape() == Shape{d}, "layer_norm: bias shape " + shape_str(bias.shape()) +
                                        " does not match feature dim " + std::to_string(d));

  Tensor out = Tensor::zeros(
      x.shape(), x.requires_grad() || gain.requires_grad() || bias.requires_grad());
  auto xhat = std::make_shared<std::vector<double>>(m * d);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.values().data() + i * d;
    const double mean = kernels::active().sum(row, d) / static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = inv;
    double* h = xhat->data() + i * d;
    double* orow = out.values().data() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      h[j] = (row[j] - mean) * inv;
      orow[j] = gain.values()[j] * h[j] + bias.values()[j];
    }
  }
  if (out.requires_grad()) {
    record({x.node(), gain.node(), bias.node(), out.node()},
           [xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node(), xhat,
            inv_std, m, d] {
             std::vector<double> dxh(d);
             for (std::size_t i = 0; i < m; ++i) {
               const double* g = on->grad.data() + i * d;
               const double* h = xhat->data() + i * d;
               if (gn->requires_grad || bn->requires_grad) {
                 for (std::size_t j = 0; j < d; ++j) {
                   if (gn->requires_grad) gn->grad[j] += g[j] * h[j];
                   if (bn->requires_grad) bn->grad[j] += g[j];
                 }
               }
               if (xn->requires_grad) {
                 double m1 = 0.0, m2 = 0.0;
                 for (std::size_t j = 0; j < d; ++j) {
                   dxh[j] = g[j] * gn->values[j];
                   m1 += dxh[j];
                   m2 += dxh[j] * h[j];
                 }
                 m1 /= static_cast<double>(d);
                 m2 /= static_cast<double>(d);
                 double* dx = xn->grad.data() + i * d;
                 const double inv = (*inv_std)[i];
                 for (std::size_t j = 0; j < d; ++j) {
                   dx[j] += inv * (dxh[j] - m1 - h[j] * m2);
                 }
               }
             }
           });
  }
  return out;
}

Tensor Tape::slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
  check_matrix(x, "slice_cols");
  require(c0 < c1 && c1 <= x.cols(), "slice_cols: invalid column range");
  const std::size_t m = x.rows(), n = x.cols(), w = c1 - c0;
  Tensor out = Tensor::zeros({m, w}, x.requires_grad());
  for (std::size_t i = 0; i < m; ++i) {
    const double* src = x.values().data() + i * n + c0;
    double* dst = out.values().data() + i * w;
    for (std::size_t j = 0; j < w; ++j) dst[j] = src[j];
  }
  if (out.requires_grad()) {
    record({x.node(), out.node()}, [xn = x.node(), on = out.node(), m, n, w, c0] {
      for (std::size_t i = 0; i < m; ++i) {
        const double* g = on->grad.data() + i * w;
        double* dx = xn->grad.data() + i * n + c0;
        for (std::size_t j = 0; j < w; ++j) dx[j] += g[j];
      }
    });
  }
  return out;
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no parts");
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    check_matrix(p, "concat_cols");
    require(p.rows() == m, "concat_cols: row count mismatch");
    total += p.cols();
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({m, total}, rg);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i) {
      const double* src = p.values().data() + i * w;
      double* dst = out.values().data() + i * total + off;
      for (std::size_t j = 0; j < w; ++j) dst[j] = src[j];
    }
    off += w;
  }
  if (rg) {
    std::vector<std::shared_ptr<TensorNode>> touched;
    touched.reserve(parts.size() + 1);
    std::vector<std::shared_ptr<TensorNode>> nodes;
    std::vector<std::size_t> offsets;
    std::size_t o = 0;
    for (const Tensor& p : parts) {
      touched.push_back(p.node());
      nodes.push_back(p.node());
      offsets.push_back(o);
      o += p.cols();
    }
    touched.push_back(out.node());
    record(std::move(touched), [nodes, offsets, on = out.node(), m, total] {
      for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
        auto& pn = nodes[pi];
        if (!pn->requires_grad) continue;
        const std::size_t w = pn->shape[1];
        for (std::size_t i = 0; i < m; ++i) {
          const double* g = on->grad.data() + i * total + offsets[pi];
          double* dp = pn->grad.data() + i * w;
          for (std::size_t j = 0; j < w; ++j) dp[j] += g[j];
        }
      }
    });
  }
  return out;
}

Tensor Tape::sum_all(const Tensor& x) {
  Tensor out = Tensor::scalar(kernels::active().sum(x.values().data(), x.size()),
                              x.requires_grad());
  if (out.requires_grad()) {
    record({x.node(), out.node()}, [xn = x.node(), on = out.node()] {
      const double g = on->grad[0];
      for (double& d : xn->grad) d += g;
    });
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  require(loss.defined(), "backward: undefined loss tensor");
  require(loss.size() == 1, "backward: loss must be a scalar, got shape " +
                                shape_str(loss.shape()));
  require(!ops_.empty(), "backward: tape is empty");
  require(loss.requires_grad(), "backward: loss does not depend on any parameter");

  for (auto& op : ops_) {
    for (auto& node : op.touched) {
      if (node->requires_grad) ensure_grad(*node);
    }
  }
  ensure_grad(*loss.node());
  loss.node()->grad[0] += 1.0;

  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    it->backward();
  }
}

void Tape::clear() { ops_.clear(); }

void sgd_step(std::vector<Tensor>& params, double lr) {
  require(lr > 0.0, "sgd_step: learning rate must be positive");
  for (Tensor& p : params) {
    require(p.defined() && p.requires_grad(), "sgd_step: tensor is not a parameter");
    require(p.has_grad(), "sgd_step: missing gradient, run backward() first");
    kernels::active().axpy(-lr, p.node()->grad.data(), p.values().data(), p.size());
    std::fill(p.node()->grad.begin(), p.node()->grad.end(), 0.0);
  }
}

}  // namespace rembed::numcore
