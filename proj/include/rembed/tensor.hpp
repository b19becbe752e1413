#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rembed/error.hpp"

namespace rembed::numcore {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward() touches it
  bool requires_grad = false;
};

// Value-semantic handle to a shared node. Copies alias the same storage;
// values are written only at construction and by sgd_step.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->values.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& values() { return node_->values; }
  const std::vector<double>& grad() const;
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Scalar value; contract error unless size() == 1.
  double item() const;

  std::shared_ptr<TensorNode>& node() { return node_; }
  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Records every differentiable operation in execution order; backward()
// replays the records in reverse and accumulates gradients into every
// requires_grad tensor that appeared on the tape. Operations whose inputs
// are all constants produce constant outputs and are not recorded.
class Tape {
 public:
  // elementwise
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor div(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double c);
  Tensor add_scalar(const Tensor& a, double c);
  Tensor relu(const Tensor& a);
  Tensor sigmoid(const Tensor& a);
  Tensor log(const Tensor& a);  // natural log; contract error on x <= 0
  Tensor clamp(const Tensor& a, double lo, double hi);
  Tensor clamp_min(const Tensor& a, double lo);

  // x [m x n] plus v [n] broadcast over rows
  Tensor add_rowvec(const Tensor& x, const Tensor& v);

  // matrix products
  Tensor matmul(const Tensor& a, const Tensor& b);     // [m x k].[k x n]
  Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m x k].[n x k]^T

  // row-max-subtracted softmax over the last dimension of a matrix
  Tensor softmax_rows(const Tensor& x);
  // per-row standardization followed by the affine map gain*x + bias
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

  Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1);
  Tensor concat_cols(const std::vector<Tensor>& parts);

  Tensor sum_all(const Tensor& x);  // -> scalar [1]

  // Populates grad for every requires_grad tensor recorded on this tape.
  // loss must be scalar and the tape non-empty.
  void backward(const Tensor& loss);

  void clear();
  std::size_t op_count() const { return ops_.size(); }

 private:
  struct Record {
    std::function<void()> backward;
    std::vector<std::shared_ptr<TensorNode>> touched;
  };
  std::vector<Record> ops_;

  void record(std::vector<std::shared_ptr<TensorNode>> touched, std::function<void()> fn);
};

// p <- p - lr * grad(p) for every parameter, then gradients are zeroed.
// Contract error when lr <= 0 or any parameter lacks a populated gradient.
void sgd_step(std::vector<Tensor>& params, double lr);

}  // namespace rembed::numcore
