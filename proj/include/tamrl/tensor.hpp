#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace tamrl {

// Thrown on shape mismatches, non-finite construction and similar misuse.
class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major tensor of 64-bit floats. Value-semantic handle over a
// shared node so that autodiff closures can keep inputs alive.
class Tensor {
 public:
  struct Node {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first touched
    bool requires_grad = false;
    bool is_leaf = true;
  };

  Tensor() = default;
  Tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor row(std::vector<double> v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int size() const { return static_cast<int>(node_->data.size()); }

  // Scalar access (size-1 tensors).
  double value() const;

  double operator[](int i) const { return node_->data[static_cast<size_t>(i)]; }
  double& at(int i) { return node_->data[static_cast<size_t>(i)]; }

  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& data() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  // Deep copy detached from any graph.
  Tensor detached(bool requires_grad = false) const;

  std::shared_ptr<Node> node() const { return node_; }

  static std::string shape_str(const std::vector<int>& s);

 private:
  std::shared_ptr<Node> node_;
};

// Ordered record of executed operations for one forward pass. Activates
// itself for the current thread on construction and restores the previous
// tape on destruction. Ops record onto the innermost active tape.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::shared_ptr<Tensor::Node> out, std::function<void()> fn);
  std::size_t size() const { return entries_.size(); }

  // Reverse pass. Non-leaf grads are reset first, so leaf grads accumulate
  // exactly across repeated calls.
  void backward(const Tensor& loss);

  static Tape* active();

 private:
  struct Entry {
    std::shared_ptr<Tensor::Node> out;
    std::function<void()> fn;
  };
  std::vector<Entry> entries_;
  Tape* prev_ = nullptr;
};

// Suppresses recording in a scope (inference / numeric probing).
class NoTape {
 public:
  NoTape();
  ~NoTape();
  NoTape(const NoTape&) = delete;
  NoTape& operator=(const NoTape&) = delete;

 private:
  Tape* prev_ = nullptr;
};

enum class EwOp { Add, Sub, Mul, Sigmoid, Tanh, ClipMin };

// a [m×k] times b ([k×n] or rank-1 [k]).
Tensor matmul(const Tensor& a, const Tensor& b);

// Binary elementwise ops require equal shapes, except that a size-1 tensor
// pairs with any shape (scalar-with-tensor).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor sigmoid(const Tensor& a);
Tensor tanh_fn(const Tensor& a);
// Subgradient at the kink (x == lo) is 0.
Tensor clip_min(const Tensor& a, double lo);

// Tag-dispatched elementwise entry point. Unary tags ignore b; ClipMin
// reads the threshold from scalar b.
Tensor elementwise(EwOp op, const Tensor& a, const Tensor& b = Tensor());

Tensor concat(const Tensor& a, const Tensor& b, int axis);
// Rank-1 half-open slice [begin, end).
Tensor slice(const Tensor& a, int begin, int end);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Backward through the innermost active tape.
void backward(const Tensor& loss);

// Max relative error between analytic gradients and central finite
// differences of f at the given point. Denominator max(|a|,|n|,1e-8).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& at,
                  double eps = 1e-5);

}  // namespace tamrl
