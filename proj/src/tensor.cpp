#include "tamrl/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>

namespace tamrl {
namespace {

thread_local Tape* g_active_tape = nullptr;

int shape_product(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) {
    if (d <= 0) throw TensorError("non-positive dimension in shape " + Tensor::shape_str(shape));
    n *= d;
  }
  return n;
}

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw TensorError(std::string("non-finite value in ") + what);
  }
}

std::vector<double>& grad_of(const std::shared_ptr<Tensor::Node>& n) {
  if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
  return n->grad;
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor make_output(std::vector<int> shape, std::vector<double> data, bool track) {
  Tensor out(std::move(shape), std::move(data), false);
  if (track) {
    out.node()->requires_grad = true;
    out.node()->is_leaf = false;
  }
  return out;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  int n = shape_product(shape);
  if (n != static_cast<int>(data.size())) {
    throw TensorError("shape " + shape_str(shape) + " does not match data length " +
                      std::to_string(data.size()));
  }
  check_finite(data, "tensor construction");
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  int n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  int n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), value), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor({1}, {v}, requires_grad);
}

Tensor Tensor::row(std::vector<double> v, bool requires_grad) {
  int n = static_cast<int>(v.size());
  return Tensor({n}, std::move(v), requires_grad);
}

double Tensor::value() const {
  if (size() != 1) throw TensorError("value() on non-scalar tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

std::vector<double>& Tensor::grad() { return grad_of(node_); }

const std::vector<double>& Tensor::grad() const { return grad_of(node_); }

void Tensor::zero_grad() {
  node_->grad.assign(node_->data.size(), 0.0);
}

Tensor Tensor::detached(bool requires_grad) const {
  return Tensor(node_->shape, node_->data, requires_grad);
}

std::string Tensor::shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

Tape::Tape() {
  prev_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::shared_ptr<Tensor::Node> out, std::function<void()> fn) {
  entries_.push_back({std::move(out), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw TensorError("backward requires a scalar loss");
  }
  if (entries_.empty()) throw TensorError("backward on an empty tape");
  for (Entry& e : entries_) {
    e.out->grad.assign(e.out->data.size(), 0.0);
  }
  grad_of(loss.node())[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    it->fn();
  }
}

NoTape::NoTape() {
  prev_ = g_active_tape;
  g_active_tape = nullptr;
}

NoTape::~NoTape() { g_active_tape = prev_; }

void backward(const Tensor& loss) {
  Tape* t = Tape::active();
  if (t == nullptr) throw TensorError("backward called with no active tape");
  t->backward(loss);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (!a.defined() || !b.defined()) throw TensorError("matmul on undefined tensor");
  if (a.rank() != 2) {
    throw TensorError("matmul lhs must be rank-2, got " + Tensor::shape_str(a.shape()));
  }
  bool vec = (b.rank() == 1);
  if (!vec && b.rank() != 2) {
    throw TensorError("matmul rhs must be rank-1 or rank-2, got " + Tensor::shape_str(b.shape()));
  }
  int m = a.shape()[0], k = a.shape()[1];
  int kb = b.shape()[0];
  int n = vec ? 1 : b.shape()[1];
  if (k != kb) {
    throw TensorError("matmul inner dimension mismatch: " + Tensor::shape_str(a.shape()) + " x " +
                      Tensor::shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      double av = ad[i * k + p];
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] += av * bd[p * n + j];
    }
  }
  bool track = should_record({&a, &b});
  Tensor c = make_output(vec ? std::vector<int>{m} : std::vector<int>{m, n}, std::move(out), track);
  if (track) {
    auto an = a.node(), bn = b.node(), cn = c.node();
    Tape::active()->record(cn, [an, bn, cn, m, k, n]() {
      const std::vector<double>& dc = cn->grad;
      if (an->requires_grad) {
        std::vector<double>& da = grad_of(an);
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += dc[static_cast<size_t>(i) * n + j] * bn->data[p * n + j];
            da[static_cast<size_t>(i) * k + p] += s;
          }
      }
      if (bn->requires_grad) {
        std::vector<double>& db = grad_of(bn);
        for (int p = 0; p < k; ++p)
          for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int i = 0; i < m; ++i) s += an->data[static_cast<size_t>(i) * k + p] * dc[static_cast<size_t>(i) * n + j];
            db[static_cast<size_t>(p) * n + j] += s;
          }
      }
    });
  }
  return c;
}

namespace {

// Binary elementwise with scalar-with-tensor pairing. fwd(x, y) and the two
// partials as closures.
template <typename F, typename DA, typename DB>
Tensor binary_ew(const char* name, const Tensor& a, const Tensor& b, F fwd, DA da_rule, DB db_rule) {
  if (!a.defined() || !b.defined()) throw TensorError(std::string(name) + " on undefined tensor");
  bool a_scalar = a.size() == 1, b_scalar = b.size() == 1;
  if (a.shape() != b.shape() && !a_scalar && !b_scalar) {
    throw TensorError(std::string(name) + " shape mismatch: " + Tensor::shape_str(a.shape()) +
                      " vs " + Tensor::shape_str(b.shape()));
  }
  const std::vector<int>& shape = (a.size() >= b.size()) ? a.shape() : b.shape();
  int n = std::max(a.size(), b.size());
  std::vector<double> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double x = a[a_scalar ? 0 : i];
    double y = b[b_scalar ? 0 : i];
    out[static_cast<size_t>(i)] = fwd(x, y);
  }
  bool track = should_record({&a, &b});
  Tensor c = make_output(shape, std::move(out), track);
  if (track) {
    auto an = a.node(), bn = b.node(), cn = c.node();
    Tape::active()->record(cn, [an, bn, cn, n, a_scalar, b_scalar, da_rule, db_rule]() {
      const std::vector<double>& dc = cn->grad;
      if (an->requires_grad) {
        std::vector<double>& da = grad_of(an);
        for (int i = 0; i < n; ++i) {
          double x = an->data[a_scalar ? 0 : i];
          double y = bn->data[b_scalar ? 0 : i];
          da[a_scalar ? 0 : i] += da_rule(x, y) * dc[static_cast<size_t>(i)];
        }
      }
      if (bn->requires_grad) {
        std::vector<double>& db = grad_of(bn);
        for (int i = 0; i < n; ++i) {
          double x = an->data[a_scalar ? 0 : i];
          double y = bn->data[b_scalar ? 0 : i];
          db[b_scalar ? 0 : i] += db_rule(x, y) * dc[static_cast<size_t>(i)];
        }
      }
    });
  }
  return c;
}

template <typename F, typename D>
Tensor unary_ew(const char* name, const Tensor& a, F fwd, D d_rule) {
  if (!a.defined()) throw TensorError(std::string(name) + " on undefined tensor");
  int n = a.size();
  std::vector<double> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = fwd(a[i]);
  bool track = should_record({&a});
  Tensor c = make_output(a.shape(), std::move(out), track);
  if (track) {
    auto an = a.node(), cn = c.node();
    Tape::active()->record(cn, [an, cn, n, d_rule]() {
      std::vector<double>& da = grad_of(an);
      for (int i = 0; i < n; ++i) {
        da[static_cast<size_t>(i)] += d_rule(an->data[static_cast<size_t>(i)], cn->data[static_cast<size_t>(i)]) *
                                      cn->grad[static_cast<size_t>(i)];
      }
    });
  }
  return c;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_ew(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_ew(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_ew(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_ew(
      "add_scalar", a, [c](double x) { return x + c; },
      [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return unary_ew(
      "mul_scalar", a, [c](double x) { return x * c; },
      [c](double, double) { return c; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_ew(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_fn(const Tensor& a) {
  return unary_ew(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor clip_min(const Tensor& a, double lo) {
  return unary_ew(
      "clip_min", a, [lo](double x) { return x < lo ? lo : x; },
      [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

Tensor elementwise(EwOp op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case EwOp::Add: return add(a, b);
    case EwOp::Sub: return sub(a, b);
    case EwOp::Mul: return mul(a, b);
    case EwOp::Sigmoid: return sigmoid(a);
    case EwOp::Tanh: return tanh_fn(a);
    case EwOp::ClipMin: return clip_min(a, b.defined() ? b.value() : 0.0);
  }
  throw TensorError("unknown elementwise op tag");
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  if (!a.defined() || !b.defined()) throw TensorError("concat on undefined tensor");
  if (a.rank() != b.rank()) {
    throw TensorError("concat rank mismatch: " + Tensor::shape_str(a.shape()) + " vs " +
                      Tensor::shape_str(b.shape()));
  }
  if (axis < 0 || axis >= a.rank()) {
    throw TensorError("concat axis " + std::to_string(axis) + " out of range for rank " +
                      std::to_string(a.rank()));
  }
  for (int d = 0; d < a.rank(); ++d) {
    if (d != axis && a.shape()[d] != b.shape()[d]) {
      throw TensorError("concat shapes incompatible off-axis: " + Tensor::shape_str(a.shape()) +
                        " vs " + Tensor::shape_str(b.shape()));
    }
  }
  std::vector<int> shape = a.shape();
  shape[axis] += b.shape()[axis];

  // Row-major copy: iterate over "outer" blocks; within each block the
  // concatenated axis contributes a.shape[axis] entries from a then
  // b.shape[axis] entries from b, each entry being "inner" elements wide.
  int outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= a.shape()[d];
  for (int d = axis + 1; d < a.rank(); ++d) inner *= a.shape()[d];
  int a_ax = a.shape()[axis], b_ax = b.shape()[axis];

  std::vector<double> out;
  out.reserve(a.data().size() + b.data().size());
  for (int o = 0; o < outer; ++o) {
    const double* ap = a.data().data() + static_cast<size_t>(o) * a_ax * inner;
    const double* bp = b.data().data() + static_cast<size_t>(o) * b_ax * inner;
    out.insert(out.end(), ap, ap + static_cast<size_t>(a_ax) * inner);
    out.insert(out.end(), bp, bp + static_cast<size_t>(b_ax) * inner);
  }
  bool track = should_record({&a, &b});
  Tensor c = make_output(shape, std::move(out), track);
  if (track) {
    auto an = a.node(), bn = b.node(), cn = c.node();
    Tape::active()->record(cn, [an, bn, cn, outer, inner, a_ax, b_ax]() {
      size_t pos = 0;
      for (int o = 0; o < outer; ++o) {
        if (an->requires_grad) {
          std::vector<double>& da = grad_of(an);
          for (size_t i = 0; i < static_cast<size_t>(a_ax) * inner; ++i)
            da[static_cast<size_t>(o) * a_ax * inner + i] += cn->grad[pos + i];
        }
        pos += static_cast<size_t>(a_ax) * inner;
        if (bn->requires_grad) {
          std::vector<double>& db = grad_of(bn);
          for (size_t i = 0; i < static_cast<size_t>(b_ax) * inner; ++i)
            db[static_cast<size_t>(o) * b_ax * inner + i] += cn->grad[pos + i];
        }
        pos += static_cast<size_t>(b_ax) * inner;
      }
    });
  }
  return c;
}

Tensor slice(const Tensor& a, int begin, int end) {
  if (!a.defined()) throw TensorError("slice on undefined tensor");
  if (a.rank() != 1) throw TensorError("slice supports rank-1 tensors only");
  if (begin < 0 || end > a.size() || begin >= end) {
    throw TensorError("slice range [" + std::to_string(begin) + "," + std::to_string(end) +
                      ") invalid for length " + std::to_string(a.size()));
  }
  std::vector<double> out(a.data().begin() + begin, a.data().begin() + end);
  bool track = should_record({&a});
  Tensor c = make_output({end - begin}, std::move(out), track);
  if (track) {
    auto an = a.node(), cn = c.node();
    Tape::active()->record(cn, [an, cn, begin]() {
      std::vector<double>& da = grad_of(an);
      for (size_t i = 0; i < cn->data.size(); ++i) da[static_cast<size_t>(begin) + i] += cn->grad[i];
    });
  }
  return c;
}

Tensor sum(const Tensor& a) {
  if (!a.defined()) throw TensorError("sum on undefined tensor");
  double s = std::accumulate(a.data().begin(), a.data().end(), 0.0);
  bool track = should_record({&a});
  Tensor c = make_output({1}, {s}, track);
  if (track) {
    auto an = a.node(), cn = c.node();
    Tape::active()->record(cn, [an, cn]() {
      std::vector<double>& da = grad_of(an);
      for (double& g : da) g += cn->grad[0];
    });
  }
  return c;
}

Tensor mean(const Tensor& a) { return mul_scalar(sum(a), 1.0 / a.size()); }

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& at, double eps) {
  if (eps <= 0.0) throw TensorError("grad_check requires eps > 0");
  Tensor x = at.detached(/*requires_grad=*/true);
  std::vector<double> analytic;
  {
    Tape tape;
    Tensor y = f(x);
    if (y.size() != 1) throw TensorError("grad_check target must return a scalar");
    tape.backward(y);
    analytic = x.grad();
  }
  Tensor probe = at.detached(false);
  double worst = 0.0;
  {
    NoTape guard;
    for (int i = 0; i < probe.size(); ++i) {
      double orig = probe[i];
      probe.at(i) = orig + eps;
      double fp = f(probe).value();
      probe.at(i) = orig - eps;
      double fm = f(probe).value();
      probe.at(i) = orig;
      double numeric = (fp - fm) / (2.0 * eps);
      double denom = std::max({std::fabs(analytic[static_cast<size_t>(i)]), std::fabs(numeric), 1e-8});
      double rel = std::fabs(analytic[static_cast<size_t>(i)] - numeric) / denom;
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace tamrl
