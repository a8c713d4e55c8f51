#include "mins/tensor.hpp"

#include <sstream>
#include <stdexcept>

#include "mins/error.hpp"

namespace mins {

namespace {
thread_local Tape* g_active_tape = nullptr;

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}
}  // namespace

int Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows(): tensor is not rank-2, shape " + shape_str(shape));
  return shape[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols(): tensor is not rank-2, shape " + shape_str(shape));
  return shape[1];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("item(): tensor has " + std::to_string(numel()) +
                                " elements, expected 1");
  }
  return values[0];
}

void Tensor::set_requires_grad(bool on) {
  requires_grad = on;
  if (on) {
    grad.assign(values.size(), 0.0);
  } else {
    grad.clear();
  }
}

void Tensor::zero_grad() {
  if (requires_grad) grad.assign(values.size(), 0.0);
}

TensorPtr tensor(std::vector<int> shape, std::vector<double> values) {
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->values = std::move(values);
  return t;
}

TensorPtr tensor1d(std::vector<double> values) {
  int n = static_cast<int>(values.size());
  return tensor({n}, std::move(values));
}

TensorPtr scalar(double v) { return tensor({1}, {v}); }

TensorPtr zeros(std::vector<int> shape) {
  std::size_t n = shape_numel(shape);
  return tensor(std::move(shape), std::vector<double>(n, 0.0));
}

TensorPtr full(std::vector<int> shape, double v) {
  std::size_t n = shape_numel(shape);
  return tensor(std::move(shape), std::vector<double>(n, v));
}

TensorPtr param(std::vector<int> shape, std::string name) {
  auto t = zeros(std::move(shape));
  t->name = std::move(name);
  t->set_requires_grad(true);
  return t;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::backward(const TensorPtr& loss) {
  if (!loss || loss->numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar tensor");
  }
  if (!loss->requires_grad) {
    throw std::invalid_argument("backward: loss was not recorded on the active tape");
  }
  loss->grad[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

NoTape::NoTape() : previous_(g_active_tape) { g_active_tape = nullptr; }

NoTape::~NoTape() { g_active_tape = previous_; }

}  // namespace mins
