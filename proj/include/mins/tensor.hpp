#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace mins {

/// Dense row-major double tensor with an optional gradient buffer.
/// Rank is 1 or 2 everywhere in this project.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // same length as values iff requires_grad
  bool requires_grad = false;
  std::string name;

  int numel() const { return static_cast<int>(values.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const;  // rank-2 only
  int cols() const;

  double& at(int i, int j) { return values[static_cast<std::size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * cols() + j]; }
  double& grad_at(int i, int j) { return grad[static_cast<std::size_t>(i) * cols() + j]; }

  // Value of a one-element tensor.
  double item() const;

  void set_requires_grad(bool on);
  void zero_grad();
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr tensor(std::vector<int> shape, std::vector<double> values);
TensorPtr tensor1d(std::vector<double> values);
TensorPtr scalar(double v);
TensorPtr zeros(std::vector<int> shape);
TensorPtr full(std::vector<int> shape, double v);

// Zero-filled trainable leaf; values are set by the initializer.
TensorPtr param(std::vector<int> shape, std::string name);

std::string shape_str(const std::vector<int>& shape);

/// Ordered record of executed differentiable ops. Constructing a Tape makes
/// it the active tape for the current thread; ops record a backward closure
/// per executed op while one is active. backward() replays the closures in
/// exact reverse execution order, accumulating gradients additively.
///
/// A tape and the tensors recorded on it belong to one thread.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> fn) { entries_.push_back(std::move(fn)); }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and runs all recorded closures in reverse.
  // The loss must be a scalar recorded on this tape.
  void backward(const TensorPtr& loss);

  static Tape* active();

 private:
  std::vector<std::function<void()>> entries_;
  Tape* previous_ = nullptr;
};

// Suspends taping for the current thread while alive (used by finite
// differences, evaluation, and any other pure-forward pass).
class NoTape {
 public:
  NoTape();
  ~NoTape();
  NoTape(const NoTape&) = delete;
  NoTape& operator=(const NoTape&) = delete;

 private:
  Tape* previous_;
};

}  // namespace mins
