#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ppl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
/// Trailing-dimension broadcast of two shapes; throws ShapeError naming both.
Shape broadcast_shapes(const Shape& a, const Shape& b);

namespace detail {
struct TensorImpl;
}

/// Dense row-major array of doubles with an optional gradient slot.
///
/// Tensor is a handle: copies share storage and autograd identity, which is
/// what lets a Parameter held by a module and the optimizer refer to the same
/// buffer. Use clone() for an independent deep copy. Operations never mutate
/// their inputs; only leaves are written in place (optimizers, loaders).
class Tensor {
 public:
  /// Rank-0 zero.
  Tensor();
  /// Rank-0 constant. Implicit so that literals mix with tensors in arithmetic.
  Tensor(double value);  // NOLINT(google-explicit-constructor)

  static Tensor scalar(double value) { return Tensor(value); }
  static Tensor from_data(std::vector<double> data, Shape shape);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor zeros(const Shape& shape);
  static Tensor ones(const Shape& shape);
  static Tensor full(const Shape& shape, double value);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view. Only valid on leaves; throws AutogradError otherwise.
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;

  double item() const;
  double operator[](std::size_t flat_index) const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;
  /// True when this tensor is an output recorded on the calling thread's tape.
  bool attached() const;
  /// True when this tensor was produced by an operation since the calling
  /// thread's tape was last reset (whether or not grad recording was on).
  bool computed_this_pass() const;

  std::optional<Tensor> grad() const;
  void clear_grad();

  /// New leaf with copied data and no autograd history.
  Tensor detach() const;
  /// Deep copy keeping the requires_grad flag; no grad, no history.
  Tensor clone() const;

  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }
  bool bitwise_equal(const Tensor& other) const;
  const void* id() const { return impl_.get(); }

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

std::string to_string(const Tensor& t);

// Elementwise binary ops with trailing-dimension broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);

// Unary ops. abs and relu use subgradient 0 at the kink.
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);

// Reductions. An empty axis list reduces everything to rank 0.
Tensor sum(const Tensor& a, const std::vector<int>& axes = {});
Tensor mean(const Tensor& a, const std::vector<int>& axes = {});
/// Gradient goes to the first maximal element of each reduced group.
Tensor max(const Tensor& a, const std::vector<int>& axes = {});

Tensor reshape(const Tensor& a, const Shape& shape);
/// Broadcast to a larger shape (differentiable; gradient is summed back).
Tensor expand(const Tensor& a, const Shape& shape);
Tensor transpose(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);

/// Direct cross-correlation, stride 1, no padding.
/// input (N,C,H,W), kernel (O,C,kh,kw), bias (O) -> (N,O,H-kh+1,W-kw+1).
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias);
/// Non-overlapping max pooling; H and W must be divisible by the window.
Tensor max_pool2d(const Tensor& input, std::size_t kh, std::size_t kw);

/// Log-softmax along the last axis.
Tensor log_softmax(const Tensor& logits);
/// Picks x[..., index[...]] along the last axis; index holds integral values.
Tensor take_last(const Tensor& x, const Tensor& index);

}  // namespace ppl
