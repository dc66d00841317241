#include "ppl/tensor.hpp"

#include <cstring>
#include <sstream>

#include "ppl/autograd.hpp"
#include "ppl/error.hpp"

namespace ppl {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  if (shape.size() == 1) os << ',';
  os << ')';
  return os.str();
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) + " are not broadcastable");
    }
    out[i] = ea == 1 ? eb : ea;
  }
  return out;
}

namespace {

std::shared_ptr<detail::TensorImpl> make_leaf(std::vector<double> data, Shape shape) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return impl;
}

}  // namespace

Tensor::Tensor() : impl_(make_leaf({0.0}, {})) {}

Tensor::Tensor(double value) : impl_(make_leaf({value}, {})) {}

Tensor Tensor::from_data(std::vector<double> data, Shape shape) {
  return Tensor(make_leaf(std::move(data), std::move(shape)));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return from_data(std::vector<double>(values), {values.size()});
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> data;
  const std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& row : rows) {
    if (row.size() != cols) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return from_data(std::move(data), {rows.size(), cols});
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0); }
Tensor Tensor::ones(const Shape& shape) { return full(shape, 1.0); }
Tensor Tensor::full(const Shape& shape, double value) {
  return from_data(std::vector<double>(shape_numel(shape), value), shape);
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::numel() const { return impl_->data.size(); }
std::span<const double> Tensor::data() const { return impl_->data; }

std::span<double> Tensor::mutable_data() {
  if (attached()) throw AutogradError("cannot write into a tensor recorded on the tape");
  return impl_->data;
}

std::vector<double> Tensor::to_vector() const { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::operator[](std::size_t flat_index) const { return impl_->data.at(flat_index); }

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw ShapeError("index rank does not match tensor rank");
  std::size_t flat = 0;
  std::size_t d = 0;
  for (auto i : index) {
    if (i >= shape()[d]) throw ShapeError("index out of range");
    flat = flat * shape()[d] + i;
    ++d;
  }
  return impl_->data[flat];
}

bool Tensor::requires_grad() const { return impl_->requires_grad || attached(); }

Tensor& Tensor::set_requires_grad(bool on) {
  if (attached()) throw AutogradError("requires_grad can only be set on leaves");
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return !attached(); }

bool Tensor::attached() const {
  return impl_->node != static_cast<std::size_t>(-1) && impl_->tape_id == current_tape().id();
}

bool Tensor::computed_this_pass() const {
  return impl_->stamp != 0 && impl_->stamp == current_tape().id();
}

std::optional<Tensor> Tensor::grad() const {
  if (!impl_->grad) return std::nullopt;
  return from_data(*impl_->grad, impl_->shape);
}

void Tensor::clear_grad() { impl_->grad.reset(); }

Tensor Tensor::detach() const { return from_data(impl_->data, impl_->shape); }

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  return shape() == other.shape() &&
         std::memcmp(impl_->data.data(), other.impl_->data.data(), numel() * sizeof(double)) == 0;
}

std::string to_string(const Tensor& t) {
  std::ostringstream os;
  os << "tensor" << shape_str(t.shape()) << " [";
  const std::size_t shown = std::min<std::size_t>(t.numel(), 8);
  for (std::size_t i = 0; i < shown; ++i) {
    if (i) os << ", ";
    os << t[i];
  }
  if (shown < t.numel()) os << ", ...";
  os << ']';
  return os.str();
}

}  // namespace ppl
