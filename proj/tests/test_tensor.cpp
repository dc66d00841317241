#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gradcheck.hpp"
#include "ppl/autograd.hpp"
#include "ppl/error.hpp"
#include "ppl/serialize.hpp"
#include "ppl/tensor.hpp"

using namespace ppl;
using testing::gradcheck;
using testing::random_tensor;
using testing::weighted;

TEST_CASE("elementwise arithmetic and broadcasting") {
  CHECK((Tensor::vector({2}) * Tensor::vector({3}))[0] == 6.0);
  Tensor s = Tensor::ones({3, 1}) + Tensor::ones({1, 4});
  CHECK(s.shape() == Shape{3, 4});
  for (double v : s.data()) CHECK(v == 2.0);
  CHECK((Tensor::vector({1, 2, 3}) - 1.0).to_vector() == std::vector<double>{0, 1, 2});
  CHECK((Tensor::vector({1, 4}) / Tensor::vector({2, 8})).to_vector() == std::vector<double>{0.5, 0.5});
}

TEST_CASE("broadcast failure names both shapes") {
  try {
    add(Tensor::zeros({2, 3}), Tensor::zeros({4}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2,3)") != std::string::npos);
    CHECK(msg.find("(4,)") != std::string::npos);
  }
}

TEST_CASE("division and log propagate nonfinite values") {
  CHECK(std::isinf((Tensor(1.0) / Tensor(0.0)).item()));
  CHECK(std::isinf(log(Tensor(0.0)).item()));
  CHECK(std::isnan(log(Tensor(-1.0)).item()));
  CHECK(std::isnan(sqrt(Tensor(-1.0)).item()));
}

TEST_CASE("unary ops") {
  CHECK(exp(Tensor::vector({0}))[0] == 1.0);
  CHECK(relu(Tensor::vector({-2, 3})).to_vector() == std::vector<double>{0, 3});
  CHECK(abs(Tensor::vector({-2, 3})).to_vector() == std::vector<double>{2, 3});
  CHECK(neg(Tensor::vector({1})).to_vector() == std::vector<double>{-1});
  CHECK(sqrt(Tensor(9.0)).item() == 3.0);

  Tensor x = Tensor(0.0).set_requires_grad(true);
  reset_tape();
  backward(exp(x));
  const double h = 1e-6;
  const double fd = (std::exp(h) - std::exp(-h)) / (2 * h);
  CHECK(x.grad()->item() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(x.grad()->item() - fd) < 1e-6);
}

TEST_CASE("matmul") {
  Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(matmul(eye, m).to_vector() == m.to_vector());
  CHECK(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})).item() == 11.0);
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);

  Rng rng(1);
  const double err = gradcheck(weighted([](const auto& in) { return matmul(in[0], in[1]); }, 2),
                               {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})});
  CHECK(err < 1e-4);
}

TEST_CASE("reductions") {
  CHECK(sum(Tensor::vector({1, 2, 3})).item() == 6.0);
  CHECK(mean(Tensor::matrix({{1, 2}, {3, 4}}), {0}).to_vector() == std::vector<double>{2, 3});
  CHECK(max(Tensor::matrix({{1, 5}, {3, 4}}), {1}).to_vector() == std::vector<double>{5, 4});
  CHECK_THROWS_AS(sum(Tensor::zeros({2, 2}), {2}), AxisError);
  CHECK_THROWS_AS(mean(Tensor::zeros({2}), {-2}), AxisError);

  Tensor x = Tensor::vector({1, 2, 3, 4}).set_requires_grad(true);
  reset_tape();
  backward(mean(x));
  CHECK(x.grad()->to_vector() == std::vector<double>(4, 0.25));
}

TEST_CASE("conv2d") {
  CHECK(conv2d(Tensor::ones({1, 1, 3, 3}), Tensor::ones({1, 1, 3, 3}), Tensor::zeros({1})).item() == 9.0);

  Rng rng(2);
  Tensor input = random_tensor(rng, {1, 1, 3, 3});
  Tensor delta = Tensor::from_data({1, 0, 0, 0}, {1, 1, 2, 2});
  Tensor out = conv2d(input, delta, Tensor::zeros({1}));
  CHECK(out.shape() == Shape{1, 1, 2, 2});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(out.at({0, 0, i, j}) == input.at({0, 0, i, j}));

  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1})), ShapeError);

  const double err = gradcheck(weighted([](const auto& in) { return conv2d(in[0], in[1], in[2]); }, 3),
                               {random_tensor(rng, {1, 2, 4, 4}), random_tensor(rng, {3, 2, 2, 2}),
                                random_tensor(rng, {3})});
  CHECK(err < 1e-4);
}

TEST_CASE("max_pool2d") {
  CHECK(max_pool2d(Tensor::from_data({1, 2, 3, 4}, {1, 1, 2, 2}), 2, 2).item() == 4.0);
  CHECK_THROWS_AS(max_pool2d(Tensor::zeros({1, 1, 3, 3}), 2, 2), ShapeError);

  Tensor c = Tensor::full({1, 1, 2, 4}, 7.0).set_requires_grad(true);
  reset_tape();
  Tensor pooled = max_pool2d(c, 2, 2);
  CHECK(pooled.to_vector() == std::vector<double>{7, 7});
  backward(sum(pooled));
  // ties resolve to the first element of each window
  CHECK(c.grad()->to_vector() == std::vector<double>{1, 0, 1, 0, 0, 0, 0, 0});

  // distinct values keep finite differences away from ties
  std::vector<double> v(16);
  for (std::size_t i = 0; i < 16; ++i) v[i] = std::sin(1.7 * static_cast<double>(i)) + 0.05 * static_cast<double>(i);
  const double err = gradcheck(weighted([](const auto& in) { return max_pool2d(in[0], 2, 2); }, 4),
                               {Tensor::from_data(v, {1, 1, 4, 4})});
  CHECK(err < 1e-4);
}

TEST_CASE("backward semantics") {
  Tensor x = Tensor(2.0).set_requires_grad(true);
  reset_tape();
  backward(Tensor(3.0) * x);
  CHECK(x.grad()->item() == 3.0);

  Tensor z = Tensor(3.0).set_requires_grad(true);
  reset_tape();
  Tensor sq = z * z;
  backward(sq);
  CHECK(z.grad()->item() == 6.0);
  backward(sq);
  CHECK(z.grad()->item() == 12.0);

  Tensor a = Tensor::vector({1, 2}).set_requires_grad(true);
  Tensor b = Tensor::vector({5, 7});
  reset_tape();
  backward(sum(a * b));
  CHECK(a.grad()->to_vector() == std::vector<double>{5, 7});
  CHECK_FALSE(b.grad().has_value());

  reset_tape();
  CHECK_THROWS_AS(backward(a * b), AutogradError);
  CHECK_THROWS_AS(backward(Tensor(1.0)), AutogradError);
}

TEST_CASE("tape reset detaches earlier outputs") {
  Tensor x = Tensor(1.5).set_requires_grad(true);
  reset_tape();
  Tensor y = x * x;
  CHECK(y.attached());
  CHECK(y.computed_this_pass());
  reset_tape();
  CHECK_FALSE(y.attached());
  CHECK_FALSE(y.computed_this_pass());
  {
    NoGradGuard ng;
    Tensor w = x * 2.0;
    CHECK_FALSE(w.attached());
    CHECK(w.computed_this_pass());
  }
}

TEST_CASE("gradients of every differentiable op match finite differences") {
  Rng rng(11);
  auto pos = [&](const Shape& s) { return random_tensor(rng, s, 0.5, 2.0); };
  CHECK(gradcheck(weighted([](const auto& in) { return in[0] + in[1]; }, 1), {pos({2, 3}), pos({3})}) < 1e-4);
  CHECK(gradcheck(weighted([](const auto& in) { return in[0] - in[1]; }, 1), {pos({2, 1}), pos({1, 3})}) < 1e-4);
  CHECK(gradcheck(weighted([](const auto& in) { return in[0] * in[1]; }, 1), {pos({2, 3}), pos({2, 3})}) < 1e-4);
  CHECK(gradcheck(weighted([](const auto& in) { return in[0] / in[1]; }, 1), {pos({3}), pos({2, 3})}) < 1e-4);
  CHECK(gradcheck(weighted([](const auto& in) { return log(in[0]); }, 1), {pos({4})}) < 1e-4);
  CHECK(gradcheck(weighted([](const auto& in) { return sqrt(in[0]); }, 1), {pos({4})}) < 1e-4);
  CHECK(gradcheck(weighted([](const auto& in) { return exp(in[0]); }, 1), {pos({4})}) < 1e-4);
  CHECK(gradcheck(weighted([](const auto& in) { return square(in[0]); }, 1), {pos({4})}) < 1e-4);
  CHECK(gradcheck(weighted([](const auto& in) { return log_softmax(in[0]); }, 1), {pos({2, 3})}) < 1e-4);
  CHECK(gradcheck(weighted([](const auto& in) { return sum(in[0], {1}); }, 1), {pos({2, 3})}) < 1e-4);
  CHECK(gradcheck(weighted([](const auto& in) { return mean(in[0], {0}); }, 1), {pos({2, 3})}) < 1e-4);
  CHECK(gradcheck(weighted([](const auto& in) { return expand(in[0], {4, 3}); }, 1), {pos({1, 3})}) < 1e-4);
  CHECK(gradcheck(weighted([](const auto& in) { return transpose(in[0]); }, 1), {pos({2, 3})}) < 1e-4);
  CHECK(gradcheck(weighted([](const auto& in) { return reshape(in[0], {3, 2}); }, 1), {pos({2, 3})}) < 1e-4);
}

TEST_CASE("tensor record round trip") {
  Tensor t = Tensor::from_data({1.5, -2.25, 1e-300, 3.0}, {2, 2});
  std::stringstream buf;
  write_tensor(buf, t);
  Tensor back = read_tensor(buf);
  CHECK(back.bitwise_equal(t));
  auto bytes = encode_tensor(t);
  bytes.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_tensor(bytes), SerializationError);
}
