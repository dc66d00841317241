#include <algorithm>
#include <cmath>
#include <limits>

#include "ppl/autograd.hpp"
#include "ppl/error.hpp"
#include "ppl/tensor.hpp"

namespace ppl {

namespace {

using detail::make_result;
using Grads = std::vector<std::vector<double>>;

// For every flat index of `out`, the flat index of the broadcast source `in`.
std::vector<std::size_t> broadcast_map(const Shape& in, const Shape& out) {
  const std::size_t n = shape_numel(out);
  std::vector<std::size_t> map(n);
  const std::size_t rank = out.size();
  const std::size_t offset = rank - in.size();
  std::vector<std::size_t> in_stride(rank, 0);
  std::size_t stride = 1;
  for (std::size_t d = rank; d-- > offset;) {
    const std::size_t e = in[d - offset];
    in_stride[d] = e == 1 ? 0 : stride;
    stride *= e;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t k = 0; k < n; ++k) {
    map[k] = src;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      src += in_stride[d];
      if (idx[d] < out[d]) break;
      src -= in_stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return map;
}

template <class Forward, class GradA, class GradB>
Tensor binary(const Tensor& a, const Tensor& b, Forward f, GradA da, GradB db) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  const std::size_t n = shape_numel(out_shape);
  const bool same = a.shape() == out_shape && b.shape() == out_shape;
  auto ia = std::make_shared<std::vector<std::size_t>>();
  auto ib = std::make_shared<std::vector<std::size_t>>();
  if (!same) {
    *ia = broadcast_map(a.shape(), out_shape);
    *ib = broadcast_map(b.shape(), out_shape);
  }
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = f(av[same ? k : (*ia)[k]], bv[same ? k : (*ib)[k]]);
  }
  auto pa = a.impl();
  auto pb = b.impl();
  return make_result(out_shape, std::move(out), {a, b},
                     [pa, pb, ia, ib, same, da, db](std::span<const double> g, Grads& gin) {
                       const auto& x = pa->data;
                       const auto& y = pb->data;
                       for (std::size_t k = 0; k < g.size(); ++k) {
                         const std::size_t i = same ? k : (*ia)[k];
                         const std::size_t j = same ? k : (*ib)[k];
                         if (!gin[0].empty()) gin[0][i] += g[k] * da(x[i], y[j]);
                         if (!gin[1].empty()) gin[1][j] += g[k] * db(x[i], y[j]);
                       }
                     });
}

template <class Forward, class Deriv>
Tensor unary(const Tensor& a, Forward f, Deriv df) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t k = 0; k < av.size(); ++k) out[k] = f(av[k]);
  auto pa = a.impl();
  // Derivatives may be expressed through the output (exp, sqrt).
  auto values = std::make_shared<std::vector<double>>(out);
  return make_result(a.shape(), std::move(out), {a}, [pa, values, df](std::span<const double> g, Grads& gin) {
    for (std::size_t k = 0; k < g.size(); ++k) gin[0][k] += g[k] * df(pa->data[k], (*values)[k]);
  });
}

std::vector<std::size_t> normalize_axes(const std::vector<int>& axes, std::size_t rank) {
  std::vector<std::size_t> out;
  if (axes.empty()) {
    for (std::size_t d = 0; d < rank; ++d) out.push_back(d);
    return out;
  }
  for (int ax : axes) {
    const long r = static_cast<long>(rank);
    const long a = ax < 0 ? ax + r : ax;
    if (a < 0 || a >= r) {
      throw AxisError("axis " + std::to_string(ax) + " is invalid for rank " + std::to_string(rank));
    }
    if (std::find(out.begin(), out.end(), static_cast<std::size_t>(a)) != out.end()) {
      throw AxisError("axis " + std::to_string(ax) + " repeated");
    }
    out.push_back(static_cast<std::size_t>(a));
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct Reduction {
  Shape out_shape;
  std::vector<std::size_t> group;  // input flat index -> output flat index
  std::size_t group_size = 1;
};

Reduction plan_reduction(const Shape& in, const std::vector<int>& axes) {
  const auto reduced = normalize_axes(axes, in.size());
  std::vector<bool> is_reduced(in.size(), false);
  for (auto d : reduced) is_reduced[d] = true;
  Reduction r;
  std::vector<std::size_t> out_stride(in.size(), 0);
  std::size_t stride = 1;
  for (std::size_t d = in.size(); d-- > 0;) {
    if (is_reduced[d]) {
      r.group_size *= in[d];
    } else {
      out_stride[d] = stride;
      stride *= in[d];
    }
  }
  for (std::size_t d = 0; d < in.size(); ++d) {
    if (!is_reduced[d]) r.out_shape.push_back(in[d]);
  }
  const std::size_t n = shape_numel(in);
  r.group.resize(n);
  std::vector<std::size_t> idx(in.size(), 0);
  std::size_t dst = 0;
  for (std::size_t k = 0; k < n; ++k) {
    r.group[k] = dst;
    for (std::size_t d = in.size(); d-- > 0;) {
      ++idx[d];
      dst += out_stride[d];
      if (idx[d] < in[d]) break;
      dst -= out_stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return r;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator-(const Tensor& a) { return neg(a); }

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor neg(const Tensor& a) {
  return unary(
      a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sum(const Tensor& a, const std::vector<int>& axes) {
  auto plan = std::make_shared<Reduction>(plan_reduction(a.shape(), axes));
  std::vector<double> out(shape_numel(plan->out_shape), 0.0);
  const auto av = a.data();
  for (std::size_t k = 0; k < av.size(); ++k) out[plan->group[k]] += av[k];
  return make_result(plan->out_shape, std::move(out), {a}, [plan](std::span<const double> g, Grads& gin) {
    for (std::size_t k = 0; k < gin[0].size(); ++k) gin[0][k] += g[plan->group[k]];
  });
}

Tensor mean(const Tensor& a, const std::vector<int>& axes) {
  auto plan = std::make_shared<Reduction>(plan_reduction(a.shape(), axes));
  const double inv = 1.0 / static_cast<double>(plan->group_size);
  std::vector<double> out(shape_numel(plan->out_shape), 0.0);
  const auto av = a.data();
  for (std::size_t k = 0; k < av.size(); ++k) out[plan->group[k]] += av[k];
  for (auto& v : out) v *= inv;
  return make_result(plan->out_shape, std::move(out), {a},
                     [plan, inv](std::span<const double> g, Grads& gin) {
                       for (std::size_t k = 0; k < gin[0].size(); ++k) gin[0][k] += g[plan->group[k]] * inv;
                     });
}

Tensor max(const Tensor& a, const std::vector<int>& axes) {
  auto plan = std::make_shared<Reduction>(plan_reduction(a.shape(), axes));
  const std::size_t m = shape_numel(plan->out_shape);
  if (a.numel() == 0) throw ShapeError("max of an empty tensor");
  std::vector<double> out(m, -std::numeric_limits<double>::infinity());
  auto argmax = std::make_shared<std::vector<std::size_t>>(m, static_cast<std::size_t>(-1));
  const auto av = a.data();
  // Flat order visits each group's elements in increasing index, so strict
  // comparison keeps the first maximum.
  for (std::size_t k = 0; k < av.size(); ++k) {
    const std::size_t o = plan->group[k];
    if ((*argmax)[o] == static_cast<std::size_t>(-1) || av[k] > out[o]) {
      out[o] = av[k];
      (*argmax)[o] = k;
    }
  }
  return make_result(plan->out_shape, std::move(out), {a}, [argmax](std::span<const double> g, Grads& gin) {
    for (std::size_t o = 0; o < g.size(); ++o) gin[0][(*argmax)[o]] += g[o];
  });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  return make_result(shape, a.to_vector(), {a}, [](std::span<const double> g, Grads& gin) {
    for (std::size_t k = 0; k < g.size(); ++k) gin[0][k] += g[k];
  });
}

Tensor expand(const Tensor& a, const Shape& shape) {
  if (broadcast_shapes(a.shape(), shape) != shape) {
    throw ShapeError("cannot expand " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  auto map = std::make_shared<std::vector<std::size_t>>(broadcast_map(a.shape(), shape));
  std::vector<double> out(map->size());
  const auto av = a.data();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = av[(*map)[k]];
  return make_result(shape, std::move(out), {a}, [map](std::span<const double> g, Grads& gin) {
    for (std::size_t k = 0; k < g.size(); ++k) gin[0][(*map)[k]] += g[k];
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose expects rank 2, got " + shape_str(a.shape()));
  const std::size_t r = a.shape()[0];
  const std::size_t c = a.shape()[1];
  std::vector<double> out(r * c);
  const auto av = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return make_result({c, r}, std::move(out), {a}, [r, c](std::span<const double> g, Grads& gin) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gin[0][i * c + j] += g[j * r + i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x * bv[p * n + j];
    }
  auto pa = a.impl();
  auto pb = b.impl();
  return make_result({m, n}, std::move(out), {a, b}, [pa, pb, m, k, n](std::span<const double> g, Grads& gin) {
    const auto& x = pa->data;
    const auto& y = pb->data;
    if (!gin[0].empty()) {  // g * b^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * y[p * n + j];
          gin[0][i * k + p] += acc;
        }
    }
    if (!gin[1].empty()) {  // a^T * g
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = x[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gin[1][p * n + j] += xv * g[i * n + j];
        }
    }
  });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  if (input.rank() != 4 || kernel.rank() != 4 || bias.rank() != 1) {
    throw ShapeError("conv2d expects input (N,C,H,W), kernel (O,C,kh,kw), bias (O); got " +
                     shape_str(input.shape()) + ", " + shape_str(kernel.shape()) + ", " +
                     shape_str(bias.shape()));
  }
  const std::size_t N = input.shape()[0], C = input.shape()[1], H = input.shape()[2], W = input.shape()[3];
  const std::size_t O = kernel.shape()[0], KH = kernel.shape()[2], KW = kernel.shape()[3];
  if (kernel.shape()[1] != C || bias.shape()[0] != O) {
    throw ShapeError("conv2d channel mismatch: input " + shape_str(input.shape()) + ", kernel " +
                     shape_str(kernel.shape()) + ", bias " + shape_str(bias.shape()));
  }
  if (KH > H || KW > W || KH == 0 || KW == 0) {
    throw ShapeError("conv2d kernel " + shape_str(kernel.shape()) + " exceeds input " +
                     shape_str(input.shape()));
  }
  const std::size_t OH = H - KH + 1, OW = W - KW + 1;
  std::vector<double> out(N * O * OH * OW);
  const auto x = input.data();
  const auto w = kernel.data();
  const auto bv = bias.data();
  auto in_at = [=](std::size_t n, std::size_t c, std::size_t h, std::size_t ww) {
    return ((n * C + c) * H + h) * W + ww;
  };
  auto k_at = [=](std::size_t o, std::size_t c, std::size_t i, std::size_t j) {
    return ((o * C + c) * KH + i) * KW + j;
  };
  auto out_at = [=](std::size_t n, std::size_t o, std::size_t h, std::size_t ww) {
    return ((n * O + o) * OH + h) * OW + ww;
  };
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t h = 0; h < OH; ++h)
        for (std::size_t ww = 0; ww < OW; ++ww) {
          double acc = bv[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < KH; ++i)
              for (std::size_t j = 0; j < KW; ++j) acc += x[in_at(n, c, h + i, ww + j)] * w[k_at(o, c, i, j)];
          out[out_at(n, o, h, ww)] = acc;
        }
  auto px = input.impl();
  auto pw = kernel.impl();
  return make_result(
      {N, O, OH, OW}, std::move(out), {input, kernel, bias},
      [=](std::span<const double> g, Grads& gin) {
        const auto& xv = px->data;
        const auto& wv = pw->data;
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t o = 0; o < O; ++o)
            for (std::size_t h = 0; h < OH; ++h)
              for (std::size_t ww = 0; ww < OW; ++ww) {
                const double go = g[out_at(n, o, h, ww)];
                if (!gin[2].empty()) gin[2][o] += go;
                for (std::size_t c = 0; c < C; ++c)
                  for (std::size_t i = 0; i < KH; ++i)
                    for (std::size_t j = 0; j < KW; ++j) {
                      if (!gin[0].empty()) gin[0][in_at(n, c, h + i, ww + j)] += go * wv[k_at(o, c, i, j)];
                      if (!gin[1].empty()) gin[1][k_at(o, c, i, j)] += go * xv[in_at(n, c, h + i, ww + j)];
                    }
              }
      });
}

Tensor max_pool2d(const Tensor& input, std::size_t kh, std::size_t kw) {
  if (input.rank() != 4) throw ShapeError("max_pool2d expects (N,C,H,W), got " + shape_str(input.shape()));
  const std::size_t N = input.shape()[0], C = input.shape()[1], H = input.shape()[2], W = input.shape()[3];
  if (kh == 0 || kw == 0 || H % kh != 0 || W % kw != 0) {
    throw ShapeError("max_pool2d window (" + std::to_string(kh) + "," + std::to_string(kw) +
                     ") does not divide input " + shape_str(input.shape()));
  }
  const std::size_t OH = H / kh, OW = W / kw;
  std::vector<double> out(N * C * OH * OW);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto x = input.data();
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t h = 0; h < OH; ++h)
      for (std::size_t w = 0; w < OW; ++w) {
        std::size_t best = (nc * H + h * kh) * W + w * kw;
        // Row-major window scan with strict '>' picks the lowest flat index on ties.
        for (std::size_t i = 0; i < kh; ++i)
          for (std::size_t j = 0; j < kw; ++j) {
            const std::size_t idx = (nc * H + h * kh + i) * W + w * kw + j;
            if (x[idx] > x[best]) best = idx;
          }
        const std::size_t o = (nc * OH + h) * OW + w;
        out[o] = x[best];
        (*argmax)[o] = best;
      }
  return make_result({N, C, OH, OW}, std::move(out), {input}, [argmax](std::span<const double> g, Grads& gin) {
    for (std::size_t o = 0; o < g.size(); ++o) gin[0][(*argmax)[o]] += g[o];
  });
}

Tensor log_softmax(const Tensor& logits) {
  if (logits.rank() == 0) throw ShapeError("log_softmax needs at least one axis");
  const std::size_t K = logits.shape().back();
  const std::size_t rows = K == 0 ? 0 : logits.numel() / K;
  const auto x = logits.data();
  std::vector<double> out(logits.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) m = std::max(m, x[r * K + k]);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(x[r * K + k] - m);
    const double lse = m + std::log(s);
    for (std::size_t k = 0; k < K; ++k) out[r * K + k] = x[r * K + k] - lse;
  }
  auto values = std::make_shared<std::vector<double>>(out);
  return make_result(logits.shape(), std::move(out), {logits},
                     [values, rows, K](std::span<const double> g, Grads& gin) {
                       for (std::size_t r = 0; r < rows; ++r) {
                         double gs = 0.0;
                         for (std::size_t k = 0; k < K; ++k) gs += g[r * K + k];
                         for (std::size_t k = 0; k < K; ++k) {
                           gin[0][r * K + k] += g[r * K + k] - std::exp((*values)[r * K + k]) * gs;
                         }
                       }
                     });
}

Tensor take_last(const Tensor& x, const Tensor& index) {
  if (x.rank() == 0) throw ShapeError("take_last needs at least one axis");
  Shape batch(x.shape().begin(), x.shape().end() - 1);
  if (index.shape() != batch) {
    throw ShapeError("take_last index shape " + shape_str(index.shape()) + " does not match " +
                     shape_str(batch));
  }
  const std::size_t K = x.shape().back();
  auto picks = std::make_shared<std::vector<std::size_t>>(index.numel());
  std::vector<double> out(index.numel());
  const auto xv = x.data();
  for (std::size_t r = 0; r < index.numel(); ++r) {
    const double v = index[r];
    if (!(v >= 0) || v >= static_cast<double>(K) || v != std::floor(v)) {
      throw AxisError("take_last index " + std::to_string(v) + " outside [0, " + std::to_string(K) + ")");
    }
    (*picks)[r] = r * K + static_cast<std::size_t>(v);
    out[r] = xv[(*picks)[r]];
  }
  return make_result(batch, std::move(out), {x, index}, [picks](std::span<const double> g, Grads& gin) {
    if (gin[0].empty()) return;
    for (std::size_t r = 0; r < g.size(); ++r) gin[0][(*picks)[r]] += g[r];
  });
}

}  // namespace ppl
