#pragma once

// Dual-channel layer primitives.
//
// Every activation travels with its tangent d(activation)/dt, where t is the
// scalar time input of the network. A loss may consume both channels, so each
// backward rule returns
//   adj_x    = J^T adj_y + (d[J xdot]/dx)^T adj_ydot
//   adj_xdot = J^T adj_ydot
// which for pointwise nonlinearities needs the second derivative.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mtpinn/errors.hpp"
#include "mtpinn/matrix.hpp"
#include "mtpinn/rng.hpp"

namespace mtpinn {

struct DualBatch {
  Matrix value;
  Matrix tangent;

  DualBatch() = default;
  DualBatch(Matrix v, Matrix t) : value(std::move(v)), tangent(std::move(t)) {
    require(value.same_shape(tangent), "DualBatch: value/tangent shape mismatch");
  }
  std::size_t batch() const noexcept { return value.rows(); }
  std::size_t width() const noexcept { return value.cols(); }
};

enum class Primitive { affine, concat, swish, batch_norm, dropout, sigmoid, identity };
enum class Mode { train, eval };

inline const char *to_string(Primitive p) {
  switch (p) {
  case Primitive::affine: return "affine";
  case Primitive::concat: return "concat";
  case Primitive::swish: return "swish";
  case Primitive::batch_norm: return "batch_norm";
  case Primitive::dropout: return "dropout";
  case Primitive::sigmoid: return "sigmoid";
  case Primitive::identity: return "identity";
  }
  return "?";
}

/// Primitive plus its non-trainable hyperparameters.
struct PrimitiveSpec {
  Primitive kind = Primitive::identity;
  double dropout_rate = 0.0;
  double bn_epsilon = 1e-5;
};

struct PrimitiveCache {
  Primitive kind = Primitive::identity;
  Mode mode = Mode::eval;
  DualBatch input;
  Matrix weight;                   // affine
  bool has_bias = false;           // affine
  Matrix mask;                     // dropout, already scaled by 1/(1-p)
  Matrix normalized;               // batch-norm x-hat
  std::vector<double> scale;       // batch-norm gamma
  std::vector<double> mean;        // batch-norm statistics actually used
  std::vector<double> var;
  std::vector<double> inv_std;
  std::size_t split = 0;           // concat: width of the left operand
};

struct DualForward {
  DualBatch output;
  PrimitiveCache cache;
};

struct DualBackward {
  Matrix adj_value;
  Matrix adj_tangent;
  /// Gradients for the trainable params in the order they were passed to
  /// dual_forward. Batch-norm returns {scale, shift} only.
  std::vector<Matrix> adj_params;
};

inline double logistic(double x) {
  if (x >= 0.0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

/// s(x) = x sigma(x) and its first two derivatives.
struct SwishDerivs {
  double value, d1, d2;
};

inline SwishDerivs swish_derivs(double x) {
  const double s = logistic(x);
  const double ds = s * (1.0 - s);
  return {x * s, s + x * ds, ds * (2.0 + x * (1.0 - 2.0 * s))};
}

struct SigmoidDerivs {
  double value, d1, d2;
};

inline SigmoidDerivs sigmoid_derivs(double x) {
  const double s = logistic(x);
  const double ds = s * (1.0 - s);
  return {s, ds, ds * (1.0 - 2.0 * s)};
}

namespace detail {

inline void check_finite(const DualBatch &b, Primitive p) {
  if (!b.value.all_finite() || !b.tangent.all_finite())
    throw NumericDomainError(std::string("non-finite input to ") + to_string(p));
}

inline void expect_params(std::span<const Matrix> params, std::size_t lo, std::size_t hi,
                          Primitive p) {
  if (params.size() < lo || params.size() > hi)
    throw ContractViolation(std::string(to_string(p)) + ": wrong parameter count " +
                            std::to_string(params.size()));
}

template <typename Derivs>
DualForward pointwise_forward(const DualBatch &in, Primitive kind, Derivs derivs) {
  DualForward f;
  f.output = DualBatch(Matrix(in.batch(), in.width()), Matrix(in.batch(), in.width()));
  auto xv = in.value.values();
  auto xt = in.tangent.values();
  auto yv = f.output.value.values();
  auto yt = f.output.tangent.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const auto d = derivs(xv[i]);
    yv[i] = d.value;
    yt[i] = d.d1 * xt[i];
  }
  f.cache.kind = kind;
  f.cache.input = in;
  return f;
}

template <typename Derivs>
DualBackward pointwise_backward(const PrimitiveCache &c, const Matrix &adj_value,
                                const Matrix &adj_tangent, Derivs derivs) {
  DualBackward b;
  b.adj_value = Matrix(adj_value.rows(), adj_value.cols());
  b.adj_tangent = Matrix(adj_value.rows(), adj_value.cols());
  auto xv = c.input.value.values();
  auto xt = c.input.tangent.values();
  auto av = adj_value.values();
  auto at = adj_tangent.values();
  auto ov = b.adj_value.values();
  auto ot = b.adj_tangent.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const auto d = derivs(xv[i]);
    ov[i] = d.d1 * av[i] + d.d2 * xt[i] * at[i];
    ot[i] = d.d1 * at[i];
  }
  return b;
}

} // namespace detail

/// Forward rule for every primitive except concat (see dual_concat).
///
/// params: affine {W (in x out)} or {W, b (1 x out)}; batch_norm {scale,
/// shift, running_mean, running_var}, each 1 x width; others none.
/// In train mode batch-norm normalizes with the batch statistics, and the
/// tangent treats those statistics as constants in t.
inline DualForward dual_forward(const PrimitiveSpec &spec, std::span<const Matrix> params,
                                const DualBatch &in, Mode mode, Pcg32 &rng) {
  require(in.value.same_shape(in.tangent), "dual_forward: value/tangent shape mismatch");
  detail::check_finite(in, spec.kind);

  switch (spec.kind) {
  case Primitive::affine: {
    detail::expect_params(params, 1, 2, spec.kind);
    const Matrix &w = params[0];
    require(w.rows() == in.width(), "affine: input width " + std::to_string(in.width()) +
                                        " != weight rows " + std::to_string(w.rows()));
    DualForward f;
    f.output = DualBatch(matmul(in.value, w), matmul(in.tangent, w));
    if (params.size() == 2) {
      const Matrix &b = params[1];
      require(b.rows() == 1 && b.cols() == w.cols(), "affine: bias shape mismatch");
      for (std::size_t r = 0; r < f.output.batch(); ++r)
        for (std::size_t c = 0; c < w.cols(); ++c)
          f.output.value(r, c) += b(0, c);
    }
    f.cache.kind = spec.kind;
    f.cache.mode = mode;
    f.cache.input = in;
    f.cache.weight = w;
    f.cache.has_bias = params.size() == 2;
    return f;
  }
  case Primitive::swish:
    detail::expect_params(params, 0, 0, spec.kind);
    return detail::pointwise_forward(in, spec.kind, swish_derivs);
  case Primitive::sigmoid:
    detail::expect_params(params, 0, 0, spec.kind);
    return detail::pointwise_forward(in, spec.kind, sigmoid_derivs);
  case Primitive::identity: {
    detail::expect_params(params, 0, 0, spec.kind);
    DualForward f;
    f.output = in;
    f.cache.kind = spec.kind;
    return f;
  }
  case Primitive::dropout: {
    detail::expect_params(params, 0, 0, spec.kind);
    const double p = spec.dropout_rate;
    require(p >= 0.0 && p < 1.0, "dropout: rate must lie in [0, 1)");
    DualForward f;
    f.cache.kind = spec.kind;
    f.cache.mode = mode;
    if (mode == Mode::eval || p == 0.0) {
      f.output = in;
      return f;
    }
    const double keep_scale = 1.0 / (1.0 - p);
    f.cache.mask = Matrix(in.batch(), in.width());
    for (double &m : f.cache.mask.values())
      m = rng.uniform() >= p ? keep_scale : 0.0;
    f.output = in;
    auto mv = f.cache.mask.values();
    auto yv = f.output.value.values();
    auto yt = f.output.tangent.values();
    for (std::size_t i = 0; i < mv.size(); ++i) {
      yv[i] *= mv[i];
      yt[i] *= mv[i];
    }
    return f;
  }
  case Primitive::batch_norm: {
    detail::expect_params(params, 4, 4, spec.kind);
    const std::size_t n = in.batch();
    const std::size_t width = in.width();
    for (const auto &p : params)
      require(p.rows() == 1 && p.cols() == width, "batch_norm: parameter shape mismatch");
    require(n >= 1, "batch_norm: empty batch");
    DualForward f;
    PrimitiveCache &c = f.cache;
    c.kind = spec.kind;
    c.mode = mode;
    c.input = in;
    c.scale.assign(params[0].values().begin(), params[0].values().end());
    c.mean.assign(width, 0.0);
    c.var.assign(width, 0.0);
    c.inv_std.assign(width, 0.0);
    if (mode == Mode::train) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < width; ++j)
          c.mean[j] += in.value(r, j);
      for (double &m : c.mean)
        m /= static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < width; ++j) {
          const double d = in.value(r, j) - c.mean[j];
          c.var[j] += d * d;
        }
      for (double &v : c.var)
        v /= static_cast<double>(n);
    } else {
      for (std::size_t j = 0; j < width; ++j) {
        c.mean[j] = params[2](0, j);
        c.var[j] = params[3](0, j);
      }
    }
    for (std::size_t j = 0; j < width; ++j)
      c.inv_std[j] = 1.0 / std::sqrt(c.var[j] + spec.bn_epsilon);
    c.normalized = Matrix(n, width);
    f.output = DualBatch(Matrix(n, width), Matrix(n, width));
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < width; ++j) {
        const double xhat = (in.value(r, j) - c.mean[j]) * c.inv_std[j];
        c.normalized(r, j) = xhat;
        f.output.value(r, j) = params[0](0, j) * xhat + params[1](0, j);
        f.output.tangent(r, j) = params[0](0, j) * c.inv_std[j] * in.tangent(r, j);
      }
    return f;
  }
  case Primitive::concat:
    throw ContractViolation("dual_forward: concat takes two operands, use dual_concat");
  }
  throw ContractViolation("dual_forward: unknown primitive");
}

/// Joins `left` and `right` column-wise (time column with emotion columns).
inline DualForward dual_concat(const DualBatch &left, const DualBatch &right) {
  require(left.batch() == right.batch(), "concat: batch size mismatch");
  detail::check_finite(left, Primitive::concat);
  detail::check_finite(right, Primitive::concat);
  const std::size_t n = left.batch();
  const std::size_t w = left.width() + right.width();
  DualForward f;
  f.output = DualBatch(Matrix(n, w), Matrix(n, w));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < left.width(); ++j) {
      f.output.value(r, j) = left.value(r, j);
      f.output.tangent(r, j) = left.tangent(r, j);
    }
    for (std::size_t j = 0; j < right.width(); ++j) {
      f.output.value(r, left.width() + j) = right.value(r, j);
      f.output.tangent(r, left.width() + j) = right.tangent(r, j);
    }
  }
  f.cache.kind = Primitive::concat;
  f.cache.split = left.width();
  f.cache.input = DualBatch(Matrix(n, w), Matrix(n, w)); // shape record only
  return f;
}

/// Columns [begin, begin + count) of `m`.
inline Matrix column_slice(const Matrix &m, std::size_t begin, std::size_t count) {
  require(begin + count <= m.cols(), "column_slice: out of range");
  Matrix out(m.rows(), count);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t j = 0; j < count; ++j)
      out(r, j) = m(r, begin + j);
  return out;
}

inline DualBackward dual_backward(Primitive prim, const PrimitiveCache &c,
                                  const Matrix &adj_value, const Matrix &adj_tangent) {
  if (prim != c.kind)
    throw ContractViolation(std::string("dual_backward: cache from ") + to_string(c.kind) +
                            " applied to " + to_string(prim));
  require(adj_value.same_shape(adj_tangent), "dual_backward: adjoint shape mismatch");

  switch (prim) {
  case Primitive::affine: {
    require(adj_value.rows() == c.input.batch() && adj_value.cols() == c.weight.cols(),
            "affine backward: adjoint shape mismatch");
    DualBackward b;
    b.adj_value = matmul_bt(adj_value, c.weight);
    b.adj_tangent = matmul_bt(adj_tangent, c.weight);
    Matrix dw(c.weight.rows(), c.weight.cols());
    add_matmul_at(c.input.value, adj_value, dw);
    add_matmul_at(c.input.tangent, adj_tangent, dw);
    b.adj_params.push_back(std::move(dw));
    if (c.has_bias)
      b.adj_params.push_back(column_sums(adj_value));
    return b;
  }
  case Primitive::concat: {
    require(adj_value.rows() == c.input.batch() && adj_value.cols() == c.input.width(),
            "concat backward: adjoint shape mismatch");
    return {adj_value, adj_tangent, {}};
  }
  case Primitive::swish:
    require(adj_value.same_shape(c.input.value), "swish backward: adjoint shape mismatch");
    return detail::pointwise_backward(c, adj_value, adj_tangent, swish_derivs);
  case Primitive::sigmoid:
    require(adj_value.same_shape(c.input.value), "sigmoid backward: adjoint shape mismatch");
    return detail::pointwise_backward(c, adj_value, adj_tangent, sigmoid_derivs);
  case Primitive::identity:
    return {adj_value, adj_tangent, {}};
  case Primitive::dropout: {
    if (c.mask.empty())
      return {adj_value, adj_tangent, {}};
    require(adj_value.same_shape(c.mask), "dropout backward: adjoint shape mismatch");
    DualBackward b{adj_value, adj_tangent, {}};
    auto mv = c.mask.values();
    auto ov = b.adj_value.values();
    auto ot = b.adj_tangent.values();
    for (std::size_t i = 0; i < mv.size(); ++i) {
      ov[i] *= mv[i];
      ot[i] *= mv[i];
    }
    return b;
  }
  case Primitive::batch_norm: {
    require(adj_value.same_shape(c.input.value), "batch_norm backward: adjoint shape mismatch");
    const std::size_t n = c.input.batch();
    const std::size_t width = c.input.width();
    const double dn = static_cast<double>(n);
    DualBackward b;
    b.adj_value = Matrix(n, width);
    b.adj_tangent = Matrix(n, width);
    Matrix dscale(1, width), dshift(1, width);
    for (std::size_t j = 0; j < width; ++j) {
      const double g = c.scale[j];
      const double s = c.inv_std[j];
      double sum_dy = 0.0, sum_dy_xhat = 0.0, sum_tan = 0.0, sum_tan_scale = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        const double dy = adj_value(r, j);
        const double dyt = adj_tangent(r, j);
        const double xhat = c.normalized(r, j);
        const double xt = c.input.tangent(r, j);
        sum_dy += dy;
        sum_dy_xhat += dy * xhat;
        sum_tan += dyt * xt;           // d/d(scale) of the tangent channel, over s
        sum_tan_scale += g * xt * dyt; // d/d(inv_std) of the tangent channel
        b.adj_tangent(r, j) = g * s * dyt;
      }
      dscale(0, j) = sum_dy_xhat + s * sum_tan;
      dshift(0, j) = sum_dy;
      if (c.mode == Mode::train) {
        // x-hat adjoint is g*dy; the standard batch-norm gradient, plus the
        // path x -> var -> inv_std -> tangent.
        for (std::size_t r = 0; r < n; ++r) {
          const double xhat = c.normalized(r, j);
          const double dxhat = g * adj_value(r, j);
          b.adj_value(r, j) = s / dn * (dn * dxhat - g * sum_dy - xhat * g * sum_dy_xhat) -
                              s * s * sum_tan_scale * xhat / dn;
        }
      } else {
        for (std::size_t r = 0; r < n; ++r)
          b.adj_value(r, j) = g * s * adj_value(r, j);
      }
    }
    b.adj_params.push_back(std::move(dscale));
    b.adj_params.push_back(std::move(dshift));
    return b;
  }
  }
  throw ContractViolation("dual_backward: unknown primitive");
}

} // namespace mtpinn
