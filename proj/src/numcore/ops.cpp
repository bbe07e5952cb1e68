#include "wisa/numcore/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "wisa/errors.hpp"

namespace wisa::numcore {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

ConstMapMat as_matrix(const Tensor& t) {
  return ConstMapMat(t.data().data(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
}
MapMat as_matrix(Tensor& t) {
  return MapMat(t.data().data(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
}

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw UsageError("operands recorded on different tapes");
  return a.tape();
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

void require_rank(const char* op, Var a, std::size_t rank) {
  if (a.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_to_string(a.shape()));
  }
}

void require_finite(const char* op, const Tensor& t) {
  if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite input");
}

// Elementwise unary op with derivative expressed via (input, output).
template <typename F, typename D>
Var unary(Var x, F f, D dfdx) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const auto xid = x.id();
  Tape& tape = x.tape();
  const auto out_id = static_cast<std::uint32_t>(tape.size());
  return tape.record(std::move(out), x.needs_grad(), [xid, out_id, dfdx](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(xid);
    const Tensor& yv = t.value(out_id);
    Tensor& dx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * dfdx(xv[i], yv[i]);
  });
}

void add_into(Tape& t, std::uint32_t id, const Tensor& g, double factor = 1.0) {
  if (!t.needs_grad(id)) return;
  Tensor& dst = t.grad_buffer(id);
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += factor * g[i];
}

}  // namespace

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape("add", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const auto ai = a.id(), bi = b.id();
  return tape.record(std::move(out), a.needs_grad() || b.needs_grad(), [ai, bi](Tape& t, const Tensor& g) {
    add_into(t, ai, g);
    add_into(t, bi, g);
  });
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const auto ai = a.id(), bi = b.id();
  return tape.record(std::move(out), a.needs_grad() || b.needs_grad(), [ai, bi](Tape& t, const Tensor& g) {
    add_into(t, ai, g);
    add_into(t, bi, g, -1.0);
  });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const auto ai = a.id(), bi = b.id();
  return tape.record(std::move(out), a.needs_grad() || b.needs_grad(), [ai, bi](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    if (t.needs_grad(ai)) {
      Tensor& da = t.grad_buffer(ai);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (t.needs_grad(bi)) {
      Tensor& db = t.grad_buffer(bi);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

Var div(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape("div", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b.value()[i];
  const auto ai = a.id(), bi = b.id();
  return tape.record(std::move(out), a.needs_grad() || b.needs_grad(), [ai, bi](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    if (t.needs_grad(ai)) {
      Tensor& da = t.grad_buffer(ai);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] / bv[i];
    }
    if (t.needs_grad(bi)) {
      Tensor& db = t.grad_buffer(bi);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  const auto ai = a.id();
  return a.tape().record(std::move(out), a.needs_grad(),
                         [ai, factor](Tape& t, const Tensor& g) { add_into(t, ai, g, factor); });
}

Var add_scalar(Var a, double c) {
  Tensor out = a.value();
  for (auto& v : out.data()) v += c;
  const auto ai = a.id();
  return a.tape().record(std::move(out), a.needs_grad(), [ai](Tape& t, const Tensor& g) { add_into(t, ai, g); });
}

Var add_row(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_rank("add_row", a, 2);
  require_rank("add_row", b, 1);
  const std::size_t n = a.value().dim(0), d = a.value().dim(1);
  if (b.value().dim(0) != d) {
    throw DimensionError("add_row: row vector " + shape_to_string(b.shape()) + " does not match " +
                         shape_to_string(a.shape()));
  }
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] += bv[c];
  const auto ai = a.id(), bi = b.id();
  return tape.record(std::move(out), a.needs_grad() || b.needs_grad(), [ai, bi, n, d](Tape& t, const Tensor& g) {
    add_into(t, ai, g);
    if (t.needs_grad(bi)) {
      Tensor& db = t.grad_buffer(bi);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) db[c] += g[r * d + c];
    }
  });
}

Var mul_row(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_rank("mul_row", a, 2);
  require_rank("mul_row", b, 1);
  const std::size_t n = a.value().dim(0), d = a.value().dim(1);
  if (b.value().dim(0) != d) {
    throw DimensionError("mul_row: row vector " + shape_to_string(b.shape()) + " does not match " +
                         shape_to_string(a.shape()));
  }
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] *= bv[c];
  const auto ai = a.id(), bi = b.id();
  return tape.record(std::move(out), a.needs_grad() || b.needs_grad(), [ai, bi, n, d](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    if (t.needs_grad(ai)) {
      Tensor& da = t.grad_buffer(ai);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) da[r * d + c] += g[r * d + c] * bv[c];
    }
    if (t.needs_grad(bi)) {
      Tensor& db = t.grad_buffer(bi);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) db[c] += g[r * d + c] * av[r * d + c];
    }
  });
}

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.value().dim(1) != b.value().dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_to_string(a.shape()) + " by " +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.value().dim(0), n = b.value().dim(1);
  Tensor out({m, n});
  as_matrix(out).noalias() = as_matrix(a.value()) * as_matrix(b.value());
  const auto ai = a.id(), bi = b.id();
  return tape.record(std::move(out), a.needs_grad() || b.needs_grad(), [ai, bi](Tape& t, const Tensor& g) {
    const auto gm = as_matrix(g);
    if (t.needs_grad(ai)) as_matrix(t.grad_buffer(ai)).noalias() += gm * as_matrix(t.value(bi)).transpose();
    if (t.needs_grad(bi)) as_matrix(t.grad_buffer(bi)).noalias() += as_matrix(t.value(ai)).transpose() * gm;
  });
}

Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }
Var linear(Var x, Var w) { return matmul(x, w); }

Var sigmoid(Var x) {
  require_finite("sigmoid", x.value());
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](double, double y) { return y * (1.0 - y); });
}

Var silu(Var x) {
  return unary(
      x, [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

Var gelu(Var x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double c = 0.044715;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::tanh(k * (v + c * v * v * v))); },
      [](double v, double) {
        const double u = k * (v + c * v * v * v);
        const double th = std::tanh(u);
        return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * k * (1.0 + 3.0 * c * v * v);
      });
}

Var exp(Var x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(Var x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var softmax(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  require_finite("softmax", xv);
  if (axis >= xv.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_to_string(xv.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= xv.dim(i);
  for (std::size_t i = axis + 1; i < xv.rank(); ++i) inner *= xv.dim(i);
  const std::size_t len = xv.dim(axis);
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      double s = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        s += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= s;
    }
  }
  const auto xi = x.id();
  const auto yi = static_cast<std::uint32_t>(x.tape().size());
  return x.tape().record(std::move(out), x.needs_grad(), [xi, yi, outer, inner, len](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(yi);
    Tensor& dx = t.grad_buffer(xi);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t p = base + j * inner;
          dx[p] += y[p] * (g[p] - dot);
        }
      }
    }
  });
}

Var layer_norm(Var x, double eps) {
  const Tensor& xv = x.value();
  require_finite("layer_norm", xv);
  const std::size_t d = xv.shape().back();
  const std::size_t rows = xv.size() / d;
  Tensor out(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += row[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = (row[c] - mu) * is;
  }
  const auto xi = x.id();
  const auto yi = static_cast<std::uint32_t>(x.tape().size());
  return x.tape().record(std::move(out), x.needs_grad(), [xi, yi, d, rows, inv_std](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(yi);
    Tensor& dx = t.grad_buffer(xi);
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t r = 0; r < rows; ++r) {
      double mg = 0.0, mgy = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        mg += g[r * d + c];
        mgy += g[r * d + c] * y[r * d + c];
      }
      mg *= inv_d;
      mgy *= inv_d;
      const double is = (*inv_std)[r];
      for (std::size_t c = 0; c < d; ++c) {
        const std::size_t p = r * d + c;
        dx[p] += is * (g[p] - mg - y[p] * mgy);
      }
    }
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const auto xi = x.id();
  return x.tape().record(Tensor::scalar(s), x.needs_grad(), [xi](Tape& t, const Tensor& g) {
    Tensor& dx = t.grad_buffer(xi);
    for (auto& v : dx.data()) v += g[0];
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var mse(Var a, Var b) {
  require_finite("mse", a.value());
  require_finite("mse", b.value());
  return mean(square(sub(a, b)));
}

Var mean_rows(Var x) {
  require_rank("mean_rows", x, 2);
  const std::size_t n = x.value().dim(0), d = x.value().dim(1);
  Tensor out({d});
  const Tensor& xv = x.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[c] += xv[r * d + c];
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& v : out.data()) v *= inv;
  const auto xi = x.id();
  return x.tape().record(std::move(out), x.needs_grad(), [xi, n, d, inv](Tape& t, const Tensor& g) {
    Tensor& dx = t.grad_buffer(xi);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) dx[r * d + c] += g[c] * inv;
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  std::vector<double> data;
  std::vector<std::pair<std::uint32_t, std::size_t>> spans;
  bool needs = false;
  for (const Var& p : parts) {
    require_rank("concat", p, 1);
    if (&p.tape() != &parts[0].tape()) throw UsageError("operands recorded on different tapes");
    spans.emplace_back(p.id(), data.size());
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    needs = needs || p.needs_grad();
  }
  Tape& tape = parts[0].tape();
  const std::size_t n = data.size();
  return tape.record(Tensor({n}, std::move(data)), needs, [spans](Tape& t, const Tensor& g) {
    for (const auto& [id, offset] : spans) {
      if (!t.needs_grad(id)) continue;
      Tensor& d = t.grad_buffer(id);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[offset + i];
    }
  });
}

Var slice(Var x, std::size_t start, std::size_t length) {
  require_rank("slice", x, 1);
  if (start + length > x.value().size() || length == 0) {
    throw DimensionError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range for " + shape_to_string(x.shape()));
  }
  std::vector<double> data(x.value().data().begin() + static_cast<std::ptrdiff_t>(start),
                           x.value().data().begin() + static_cast<std::ptrdiff_t>(start + length));
  const auto xi = x.id();
  return x.tape().record(Tensor({length}, std::move(data)), x.needs_grad(), [xi, start](Tape& t, const Tensor& g) {
    Tensor& dx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) dx[start + i] += g[i];
  });
}

Var slice_cols(Var x, std::size_t start, std::size_t length) {
  require_rank("slice_cols", x, 2);
  const std::size_t n = x.value().dim(0), d = x.value().dim(1);
  if (start + length > d || length == 0) {
    throw DimensionError("slice_cols [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range for " + shape_to_string(x.shape()));
  }
  Tensor out({n, length});
  const Tensor& xv = x.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < length; ++c) out[r * length + c] = xv[r * d + start + c];
  const auto xi = x.id();
  return x.tape().record(std::move(out), x.needs_grad(), [xi, n, d, start, length](Tape& t, const Tensor& g) {
    Tensor& dx = t.grad_buffer(xi);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < length; ++c) dx[r * d + start + c] += g[r * length + c];
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const auto xi = x.id();
  return x.tape().record(std::move(out), x.needs_grad(), [xi](Tape& t, const Tensor& g) {
    Tensor& dx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  require_rank("gather_rows", table, 2);
  if (ids.empty()) throw DimensionError("gather_rows: empty id list");
  const std::size_t v = table.value().dim(0), d = table.value().dim(1);
  Tensor out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= v) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[r]) + " out of range for table " +
                           shape_to_string(table.shape()));
    }
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = table.value()[ids[r] * d + c];
  }
  const auto ti = table.id();
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return table.tape().record(std::move(out), table.needs_grad(), [ti, idv, d](Tape& t, const Tensor& g) {
    Tensor& dt = t.grad_buffer(ti);
    for (std::size_t r = 0; r < idv.size(); ++r)
      for (std::size_t c = 0; c < d; ++c) dt[idv[r] * d + c] += g[r * d + c];
  });
}

Var gather(Var x, std::span<const std::size_t> index, Shape shape) {
  if (shape_numel(shape) != index.size())
    throw DimensionError("gather: " + std::to_string(index.size()) + " indices for shape " + shape_to_string(shape));
  const std::size_t n = x.value().size();
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n) throw DimensionError("gather: index " + std::to_string(index[i]) + " out of range");
    out[i] = x.value()[index[i]];
  }
  const auto xi = x.id();
  auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
  return x.tape().record(std::move(out), x.needs_grad(), [xi, idx](Tape& t, const Tensor& g) {
    Tensor& dx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < idx->size(); ++i) dx[(*idx)[i]] += g[i];
  });
}

Var stop_gradient(Var x) { return x.tape().constant(x.value()); }

namespace {

struct AttentionShape {
  std::size_t n;
  std::size_t heads;
  std::size_t head_dim;
};

AttentionShape check_attention(const Tensor& q, const Tensor& k, const Tensor* v, std::size_t heads) {
  if (q.rank() != 2 || k.shape() != q.shape() || (v && v->shape() != q.shape())) {
    throw DimensionError("attention: q/k/v must share a rank-2 shape, got " + shape_to_string(q.shape()) + ", " +
                         shape_to_string(k.shape()) + (v ? ", " + shape_to_string(v->shape()) : std::string{}));
  }
  if (heads == 0 || q.dim(1) % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(q.dim(1)) + " not divisible into " +
                         std::to_string(heads) + " heads");
  }
  return {q.dim(0), heads, q.dim(1) / heads};
}

RowMat head_probabilities(const ConstMapMat& q, const ConstMapMat& k, std::size_t h, std::size_t hd) {
  const auto col = static_cast<Eigen::Index>(h * hd);
  const auto w = static_cast<Eigen::Index>(hd);
  RowMat s = (q.middleCols(col, w) * k.middleCols(col, w).transpose()) * (1.0 / std::sqrt(static_cast<double>(hd)));
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - mx).exp();
    s.row(r) /= s.row(r).sum();
  }
  return s;
}

}  // namespace

Var multi_head_attention(Var q, Var k, Var v, std::size_t heads) {
  const auto shp = check_attention(q.value(), k.value(), &v.value(), heads);
  Tape& tape = q.tape();
  if (&k.tape() != &tape || &v.tape() != &tape) throw UsageError("operands recorded on different tapes");
  const auto qm = as_matrix(q.value());
  const auto km = as_matrix(k.value());
  const auto vm = as_matrix(v.value());
  Tensor out(q.shape());
  auto om = as_matrix(out);
  auto probs = std::make_shared<std::vector<RowMat>>();
  probs->reserve(heads);
  const auto w = static_cast<Eigen::Index>(shp.head_dim);
  for (std::size_t h = 0; h < heads; ++h) {
    probs->push_back(head_probabilities(qm, km, h, shp.head_dim));
    const auto col = static_cast<Eigen::Index>(h * shp.head_dim);
    om.middleCols(col, w).noalias() = probs->back() * vm.middleCols(col, w);
  }
  const bool needs = q.needs_grad() || k.needs_grad() || v.needs_grad();
  const auto qi = q.id(), ki = k.id(), vi = v.id();
  return tape.record(std::move(out), needs, [qi, ki, vi, shp, probs](Tape& t, const Tensor& g) {
    const auto gm = as_matrix(g);
    const auto qm = as_matrix(t.value(qi));
    const auto km = as_matrix(t.value(ki));
    const auto vm = as_matrix(t.value(vi));
    const double sc = 1.0 / std::sqrt(static_cast<double>(shp.head_dim));
    const auto w = static_cast<Eigen::Index>(shp.head_dim);
    const bool gq = t.needs_grad(qi), gk = t.needs_grad(ki), gv = t.needs_grad(vi);
    for (std::size_t h = 0; h < shp.heads; ++h) {
      const auto col = static_cast<Eigen::Index>(h * shp.head_dim);
      const RowMat& a = (*probs)[h];
      const auto go = gm.middleCols(col, w);
      if (gv) as_matrix(t.grad_buffer(vi)).middleCols(col, w).noalias() += a.transpose() * go;
      if (!gq && !gk) continue;
      RowMat da = go * vm.middleCols(col, w).transpose();
      Eigen::VectorXd rowdot = (da.array() * a.array()).rowwise().sum();
      RowMat ds = a.array() * (da.colwise() - rowdot).array();
      if (gq) as_matrix(t.grad_buffer(qi)).middleCols(col, w).noalias() += sc * ds * km.middleCols(col, w);
      if (gk) as_matrix(t.grad_buffer(ki)).middleCols(col, w).noalias() += sc * ds.transpose() * qm.middleCols(col, w);
    }
  });
}

std::vector<Tensor> attention_probabilities(const Tensor& q, const Tensor& k, std::size_t heads) {
  const auto shp = check_attention(q, k, nullptr, heads);
  std::vector<Tensor> maps;
  maps.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    RowMat p = head_probabilities(as_matrix(q), as_matrix(k), h, shp.head_dim);
    Tensor m({shp.n, shp.n});
    as_matrix(m) = p;
    maps.push_back(std::move(m));
  }
  return maps;
}

Var bce_probs(Var probs, Var targets, double clamp_eps) {
  Tape& tape = same_tape(probs, targets);
  require_same_shape("bce_probs", probs, targets);
  require_finite("bce_probs", probs.value());
  const Tensor& p = probs.value();
  const Tensor& y = targets.value();
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], clamp_eps, 1.0 - clamp_eps);
    loss -= y[i] * std::log(pc) + (1.0 - y[i]) * std::log(1.0 - pc);
  }
  const auto pi = probs.id(), yi = targets.id();
  const bool needs = probs.needs_grad() || targets.needs_grad();
  return tape.record(Tensor::scalar(loss), needs, [pi, yi, clamp_eps](Tape& t, const Tensor& g) {
    const Tensor& p = t.value(pi);
    const Tensor& y = t.value(yi);
    if (t.needs_grad(pi)) {
      Tensor& dp = t.grad_buffer(pi);
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < clamp_eps || p[i] > 1.0 - clamp_eps) continue;
        dp[i] += g[0] * (-y[i] / p[i] + (1.0 - y[i]) / (1.0 - p[i]));
      }
    }
    if (t.needs_grad(yi)) {
      Tensor& dy = t.grad_buffer(yi);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double pc = std::clamp(p[i], clamp_eps, 1.0 - clamp_eps);
        dy[i] += g[0] * (-std::log(pc) + std::log(1.0 - pc));
      }
    }
  });
}

}  // namespace wisa::numcore
