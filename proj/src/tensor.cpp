#include "affect/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace affect {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

ConstMapMat view(const Tensor& t) { return {t.data().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())}; }
ConstMapMat view(std::span<const double> s, std::size_t r, std::size_t c) {
  return {s.data(), Eigen::Index(r), Eigen::Index(c)};
}
MapMat view(std::span<double> s, std::size_t r, std::size_t c) {
  return {s.data(), Eigen::Index(r), Eigen::Index(c)};
}

bool tracks(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape.recording()) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a 2-D tensor, got " + shape_string(t.shape()));
}

// Elementwise unary op with a local derivative computed from (input, output).
template <typename Fwd, typename Deriv>
Tensor unary(Tape& tape, const Tensor& x, Fwd fwd, Deriv deriv) {
  const bool rg = tracks(tape, {&x});
  std::vector<double> out(x.size());
  auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xs[i]);
  Tensor y = Tensor::from(x.shape(), std::move(out), rg);
  if (rg) {
    tape.record([x, y, deriv]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      auto xs = x.data();
      auto ys = y.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * deriv(xs[i], ys[i]);
    });
  }
  return y;
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  const auto n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  if (n != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_string(shape));
  }
  Tensor t;
  t.node_ = std::make_shared<Node>();
  t.node_->shape = std::move(shape);
  t.node_->data = std::move(data);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

std::size_t Tensor::rows() const { return rank() <= 1 ? 1 : node_->shape[0]; }

std::size_t Tensor::cols() const {
  if (rank() == 0) return 1;
  if (rank() == 1) return node_->shape[0];
  std::size_t c = 1;
  for (std::size_t i = 1; i < node_->shape.size(); ++i) c *= node_->shape[i];
  return c;
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_string(shape()));
  return node_->data[0];
}

std::span<double> Tensor::grad_buffer() const {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
  return node_->grad;
}

Tensor Tensor::clone() const { return from(shape(), node_->data, requires_grad()); }

void Tape::backward(Tensor loss) {
  if (loss.size() != 1) throw DimensionError("backward requires a scalar loss, got " + shape_string(loss.shape()));
  if (!loss.requires_grad()) {
    adjoints_.clear();
    return;
  }
  loss.grad_buffer()[0] += 1.0;
  for (auto it = adjoints_.rbegin(); it != adjoints_.rend(); ++it) (*it)();
  adjoints_.clear();
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() > 2 || b.rank() > 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), n = b.cols();
  const bool rg = tracks(tape, {&a, &b});
  Tensor c = Tensor::zeros({m, n}, rg);
  view(c.data(), m, n).noalias() = view(a) * view(b);
  if (rg) {
    tape.record([a, b, c]() mutable {
      if (!c.has_grad()) return;
      auto g = view(c.grad(), c.rows(), c.cols());
      if (a.requires_grad()) view(a.grad_buffer(), a.rows(), a.cols()).noalias() += g * view(b).transpose();
      if (b.requires_grad()) view(b.grad_buffer(), b.rows(), b.cols()).noalias() += view(a).transpose() * g;
    });
  }
  return c;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const bool rg = tracks(tape, {&a, &b});
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor y = Tensor::from(a.shape(), std::move(out), rg);
  if (rg) {
    tape.record([a, b, y]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gt = t->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return y;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const bool rg = tracks(tape, {&a, &b});
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  Tensor y = Tensor::from(a.shape(), std::move(out), rg);
  if (rg) {
    tape.record([a, b, y]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return y;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const bool rg = tracks(tape, {&a, &b});
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor y = Tensor::from(a.shape(), std::move(out), rg);
  if (rg) {
    tape.record([a, b, y]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
    });
  }
  return y;
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  return unary(tape, x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor one_minus(Tape& tape, const Tensor& x) {
  return unary(tape, x, [](double v) { return 1.0 - v; }, [](double, double) { return -1.0; });
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  require_matrix("add_bias", x);
  if (bias.size() != x.cols()) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not fit " + shape_string(x.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols();
  const bool rg = tracks(tape, {&x, &bias});
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + bias[j];
  Tensor y = Tensor::from(x.shape(), std::move(out), rg);
  if (rg) {
    tape.record([x, bias, y, m, n]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    });
  }
  return y;
}

Tensor activation(Tape& tape, Activation kind, const Tensor& x) {
  switch (kind) {
    case Activation::relu:
      return unary(
          tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
          [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::sigmoid:
      return unary(
          tape, x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
          [](double, double s) { return s * (1.0 - s); });
    case Activation::tanh:
      return unary(
          tape, x, [](double v) { return std::tanh(v); }, [](double, double t) { return 1.0 - t * t; });
  }
  throw std::invalid_argument("activation: unknown kind");
}

Tensor conv1d_same(Tape& tape, const Tensor& seq, const Tensor& filters, const Tensor& bias) {
  require_matrix("conv1d_same", seq);
  if (filters.rank() != 3 || filters.shape()[0] != 3) {
    throw DimensionError("conv1d_same: filters must have shape [3xDxC], got " + shape_string(filters.shape()));
  }
  const std::size_t T = seq.rows(), D = seq.cols(), C = filters.shape()[2];
  if (T == 0) throw DimensionError("conv1d_same: empty sequence");
  if (filters.shape()[1] != D) {
    throw DimensionError("conv1d_same: filter depth " + shape_string(filters.shape()) + " does not match sequence " +
                         shape_string(seq.shape()));
  }
  if (bias.size() != C) throw DimensionError("conv1d_same: bias " + shape_string(bias.shape()) + " for C=" + std::to_string(C));

  const bool rg = tracks(tape, {&seq, &filters, &bias});
  Tensor out = Tensor::zeros({T, C}, rg);
  auto y = view(out.data(), T, C);
  auto x = view(seq);
  auto tap = [&](std::size_t w) { return view(filters.data().subspan(w * D * C, D * C), D, C); };
  y.rowwise() = view(bias.data(), 1, C).row(0);
  y.noalias() += x * tap(1);
  if (T > 1) {
    const auto k = Eigen::Index(T - 1);
    y.bottomRows(k).noalias() += x.topRows(k) * tap(0);
    y.topRows(k).noalias() += x.bottomRows(k) * tap(2);
  }
  if (rg) {
    tape.record([seq, filters, bias, out, T, D, C]() mutable {
      if (!out.has_grad()) return;
      auto g = view(out.grad(), T, C);
      const auto k = Eigen::Index(T - 1);
      auto fw = [&](std::size_t w) { return view(filters.data().subspan(w * D * C, D * C), D, C); };
      if (seq.requires_grad()) {
        auto gx = view(seq.grad_buffer(), T, D);
        gx.noalias() += g * fw(1).transpose();
        if (T > 1) {
          gx.topRows(k).noalias() += g.bottomRows(k) * fw(0).transpose();
          gx.bottomRows(k).noalias() += g.topRows(k) * fw(2).transpose();
        }
      }
      if (filters.requires_grad()) {
        auto gf = filters.grad_buffer();
        auto x = view(seq);
        auto gtap = [&](std::size_t w) { return view(gf.subspan(w * D * C, D * C), D, C); };
        gtap(1).noalias() += x.transpose() * g;
        if (T > 1) {
          gtap(0).noalias() += x.topRows(k).transpose() * g.bottomRows(k);
          gtap(2).noalias() += x.bottomRows(k).transpose() * g.topRows(k);
        }
      }
      if (bias.requires_grad()) view(bias.grad_buffer(), 1, C) += g.colwise().sum();
    });
  }
  return out;
}

Tensor max_pool_time(Tape& tape, const Tensor& seq, std::size_t pool, std::size_t stride) {
  require_matrix("max_pool_time", seq);
  if (pool < 1 || stride < 1) throw std::invalid_argument("max_pool_time: pool and stride must be >= 1");
  const std::size_t T = seq.rows(), C = seq.cols();
  if (T < pool) {
    throw DimensionError("max_pool_time: sequence too short (T=" + std::to_string(T) + " < pool=" +
                         std::to_string(pool) + ")");
  }
  const std::size_t out_t = (T - pool) / stride + 1;
  std::vector<double> out(out_t * C);
  std::vector<std::size_t> arg(out_t * C);
  for (std::size_t o = 0; o < out_t; ++o) {
    for (std::size_t c = 0; c < C; ++c) {
      std::size_t best = o * stride;
      for (std::size_t t = best + 1; t < o * stride + pool; ++t)
        if (seq[t * C + c] > seq[best * C + c]) best = t;
      arg[o * C + c] = best;
      out[o * C + c] = seq[best * C + c];
    }
  }
  const bool rg = tracks(tape, {&seq});
  Tensor y = Tensor::from({out_t, C}, std::move(out), rg);
  if (rg) {
    tape.record([seq, y, arg = std::move(arg), C]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      auto gx = seq.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[arg[i] * C + i % C] += g[i];
    });
  }
  return y;
}

Tensor global_max_pool(Tape& tape, const Tensor& seq) {
  require_matrix("global_max_pool", seq);
  const std::size_t T = seq.rows(), C = seq.cols();
  if (T == 0) throw DimensionError("global_max_pool: empty sequence");
  std::vector<double> out(C);
  std::vector<std::size_t> arg(C, 0);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 1; t < T; ++t)
      if (seq[t * C + c] > seq[arg[c] * C + c]) arg[c] = t;
    out[c] = seq[arg[c] * C + c];
  }
  const bool rg = tracks(tape, {&seq});
  Tensor y = Tensor::from({C}, std::move(out), rg);
  if (rg) {
    tape.record([seq, y, arg = std::move(arg), C]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      auto gx = seq.grad_buffer();
      for (std::size_t c = 0; c < C; ++c) gx[arg[c] * C + c] += g[c];
    });
  }
  return y;
}

Tensor dropout(Tape& tape, const Tensor& x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: probability must lie in [0, 1)");
  if (mode == Mode::eval || p == 0.0) return x;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = unit(rng) < p ? 0.0 : keep_scale;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  const bool rg = tracks(tape, {&x});
  Tensor y = Tensor::from(x.shape(), std::move(out), rg);
  if (rg) {
    tape.record([x, y, mask = std::move(mask)]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    });
  }
  return y;
}

Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() > 2 || begin > end || end > x.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                         shape_string(x.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols(), w = end - begin;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(x.data().begin() + std::ptrdiff_t(i * n + begin), w, out.begin() + std::ptrdiff_t(i * w));
  const bool rg = tracks(tape, {&x});
  Tensor y = Tensor::from({m, w}, std::move(out), rg);
  if (rg) {
    tape.record([x, y, m, n, w, begin]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) gx[i * n + begin + j] += g[i * w + j];
    });
  }
  return y;
}

Tensor select_row(Tape& tape, const Tensor& x, std::size_t r) {
  require_matrix("select_row", x);
  if (r >= x.rows()) throw DimensionError("select_row: row " + std::to_string(r) + " out of range for " + shape_string(x.shape()));
  const std::size_t n = x.cols();
  std::vector<double> out(x.data().begin() + std::ptrdiff_t(r * n), x.data().begin() + std::ptrdiff_t((r + 1) * n));
  const bool rg = tracks(tape, {&x});
  Tensor y = Tensor::from({1, n}, std::move(out), rg);
  if (rg) {
    tape.record([x, y, r, n]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      auto gx = x.grad_buffer();
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += g[j];
    });
  }
  return y;
}

Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::int32_t> ids) {
  require_matrix("gather_rows", table);
  const std::size_t V = table.rows(), D = table.cols();
  std::vector<double> out(ids.size() * D);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || std::size_t(ids[i]) >= V) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[i]) + " out of range for table " +
                           shape_string(table.shape()));
    }
    std::copy_n(table.data().begin() + std::ptrdiff_t(std::size_t(ids[i]) * D), D, out.begin() + std::ptrdiff_t(i * D));
  }
  const bool rg = tracks(tape, {&table});
  Tensor y = Tensor::from({ids.size(), D}, std::move(out), rg);
  if (rg) {
    tape.record([table, y, idv = std::vector<std::int32_t>(ids.begin(), ids.end()), D]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      auto gt = table.grad_buffer();
      for (std::size_t i = 0; i < idv.size(); ++i) {
        if (idv[i] == 0) continue;
        const std::size_t row = std::size_t(idv[i]);
        for (std::size_t d = 0; d < D; ++d) gt[row * D + d] += g[i * D + d];
      }
    });
  }
  return y;
}

Tensor mean_rows(Tape& tape, const Tensor& x) {
  require_matrix("mean_rows", x);
  const std::size_t T = x.rows(), D = x.cols();
  if (T == 0) throw DimensionError("mean_rows: no rows");
  std::vector<double> out(D, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t d = 0; d < D; ++d) out[d] += x[t * D + d];
  for (auto& v : out) v /= double(T);
  const bool rg = tracks(tape, {&x});
  Tensor y = Tensor::from({1, D}, std::move(out), rg);
  if (rg) {
    tape.record([x, y, T, D]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      auto gx = x.grad_buffer();
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t d = 0; d < D; ++d) gx[t * D + d] += g[d] / double(T);
    });
  }
  return y;
}

Tensor stack_rows(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("stack_rows: nothing to stack");
  const std::size_t C = parts[0].size();
  bool rg = false;
  std::vector<double> out;
  out.reserve(parts.size() * C);
  for (const auto& p : parts) {
    if (p.size() != C || p.rows() != 1) {
      throw DimensionError("stack_rows: row " + shape_string(p.shape()) + " does not match width " + std::to_string(C));
    }
    out.insert(out.end(), p.data().begin(), p.data().end());
    rg = rg || (tape.recording() && p.requires_grad());
  }
  Tensor y = Tensor::from({parts.size(), C}, std::move(out), rg);
  if (rg) {
    tape.record([ps = std::vector<Tensor>(parts.begin(), parts.end()), y, C]() mutable {
      if (!y.has_grad()) return;
      auto g = y.grad();
      for (std::size_t i = 0; i < ps.size(); ++i) {
        if (!ps[i].requires_grad()) continue;
        auto gp = ps[i].grad_buffer();
        for (std::size_t j = 0; j < C; ++j) gp[j] += g[i * C + j];
      }
    });
  }
  return y;
}

Tensor sum(Tape& tape, const Tensor& x) {
  const bool rg = tracks(tape, {&x});
  Tensor y = Tensor::scalar(std::accumulate(x.data().begin(), x.data().end(), 0.0), rg);
  if (rg) {
    tape.record([x, y]() mutable {
      if (!y.has_grad()) return;
      const double g = y.grad()[0];
      for (auto& v : x.grad_buffer()) v += g;
    });
  }
  return y;
}

Tensor mse_loss(Tape& tape, const Tensor& pred, const Tensor& target) {
  require_same_shape("mse_loss", pred, target);
  const std::size_t n = pred.size();
  if (n == 0) throw DimensionError("mse_loss: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  const bool rg = tracks(tape, {&pred});
  Tensor y = Tensor::scalar(acc / double(n), rg);
  if (rg) {
    tape.record([pred, target, y, n]() mutable {
      if (!y.has_grad()) return;
      const double g = y.grad()[0] * 2.0 / double(n);
      auto gp = pred.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gp[i] += g * (pred[i] - target[i]);
    });
  }
  return y;
}

}  // namespace affect
