#pragma once

#include "affect/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace affect::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// |a − n| / max(|a|, |n|, floor), maximized over all entries.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares the tape's gradients of a scalar loss against central differences
// for every entry of every tensor in `inputs`. `loss` must be a pure function
// of the inputs' current values (reseed any RNG inside it). Entries for which
// `skip(tensor, index)` holds are left out.
inline GradCheck check_gradients(const std::vector<Tensor>& inputs, const std::function<Tensor(Tape&)>& loss,
                                 double h = 1e-5,
                                 const std::function<bool(std::size_t, std::size_t)>& skip = nullptr) {
  std::vector<std::vector<double>> analytic;
  {
    for (auto t : inputs) t.zero_grad();
    Tape tape;
    Tensor l = loss(tape);
    tape.backward(l);
    for (const auto& t : inputs) {
      auto g = t.grad();
      analytic.emplace_back(g.begin(), g.end());
      if (analytic.back().empty()) analytic.back().assign(t.size(), 0.0);
    }
  }
  GradCheck out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor t = inputs[k];
    auto data = t.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (skip && skip(k, i)) continue;
      const double saved = data[i];
      Tape off(false);
      data[i] = saved + h;
      const double up = loss(off).item();
      data[i] = saved - h;
      const double down = loss(off).item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      out.max_rel_error = std::max(out.max_rel_error, rel_error(analytic[k][i], numeric));
      ++out.checked;
    }
  }
  return out;
}

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double scale = 1.0, bool requires_grad = true) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// A weighted sum gives every output entry a distinct adjoint.
inline Tensor weighted_sum(Tape& tape, const Tensor& y, const Tensor& weights) {
  return sum(tape, mul(tape, y, weights));
}

}  // namespace affect::testing
