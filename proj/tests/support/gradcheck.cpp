#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace affect::testing {

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-4});
}

GradCheck grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& leaves, double h,
                     std::size_t per_leaf, std::uint64_t probe_seed) {
  for (Tensor l : leaves) l.zero_grad();
  f().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& l : leaves) {
    if (l.has_grad()) {
      analytic.emplace_back(l.grad().begin(), l.grad().end());
    } else {
      analytic.emplace_back(l.numel(), 0.0);
    }
  }

  GradCheck out;
  Rng rng(probe_seed);
  NoGradGuard guard;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor leaf = leaves[li];
    std::vector<std::size_t> idx(leaf.numel());
    std::iota(idx.begin(), idx.end(), 0);
    if (per_leaf > 0 && per_leaf < idx.size()) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(per_leaf);
    }
    for (auto i : idx) {
      double& x = leaf.mutable_data()[i];
      const double saved = x;
      x = saved + h;
      const double up = f().item();
      x = saved - h;
      const double down = f().item();
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      out.max_rel_error = std::max(out.max_rel_error, rel_error(analytic[li][i], numeric));
      ++out.entries;
    }
  }
  return out;
}

Tensor random_tensor(const Shape& shape, Rng& rng, double lo, double hi, bool requires_grad) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  Tensor t = Tensor::from_vector(shape, std::move(v));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor random_projection(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w = random_tensor(y.shape(), rng, -1.0, 1.0, false);
  return sum(mul(y, w));
}

}  // namespace affect::testing
