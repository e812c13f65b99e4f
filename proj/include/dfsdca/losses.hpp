#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dfsdca/dataset.hpp"

namespace dfsdca {

enum class LossKind { logistic, squared, quadratic_family };

inline std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::logistic: return "logistic";
    case LossKind::squared: return "squared";
    case LossKind::quadratic_family: return "quadfam";
  }
  return "?";
}

/// Per-example loss parameters. `label` is used by logistic and squared;
/// quadratic_family is phi(x) = curvature * x^2 / 2 + offset * x.
struct LossParams {
  double label = 0.0;
  double curvature = 0.0;
  double offset = 0.0;
};

// log(1 + exp(t)) without overflow.
inline double softplus(double t) noexcept { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

// 1 / (1 + exp(t)).
inline double logistic_tail(double t) noexcept {
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(t));
}

inline double loss_value(LossKind kind, const LossParams& p, double x) noexcept {
  switch (kind) {
    case LossKind::logistic: return softplus(-p.label * x);
    case LossKind::squared: return 0.5 * (x - p.label) * (x - p.label);
    case LossKind::quadratic_family: return 0.5 * p.curvature * x * x + p.offset * x;
  }
  return 0.0;
}

inline double loss_gradient(LossKind kind, const LossParams& p, double x) noexcept {
  switch (kind) {
    case LossKind::logistic: return -p.label * logistic_tail(p.label * x);
    case LossKind::squared: return x - p.label;
    case LossKind::quadratic_family: return p.curvature * x + p.offset;
  }
  return 0.0;
}

inline double loss_curvature(LossKind kind, const LossParams& p, double x) noexcept {
  switch (kind) {
    case LossKind::logistic: {
      const double s = logistic_tail(p.label * x);
      return s * (1.0 - s);
    }
    case LossKind::squared: return 1.0;
    case LossKind::quadratic_family: return p.curvature;
  }
  return 0.0;
}

/// Global Lipschitz constant of the loss derivative (1/4 bounds the logistic
/// second derivative for labels in {-1, +1}).
inline double loss_smoothness(LossKind kind, const LossParams& p) noexcept {
  switch (kind) {
    case LossKind::logistic: return 0.25;
    case LossKind::squared: return 1.0;
    case LossKind::quadratic_family: return std::abs(p.curvature);
  }
  return 0.0;
}

/// The losses phi_1..phi_n of one problem.
class LossSpec {
 public:
  LossSpec() = default;
  LossSpec(LossKind kind, std::vector<LossParams> params) : kind_(kind), params_(std::move(params)) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!(loss_smoothness(kind_, params_[i]) > 0.0))
        throw std::invalid_argument("loss " + std::to_string(i) + " has non-positive smoothness constant");
    }
  }

  static LossSpec logistic(std::span<const double> labels) {
    std::vector<LossParams> p(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != 1.0 && labels[i] != -1.0)
        throw std::invalid_argument("logistic loss needs labels in {-1, +1}; example " + std::to_string(i) +
                                    " has " + std::to_string(labels[i]));
      p[i].label = labels[i];
    }
    return {LossKind::logistic, std::move(p)};
  }

  static LossSpec squared(std::span<const double> labels) {
    std::vector<LossParams> p(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) p[i].label = labels[i];
    return {LossKind::squared, std::move(p)};
  }

  static LossSpec quadratic_family(std::span<const double> curvature, std::span<const double> offset) {
    if (curvature.size() != offset.size()) throw std::invalid_argument("curvature/offset length mismatch");
    std::vector<LossParams> p(curvature.size());
    for (std::size_t i = 0; i < curvature.size(); ++i) {
      p[i].curvature = curvature[i];
      p[i].offset = offset[i];
    }
    return {LossKind::quadratic_family, std::move(p)};
  }

  LossKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return params_.size(); }
  const LossParams& params(std::size_t i) const { return params_[i]; }

  double value(std::size_t i, double x) const noexcept { return loss_value(kind_, params_[i], x); }
  double gradient(std::size_t i, double x) const noexcept { return loss_gradient(kind_, params_[i], x); }
  double curvature(std::size_t i, double x) const noexcept { return loss_curvature(kind_, params_[i], x); }
  double smoothness(std::size_t i) const noexcept { return loss_smoothness(kind_, params_[i]); }

  bool individually_convex() const noexcept {
    if (kind_ != LossKind::quadratic_family) return true;
    return std::all_of(params_.begin(), params_.end(), [](const LossParams& p) { return p.curvature >= 0.0; });
  }

 private:
  LossKind kind_ = LossKind::logistic;
  std::vector<LossParams> params_;
};

struct SmoothnessConstants {
  std::vector<double> l;      // smoothness of phi_i in its scalar argument
  std::vector<double> L_per;  // smoothness of w -> phi_i(A_i^T w)
  double L = 0.0;             // max_i L_per[i]
};

/// l_i from the loss; L_i from the bound L_i <= l_i ||A_i||.
inline SmoothnessConstants smoothness_constants(const LossSpec& loss, const Dataset& data) {
  if (loss.size() != data.n()) throw std::invalid_argument("loss count does not match dataset size");
  SmoothnessConstants out;
  out.l.resize(data.n());
  out.L_per.resize(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    out.l[i] = loss.smoothness(i);
    out.L_per[i] = out.l[i] * data.norms()[i];
  }
  out.L = *std::max_element(out.L_per.begin(), out.L_per.end());
  return out;
}

/// Dense d x d row-major matrix (1/n) sum_i c_i A_i A_i^T, the Hessian of
/// w -> (1/n) sum_i phi_i(A_i^T w) for a quadratic family.
inline std::vector<double> average_curvature_matrix(const Dataset& data, const LossSpec& loss) {
  if (loss.kind() != LossKind::quadratic_family)
    throw std::invalid_argument("average curvature matrix needs a quadratic-family loss");
  const std::size_t d = data.dim();
  std::vector<double> h(d * d, 0.0);
  const double inv_n = 1.0 / static_cast<double>(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto& ex = data.example(i);
    const double c = loss.params(i).curvature * inv_n;
    for (std::size_t a = 0; a < ex.nnz(); ++a)
      for (std::size_t b = 0; b < ex.nnz(); ++b)
        h[ex.indices[a] * d + ex.indices[b]] += c * ex.values[a] * ex.values[b];
  }
  return h;
}

/// True when (1/n) sum_i c_i A_i A_i^T + tol * I admits a Cholesky factorization,
/// i.e. the composed average loss is convex up to `tol`.
inline bool composed_average_is_convex(const Dataset& data, const LossSpec& loss, double tol = 1e-10) {
  const std::size_t d = data.dim();
  auto h = average_curvature_matrix(data, loss);
  for (std::size_t j = 0; j < d; ++j) h[j * d + j] += tol;
  for (std::size_t j = 0; j < d; ++j) {
    double diag = h[j * d + j];
    for (std::size_t k = 0; k < j; ++k) diag -= h[j * d + k] * h[j * d + k];
    if (!(diag > 0.0)) return false;
    const double root = std::sqrt(diag);
    h[j * d + j] = root;
    for (std::size_t r = j + 1; r < d; ++r) {
      double acc = h[r * d + j];
      for (std::size_t k = 0; k < j; ++k) acc -= h[r * d + k] * h[j * d + k];
      h[r * d + j] = acc / root;
    }
  }
  return true;
}

struct QuadraticInstance {
  Dataset data;
  LossSpec loss;
};

/// Wraps given data and quadratic losses, rejecting layouts whose composed
/// average loss is not convex.
inline QuadraticInstance make_quadratic_instance(Dataset data, std::span<const double> curvature,
                                                 std::span<const double> offset) {
  auto loss = LossSpec::quadratic_family(curvature, offset);
  if (loss.size() != data.n()) throw std::invalid_argument("loss count does not match dataset size");
  if (!composed_average_is_convex(data, loss))
    throw std::invalid_argument("average of the composed quadratic losses is not convex");
  return {std::move(data), std::move(loss)};
}

/// Quadratic losses with some negative curvatures whose composed average is
/// still convex. Examples are scaled copies of an orthonormal basis q_1..q_k
/// (k = min(d, n/2)); example i lies on q_(i mod k), so every direction holds
/// at least two examples. The first example of each direction gets negative
/// curvature and the remaining ones are scaled until the direction's aggregate
/// curvature is at least half the magnitude of the negative part.
inline QuadraticInstance build_nonconvex_instance(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("non-convex instance needs n >= 2");
  if (d == 0) throw std::invalid_argument("non-convex instance needs d >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const std::size_t k = std::max<std::size_t>(1, std::min(d, n / 2));

  // Gram-Schmidt on Gaussian vectors, re-orthogonalized twice.
  std::vector<std::vector<double>> basis;
  while (basis.size() < k) {
    std::vector<double> q(d);
    for (double& x : q) x = normal(rng);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        const double proj = std::inner_product(q.begin(), q.end(), b.begin(), 0.0);
        for (std::size_t j = 0; j < d; ++j) q[j] -= proj * b[j];
      }
    }
    const double nrm = std::sqrt(std::inner_product(q.begin(), q.end(), q.begin(), 0.0));
    if (nrm < 1e-8) continue;
    for (double& x : q) x /= nrm;
    basis.push_back(std::move(q));
  }

  std::vector<double> scale(n), curvature(n), offset(n);
  for (std::size_t i = 0; i < n; ++i) {
    scale[i] = 0.5 + 0.5 * unif(rng);
    offset[i] = normal(rng);
    const bool first_on_direction = i < k;
    curvature[i] = first_on_direction ? -(0.25 + 0.75 * unif(rng)) : 0.5 + 2.5 * unif(rng);
  }
  for (std::size_t dir = 0; dir < k; ++dir) {
    double negative = 0.0, positive = 0.0;
    for (std::size_t i = dir; i < n; i += k) {
      const double w = curvature[i] * scale[i] * scale[i];
      (w < 0.0 ? negative : positive) += std::abs(w);
    }
    const double target = 1.5 * negative;
    if (positive < target) {
      const double boost = target / positive;
      for (std::size_t i = dir; i < n; i += k)
        if (curvature[i] > 0.0) curvature[i] *= boost;
    }
  }

  std::vector<SparseExample> examples(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& q = basis[i % k];
    for (std::uint32_t j = 0; j < d; ++j) {
      const double v = scale[i] * q[j];
      if (v != 0.0) {
        examples[i].indices.push_back(j);
        examples[i].values.push_back(v);
      }
    }
  }
  Dataset data(std::move(examples), offset, d);
  auto instance = make_quadratic_instance(std::move(data), curvature, offset);
  if (instance.loss.individually_convex()) throw std::logic_error("non-convex instance has no negative curvature");
  return instance;
}

}  // namespace dfsdca
