#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dfsdca/dataset.hpp"
#include "dfsdca/losses.hpp"
#include "dfsdca/sampling.hpp"

namespace dfsdca {

/// min_w (1/n) sum_i phi_i(A_i^T w) + (lambda/2) ||w||^2
struct ProblemSpec {
  Dataset data;
  LossSpec loss;
  double lambda = 0.0;
  SmoothnessConstants smoothness;

  std::size_t n() const noexcept { return data.n(); }
  std::size_t dim() const noexcept { return data.dim(); }
};

inline ProblemSpec make_problem(Dataset data, LossSpec loss, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (loss.size() != data.n()) throw std::invalid_argument("loss count does not match dataset size");
  auto smooth = smoothness_constants(loss, data);
  return {std::move(data), std::move(loss), lambda, std::move(smooth)};
}

struct SolverState {
  std::vector<double> w;
  std::vector<double> alpha;
  std::uint64_t t = 0;

  friend bool operator==(const SolverState&, const SolverState&) = default;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) acc += (a[j] - b[j]) * (a[j] - b[j]);
  return acc;
}

inline double squared_norm(std::span<const double> a) {
  double acc = 0.0;
  for (double x : a) acc += x * x;
  return acc;
}

inline double primal_value(const ProblemSpec& prob, std::span<const double> w) {
  double loss = 0.0;
  for (std::size_t i = 0; i < prob.n(); ++i) loss += prob.loss.value(i, prob.data.example(i).dot(w));
  return loss / static_cast<double>(prob.n()) + 0.5 * prob.lambda * squared_norm(w);
}

/// (1/n) sum_i A_i phi_i'(A_i^T w) + lambda w
inline std::vector<double> primal_gradient(const ProblemSpec& prob, std::span<const double> w) {
  std::vector<double> grad(prob.dim(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(prob.n());
  for (std::size_t i = 0; i < prob.n(); ++i) {
    const auto& ex = prob.data.example(i);
    ex.add_to(inv_n * prob.loss.gradient(i, ex.dot(w)), grad);
  }
  for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += prob.lambda * w[j];
  return grad;
}

/// (1/(lambda n)) sum_i A_i alpha_i
inline std::vector<double> primal_from_dual(const ProblemSpec& prob, std::span<const double> alpha) {
  std::vector<double> w(prob.dim(), 0.0);
  const double scale = 1.0 / (prob.lambda * static_cast<double>(prob.n()));
  for (std::size_t i = 0; i < prob.n(); ++i) prob.data.example(i).add_to(scale * alpha[i], w);
  return w;
}

/// || w - (1/(lambda n)) sum_i A_i alpha_i ||
inline double relation_residual(const ProblemSpec& prob, const SolverState& state) {
  const auto w_alpha = primal_from_dual(prob, state.alpha);
  return std::sqrt(squared_distance(state.w, w_alpha));
}

inline SolverState init_state(const ProblemSpec& prob, std::optional<std::vector<double>> alpha0 = std::nullopt) {
  SolverState s;
  if (alpha0) {
    if (alpha0->size() != prob.n()) throw std::invalid_argument("initial dual vector has wrong length");
    s.alpha = std::move(*alpha0);
  } else {
    s.alpha.assign(prob.n(), 0.0);
  }
  s.w = primal_from_dual(prob, s.alpha);
  return s;
}

/// Largest theta allowed for convex losses: min_i p_i n lambda / (l_i v_i + n lambda).
inline double theta_convex(std::span<const double> p, std::span<const double> v, std::span<const double> l,
                           double lambda) {
  const double n_lambda = static_cast<double>(p.size()) * lambda;
  double theta = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) theta = std::min(theta, p[i] * n_lambda / (l[i] * v[i] + n_lambda));
  return theta;
}

/// Largest theta allowed when only the average loss is convex:
/// min_i p_i n lambda^2 / (L_i^2 v_i + n lambda^2).
inline double theta_nonconvex(std::span<const double> p, std::span<const double> v, std::span<const double> L_per,
                              double lambda) {
  const double n_lambda2 = static_cast<double>(p.size()) * lambda * lambda;
  double theta = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i)
    theta = std::min(theta, p[i] * n_lambda2 / (L_per[i] * L_per[i] * v[i] + n_lambda2));
  return theta;
}

/// Iterations sufficient for expected suboptimality eps when theta is at its
/// bound: (1/theta) log((L + lambda) X0 / (lambda eps)).
inline double iteration_bound(double theta, double L, double lambda, double potential0, double eps) {
  return std::log((L + lambda) * potential0 / (lambda * eps)) / theta;
}

/// Raised when an update would leave the convex-combination regime theta/p_i <= 1.
class StepPreconditionError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised by run() when the primal value blows up.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::uint64_t t, double primal)
      : std::runtime_error("divergence at iteration " + std::to_string(t) + ": P(w) = " + std::to_string(primal) +
                           " (theta too large for the theory, or the average loss is not convex)"),
        t_(t),
        primal_(primal) {}
  std::uint64_t iteration() const noexcept { return t_; }
  double primal() const noexcept { return primal_; }

 private:
  std::uint64_t t_;
  double primal_;
};

/// Scratch reused across steps.
struct StepWorkspace {
  std::vector<double> z;
};

/// One dfSDCA iteration on the subset `sample`. Every gradient is evaluated
/// at the incoming w before anything is written:
///   z_i = phi_i'(A_i^T w) + alpha_i
///   alpha_i -= (theta / p_i) z_i
///   w -= sum_i theta / (n lambda p_i) A_i z_i
inline void step(const ProblemSpec& prob, SolverState& state, const Sample& sample, std::span<const double> p,
                 double theta, StepWorkspace& ws) {
  for (std::size_t i : sample.indices) {
    if (i >= prob.n()) throw std::out_of_range("sample index out of range");
    if (theta > p[i])
      throw StepPreconditionError("theta = " + std::to_string(theta) + " exceeds p_" + std::to_string(i) + " = " +
                                  std::to_string(p[i]) + "; the dual update would not be a convex combination");
  }
  ws.z.resize(sample.size());
  for (std::size_t r = 0; r < sample.size(); ++r) {
    const std::size_t i = sample.indices[r];
    ws.z[r] = prob.loss.gradient(i, prob.data.example(i).dot(state.w)) + state.alpha[i];
  }
  const double n_lambda = static_cast<double>(prob.n()) * prob.lambda;
  for (std::size_t r = 0; r < sample.size(); ++r) {
    const std::size_t i = sample.indices[r];
    const double ratio = theta / p[i];
    state.alpha[i] -= ratio * ws.z[r];
    prob.data.example(i).add_to(-ratio / n_lambda * ws.z[r], state.w);
  }
  ++state.t;
}

inline void step(const ProblemSpec& prob, SolverState& state, const Sample& sample, std::span<const double> p,
                 double theta) {
  StepWorkspace ws;
  step(prob, state, sample, p, theta, ws);
}

enum class ThetaMode { auto_convex, auto_nonconvex, explicit_value };

struct SolverConfig {
  ThetaMode theta_mode = ThetaMode::auto_convex;
  double theta = 0.0;  // used with explicit_value
  double epochs = 10.0;
  std::uint64_t seed = 0;
  std::size_t resync_period = 0;  // 0: every n iterations
  std::size_t trace_period = 0;   // 0: once per epoch-equivalent
  std::optional<std::vector<double>> initial_alpha;
};

inline double resolve_theta(const ProblemSpec& prob, const SamplingScheme& scheme, const SolverConfig& config) {
  const auto p = scheme.probabilities();
  switch (config.theta_mode) {
    case ThetaMode::auto_convex: return theta_convex(p, scheme.eso(), prob.smoothness.l, prob.lambda);
    case ThetaMode::auto_nonconvex: return theta_nonconvex(p, scheme.eso(), prob.smoothness.L_per, prob.lambda);
    case ThetaMode::explicit_value: {
      const double min_p = scheme.min_probability();
      if (!(config.theta > 0.0 && config.theta <= min_p))
        throw std::invalid_argument("theta = " + std::to_string(config.theta) + " must lie in (0, min_i p_i] = (0, " +
                                    std::to_string(min_p) + "]");
      return config.theta;
    }
  }
  throw std::invalid_argument("unknown theta mode");
}

struct TraceRecord {
  std::uint64_t t = 0;
  double epoch = 0.0;
  double primal = 0.0;
  double residual = 0.0;  // relation residual before any resync at this t
  std::optional<double> subopt, B, D, E;
};

struct Trace {
  double theta = 0.0;
  std::vector<TraceRecord> records;
};

/// Fills the optional fields of a record; see diagnostics.hpp.
using TraceHook = std::function<void(const SolverState&, TraceRecord&)>;

struct RunResult {
  SolverState state;
  Trace trace;
  std::uint64_t iterations = 0;
};

/// Runs dfSDCA for `epochs` data passes (t E|S| / n). w is recomputed from
/// alpha every resync_period iterations; trace records are taken at t = 0,
/// every trace_period iterations and at the end.
inline RunResult run(const ProblemSpec& prob, const SamplingScheme& scheme, const SolverConfig& config,
                     const TraceHook& hook = {}) {
  if (scheme.n() != prob.n()) throw std::invalid_argument("sampling size does not match the problem");
  if (!(config.epochs > 0.0)) throw std::invalid_argument("epochs must be positive");
  const double theta = resolve_theta(prob, scheme, config);
  const auto p = scheme.probabilities();
  const double batch = scheme.expected_size();
  const double n = static_cast<double>(prob.n());
  const auto iterations = static_cast<std::uint64_t>(std::ceil(config.epochs * n / batch - 1e-9));
  const std::size_t resync = config.resync_period ? config.resync_period : prob.n();
  const std::size_t trace_every =
      config.trace_period ? config.trace_period : std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n / batch)));

  RunResult result;
  result.trace.theta = theta;
  result.iterations = iterations;
  auto& state = result.state;
  state = init_state(prob, config.initial_alpha);

  const double p0 = primal_value(prob, state.w);
  const double limit = 1e6 * std::abs(p0) + 1e6;
  auto record = [&] {
    TraceRecord rec;
    rec.t = state.t;
    rec.epoch = static_cast<double>(state.t) * batch / n;
    rec.primal = primal_value(prob, state.w);
    if (!std::isfinite(rec.primal) || rec.primal > limit) throw DivergenceError(state.t, rec.primal);
    rec.residual = relation_residual(prob, state);
    if (hook) hook(state, rec);
    result.trace.records.push_back(rec);
  };

  Sampler sampler(scheme, config.seed);
  StepWorkspace ws;
  record();
  while (state.t < iterations) {
    step(prob, state, sampler.next(), p, theta, ws);
    const bool last = state.t == iterations;
    if (state.t % trace_every == 0 || last) record();
    if (state.t % resync == 0) state.w = primal_from_dual(prob, state.alpha);
  }
  return result;
}

}  // namespace dfsdca
