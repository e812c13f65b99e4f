#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dfsdca/solver.hpp"

namespace dfsdca {

/// High-accuracy minimizer of P with the matching dual point
/// alpha*_i = -phi_i'(A_i^T w*).
struct ReferenceSolution {
  std::vector<double> w;
  std::vector<double> alpha;
  double primal = 0.0;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
};

class ReferenceError : public std::runtime_error {
 public:
  ReferenceError(const std::string& what, double grad_norm) : std::runtime_error(what), grad_norm_(grad_norm) {}
  double grad_norm() const noexcept { return grad_norm_; }

 private:
  double grad_norm_;
};

enum class ReferenceMethod {
  automatic,         // exact solve for quadratic losses with small d, gradient descent otherwise
  gradient_descent,
  exact,             // quadratic losses only
};

struct ReferenceOptions {
  std::optional<double> tol;  // default 1e-12 (1 + |P(0)|)
  std::size_t max_iterations = 200000;
  ReferenceMethod method = ReferenceMethod::automatic;
};

namespace detail {

inline std::vector<double> dual_at(const ProblemSpec& prob, std::span<const double> w) {
  std::vector<double> alpha(prob.n());
  for (std::size_t i = 0; i < prob.n(); ++i) alpha[i] = -prob.loss.gradient(i, prob.data.example(i).dot(w));
  return alpha;
}

/// Solves H x = b in place for symmetric positive definite row-major H.
inline void cholesky_solve(std::vector<double> h, std::vector<double>& b, std::size_t d) {
  for (std::size_t j = 0; j < d; ++j) {
    double diag = h[j * d + j];
    for (std::size_t k = 0; k < j; ++k) diag -= h[j * d + k] * h[j * d + k];
    if (!(diag > 0.0)) throw std::runtime_error("reference: quadratic system is not positive definite");
    const double root = std::sqrt(diag);
    h[j * d + j] = root;
    for (std::size_t r = j + 1; r < d; ++r) {
      double acc = h[r * d + j];
      for (std::size_t k = 0; k < j; ++k) acc -= h[r * d + k] * h[j * d + k];
      h[r * d + j] = acc / root;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    double acc = b[j];
    for (std::size_t k = 0; k < j; ++k) acc -= h[j * d + k] * b[k];
    b[j] = acc / h[j * d + j];
  }
  for (std::size_t j = d; j-- > 0;) {
    double acc = b[j];
    for (std::size_t k = j + 1; k < d; ++k) acc -= h[k * d + j] * b[k];
    b[j] = acc / h[j * d + j];
  }
}

inline std::string sci(double x) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3) << x;
  return os.str();
}

/// lambda I + (1/n) sum_i phi_i''(A_i^T w) A_i A_i^T as a dense row-major matrix.
inline std::vector<double> hessian_at(const ProblemSpec& prob, std::span<const double> w) {
  const std::size_t d = prob.dim();
  std::vector<double> h(d * d, 0.0);
  const double inv_n = 1.0 / static_cast<double>(prob.n());
  for (std::size_t i = 0; i < prob.n(); ++i) {
    const auto& ex = prob.data.example(i);
    const double c = prob.loss.curvature(i, ex.dot(w)) * inv_n;
    for (std::size_t a = 0; a < ex.nnz(); ++a)
      for (std::size_t b = 0; b < ex.nnz(); ++b) h[ex.indices[a] * d + ex.indices[b]] += c * ex.values[a] * ex.values[b];
  }
  for (std::size_t j = 0; j < d; ++j) h[j * d + j] += prob.lambda;
  return h;
}

}  // namespace detail

inline double default_reference_tolerance(const ProblemSpec& prob) {
  const std::vector<double> zero(prob.dim(), 0.0);
  return 1e-12 * (1.0 + std::abs(primal_value(prob, zero)));
}

/// Deterministic oracle for w*. Quadratic problems are solved through the
/// normal equations (plus two refinement steps). Smaller non-quadratic
/// problems take damped Newton steps; whatever is left uses full gradient
/// descent with Armijo backtracking whose step never drops below 1/L_P,
/// L_P = lambda + (1/n) sum_i l_i ||A_i||^2.
inline ReferenceSolution reference_solution(const ProblemSpec& prob, const ReferenceOptions& opt = {}) {
  const double tol = opt.tol.value_or(default_reference_tolerance(prob));
  const std::size_t d = prob.dim();
  const bool quadratic = prob.loss.kind() != LossKind::logistic;
  bool exact = opt.method == ReferenceMethod::exact ||
               (opt.method == ReferenceMethod::automatic && quadratic && d <= 2000);
  if (exact && !quadratic) throw std::invalid_argument("exact reference solve needs a quadratic loss");
  const bool newton = opt.method == ReferenceMethod::automatic && !exact && d <= 2000;

  ReferenceSolution ref;
  std::vector<double> w(d, 0.0);
  std::vector<double> grad = primal_gradient(prob, w);
  double gnorm = std::sqrt(squared_norm(grad));

  if (exact) {
    const auto h = detail::hessian_at(prob, w);
    for (int pass = 0; pass < 3 && gnorm > 0.0; ++pass) {
      auto delta = grad;
      detail::cholesky_solve(h, delta, d);
      for (std::size_t j = 0; j < d; ++j) w[j] -= delta[j];
      grad = primal_gradient(prob, w);
      gnorm = std::sqrt(squared_norm(grad));
      ++ref.iterations;
    }
  } else {
    if (newton) {
      std::vector<double> trial(d);
      double value = primal_value(prob, w);
      for (int it = 0; it < 200 && gnorm > tol; ++it) {
        auto delta = grad;
        detail::cholesky_solve(detail::hessian_at(prob, w), delta, d);
        ++ref.iterations;
        double step = 1.0;
        for (int k = 0; k < 60; ++k, step *= 0.5) {
          for (std::size_t j = 0; j < d; ++j) trial[j] = w[j] - step * delta[j];
          const double trial_value = primal_value(prob, trial);
          if (trial_value < value || std::sqrt(squared_norm(primal_gradient(prob, trial))) < gnorm) {
            value = trial_value;
            break;
          }
        }
        w = trial;
        grad = primal_gradient(prob, w);
        gnorm = std::sqrt(squared_norm(grad));
      }
    }
    double lp = prob.lambda;
    for (std::size_t i = 0; i < prob.n(); ++i) lp += prob.smoothness.l[i] * prob.data.squared_norms()[i] / static_cast<double>(prob.n());
    const double safe_step = 1.0 / lp;
    double step = safe_step;
    double value = primal_value(prob, w);
    std::vector<double> trial(d);
    while (gnorm > tol && ref.iterations < opt.max_iterations) {
      ++ref.iterations;
      step *= 2.0;
      const double g2 = gnorm * gnorm;
      while (true) {
        for (std::size_t j = 0; j < d; ++j) trial[j] = w[j] - step * grad[j];
        const double trial_value = primal_value(prob, trial);
        if (step <= safe_step || trial_value <= value - 0.5 * step * g2) {
          value = trial_value;
          break;
        }
        step = std::max(0.5 * step, safe_step);
      }
      w.swap(trial);
      grad = primal_gradient(prob, w);
      gnorm = std::sqrt(squared_norm(grad));
    }
  }
  if (!(gnorm <= tol))
    throw ReferenceError("reference solver stopped after " + std::to_string(ref.iterations) +
                             " iterations with gradient norm " + detail::sci(gnorm) + " > tol " + detail::sci(tol),
                         gnorm);
  ref.alpha = detail::dual_at(prob, w);
  ref.primal = primal_value(prob, w);
  ref.grad_norm = gnorm;
  ref.w = std::move(w);
  return ref;
}

/// Reference pair packaged as a solver state.
inline SolverState reference_state(const ReferenceSolution& ref) { return {ref.w, ref.alpha, 0}; }

struct Potentials {
  double B = 0.0;         // ||w - w*||^2
  std::vector<double> C;  // (alpha_i - alpha*_i)^2
  double D = 0.0;         // (lambda/2) B + (lambda/2n) sum C_i / L_i^2
  double E = 0.0;         // (lambda/2) B + (1/2n) sum C_i / l_i
};

inline Potentials potentials(const SolverState& state, const ReferenceSolution& ref, const SmoothnessConstants& sc,
                             double lambda) {
  Potentials out;
  const std::size_t n = state.alpha.size();
  out.B = squared_distance(state.w, ref.w);
  out.C.resize(n);
  double sum_d = 0.0, sum_e = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = state.alpha[i] - ref.alpha[i];
    out.C[i] = diff * diff;
    sum_d += out.C[i] / (sc.L_per[i] * sc.L_per[i]);
    sum_e += out.C[i] / sc.l[i];
  }
  const double nn = static_cast<double>(n);
  out.D = 0.5 * lambda * out.B + lambda / (2.0 * nn) * sum_d;
  out.E = 0.5 * lambda * out.B + sum_e / (2.0 * nn);
  return out;
}

/// Trace hook recording suboptimality and potentials against `ref`.
inline TraceHook reference_hook(const ProblemSpec& prob, const ReferenceSolution& ref) {
  return [&prob, &ref](const SolverState& state, TraceRecord& rec) {
    const auto pot = potentials(state, ref, prob.smoothness, prob.lambda);
    rec.subopt = rec.primal - ref.primal;
    rec.B = pot.B;
    rec.D = pot.D;
    rec.E = pot.E;
  };
}

/// X0 exp(-theta t)
inline double decay_envelope(double x0, double theta, double t) { return x0 * std::exp(-theta * t); }

/// P(w) - P(w*) <= ((L + lambda)/2) ||w - w*||^2
inline double suboptimality_bound(double L, double lambda, double B) { return 0.5 * (L + lambda) * B; }

namespace detail {

inline std::vector<Atom> require_atoms(const SamplingScheme& scheme) {
  auto atoms = scheme.atoms();
  if (!atoms) throw std::invalid_argument("scheme '" + scheme.name() + "' has too many outcomes to enumerate");
  return std::move(*atoms);
}

}  // namespace detail

/// Exact check of the dual-distance evolution
///   E[C_i^(t-1) - C_i^(t)] = theta [ (alpha_i - alpha*_i)^2 - (u_i - alpha*_i)^2 + (1 - theta/p_i) z_i^2 ]
/// with u_i = -phi_i'(A_i^T w), z_i = alpha_i - u_i. The left side is the
/// probability-weighted average over every outcome of one step(). Returns
/// max_i |LHS_i - RHS_i|.
inline double verify_lemma1_C(const ProblemSpec& prob, const SolverState& state, double theta,
                              const SamplingScheme& scheme, const ReferenceSolution& ref) {
  const auto atoms = detail::require_atoms(scheme);
  const auto p = scheme.probabilities();
  const std::size_t n = prob.n();
  std::vector<double> lhs(n, 0.0);
  StepWorkspace ws;
  for (const auto& atom : atoms) {
    SolverState next = state;
    step(prob, next, atom.sample, p, theta, ws);
    for (std::size_t i = 0; i < n; ++i) {
      const double before = (state.alpha[i] - ref.alpha[i]) * (state.alpha[i] - ref.alpha[i]);
      const double after = (next.alpha[i] - ref.alpha[i]) * (next.alpha[i] - ref.alpha[i]);
      lhs[i] += atom.probability * (before - after);
    }
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = -prob.loss.gradient(i, prob.data.example(i).dot(state.w));
    const double z = state.alpha[i] - u;
    const double a = state.alpha[i] - ref.alpha[i];
    const double b = u - ref.alpha[i];
    const double rhs = theta * (a * a - b * b + (1.0 - theta / p[i]) * z * z);
    worst = std::max(worst, std::abs(lhs[i] - rhs));
  }
  return worst;
}

/// Slack of the primal-distance inequality
///   E[B^(t-1) - B^(t)] >= (2 theta / lambda) (w - w*)^T grad P(w) - theta^2/(n^2 lambda^2) sum_i (v_i/p_i) z_i^2,
/// with the expectation taken exactly over all outcomes. Returns LHS - RHS.
inline double verify_lemma1_B(const ProblemSpec& prob, const SolverState& state, double theta,
                              const SamplingScheme& scheme, const ReferenceSolution& ref) {
  const auto atoms = detail::require_atoms(scheme);
  const auto p = scheme.probabilities();
  const auto v = scheme.eso();
  const double b_before = squared_distance(state.w, ref.w);
  double lhs = 0.0;
  StepWorkspace ws;
  for (const auto& atom : atoms) {
    SolverState next = state;
    step(prob, next, atom.sample, p, theta, ws);
    lhs += atom.probability * (b_before - squared_distance(next.w, ref.w));
  }
  const auto grad = primal_gradient(prob, state.w);
  double inner = 0.0;
  for (std::size_t j = 0; j < prob.dim(); ++j) inner += (state.w[j] - ref.w[j]) * grad[j];
  double penalty = 0.0;
  for (std::size_t i = 0; i < prob.n(); ++i) {
    const double z = state.alpha[i] + prob.loss.gradient(i, prob.data.example(i).dot(state.w));
    penalty += v[i] / p[i] * z * z;
  }
  const double nl = static_cast<double>(prob.n()) * prob.lambda;
  const double rhs = 2.0 * theta / prob.lambda * inner - theta * theta / (nl * nl) * penalty;
  return lhs - rhs;
}

/// Slack of
///   (1/n) sum_i (1/l_i) (phi_i'(A_i^T w) - phi_i'(A_i^T w*))^2 <= 2 (P(w) - P(w*) - (lambda/2) ||w - w*||^2).
/// Returns RHS - LHS. Requires convex phi_i.
inline double verify_lemma2(const ProblemSpec& prob, std::span<const double> w, const ReferenceSolution& ref) {
  double lhs = 0.0;
  for (std::size_t i = 0; i < prob.n(); ++i) {
    const auto& ex = prob.data.example(i);
    const double diff = prob.loss.gradient(i, ex.dot(w)) - prob.loss.gradient(i, ex.dot(ref.w));
    lhs += diff * diff / prob.smoothness.l[i];
  }
  lhs /= static_cast<double>(prob.n());
  const double rhs = 2.0 * (primal_value(prob, w) - ref.primal - 0.5 * prob.lambda * squared_distance(w, ref.w));
  return rhs - lhs;
}

struct OneStepExpectation {
  double D_before = 0.0, D_after = 0.0;  // D^(t-1) and E[D^(t)]
  double E_before = 0.0, E_after = 0.0;  // E^(t-1) and E[E^(t)]
};

/// Exact expected potentials after one step from `state`.
inline OneStepExpectation expected_potentials(const ProblemSpec& prob, const SolverState& state, double theta,
                                              const SamplingScheme& scheme, const ReferenceSolution& ref) {
  const auto atoms = detail::require_atoms(scheme);
  const auto p = scheme.probabilities();
  OneStepExpectation out;
  const auto before = potentials(state, ref, prob.smoothness, prob.lambda);
  out.D_before = before.D;
  out.E_before = before.E;
  StepWorkspace ws;
  for (const auto& atom : atoms) {
    SolverState next = state;
    step(prob, next, atom.sample, p, theta, ws);
    const auto after = potentials(next, ref, prob.smoothness, prob.lambda);
    out.D_after += atom.probability * after.D;
    out.E_after += atom.probability * after.E;
  }
  return out;
}

enum class PotentialKind { D, E };

struct ReportOptions {
  PotentialKind potential = PotentialKind::E;
  double theta = 0.0;
  double L = 0.0;
  double lambda = 0.0;
  double eps = 1e-6;  // suboptimality target for first-passage
};

struct ReportRow {
  std::uint64_t t = 0;
  double epoch = 0.0;
  double mean = 0.0;
  double std_error = 0.0;
  double envelope = 0.0;
  bool pass = true;
};

struct ConvergenceReport {
  std::vector<ReportRow> rows;
  bool all_pass = true;
  std::optional<std::uint64_t> first_failure;
  double theoretical_T = 0.0;                        // iterations sufficient for eps
  std::optional<std::uint64_t> empirical_first_passage;  // first t with mean subopt <= eps
};

/// Compares mean potential over seeds with X0 exp(-theta t) at every checkpoint.
/// A checkpoint passes when mean <= envelope (1 + 2 stderr / mean).
inline ConvergenceReport convergence_report(std::span<const Trace> traces, const ReportOptions& opt) {
  if (traces.size() < 2) throw std::invalid_argument("convergence_report needs at least two traces");
  const std::size_t rows = traces.front().records.size();
  for (const auto& tr : traces)
    if (tr.records.size() != rows) throw std::invalid_argument("traces have different checkpoint counts");
  const double s = static_cast<double>(traces.size());
  auto value_of = [&](const TraceRecord& r) {
    const auto& field = opt.potential == PotentialKind::D ? r.D : r.E;
    if (!field) throw std::invalid_argument("trace has no potentials; attach a reference solution");
    return *field;
  };
  ConvergenceReport rep;
  double x0 = 0.0;
  for (std::size_t k = 0; k < rows; ++k) {
    ReportRow row;
    row.t = traces.front().records[k].t;
    row.epoch = traces.front().records[k].epoch;
    double sum = 0.0, sum_sq = 0.0, subopt = 0.0;
    bool have_subopt = true;
    for (const auto& tr : traces) {
      const auto& rec = tr.records[k];
      if (rec.t != row.t) throw std::invalid_argument("traces are not aligned on t");
      const double x = value_of(rec);
      sum += x;
      sum_sq += x * x;
      if (rec.subopt) subopt += *rec.subopt; else have_subopt = false;
    }
    row.mean = sum / s;
    row.std_error = std::sqrt(std::max(0.0, (sum_sq - s * row.mean * row.mean) / (s - 1.0)) / s);
    if (k == 0) x0 = row.mean;
    row.envelope = decay_envelope(x0, opt.theta, static_cast<double>(row.t));
    row.pass = row.mean <= 0.0 || row.mean <= row.envelope * (1.0 + 2.0 * row.std_error / row.mean);
    if (!row.pass && !rep.first_failure) rep.first_failure = row.t;
    rep.all_pass = rep.all_pass && row.pass;
    if (have_subopt && !rep.empirical_first_passage && subopt / s <= opt.eps) rep.empirical_first_passage = row.t;
    rep.rows.push_back(row);
  }
  if (opt.theta > 0.0 && opt.lambda > 0.0 && x0 > 0.0)
    rep.theoretical_T = iteration_bound(opt.theta, opt.L, opt.lambda, x0, opt.eps);
  return rep;
}

}  // namespace dfsdca
