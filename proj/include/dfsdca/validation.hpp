#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dfsdca/diagnostics.hpp"

namespace dfsdca {

/// Outcome of one named check. `worst` is compared against `threshold` with
/// `comparison` ("<=" or ">=").
struct CheckResult {
  std::string suite;
  std::string name;
  std::size_t trials = 0;
  double worst = 0.0;
  double threshold = 0.0;
  std::string comparison = "<=";
  bool pass = false;
  std::string error;
};

struct ValidationReport {
  std::vector<CheckResult> checks;

  bool pass() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
  }
};

struct ValidationOptions {
  std::uint64_t seed = 1;
  std::size_t trials = 100;
  /// Forces theta in the lemma1 suite; values above min_i p_i are rejected by step().
  std::optional<double> theta_override;
};

inline const std::vector<std::string>& validation_suites() {
  static const std::vector<std::string> names{"eso", "lemma1", "lemma2", "contraction", "gradcheck", "fixedpoint"};
  return names;
}

namespace testbed {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}
inline double gaussian(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

/// Sparse Gaussian data with every example non-empty.
inline Dataset random_dataset(Rng& rng, std::size_t n, std::size_t d, double density) {
  std::vector<SparseExample> ex(n);
  std::vector<double> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) {
      if (uniform(rng, 0.0, 1.0) < density) {
        ex[i].indices.push_back(j);
        ex[i].values.push_back(gaussian(rng));
      }
    }
    if (ex[i].indices.empty()) {
      ex[i].indices.push_back(static_cast<std::uint32_t>(uniform_index(rng, 0, d - 1)));
      ex[i].values.push_back(gaussian(rng));
    }
    labels[i] = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
  }
  return {std::move(ex), std::move(labels), d};
}

/// Small problem (n <= 6) with a convex loss or a non-convex quadratic family.
inline ProblemSpec random_small_problem(Rng& rng, LossKind kind) {
  const std::size_t n = uniform_index(rng, 2, 6);
  const double lambda = std::exp(uniform(rng, std::log(0.05), std::log(2.0)));
  if (kind == LossKind::quadratic_family) {
    const std::size_t d = uniform_index(rng, 1, 3);
    auto inst = build_nonconvex_instance(n, d, rng());
    return make_problem(std::move(inst.data), std::move(inst.loss), lambda);
  }
  const std::size_t d = uniform_index(rng, 1, 4);
  auto data = random_dataset(rng, n, d, 0.6);
  if (kind == LossKind::logistic) {
    auto loss = LossSpec::logistic(data.labels());
    return make_problem(std::move(data), std::move(loss), lambda);
  }
  std::vector<double> y(n);
  for (double& x : y) x = gaussian(rng);
  auto loss = LossSpec::squared(y);
  return make_problem(std::move(data), std::move(loss), lambda);
}

/// One of the enumerable built-in schemes, chosen at random.
inline SamplingScheme random_enumerable_scheme(Rng& rng, const Dataset& data) {
  const auto sq = data.squared_norms();
  const std::size_t n = data.n();
  switch (uniform_index(rng, 0, 3)) {
    case 0: return serial_uniform(sq);
    case 1: {
      std::vector<double> p(n);
      for (double& x : p) x = uniform(rng, 0.2, 1.0);
      double total = 0.0;
      for (double x : p) total += x;
      for (double& x : p) x /= total;
      return serial_weighted(p, sq);
    }
    case 2: return tau_nice(sq, uniform_index(rng, 1, n));
    default: {
      const auto part = naive_chunks(data.nnz());
      return chunked_sampling(part, sq, uniform_index(rng, 1, part.k()));
    }
  }
}

/// Random point (w, alpha) satisfying w = (1/(lambda n)) sum_i A_i alpha_i.
inline SolverState random_state(Rng& rng, const ProblemSpec& prob, const ReferenceSolution& ref, double spread = 1.0) {
  std::vector<double> alpha(prob.n());
  for (std::size_t i = 0; i < prob.n(); ++i) alpha[i] = ref.alpha[i] + spread * gaussian(rng);
  return init_state(prob, std::move(alpha));
}

inline LossKind random_kind(Rng& rng, bool allow_nonconvex) {
  const std::size_t pick = uniform_index(rng, 0, allow_nonconvex ? 2 : 1);
  return pick == 0 ? LossKind::logistic : pick == 1 ? LossKind::squared : LossKind::quadratic_family;
}

}  // namespace testbed

namespace detail {

inline CheckResult finish_check(std::string suite, std::string name, std::size_t trials, double worst,
                                double threshold, bool at_most) {
  CheckResult c;
  c.suite = std::move(suite);
  c.name = std::move(name);
  c.trials = trials;
  c.worst = worst;
  c.threshold = threshold;
  c.comparison = at_most ? "<=" : ">=";
  c.pass = at_most ? worst <= threshold : worst >= threshold;
  return c;
}

inline CheckResult failed_check(std::string suite, std::string name, const std::exception& e) {
  CheckResult c;
  c.suite = std::move(suite);
  c.name = std::move(name);
  c.pass = false;
  c.error = e.what();
  return c;
}

}  // namespace detail

/// Exact dual-distance identity; primal-distance inequality.
inline std::vector<CheckResult> validate_lemma1(const ValidationOptions& opt) {
  testbed::Rng rng(opt.seed ^ 0x1e33a1ULL);
  double worst_c = 0.0, worst_b = std::numeric_limits<double>::infinity();
  try {
    for (std::size_t trial = 0; trial < opt.trials; ++trial) {
      const auto prob = testbed::random_small_problem(rng, testbed::random_kind(rng, true));
      const auto ref = reference_solution(prob);
      const auto scheme = testbed::random_enumerable_scheme(rng, prob.data);
      const auto state = testbed::random_state(rng, prob, ref);
      const double theta = opt.theta_override.value_or(scheme.min_probability() * testbed::uniform(rng, 0.05, 1.0));
      worst_c = std::max(worst_c, verify_lemma1_C(prob, state, theta, scheme, ref));
      worst_b = std::min(worst_b, verify_lemma1_B(prob, state, theta, scheme, ref));
    }
  } catch (const std::exception& e) {
    return {detail::failed_check("lemma1", "dual_distance_identity", e),
            detail::failed_check("lemma1", "primal_distance_bound", e)};
  }
  return {detail::finish_check("lemma1", "dual_distance_identity", opt.trials, worst_c, 1e-10, true),
          detail::finish_check("lemma1", "primal_distance_bound", opt.trials, worst_b, -1e-10, false)};
}

/// Gradient-gap inequality on convex losses; tightness on squared loss.
inline std::vector<CheckResult> validate_lemma2(const ValidationOptions& opt) {
  testbed::Rng rng(opt.seed ^ 0x1e33a2ULL);
  double worst_logistic = std::numeric_limits<double>::infinity();
  double worst_squared = 0.0;
  try {
    for (std::size_t trial = 0; trial < opt.trials; ++trial) {
      for (LossKind kind : {LossKind::logistic, LossKind::squared}) {
        const auto prob = testbed::random_small_problem(rng, kind);
        const auto ref = reference_solution(prob);
        std::vector<double> w(prob.dim());
        const double spread = std::exp(testbed::uniform(rng, std::log(0.01), std::log(10.0)));
        for (std::size_t j = 0; j < w.size(); ++j) w[j] = ref.w[j] + spread * testbed::gaussian(rng);
        const double slack = verify_lemma2(prob, w, ref);
        if (kind == LossKind::logistic)
          worst_logistic = std::min(worst_logistic, slack);
        else
          worst_squared = std::max(worst_squared, std::abs(slack));
      }
    }
  } catch (const std::exception& e) {
    return {detail::failed_check("lemma2", "gradient_gap_bound", e), detail::failed_check("lemma2", "quadratic_tight", e)};
  }
  return {detail::finish_check("lemma2", "gradient_gap_bound", opt.trials, worst_logistic, -1e-10, false),
          detail::finish_check("lemma2", "quadratic_tight", opt.trials, worst_squared, 1e-10, true)};
}

/// One-step expected decrease E[X^(t)] <= (1 - theta) X^(t-1) at the largest
/// theta allowed by each theorem. Reports max of E[X^(t)] - (1 - theta) X^(t-1).
inline std::vector<CheckResult> validate_contraction(const ValidationOptions& opt) {
  testbed::Rng rng(opt.seed ^ 0xc047ULL);
  double worst_e = -std::numeric_limits<double>::infinity();
  double worst_d = -std::numeric_limits<double>::infinity();
  try {
    for (std::size_t trial = 0; trial < opt.trials; ++trial) {
      {
        const auto prob = testbed::random_small_problem(rng, testbed::random_kind(rng, false));
        const auto ref = reference_solution(prob);
        const auto scheme = testbed::random_enumerable_scheme(rng, prob.data);
        const auto state = testbed::random_state(rng, prob, ref);
        const double theta = theta_convex(scheme.probabilities(), scheme.eso(), prob.smoothness.l, prob.lambda);
        const auto ex = expected_potentials(prob, state, theta, scheme, ref);
        worst_e = std::max(worst_e, ex.E_after - (1.0 - theta) * ex.E_before);
      }
      {
        const auto prob = testbed::random_small_problem(rng, testbed::random_kind(rng, true));
        const auto ref = reference_solution(prob);
        const auto scheme = testbed::random_enumerable_scheme(rng, prob.data);
        const auto state = testbed::random_state(rng, prob, ref);
        const double theta = theta_nonconvex(scheme.probabilities(), scheme.eso(), prob.smoothness.L_per, prob.lambda);
        const auto ex = expected_potentials(prob, state, theta, scheme, ref);
        worst_d = std::max(worst_d, ex.D_after - (1.0 - theta) * ex.D_before);
      }
    }
  } catch (const std::exception& e) {
    return {detail::failed_check("contraction", "convex_E", e), detail::failed_check("contraction", "nonconvex_D", e)};
  }
  return {detail::finish_check("contraction", "convex_E", opt.trials, worst_e, 1e-10, true),
          detail::finish_check("contraction", "nonconvex_D", opt.trials, worst_d, 1e-10, true)};
}

/// ESO inequality for every built-in scheme on random data (ratio <= 1 + 3 se),
/// and detection of a deliberately undersized v.
inline std::vector<CheckResult> validate_eso_suite(const ValidationOptions& opt) {
  testbed::Rng rng(opt.seed ^ 0xe50ULL);
  const std::size_t datasets = std::max<std::size_t>(1, opt.trials / 10);
  double worst_excess = -std::numeric_limits<double>::infinity();
  double counter_ratio = 0.0;
  try {
    for (std::size_t k = 0; k < datasets; ++k) {
      const auto data = testbed::random_dataset(rng, 30, 8, 0.3);
      const auto sq = data.squared_norms();
      std::vector<double> l(data.n(), 0.25);
      const auto part = naive_chunks(data.nnz());
      std::vector<SamplingScheme> schemes{
          serial_uniform(sq),
          serial_weighted(importance_probabilities(l, sq, 1.0 / 30.0), sq),
          random_c_sampling(sq, 4.0, rng()),
          tau_nice(sq, 2),
          tau_nice(sq, 5),
          chunked_sampling(part, sq, std::min<std::size_t>(2, part.k())),
          chunked_sampling(part, sq, std::min<std::size_t>(5, part.k())),
      };
      for (const auto& s : schemes) {
        const auto chk = validate_eso(s, data, 10, rng());
        worst_excess = std::max(worst_excess, chk.max_ratio - 1.0 - 3.0 * chk.std_error);
      }
    }
    // Nearly collinear examples and v_i = ||A_i||^2 / tau: the cross terms are
    // not covered, so the ratio must exceed 1.
    std::vector<SparseExample> ex(8);
    for (std::size_t i = 0; i < ex.size(); ++i) {
      ex[i].indices = {0, 1};
      ex[i].values = {1.0, 0.05 * (static_cast<double>(i) + 1.0)};
    }
    const Dataset corr(std::move(ex), std::vector<double>(8, 1.0), 2);
    const std::size_t tau = 3;
    auto bad = tau_nice(corr.squared_norms(), tau);
    std::vector<double> v(corr.n());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = corr.squared_norms()[i] / static_cast<double>(tau);
    counter_ratio = validate_eso(bad.with_eso(v), corr, 10, rng()).max_ratio;
  } catch (const std::exception& e) {
    return {detail::failed_check("eso", "builtin_schemes", e), detail::failed_check("eso", "undersized_v_detected", e)};
  }
  return {detail::finish_check("eso", "builtin_schemes", datasets, worst_excess, 1e-12, true),
          detail::finish_check("eso", "undersized_v_detected", 1, counter_ratio, 1.0, false)};
}

/// Central finite differences against loss derivatives and grad P.
inline std::vector<CheckResult> validate_gradcheck(const ValidationOptions& opt) {
  testbed::Rng rng(opt.seed ^ 0x9cadULL);
  double worst_loss = 0.0, worst_primal = 0.0;
  constexpr double h = 1e-6;
  try {
    for (std::size_t trial = 0; trial < opt.trials; ++trial) {
      for (LossKind kind : {LossKind::logistic, LossKind::squared, LossKind::quadratic_family}) {
        LossParams p;
        p.label = kind == LossKind::logistic ? (testbed::uniform(rng, 0, 1) < 0.5 ? -1.0 : 1.0) : testbed::gaussian(rng);
        p.curvature = testbed::uniform(rng, -3.0, 3.0);
        p.offset = testbed::gaussian(rng);
        const double x = 5.0 * testbed::gaussian(rng);
        const double g = loss_gradient(kind, p, x);
        const double fd = (loss_value(kind, p, x + h) - loss_value(kind, p, x - h)) / (2.0 * h);
        worst_loss = std::max(worst_loss, std::abs(g - fd) / (1.0 + std::abs(g)));
      }
      const auto prob = testbed::random_small_problem(rng, testbed::random_kind(rng, true));
      std::vector<double> w(prob.dim());
      for (double& x : w) x = testbed::gaussian(rng);
      const auto grad = primal_gradient(prob, w);
      for (std::size_t j = 0; j < w.size(); ++j) {
        auto wp = w, wm = w;
        wp[j] += h;
        wm[j] -= h;
        const double fd = (primal_value(prob, wp) - primal_value(prob, wm)) / (2.0 * h);
        worst_primal = std::max(worst_primal, std::abs(grad[j] - fd) / (1.0 + std::abs(grad[j])));
      }
    }
  } catch (const std::exception& e) {
    return {detail::failed_check("gradcheck", "loss_derivatives", e), detail::failed_check("gradcheck", "primal_gradient", e)};
  }
  return {detail::finish_check("gradcheck", "loss_derivatives", opt.trials, worst_loss, 1e-5, true),
          detail::finish_check("gradcheck", "primal_gradient", opt.trials, worst_primal, 1e-5, true)};
}

/// (w*, alpha*) is left exactly unchanged by a step over any outcome.
inline std::vector<CheckResult> validate_fixedpoint(const ValidationOptions& opt) {
  testbed::Rng rng(opt.seed ^ 0xf1f0ULL);
  double worst = 0.0;
  try {
    for (std::size_t trial = 0; trial < opt.trials; ++trial) {
      const auto prob = testbed::random_small_problem(rng, testbed::random_kind(rng, true));
      const auto ref = reference_solution(prob);
      const auto scheme = testbed::random_enumerable_scheme(rng, prob.data);
      const double theta = scheme.min_probability() * testbed::uniform(rng, 0.05, 1.0);
      const auto start = reference_state(ref);
      for (const auto& atom : detail::require_atoms(scheme)) {
        auto next = start;
        step(prob, next, atom.sample, scheme.probabilities(), theta);
        for (std::size_t j = 0; j < prob.dim(); ++j) worst = std::max(worst, std::abs(next.w[j] - start.w[j]));
        for (std::size_t i = 0; i < prob.n(); ++i) worst = std::max(worst, std::abs(next.alpha[i] - start.alpha[i]));
      }
    }
  } catch (const std::exception& e) {
    return {detail::failed_check("fixedpoint", "optimum_invariant", e)};
  }
  return {detail::finish_check("fixedpoint", "optimum_invariant", opt.trials, worst, 0.0, true)};
}

/// Runs the named suites (see validation_suites()). Unknown names throw.
inline ValidationReport run_validation(std::span<const std::string> suites, const ValidationOptions& opt = {}) {
  ValidationReport rep;
  for (const auto& s : suites) {
    std::vector<CheckResult> checks;
    if (s == "eso") checks = validate_eso_suite(opt);
    else if (s == "lemma1") checks = validate_lemma1(opt);
    else if (s == "lemma2") checks = validate_lemma2(opt);
    else if (s == "contraction") checks = validate_contraction(opt);
    else if (s == "gradcheck") checks = validate_gradcheck(opt);
    else if (s == "fixedpoint") checks = validate_fixedpoint(opt);
    else throw std::invalid_argument("unknown validation suite '" + s + "'");
    rep.checks.insert(rep.checks.end(), checks.begin(), checks.end());
  }
  return rep;
}

}  // namespace dfsdca
