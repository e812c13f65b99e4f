#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dfsdca/diagnostics.hpp"
#include "dfsdca/validation.hpp"
#include "oracles.hpp"

using namespace dfsdca;

namespace {

ProblemSpec small_problem(LossKind kind, std::size_t n, std::size_t d, double lambda, std::uint64_t seed) {
  if (kind == LossKind::quadratic_family) {
    auto inst = build_nonconvex_instance(n, d, seed);
    return make_problem(std::move(inst.data), std::move(inst.loss), lambda);
  }
  SyntheticOptions opt;
  opt.n = n;
  opt.d = d;
  opt.density = 0.7;
  opt.seed = seed;
  opt.model = kind == LossKind::squared ? LabelModel::linear_noise : LabelModel::linear_sign;
  auto data = gen_synthetic(opt);
  auto loss = kind == LossKind::squared ? LossSpec::squared(data.labels()) : LossSpec::logistic(data.labels());
  return make_problem(std::move(data), std::move(loss), lambda);
}

SolverState perturbed(const ProblemSpec& prob, const ReferenceSolution& ref, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> alpha(ref.alpha);
  for (double& a : alpha) a += g(rng);
  return init_state(prob, alpha);
}

Trace synthetic_trace(double theta, double x0, std::uint64_t period, int rows, double factor, std::uint64_t bump_t) {
  Trace tr;
  tr.theta = theta;
  for (int k = 0; k < rows; ++k) {
    TraceRecord r;
    r.t = static_cast<std::uint64_t>(k) * period;
    const double x = decay_envelope(x0, theta, static_cast<double>(r.t)) * (r.t == bump_t ? factor : 1.0);
    r.E = x;
    r.D = x;
    r.subopt = x;
    tr.records.push_back(r);
  }
  return tr;
}

}  // namespace

TEST(Reference, RidgeClosedForm) {
  const auto prob = oracle::ridge();
  const auto ref = reference_solution(prob);
  EXPECT_NEAR(ref.w[0], oracle::ridge_optimum(), 1e-12);
  EXPECT_NEAR(ref.alpha[0], 0.0, 1e-12);
  EXPECT_NEAR(ref.alpha[1], 2.0, 1e-12);
  const auto gd = reference_solution(prob, {.tol = std::nullopt, .max_iterations = 200000, .method = ReferenceMethod::gradient_descent});
  EXPECT_NEAR(gd.w[0], 1.0, 1e-11);
}

TEST(Reference, OptimalityRelation) {
  for (auto kind : {LossKind::logistic, LossKind::squared, LossKind::quadratic_family}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const auto prob = small_problem(kind, 30, 6, 0.05, seed);
      const auto ref = reference_solution(prob);
      EXPECT_LE(relation_residual(prob, reference_state(ref)), 1e-10);
      EXPECT_LE(ref.grad_norm, default_reference_tolerance(prob));
      EXPECT_NEAR(ref.primal, oracle::primal(prob, ref.w), 1e-12);
    }
  }
}

TEST(Reference, LogisticByGradientDescentAgrees) {
  const auto prob = small_problem(LossKind::logistic, 40, 5, 0.2, 3);
  const auto newton = reference_solution(prob);
  const auto gd = reference_solution(prob, {.tol = std::nullopt, .max_iterations = 200000, .method = ReferenceMethod::gradient_descent});
  for (std::size_t j = 0; j < prob.dim(); ++j) EXPECT_NEAR(newton.w[j], gd.w[j], 1e-10);
}

TEST(Reference, CapReachedCarriesGradNorm) {
  const auto prob = small_problem(LossKind::logistic, 40, 5, 0.01, 4);
  try {
    reference_solution(prob, {.tol = 1e-300, .max_iterations = 3, .method = ReferenceMethod::gradient_descent});
    FAIL();
  } catch (const ReferenceError& e) {
    EXPECT_GT(e.grad_norm(), 0.0);
    EXPECT_NE(std::string(e.what()).find("gradient norm"), std::string::npos);
  }
  EXPECT_THROW(reference_solution(prob, {.tol = std::nullopt, .max_iterations = 10, .method = ReferenceMethod::exact}),
               std::invalid_argument);
}

TEST(Potentials, ZeroAtReference) {
  const auto prob = small_problem(LossKind::logistic, 10, 4, 0.1, 1);
  const auto ref = reference_solution(prob);
  const auto pot = potentials(reference_state(ref), ref, prob.smoothness, prob.lambda);
  EXPECT_EQ(pot.B, 0.0);
  EXPECT_EQ(pot.D, 0.0);
  EXPECT_EQ(pot.E, 0.0);
  for (double c : pot.C) EXPECT_EQ(c, 0.0);
}

TEST(Potentials, SingleExampleSubstitution) {
  auto data = parse_libsvm("0 1:1");
  auto loss = LossSpec::squared(data.labels());
  const auto prob = make_problem(std::move(data), std::move(loss), 1.0);
  ASSERT_EQ(prob.smoothness.l[0], 1.0);
  ASSERT_EQ(prob.smoothness.L_per[0], 1.0);
  ReferenceSolution ref;
  ref.w = {0.0};
  ref.alpha = {0.0};
  const SolverState state{{1.0}, {1.0}, 0};
  const auto pot = potentials(state, ref, prob.smoothness, prob.lambda);
  EXPECT_EQ(pot.B, 1.0);
  EXPECT_EQ(pot.C, (std::vector<double>{1.0}));
  EXPECT_EQ(pot.D, 1.0);
  EXPECT_EQ(pot.E, 1.0);
}

TEST(Envelope, Values) {
  EXPECT_EQ(decay_envelope(4.0, 0.3, 0.0), 4.0);
  EXPECT_NEAR(decay_envelope(4.0, 1.0 / 3.0, 3.0), 4.0 / std::exp(1.0), 1e-15);
}

TEST(SuboptimalityBridge, SmoothnessBound) {
  for (auto kind : {LossKind::logistic, LossKind::squared, LossKind::quadratic_family}) {
    const auto prob = small_problem(kind, 20, 5, 0.1, 7);
    const auto ref = reference_solution(prob);
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto st = perturbed(prob, ref, s);
      const double gap = primal_value(prob, st.w) - ref.primal;
      EXPECT_LE(gap, suboptimality_bound(prob.smoothness.L, prob.lambda, squared_distance(st.w, ref.w)) + 1e-12);
    }
  }
}

TEST(Lemma1C, ZeroAtOptimum) {
  const auto prob = small_problem(LossKind::logistic, 4, 3, 0.2, 2);
  const auto ref = reference_solution(prob);
  const auto scheme = tau_nice(prob.data.squared_norms(), 2);
  EXPECT_LE(verify_lemma1_C(prob, reference_state(ref), 0.1, scheme, ref), 1e-14);
  EXPECT_NEAR(verify_lemma1_B(prob, reference_state(ref), 0.1, scheme, ref), 0.0, 1e-14);
}

TEST(Lemma1C, SerialAgainstHandOracle) {
  const auto prob = small_problem(LossKind::logistic, 3, 2, 0.3, 5);
  const auto ref = reference_solution(prob);
  const auto state = perturbed(prob, ref, 9);
  const double theta = 0.1;
  const auto scheme = serial_uniform(prob.data.squared_norms());
  // Serial uniform: coordinate i moves with probability 1/3 to alpha_i - 3 theta z_i.
  double worst = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double u = -prob.loss.gradient(i, prob.data.example(i).dot(state.w));
    const double z = state.alpha[i] - u;
    const double moved = state.alpha[i] - 3.0 * theta * z;
    const double lhs = (1.0 / 3.0) * (std::pow(state.alpha[i] - ref.alpha[i], 2) - std::pow(moved - ref.alpha[i], 2));
    const double rhs = theta * (std::pow(state.alpha[i] - ref.alpha[i], 2) - std::pow(u - ref.alpha[i], 2) +
                                (1.0 - 3.0 * theta) * z * z);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  EXPECT_LE(worst, 1e-12);
  EXPECT_LE(verify_lemma1_C(prob, state, theta, scheme, ref), 1e-10);
}

TEST(Lemma1C, TauNiceSixAtoms) {
  const auto prob = small_problem(LossKind::squared, 4, 3, 0.5, 6);
  const auto ref = reference_solution(prob);
  const auto scheme = tau_nice(prob.data.squared_norms(), 2);
  ASSERT_EQ(scheme.atoms()->size(), 6u);
  for (std::uint64_t s = 0; s < 10; ++s)
    EXPECT_LE(verify_lemma1_C(prob, perturbed(prob, ref, s), 0.3, scheme, ref), 1e-10);
}

TEST(Lemma1B, SerialCollinearTight) {
  // Serial sampling on one feature with v_i = ||A_i||^2: the ESO is an equality,
  // so the only slack left is from the convexity step.
  auto data = parse_libsvm("1 1:1\n2 1:2\n-1 1:0.5\n");
  auto loss = LossSpec::squared(data.labels());
  const auto prob = make_problem(std::move(data), std::move(loss), 0.5);
  const auto ref = reference_solution(prob);
  const auto scheme = serial_uniform(prob.data.squared_norms());
  const double theta = theta_convex(scheme.probabilities(), scheme.eso(), prob.smoothness.l, prob.lambda);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const double slack = verify_lemma1_B(prob, perturbed(prob, ref, s), theta, scheme, ref);
    EXPECT_GE(slack, -1e-12);
    EXPECT_LE(slack, 1e-10);
  }
}

TEST(Lemma1B, RandomStatesNonNegativeSlack) {
  testbed::Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto prob = testbed::random_small_problem(rng, testbed::random_kind(rng, true));
    const auto ref = reference_solution(prob);
    const auto scheme = testbed::random_enumerable_scheme(rng, prob.data);
    const double theta = scheme.min_probability() * testbed::uniform(rng, 0.05, 1.0);
    EXPECT_GE(verify_lemma1_B(prob, testbed::random_state(rng, prob, ref), theta, scheme, ref), -1e-10);
  }
}

TEST(Lemma2, ZeroAtOptimum) {
  const auto prob = small_problem(LossKind::logistic, 10, 3, 0.1, 1);
  const auto ref = reference_solution(prob);
  EXPECT_NEAR(verify_lemma2(prob, ref.w, ref), 0.0, 1e-12);
}

TEST(Lemma2, RandomLogisticSlack) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto prob = small_problem(LossKind::logistic, 12, 4, 0.05 + 0.01 * static_cast<double>(seed % 10), seed);
    const auto ref = reference_solution(prob);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 2.0);
    std::vector<double> w(prob.dim());
    for (double& x : w) x = ref.w[&x - w.data()] + g(rng);
    EXPECT_GE(verify_lemma2(prob, w, ref), -1e-10);
  }
}

TEST(Lemma2, EqualityForQuadratics) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto data = parse_libsvm("1 1:1\n3 1:1\n-2 1:2\n");
    auto loss = LossSpec::squared(data.labels());
    const auto prob = make_problem(std::move(data), std::move(loss), 0.3);
    const auto ref = reference_solution(prob);
    const std::vector<double> w{static_cast<double>(seed) - 4.5};
    EXPECT_NEAR(verify_lemma2(prob, w, ref), 0.0, 1e-10);
  }
}

TEST(Contraction, ExactExpectationAtTheoreticalTheta) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto prob = small_problem(LossKind::logistic, 5, 3, 0.1, seed);
    const auto ref = reference_solution(prob);
    const auto scheme = tau_nice(prob.data.squared_norms(), 2);
    const double theta = theta_convex(scheme.probabilities(), scheme.eso(), prob.smoothness.l, prob.lambda);
    const auto ex = expected_potentials(prob, perturbed(prob, ref, seed), theta, scheme, ref);
    EXPECT_LE(ex.E_after, (1.0 - theta) * ex.E_before + 1e-12);
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto prob = small_problem(LossKind::quadratic_family, 6, 2, 0.5, seed);
    const auto ref = reference_solution(prob);
    const auto scheme = serial_uniform(prob.data.squared_norms());
    const double theta = theta_nonconvex(scheme.probabilities(), scheme.eso(), prob.smoothness.L_per, prob.lambda);
    const auto ex = expected_potentials(prob, perturbed(prob, ref, seed), theta, scheme, ref);
    EXPECT_LE(ex.D_after, (1.0 - theta) * ex.D_before + 1e-12);
  }
}

TEST(ConvergenceReport, OnTheoryTracePasses) {
  const std::vector<Trace> traces(5, synthetic_trace(0.01, 2.0, 100, 20, 1.0, 0));
  const auto rep = convergence_report(traces, {PotentialKind::E, 0.01, 1.0, 0.1, 1e-3});
  EXPECT_TRUE(rep.all_pass);
  EXPECT_FALSE(rep.first_failure);
  EXPECT_EQ(rep.rows.size(), 20u);
}

TEST(ConvergenceReport, BumpFlaggedAtItsCheckpoint) {
  std::vector<Trace> traces(5, synthetic_trace(0.01, 2.0, 100, 20, 10.0, 700));
  const auto rep = convergence_report(traces, {PotentialKind::D, 0.01, 1.0, 0.1, 1e-3});
  EXPECT_FALSE(rep.all_pass);
  ASSERT_TRUE(rep.first_failure);
  EXPECT_EQ(*rep.first_failure, 700u);
}

TEST(ConvergenceReport, TheoreticalAndEmpiricalPassage) {
  const std::vector<Trace> traces(3, synthetic_trace(0.01, 2.0, 100, 20, 1.0, 0));
  const auto rep = convergence_report(traces, {PotentialKind::E, 0.01, 1.0, 0.1, 0.1});
  EXPECT_NEAR(rep.theoretical_T, iteration_bound(0.01, 1.0, 0.1, 2.0, 0.1), 1e-9);
  ASSERT_TRUE(rep.empirical_first_passage);
  // 2 exp(-0.01 t) <= 0.1 first at t = 300 on a grid of 100
  EXPECT_EQ(*rep.empirical_first_passage, 300u);
}

TEST(ConvergenceReport, RequiresPotentials) {
  Trace tr;
  tr.records.push_back(TraceRecord{});
  const std::vector<Trace> traces(2, tr);
  EXPECT_THROW(convergence_report(traces, {}), std::invalid_argument);
}

TEST(ReferenceHook, FillsTraceColumns) {
  const auto prob = small_problem(LossKind::logistic, 50, 6, 0.02, 8);
  const auto ref = reference_solution(prob);
  const auto scheme = serial_uniform(prob.data.squared_norms());
  SolverConfig cfg;
  cfg.epochs = 5;
  const auto res = run(prob, scheme, cfg, reference_hook(prob, ref));
  for (const auto& r : res.trace.records) {
    ASSERT_TRUE(r.subopt && r.B && r.D && r.E);
    EXPECT_GE(*r.subopt, -1e-12);
  }
  EXPECT_NEAR(*res.trace.records.front().subopt, std::log(2.0) - ref.primal, 1e-15);
}
