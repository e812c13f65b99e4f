#include <gtest/gtest.h>

#include "dfsdca/io.hpp"
#include "dfsdca/validation.hpp"

using namespace dfsdca;

TEST(Validation, FullSuitePasses) {
  const auto rep = run_validation(validation_suites());
  for (const auto& c : rep.checks) EXPECT_TRUE(c.pass) << c.suite << "/" << c.name << " worst " << c.worst << " " << c.error;
  EXPECT_TRUE(rep.pass());
  EXPECT_EQ(rep.checks.size(), 11u);
}

TEST(Validation, SeedsAreReproducible) {
  ValidationOptions opt;
  opt.trials = 10;
  opt.seed = 4;
  const std::vector<std::string> suites{"lemma1", "contraction"};
  const auto a = run_validation(suites, opt);
  const auto b = run_validation(suites, opt);
  ASSERT_EQ(a.checks.size(), b.checks.size());
  for (std::size_t k = 0; k < a.checks.size(); ++k) EXPECT_EQ(a.checks[k].worst, b.checks[k].worst);
}

TEST(Validation, WrongThetaSurfacesPreconditionError) {
  ValidationOptions opt;
  opt.trials = 5;
  opt.theta_override = 0.9;
  const auto rep = run_validation(std::vector<std::string>{"lemma1"}, opt);
  EXPECT_FALSE(rep.pass());
  ASSERT_FALSE(rep.checks.empty());
  EXPECT_NE(rep.checks.front().error.find("exceeds"), std::string::npos) << rep.checks.front().error;
}

TEST(Validation, UnknownSuiteRejected) {
  EXPECT_THROW(run_validation(std::vector<std::string>{"nope"}), std::invalid_argument);
}

TEST(Validation, JsonReportShape) {
  ValidationOptions opt;
  opt.trials = 3;
  const auto j = io::report_to_json(run_validation(std::vector<std::string>{"gradcheck", "fixedpoint"}, opt));
  EXPECT_TRUE(j.at("pass").get<bool>());
  EXPECT_EQ(j.at("suites").size(), 2u);
  for (const auto& c : j.at("checks")) {
    for (const char* key : {"suite", "name", "trials", "worst", "threshold", "comparison", "pass"})
      EXPECT_TRUE(c.contains(key)) << key;
  }
}
