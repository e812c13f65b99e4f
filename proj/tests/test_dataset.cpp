#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <random>

#include "dfsdca/dataset.hpp"

using namespace dfsdca;

namespace {

Dataset from_norms(const std::vector<double>& norms) {
  std::vector<SparseExample> ex(norms.size());
  for (std::size_t i = 0; i < norms.size(); ++i) {
    if (norms[i] != 0.0) {
      ex[i].indices = {static_cast<std::uint32_t>(i)};
      ex[i].values = {norms[i]};
    }
  }
  return Dataset(std::move(ex), std::vector<double>(norms.size(), 1.0), norms.size());
}

}  // namespace

TEST(ParseLibsvm, TwoLines) {
  const auto data = parse_libsvm("+1 1:0.5 3:2.0\n-1 2:1.0");
  EXPECT_EQ(data.n(), 2u);
  EXPECT_EQ(data.dim(), 3u);
  EXPECT_EQ(example_nnz(data), (std::vector<std::size_t>{2, 1}));
  EXPECT_EQ(data.labels(), (std::vector<double>{1.0, -1.0}));
  EXPECT_EQ(data.example(0).indices, (std::vector<std::uint32_t>{0, 2}));
  EXPECT_EQ(data.example(0).values, (std::vector<double>{0.5, 2.0}));
}

TEST(ParseLibsvm, EmptyInput) {
  try {
    parse_libsvm("");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("empty"), std::string::npos);
  }
}

TEST(ParseLibsvm, NonIncreasingIndices) {
  try {
    parse_libsvm("+1 3:1 2:1");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_NE(std::string(e.what()).find("non-increasing"), std::string::npos);
  }
}

TEST(ParseLibsvm, DuplicateIndexRejected) { EXPECT_THROW(parse_libsvm("+1 2:1 2:3"), ParseError); }

TEST(ParseLibsvm, NonNumericTokenNamesLine) {
  try {
    parse_libsvm("+1 1:1\n-1 2:abc\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse_libsvm("x 1:1"), ParseError);
  EXPECT_THROW(parse_libsvm("1 0:1"), ParseError);
}

TEST(ParseLibsvm, WhitespaceCommentsAndZeros) {
  const auto data = parse_libsvm("  +1   1:2\t 4:0  # trailing comment\n\n# whole-line comment\n-1 2:1\n");
  EXPECT_EQ(data.n(), 2u);
  EXPECT_EQ(data.dim(), 4u);
  EXPECT_EQ(data.example(0).nnz(), 1u);
}

TEST(ParseLibsvm, DimensionOverride) {
  EXPECT_EQ(parse_libsvm("1 2:1", 10).dim(), 10u);
  EXPECT_THROW(parse_libsvm("1 12:1", 10), ParseError);
}

TEST(ParseLibsvm, W8aShapeWhenAvailable) {
  const char* path = std::getenv("DFSDCA_W8A");
  if (!path) GTEST_SKIP() << "set DFSDCA_W8A to the w8a LIBSVM file";
  const auto data = load_libsvm(path, 300);
  EXPECT_EQ(data.n(), 49749u);
  EXPECT_EQ(data.dim(), 300u);
}

TEST(ParseLibsvm, MissingFile) { EXPECT_THROW(load_libsvm("/nonexistent/file.svm"), std::runtime_error); }

TEST(Normalize, ScalesByMaxNorm) {
  const auto [data, scale] = normalize_max_norm(from_norms({2.0, 1.0}));
  EXPECT_DOUBLE_EQ(scale, 2.0);
  EXPECT_DOUBLE_EQ(data.norms()[0], 1.0);
  EXPECT_DOUBLE_EQ(data.norms()[1], 0.5);
}

TEST(Normalize, UnitNormsUnchanged) {
  const auto original = from_norms({1.0, 1.0});
  const auto [data, scale] = normalize_max_norm(original);
  EXPECT_EQ(scale, 1.0);
  EXPECT_TRUE(data == original);
}

TEST(Normalize, AllZeroRejected) { EXPECT_THROW(normalize_max_norm(from_norms({0.0, 0.0})), std::invalid_argument); }

TEST(Normalize, Idempotent) {
  SyntheticOptions opt;
  opt.n = 50;
  opt.d = 20;
  opt.density = 0.3;
  opt.seed = 3;
  const auto once = normalize_max_norm(gen_synthetic(opt)).first;
  const auto [twice, scale] = normalize_max_norm(once);
  EXPECT_NEAR(scale, 1.0, 1e-12);
  EXPECT_NEAR(*std::max_element(twice.norms().begin(), twice.norms().end()), 1.0, 1e-12);
}

TEST(Normalize, PerExampleMode) {
  const auto [data, scale] = normalize_max_norm(from_norms({2.0, 0.5, 0.0}), NormalizeMode::per_example);
  EXPECT_NEAR(data.norms()[0], 1.0, 1e-15);
  EXPECT_NEAR(data.norms()[1], 1.0, 1e-15);
  EXPECT_EQ(data.norms()[2], 0.0);
  EXPECT_EQ(scale, 2.0);
}

TEST(ExampleStats, ThreeFourFive) {
  SparseExample ex{{0, 2}, {3.0, 4.0}};
  const Dataset data({ex, SparseExample{}}, {1.0, -1.0}, 3);
  EXPECT_EQ(example_norms(data), (std::vector<double>{5.0, 0.0}));
  EXPECT_EQ(example_nnz(data), (std::vector<std::size_t>{2, 0}));
}

TEST(ExampleStats, SquaredNormIsLeftToRightSum) {
  SyntheticOptions opt;
  opt.n = 40;
  opt.d = 30;
  opt.density = 0.5;
  opt.seed = 11;
  const auto data = gen_synthetic(opt);
  for (std::size_t i = 0; i < data.n(); ++i) {
    double acc = 0.0;
    for (double v : data.example(i).values) acc += v * v;
    EXPECT_EQ(data.squared_norms()[i], acc);
  }
}

TEST(DatasetInvariants, RejectsBadExamples) {
  EXPECT_THROW(Dataset({SparseExample{{1, 0}, {1.0, 1.0}}}, {1.0}, 3), std::invalid_argument);
  EXPECT_THROW(Dataset({SparseExample{{5}, {1.0}}}, {1.0}, 3), std::invalid_argument);
  EXPECT_THROW(Dataset({SparseExample{{0}, {0.0}}}, {1.0}, 3), std::invalid_argument);
  EXPECT_THROW(Dataset({SparseExample{{0}, {1.0}}}, {1.0, 2.0}, 3), std::invalid_argument);
  EXPECT_THROW(Dataset({}, {}, 3), std::invalid_argument);
}

TEST(Synthetic, Deterministic) {
  SyntheticOptions opt;
  opt.n = 4;
  opt.d = 3;
  opt.density = 1.0;
  opt.seed = 7;
  EXPECT_TRUE(gen_synthetic(opt) == gen_synthetic(opt));
  opt.seed = 8;
  SyntheticOptions other = opt;
  other.seed = 7;
  EXPECT_FALSE(gen_synthetic(opt) == gen_synthetic(other));
}

TEST(Synthetic, DensityValidated) {
  SyntheticOptions opt;
  opt.density = 0.0;
  EXPECT_THROW(gen_synthetic(opt), std::invalid_argument);
  opt.density = 1.5;
  EXPECT_THROW(gen_synthetic(opt), std::invalid_argument);
}

TEST(Synthetic, NnzNearDensity) {
  SyntheticOptions opt;
  opt.n = 2000;
  opt.d = 100;
  opt.density = 0.2;
  opt.seed = 5;
  const auto data = gen_synthetic(opt);
  const double mean = static_cast<double>(data.total_nnz()) / static_cast<double>(data.n());
  EXPECT_NEAR(mean, 20.0, 1.0);
  for (double y : data.labels()) EXPECT_TRUE(y == 1.0 || y == -1.0);
}

TEST(Synthetic, SkewedNnzHeavyTailed) {
  SyntheticOptions opt;
  opt.n = 1000;
  opt.d = 1000;
  opt.density = 0.01;
  opt.model = LabelModel::skewed_nnz;
  opt.tail_exponent = 2.0;
  opt.seed = 1;
  auto nnz = example_nnz(gen_synthetic(opt));
  std::sort(nnz.begin(), nnz.end());
  const double median = static_cast<double>(nnz[nnz.size() / 2]);
  EXPECT_GE(static_cast<double>(nnz.back()) / median, 5.0);
}

TEST(Synthetic, NoiseModelGivesRealLabels) {
  SyntheticOptions opt;
  opt.n = 100;
  opt.d = 10;
  opt.density = 0.5;
  opt.model = LabelModel::linear_noise;
  const auto data = gen_synthetic(opt);
  EXPECT_TRUE(std::any_of(data.labels().begin(), data.labels().end(),
                          [](double y) { return y != 1.0 && y != -1.0; }));
}

TEST(RoundTrip, SerializeReparses) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    SyntheticOptions opt;
    opt.n = 1 + rng() % 30;
    opt.d = 1 + rng() % 40;
    opt.density = 0.05 + 0.9 * std::uniform_real_distribution<double>()(rng);
    opt.model = trial % 2 ? LabelModel::linear_noise : LabelModel::linear_sign;
    opt.seed = rng();
    const auto data = gen_synthetic(opt);
    const auto back = parse_libsvm(serialize_libsvm(data), data.dim());
    EXPECT_TRUE(back == data);
  }
}

TEST(RoundTrip, FileLoad) {
  const auto data = parse_libsvm("1 1:0.1 2:1e-300\n-1 3:-7.25\n");
  const std::string path = testing::TempDir() + "dfsdca_roundtrip.svm";
  {
    std::ofstream f(path);
    write_libsvm(f, data);
  }
  EXPECT_TRUE(load_libsvm(path) == data);
}
