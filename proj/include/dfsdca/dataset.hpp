#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dfsdca {

/// Raised by the LIBSVM reader. `line()` is 1-based, 0 when the error is not
/// tied to a particular line (e.g. empty input).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// One example A_i stored as sorted (index, value) pairs.
struct SparseExample {
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  std::size_t nnz() const noexcept { return indices.size(); }

  /// Sum of squares accumulated left to right.
  double squared_norm() const noexcept {
    double acc = 0.0;
    for (double v : values) acc += v * v;
    return acc;
  }

  double dot(std::span<const double> w) const noexcept {
    double acc = 0.0;
    for (std::size_t k = 0; k < indices.size(); ++k) acc += values[k] * w[indices[k]];
    return acc;
  }

  /// w += scale * A_i
  void add_to(double scale, std::span<double> w) const noexcept {
    for (std::size_t k = 0; k < indices.size(); ++k) w[indices[k]] += scale * values[k];
  }

  friend bool operator==(const SparseExample&, const SparseExample&) = default;
};

/// Immutable collection of n sparse examples in R^d with labels.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<SparseExample> examples, std::vector<double> labels, std::size_t dim)
      : examples_(std::move(examples)), labels_(std::move(labels)), dim_(dim) {
    if (examples_.empty()) throw std::invalid_argument("dataset must contain at least one example");
    if (labels_.size() != examples_.size())
      throw std::invalid_argument("label count does not match example count");
    squared_norms_.reserve(examples_.size());
    norms_.reserve(examples_.size());
    nnz_.reserve(examples_.size());
    for (std::size_t i = 0; i < examples_.size(); ++i) {
      const auto& ex = examples_[i];
      if (ex.indices.size() != ex.values.size())
        throw std::invalid_argument("example " + std::to_string(i) + ": index/value length mismatch");
      for (std::size_t k = 0; k < ex.indices.size(); ++k) {
        if (ex.indices[k] >= dim_)
          throw std::invalid_argument("example " + std::to_string(i) + ": index out of range");
        if (k > 0 && ex.indices[k] <= ex.indices[k - 1])
          throw std::invalid_argument("example " + std::to_string(i) + ": indices not strictly increasing");
        if (ex.values[k] == 0.0)
          throw std::invalid_argument("example " + std::to_string(i) + ": explicit zero value");
        if (!std::isfinite(ex.values[k]))
          throw std::invalid_argument("example " + std::to_string(i) + ": non-finite value");
      }
      const double sq = ex.squared_norm();
      squared_norms_.push_back(sq);
      norms_.push_back(std::sqrt(sq));
      nnz_.push_back(ex.nnz());
    }
  }

  std::size_t n() const noexcept { return examples_.size(); }
  std::size_t dim() const noexcept { return dim_; }

  const SparseExample& example(std::size_t i) const { return examples_[i]; }
  const std::vector<SparseExample>& examples() const noexcept { return examples_; }
  double label(std::size_t i) const { return labels_[i]; }
  const std::vector<double>& labels() const noexcept { return labels_; }

  std::span<const double> norms() const noexcept { return norms_; }
  std::span<const double> squared_norms() const noexcept { return squared_norms_; }
  std::span<const std::size_t> nnz() const noexcept { return nnz_; }

  std::size_t total_nnz() const noexcept { return std::accumulate(nnz_.begin(), nnz_.end(), std::size_t{0}); }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.dim_ == b.dim_ && a.labels_ == b.labels_ && a.examples_ == b.examples_;
  }

 private:
  std::vector<SparseExample> examples_;
  std::vector<double> labels_;
  std::size_t dim_ = 0;
  std::vector<double> squared_norms_;
  std::vector<double> norms_;
  std::vector<std::size_t> nnz_;
};

inline std::vector<double> example_norms(const Dataset& data) {
  return {data.norms().begin(), data.norms().end()};
}

inline std::vector<std::size_t> example_nnz(const Dataset& data) {
  return {data.nnz().begin(), data.nnz().end()};
}

namespace detail {

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

inline std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && is_space(line[pos])) ++pos;
    const std::size_t start = pos;
    while (pos < line.size() && !is_space(line[pos])) ++pos;
    if (pos > start) out.push_back(line.substr(start, pos - start));
  }
  return out;
}

inline std::optional<double> to_double(std::string_view tok) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  if (tok.empty()) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

inline std::optional<std::uint64_t> to_index(std::string_view tok) {
  if (tok.empty()) return std::nullopt;
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) return std::nullopt;
  return value;
}

inline void write_double(std::ostream& os, double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  os.write(buf, res.ptr - buf);
}

}  // namespace detail

/// Reads LIBSVM / SVMlight text: `label idx:val idx:val ...` with 1-based,
/// strictly increasing indices. Anything after `#` is ignored. Explicit zero
/// values are dropped so the result is canonical. When `dim` is given it must
/// cover every index seen.
inline Dataset parse_libsvm(std::istream& in, std::optional<std::size_t> dim = std::nullopt) {
  std::vector<SparseExample> examples;
  std::vector<double> labels;
  std::size_t max_index = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    const auto tokens = detail::split_tokens(view);
    if (tokens.empty()) continue;

    const auto label = detail::to_double(tokens[0]);
    if (!label) throw ParseError(lineno, "non-numeric label '" + std::string(tokens[0]) + "'");

    SparseExample ex;
    std::uint64_t prev = 0;
    for (std::size_t k = 1; k < tokens.size(); ++k) {
      const auto tok = tokens[k];
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos)
        throw ParseError(lineno, "expected idx:val, got '" + std::string(tok) + "'");
      const auto idx = detail::to_index(tok.substr(0, colon));
      const auto val = detail::to_double(tok.substr(colon + 1));
      if (!idx) throw ParseError(lineno, "non-numeric index in '" + std::string(tok) + "'");
      if (!val) throw ParseError(lineno, "non-numeric value in '" + std::string(tok) + "'");
      if (*idx == 0) throw ParseError(lineno, "indices are 1-based; got 0");
      if (*idx <= prev) throw ParseError(lineno, "non-increasing indices");
      if (*idx > std::numeric_limits<std::uint32_t>::max()) throw ParseError(lineno, "index too large");
      prev = *idx;
      max_index = std::max<std::size_t>(max_index, *idx);
      if (*val == 0.0) continue;
      ex.indices.push_back(static_cast<std::uint32_t>(*idx - 1));
      ex.values.push_back(*val);
    }
    examples.push_back(std::move(ex));
    labels.push_back(*label);
  }
  if (examples.empty()) throw ParseError(0, "empty input");
  std::size_t d = max_index;
  if (dim) {
    if (*dim < max_index)
      throw ParseError(0, "dimension " + std::to_string(*dim) + " smaller than max index " +
                              std::to_string(max_index));
    d = *dim;
  }
  return Dataset(std::move(examples), std::move(labels), std::max<std::size_t>(d, 1));
}

inline Dataset parse_libsvm(std::string_view text, std::optional<std::size_t> dim = std::nullopt) {
  std::istringstream in{std::string(text)};
  return parse_libsvm(in, dim);
}

inline Dataset load_libsvm(const std::string& path, std::optional<std::size_t> dim = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open data file '" + path + "'");
  return parse_libsvm(in, dim);
}

/// Canonical LIBSVM text: single spaces, shortest round-trip doubles, 1-based.
inline void write_libsvm(std::ostream& os, const Dataset& data) {
  for (std::size_t i = 0; i < data.n(); ++i) {
    detail::write_double(os, data.label(i));
    const auto& ex = data.example(i);
    for (std::size_t k = 0; k < ex.nnz(); ++k) {
      os << ' ' << (ex.indices[k] + 1) << ':';
      detail::write_double(os, ex.values[k]);
    }
    os << '\n';
  }
}

inline std::string serialize_libsvm(const Dataset& data) {
  std::ostringstream os;
  write_libsvm(os, data);
  return os.str();
}

enum class NormalizeMode { global, per_example };

inline Dataset scale_examples(const Dataset& data, std::span<const double> factors) {
  std::vector<SparseExample> out;
  out.reserve(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    SparseExample ex = data.example(i);
    for (double& v : ex.values) v *= factors[i];
    out.push_back(std::move(ex));
  }
  return Dataset(std::move(out), data.labels(), data.dim());
}

/// Divides every example by max_i ||A_i|| (global mode) or by its own norm
/// (per-example mode; zero examples untouched). Returns the new dataset and
/// the original max norm.
inline std::pair<Dataset, double> normalize_max_norm(const Dataset& data,
                                                     NormalizeMode mode = NormalizeMode::global) {
  const auto norms = data.norms();
  const double max_norm = *std::max_element(norms.begin(), norms.end());
  if (!(max_norm > 0.0)) throw std::invalid_argument("cannot normalize: all examples have zero norm");
  std::vector<double> factors(data.n(), 1.0 / max_norm);
  if (mode == NormalizeMode::per_example) {
    for (std::size_t i = 0; i < data.n(); ++i) factors[i] = norms[i] > 0.0 ? 1.0 / norms[i] : 1.0;
  }
  return {scale_examples(data, factors), max_norm};
}

enum class LabelModel {
  linear_sign,   // y = sign(<a, w_true>), classification
  linear_noise,  // y = <a, w_true> + 0.1 N(0,1), regression
  skewed_nnz,    // Pareto-distributed nnz per example, labels as linear_sign
};

struct SyntheticOptions {
  std::size_t n = 100;
  std::size_t d = 10;
  double density = 0.1;
  LabelModel model = LabelModel::linear_sign;
  std::uint64_t seed = 0;
  /// Tail index of the nnz distribution for skewed_nnz:
  /// P(nnz > x) = (x_min / x)^exponent, x_min chosen so the mean is about density * d.
  double tail_exponent = 2.0;
};

namespace detail {

/// k distinct sorted feature indices out of d.
template <class Urbg>
std::vector<std::uint32_t> pick_features(std::size_t d, std::size_t k, std::vector<std::uint32_t>& perm, Urbg& rng) {
  for (std::size_t j = 0; j < k; ++j) {
    std::uniform_int_distribution<std::size_t> pick(j, d - 1);
    std::swap(perm[j], perm[pick(rng)]);
  }
  std::vector<std::uint32_t> out(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Deterministic synthetic data for tests and desk-scale experiments.
inline Dataset gen_synthetic(const SyntheticOptions& opt) {
  if (!(opt.density > 0.0 && opt.density <= 1.0)) throw std::invalid_argument("density must lie in (0, 1]");
  if (opt.n == 0 || opt.d == 0) throw std::invalid_argument("n and d must be positive");
  if (opt.model == LabelModel::skewed_nnz && !(opt.tail_exponent > 1.0))
    throw std::invalid_argument("tail exponent must exceed 1");

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::bernoulli_distribution keep(opt.density);

  std::vector<double> w_true(opt.d);
  for (double& x : w_true) x = normal(rng);

  std::vector<std::uint32_t> perm(opt.d);
  std::iota(perm.begin(), perm.end(), 0u);

  const double mean_nnz = opt.density * static_cast<double>(opt.d);
  const double x_min = std::max(1.0, mean_nnz * (opt.tail_exponent - 1.0) / opt.tail_exponent);

  std::vector<SparseExample> examples;
  std::vector<double> labels;
  examples.reserve(opt.n);
  labels.reserve(opt.n);
  for (std::size_t i = 0; i < opt.n; ++i) {
    SparseExample ex;
    if (opt.model == LabelModel::skewed_nnz) {
      const double u = 1.0 - unif(rng);  // (0, 1]
      const double draw = std::floor(x_min * std::pow(u, -1.0 / opt.tail_exponent));
      const auto k = static_cast<std::size_t>(std::clamp(draw, 1.0, static_cast<double>(opt.d)));
      ex.indices = detail::pick_features(opt.d, k, perm, rng);
    } else {
      for (std::uint32_t j = 0; j < opt.d; ++j)
        if (keep(rng)) ex.indices.push_back(j);
      if (ex.indices.empty()) ex.indices = detail::pick_features(opt.d, 1, perm, rng);
    }
    ex.values.reserve(ex.indices.size());
    for (std::size_t k = 0; k < ex.indices.size(); ++k) {
      double v = normal(rng);
      while (v == 0.0) v = normal(rng);
      ex.values.push_back(v);
    }
    const double margin = ex.dot(w_true);
    double y = 0.0;
    switch (opt.model) {
      case LabelModel::linear_noise: y = margin + 0.1 * normal(rng); break;
      default: y = margin >= 0.0 ? 1.0 : -1.0; break;
    }
    examples.push_back(std::move(ex));
    labels.push_back(y);
  }
  return Dataset(std::move(examples), std::move(labels), opt.d);
}

}  // namespace dfsdca
