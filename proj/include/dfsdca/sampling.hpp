#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dfsdca/dataset.hpp"

namespace dfsdca {

/// One realization S_t of a sampling. The indices are grouped into units (one
/// unit per core): unit u owns indices[unit_offsets[u] .. unit_offsets[u+1]).
/// Standard samplings put every index in its own unit; chunked sampling makes
/// one unit per drawn chunk.
struct Sample {
  std::vector<std::size_t> indices;
  std::vector<std::size_t> unit_offsets{0};

  std::size_t size() const noexcept { return indices.size(); }
  std::size_t units() const noexcept { return unit_offsets.size() - 1; }

  void clear() {
    indices.clear();
    unit_offsets.assign(1, 0);
  }
  void close_unit() { unit_offsets.push_back(indices.size()); }
};

/// Output of the one-pass greedy chunker. Chunk j holds the consecutive
/// coordinates [offsets[j], offsets[j+1]).
struct ChunkPartition {
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> g;  // coordinates per chunk
  std::vector<double> s;       // nnz sum per chunk
  double capacity = 0.0;       // max_i u[i]
  std::size_t steps = 0;       // items visited

  std::size_t k() const noexcept { return g.size(); }
  std::size_t n() const noexcept { return offsets.empty() ? 0 : offsets.back(); }
  std::size_t max_chunk_size() const noexcept { return g.empty() ? 0 : *std::max_element(g.begin(), g.end()); }
};

enum class ChunkGuard {
  nnz_sum,        // accept t while s + u[t] <= capacity
  literal_count,  // accept t while g + u[t] <= capacity (guard exactly as printed)
};

/// Greedy left-to-right partition of coordinates into chunks of similar total
/// nnz, bounded by the largest single entry.
inline ChunkPartition naive_chunks(std::span<const double> u, ChunkGuard guard = ChunkGuard::nnz_sum) {
  if (u.empty()) throw std::invalid_argument("naive_chunks: empty nnz vector");
  for (double x : u)
    if (!(x >= 0.0)) throw std::invalid_argument("naive_chunks: nnz entries must be non-negative");
  ChunkPartition out;
  out.capacity = *std::max_element(u.begin(), u.end());
  out.offsets = {0};
  out.g = {1};
  out.s = {u[0]};
  out.steps = 1;
  for (std::size_t t = 1; t < u.size(); ++t) {
    ++out.steps;
    const double load = guard == ChunkGuard::nnz_sum ? out.s.back() : static_cast<double>(out.g.back());
    if (load + u[t] <= out.capacity) {
      ++out.g.back();
      out.s.back() += u[t];
    } else {
      out.offsets.push_back(t);
      out.g.push_back(1);
      out.s.push_back(u[t]);
    }
  }
  out.offsets.push_back(u.size());
  return out;
}

inline ChunkPartition naive_chunks(std::span<const std::size_t> nnz, ChunkGuard guard = ChunkGuard::nnz_sum) {
  std::vector<double> u(nnz.begin(), nnz.end());
  return naive_chunks(std::span<const double>(u), guard);
}

enum class SchemeKind { serial, tau_nice, chunked };

/// An outcome of the sampling together with its probability.
struct Atom {
  double probability = 0.0;
  Sample sample;
};

namespace detail {

/// C(n, k) as a double, saturating at +inf.
inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t j = 1; j <= k; ++j) r = r * static_cast<double>(n - k + j) / static_cast<double>(j);
  return std::round(r);
}

/// Calls fn(combination) for every k-subset of {0..n-1} in lexicographic order.
template <class Fn>
void for_each_combination(std::size_t n, std::size_t k, Fn&& fn) {
  std::vector<std::size_t> c(k);
  std::iota(c.begin(), c.end(), std::size_t{0});
  while (true) {
    fn(std::as_const(c));
    std::size_t j = k;
    while (j > 0 && c[j - 1] == n - k + j - 1) --j;
    if (j == 0) return;
    ++c[j - 1];
    for (std::size_t r = j; r < k; ++r) c[r] = c[r - 1] + 1;
  }
}

}  // namespace detail

/// A sampling S-hat over [n]: marginals p_i = Prob(i in S), ESO parameters v_i
/// and a generator. Descriptors are immutable; draws go through a
/// caller-owned random engine and scratch buffer (see Sampler).
class SamplingScheme {
 public:
  SchemeKind kind() const noexcept { return kind_; }
  std::size_t n() const noexcept { return p_.size(); }
  std::size_t tau() const noexcept { return tau_; }
  std::span<const double> probabilities() const noexcept { return p_; }
  std::span<const double> eso() const noexcept { return v_; }
  std::size_t max_card() const noexcept { return max_card_; }
  const std::optional<ChunkPartition>& partition() const noexcept { return partition_; }
  const std::string& name() const noexcept { return name_; }

  double min_probability() const { return *std::min_element(p_.begin(), p_.end()); }
  double expected_size() const { return std::accumulate(p_.begin(), p_.end(), 0.0); }
  bool uniform_serial() const noexcept { return uniform_serial_; }

  /// Copy with replaced ESO parameters (used to build counterexamples).
  SamplingScheme with_eso(std::vector<double> v) const {
    if (v.size() != n()) throw std::invalid_argument("ESO vector length mismatch");
    SamplingScheme copy = *this;
    copy.v_ = std::move(v);
    return copy;
  }

  SamplingScheme with_name(std::string name) const {
    SamplingScheme copy = *this;
    copy.name_ = std::move(name);
    return copy;
  }

  /// Number of distinct outcomes of the sampling.
  double atom_count() const {
    switch (kind_) {
      case SchemeKind::serial: return static_cast<double>(n());
      case SchemeKind::tau_nice: return detail::binomial(n(), tau_);
      case SchemeKind::chunked: return detail::binomial(partition_->k(), tau_);
    }
    return 0.0;
  }

  /// Every outcome with its probability, or nullopt when there are more than
  /// `limit` of them.
  std::optional<std::vector<Atom>> atoms(std::size_t limit = 10000) const {
    if (atom_count() > static_cast<double>(limit)) return std::nullopt;
    std::vector<Atom> out;
    switch (kind_) {
      case SchemeKind::serial:
        for (std::size_t i = 0; i < n(); ++i) {
          Atom a{p_[i], {}};
          a.sample.indices.push_back(i);
          a.sample.close_unit();
          out.push_back(std::move(a));
        }
        break;
      case SchemeKind::tau_nice: {
        const double prob = 1.0 / atom_count();
        detail::for_each_combination(n(), tau_, [&](const std::vector<std::size_t>& c) {
          Atom a{prob, {}};
          for (std::size_t i : c) {
            a.sample.indices.push_back(i);
            a.sample.close_unit();
          }
          out.push_back(std::move(a));
        });
        break;
      }
      case SchemeKind::chunked: {
        const double prob = 1.0 / atom_count();
        detail::for_each_combination(partition_->k(), tau_, [&](const std::vector<std::size_t>& c) {
          Atom a{prob, {}};
          for (std::size_t j : c) append_chunk(j, a.sample);
          out.push_back(std::move(a));
        });
        break;
      }
    }
    return out;
  }

  /// Draws one subset into `out`. `scratch` must be owned by the caller and
  /// reused between draws with the same scheme.
  template <class Urbg>
  void draw(Urbg& rng, Sample& out, std::vector<std::size_t>& scratch) const {
    out.clear();
    switch (kind_) {
      case SchemeKind::serial: {
        std::size_t i = 0;
        if (uniform_serial_) {
          i = std::uniform_int_distribution<std::size_t>(0, n() - 1)(rng);
        } else {
          const double r = std::uniform_real_distribution<double>(0.0, cdf_.back())(rng);
          i = static_cast<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), r) - cdf_.begin());
          i = std::min(i, n() - 1);
        }
        out.indices.push_back(i);
        out.close_unit();
        return;
      }
      case SchemeKind::tau_nice:
        partial_shuffle(n(), rng, scratch);
        for (std::size_t r = 0; r < tau_; ++r) {
          out.indices.push_back(scratch[r]);
          out.close_unit();
        }
        std::sort(out.indices.begin(), out.indices.end());
        return;
      case SchemeKind::chunked:
        partial_shuffle(partition_->k(), rng, scratch);
        std::sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(tau_));
        for (std::size_t r = 0; r < tau_; ++r) append_chunk(scratch[r], out);
        return;
    }
  }

  friend SamplingScheme serial_uniform(std::span<const double> squared_norms);
  friend SamplingScheme serial_weighted(std::span<const double> p, std::span<const double> squared_norms);
  friend SamplingScheme tau_nice(std::span<const double> squared_norms, std::size_t tau);
  friend SamplingScheme chunked_sampling(const ChunkPartition& partition, std::span<const double> squared_norms,
                                         std::size_t tau);

 private:
  void append_chunk(std::size_t j, Sample& out) const {
    for (std::size_t i = partition_->offsets[j]; i < partition_->offsets[j + 1]; ++i) out.indices.push_back(i);
    out.close_unit();
  }

  /// Moves a uniform random tau-subset of the current permutation in scratch
  /// to its front (partial Fisher-Yates). Any permutation is a valid start.
  template <class Urbg>
  void partial_shuffle(std::size_t pool, Urbg& rng, std::vector<std::size_t>& scratch) const {
    if (scratch.size() != pool) {
      scratch.resize(pool);
      std::iota(scratch.begin(), scratch.end(), std::size_t{0});
    }
    for (std::size_t r = 0; r < tau_; ++r) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(r, pool - 1)(rng);
      std::swap(scratch[r], scratch[j]);
    }
  }

  SchemeKind kind_ = SchemeKind::serial;
  std::size_t tau_ = 1;
  std::vector<double> p_;
  std::vector<double> v_;
  std::vector<double> cdf_;
  std::size_t max_card_ = 1;
  bool uniform_serial_ = false;
  std::optional<ChunkPartition> partition_;
  std::string name_;
};

/// Single example, uniformly at random: p_i = 1/n, v_i = ||A_i||^2.
inline SamplingScheme serial_uniform(std::span<const double> squared_norms) {
  if (squared_norms.empty()) throw std::invalid_argument("serial_uniform: n must be positive");
  SamplingScheme s;
  const std::size_t n = squared_norms.size();
  s.kind_ = SchemeKind::serial;
  s.p_.assign(n, 1.0 / static_cast<double>(n));
  s.v_.assign(squared_norms.begin(), squared_norms.end());
  s.uniform_serial_ = true;
  s.name_ = "serial-uniform";
  return s;
}

/// Single example i drawn with probability p_i.
inline SamplingScheme serial_weighted(std::span<const double> p, std::span<const double> squared_norms) {
  if (p.empty() || p.size() != squared_norms.size())
    throw std::invalid_argument("serial_weighted: probability and norm vectors must match and be non-empty");
  double total = 0.0;
  for (double x : p) {
    if (!(x > 0.0)) throw std::invalid_argument("serial_weighted: probabilities must be positive");
    total += x;
  }
  const double tol = 1e-12 * std::max(1.0, std::sqrt(static_cast<double>(p.size())));
  if (std::abs(total - 1.0) > tol) throw std::invalid_argument("serial_weighted: probabilities must sum to 1");
  SamplingScheme s;
  s.kind_ = SchemeKind::serial;
  s.p_.assign(p.begin(), p.end());
  s.v_.assign(squared_norms.begin(), squared_norms.end());
  s.cdf_.resize(p.size());
  std::partial_sum(p.begin(), p.end(), s.cdf_.begin());
  s.name_ = "serial-weighted";
  return s;
}

/// Uniformly random subsets of size tau: p_i = tau/n, v_i = tau ||A_i||^2.
inline SamplingScheme tau_nice(std::span<const double> squared_norms, std::size_t tau) {
  const std::size_t n = squared_norms.size();
  if (tau < 1 || tau > n) throw std::invalid_argument("tau_nice: need 1 <= tau <= n");
  SamplingScheme s;
  s.kind_ = SchemeKind::tau_nice;
  s.tau_ = tau;
  s.p_.assign(n, static_cast<double>(tau) / static_cast<double>(n));
  s.v_.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.v_[i] = static_cast<double>(tau) * squared_norms[i];
  s.max_card_ = tau;
  s.name_ = "nice:" + std::to_string(tau);
  return s;
}

/// Uniform tau-subset of the chunks of `partition`; the sample is the union of
/// their coordinates. Uses the cardinality bound v_i = (tau * max chunk size) ||A_i||^2.
inline SamplingScheme chunked_sampling(const ChunkPartition& partition, std::span<const double> squared_norms,
                                       std::size_t tau) {
  if (partition.n() != squared_norms.size()) throw std::invalid_argument("chunked_sampling: partition size mismatch");
  const std::size_t k = partition.k();
  if (tau < 1 || tau > k)
    throw std::invalid_argument("chunked_sampling: tau = " + std::to_string(tau) + " must lie in [1, k] with k = " +
                                std::to_string(k) + " chunks");
  SamplingScheme s;
  const std::size_t n = squared_norms.size();
  s.kind_ = SchemeKind::chunked;
  s.tau_ = tau;
  s.p_.assign(n, static_cast<double>(tau) / static_cast<double>(k));
  s.max_card_ = tau * partition.max_chunk_size();
  s.v_.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.v_[i] = static_cast<double>(s.max_card_) * squared_norms[i];
  s.partition_ = partition;
  s.name_ = "chunked:" + std::to_string(tau);
  return s;
}

/// p_i proportional to n*lambda + l_i ||A_i||^2. This equalizes the per-example
/// terms 1/p_i + l_i v_i / (lambda p_i n) of the convex rate for v_i = ||A_i||^2.
inline std::vector<double> importance_probabilities(std::span<const double> l, std::span<const double> squared_norms,
                                                    double lambda) {
  if (l.size() != squared_norms.size() || l.empty())
    throw std::invalid_argument("importance_probabilities: length mismatch");
  if (!(lambda > 0.0)) throw std::invalid_argument("importance_probabilities: lambda must be positive");
  const double n_lambda = static_cast<double>(l.size()) * lambda;
  std::vector<double> p(l.size());
  for (std::size_t i = 0; i < l.size(); ++i) p[i] = n_lambda + l[i] * squared_norms[i];
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& x : p) x /= total;
  return p;
}

/// Serial sampling with log-uniform random weights in [1, hi], hi < c, so
/// that max p / min p < c.
inline SamplingScheme random_c_sampling(std::span<const double> squared_norms, double c, std::uint64_t seed) {
  if (!(c > 1.0)) throw std::invalid_argument("random_c_sampling: c must exceed 1");
  constexpr double delta = 0.01;
  const double hi = c * (1.0 - delta) > 1.0 ? c * (1.0 - delta) : 0.5 * (1.0 + c);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double log_hi = std::log(hi);
  std::vector<double> p(squared_norms.size());
  for (double& x : p) x = std::exp(unif(rng) * log_hi);
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& x : p) x /= total;
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, c);
  return serial_weighted(p, squared_norms).with_name("serial-random:" + std::string(buf, res.ptr));
}

/// Owns the random engine and scratch needed to draw from a scheme.
class Sampler {
 public:
  Sampler(const SamplingScheme& scheme, std::uint64_t seed) : scheme_(&scheme), rng_(seed) {}
  Sampler(SamplingScheme&&, std::uint64_t) = delete;

  const Sample& next() {
    scheme_->draw(rng_, sample_, scratch_);
    return sample_;
  }

  std::mt19937_64& engine() noexcept { return rng_; }

 private:
  const SamplingScheme* scheme_;
  std::mt19937_64 rng_;
  Sample sample_;
  std::vector<std::size_t> scratch_;
};

/// Per-core waiting time of one draw: max unit load minus mean unit load,
/// where a unit's load is the total nnz of its coordinates.
inline double waiting_time(const Sample& sample, std::span<const std::size_t> nnz) {
  if (sample.units() == 0) throw std::invalid_argument("waiting_time: empty draw");
  double max_load = 0.0, total = 0.0;
  for (std::size_t u = 0; u < sample.units(); ++u) {
    double load = 0.0;
    for (std::size_t r = sample.unit_offsets[u]; r < sample.unit_offsets[u + 1]; ++r)
      load += static_cast<double>(nnz[sample.indices[r]]);
    max_load = std::max(max_load, load);
    total += load;
  }
  return max_load - total / static_cast<double>(sample.units());
}

struct EsoCheck {
  double max_ratio = 0.0;  // max over h of E||sum A_i h_i||^2 / sum p_i v_i h_i^2
  double std_error = 0.0;  // Monte Carlo standard error of the worst ratio, 0 when exact
  bool exact = true;
};

/// Empirical check of E||sum_{i in S} A_i h_i||^2 <= sum_i p_i v_i h_i^2 for
/// `trials` Gaussian h. Exact over all outcomes when there are at most 10^4,
/// otherwise Monte Carlo over `mc_draws` draws.
inline EsoCheck validate_eso(const SamplingScheme& scheme, const Dataset& data, std::size_t trials,
                             std::uint64_t seed, std::size_t mc_draws = 10000) {
  if (scheme.n() != data.n()) throw std::invalid_argument("validate_eso: scheme and dataset sizes differ");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto atoms = scheme.atoms();
  const auto p = scheme.probabilities();
  const auto v = scheme.eso();

  std::vector<double> acc(data.dim(), 0.0);
  auto sq_norm_of = [&](const Sample& s, std::span<const double> h) {
    for (std::size_t i : s.indices) data.example(i).add_to(h[i], acc);
    double out = 0.0;
    for (std::size_t i : s.indices) {
      for (auto j : data.example(i).indices) {
        out += acc[j] * acc[j];
        acc[j] = 0.0;
      }
    }
    return out;
  };

  EsoCheck result;
  result.exact = atoms.has_value();
  result.max_ratio = -std::numeric_limits<double>::infinity();
  std::vector<double> h(data.n());
  std::vector<std::size_t> scratch;
  Sample sample;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    for (double& x : h) x = normal(rng);
    double rhs = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) rhs += p[i] * v[i] * h[i] * h[i];
    double lhs = 0.0, se = 0.0;
    if (atoms) {
      for (const auto& atom : *atoms) lhs += atom.probability * sq_norm_of(atom.sample, h);
    } else {
      double sum = 0.0, sum_sq = 0.0;
      for (std::size_t r = 0; r < mc_draws; ++r) {
        scheme.draw(rng, sample, scratch);
        const double x = sq_norm_of(sample, h);
        sum += x;
        sum_sq += x * x;
      }
      const double m = static_cast<double>(mc_draws);
      lhs = sum / m;
      const double var = std::max(0.0, (sum_sq - m * lhs * lhs) / (m - 1.0));
      se = std::sqrt(var / m);
    }
    const double ratio = rhs > 0.0 ? lhs / rhs : 0.0;
    if (ratio > result.max_ratio) {
      result.max_ratio = ratio;
      result.std_error = rhs > 0.0 ? se / rhs : 0.0;
    }
  }
  return result;
}

enum class SamplingFamily { serial_uniform, serial_importance, serial_random, nice, chunked };

struct SamplingDescriptor {
  SamplingFamily family = SamplingFamily::serial_uniform;
  double parameter = 0.0;  // c for serial-random, tau for nice/chunked
};

/// Parses `serial-uniform`, `serial-importance`, `serial-random:<c>`,
/// `nice:<tau>` or `chunked:<tau>`.
inline SamplingDescriptor parse_sampling_descriptor(std::string_view text) {
  const auto colon = text.find(':');
  const auto head = text.substr(0, colon);
  const auto tail = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
  auto need_arg = [&](bool integer) {
    const auto value = detail::to_double(tail);
    if (!value) throw std::invalid_argument("sampling '" + std::string(text) + "' needs a numeric argument");
    if (integer && (*value < 1.0 || *value != std::floor(*value)))
      throw std::invalid_argument("sampling '" + std::string(text) + "' needs a positive integer tau");
    return *value;
  };
  auto no_arg = [&](SamplingFamily f) {
    if (colon != std::string_view::npos)
      throw std::invalid_argument("sampling '" + std::string(head) + "' takes no argument");
    return SamplingDescriptor{f, 0.0};
  };
  if (head == "serial-uniform") return no_arg(SamplingFamily::serial_uniform);
  if (head == "serial-importance") return no_arg(SamplingFamily::serial_importance);
  if (head == "serial-random") {
    const double c = need_arg(false);
    if (!(c > 1.0)) throw std::invalid_argument("sampling '" + std::string(text) + "' needs c > 1");
    return {SamplingFamily::serial_random, c};
  }
  if (head == "nice") return {SamplingFamily::nice, need_arg(true)};
  if (head == "chunked") return {SamplingFamily::chunked, need_arg(true)};
  throw std::invalid_argument("unknown sampling '" + std::string(text) + "'");
}

/// Instantiates a descriptor for a dataset. `l` and `lambda` feed importance
/// sampling; `seed` feeds serial-random.
inline SamplingScheme make_scheme(const SamplingDescriptor& desc, const Dataset& data, std::span<const double> l,
                                  double lambda, std::uint64_t seed) {
  const auto sq = data.squared_norms();
  switch (desc.family) {
    case SamplingFamily::serial_uniform: return serial_uniform(sq);
    case SamplingFamily::serial_importance:
      return serial_weighted(importance_probabilities(l, sq, lambda), sq).with_name("serial-importance");
    case SamplingFamily::serial_random: return random_c_sampling(sq, desc.parameter, seed);
    case SamplingFamily::nice: return tau_nice(sq, static_cast<std::size_t>(desc.parameter));
    case SamplingFamily::chunked: {
      const auto partition = naive_chunks(data.nnz());
      return chunked_sampling(partition, sq, static_cast<std::size_t>(desc.parameter));
    }
  }
  throw std::invalid_argument("unknown sampling family");
}

}  // namespace dfsdca
