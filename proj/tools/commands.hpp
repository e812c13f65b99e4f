#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dfsdca/dfsdca.hpp"

namespace dfsdca::cli {

enum ExitCode : int { ok = 0, usage_error = 1, data_error = 2, failure = 3 };

/// Raised for malformed data sources (exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataOptions {
  std::string data_path;
  std::string synthetic;  // "n,d,density,model"; model in sign|noise|skewed[:exponent]|nonconvex
  std::uint64_t data_seed = 42;
  std::string loss = "logistic";
  std::string lambda = "1/n";
  bool normalize = false;
  std::string normalize_mode = "global";
};

struct LoadedProblem {
  ProblemSpec problem;
  double normalize_scale = 1.0;
  std::string source;
};

inline std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

inline double parse_number(const std::string& text, const std::string& what) {
  const auto v = detail::to_double(text);
  if (!v) throw std::invalid_argument(what + ": '" + text + "' is not a number");
  return *v;
}

inline std::size_t parse_count(const std::string& text, const std::string& what) {
  const double v = parse_number(text, what);
  if (v < 1.0 || v != std::floor(v)) throw std::invalid_argument(what + ": '" + text + "' is not a positive integer");
  return static_cast<std::size_t>(v);
}

/// `1/n` resolves to 1 / (number of examples).
inline double resolve_lambda(const std::string& text, std::size_t n) {
  if (text == "1/n") return 1.0 / static_cast<double>(n);
  const double v = parse_number(text, "--lambda");
  if (!(v > 0.0)) throw std::invalid_argument("--lambda must be positive");
  return v;
}

inline LoadedProblem load_problem(const DataOptions& opt) {
  if (opt.data_path.empty() == opt.synthetic.empty())
    throw std::invalid_argument("give exactly one of --data or --synthetic");

  LoadedProblem out;
  std::optional<QuadraticInstance> quad;
  Dataset data;
  if (!opt.data_path.empty()) {
    try {
      data = load_libsvm(opt.data_path);
    } catch (const std::exception& e) {
      throw DataError(opt.data_path + ": " + e.what());
    }
    out.source = opt.data_path;
  } else {
    const auto parts = split(opt.synthetic, ',');
    if (parts.size() < 3 || parts.size() > 4)
      throw std::invalid_argument("--synthetic expects n,d,density[,model]");
    SyntheticOptions so;
    so.n = parse_count(parts[0], "--synthetic n");
    so.d = parse_count(parts[1], "--synthetic d");
    so.density = parse_number(parts[2], "--synthetic density");
    so.seed = opt.data_seed;
    const std::string model = parts.size() == 4 ? parts[3] : "sign";
    if (model == "nonconvex") {
      quad = build_nonconvex_instance(so.n, so.d, so.seed);
    } else {
      if (model == "sign") so.model = LabelModel::linear_sign;
      else if (model == "noise") so.model = LabelModel::linear_noise;
      else if (model.rfind("skewed", 0) == 0) {
        so.model = LabelModel::skewed_nnz;
        if (model.size() > 6) {
          if (model[6] != ':') throw std::invalid_argument("unknown synthetic model '" + model + "'");
          so.tail_exponent = parse_number(model.substr(7), "skewed exponent");
        }
      } else {
        throw std::invalid_argument("unknown synthetic model '" + model + "'");
      }
      data = gen_synthetic(so);
    }
    out.source = "synthetic:" + opt.synthetic;
  }

  if (quad) {
    if (opt.loss != "quadfam" && opt.loss != "logistic")
      throw std::invalid_argument("the nonconvex synthetic model uses --loss quadfam");
    data = quad->data;
  } else if (opt.loss == "quadfam") {
    throw std::invalid_argument("--loss quadfam needs --synthetic n,d,density,nonconvex");
  }

  if (opt.normalize) {
    NormalizeMode mode;
    if (opt.normalize_mode == "global") mode = NormalizeMode::global;
    else if (opt.normalize_mode == "per-example") mode = NormalizeMode::per_example;
    else throw std::invalid_argument("--normalize-mode must be global or per-example");
    try {
      auto [scaled, scale] = normalize_max_norm(data, mode);
      data = std::move(scaled);
      out.normalize_scale = scale;
    } catch (const std::invalid_argument& e) {
      throw DataError(e.what());
    }
  }

  const double lambda = resolve_lambda(opt.lambda, data.n());
  LossSpec loss;
  if (quad) {
    loss = quad->loss;
    if (opt.normalize) {
      // scaling A_i by s scales the curvature of the composed loss; keep phi_i as built
    }
  } else if (opt.loss == "logistic") {
    try {
      loss = LossSpec::logistic(data.labels());
    } catch (const std::invalid_argument& e) {
      throw DataError(e.what());
    }
  } else if (opt.loss == "squared") {
    loss = LossSpec::squared(data.labels());
  } else {
    throw std::invalid_argument("unknown loss '" + opt.loss + "'");
  }
  out.problem = make_problem(std::move(data), std::move(loss), lambda);
  return out;
}

struct RunOptions {
  DataOptions data;
  std::string sampling = "serial-uniform";
  double epochs = 10.0;
  std::uint64_t seed = 1;
  std::size_t seeds = 1;
  std::string theta = "auto-convex";
  std::string reference_path;
  bool with_reference = false;
  std::string state_in;
  std::string state_out;
};

inline SolverConfig make_solver_config(const RunOptions& opt) {
  SolverConfig cfg;
  if (opt.theta == "auto-convex") cfg.theta_mode = ThetaMode::auto_convex;
  else if (opt.theta == "auto-nonconvex") cfg.theta_mode = ThetaMode::auto_nonconvex;
  else {
    cfg.theta_mode = ThetaMode::explicit_value;
    cfg.theta = parse_number(opt.theta, "--theta");
  }
  cfg.epochs = opt.epochs;
  cfg.seed = opt.seed;
  return cfg;
}

namespace detail {

inline void write_metadata(std::ostream& os, const LoadedProblem& lp, const SamplingScheme& scheme,
                           const RunOptions& opt, double theta, std::uint64_t iterations) {
  const auto& prob = lp.problem;
  const auto p = scheme.probabilities();
  const auto v = scheme.eso();
  const auto [pmin, pmax] = std::minmax_element(p.begin(), p.end());
  const auto [vmin, vmax] = std::minmax_element(v.begin(), v.end());
  os << "# source=" << lp.source << '\n'
     << "# n=" << prob.n() << " d=" << prob.dim() << " nnz=" << prob.data.total_nnz() << '\n'
     << "# loss=" << to_string(prob.loss.kind()) << '\n'
     << "# lambda=" << io::format_double(prob.lambda) << '\n'
     << "# normalize_scale=" << io::format_double(lp.normalize_scale) << '\n'
     << "# sampling=" << scheme.name() << " expected_batch=" << io::format_double(scheme.expected_size())
     << " max_card=" << scheme.max_card() << '\n'
     << "# p_min=" << io::format_double(*pmin) << " p_max=" << io::format_double(*pmax) << '\n'
     << "# v_min=" << io::format_double(*vmin) << " v_max=" << io::format_double(*vmax) << '\n'
     << "# theta_mode=" << opt.theta << " theta=" << io::format_double(theta) << '\n'
     << "# L=" << io::format_double(prob.smoothness.L) << '\n'
     << "# epochs=" << io::format_double(opt.epochs) << " iterations=" << iterations << '\n'
     << "# seed=" << opt.seed << " seeds=" << opt.seeds << '\n';
}

inline void write_aggregate_csv(std::ostream& os, const std::vector<Trace>& traces) {
  os << "t,epoch,primal,primal_se,subopt,subopt_se,B,B_se,D,D_se,E,E_se,envelope_D,envelope_E,theta\n";
  const double s = static_cast<double>(traces.size());
  const auto& first = traces.front();
  auto stats = [&](std::size_t k, auto getter) -> std::optional<std::pair<double, double>> {
    double sum = 0.0, sq = 0.0;
    for (const auto& tr : traces) {
      const std::optional<double> x = getter(tr.records[k]);
      if (!x) return std::nullopt;
      sum += *x;
      sq += *x * *x;
    }
    const double mean = sum / s;
    return std::pair{mean, std::sqrt(std::max(0.0, (sq - s * mean * mean) / (s - 1.0)) / s)};
  };
  auto cols = [](const std::optional<std::pair<double, double>>& v) {
    return v ? io::format_double(v->first) + "," + io::format_double(v->second) : std::string(",");
  };
  const auto d0 = stats(0, [](const TraceRecord& r) { return r.D; });
  const auto e0 = stats(0, [](const TraceRecord& r) { return r.E; });
  for (std::size_t k = 0; k < first.records.size(); ++k) {
    const auto& r = first.records[k];
    const double t = static_cast<double>(r.t);
    os << r.t << ',' << io::format_double(r.epoch) << ','
       << cols(stats(k, [](const TraceRecord& x) { return std::optional<double>(x.primal); })) << ','
       << cols(stats(k, [](const TraceRecord& x) { return x.subopt; })) << ','
       << cols(stats(k, [](const TraceRecord& x) { return x.B; })) << ','
       << cols(stats(k, [](const TraceRecord& x) { return x.D; })) << ','
       << cols(stats(k, [](const TraceRecord& x) { return x.E; })) << ','
       << (d0 ? io::format_double(decay_envelope(d0->first, first.theta, t)) : "") << ','
       << (e0 ? io::format_double(decay_envelope(e0->first, first.theta, t)) : "") << ','
       << io::format_double(first.theta) << '\n';
  }
}

inline void open_output(const std::string& path, std::ofstream& file) {
  file.open(path);
  if (!file) throw DataError("cannot write '" + path + "'");
}

}  // namespace detail

/// `run`: dfSDCA with metadata comments followed by the trace CSV.
inline int cmd_run(const RunOptions& opt, std::ostream& out) {
  const auto lp = load_problem(opt.data);
  const auto& prob = lp.problem;
  const auto desc = parse_sampling_descriptor(opt.sampling);
  const auto scheme = make_scheme(desc, prob.data, prob.smoothness.l, prob.lambda, opt.seed);
  auto cfg = make_solver_config(opt);
  if (opt.seeds < 1) throw std::invalid_argument("--seeds must be at least 1");

  if (!opt.state_in.empty()) {
    const auto snap = io::state_from_json(io::read_json_file(opt.state_in));
    if (snap.alpha.size() != prob.n()) throw DataError("state snapshot does not match the dataset size");
    cfg.initial_alpha = snap.alpha;
  }

  std::optional<ReferenceSolution> ref;
  if (!opt.reference_path.empty()) {
    ref = io::reference_from_json(io::read_json_file(opt.reference_path));
    if (ref->w.size() != prob.dim() || ref->alpha.size() != prob.n())
      throw DataError("reference file does not match the problem dimensions");
  } else if (opt.with_reference) {
    ref = reference_solution(prob);
  }
  const TraceHook hook = ref ? reference_hook(prob, *ref) : TraceHook{};

  std::vector<RunResult> results(opt.seeds);
  if (opt.seeds == 1) {
    results[0] = run(prob, scheme, cfg, hook);
  } else {
    std::vector<std::future<RunResult>> jobs;
    for (std::size_t k = 0; k < opt.seeds; ++k) {
      auto c = cfg;
      c.seed = cfg.seed + k;
      jobs.push_back(std::async(std::launch::async, [&prob, &scheme, &hook, c] { return run(prob, scheme, c, hook); }));
    }
    for (std::size_t k = 0; k < opt.seeds; ++k) results[k] = jobs[k].get();
  }

  detail::write_metadata(out, lp, scheme, opt, results[0].trace.theta, results[0].iterations);
  if (opt.seeds == 1) {
    io::write_trace_csv(out, results[0].trace);
  } else {
    std::vector<Trace> traces;
    for (auto& r : results) traces.push_back(std::move(r.trace));
    detail::write_aggregate_csv(out, traces);
  }
  if (!opt.state_out.empty()) {
    std::ofstream f;
    detail::open_output(opt.state_out, f);
    f << io::state_to_json(results[0].state).dump() << '\n';
  }
  return ok;
}

struct ChunkStatsOptions {
  DataOptions data;
  std::size_t tau = 10;
  std::size_t draws = 10000;
  std::uint64_t seed = 1;
  std::string partition_out;
};

/// `chunk-stats`: per-draw waiting times of tau-nice sampling and of chunked
/// sampling over the Naive Chunks partition, then a `mean` summary row.
inline int cmd_chunk_stats(const ChunkStatsOptions& opt, std::ostream& out) {
  const auto lp = load_problem(opt.data);
  const auto& data = lp.problem.data;
  const auto partition = naive_chunks(data.nnz());
  if (opt.tau > data.n())
    throw std::invalid_argument("--tau " + std::to_string(opt.tau) + " exceeds n = " + std::to_string(data.n()));
  if (opt.tau > partition.k())
    throw std::invalid_argument("--tau " + std::to_string(opt.tau) + " exceeds the number of chunks k = " +
                                std::to_string(partition.k()));
  const auto standard = tau_nice(data.squared_norms(), opt.tau);
  const auto chunked = chunked_sampling(partition, data.squared_norms(), opt.tau);
  Sampler s_std(standard, opt.seed);
  Sampler s_chk(chunked, opt.seed + 1);

  out << "# k=" << partition.k() << " capacity=" << io::format_double(partition.capacity) << " tau=" << opt.tau
      << '\n';
  out << "draw,standard,chunked\n";
  double sum_std = 0.0, sum_chk = 0.0;
  for (std::size_t r = 0; r < opt.draws; ++r) {
    const double a = waiting_time(s_std.next(), data.nnz());
    const double b = waiting_time(s_chk.next(), data.nnz());
    sum_std += a;
    sum_chk += b;
    out << r << ',' << io::format_double(a) << ',' << io::format_double(b) << '\n';
  }
  const double m = static_cast<double>(std::max<std::size_t>(opt.draws, 1));
  out << "mean," << io::format_double(sum_std / m) << ',' << io::format_double(sum_chk / m) << '\n';
  if (!opt.partition_out.empty()) {
    std::ofstream f;
    detail::open_output(opt.partition_out, f);
    f << io::partition_to_json(partition).dump(2) << '\n';
  }
  return ok;
}

struct ValidateOptions {
  std::string suites = "all";
  std::uint64_t seed = 1;
  std::size_t trials = 100;
  std::optional<double> theta;
};

/// `validate`: JSON report; exit 3 when any check fails.
inline int cmd_validate(const ValidateOptions& opt, std::ostream& out) {
  std::vector<std::string> names;
  if (opt.suites == "all") names = validation_suites();
  else names = split(opt.suites, ',');
  for (const auto& s : names) {
    if (std::find(validation_suites().begin(), validation_suites().end(), s) == validation_suites().end())
      throw std::invalid_argument("unknown suite '" + s + "'");
  }
  ValidationOptions vo;
  vo.seed = opt.seed;
  vo.trials = opt.trials;
  vo.theta_override = opt.theta;
  const auto report = run_validation(names, vo);
  out << io::report_to_json(report).dump(2) << '\n';
  return report.pass() ? ok : failure;
}

struct ReferenceCmdOptions {
  DataOptions data;
  std::optional<double> tol;
  std::size_t max_iterations = 200000;
  std::string method = "auto";
};

/// `reference`: JSON with w*, alpha*, P(w*) and the achieved gradient norm.
inline int cmd_reference(const ReferenceCmdOptions& opt, std::ostream& out) {
  const auto lp = load_problem(opt.data);
  ReferenceOptions ro;
  ro.tol = opt.tol;
  ro.max_iterations = opt.max_iterations;
  if (opt.method == "auto") ro.method = ReferenceMethod::automatic;
  else if (opt.method == "gd") ro.method = ReferenceMethod::gradient_descent;
  else if (opt.method == "exact") ro.method = ReferenceMethod::exact;
  else throw std::invalid_argument("--method must be auto, gd or exact");
  const auto ref = reference_solution(lp.problem, ro);
  auto j = io::reference_to_json(ref);
  j["lambda"] = lp.problem.lambda;
  j["loss"] = std::string(to_string(lp.problem.loss.kind()));
  j["n"] = lp.problem.n();
  j["d"] = lp.problem.dim();
  out << j.dump() << '\n';
  return ok;
}

/// Maps exceptions escaping a command onto exit codes, printing the message.
template <class Fn>
int guarded(Fn&& fn, std::ostream& err = std::cerr) {
  try {
    return fn();
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return data_error;
  } catch (const ParseError& e) {
    err << "data error: " << e.what() << '\n';
    return data_error;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return failure;
  } catch (const ReferenceError& e) {
    err << "error: " << e.what() << " (achieved grad_norm " << e.grad_norm() << ")\n";
    return failure;
  } catch (const StepPreconditionError& e) {
    err << "error: " << e.what() << '\n';
    return failure;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return usage_error;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << '\n';
    return data_error;
  }
}

}  // namespace dfsdca::cli
