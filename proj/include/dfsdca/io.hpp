#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfsdca/diagnostics.hpp"
#include "dfsdca/validation.hpp"

namespace dfsdca::io {

using json = nlohmann::json;

/// Shortest text that parses back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return {buf, res.ptr};
}

inline constexpr const char* trace_csv_header = "t,epoch,primal,subopt,B,D,E,envelope_D,envelope_E,theta";

/// Writes one CSV row per trace record. Columns that need a reference
/// solution are left empty when it is absent.
inline void write_trace_csv(std::ostream& os, const Trace& trace) {
  os << trace_csv_header << '\n';
  const auto& recs = trace.records;
  const std::optional<double> d0 = recs.empty() ? std::nullopt : recs.front().D;
  const std::optional<double> e0 = recs.empty() ? std::nullopt : recs.front().E;
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : recs) {
    const double t = static_cast<double>(r.t);
    os << r.t << ',' << format_double(r.epoch) << ',' << format_double(r.primal) << ',' << opt(r.subopt) << ','
       << opt(r.B) << ',' << opt(r.D) << ',' << opt(r.E) << ','
       << (d0 ? format_double(decay_envelope(*d0, trace.theta, t)) : "") << ','
       << (e0 ? format_double(decay_envelope(*e0, trace.theta, t)) : "") << ',' << format_double(trace.theta)
       << '\n';
  }
}

inline json reference_to_json(const ReferenceSolution& ref) {
  return {{"w", ref.w}, {"alpha", ref.alpha}, {"primal", ref.primal}, {"grad_norm", ref.grad_norm},
          {"iterations", ref.iterations}};
}

inline ReferenceSolution reference_from_json(const json& j) {
  ReferenceSolution ref;
  ref.w = j.at("w").get<std::vector<double>>();
  ref.alpha = j.at("alpha").get<std::vector<double>>();
  ref.primal = j.at("primal").get<double>();
  ref.grad_norm = j.at("grad_norm").get<double>();
  ref.iterations = j.value("iterations", std::size_t{0});
  return ref;
}

inline json state_to_json(const SolverState& s) { return {{"t", s.t}, {"w", s.w}, {"alpha", s.alpha}}; }

inline SolverState state_from_json(const json& j) {
  SolverState s;
  s.t = j.at("t").get<std::uint64_t>();
  s.w = j.at("w").get<std::vector<double>>();
  s.alpha = j.at("alpha").get<std::vector<double>>();
  return s;
}

inline json partition_to_json(const ChunkPartition& part) {
  return {{"k", part.k()}, {"capacity", part.capacity}, {"offsets", part.offsets}, {"g", part.g}, {"s", part.s}};
}

inline json report_to_json(const ValidationReport& rep) {
  json checks = json::array();
  for (const auto& c : rep.checks) {
    json item = {{"suite", c.suite}, {"name", c.name},        {"trials", c.trials}, {"worst", c.worst},
                 {"threshold", c.threshold}, {"comparison", c.comparison}, {"pass", c.pass}};
    if (!c.error.empty()) item["error"] = c.error;
    checks.push_back(std::move(item));
  }
  json suites = json::array();
  for (const auto& c : rep.checks)
    if (std::find(suites.begin(), suites.end(), c.suite) == suites.end()) suites.push_back(c.suite);
  return {{"pass", rep.pass()}, {"suites", suites}, {"checks", checks}};
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return json::parse(in);
}

}  // namespace dfsdca::io
