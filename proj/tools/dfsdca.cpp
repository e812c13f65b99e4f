#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

void add_data_options(CLI::App* cmd, dfsdca::cli::DataOptions& d) {
  cmd->add_option("--data", d.data_path, "LIBSVM file");
  cmd->add_option("--synthetic", d.synthetic, "n,d,density[,model]; model: sign|noise|skewed[:exp]|nonconvex");
  cmd->add_option("--data-seed", d.data_seed, "seed for synthetic data");
  cmd->add_option("--loss", d.loss, "logistic|squared|quadfam");
  cmd->add_option("--lambda", d.lambda, "regularization strength or 1/n");
  cmd->add_flag("--normalize", d.normalize, "scale so that max_i ||A_i|| = 1");
  cmd->add_option("--normalize-mode", d.normalize_mode, "global|per-example");
}

int write_to(const std::string& path, const std::function<int(std::ostream&)>& body) {
  if (path.empty() || path == "-") return body(std::cout);
  std::ofstream f(path);
  if (!f) throw dfsdca::cli::DataError("cannot write '" + path + "'");
  return body(f);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace dfsdca::cli;
  CLI::App app{"dual-free SDCA with arbitrary sampling"};
  app.footer("Exit codes: 0 ok, 1 usage, 2 data error, 3 divergence or validation failure.");
  app.require_subcommand(1);

  RunOptions run_opt;
  std::string run_out;
  auto* run = app.add_subcommand("run", "run the solver and write a trace CSV");
  add_data_options(run, run_opt.data);
  run->add_option("--sampling", run_opt.sampling,
                  "serial-uniform|serial-importance|serial-random:<c>|nice:<tau>|chunked:<tau>");
  std::optional<std::size_t> run_tau;
  run->add_option("--tau", run_tau, "mini-batch size for nice/chunked when not given in --sampling");
  run->add_option("--epochs", run_opt.epochs);
  run->add_option("--seed", run_opt.seed);
  run->add_option("--seeds", run_opt.seeds, "independent runs aggregated into mean and standard error");
  run->add_option("--theta", run_opt.theta, "auto-convex|auto-nonconvex|<value>");
  run->add_option("--reference", run_opt.reference_path, "reference JSON from the reference subcommand");
  run->add_flag("--with-reference", run_opt.with_reference, "compute a reference solution first");
  run->add_option("--state-in", run_opt.state_in, "resume from a state snapshot");
  run->add_option("--state-out", run_opt.state_out, "write the final state snapshot");
  run->add_option("--out", run_out, "output CSV (default stdout)");
  run->footer(
      "Output: '#' metadata lines, then CSV columns\n"
      "  t,epoch,primal,subopt,B,D,E,envelope_D,envelope_E,theta\n"
      "With --seeds k > 1:\n"
      "  t,epoch,primal,primal_se,subopt,subopt_se,B,B_se,D,D_se,E,E_se,envelope_D,envelope_E,theta\n"
      "subopt, B, D, E and the envelopes are empty unless --reference or --with-reference is given.");

  ChunkStatsOptions cs_opt;
  std::string cs_out;
  auto* cs = app.add_subcommand("chunk-stats", "waiting times of tau-nice versus chunked sampling");
  add_data_options(cs, cs_opt.data);
  cs->add_option("--tau", cs_opt.tau)->required();
  cs->add_option("--draws", cs_opt.draws);
  cs->add_option("--seed", cs_opt.seed);
  cs->add_option("--partition-out", cs_opt.partition_out, "partition JSON");
  cs->add_option("--out", cs_out, "output CSV (default stdout)");
  cs->footer("Output: '#' partition line, then CSV columns draw,standard,chunked and a final 'mean' row.");

  ValidateOptions val_opt;
  std::string val_out;
  auto* val = app.add_subcommand("validate", "randomized checks of the analysis");
  val->add_option("--suite", val_opt.suites, "all or a comma list of eso,lemma1,lemma2,contraction,gradcheck,fixedpoint");
  val->add_option("--seed", val_opt.seed);
  val->add_option("--trials", val_opt.trials);
  val->add_option("--theta", val_opt.theta, "override theta in every trial");
  val->add_option("--out", val_out, "output JSON (default stdout)");

  ReferenceCmdOptions ref_opt;
  std::string ref_out;
  auto* ref = app.add_subcommand("reference", "high-accuracy solution of the primal problem");
  add_data_options(ref, ref_opt.data);
  ref->add_option("--tol", ref_opt.tol, "target gradient norm");
  ref->add_option("--max-iter", ref_opt.max_iterations);
  ref->add_option("--method", ref_opt.method, "auto|gd|exact");
  ref->add_option("--out", ref_out, "output JSON (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage_error;
  }

  if (*run) {
    return guarded([&] {
      if (run_tau) {
        const auto& s = run_opt.sampling;
        if (s == "nice" || s == "chunked") run_opt.sampling = s + ":" + std::to_string(*run_tau);
        else if (s == "serial-uniform" && *run_tau > 1) run_opt.sampling = "nice:" + std::to_string(*run_tau);
      }
      return write_to(run_out, [&](std::ostream& os) { return cmd_run(run_opt, os); });
    });
  }
  if (*cs) return guarded([&] { return write_to(cs_out, [&](std::ostream& os) { return cmd_chunk_stats(cs_opt, os); }); });
  if (*val) return guarded([&] { return write_to(val_out, [&](std::ostream& os) { return cmd_validate(val_opt, os); }); });
  return guarded([&] { return write_to(ref_out, [&](std::ostream& os) { return cmd_reference(ref_opt, os); }); });
}
