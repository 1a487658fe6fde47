// nphmm: fit, decode, simulate, score and diagnose nonparametric-emission HMMs.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "nphmm/diagnostics.hpp"
#include "nphmm/em.hpp"
#include "nphmm/error.hpp"
#include "nphmm/io.hpp"
#include "nphmm/simeval.hpp"

namespace {

using namespace nphmm;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::FitFailed:
    case ErrorCode::EmptyState:
    case ErrorCode::ZeroWeight:
    case ErrorCode::DegenerateDenominator:
    case ErrorCode::NonUniqueStationary:
    case ErrorCode::RankDeficient:
      return kExitNumeric;
    default:
      return kExitInput;
  }
}

// Runs `body`, prefixing any library error with the flag it concerns.
template <typename F>
auto for_flag(const std::string& flag, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.code(), flag + ": " + e.message());
  }
}

std::string dump(const nlohmann::json& doc) { return doc.dump(2) + "\n"; }

struct FitArgs {
  std::string data;
  int states = 0;
  std::string emission;
  double lambda = 1.0;
  double alpha = 2.0;
  int components = 0;
  std::string component_family = "poisson";
  double bandwidth = 0.0;
  bool bandwidth_cv = false;
  std::string kernel = "gaussian-spherical";
  int inner_iters = 5;
  int anchor_stride = 1;
  int max_iter = 500;
  double tol = 1e-6;
  int starts = 5;
  double init_smoothing = 0.05;
  std::uint64_t seed = 0;
  std::string out;
  std::string report;
};

int run_fit(const FitArgs& a) {
  FitOptions opts;
  opts.max_iter = a.max_iter;
  opts.tol = a.tol;
  opts.n_starts = a.starts;
  opts.seed = a.seed;
  opts.init_smoothing = a.init_smoothing;
  auto& e = opts.emission;
  e.family = for_flag("--emission", [&] { return parse_family(a.emission); });
  e.penalty.lambda = a.lambda;
  e.penalty.alpha = a.alpha;
  e.components = a.components;
  e.component_family = for_flag("--component-family", [&] { return parse_component_family(a.component_family); });
  e.kernel = for_flag("--kernel", [&] { return parse_kernel_id(a.kernel); });
  e.bandwidth = a.bandwidth_cv ? 0.0 : a.bandwidth;
  e.inner_iters = a.inner_iters;
  e.anchor_stride = a.anchor_stride;
  for_flag("--lambda/--alpha", [&] { validate(opts); });

  const bool real = e.family == FamilyKind::Kernel ||
                    (e.family == FamilyKind::Mixture && e.component_family == ComponentFamily::Gaussian);
  const ObservationSequence obs = for_flag("--data", [&] {
    return read_observations(a.data, real ? ObservationKind::RealVector : ObservationKind::Count);
  });
  const FitReport report = fit(obs, a.states, opts);

  const std::string report_path = a.report.empty() ? a.out + ".report.json" : a.report;
  write_file_atomic(a.out, dump(model_to_json(report.model)));
  write_file_atomic(report_path, dump(fit_report_to_json(report, opts)));
  std::cerr << "fit: objective " << format_double(report.objective_trace.back()) << " after "
            << report.iterations << " iterations (" << (report.converged ? "converged" : "not converged")
            << ", best start " << report.best_start + 1 << ")\n";
  return kExitOk;
}

struct DecodeArgs {
  std::string model;
  std::string data;
  std::string method = "viterbi";
  std::string out;
};

int run_decode(const DecodeArgs& a) {
  const Decoder decoder = for_flag("--method", [&] { return parse_decoder(a.method); });
  const HmmModel model = for_flag("--model", [&] { return read_model(a.model); });
  const ObservationSequence obs =
      for_flag("--data", [&] { return read_observations(a.data, observation_kind(model.emission)); });
  const StatePath path = for_flag("--data", [&] {
    return decoder == Decoder::Viterbi ? viterbi(model, obs) : map_decode(forward_backward(model, obs));
  });
  write_file_atomic(a.out, format_states(path));
  return kExitOk;
}

struct SimulateArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string truth_out;
};

int run_simulate(const SimulateArgs& a) {
  const auto source = for_flag("--config", [&] {
    return simulation_from_json(read_json(a.config), fs::path(a.config).parent_path());
  });
  const LabeledSequence data = std::holds_alternative<RegionScheme>(source)
                                   ? simulate_regions(std::get<RegionScheme>(source), a.seed)
                                   : simulate_hmm(std::get<SimulationModel>(source).model,
                                                  std::get<SimulationModel>(source).n, a.seed);
  write_file_atomic(a.out, format_observations(data.obs));
  if (!a.truth_out.empty()) write_file_atomic(a.truth_out, format_states(*data.truth));
  return kExitOk;
}

struct EvalArgs {
  std::string pred;
  std::string truth;
};

int run_eval(const EvalArgs& a) {
  const StatePath pred = for_flag("--pred", [&] { return read_states(a.pred); });
  const StatePath truth = for_flag("--truth", [&] { return read_states(a.truth); });
  const nlohmann::json out = {{"n", truth.size()},
                              {"rand_index", for_flag("--pred/--truth", [&] { return rand_index(truth, pred); })},
                              {"aligned_accuracy",
                               for_flag("--pred/--truth", [&] { return aligned_accuracy(truth, pred); })}};
  std::cout << dump(out);
  return kExitOk;
}

struct DiagnoseArgs {
  std::string model;
  double tol = kDefaultRankTol;
  int grid_scale = 1;
  std::string out;
};

int run_diagnose(const DiagnoseArgs& a) {
  const HmmModel model = for_flag("--model", [&] { return read_model(a.model); });
  const IdentifiabilityReport report = for_flag("--tol/--grid-scale", [&] { return diagnose(model, a.tol, a.grid_scale); });
  const std::string text = dump(diagnostics_to_json(report));
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(a.out, text);
  }
  return kExitOk;
}

struct BenchArgs {
  std::string config;
  std::string out;
};

int run_bench(const BenchArgs& a) {
  const BenchmarkConfig config = for_flag("--config", [&] {
    return benchmark_from_json(read_json(a.config), fs::path(a.config).parent_path());
  });
  const auto rows = run_benchmark(config);
  std::ostringstream csv;
  write_benchmark_csv(csv, rows);
  write_file_atomic(a.out, csv.str());
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.error ? 1 : 0;
  if (failed > 0) {
    std::cerr << "bench: " << failed << " of " << rows.size() << " rows come from failed fits:\n";
    for (const auto& r : rows)
      if (r.error) std::cerr << "  replicate " << r.replicate << " " << r.model << ": " << *r.error << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonparametric-emission hidden Markov models"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  int status = kExitOk;

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model by EM with restarts");
  fit_cmd->add_option("--data", fit_args.data, "Observation file")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--states", fit_args.states, "Number of hidden states k")->required()->check(CLI::PositiveNumber);
  fit_cmd->add_option("--emission", fit_args.emission, "Emission family")
      ->required()
      ->check(CLI::IsMember({"nb", "np", "np-reg", "mixture", "kernel"}));
  fit_cmd->add_option("--lambda", fit_args.lambda, "Penalty weight (np-reg)");
  fit_cmd->add_option("--alpha", fit_args.alpha, "Penalty exponent, m(y) = y^alpha (np-reg)");
  fit_cmd->add_option("--components", fit_args.components, "Mixture components m; 0 means k");
  fit_cmd->add_option("--component-family", fit_args.component_family, "Mixture component family")
      ->check(CLI::IsMember({"poisson", "gaussian", "binomial", "triangular", "zero-inflated"}));
  auto* bw = fit_cmd->add_option("--bandwidth", fit_args.bandwidth, "Kernel bandwidth; 0 selects by cross-validation");
  fit_cmd->add_flag("--bandwidth-cv", fit_args.bandwidth_cv, "Select the kernel bandwidth by cross-validation")
      ->excludes(bw);
  fit_cmd->add_option("--kernel", fit_args.kernel, "Kernel")
      ->check(CLI::IsMember({"gaussian-spherical", "gaussian", "epanechnikov-product", "epanechnikov"}));
  fit_cmd->add_option("--inner-iters", fit_args.inner_iters, "Kernel weight updates per M-step");
  fit_cmd->add_option("--anchor-stride", fit_args.anchor_stride, "Use every s-th observation as a kernel anchor");
  fit_cmd->add_option("--max-iter", fit_args.max_iter, "Maximum EM iterations per start");
  fit_cmd->add_option("--tol", fit_args.tol, "Relative objective improvement that stops EM");
  fit_cmd->add_option("--starts", fit_args.starts, "Number of EM starts");
  fit_cmd->add_option("--init-smoothing", fit_args.init_smoothing, "Share of the pooled law in initial emissions");
  fit_cmd->add_option("--seed", fit_args.seed, "Random seed")->required();
  fit_cmd->add_option("--out", fit_args.out, "Model file to write")->required();
  fit_cmd->add_option("--report", fit_args.report, "Fit report file (default: <out>.report.json)");
  fit_cmd->callback([&] { status = run_fit(fit_args); });

  DecodeArgs decode_args;
  auto* decode_cmd = app.add_subcommand("decode", "Decode hidden states with a fitted model");
  decode_cmd->add_option("--model", decode_args.model, "Model file")->required()->check(CLI::ExistingFile);
  decode_cmd->add_option("--data", decode_args.data, "Observation file")->required()->check(CLI::ExistingFile);
  decode_cmd->add_option("--method", decode_args.method, "Decoder")->check(CLI::IsMember({"viterbi", "map"}));
  decode_cmd->add_option("--out", decode_args.out, "State file to write (labels 1..k)")->required();
  decode_cmd->callback([&] { status = run_decode(decode_args); });

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate a labeled sequence");
  sim_cmd->add_option("--config", sim_args.config, "Region scheme or model+n JSON")
      ->required()
      ->check(CLI::ExistingFile);
  sim_cmd->add_option("--seed", sim_args.seed, "Random seed")->required();
  sim_cmd->add_option("--out", sim_args.out, "Observation file to write")->required();
  sim_cmd->add_option("--truth-out", sim_args.truth_out, "State file to write (labels 1..k)");
  sim_cmd->callback([&] { status = run_simulate(sim_args); });

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score a predicted state path against the truth");
  eval_cmd->add_option("--pred", eval_args.pred, "Predicted state file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--truth", eval_args.truth, "True state file")->required()->check(CLI::ExistingFile);
  eval_cmd->callback([&] { status = run_eval(eval_args); });

  DiagnoseArgs diag_args;
  auto* diag_cmd = app.add_subcommand("diagnose", "Check the identifiability conditions of a model");
  diag_cmd->add_option("--model", diag_args.model, "Model file")->required()->check(CLI::ExistingFile);
  diag_cmd->add_option("--tol", diag_args.tol, "Singular-value tolerance");
  diag_cmd->add_option("--grid-scale", diag_args.grid_scale, "Grid refinement factor for continuous emissions");
  diag_cmd->add_option("--out", diag_args.out, "Report file (default: standard output)");
  diag_cmd->callback([&] { status = run_diagnose(diag_args); });

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "Run a simulate/fit/decode/score benchmark");
  bench_cmd->add_option("--config", bench_args.config, "Benchmark JSON")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--out", bench_args.out, "CSV file to write")->required();
  bench_cmd->callback([&] { status = run_bench(bench_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return status;
}
