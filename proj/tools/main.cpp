#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "sbnn/calibration.hpp"
#include "sbnn/diagnostics.hpp"
#include "sbnn/errors.hpp"
#include "sbnn/grid.hpp"
#include "sbnn/io.hpp"
#include "sbnn/math.hpp"
#include "sbnn/model.hpp"
#include "sbnn/rng.hpp"
#include "sbnn/sghmc.hpp"
#include "sbnn/targets.hpp"

namespace fs = std::filesystem;
using namespace sbnn;

namespace {

// Stream id for drawing the calibration starting point.  Batch events
// count up from zero and the library reserves the top of the id space
// for critic initialization and mixing deltas, so this sits just below
// those reserved ids.
constexpr std::uint64_t kHyperInitStream = ~2ull;

// Options shared by every command.  seed and out fall back to the run
// configuration; presence of the flags is detected via App::count.
struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  long threads = 0;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* config =
      cmd->add_option("--config", c.config_path, "run configuration (JSON)");
  if (config_required) config->required();
  cmd->add_option("--seed", c.seed, "seed overriding the configured one");
  cmd->add_option("--threads", c.threads,
                  "worker threads (the SBNN_THREADS environment variable "
                  "overrides this flag)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out,
                  "output directory overriding the configured one");
}

// A run configuration that does not load or parse is a configuration
// problem, whatever exception class the parser raises.
RunConfig load_config_for_cli(const std::string& path) {
  try {
    return load_config(path);
  } catch (const FormatError& e) {
    throw InvalidArgument(e.what());
  } catch (const IoError& e) {
    throw InvalidArgument(e.what());
  }
}

int resolve_threads(long flag) {
  long threads = flag > 0 ? flag : 1;
  if (const char* env = std::getenv("SBNN_THREADS")) {
    const char* begin = env;
    const char* end = env + std::string(env).size();
    long parsed = 0;
    const auto res = std::from_chars(begin, end, parsed);
    if (res.ec != std::errc() || res.ptr != end || parsed < 1) {
      throw InvalidArgument(
          "SBNN_THREADS must be a positive integer, got '" +
          std::string(env) + "'");
    }
    threads = parsed;
  }
  return static_cast<int>(threads);
}

std::uint64_t resolve_seed(const CLI::App* cmd, const Common& c,
                           std::uint64_t config_seed) {
  return cmd->count("--seed") > 0 ? c.seed : config_seed;
}

std::string resolve_out(const CLI::App* cmd, const Common& c,
                        const std::string& config_out) {
  const std::string out = cmd->count("--out") > 0 ? c.out : config_out;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) {
    throw IoError("cannot create output directory '" + out +
                  "': " + ec.message());
  }
  return out;
}

std::string join(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}

void print_field_summary(const Mat& values) {
  const long count = values.cols();
  const Vec mean = values.rowwise().mean();
  Vec variance = Vec::Zero(values.rows());
  if (count > 1) {
    variance = (values.colwise() - mean).rowwise().squaredNorm() /
               static_cast<double>(count - 1);
  }
  std::cout << "per-location mean:     min " << format_double(mean.minCoeff())
            << "  mean " << format_double(mean.mean()) << "  max "
            << format_double(mean.maxCoeff()) << "\n";
  std::cout << "per-location variance: min "
            << format_double(variance.minCoeff()) << "  mean "
            << format_double(variance.mean()) << "  max "
            << format_double(variance.maxCoeff()) << "\n";
}

int cmd_simulate(const CLI::App* cmd, const Common& args, long count) {
  const RunConfig cfg = load_config_for_cli(args.config_path);
  const Grid grid = cfg.make_grid();
  if (cfg.target.kind == TargetKind::kExternal) {
    throw InvalidArgument(
        "simulate: external targets are realisation files already; point "
        "sample-prior or diagnose at them instead");
  }
  const std::uint64_t seed = resolve_seed(cmd, args, cfg.seed);
  const std::string out = resolve_out(cmd, args, cfg.output_dir);

  const FieldBatch batch =
      simulate_target(cfg.target, grid, count, SeededRng(seed, 0));
  const std::string path = join(out, "realisations.fld");
  write_realisations(path, grid, batch.values);

  std::cout << "wrote " << count << " target realisations on " << grid.n()
            << " locations to " << path << "\n";
  print_field_summary(batch.values);
  return 0;
}

int cmd_calibrate(const CLI::App* cmd, const Common& args) {
  const RunConfig cfg = load_config_for_cli(args.config_path);
  if (cfg.model.dims.empty()) {
    throw InvalidArgument("calibrate: the config needs a model section");
  }
  const Grid grid = cfg.make_grid();
  const std::uint64_t seed = resolve_seed(cmd, args, cfg.seed);
  const std::string out = resolve_out(cmd, args, cfg.output_dir);

  CalibConfig cal = cfg.calibration;
  cal.seed = seed;
  cal.threads = resolve_threads(args.threads);
  cal.validate();

  const TargetSampler targets(cfg.target, grid, seed);
  SeededRng init_rng(seed, kHyperInitStream);
  const HyperParams psi0 = init_hyperparams(cfg.model, init_rng);

  const auto periodic = [&](long round, const HyperParams& hyper) {
    char name[40];
    std::snprintf(name, sizeof name, "checkpoint_%06ld.ckpt", round);
    write_checkpoint(join(out, name),
                     Checkpoint{cfg.model, hyper, targets.mean_field(), seed});
    std::cout << "round " << round << ": wrote " << name << "\n";
  };

  const CalibResult result =
      calibrate(psi0, cfg.model, grid, targets, cal, periodic);

  write_checkpoint(
      join(out, "checkpoint.ckpt"),
      Checkpoint{cfg.model, result.hyper, targets.mean_field(), seed});
  write_trace_csv(join(out, "trace.csv"), result.trace);

  std::cout << "calibrated " << variant_name(cfg.model.variant) << " over "
            << cal.outer_steps << " rounds; trailing distance average "
            << format_double(result.trailing_average) << "\n";
  std::cout << "wrote checkpoint.ckpt and trace.csv to " << out << "\n";
  return 0;
}

int cmd_sample_prior(const CLI::App* cmd, const Common& args,
                     const std::string& checkpoint_path, long count) {
  const RunConfig cfg = load_config_for_cli(args.config_path);
  const Grid grid = cfg.make_grid();
  const Checkpoint ck = read_checkpoint(checkpoint_path);
  ck.arch.validate(grid.dim());
  if (ck.mean_field && ck.mean_field->size() != grid.n()) {
    throw InvalidArgument(
        "sample-prior: the stored mean field was estimated on a different "
        "grid");
  }
  const std::uint64_t seed = resolve_seed(cmd, args, cfg.seed);
  const std::string out = resolve_out(cmd, args, cfg.output_dir);

  FieldBatch batch =
      sample_field(ck.hyper, ck.arch, grid, count, SeededRng(seed, 0));
  if (ck.mean_field) batch.values.colwise() += *ck.mean_field;

  const std::string path = join(out, "prior.fld");
  write_realisations(path, grid, batch.values);
  std::cout << "wrote " << count << " calibrated-prior fields to " << path
            << "\n";
  return 0;
}

int cmd_infer(const CLI::App* cmd, const Common& args,
              const std::string& checkpoint_path) {
  const RunConfig cfg = load_config_for_cli(args.config_path);
  const Grid grid = cfg.make_grid();
  if (cfg.dataset.empty()) {
    throw InvalidArgument("infer: the config needs inference.dataset");
  }
  const Checkpoint ck = read_checkpoint(checkpoint_path);
  ck.arch.validate(grid.dim());
  if (is_varying(ck.arch.variant)) {
    throw UnsupportedVariant(
        "infer: posterior sampling needs a spatially invariant variant, "
        "got " + variant_name(ck.arch.variant));
  }
  if (ck.mean_field && ck.mean_field->size() != grid.n()) {
    throw InvalidArgument(
        "infer: the stored mean field was estimated on a different grid");
  }
  const std::uint64_t seed = resolve_seed(cmd, args, cfg.seed);
  const int threads = resolve_threads(args.threads);
  const std::string out = resolve_out(cmd, args, cfg.output_dir);

  const Dataset data =
      read_dataset_csv(cfg.dataset, cfg.noise_var, cfg.transform);
  data.validate(grid);

  SghmcConfig inf = cfg.inference;
  inf.seed = seed;
  inf.threads = threads;
  inf.validate(data.size());

  PosteriorSamples samples = sghmc_sample(data, ck.hyper, ck.arch, inf);
  samples.hyper_id = checkpoint_path;

  const PredictiveField pred = predictive_field(samples, grid, ck.hyper,
                                                ck.arch, ck.mean_field,
                                                threads);
  write_realisations(join(out, "posterior.fld"), grid, pred.draws);
  write_predictive_csv(join(out, "predictive.csv"), grid, pred.mean_field,
                       pred.sd_field);

  std::cout << "conditioned on " << data.size() << " observations: "
            << samples.config.chains << " chains x "
            << samples.draws_per_chain() << " draws\n";
  std::cout << "wrote posterior.fld and predictive.csv to " << out << "\n";
  return 0;
}

Mat parse_anchors(const std::string& text, int dim) {
  std::vector<std::string> points;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      points.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  points.push_back(cur);

  Mat anchors(dim, static_cast<long>(points.size()));
  for (std::size_t p = 0; p < points.size(); ++p) {
    std::vector<std::string> coords;
    cur.clear();
    for (char c : points[p]) {
      if (c == ':') {
        coords.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    coords.push_back(cur);
    if (static_cast<int>(coords.size()) != dim) {
      throw InvalidArgument(
          "diagnose: --anchors wants one :-separated point per comma with " +
          std::to_string(dim) + " coordinates, got '" + points[p] + "'");
    }
    for (int a = 0; a < dim; ++a) {
      const std::string& field = coords[static_cast<std::size_t>(a)];
      double v = 0.0;
      const char* begin = field.data();
      const char* end = begin + field.size();
      const auto res = std::from_chars(begin, end, v);
      if (begin == end || res.ec != std::errc() || res.ptr != end) {
        throw InvalidArgument("diagnose: bad anchor coordinate '" + field +
                              "'");
      }
      anchors(a, static_cast<long>(p)) = v;
    }
  }
  return anchors;
}

int cmd_diagnose(const CLI::App* cmd, const Common& args,
                 const std::string& fields_path, long bins, long pair_cap,
                 const std::vector<double>& quantiles,
                 const std::string& anchors_text) {
  std::string config_out = ".";
  if (!args.config_path.empty()) {
    config_out = load_config_for_cli(args.config_path).output_dir;
  }
  const int threads = resolve_threads(args.threads);
  const std::string out = resolve_out(cmd, args, config_out);

  const Realisations fields = read_realisations(fields_path);
  const Grid grid = fields.make_grid();

  const CovariogramEstimate est =
      empirical_covariogram(fields.values, grid, bins, pair_cap, threads);
  write_covariogram_csv(join(out, "covariogram.csv"), est);

  const std::vector<ExceedanceCurve> curves = exceedance_curves(
      fields.values, grid, quantiles, bins, pair_cap, threads);
  write_exceedance_csv(join(out, "exceedance.csv"), curves);

  const Vec pooled = Eigen::Map<const Vec>(fields.values.data(),
                                           fields.values.size());
  write_kde_csv(join(out, "kde.csv"), kde_1d(pooled));

  bool wrote_anchored = false;
  if (!anchors_text.empty()) {
    const Mat anchors = parse_anchors(anchors_text, grid.dim());
    const AnchoredCovariance anc =
        anchored_covariance(fields.values, grid, anchors);
    write_anchored_csv(join(out, "anchored.csv"), anc, grid);
    wrote_anchored = true;
  }

  std::cout << "diagnosed " << fields.values.cols() << " fields on "
            << grid.n() << " locations\n";
  std::cout << "wrote covariogram.csv, exceedance.csv, kde.csv"
            << (wrote_anchored ? ", anchored.csv" : "") << " to " << out
            << "\n";
  return 0;
}

int cmd_score(const CLI::App* cmd, const Common& args,
              const std::string& draws_path, const std::string& truth_path,
              long record) {
  std::string config_out = ".";
  if (!args.config_path.empty()) {
    config_out = load_config_for_cli(args.config_path).output_dir;
  }
  const int threads = resolve_threads(args.threads);
  const std::string out = resolve_out(cmd, args, config_out);

  const Realisations draws = read_realisations(draws_path);
  const Realisations truth = read_realisations(truth_path);
  if (draws.make_grid().signature() != truth.make_grid().signature()) {
    throw InvalidArgument("score: draws and truth live on different grids");
  }
  if (record < 0 || record >= truth.values.cols()) {
    throw InvalidArgument("score: --record out of range, the truth file "
                          "holds " + std::to_string(truth.values.cols()) +
                          " records");
  }

  const ScoreReport report =
      score(draws.values, truth.values.col(record), threads);
  write_scores_csv(join(out, "scores.csv"), report);

  std::cout << "mape " << format_double(report.mape) << "\n";
  std::cout << "rmspe " << format_double(report.rmspe) << "\n";
  std::cout << "crps " << format_double(report.crps) << "\n";
  std::cout << "wrote scores.csv to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"calibration, sampling, and posterior inference for spatial "
               "network priors"};
  app.require_subcommand(1);

  Common sim_args;
  long sim_count = 8;
  CLI::App* sim = app.add_subcommand(
      "simulate", "draw realisations of the configured target process");
  add_common(sim, sim_args, true);
  sim->add_option("--count", sim_count, "realisations to draw")
      ->check(CLI::PositiveNumber);

  Common cal_args;
  CLI::App* cal = app.add_subcommand(
      "calibrate", "fit the prior to the configured target process");
  add_common(cal, cal_args, true);

  Common prior_args;
  std::string prior_checkpoint;
  long prior_count = 8;
  CLI::App* prior = app.add_subcommand(
      "sample-prior", "draw fields from a calibrated prior checkpoint");
  add_common(prior, prior_args, true);
  prior->add_option("--checkpoint", prior_checkpoint, "calibrated prior")
      ->required();
  prior->add_option("--count", prior_count, "fields to draw")
      ->check(CLI::PositiveNumber);

  Common infer_args;
  std::string infer_checkpoint;
  CLI::App* infer = app.add_subcommand(
      "infer", "sample the weight posterior given the configured dataset");
  add_common(infer, infer_args, true);
  infer->add_option("--checkpoint", infer_checkpoint, "calibrated prior")
      ->required();

  Common diag_args;
  std::string diag_fields;
  long diag_bins = 20;
  long diag_pair_cap = 200000;
  std::vector<double> diag_quantiles{0.9, 0.95};
  std::string diag_anchors;
  CLI::App* diag = app.add_subcommand(
      "diagnose", "summarize a realisation file as diagnostic CSVs");
  add_common(diag, diag_args, false);
  diag->add_option("--fields", diag_fields, "realisation file to diagnose")
      ->required();
  diag->add_option("--bins", diag_bins, "distance bins for paired curves")
      ->check(CLI::PositiveNumber);
  diag->add_option("--pair-cap", diag_pair_cap,
                   "location pairs sampled for paired curves")
      ->check(CLI::PositiveNumber);
  diag->add_option("--quantiles", diag_quantiles,
                   "exceedance quantile levels in (0,1)")
      ->delimiter(',');
  diag->add_option("--anchors", diag_anchors,
                   "anchor points for covariance maps, e.g. 0.5:0.5,1:2");

  Common score_args;
  std::string score_draws, score_truth;
  long score_record = 0;
  CLI::App* scorecmd = app.add_subcommand(
      "score", "score predictive draws against a held-out truth field");
  add_common(scorecmd, score_args, false);
  scorecmd->add_option("--draws", score_draws, "predictive draws file")
      ->required();
  scorecmd->add_option("--truth", score_truth, "truth realisation file")
      ->required();
  scorecmd->add_option("--record", score_record,
                       "record of the truth file to score against")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad usage is a configuration error
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim, sim_args, sim_count);
    if (cal->parsed()) return cmd_calibrate(cal, cal_args);
    if (prior->parsed()) {
      return cmd_sample_prior(prior, prior_args, prior_checkpoint,
                              prior_count);
    }
    if (infer->parsed()) return cmd_infer(infer, infer_args, infer_checkpoint);
    if (diag->parsed()) {
      return cmd_diagnose(diag, diag_args, diag_fields, diag_bins,
                          diag_pair_cap, diag_quantiles, diag_anchors);
    }
    if (scorecmd->parsed()) {
      return cmd_score(scorecmd, score_args, score_draws, score_truth,
                       score_record);
    }
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 4;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const UnsupportedVariant& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InsufficientData& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
