// cpreg: command-line front end for split, synth, pipeline, sweep, report
// and plot-data.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cpreg/conformal.hpp"
#include "cpreg/dataset.hpp"
#include "cpreg/difficulty.hpp"
#include "cpreg/error.hpp"
#include "cpreg/evaluation.hpp"
#include "cpreg/pipeline.hpp"
#include "cpreg/report.hpp"
#include "cpreg/sweep.hpp"

namespace fs = std::filesystem;
using namespace cpreg;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kInfeasible = 4 };

struct GlobalFlags {
  std::uint64_t seed = 0;
  double confidence = 0.9;
  double beta = kDefaultBeta;
  std::size_t knn = 10;
  std::size_t bins = 10;
  std::string estimator = "norm_std";
  bool mondrian = false;
  std::string mondrian_attr = "difficulty";
  double coverage_floor = kDefaultCoverageFloor;
  std::string nan_policy = "drop";
};

NanPolicy nan_policy_of(const GlobalFlags& g) { return g.nan_policy == "fail" ? NanPolicy::fail : NanPolicy::drop_rows; }

PredictionTable load(const fs::path& path, TableRole role, const GlobalFlags& g, const std::string& units = {}) {
  TableSchema schema;
  schema.role = role;
  schema.units_label = units;
  auto result = load_table(path, schema, nan_policy_of(g));
  if (result.dropped_rows > 0) spdlog::warn("{}: {} rows dropped", path.string(), result.dropped_rows);
  return std::move(result.table);
}

// ---------------------------------------------------------------------------

struct SplitArgs {
  fs::path in, train_out, cal_out;
  std::size_t n_cal = 0;
};

void cmd_split(const SplitArgs& a, const GlobalFlags& g) {
  const auto table = load(a.in, TableRole::test, g);
  const auto split = split_calibration(table, a.n_cal, g.seed);
  write_table(split.train, a.train_out);
  write_table(split.cal, a.cal_out);
  spdlog::info("split {} rows into {} train and {} calibration", table.size(), split.train.size(), split.cal.size());
}

struct SynthArgs {
  SynthSpec spec;
  fs::path out;
};

void cmd_synth(SynthArgs a, const GlobalFlags& g) {
  a.spec.seed = g.seed;
  write_table(synth_heteroscedastic(a.spec), a.out);
}

struct PipelineArgs {
  fs::path train, cal, test, out, metrics;
  std::string predictor = "cps";
  std::size_t min_bin_size = kDefaultMinBinSize;
  bool normalize_mondrian = false;
};

void cmd_pipeline(const PipelineArgs& a, const GlobalFlags& g) {
  const auto train = load(a.train, TableRole::cp_train, g);
  const auto cal = load(a.cal, TableRole::calibration, g);
  const auto test = load(a.test, TableRole::test, g);

  MethodOptions method;
  if (g.estimator != "none") method.estimator = EstimatorSpec{parse_estimator_kind(g.estimator), g.knn, g.beta};
  if (g.mondrian) {
    if (!method.estimator && parse_bin_attribute(g.mondrian_attr) == BinAttribute::difficulty) {
      throw UsageError("Mondrian binning on difficulty needs an estimator");
    }
    method.variant = Variant::mondrian;
    method.mondrian = MondrianSpec{parse_bin_attribute(g.mondrian_attr), g.bins, a.min_bin_size};
    method.normalize_mondrian = a.normalize_mondrian;
  }
  method.predictor = parse_predictor(a.predictor);

  const auto result = run_pipeline(train, cal, test, method, g.confidence);
  write_text_file(a.out, format_intervals_csv(make_interval_rows(test, result.intervals)));

  nlohmann::ordered_json config;
  config["estimator"] = method.estimator ? nlohmann::ordered_json(g.estimator) : nlohmann::ordered_json(nullptr);
  config["variant"] = std::string(to_string(method.variant));
  config["k"] = method.estimator ? nlohmann::ordered_json(g.knn) : nlohmann::ordered_json(nullptr);
  config["bins"] = g.mondrian ? nlohmann::ordered_json(g.bins) : nlohmann::ordered_json(nullptr);
  config["mondrian_attr"] = g.mondrian ? nlohmann::ordered_json(g.mondrian_attr) : nlohmann::ordered_json(nullptr);
  config["predictor"] = a.predictor;
  config["beta"] = g.beta;
  config["confidence"] = g.confidence;

  nlohmann::ordered_json m;
  m["coverage"] = result.coverage;
  m["mean_width"] = result.width.bounded ? nlohmann::ordered_json(result.width.value) : nlohmann::ordered_json(nullptr);
  m["bounded"] = result.width.bounded;
  m["n_test"] = test.size();
  m["n_cal"] = cal.size();
  m["bins_used"] = result.bins_used;
  m["config"] = config;
  if (!a.metrics.empty()) write_text_file(a.metrics, m.dump(2) + "\n");
  std::cout << "coverage " << format_number(result.coverage) << "  mean_width "
            << (result.width.bounded ? format_number(result.width.value) : std::string("inf (unbounded)")) << "\n";
}

struct SweepArgs {
  fs::path config, ledger;
  bool serial = false;
};

void cmd_sweep(const SweepArgs& a) {
  const auto config = load_sweep_config(a.config);
  Ledger ledger(a.ledger);
  const std::size_t before = ledger.size();
  const auto results = run_sweep(config, a.serial ? Execution::serial : Execution::parallel, &ledger);
  spdlog::info("sweep: {} cells, {} new ledger rows", results.size(), ledger.size() - before);
}

struct ReportArgs {
  fs::path ledger, out;
  std::string units;
};

void cmd_report_cli(const ReportArgs& a, const GlobalFlags& g) {
  const auto files = cmd_report(a.ledger, g.coverage_floor, a.out, a.units);
  std::cout << "wrote " << files.csv.string() << " and " << files.text.string() << " (" << files.rows << " rows)\n";
}

struct PlotArgs {
  fs::path intervals, out;
};

void cmd_plot(const PlotArgs& a) {
  const auto rows = read_intervals_csv(a.intervals);
  std::vector<PredictionInterval> pis;
  std::vector<double> preds, targets;
  for (const auto& r : rows) {
    pis.push_back(r.interval);
    preds.push_back(r.prediction);
    targets.push_back(r.target);
  }
  emit_plot_data(pis, preds, targets, a.out);
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("cpreg"));

  CLI::App app{"Inductive conformal regression with KNN difficulty estimators"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--seed", g.seed, "Seed for splits and synthetic data");
  app.add_option("--confidence", g.confidence, "Target confidence in (0, 1)")->check(CLI::Range(0.0, 1.0));
  app.add_option("--beta", g.beta, "Sensitivity added to every difficulty estimate")->check(CLI::NonNegativeNumber);
  app.add_option("--knn", g.knn, "Neighbors used by the difficulty estimator")->check(CLI::PositiveNumber);
  app.add_option("--bins", g.bins, "Mondrian bin count")->check(CLI::PositiveNumber);
  app.add_option("--estimator", g.estimator, "Difficulty estimator")
      ->check(CLI::IsMember({"norm_std", "norm_res", "norm_targ_strng", "none"}));
  app.add_flag("--mondrian", g.mondrian, "Use Mondrian (binned) calibration");
  app.add_option("--mondrian-attr", g.mondrian_attr, "Attribute binned by Mondrian calibration")
      ->check(CLI::IsMember({"difficulty", "prediction"}));
  app.add_option("--coverage-floor", g.coverage_floor, "Runs must exceed this coverage to be aggregated");
  app.add_option("--nan-policy", g.nan_policy, "Rows with NaN cells")->check(CLI::IsMember({"drop", "fail"}));

  SplitArgs split;
  auto* sp = app.add_subcommand("split", "Draw a seeded calibration set from a table");
  sp->add_option("--in", split.in, "Input table")->required();
  sp->add_option("--n-cal", split.n_cal, "Calibration rows")->required();
  sp->add_option("--train-out", split.train_out, "CP-train output")->required();
  sp->add_option("--cal-out", split.cal_out, "Calibration output")->required();

  SynthArgs synth;
  auto* sy = app.add_subcommand("synth", "Write a synthetic heteroscedastic table");
  sy->add_option("--n", synth.spec.n, "Rows")->required();
  sy->add_option("--d", synth.spec.d, "Feature dimension");
  sy->add_option("--signal", synth.spec.signal, "Signal function")->check(CLI::IsMember(synth_signal_ids()));
  sy->add_option("--noise", synth.spec.noise_scale, "Noise scale function")->check(CLI::IsMember(synth_noise_ids()));
  sy->add_option("--bias", synth.spec.prediction_bias, "Offset added to the prediction column");
  sy->add_option("--out", synth.out, "Output table")->required();

  PipelineArgs pipe;
  auto* pp = app.add_subcommand("pipeline", "Calibrate on one table and emit intervals for another");
  pp->add_option("--train", pipe.train, "CP-train table (scaler and neighbor index)")->required();
  pp->add_option("--cal", pipe.cal, "Calibration table")->required();
  pp->add_option("--test", pipe.test, "Test table")->required();
  pp->add_option("--out", pipe.out, "Intervals CSV")->required();
  pp->add_option("--metrics", pipe.metrics, "Metrics JSON");
  pp->add_option("--predictor", pipe.predictor, "Interval extraction")->check(CLI::IsMember({"cps", "cr"}));
  pp->add_option("--min-bin-size", pipe.min_bin_size, "Smallest allowed Mondrian bin");
  pp->add_flag("--normalize-mondrian", pipe.normalize_mondrian, "Divide Mondrian scores by difficulty");

  SweepArgs sweep;
  auto* sw = app.add_subcommand("sweep", "Run a hyperparameter grid into a ledger");
  sw->add_option("--config", sweep.config, "Sweep config JSON")->required();
  sw->add_option("--ledger", sweep.ledger, "Ledger path (JSON lines, appended)")->required();
  sw->add_flag("--serial", sweep.serial, "Disable OpenMP parallelism");

  ReportArgs report;
  auto* rp = app.add_subcommand("report", "Aggregate a ledger into results tables");
  rp->add_option("--ledger", report.ledger, "Ledger path")->required();
  rp->add_option("--out", report.out, "Output prefix; writes .csv and .txt")->required();
  rp->add_option("--units", report.units, "Units shown in the width header");

  PlotArgs plot;
  auto* pl = app.add_subcommand("plot-data", "Sort an intervals file by prediction for plotting");
  pl->add_option("--intervals", plot.intervals, "Intervals CSV from pipeline")->required();
  pl->add_option("--out", plot.out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*sp) cmd_split(split, g);
    else if (*sy) cmd_synth(synth, g);
    else if (*pp) cmd_pipeline(pipe, g);
    else if (*sw) cmd_sweep(sweep);
    else if (*rp) cmd_report_cli(report, g);
    else if (*pl) cmd_plot(plot);
  } catch (const UsageError& e) {
    spdlog::error("usage: {}", e.what());
    return kUsage;
  } catch (const DataError& e) {
    spdlog::error("data: {}", e.what());
    return kData;
  } catch (const InfeasibleError& e) {
    spdlog::error("infeasible: {}", e.what());
    return kInfeasible;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kInternal;
  }
  return kOk;
}
