#include "cpreg/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "cpreg/error.hpp"
#include "cpreg/neighbors.hpp"

namespace cpreg {

using nlohmann::json;

namespace {

std::vector<std::size_t> stepped(std::size_t from, std::size_t to, std::size_t step) {
  std::vector<std::size_t> out;
  for (std::size_t v = from; v <= to; v += step) out.push_back(v);
  return out;
}

template <typename T>
T get_as(const json& j, const char* key) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("sweep config: bad value for '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const char* where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw UsageError(std::string("sweep config: unknown key '") + key + "' in " + where);
    }
  }
}

SynthSpec parse_synth(const json& j, TableRole role) {
  if (!j.is_object()) throw UsageError("sweep config: synthetic data spec must be an object");
  reject_unknown(j, {"n", "d", "signal", "noise_scale", "seed", "prediction_bias"}, "synthetic spec");
  SynthSpec s;
  s.role = role;
  if (j.contains("n")) s.n = get_as<std::size_t>(j["n"], "n");
  if (j.contains("d")) s.d = get_as<std::size_t>(j["d"], "d");
  if (j.contains("signal")) s.signal = get_as<std::string>(j["signal"], "signal");
  if (j.contains("noise_scale")) s.noise_scale = get_as<std::string>(j["noise_scale"], "noise_scale");
  if (j.contains("seed")) s.seed = get_as<std::uint64_t>(j["seed"], "seed");
  if (j.contains("prediction_bias")) s.prediction_bias = get_as<double>(j["prediction_bias"], "prediction_bias");
  return s;
}

json null_or(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

SweepConfig with_defaults(SweepConfig c) {
  if (c.k_grid.empty()) c.k_grid = stepped(10, 100, 10);
  if (c.bins_grid.empty()) c.bins_grid = stepped(10, c.bins_max, 10);
  const auto over = std::remove_if(c.bins_grid.begin(), c.bins_grid.end(),
                                   [&](std::size_t b) { return b > c.bins_max; });
  if (over != c.bins_grid.end()) {
    spdlog::warn("sweep: dropping bin counts above bins_max={}", c.bins_max);
    c.bins_grid.erase(over, c.bins_grid.end());
  }
  if (c.estimators.empty()) {
    c.estimators = {{EstimatorKind::knn_target_std, Variant::plain},
                    {EstimatorKind::target_strangeness, Variant::plain},
                    {EstimatorKind::knn_target_std, Variant::mondrian},
                    {EstimatorKind::knn_residual, Variant::mondrian},
                    {EstimatorKind::target_strangeness, Variant::mondrian}};
  }
  if (c.seeds.empty()) c.seeds = {0, 1, 2, 3, 4};
  if (c.confidences.empty()) c.confidences = {0.90, 0.95};
  return c;
}

SweepConfig parse_sweep_config(const json& doc) {
  if (!doc.is_object()) throw UsageError("sweep config must be a JSON object");
  reject_unknown(doc,
                 {"block", "units", "k_grid", "bins_grid", "bins_max", "estimators", "seeds", "confidences", "n_cal",
                  "beta", "mondrian_attribute", "min_bin_size", "normalize_mondrian", "predictor", "data"},
                 "top level");
  SweepConfig c;
  if (doc.contains("block")) c.block = get_as<std::string>(doc["block"], "block");
  if (doc.contains("units")) c.units_label = get_as<std::string>(doc["units"], "units");
  if (doc.contains("k_grid")) c.k_grid = get_as<std::vector<std::size_t>>(doc["k_grid"], "k_grid");
  if (doc.contains("bins_grid")) c.bins_grid = get_as<std::vector<std::size_t>>(doc["bins_grid"], "bins_grid");
  if (doc.contains("bins_max")) c.bins_max = get_as<std::size_t>(doc["bins_max"], "bins_max");
  if (doc.contains("seeds")) c.seeds = get_as<std::vector<std::uint64_t>>(doc["seeds"], "seeds");
  if (doc.contains("confidences")) c.confidences = get_as<std::vector<double>>(doc["confidences"], "confidences");
  if (doc.contains("n_cal")) c.n_cal = get_as<std::size_t>(doc["n_cal"], "n_cal");
  if (doc.contains("beta")) c.beta = get_as<double>(doc["beta"], "beta");
  if (doc.contains("min_bin_size")) c.min_bin_size = get_as<std::size_t>(doc["min_bin_size"], "min_bin_size");
  if (doc.contains("normalize_mondrian")) {
    c.normalize_mondrian = get_as<bool>(doc["normalize_mondrian"], "normalize_mondrian");
  }
  if (doc.contains("mondrian_attribute")) {
    c.mondrian_attribute = parse_bin_attribute(get_as<std::string>(doc["mondrian_attribute"], "mondrian_attribute"));
  }
  if (doc.contains("predictor")) c.predictor = parse_predictor(get_as<std::string>(doc["predictor"], "predictor"));
  if (doc.contains("estimators")) {
    const auto& list = doc["estimators"];
    if (!list.is_array()) throw UsageError("sweep config: 'estimators' must be an array");
    for (const auto& e : list) {
      if (!e.is_object()) throw UsageError("sweep config: estimator entries must be objects");
      reject_unknown(e, {"estimator", "variant"}, "estimator entry");
      if (!e.contains("estimator")) throw UsageError("sweep config: estimator entry lacks 'estimator'");
      EstimatorVariant ev{parse_estimator_kind(get_as<std::string>(e["estimator"], "estimator")), Variant::plain};
      if (e.contains("variant")) ev.variant = parse_variant(get_as<std::string>(e["variant"], "variant"));
      c.estimators.push_back(ev);
    }
    if (c.estimators.empty()) throw UsageError("sweep config: 'estimators' is empty");
  }
  if (doc.contains("data")) {
    const auto& d = doc["data"];
    if (!d.is_object()) throw UsageError("sweep config: 'data' must be an object");
    reject_unknown(d, {"train", "test", "synth_train", "synth_test", "nan_policy"}, "data");
    if (d.contains("train")) c.data.train_path = get_as<std::string>(d["train"], "train");
    if (d.contains("test")) c.data.test_path = get_as<std::string>(d["test"], "test");
    if (d.contains("synth_train")) c.data.synth_train = parse_synth(d["synth_train"], TableRole::cp_train);
    if (d.contains("synth_test")) c.data.synth_test = parse_synth(d["synth_test"], TableRole::test);
    if (d.contains("nan_policy")) {
      const auto p = get_as<std::string>(d["nan_policy"], "nan_policy");
      if (p == "drop") {
        c.data.nan_policy = NanPolicy::drop_rows;
      } else if (p == "fail") {
        c.data.nan_policy = NanPolicy::fail;
      } else {
        throw UsageError("sweep config: nan_policy must be 'drop' or 'fail'");
      }
    }
  }
  for (const char* key : {"k_grid", "bins_grid", "seeds", "confidences"}) {
    if (doc.contains(key) && doc[key].empty()) {
      throw UsageError(std::string("sweep config: '") + key + "' must be nonempty");
    }
  }
  if (c.n_cal < 1) throw UsageError("sweep config: n_cal must be >= 1");
  return c;
}

SweepConfig load_sweep_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open sweep config '" + path.string() + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw UsageError("sweep config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  auto c = parse_sweep_config(doc);
  const auto base = path.parent_path();
  for (auto* p : {&c.data.train_path, &c.data.test_path}) {
    if (*p && p->value().is_relative()) *p = base / p->value();
  }
  return c;
}

std::size_t grid_cardinality(const SweepConfig& config) {
  const auto c = with_defaults(config);
  std::size_t per_seed = 0;
  for (const auto& ev : c.estimators) {
    per_seed += c.k_grid.size() * (ev.variant == Variant::mondrian ? c.bins_grid.size() : 1);
  }
  return per_seed * c.seeds.size() * c.confidences.size();
}

// ---------------------------------------------------------------------------
// Ledger

std::string format_ledger_line(const RunResult& r) {
  nlohmann::ordered_json j;
  j["config_id"] = r.config_id();
  j["block"] = r.config.block;
  j["estimator"] = std::string(estimator_label(r.config.estimator));
  j["k"] = r.config.k;
  j["bins"] = r.config.variant == Variant::mondrian ? json(r.config.bins) : json(nullptr);
  j["seed"] = r.seed;
  j["confidence"] = r.config.confidence;
  j["mean_width"] = null_or(r.mean_width);
  j["coverage"] = null_or(r.coverage);
  j["n_test"] = r.n_test;
  j["status"] = std::string(to_string(r.status));
  return j.dump();
}

RunResult parse_ledger_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
    RunResult r;
    r.config.block = j.value("block", std::string("default"));
    r.config.estimator = parse_estimator_kind(j.at("estimator").get<std::string>());
    r.config.k = j.at("k").get<std::size_t>();
    if (j.at("bins").is_null()) {
      r.config.variant = Variant::plain;
      r.config.bins = 0;
    } else {
      r.config.variant = Variant::mondrian;
      r.config.bins = j.at("bins").get<std::size_t>();
    }
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config.confidence = j.at("confidence").get<double>();
    if (!j.at("mean_width").is_null()) r.mean_width = j.at("mean_width").get<double>();
    if (!j.at("coverage").is_null()) r.coverage = j.at("coverage").get<double>();
    r.n_test = j.at("n_test").get<std::size_t>();
    r.status = parse_run_status(j.at("status").get<std::string>());
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed ledger line: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("malformed ledger line: ") + e.what());
  }
}

std::vector<RunResult> read_ledger(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ledger '" + path.string() + "'");
  std::vector<RunResult> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_ledger_line(line));
  }
  return out;
}

Ledger::Ledger(std::filesystem::path path) : path_(std::move(path)) {
  if (std::filesystem::exists(path_)) {
    for (auto& r : read_ledger(path_)) {
      auto id = r.config_id();
      rows_.insert_or_assign(std::move(id), std::move(r));
    }
  }
}

void Ledger::append(const RunResult& r) {
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot append to ledger '" + path_.string() + "'");
  out << format_ledger_line(r) << '\n';
  out.flush();
  if (!out) throw DataError("ledger write failed for '" + path_.string() + "'");
  rows_.insert_or_assign(r.config_id(), r);
}

// ---------------------------------------------------------------------------
// Sweep

namespace {

struct SeedState {
  std::uint64_t seed;
  PredictionTable cal;
  std::shared_ptr<const NeighborIndex> index;
};

struct Unit {
  std::size_t seed_slot;
  EstimatorVariant ev;
  std::size_t k;
};

RunResult blank_result(const SweepConfig& c, const Unit& u, std::uint64_t seed, std::size_t bins, double conf) {
  RunResult r;
  r.config.block = c.block;
  r.config.estimator = u.ev.kind;
  r.config.variant = u.ev.variant;
  r.config.k = u.k;
  r.config.bins = u.ev.variant == Variant::mondrian ? bins : 0;
  r.config.confidence = conf;
  r.seed = seed;
  return r;
}

std::vector<RunResult> run_unit(const SweepConfig& c, const Unit& u, const SeedState& st,
                                const PredictionTable& test, const std::vector<double>& test_preds,
                                const std::vector<double>& test_targets,
                                const std::map<std::string, RunResult>* prior) {
  const std::vector<std::size_t> bins_list =
      u.ev.variant == Variant::mondrian ? c.bins_grid : std::vector<std::size_t>{0};

  std::vector<RunResult> out;
  for (auto b : bins_list) {
    for (double conf : c.confidences) out.push_back(blank_result(c, u, st.seed, b, conf));
  }
  if (prior && std::all_of(out.begin(), out.end(), [&](const RunResult& r) { return prior->count(r.config_id()) != 0; })) {
    for (auto& r : out) r = prior->at(r.config_id());
    return out;
  }

  std::vector<double> cal_sigmas, test_sigmas;
  try {
    const auto fitted = fit_estimator(EstimatorSpec{u.ev.kind, u.k, c.beta}, st.index);
    cal_sigmas = estimate_table(fitted, st.cal, Execution::serial);
    test_sigmas = estimate_table(fitted, test, Execution::serial);
  } catch (const std::exception& e) {
    spdlog::warn("sweep: {} k={} seed={} not fitted: {}", estimator_label(u.ev.kind), u.k, st.seed, e.what());
    for (auto& r : out) r.status = RunStatus::infeasible;
    return out;
  }

  std::size_t pos = 0;
  for (auto b : bins_list) {
    MethodOptions method;
    method.estimator = EstimatorSpec{u.ev.kind, u.k, c.beta};
    method.variant = u.ev.variant;
    method.mondrian = MondrianSpec{c.mondrian_attribute, b, c.min_bin_size};
    method.normalize_mondrian = c.normalize_mondrian;
    method.predictor = c.predictor;

    std::optional<CalibratedModel> model;
    try {
      model = CalibratedModel::fit(st.cal, cal_sigmas, method);
    } catch (const std::exception& e) {
      spdlog::debug("sweep: cell {} infeasible: {}", out[pos].config.id(), e.what());
    }
    for (double conf : c.confidences) {
      auto& r = out[pos++];
      if (!model) {
        r.status = RunStatus::infeasible;
        continue;
      }
      const auto intervals = model->predict(test_preds, test_sigmas, conf, Execution::serial);
      const auto w = mean_width(intervals);
      r.coverage = effective_coverage(intervals, test_targets);
      r.n_test = intervals.size();
      if (w.bounded) {
        r.mean_width = w.value;
        r.status = RunStatus::ok;
      } else {
        r.status = RunStatus::unbounded;
      }
    }
  }
  return out;
}

}  // namespace

std::vector<RunResult> run_sweep(const SweepConfig& config, const PredictionTable& pool, const PredictionTable& test,
                                 Execution exec, Ledger* ledger) {
  const auto c = with_defaults(config);
  if (c.k_grid.empty() || c.seeds.empty() || c.confidences.empty() || c.estimators.empty()) {
    throw UsageError("sweep grid resolves to no cells");
  }
  const bool any_mondrian = std::any_of(c.estimators.begin(), c.estimators.end(),
                                        [](const EstimatorVariant& ev) { return ev.variant == Variant::mondrian; });
  if (any_mondrian && c.bins_grid.empty()) throw UsageError("sweep grid resolves to no Mondrian bin counts");
  for (double conf : c.confidences) {
    if (!(conf > 0.0 && conf < 1.0)) throw UsageError("sweep confidences must lie in (0, 1)");
  }
  if (pool.dimension() != test.dimension()) throw DataError("training pool and test table differ in dimension");
  if (test.empty()) throw DataError("test table is empty");
  if (c.n_cal < kAdvisedMinCalibration) {
    spdlog::warn("sweep: n_cal={} is below the advised minimum of {}", c.n_cal, kAdvisedMinCalibration);
  }

  std::vector<SeedState> seeds;
  seeds.reserve(c.seeds.size());
  for (auto seed : c.seeds) {
    auto split = split_calibration(pool, c.n_cal, seed);
    auto index = std::make_shared<const NeighborIndex>(build_index(split.train, fit_scaler(split.train)));
    seeds.push_back(SeedState{seed, std::move(split.cal), std::move(index)});
  }

  std::vector<Unit> units;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    for (const auto& ev : c.estimators) {
      for (auto k : c.k_grid) units.push_back(Unit{s, ev, k});
    }
  }

  const auto test_preds = test.predictions();
  const auto test_targets = test.targets();
  // Workers read this snapshot; only the emitting critical section touches the ledger.
  std::optional<std::map<std::string, RunResult>> prior;
  if (ledger) prior = ledger->rows();
  const auto* prior_rows = prior ? &*prior : nullptr;
  std::vector<std::vector<RunResult>> per_unit(units.size());
  std::vector<char> done(units.size(), 0);
  std::size_t next_emit = 0;
  bool ledger_failed = false;
  std::string ledger_error;

  // Appends finished units to the ledger strictly in canonical order.
  auto flush_ready = [&]() {
    while (next_emit < units.size() && done[next_emit]) {
      if (ledger && !ledger_failed) {
        try {
          for (const auto& r : per_unit[next_emit]) {
            if (!ledger->contains(r.config_id())) ledger->append(r);
          }
        } catch (const std::exception& e) {
          ledger_failed = true;
          ledger_error = e.what();
        }
      }
      ++next_emit;
    }
  };

  const auto n_units = static_cast<std::ptrdiff_t>(units.size());
  if (exec == Execution::serial) {
    for (std::ptrdiff_t i = 0; i < n_units; ++i) {
      const auto& u = units[i];
      per_unit[i] = run_unit(c, u, seeds[u.seed_slot], test, test_preds, test_targets, prior_rows);
      done[i] = 1;
      flush_ready();
    }
  } else {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n_units; ++i) {
      const auto& u = units[i];
      auto rows = run_unit(c, u, seeds[u.seed_slot], test, test_preds, test_targets, prior_rows);
#pragma omp critical(cpreg_sweep_ledger)
      {
        per_unit[i] = std::move(rows);
        done[i] = 1;
        flush_ready();
      }
    }
  }
  if (ledger_failed) throw DataError("ledger append failed: " + ledger_error);

  std::vector<RunResult> out;
  for (auto& rows : per_unit) {
    for (auto& r : rows) out.push_back(std::move(r));
  }
  return out;
}

std::vector<RunResult> run_sweep(const SweepConfig& config, Execution exec, Ledger* ledger) {
  const auto& d = config.data;
  std::optional<PredictionTable> pool, test;
  TableSchema train_schema;
  train_schema.role = TableRole::cp_train;
  train_schema.units_label = config.units_label;
  TableSchema test_schema = train_schema;
  test_schema.role = TableRole::test;
  if (d.train_path) {
    pool = load_table(*d.train_path, train_schema, d.nan_policy).table;
  } else if (d.synth_train) {
    pool = synth_heteroscedastic(*d.synth_train);
  }
  if (d.test_path) {
    test = load_table(*d.test_path, test_schema, d.nan_policy).table;
  } else if (d.synth_test) {
    test = synth_heteroscedastic(*d.synth_test);
  }
  if (!pool || !test) throw UsageError("sweep config must name a training pool and a test set under 'data'");
  return run_sweep(config, *pool, *test, exec, ledger);
}

}  // namespace cpreg
